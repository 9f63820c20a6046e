//! Parallel finite-element solver for coupled reaction-diffusion systems
//! with a level-set-tracked moving interface.
//!
//! The library simulates the degradation of a solid body immersed in a
//! liquid medium: dissolved species diffuse and react, a porous protective
//! film forms and breaks down, and the solid-liquid interface recedes with
//! the mass flux across it. The interface is carried implicitly by a signed
//! distance field, the transport equations are discretized with P1 finite
//! elements and backward Euler, and the assembled systems are solved by
//! restarted GMRES with a restricted additive Schwarz preconditioner over an
//! overlapping domain decomposition executed by message-passing subdomain
//! workers.
//!
//! See the `book/` directory for a guided tour; its code snippets are
//! compiled and run as doc-tests.

pub mod config;
pub mod decomp;
pub mod error;
pub mod fem;
pub mod levelset;
pub mod linsolve;
pub mod mesh;
pub mod output;
pub mod par;
pub mod perf;
pub mod physics;
pub mod sim;
pub mod util;

pub use error::{Error, Result};

// The guide's code blocks compile and run as doc-tests, keeping the book in
// sync with the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(model, "../../../book/src/model.md");
    chapter!(mesh, "../../../book/src/mesh.md");
    chapter!(discretization, "../../../book/src/discretization.md");
    chapter!(interface, "../../../book/src/interface.md");
    chapter!(parallel, "../../../book/src/parallel.md");
    chapter!(scaling, "../../../book/src/scaling.md");
    chapter!(cli, "../../../book/src/cli.md");
}
