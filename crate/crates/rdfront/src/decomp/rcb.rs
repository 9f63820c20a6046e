//! Recursive coordinate bisection of element centroids.
//!
//! At each level the element set is split at the weighted median along the
//! axis with the largest centroid spread, with part counts divided as evenly
//! as possible. Ties are broken by element id, so the result is fully
//! deterministic; the `seed` argument is accepted for interface stability
//! but does not influence the split.

use super::Partition;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub fn partition_mesh(mesh: &Mesh, n_parts: usize, _seed: u64) -> Result<Partition> {
    if n_parts == 0 {
        return Err(Error::Argument("n_parts must be at least 1".into()));
    }
    if n_parts > mesh.element_count() {
        return Err(Error::Argument(format!(
            "cannot split {} elements into {} parts",
            mesh.element_count(),
            n_parts
        )));
    }
    let centroids: Vec<[f64; 3]> = (0..mesh.element_count())
        .map(|e| mesh.element_centroid(e))
        .collect();
    let mut ids: Vec<usize> = (0..mesh.element_count()).collect();
    let mut part_of_element = vec![0u32; mesh.element_count()];
    bisect(&centroids, &mut ids, 0, n_parts, &mut part_of_element);
    Partition::new(part_of_element, n_parts)
}

fn bisect(
    centroids: &[[f64; 3]],
    ids: &mut [usize],
    first_part: usize,
    n_parts: usize,
    out: &mut [u32],
) {
    if n_parts == 1 {
        for &e in ids.iter() {
            out[e] = first_part as u32;
        }
        return;
    }
    let n_left = n_parts / 2;
    let n_right = n_parts - n_left;
    // Element count proportional to the part counts on each side, clamped so
    // both sides keep at least one element per part.
    let len = ids.len();
    let k = ((len * n_left + n_parts / 2) / n_parts).clamp(n_left, len - n_right);

    let axis = widest_axis(centroids, ids);
    ids.select_nth_unstable_by(k, |&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap()
            .then(a.cmp(&b))
    });
    let (left, right) = ids.split_at_mut(k);
    bisect(centroids, left, first_part, n_left, out);
    bisect(centroids, right, first_part + n_left, n_right, out);
}

fn widest_axis(centroids: &[[f64; 3]], ids: &[usize]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &e in ids {
        for a in 0..3 {
            lo[a] = lo[a].min(centroids[e][a]);
            hi[a] = hi[a].max(centroids[e][a]);
        }
    }
    let mut best = 0;
    let mut best_span = hi[0] - lo[0];
    for a in 1..3 {
        let span = hi[a] - lo[a];
        if span > best_span {
            best = a;
            best_span = span;
        }
    }
    best
}
