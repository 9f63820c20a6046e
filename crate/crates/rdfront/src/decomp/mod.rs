//! Overlapping domain decomposition: element partitioning, overlap layers,
//! restriction maps and the partition of unity.
//!
//! Every global node is owned by exactly one subdomain (the lowest-id part
//! containing it in the non-overlapping partition). The owner's weight is 1
//! and everyone else's 0, so reconstructing a global vector from restricted
//! local copies is exact in floating point.

mod rcb;

pub use rcb::partition_mesh;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Non-overlapping assignment of every element to one subdomain.
#[derive(Debug, Clone)]
pub struct Partition {
    part_of_element: Vec<u32>,
    n_parts: usize,
}

impl Partition {
    pub fn new(part_of_element: Vec<u32>, n_parts: usize) -> Result<Partition> {
        if n_parts == 0 {
            return Err(Error::Argument("partition needs at least one part".into()));
        }
        let mut counts = vec![0usize; n_parts];
        for &p in &part_of_element {
            let p = p as usize;
            if p >= n_parts {
                return Err(Error::Validation(format!(
                    "element assigned to part {p}, only {n_parts} parts exist"
                )));
            }
            counts[p] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Validation("a partition part is empty".into()));
        }
        let mean = part_of_element.len() as f64 / n_parts as f64;
        let max_dev = counts
            .iter()
            .map(|&c| (c as f64 - mean).abs())
            .fold(0.0, f64::max);
        if max_dev > 0.2 * mean {
            return Err(Error::Validation(format!(
                "partition imbalance {:.1}% exceeds 20% of mean part size",
                100.0 * max_dev / mean
            )));
        }
        Ok(Partition { part_of_element, n_parts })
    }

    pub fn n_parts(&self) -> usize {
        self.n_parts
    }

    pub fn part_of_element(&self) -> &[u32] {
        &self.part_of_element
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_parts];
        for &p in &self.part_of_element {
            counts[p as usize] += 1;
        }
        counts
    }
}

/// One subdomain of an [`OverlapDecomposition`].
#[derive(Debug, Clone)]
pub struct Subdomain {
    /// Global element ids: the partition part plus `delta` adjacency layers.
    pub local_elements: Vec<usize>,
    /// Layer index per local element; 0 means owned, >0 means ghost overlap.
    pub element_layer: Vec<u8>,
    /// Global node id per local node, ascending. This is the restriction map.
    pub local_nodes: Vec<usize>,
    /// Partition-of-unity weight per local node (1 for owned, 0 for ghost).
    pub pou_weight: Vec<f64>,
    /// Local indices of nodes owned by another subdomain.
    pub ghost_nodes: Vec<usize>,
}

impl Subdomain {
    /// Local index of a global node, if present.
    pub fn local_index_of(&self, global: usize) -> Option<usize> {
        self.local_nodes.binary_search(&global).ok()
    }

    pub fn is_ghost_element(&self, local_element: usize) -> bool {
        self.element_layer[local_element] > 0
    }

    /// Restrict a global nodal vector to this subdomain.
    pub fn restrict(&self, global: &[f64]) -> Vec<f64> {
        self.local_nodes.iter().map(|&g| global[g]).collect()
    }
}

/// Partitioned mesh with `delta` overlap layers, restriction maps and
/// partition-of-unity weights.
#[derive(Debug, Clone)]
pub struct OverlapDecomposition {
    subdomains: Vec<Subdomain>,
    node_owner: Vec<u32>,
    part_of_element: Vec<u32>,
    delta: usize,
    n_global_nodes: usize,
}

/// Grow each partition part by `delta` layers of node-adjacent elements and
/// build restriction maps and the partition of unity.
pub fn build_overlap(mesh: &Mesh, partition: &Partition, delta: usize) -> OverlapDecomposition {
    let n_parts = partition.n_parts();
    let part = partition.part_of_element();

    // Node ownership: lowest part id among elements containing the node.
    let mut node_owner = vec![u32::MAX; mesh.node_count()];
    for (e, t) in mesh.tets().iter().enumerate() {
        for &n in t {
            node_owner[n] = node_owner[n].min(part[e]);
        }
    }

    let mut subdomains = Vec::with_capacity(n_parts);
    for p in 0..n_parts {
        let mut layer_of = vec![u8::MAX; mesh.element_count()];
        let mut elements: Vec<usize> = (0..mesh.element_count())
            .filter(|&e| part[e] as usize == p)
            .collect();
        for &e in &elements {
            layer_of[e] = 0;
        }
        let mut frontier = elements.clone();
        for layer in 1..=delta {
            let mut next = Vec::new();
            for &e in &frontier {
                for &n in &mesh.tets()[e] {
                    for &adj in mesh.elements_of_node(n) {
                        let adj = adj as usize;
                        if layer_of[adj] == u8::MAX {
                            layer_of[adj] = layer as u8;
                            next.push(adj);
                        }
                    }
                }
            }
            elements.extend_from_slice(&next);
            frontier = next;
        }
        elements.sort_unstable();
        let element_layer: Vec<u8> = elements.iter().map(|&e| layer_of[e]).collect();

        let mut local_nodes: Vec<usize> = elements
            .iter()
            .flat_map(|&e| mesh.tets()[e].iter().copied())
            .collect();
        local_nodes.sort_unstable();
        local_nodes.dedup();

        let pou_weight: Vec<f64> = local_nodes
            .iter()
            .map(|&g| if node_owner[g] as usize == p { 1.0 } else { 0.0 })
            .collect();
        let ghost_nodes: Vec<usize> = (0..local_nodes.len())
            .filter(|&l| pou_weight[l] == 0.0)
            .collect();

        subdomains.push(Subdomain {
            local_elements: elements,
            element_layer,
            local_nodes,
            pou_weight,
            ghost_nodes,
        });
    }

    OverlapDecomposition {
        subdomains,
        node_owner,
        part_of_element: part.to_vec(),
        delta,
        n_global_nodes: mesh.node_count(),
    }
}

impl OverlapDecomposition {
    pub fn n_parts(&self) -> usize {
        self.subdomains.len()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn subdomain(&self, i: usize) -> &Subdomain {
        &self.subdomains[i]
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn node_owner(&self) -> &[u32] {
        &self.node_owner
    }

    pub fn part_of_element(&self) -> &[u32] {
        &self.part_of_element
    }

    pub fn n_global_nodes(&self) -> usize {
        self.n_global_nodes
    }

    /// Reconstruct a global vector from per-subdomain local vectors using the
    /// partition-of-unity weights. Exact for vectors that are restrictions of
    /// a global vector.
    pub fn assemble_global(&self, locals: &[Vec<f64>]) -> Result<Vec<f64>> {
        let weights: Vec<&[f64]> = self.subdomains.iter().map(|s| s.pou_weight.as_slice()).collect();
        let maps: Vec<&[usize]> = self.subdomains.iter().map(|s| s.local_nodes.as_slice()).collect();
        assemble_weighted(self.n_global_nodes, &maps, &weights, locals)
    }
}

/// Weighted reconstruction `global[g] = sum_i w_i(g) * local_i(g)` for
/// arbitrary restriction maps and weights.
pub fn assemble_weighted(
    n_global: usize,
    maps: &[&[usize]],
    weights: &[&[f64]],
    locals: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if maps.len() != locals.len() || weights.len() != locals.len() {
        return Err(Error::Conformance(format!(
            "expected {} local vectors, got {}",
            maps.len(),
            locals.len()
        )));
    }
    let mut global = vec![0.0; n_global];
    for ((map, w), local) in maps.iter().zip(weights).zip(locals) {
        if map.len() != local.len() || w.len() != local.len() {
            return Err(Error::Conformance(format!(
                "local vector length {} does not match restriction map length {}",
                local.len(),
                map.len()
            )));
        }
        for (l, &g) in map.iter().enumerate() {
            global[g] += w[l] * local[l];
        }
    }
    Ok(global)
}
