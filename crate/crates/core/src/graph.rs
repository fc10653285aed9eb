//! Periodic k-nearest-neighbour graph over the grid nodes.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Directed edges `src → dst` plus node coordinates on a periodic domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTopology {
    pub n_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub x: Vec<f64>,
    pub length: f64,
}

/// Neighbours per side used by the solver graphs.
pub const NEIGHBORS: usize = 3;

/// The periodic graph matching a trajectory's spatial grid.
pub fn graph_for(traj: &crate::solvers::Trajectory) -> Result<GraphTopology> {
    build_graph(traj.n_x, traj.length, NEIGHBORS)
}

/// Connects every node to its `k` nearest neighbours on each side, wrapping
/// around the periodic boundary.
pub fn build_graph(n_x: usize, length: f64, k: usize) -> Result<GraphTopology> {
    if n_x <= 2 * k {
        return Err(Error::InvalidArgument(format!(
            "graph needs more than {} nodes for {k} neighbours per side, got {n_x}",
            2 * k
        )));
    }
    let mut src = Vec::with_capacity(2 * k * n_x);
    let mut dst = Vec::with_capacity(2 * k * n_x);
    for i in 0..n_x {
        for d in 1..=k {
            src.push((i + n_x - d) % n_x);
            dst.push(i);
            src.push((i + d) % n_x);
            dst.push(i);
        }
    }
    let x = (0..n_x).map(|j| j as f64 * length / n_x as f64).collect();
    Ok(GraphTopology {
        n_nodes: n_x,
        src: src.into(),
        dst: dst.into(),
        x,
        length,
    })
}

impl GraphTopology {
    pub fn from_edges(x: Vec<f64>, length: f64, src: Vec<usize>, dst: Vec<usize>) -> Result<Self> {
        let n = x.len();
        if src.len() != dst.len() || src.iter().chain(&dst).any(|&i| i >= n) {
            return Err(Error::InvalidArgument("edge list does not match node count".into()));
        }
        Ok(Self {
            n_nodes: n,
            src: src.into(),
            dst: dst.into(),
            x,
            length,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// `x_dst - x_src` under the minimal-image convention, in `[-L/2, L/2)`.
    pub fn relative_position(&self, edge: usize) -> f64 {
        let d = self.x[self.dst[edge]] - self.x[self.src[edge]];
        (d + 0.5 * self.length).rem_euclid(self.length) - 0.5 * self.length
    }

    pub fn in_neighbors(&self, node: usize) -> Vec<usize> {
        let mut n: Vec<usize> = (0..self.n_edges()).filter(|&e| self.dst[e] == node).map(|e| self.src[e]).collect();
        n.sort_unstable();
        n
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &d in self.dst.iter() {
            deg[d] += 1;
        }
        deg
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &s in self.src.iter() {
            deg[s] += 1;
        }
        deg
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn ring_of_100() {
        let g = build_graph(100, 16.0, 3).unwrap();
        assert_eq!(g.n_edges(), 600);
        assert_eq!(g.in_neighbors(0), vec![1, 2, 3, 97, 98, 99]);
        assert!(g.in_degrees().iter().all(|&d| d == 6));
        assert!(g.out_degrees().iter().all(|&d| d == 6));
    }

    #[test]
    fn saturated_ring_is_complete() {
        let g = build_graph(7, 16.0, 3).unwrap();
        assert_eq!(g.n_edges(), 42);
        let edges: HashSet<(usize, usize)> = g.src.iter().copied().zip(g.dst.iter().copied()).collect();
        assert_eq!(edges.len(), 42);
        assert!(edges.iter().all(|(s, d)| s != d));
    }

    #[test]
    fn too_small_ring_is_rejected() {
        assert!(build_graph(6, 16.0, 3).is_err());
    }

    #[test]
    fn relative_positions_use_minimal_image() {
        let g = build_graph(100, 16.0, 3).unwrap();
        let e = (0..g.n_edges()).find(|&e| g.dst[e] == 0 && g.src[e] == 99).unwrap();
        assert!((g.relative_position(e) - 0.16).abs() < 1e-12);
        for e in 0..g.n_edges() {
            assert!(g.relative_position(e).abs() <= 3.0 * 0.16 + 1e-12);
        }
    }

    #[test]
    fn edge_set_is_symmetric_and_shift_invariant() {
        let g = build_graph(20, 16.0, 3).unwrap();
        let edges: HashSet<(usize, usize)> = g.src.iter().copied().zip(g.dst.iter().copied()).collect();
        for &(s, d) in &edges {
            assert!(edges.contains(&(d, s)));
            assert!(edges.contains(&((s + 1) % 20, (d + 1) % 20)));
        }
    }
}
