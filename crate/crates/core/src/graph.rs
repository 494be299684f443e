//! Walk basis and the two Hamiltonian terms.
//!
//! The basis is a runway path `1..=M`, the `2^n - 1` internal tree nodes
//! (heap order), one `leaf(k)` vertex per input bit and one `aux(k)`
//! partner per leaf. The driving term `H_D` is the unweighted adjacency
//! matrix of runway + tree; the oracle term `H_O` couples `leaf(k)` to
//! `aux(k)` with weight `-x_k`, so `leaf(k) ↔ |0,k⟩` and `aux(k) ↔ |1,k⟩`
//! reproduce `H_O|b,k⟩ = -x_k|¬b,k⟩`.
//!
//! Flattening order: runway ascending, internal nodes in heap order,
//! leaves ascending, aux vertices ascending.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NandError, Result};
use crate::nand::NandInstance;

/// Default cap on the walk dimension.
pub const MAX_DIMENSION: usize = 1 << 16;

/// Default cap for dense (materialized) operators.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Depth cap for walk systems.
pub const MAX_WALK_DEPTH: u32 = 14;

/// Dense cap, overridable through `NANDWALK_DENSE_CAP`.
pub fn dense_cap() -> usize {
    std::env::var("NANDWALK_DENSE_CAP")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_DENSE_CAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Vertex {
    /// Runway position, `1..=M`.
    Runway(usize),
    /// Internal tree node by heap index, `1..N`.
    Internal(usize),
    Leaf(usize),
    Aux(usize),
}

/// Which operator to act with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    /// `H_O`, the input-dependent term.
    Oracle,
    /// `H_D`, the runway + tree adjacency.
    Driving,
    /// `H_O + H_D`.
    Total,
}

/// An occupied oracle pair: `leaf(k)`–`aux(k)` with weight `-x_k = -1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OraclePair {
    pub leaf: usize,
    pub aux: usize,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct WalkSystem {
    depth: u32,
    runway_len: usize,
    attach: usize,
    dim: usize,
    h_o_pairs: Vec<OraclePair>,
    h_d_edges: Vec<(usize, usize)>,
    // Row-wise neighbour lists, sorted by column; fixed accumulation order.
    driving_rows: Vec<Vec<usize>>,
    oracle_partner: Vec<Option<(usize, f64)>>,
}

#[derive(Serialize)]
struct SystemDump<'a> {
    dim: usize,
    h_d_edges: &'a [(usize, usize)],
    h_o_pairs: Vec<(usize, usize, f64)>,
}

impl WalkSystem {
    /// Builds runway + tree + oracle pairs for `instance`.
    pub fn build(instance: &NandInstance, runway_len: usize, attach: usize) -> Result<Self> {
        Self::build_with_cap(instance, runway_len, attach, MAX_DIMENSION)
    }

    pub fn build_with_cap(
        instance: &NandInstance,
        runway_len: usize,
        attach: usize,
        max_dim: usize,
    ) -> Result<Self> {
        let depth = instance.depth();
        if depth > MAX_WALK_DEPTH {
            return Err(NandError::DepthOverCap {
                depth,
                cap: MAX_WALK_DEPTH,
            });
        }
        if runway_len < 2 {
            return Err(NandError::InvalidArgument(format!(
                "runway length must be at least 2, got {runway_len}"
            )));
        }
        if attach < 1 || attach > runway_len {
            return Err(NandError::InvalidArgument(format!(
                "attach point {attach} outside runway 1..={runway_len}"
            )));
        }
        let leaves = instance.num_leaves();
        let dim = runway_len + (leaves - 1) + 2 * leaves;
        if dim > max_dim {
            return Err(NandError::DimensionOverCap { dim, cap: max_dim });
        }

        let mut system = Self {
            depth,
            runway_len,
            attach,
            dim,
            h_o_pairs: Vec::new(),
            h_d_edges: Vec::new(),
            driving_rows: Vec::new(),
            oracle_partner: Vec::new(),
        };

        let mut edges = Vec::with_capacity(runway_len + 2 * leaves);
        for j in 1..runway_len {
            edges.push((system.index(Vertex::Runway(j)), system.index(Vertex::Runway(j + 1))));
        }
        edges.push((system.index(Vertex::Runway(attach)), system.root_index()));
        for node in 1..leaves {
            for child in [2 * node, 2 * node + 1] {
                edges.push((system.index(Vertex::Internal(node)), system.heap_index(child)));
            }
        }

        let pairs: Vec<OraclePair> = (0..leaves)
            .filter(|&k| instance.bit(k))
            .map(|k| OraclePair {
                leaf: system.index(Vertex::Leaf(k)),
                aux: system.index(Vertex::Aux(k)),
                weight: -1.0,
            })
            .collect();

        let mut rows = vec![Vec::new(); dim];
        for &(u, v) in &edges {
            rows[u].push(v);
            rows[v].push(u);
        }
        for row in rows.iter_mut() {
            row.sort_unstable();
        }
        let mut partner = vec![None; dim];
        for p in &pairs {
            partner[p.leaf] = Some((p.aux, p.weight));
            partner[p.aux] = Some((p.leaf, p.weight));
        }

        system.h_d_edges = edges;
        system.h_o_pairs = pairs;
        system.driving_rows = rows;
        system.oracle_partner = partner;
        Ok(system)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn runway_len(&self) -> usize {
        self.runway_len
    }

    pub fn attach(&self) -> usize {
        self.attach
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h_o_pairs(&self) -> &[OraclePair] {
        &self.h_o_pairs
    }

    pub fn h_d_edges(&self) -> &[(usize, usize)] {
        &self.h_d_edges
    }

    /// Dense index of a vertex.
    ///
    /// Panics on vertices that do not exist in this system.
    pub fn index(&self, v: Vertex) -> usize {
        let leaves = self.num_leaves();
        match v {
            Vertex::Runway(j) => {
                assert!((1..=self.runway_len).contains(&j), "runway position {j} out of range");
                j - 1
            }
            Vertex::Internal(h) => {
                assert!((1..leaves).contains(&h), "internal node {h} out of range");
                self.runway_len + h - 1
            }
            Vertex::Leaf(k) => {
                assert!(k < leaves, "leaf {k} out of range");
                self.runway_len + leaves - 1 + k
            }
            Vertex::Aux(k) => {
                assert!(k < leaves, "aux {k} out of range");
                self.runway_len + 2 * leaves - 1 + k
            }
        }
    }

    /// Inverse of [`index`](Self::index).
    pub fn vertex(&self, idx: usize) -> Vertex {
        assert!(idx < self.dim, "index {idx} out of range");
        let leaves = self.num_leaves();
        let m = self.runway_len;
        if idx < m {
            Vertex::Runway(idx + 1)
        } else if idx < m + leaves - 1 {
            Vertex::Internal(idx - m + 1)
        } else if idx < m + 2 * leaves - 1 {
            Vertex::Leaf(idx - m - (leaves - 1))
        } else {
            Vertex::Aux(idx - m - (2 * leaves - 1))
        }
    }

    fn heap_index(&self, node: usize) -> usize {
        let leaves = self.num_leaves();
        if node >= leaves {
            self.index(Vertex::Leaf(node - leaves))
        } else {
            self.index(Vertex::Internal(node))
        }
    }

    /// The tree root: internal node 1, or the single leaf at depth 0.
    pub fn root_index(&self) -> usize {
        self.heap_index(1)
    }

    /// Degree of each vertex in `H_D`.
    pub fn driving_degrees(&self) -> Vec<usize> {
        self.driving_rows.iter().map(Vec::len).collect()
    }

    pub fn max_driving_degree(&self) -> usize {
        self.driving_degrees().into_iter().max().unwrap_or(0)
    }

    /// `y = H x` by sparse accumulation.
    pub fn apply(&self, term: Term, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply_into(term, x, &mut y)?;
        Ok(y)
    }

    pub fn apply_into(&self, term: Term, x: &[Complex64], y: &mut [Complex64]) -> Result<()> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        let driving = matches!(term, Term::Driving | Term::Total);
        let oracle = matches!(term, Term::Oracle | Term::Total);
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            if driving {
                for &j in &self.driving_rows[i] {
                    acc += x[j];
                }
            }
            if oracle {
                if let Some((j, w)) = self.oracle_partner[i] {
                    acc += x[j] * w;
                }
            }
            *out = acc;
        }
        Ok(())
    }

    /// Real-valued variant of [`apply_into`](Self::apply_into).
    pub fn apply_real(&self, term: Term, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        let driving = matches!(term, Term::Driving | Term::Total);
        let oracle = matches!(term, Term::Oracle | Term::Total);
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            if driving {
                for &j in &self.driving_rows[i] {
                    acc += x[j];
                }
            }
            if oracle {
                if let Some((j, w)) = self.oracle_partner[i] {
                    acc += w * x[j];
                }
            }
            *out = acc;
        }
        Ok(())
    }

    /// Dense real-symmetric matrix, refused above the dense cap.
    pub fn dense(&self, term: Term) -> Result<DMatrix<f64>> {
        let cap = dense_cap();
        if self.dim > cap {
            return Err(NandError::DenseCapExceeded { dim: self.dim, cap });
        }
        let mut h = DMatrix::zeros(self.dim, self.dim);
        if matches!(term, Term::Driving | Term::Total) {
            for &(u, v) in &self.h_d_edges {
                h[(u, v)] += 1.0;
                h[(v, u)] += 1.0;
            }
        }
        if matches!(term, Term::Oracle | Term::Total) {
            for p in &self.h_o_pairs {
                h[(p.leaf, p.aux)] += p.weight;
                h[(p.aux, p.leaf)] += p.weight;
            }
        }
        Ok(h)
    }

    /// Spectral norm by power iteration on the operator itself.
    ///
    /// For a symmetric operator `‖H x_k‖` with `x_k = H^k x_0 / ‖H^k x_0‖`
    /// increases monotonically to the largest |eigenvalue|, including the
    /// bipartite case where `±λ` are both present.
    pub fn operator_norm(&self, term: Term) -> Result<f64> {
        const MAX_ITERATIONS: usize = 1_000_000;
        const TOLERANCE: f64 = 1e-14;
        // Strictly positive start with a deterministic ripple so that no
        // eigenvector is orthogonal to it by symmetry.
        let mut x: Vec<f64> = (0..self.dim).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
        normalize_real(&mut x);
        let mut y = vec![0.0; self.dim];
        let mut estimate = 0.0_f64;
        let mut change = f64::INFINITY;
        for _ in 0..MAX_ITERATIONS {
            self.apply_real(term, &x, &mut y)?;
            let next = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if next == 0.0 {
                return Ok(0.0);
            }
            change = (next - estimate).abs();
            estimate = next;
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / next;
            }
            if change <= TOLERANCE * estimate {
                return Ok(estimate);
            }
        }
        Err(NandError::NonConvergence {
            iterations: MAX_ITERATIONS,
            estimate,
            change,
        })
    }

    /// Edge lists as JSON in flattening order.
    pub fn dump_json(&self) -> String {
        serde_json::to_string(&SystemDump {
            dim: self.dim,
            h_d_edges: &self.h_d_edges,
            h_o_pairs: self.h_o_pairs.iter().map(|p| (p.leaf, p.aux, p.weight)).collect(),
        })
        .expect("system dump serialization is infallible")
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(NandError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

fn normalize_real(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= norm;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(depth: u32, bits: &str, m: usize, attach: usize) -> WalkSystem {
        WalkSystem::build(&NandInstance::from_bit_str(depth, bits).unwrap(), m, attach).unwrap()
    }

    fn basis(dim: usize, i: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[i] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn depth_zero_pendant() {
        let s = system(0, "0", 4, 2);
        assert_eq!(s.dim(), 6);
        assert!(s.h_o_pairs().is_empty());
        // path 1-2-3-4 plus root pendant at 2
        assert_eq!(s.h_d_edges(), &[(0, 1), (1, 2), (2, 3), (1, 4)]);
        assert_eq!(s.operator_norm(Term::Oracle).unwrap(), 0.0);
    }

    #[test]
    fn oracle_pairs_carry_minus_one() {
        let s = system(1, "11", 2, 1);
        assert_eq!(s.h_o_pairs().len(), 2);
        assert!(s.h_o_pairs().iter().all(|p| p.weight == -1.0));
        let s = system(2, "1010", 4, 2);
        let leaves: Vec<_> = s.h_o_pairs().iter().map(|p| s.vertex(p.leaf)).collect();
        assert_eq!(leaves, vec![Vertex::Leaf(0), Vertex::Leaf(2)]);
    }

    #[test]
    fn flattening_is_a_bijection() {
        let s = system(3, "10110010", 7, 3);
        assert_eq!(s.dim(), 7 + 7 + 16);
        for i in 0..s.dim() {
            assert_eq!(s.index(s.vertex(i)), i);
        }
        assert_eq!(s.index(Vertex::Internal(1)), 7);
        assert_eq!(s.index(Vertex::Leaf(0)), 14);
        assert_eq!(s.index(Vertex::Aux(7)), 29);
    }

    #[test]
    fn internal_vertices_have_degree_three() {
        let s = system(3, "00000000", 10, 5);
        let deg = s.driving_degrees();
        for h in 1..8 {
            assert_eq!(deg[s.index(Vertex::Internal(h))], 3);
        }
        for k in 0..8 {
            assert_eq!(deg[s.index(Vertex::Leaf(k))], 1);
            assert_eq!(deg[s.index(Vertex::Aux(k))], 0);
        }
        assert_eq!(s.max_driving_degree(), 3);
    }

    #[test]
    fn runway_row_and_oracle_rows() {
        let s = system(2, "1100", 12, 9);
        let j = 4;
        let y = s.apply(Term::Driving, &basis(s.dim(), s.index(Vertex::Runway(j)))).unwrap();
        for (i, v) in y.iter().enumerate() {
            let want = if i == s.index(Vertex::Runway(j - 1)) || i == s.index(Vertex::Runway(j + 1)) {
                1.0
            } else {
                0.0
            };
            assert_eq!(*v, Complex64::new(want, 0.0));
        }

        let y = s.apply(Term::Oracle, &basis(s.dim(), s.index(Vertex::Leaf(1)))).unwrap();
        let aux = s.index(Vertex::Aux(1));
        for (i, v) in y.iter().enumerate() {
            let want = if i == aux { -1.0 } else { 0.0 };
            assert_eq!(*v, Complex64::new(want, 0.0));
        }

        for v in [Vertex::Runway(3), Vertex::Internal(2), Vertex::Leaf(3)] {
            let y = s.apply(Term::Oracle, &basis(s.dim(), s.index(v))).unwrap();
            assert!(y.iter().all(|c| c.norm() == 0.0));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = NandInstance::from_bit_str(1, "01").unwrap();
        assert!(WalkSystem::build(&x, 1, 1).is_err());
        assert!(WalkSystem::build(&x, 4, 0).is_err());
        assert!(WalkSystem::build(&x, 4, 5).is_err());
        assert!(matches!(
            WalkSystem::build_with_cap(&x, 100, 50, 64),
            Err(NandError::DimensionOverCap { dim: 105, cap: 64 })
        ));
        let s = WalkSystem::build(&x, 4, 2).unwrap();
        assert!(matches!(
            s.apply(Term::Driving, &[Complex64::new(0.0, 0.0); 3]),
            Err(NandError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dump_uses_flattened_indices() {
        let s = system(0, "1", 2, 1);
        assert_eq!(
            s.dump_json(),
            r#"{"dim":4,"h_d_edges":[[0,1],[0,2]],"h_o_pairs":[[2,3,-1.0]]}"#
        );
    }
}
