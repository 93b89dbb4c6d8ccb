//! Closed-form expectation values on real product states.
//!
//! The cost Hamiltonian is diagonal and built from single-qudit projectors
//! with `P² = P`, so its expectation on a product state is affine in each
//! qudit's probabilities `p_{i,k} = c_{i,k}²`:
//!
//! ```text
//! ⟨H⟩ = const_i + Σ_k h_{i,k} · p_{i,k}
//! ```
//!
//! with local field
//!
//! ```text
//! h_{i,k} = −Σ_{j~i} W_ij p_{j,k} + λ₁ + λ₂(1 − 2C_max + 2(S_k − p_{i,k})).
//! ```
//!
//! For a pool generator `G = i·A` on qudit `i`, `⟨[G, H]⟩ = i·m` with
//! `m = −2 Σ_k h_{i,k} c_k (A c)_k`, which for the pool structure collapses
//! to `m_l = −2 c_l (Σ_k h_k c_k − h_l Σ_k c_k)`. Terms of `h` that do not
//! depend on `k` cancel (`cᵀAc = 0`), so only the edge sum and
//! `2λ₂(S_k − p_{i,k})` are evaluated.

use crate::error::{Error, Result};
use crate::problem::MinDCutInstance;
use crate::qudit::{PoolOperator, ProductState};

/// Instance plus a CSR adjacency for per-qudit locality.
///
/// Neighbour lists keep ascending edge order so floating-point sums are
/// reproducible.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec<'a> {
    instance: &'a MinDCutInstance,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl<'a> HamiltonianSpec<'a> {
    pub fn new(instance: &'a MinDCutInstance) -> Self {
        let n = instance.num_vertices();
        let edges = instance.graph().edges();
        let mut offsets = vec![0usize; n + 1];
        for e in edges {
            offsets[e.i + 1] += 1;
            offsets[e.j + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0; 2 * edges.len()];
        let mut weights = vec![0.0; 2 * edges.len()];
        for e in edges {
            for (a, b) in [(e.i, e.j), (e.j, e.i)] {
                neighbors[fill[a]] = b;
                weights[fill[a]] = e.weight as f64;
                fill[a] += 1;
            }
        }
        Self { instance, offsets, neighbors, weights }
    }

    pub fn instance(&self) -> &'a MinDCutInstance {
        self.instance
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    fn check_state(&self, state: &ProductState) -> Result<()> {
        if state.num_qudits() != self.instance.num_vertices() {
            return Err(Error::DimensionMismatch { expected: self.instance.num_vertices(), got: state.num_qudits() });
        }
        if state.dim() != self.instance.num_partitions() {
            return Err(Error::DimensionMismatch { expected: self.instance.num_partitions(), got: state.dim() });
        }
        Ok(())
    }
}

/// `p_{i,k}`, with the per-level sums `S_k = Σ_i p_{i,k}` and
/// `Q_k = Σ_i p_{i,k}²` that every per-qudit evaluation in a sweep reuses.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    num_qudits: usize,
    dim: usize,
    probs: Vec<f64>,
    partition_sums: Vec<f64>,
    square_sums: Vec<f64>,
}

impl MarginalTable {
    pub fn num_qudits(&self) -> usize {
        self.num_qudits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prob(&self, i: usize, k: usize) -> f64 {
        self.probs[i * self.dim + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn partition_sums(&self) -> &[f64] {
        &self.partition_sums
    }

    pub fn square_sums(&self) -> &[f64] {
        &self.square_sums
    }
}

pub fn marginals(state: &ProductState) -> MarginalTable {
    let d = state.dim();
    let probs: Vec<f64> = state.amplitudes().iter().map(|c| c * c).collect();
    let mut partition_sums = vec![0.0; d];
    let mut square_sums = vec![0.0; d];
    for row in probs.chunks_exact(d) {
        for k in 0..d {
            partition_sums[k] += row[k];
            square_sums[k] += row[k] * row[k];
        }
    }
    MarginalTable { num_qudits: state.num_qudits(), dim: d, probs, partition_sums, square_sums }
}

/// `⟨H_cut⟩ + ⟨H_pen⟩` from a marginal table.
///
/// Uses `⟨(Σ_i P_{i,k})²⟩ = S_k + S_k² − Q_k` for independent qudits.
pub fn energy_from_marginals(spec: &HamiltonianSpec, marg: &MarginalTable) -> f64 {
    let d = marg.dim;
    let mut cut = 0.0;
    for e in spec.instance.graph().edges() {
        let (pi, pj) = (marg.row(e.i), marg.row(e.j));
        let same: f64 = pi.iter().zip(pj).map(|(a, b)| a * b).sum();
        cut += e.weight as f64 * (1.0 - same);
    }
    let p = spec.instance.penalty();
    let c = p.c_max as f64;
    let mut pen = 0.0;
    for k in 0..d {
        let s = marg.partition_sums[k];
        let second = s + s * s - marg.square_sums[k];
        pen += -p.lambda1 * (c - s) + p.lambda2 * (c * c - 2.0 * c * s + second);
    }
    cut + pen
}

pub fn expected_energy(spec: &HamiltonianSpec, state: &ProductState) -> Result<f64> {
    spec.check_state(state)?;
    Ok(energy_from_marginals(spec, &marginals(state)))
}

/// The `k`-dependent part of the local field of `qudit`, written into `out`.
pub fn local_fields(spec: &HamiltonianSpec, marg: &MarginalTable, qudit: usize, out: &mut [f64]) {
    let d = marg.dim;
    debug_assert_eq!(out.len(), d);
    out.fill(0.0);
    for (j, w) in spec.neighbors(qudit) {
        let pj = marg.row(j);
        for k in 0..d {
            out[k] -= w * pj[k];
        }
    }
    let two_l2 = 2.0 * spec.instance.penalty().lambda2;
    if two_l2 != 0.0 {
        let pi = marg.row(qudit);
        for k in 0..d {
            out[k] += two_l2 * (marg.partition_sums[k] - pi[k]);
        }
    }
}

/// `m_l` for every pool generator `l` from the fields `h` and amplitudes `c`.
pub fn pool_gradients_from_fields(fields: &[f64], amps: &[f64], out: &mut [f64]) {
    let total: f64 = amps.iter().sum();
    let weighted: f64 = fields.iter().zip(amps).map(|(h, c)| h * c).sum();
    for ((m, &h), &c) in out.iter_mut().zip(fields).zip(amps) {
        *m = -2.0 * c * (weighted - h * total);
    }
}

/// The real `m` with `⟨Ψ|[G, H]|Ψ⟩ = i·m` for `op` acting on `qudit`.
pub fn commutator_expectation(
    spec: &HamiltonianSpec,
    state: &ProductState,
    qudit: usize,
    op: &PoolOperator,
) -> Result<f64> {
    spec.check_state(state)?;
    if qudit >= state.num_qudits() {
        return Err(Error::IndexOutOfRange { index: qudit, len: state.num_qudits() });
    }
    if op.dim() != state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: op.dim() });
    }
    let marg = marginals(state);
    let mut fields = vec![0.0; state.dim()];
    local_fields(spec, &marg, qudit, &mut fields);
    let mut grads = vec![0.0; state.dim()];
    pool_gradients_from_fields(&fields, state.qudit(qudit), &mut grads);
    Ok(grads[op.pivot_level()])
}

/// `⟨G²⟩ = ‖A c‖²` for `op` acting on `qudit`.
pub fn generator_second_moment(state: &ProductState, qudit: usize, op: &PoolOperator) -> Result<f64> {
    if qudit >= state.num_qudits() {
        return Err(Error::IndexOutOfRange { index: qudit, len: state.num_qudits() });
    }
    if op.dim() != state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: op.dim() });
    }
    Ok(op.second_moment(state.qudit(qudit)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Edge, PenaltyConfig, WeightedGraph};
    use crate::qudit::build_pool;

    fn single_edge(weight: u32, d: usize, penalty: PenaltyConfig) -> MinDCutInstance {
        let g = WeightedGraph::new(2, vec![Edge { i: 0, j: 1, weight }], None).unwrap();
        MinDCutInstance::new(g, d, penalty).unwrap()
    }

    #[test]
    fn marginal_rows() {
        let s = ProductState::uniform(3, 4).unwrap();
        let m = marginals(&s);
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 0.0]);
        for k in 0..4 {
            assert!((m.prob(1, k) - 0.25).abs() < 1e-15);
        }
        assert!((m.partition_sums().iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_single_edge_energy() {
        let inst = single_edge(1, 3, PenaltyConfig::none(2));
        let spec = HamiltonianSpec::new(&inst);
        let u = 1.0 / 3f64.sqrt();
        let s = ProductState::new(3, vec![vec![u; 3], vec![u; 3]]).unwrap();
        assert!((expected_energy(&spec, &s).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn basis_state_energy_equals_total_cost() {
        let inst = crate::problem::generate_instance(12, 4, 3, 5).unwrap();
        let spec = HamiltonianSpec::new(&inst);
        let labels = [0, 1, 2, 2, 1, 0, 0, 0, 1, 2, 2, 2];
        let s = ProductState::basis(3, &labels).unwrap();
        let e = expected_energy(&spec, &s).unwrap();
        assert!((e - inst.total_cost(&labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_gives_zero_commutator() {
        let inst = single_edge(2, 3, PenaltyConfig::from_ratio(5.0, 1));
        let spec = HamiltonianSpec::new(&inst);
        let s = ProductState::new(3, vec![vec![0.0, 1.0, 0.0], vec![0.6, 0.8, 0.0]]).unwrap();
        for op in build_pool(3).unwrap() {
            assert_eq!(commutator_expectation(&spec, &s, 0, &op).unwrap(), 0.0);
        }
    }

    #[test]
    fn commutator_is_minus_energy_slope() {
        // m = −dE/dθ along exp(θA)
        let inst = crate::problem::generate_instance(9, 3, 4, 11).unwrap();
        let spec = HamiltonianSpec::new(&inst);
        let qudits: Vec<Vec<f64>> = (0..9).map(|i| (0..4).map(|k| ((i * 7 + k * 3) % 5) as f64 + 0.3).collect()).collect();
        let s = ProductState::normalized(4, qudits).unwrap();
        let h = 1e-6;
        for op in build_pool(4).unwrap() {
            for q in [0, 4, 8] {
                let m = commutator_expectation(&spec, &s, q, &op).unwrap();
                let mut plus = s.clone();
                plus.rotate(q, &op, h).unwrap();
                let mut minus = s.clone();
                minus.rotate(q, &op, -h).unwrap();
                let slope = (expected_energy(&spec, &plus).unwrap() - expected_energy(&spec, &minus).unwrap()) / (2.0 * h);
                assert!((m + slope).abs() < 1e-5 * (1.0 + m.abs()), "m={m} slope={slope}");
            }
        }
    }

    #[test]
    fn second_moment_examples() {
        let s = ProductState::uniform(2, 3).unwrap();
        let pool = build_pool(3).unwrap();
        for op in &pool {
            assert!((generator_second_moment(&s, 1, op).unwrap() - 2.0).abs() < 1e-14);
        }
        assert_eq!(generator_second_moment(&s, 0, &pool[0]).unwrap(), 2.0);
        assert!(generator_second_moment(&s, 2, &pool[0]).is_err());
    }

    #[test]
    fn dimension_checks() {
        let inst = single_edge(1, 3, PenaltyConfig::none(1));
        let spec = HamiltonianSpec::new(&inst);
        let wrong_d = ProductState::uniform(2, 4).unwrap();
        assert!(expected_energy(&spec, &wrong_d).is_err());
        let wrong_n = ProductState::uniform(3, 3).unwrap();
        assert!(expected_energy(&spec, &wrong_n).is_err());
    }

    #[test]
    fn adjacency_is_symmetric() {
        let inst = crate::problem::generate_instance(40, 6, 3, 2).unwrap();
        let spec = HamiltonianSpec::new(&inst);
        let degrees = inst.graph().degrees();
        for i in 0..40 {
            assert_eq!(spec.degree(i), degrees[i]);
            for (j, w) in spec.neighbors(i) {
                assert!(spec.neighbors(j).any(|(k, v)| k == i && v == w));
            }
        }
    }
}
