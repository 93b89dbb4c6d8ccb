//! Slow, exact reference computations on the full `d^N`-dimensional space.
//!
//! Nothing here shares code with the closed forms in [`crate::expectation`]
//! or the rotation in [`crate::qudit`] beyond reading the input types:
//! operators are Kronecker-lifted complex matrices and expectation values
//! are plain `⟨ψ|M|ψ⟩` products. Sizes are capped and fail fast.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::problem::MinDCutInstance;
use crate::qudit::{PoolOperator, ProductState};

/// Largest Hilbert-space dimension for dense operators.
pub const MAX_OPERATOR_DIM: usize = 1024;
/// Largest Hilbert-space dimension for dense state vectors.
pub const MAX_STATE_DIM: usize = 1 << 20;
/// Largest number of assignments an exhaustive search will visit.
pub const MAX_BRUTE_FORCE: usize = 10_000_000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn hilbert_dim(n: usize, d: usize, cap: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..n {
        dim = dim
            .checked_mul(d)
            .filter(|&x| x <= cap)
            .ok_or_else(|| Error::TooLarge(format!("{d}^{n} exceeds {cap}")))?;
    }
    Ok(dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub num_qudits: usize,
    pub dim: usize,
    pub amps: DVector<Complex64>,
}

impl DenseState {
    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn max_imaginary(&self) -> f64 {
        self.amps.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// Largest entrywise distance to another state.
    pub fn distance(&self, other: &DenseState) -> f64 {
        (&self.amps - &other.amps).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub num_qudits: usize,
    pub dim: usize,
    pub matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn expectation(&self, state: &DenseState) -> Complex64 {
        state.amps.dotc(&(&self.matrix * &state.amps))
    }

    pub fn apply(&self, state: &DenseState) -> DenseState {
        DenseState { num_qudits: state.num_qudits, dim: state.dim, amps: &self.matrix * &state.amps }
    }

    pub fn product(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { num_qudits: self.num_qudits, dim: self.dim, matrix: &self.matrix * &other.matrix }
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator {
            num_qudits: self.num_qudits,
            dim: self.dim,
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_real_part(&self) -> f64 {
        self.matrix.iter().map(|c| c.re.abs()).fold(0.0, f64::max)
    }

    fn eigen(&self) -> nalgebra::SymmetricEigen<Complex64, nalgebra::Dyn> {
        self.matrix.clone().symmetric_eigen()
    }

    /// Smallest eigenvalue.
    pub fn ground_energy(&self) -> f64 {
        self.eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `exp(−i·t·self)·ψ` for Hermitian `self`.
    pub fn evolve_unitary(&self, state: &DenseState, t: f64) -> DenseState {
        let eig = self.eigen();
        let v = &eig.eigenvectors;
        let mut coeffs = v.adjoint() * &state.amps;
        for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
            *c *= Complex64::new(0.0, -t * lambda).exp();
        }
        DenseState { num_qudits: state.num_qudits, dim: state.dim, amps: v * coeffs }
    }
}

fn kron_vectors(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_iterator(a.len() * b.len(), a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)))
}

/// `|ψ_0⟩ ⊗ |ψ_1⟩ ⊗ …` with qudit 0 as the most significant digit.
pub fn lift_product_state(state: &ProductState) -> Result<DenseState> {
    hilbert_dim(state.num_qudits(), state.dim(), MAX_STATE_DIM)?;
    let mut amps = DVector::from_element(1, ONE);
    for q in state.qudits() {
        let v = DVector::from_iterator(q.len(), q.iter().map(|&x| Complex64::new(x, 0.0)));
        amps = kron_vectors(&amps, &v);
    }
    Ok(DenseState { num_qudits: state.num_qudits(), dim: state.dim(), amps })
}

/// `I ⊗ … ⊗ local ⊗ … ⊗ I` with `local` on `qudit`.
pub fn lift_single_qudit(num_qudits: usize, dim: usize, qudit: usize, local: &DMatrix<Complex64>) -> Result<DenseOperator> {
    hilbert_dim(num_qudits, dim, MAX_OPERATOR_DIM)?;
    if qudit >= num_qudits {
        return Err(Error::IndexOutOfRange { index: qudit, len: num_qudits });
    }
    if local.nrows() != dim || local.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: local.nrows() });
    }
    let left = DMatrix::<Complex64>::identity(dim.pow(qudit as u32), dim.pow(qudit as u32));
    let right_dim = dim.pow((num_qudits - qudit - 1) as u32);
    let right = DMatrix::<Complex64>::identity(right_dim, right_dim);
    let matrix = left.kronecker(local).kronecker(&right);
    Ok(DenseOperator { num_qudits, dim, matrix })
}

/// `G_l = i·A_l` on `qudit`, lifted.
pub fn dense_generator(num_qudits: usize, qudit: usize, op: &PoolOperator) -> Result<DenseOperator> {
    let d = op.dim();
    let local = DMatrix::from_fn(d, d, |r, c| I * op.entry(r, c));
    lift_single_qudit(num_qudits, d, qudit, &local)
}

/// `P_{qudit,k} = |k⟩⟨k|` on `qudit`, lifted.
pub fn projector(num_qudits: usize, dim: usize, qudit: usize, level: usize) -> Result<DenseOperator> {
    let local = DMatrix::from_fn(dim, dim, |r, c| if r == level && c == level { ONE } else { ZERO });
    lift_single_qudit(num_qudits, dim, qudit, &local)
}

/// `Σ_i a_i G_i`.
pub fn combine(generators: &[DenseOperator], coefficients: &[f64]) -> DenseOperator {
    let first = &generators[0];
    let mut matrix = DMatrix::from_element(first.size(), first.size(), ZERO);
    for (g, &a) in generators.iter().zip(coefficients) {
        matrix += &g.matrix * Complex64::new(a, 0.0);
    }
    DenseOperator { num_qudits: first.num_qudits, dim: first.dim, matrix }
}

/// Cut Hamiltonian plus penalty, assembled from lifted projectors and
/// matrix products.
pub fn dense_hamiltonian(instance: &MinDCutInstance) -> Result<DenseOperator> {
    let n = instance.num_vertices();
    let d = instance.num_partitions();
    let size = hilbert_dim(n, d, MAX_OPERATOR_DIM)?;
    let id = DMatrix::<Complex64>::identity(size, size);
    let proj: Vec<Vec<DenseOperator>> = (0..n)
        .map(|i| (0..d).map(|k| projector(n, d, i, k)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let mut h = DMatrix::from_element(size, size, ZERO);
    for e in instance.graph().edges() {
        let mut same = DMatrix::from_element(size, size, ZERO);
        for (a, b) in proj[e.i].iter().zip(&proj[e.j]) {
            same += &a.matrix * &b.matrix;
        }
        h += (&id - same) * Complex64::new(e.weight as f64, 0.0);
    }
    let p = instance.penalty();
    let c = Complex64::new(p.c_max as f64, 0.0);
    for k in 0..d {
        let mut occupancy = DMatrix::from_element(size, size, ZERO);
        for row in &proj {
            occupancy += &row[k].matrix;
        }
        let slack = &id * c - occupancy;
        h += &slack * Complex64::new(-p.lambda1, 0.0) + (&slack * &slack) * Complex64::new(p.lambda2, 0.0);
    }
    Ok(DenseOperator { num_qudits: n, dim: d, matrix: h })
}

/// Diagonal of the Hamiltonian in the computational basis, built from
/// projector diagonals (0/1 vectors) with element-wise arithmetic.
pub fn hamiltonian_diagonal(instance: &MinDCutInstance) -> Result<Vec<f64>> {
    let n = instance.num_vertices();
    let d = instance.num_partitions();
    let size = hilbert_dim(n, d, MAX_BRUTE_FORCE)?;
    let proj_diag = |qudit: usize, level: usize| -> Vec<f64> {
        let stride = d.pow((n - qudit - 1) as u32);
        (0..size).map(|b| if (b / stride) % d == level { 1.0 } else { 0.0 }).collect()
    };
    let proj: Vec<Vec<Vec<f64>>> = (0..n).map(|i| (0..d).map(|k| proj_diag(i, k)).collect()).collect();

    let mut diag = vec![0.0; size];
    for e in instance.graph().edges() {
        let w = e.weight as f64;
        for (b, h) in diag.iter_mut().enumerate() {
            let same: f64 = (0..d).map(|k| proj[e.i][k][b] * proj[e.j][k][b]).sum();
            *h += w * (1.0 - same);
        }
    }
    let p = instance.penalty();
    let c = p.c_max as f64;
    for k in 0..d {
        for (b, h) in diag.iter_mut().enumerate() {
            let occ: f64 = (0..n).map(|i| proj[i][k][b]).sum();
            let slack = c - occ;
            *h += -p.lambda1 * slack + p.lambda2 * slack * slack;
        }
    }
    Ok(diag)
}

/// Normalized `e^{−τH}|ψ₀⟩` by eigendecomposition.
pub fn exact_ite(h: &DenseOperator, initial: &DenseState, tau: f64) -> DenseState {
    let eig = h.eigen();
    let v = &eig.eigenvectors;
    let shift = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut coeffs = v.adjoint() * &initial.amps;
    for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= (-(lambda - shift) * tau).exp();
    }
    let amps = v * coeffs;
    let norm = amps.norm();
    DenseState { num_qudits: initial.num_qudits, dim: initial.dim, amps: amps / Complex64::new(norm, 0.0) }
}

/// Weight of `state` inside the eigenspace of `h` within `tol` of its
/// lowest eigenvalue.
pub fn ground_space_overlap(h: &DenseOperator, state: &DenseState, tol: f64) -> f64 {
    let eig = h.eigen();
    let e0 = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    eig.eigenvalues
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l - e0 <= tol)
        .map(|(col, _)| eig.eigenvectors.column(col).dotc(&state.amps).norm_sqr())
        .sum()
}

/// The coefficient system minimizing `‖(1 − iΔτG)ψ − (1 − ΔτH)ψ‖` over
/// real `a` for `G = Σ a_i G_i`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// `S_ij = ⟨G_i G_j⟩`.
    pub overlap: DMatrix<Complex64>,
    /// `b_j = −(i/2)⟨[G_j, H]⟩`, real for the states and generators used here.
    pub rhs: DVector<f64>,
    /// Least-squares solution of `Re(S)·a = b`.
    pub coefficients: Vec<f64>,
}

pub fn solve_linear_system(state: &DenseState, generators: &[DenseOperator], h: &DenseOperator) -> LinearSystem {
    let m = generators.len();
    let overlap = DMatrix::from_fn(m, m, |i, j| generators[i].product(&generators[j]).expectation(state));
    let rhs = DVector::from_fn(m, |j, _| {
        let c = generators[j].commutator(h).expectation(state);
        (Complex64::new(0.0, -0.5) * c).re
    });
    let real = overlap.map(|c| c.re);
    let svd = real.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max().max(1.0);
    let coefficients = svd.solve(&rhs, cutoff).expect("SVD computed with both factors").iter().copied().collect();
    LinearSystem { overlap, rhs, coefficients }
}

/// `‖(1 − iΔτG)ψ − (1 − ΔτH)ψ‖`.
pub fn residual_delta(state: &DenseState, g: &DenseOperator, h: &DenseOperator, delta_tau: f64) -> f64 {
    let lhs = &state.amps - (&g.matrix * &state.amps) * (I * delta_tau);
    let rhs = &state.amps - (&h.matrix * &state.amps) * Complex64::new(delta_tau, 0.0);
    (lhs - rhs).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    /// Minimizer of the penalized total cost (first in lexicographic order).
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    /// Minimizer of the cut cost among capacity-feasible assignments.
    pub feasible: Option<(Vec<usize>, f64)>,
}

/// Exhaustive scan over all `d^N` assignments.
pub fn brute_force_optimum(instance: &MinDCutInstance) -> Result<BruteForce> {
    let n = instance.num_vertices();
    let d = instance.num_partitions();
    hilbert_dim(n, d, MAX_BRUTE_FORCE)?;
    let mut labels = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut feasible: Option<(Vec<usize>, f64)> = None;
    loop {
        let total = instance.total_cost(&labels)?;
        if best.as_ref().is_none_or(|b| total < b.1) {
            best = Some((labels.clone(), total));
        }
        if instance.is_feasible(&labels)?.0 {
            let cut = instance.cut_cost(&labels)?;
            if feasible.as_ref().is_none_or(|b| cut < b.1) {
                feasible = Some((labels.clone(), cut));
            }
        }
        // odometer, last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (assignment, total_cost) = best.expect("at least one assignment");
                return Ok(BruteForce { assignment, total_cost, feasible });
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < d {
                break;
            }
            labels[pos] = 0;
        }
    }
}
