//! Real-amplitude product states of d-level qudits and the single-qudit
//! generator pool that acts on them.
//!
//! Every pool generator is `G_l = i·A_l` with `A_l` real antisymmetric, so
//! `exp(-i·a·Δτ·G_l) = exp(a·Δτ·A_l)` is a real orthogonal matrix and states
//! stay real for the whole evolution. Only the real factor `A_l` is stored.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-qudit norm tolerance accepted by [`ProductState::new`].
pub const NORM_TOLERANCE: f64 = 1e-10;

/// `N` qudits, each a unit vector of `d` real amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    num_qudits: usize,
    dim: usize,
    // row-major: qudit i occupies amps[i*dim..(i+1)*dim]
    amps: Vec<f64>,
}

fn check_dims(num_qudits: usize, dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("qudit dimension must be >= 2, got {dim}")));
    }
    if num_qudits < 1 {
        return Err(Error::InvalidDimension("need at least one qudit".into()));
    }
    Ok(())
}

impl ProductState {
    /// The symmetry-broken starting point: qudit 0 in `|0⟩`, every other
    /// qudit in the uniform superposition.
    pub fn uniform(num_qudits: usize, dim: usize) -> Result<Self> {
        check_dims(num_qudits, dim)?;
        let u = 1.0 / (dim as f64).sqrt();
        let mut amps = vec![u; num_qudits * dim];
        amps[..dim].fill(0.0);
        amps[0] = 1.0;
        Ok(Self { num_qudits, dim, amps })
    }

    /// [`uniform`](Self::uniform) with every free qudit's amplitudes shifted
    /// by independent draws from `[-noise, noise]` and renormalized. Qudit 0
    /// stays exactly on `|0⟩`.
    pub fn perturbed_uniform(num_qudits: usize, dim: usize, noise: f64, seed: u64) -> Result<Self> {
        if !(noise.is_finite() && (0.0..0.5).contains(&noise)) {
            return Err(Error::InvalidConfig(format!("initial noise must lie in [0, 0.5), got {noise}")));
        }
        let mut state = Self::uniform(num_qudits, dim)?;
        if noise == 0.0 {
            return Ok(state);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in state.amps.chunks_exact_mut(dim).skip(1) {
            v.iter_mut().for_each(|x| *x += rng.gen_range(-noise..=noise));
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(state)
    }

    /// Product of computational basis states.
    pub fn basis(dim: usize, labels: &[usize]) -> Result<Self> {
        check_dims(labels.len(), dim)?;
        let mut amps = vec![0.0; labels.len() * dim];
        for (i, &k) in labels.iter().enumerate() {
            if k >= dim {
                return Err(Error::LabelOutOfRange { position: i, label: k, d: dim });
            }
            amps[i * dim + k] = 1.0;
        }
        Ok(Self { num_qudits: labels.len(), dim, amps })
    }

    /// Builds a state from already-normalized qudit vectors.
    pub fn new(dim: usize, qudits: Vec<Vec<f64>>) -> Result<Self> {
        check_dims(qudits.len(), dim)?;
        let mut amps = Vec::with_capacity(qudits.len() * dim);
        for (i, v) in qudits.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("amplitude of qudit {i}")));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::InvalidDimension(format!("qudit {i} has norm {norm}, expected 1")));
            }
            amps.extend_from_slice(v);
        }
        Ok(Self { num_qudits: qudits.len(), dim, amps })
    }

    /// Like [`ProductState::new`] but rescales each vector to unit norm.
    pub fn normalized(dim: usize, mut qudits: Vec<Vec<f64>>) -> Result<Self> {
        for (i, v) in qudits.iter_mut().enumerate() {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::NonFinite(format!("qudit {i} has norm {norm}")));
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Self::new(dim, qudits)
    }

    pub fn num_qudits(&self) -> usize {
        self.num_qudits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn qudit(&self, i: usize) -> &[f64] {
        &self.amps[i * self.dim..(i + 1) * self.dim]
    }

    pub fn qudits(&self) -> impl Iterator<Item = &[f64]> {
        self.amps.chunks_exact(self.dim)
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amps
    }

    pub fn qudit_norm(&self, i: usize) -> f64 {
        self.qudit(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest deviation of any qudit norm from 1.
    pub fn max_norm_error(&self) -> f64 {
        (0..self.num_qudits)
            .map(|i| (self.qudit_norm(i) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Replaces qudit `qudit` by `exp(angle·A_l)·v` in place.
    pub fn rotate(&mut self, qudit: usize, op: &PoolOperator, angle: f64) -> Result<()> {
        if qudit >= self.num_qudits {
            return Err(Error::IndexOutOfRange { index: qudit, len: self.num_qudits });
        }
        if op.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: op.dim });
        }
        if !angle.is_finite() {
            return Err(Error::NonFinite(format!("rotation angle {angle}")));
        }
        let d = self.dim;
        let v = &mut self.amps[qudit * d..(qudit + 1) * d];
        op.rotate_in_place(v, angle);
        // exact in real arithmetic; strips the O(ε) bias sin/cos rounding
        // would otherwise accumulate over long runs
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(())
    }

    /// Relaxed rounding: each qudit goes to its most probable level,
    /// lowest level on ties.
    pub fn round(&self) -> Vec<usize> {
        self.qudits().map(argmax_probability).collect()
    }
}

fn argmax_probability(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_p = v[0] * v[0];
    for (k, &c) in v.iter().enumerate().skip(1) {
        let p = c * c;
        if p > best_p {
            best = k;
            best_p = p;
        }
    }
    best
}

/// Returns a copy of `state` with one qudit rotated by `exp(angle·A_l)`.
pub fn apply_generator_rotation(
    state: &ProductState,
    qudit: usize,
    op: &PoolOperator,
    angle: f64,
) -> Result<ProductState> {
    let mut out = state.clone();
    out.rotate(qudit, op, angle)?;
    Ok(out)
}

/// Relaxed rounding of every qudit.
pub fn round_state(state: &ProductState) -> Vec<usize> {
    state.round()
}

/// One pool generator `G_l = i·A_l`, coupling level `l` to every other
/// level with unit strength.
///
/// `A_l[j][l] = +1` and `A_l[l][j] = -1` for `j != l`; everything else is 0.
/// Equivalently `A_l = w·e_lᵀ − e_l·wᵀ` with `w = Σ_{j≠l} e_j`, a rank-2
/// matrix whose exponential is a plane rotation at angular rate `√(d−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolOperator {
    dim: usize,
    pivot: usize,
    antisym: Vec<f64>,
}

impl PoolOperator {
    pub fn new(dim: usize, pivot: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(format!("qudit dimension must be >= 2, got {dim}")));
        }
        if pivot >= dim {
            return Err(Error::IndexOutOfRange { index: pivot, len: dim });
        }
        let mut antisym = vec![0.0; dim * dim];
        for j in (0..dim).filter(|&j| j != pivot) {
            antisym[j * dim + pivot] = 1.0;
            antisym[pivot * dim + j] = -1.0;
        }
        Ok(Self { dim, pivot, antisym })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pivot_level(&self) -> usize {
        self.pivot
    }

    /// Row-major `d×d` real antisymmetric factor `A_l`.
    pub fn antisym(&self) -> &[f64] {
        &self.antisym
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.antisym[row * self.dim + col]
    }

    /// `A_l·v` in O(d).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let l = self.pivot;
        let rest: f64 = v.iter().sum::<f64>() - v[l];
        let mut out = vec![v[l]; self.dim];
        out[l] = -rest;
        out
    }

    /// `⟨v|G_l²|v⟩ = ‖A_l v‖² = (d−1)·v_l² + (Σ_{j≠l} v_j)²`.
    pub fn second_moment(&self, v: &[f64]) -> f64 {
        let l = self.pivot;
        let rest: f64 = v.iter().sum::<f64>() - v[l];
        (self.dim - 1) as f64 * v[l] * v[l] + rest * rest
    }

    /// `v ← exp(angle·A_l)·v` using the closed-form plane rotation.
    pub fn rotate_in_place(&self, v: &mut [f64], angle: f64) {
        let l = self.pivot;
        let root = ((self.dim - 1) as f64).sqrt();
        let alpha = v[l];
        let beta = (v.iter().sum::<f64>() - alpha) / root;
        let (s, c) = (root * angle).sin_cos();
        let new_alpha = alpha * c - beta * s;
        let new_beta = alpha * s + beta * c;
        let shift = (new_beta - beta) / root;
        for x in v.iter_mut() {
            *x += shift;
        }
        v[l] = new_alpha;
    }

    /// Dense `exp(angle·A_l)` via scaling and squaring; the reference path
    /// for the closed-form rotation.
    pub fn exp_matrix(&self, angle: f64) -> Vec<f64> {
        let scaled: Vec<f64> = self.antisym.iter().map(|a| a * angle).collect();
        expm_dense(&scaled, self.dim)
    }
}

/// The `d` pool generators `l = 0..d`, shared by every qudit.
pub fn build_pool(dim: usize) -> Result<Vec<PoolOperator>> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("qudit dimension must be >= 2, got {dim}")));
    }
    (0..dim).map(|l| PoolOperator::new(dim, l)).collect()
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Matrix exponential of a small dense row-major `n×n` matrix by scaling
/// and squaring with an 18-term Taylor series.
pub fn expm_dense(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n, "expm_dense: matrix is not {n}x{n}");
    let norm = (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = 0.5f64.powi(squarings as i32);
    let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();

    let mut result = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        result[i * n + i] = 1.0;
        term[i * n + i] = 1.0;
    }
    for k in 1..=18 {
        term = matmul(&term, &scaled, n);
        let inv = 1.0 / k as f64;
        term.iter_mut().for_each(|x| *x *= inv);
        result.iter_mut().zip(&term).for_each(|(r, t)| *r += t);
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
    }

    // plain truncated Taylor series, no scaling: only for small |θ|·‖A‖
    fn taylor_exp_apply(op: &PoolOperator, angle: f64, v: &[f64], terms: usize) -> Vec<f64> {
        let mut out = v.to_vec();
        let mut term = v.to_vec();
        for k in 1..=terms {
            term = op.apply(&term).into_iter().map(|x| x * angle / k as f64).collect();
            out.iter_mut().zip(&term).for_each(|(o, t)| *o += t);
        }
        out
    }

    #[test]
    fn uniform_state_single_qudit_is_basis() {
        let s = ProductState::uniform(1, 3).unwrap();
        assert_eq!(s.qudit(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_state_two_qubits() {
        let s = ProductState::uniform(2, 2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(s.qudit(0), &[1.0, 0.0]);
        assert!((s.qudit(1)[0] - h).abs() < 1e-15 && (s.qudit(1)[1] - h).abs() < 1e-15);
    }

    #[test]
    fn uniform_state_qutrits() {
        let s = ProductState::uniform(3, 3).unwrap();
        let u = 1.0 / 3f64.sqrt();
        for i in 1..3 {
            assert!(s.qudit(i).iter().all(|&x| (x - u).abs() < 1e-15));
        }
        assert!(s.max_norm_error() < 1e-12);
    }

    #[test]
    fn uniform_state_rejects_bad_dims() {
        assert!(matches!(ProductState::uniform(3, 1), Err(Error::InvalidDimension(_))));
        assert!(matches!(ProductState::uniform(0, 3), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn qutrit_pool_matches_reference_matrices() {
        let pool = build_pool(3).unwrap();
        let g0 = [0.0, -1.0, -1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let g1 = [0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0];
        let g2 = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0];
        assert_eq!(pool[0].antisym(), &g0);
        assert_eq!(pool[1].antisym(), &g1);
        assert_eq!(pool[2].antisym(), &g2);
    }

    #[test]
    fn qubit_pool_is_pauli_y() {
        // i·[[0,-1],[1,0]] = [[0,-i],[i,0]]
        let pool = build_pool(2).unwrap();
        assert_eq!(pool[0].antisym(), &[0.0, -1.0, 1.0, 0.0]);
        assert_eq!(pool[1].antisym(), &[0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn pool_is_antisymmetric() {
        for d in 2..8 {
            for op in build_pool(d).unwrap() {
                for r in 0..d {
                    for c in 0..d {
                        assert_eq!(op.entry(r, c), -op.entry(c, r));
                    }
                }
            }
        }
        assert!(build_pool(1).is_err());
    }

    #[test]
    fn zero_angle_is_identity() {
        let s = ProductState::normalized(3, vec![vec![0.3, -0.2, 0.9], vec![1.0, 1.0, 0.0]]).unwrap();
        let pool = build_pool(3).unwrap();
        let r = apply_generator_rotation(&s, 0, &pool[1], 0.0).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn quarter_turn_on_qubit() {
        let s = ProductState::basis(2, &[0]).unwrap();
        let pool = build_pool(2).unwrap();
        let angle = std::f64::consts::FRAC_PI_4;
        let r = apply_generator_rotation(&s, 0, &pool[0], angle).unwrap();
        let reference = taylor_exp_apply(&pool[0], angle, &[1.0, 0.0], 40);
        for (a, b) in r.qudit(0).iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = 1.0 / 2f64.sqrt();
        assert!((r.qudit(0)[0] - h).abs() < 1e-12 && (r.qudit(0)[1] - h).abs() < 1e-12);
    }

    #[test]
    fn rotation_errors() {
        let mut s = ProductState::uniform(2, 3).unwrap();
        let pool = build_pool(3).unwrap();
        assert!(matches!(s.rotate(2, &pool[0], 0.1), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(s.rotate(0, &pool[0], f64::NAN), Err(Error::NonFinite(_))));
        let other = build_pool(4).unwrap();
        assert!(matches!(s.rotate(0, &other[0], 0.1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn norm_does_not_drift() {
        let mut s = ProductState::normalized(5, vec![vec![0.1, 0.7, -0.3, 0.2, 0.5]]).unwrap();
        let pool = build_pool(5).unwrap();
        for step in 0..100_000 {
            let l = step % 5;
            s.rotate(0, &pool[l], 0.013 * ((step % 7) as f64 - 3.0)).unwrap();
        }
        assert!(s.max_norm_error() < 1e-12, "{}", s.max_norm_error());
    }

    #[test]
    fn perturbed_start() {
        let s = ProductState::perturbed_uniform(5, 4, 0.05, 9).unwrap();
        assert_eq!(s.qudit(0), &[1.0, 0.0, 0.0, 0.0]);
        assert!(s.max_norm_error() < 1e-14);
        assert_ne!(s.qudit(1), s.qudit(2));
        assert_eq!(s, ProductState::perturbed_uniform(5, 4, 0.05, 9).unwrap());
        assert_eq!(ProductState::perturbed_uniform(5, 4, 0.0, 9).unwrap(), ProductState::uniform(5, 4).unwrap());
        assert!(ProductState::perturbed_uniform(5, 4, 0.7, 9).is_err());
    }

    #[test]
    fn rounding_basics() {
        assert_eq!(ProductState::basis(3, &[0]).unwrap().round(), vec![0]);
        let s = ProductState::new(3, vec![vec![0.3, 0.9, (1.0f64 - 0.81 - 0.09).sqrt()]]).unwrap();
        assert_eq!(s.round(), vec![1]);
        let s = ProductState::uniform(3, 4).unwrap();
        assert_eq!(round_state(&s), vec![0, 0, 0]);
    }

    #[test]
    fn second_moment_formula() {
        let pool = build_pool(3).unwrap();
        let u = 1.0 / 3f64.sqrt();
        for op in &pool {
            assert!((op.second_moment(&[u, u, u]) - 2.0).abs() < 1e-14);
            let mut e = vec![0.0; 3];
            e[op.pivot_level()] = 1.0;
            assert_eq!(op.second_moment(&e), 2.0);
        }
        // orthogonal to e_0 and w = e_1 + e_2
        let v = [0.0, 1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
        assert!(pool[0].second_moment(&v).abs() < 1e-15);
    }

    fn unit_vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, d).prop_filter_map("zero vector", |v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n > 1e-3).then(|| v.into_iter().map(|x| x / n).collect())
        })
    }

    proptest! {
        #[test]
        fn closed_form_matches_dense_exponential(
            (d, v) in (2usize..8).prop_flat_map(|d| (Just(d), unit_vector(d))),
            l in 0usize..8,
            angle in -10.0f64..10.0,
        ) {
            let op = PoolOperator::new(d, l % d).unwrap();
            let mut fast = v.clone();
            op.rotate_in_place(&mut fast, angle);
            let dense = matvec(&op.exp_matrix(angle), &v);
            for (a, b) in fast.iter().zip(&dense) {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            let norm = fast.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }

        #[test]
        fn forward_then_backward_is_identity(d in 2usize..8, l in 0usize..8, angle in -10.0f64..10.0) {
            let op = PoolOperator::new(d, l % d).unwrap();
            let fwd = op.exp_matrix(angle);
            let back = op.exp_matrix(-angle);
            let prod = matmul(&fwd, &back, d);
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod[i * d + j] - expect).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn rounding_ignores_sign_flips(
            (d, v) in (2usize..6).prop_flat_map(|d| (Just(d), unit_vector(d))),
        ) {
            let flipped: Vec<f64> = v.iter().map(|x| -x).collect();
            let a = ProductState::new(d, vec![v]).unwrap();
            let b = ProductState::new(d, vec![flipped]).unwrap();
            prop_assert_eq!(a.round(), b.round());
        }
    }
}
