//! Gaussian-state toolbox in shot-noise units.
//!
//! States are stored as a mean vector and covariance matrix (CM) with the
//! quadrature ordering `(q1, p1, q2, p2, ...)`. Vacuum has CM `I`, and a
//! coherent state of amplitude `alpha` has mean `q = 2 Re alpha`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symplectic eigenvalues below this are treated as unphysical.
const PHYSICAL_TOL: f64 = 1e-9;
/// Pseudoinverse floor for the measured quadrature variance.
const HOMODYNE_FLOOR: f64 = 1e-14;
/// Diagonal jitter applied when a Cholesky factorization fails.
const CHOLESKY_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Q,
    P,
}

impl Quadrature {
    fn offset(self) -> usize {
        match self {
            Quadrature::Q => 0,
            Quadrature::P => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cm: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state from a mean and CM, symmetrizing the CM and checking
    /// that it is physical.
    pub fn new(mean: DVector<f64>, cm: DMatrix<f64>) -> Result<Self> {
        if cm.nrows() != cm.ncols() || cm.nrows() % 2 != 0 || cm.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "covariance matrix must be square with even positive dimension, got {}x{}",
                cm.nrows(),
                cm.ncols()
            )));
        }
        if mean.len() != cm.nrows() {
            return Err(Error::InvalidArgument(format!(
                "mean has length {} but CM is {}x{}",
                mean.len(),
                cm.nrows(),
                cm.ncols()
            )));
        }
        let cm = symmetrize(&cm);
        let nu = symplectic_eigenvalues_raw(&cm)?;
        if let Some(bad) = nu.iter().find(|&&v| v < 1.0 - PHYSICAL_TOL) {
            return Err(Error::InvalidState(format!(
                "symplectic eigenvalue {bad} below vacuum level"
            )));
        }
        Ok(Self { mean, cm })
    }

    /// Internal constructor for results of operations that preserve
    /// physicality.
    pub(crate) fn from_parts(mean: DVector<f64>, cm: DMatrix<f64>) -> Self {
        Self { mean, cm }
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self::from_parts(
            DVector::zeros(2 * n_modes),
            DMatrix::identity(2 * n_modes, 2 * n_modes),
        )
    }

    /// Coherent state with quadrature means `(q, p)`.
    pub fn coherent(q: f64, p: f64) -> Self {
        Self::from_parts(DVector::from_vec(vec![q, p]), DMatrix::identity(2, 2))
    }

    pub fn thermal(variance: f64) -> Result<Self> {
        if !(variance >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "thermal variance must be >= 1, got {variance}"
            )));
        }
        Ok(Self::from_parts(
            DVector::zeros(2),
            DMatrix::identity(2, 2) * variance,
        ))
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cm(&self) -> &DMatrix<f64> {
        &self.cm
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cm)
    }

    /// Direct sum `self ⊕ other`; the modes of `other` follow those of
    /// `self`.
    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let n = self.mean.len();
        let m = other.mean.len();
        let mut mean = DVector::zeros(n + m);
        mean.rows_mut(0, n).copy_from(&self.mean);
        mean.rows_mut(n, m).copy_from(&other.mean);
        let mut cm = DMatrix::zeros(n + m, n + m);
        cm.view_mut((0, 0), (n, n)).copy_from(&self.cm);
        cm.view_mut((n, n), (m, m)).copy_from(&other.cm);
        GaussianState::from_parts(mean, cm)
    }

    /// Smallest symplectic eigenvalue is at least one, within tolerance.
    pub fn is_physical(&self) -> bool {
        symplectic_eigenvalues_raw(&self.cm)
            .map(|nu| nu.iter().all(|&v| v >= 1.0 - PHYSICAL_TOL))
            .unwrap_or(false)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(Error::InvalidArgument(format!(
                "mode index {mode} out of range for a {}-mode state",
                self.n_modes()
            )));
        }
        Ok(())
    }
}

/// Two-mode squeezed vacuum with local variance `mu`.
pub fn tmsv_state(mu: f64) -> Result<GaussianState> {
    if !(mu >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "TMSV variance must be >= 1, got {mu}"
        )));
    }
    let c = (mu * mu - 1.0).sqrt();
    let mut cm = DMatrix::identity(4, 4) * mu;
    cm[(0, 2)] = c;
    cm[(2, 0)] = c;
    cm[(1, 3)] = -c;
    cm[(3, 1)] = -c;
    Ok(GaussianState::from_parts(DVector::zeros(4), cm))
}

/// Beam splitter of transmissivity `t` between modes `i` and `j`:
/// `i -> sqrt(t) i + sqrt(1-t) j`, `j -> -sqrt(1-t) i + sqrt(t) j`.
pub fn beam_splitter(state: &GaussianState, i: usize, j: usize, t: f64) -> Result<GaussianState> {
    state.check_mode(i)?;
    state.check_mode(j)?;
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "beam splitter needs two distinct modes, got {i} twice"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "transmissivity must lie in [0, 1], got {t}"
        )));
    }
    let st = t.sqrt();
    let sr = (1.0 - t).sqrt();
    let mut mean = state.mean.clone();
    let mut cm = state.cm.clone();
    let dim = cm.nrows();
    for quad in 0..2 {
        let a = 2 * i + quad;
        let b = 2 * j + quad;
        let (xa, xb) = (mean[a], mean[b]);
        mean[a] = st * xa + sr * xb;
        mean[b] = -sr * xa + st * xb;
        // rows, then columns: V -> S V S^T
        for col in 0..dim {
            let (va, vb) = (cm[(a, col)], cm[(b, col)]);
            cm[(a, col)] = st * va + sr * vb;
            cm[(b, col)] = -sr * va + st * vb;
        }
        for row in 0..dim {
            let (va, vb) = (cm[(row, a)], cm[(row, b)]);
            cm[(row, a)] = st * va + sr * vb;
            cm[(row, b)] = -sr * va + st * vb;
        }
    }
    Ok(GaussianState::from_parts(mean, cm))
}

/// Result of a homodyne measurement: the conditional state of the remaining
/// modes and the probability density of the observed outcome.
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub state: GaussianState,
    pub density: f64,
}

/// Measures `quad` of `mode` with outcome `outcome` and returns the
/// conditional state of all other modes (order preserved). Measuring the
/// only mode of a state leaves an empty state.
pub fn condition_homodyne(
    state: &GaussianState,
    mode: usize,
    quad: Quadrature,
    outcome: f64,
) -> Result<Conditioned> {
    state.check_mode(mode)?;
    let k = 2 * mode + quad.offset();
    let var = state.cm[(k, k)];
    if !(var > 0.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "measured quadrature variance {var} is not positive"
        )));
    }
    let rest: Vec<usize> = (0..state.mean.len())
        .filter(|&r| r / 2 != mode)
        .collect();
    let inv = 1.0 / var.max(HOMODYNE_FLOOR);
    let shift = outcome - state.mean[k];
    let n = rest.len();
    let mut mean = DVector::zeros(n);
    let mut cm = DMatrix::zeros(n, n);
    for (r, &ri) in rest.iter().enumerate() {
        mean[r] = state.mean[ri] + state.cm[(ri, k)] * inv * shift;
        for (c, &ci) in rest.iter().enumerate() {
            cm[(r, c)] = state.cm[(ri, ci)] - state.cm[(ri, k)] * inv * state.cm[(k, ci)];
        }
    }
    let density = normal_density(shift, var);
    Ok(Conditioned {
        state: GaussianState::from_parts(mean, symmetrize(&cm)),
        density,
    })
}

/// Marginal density of measuring `quad` of `mode` with the given outcome.
pub fn homodyne_density(state: &GaussianState, mode: usize, quad: Quadrature, outcome: f64) -> Result<f64> {
    state.check_mode(mode)?;
    let k = 2 * mode + quad.offset();
    let var = state.cm[(k, k)];
    if !(var > 0.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "measured quadrature variance {var} is not positive"
        )));
    }
    Ok(normal_density(outcome - state.mean[k], var))
}

/// Reduced state on `keep`, in the given order.
pub fn partial_trace(state: &GaussianState, keep: &[usize]) -> Result<GaussianState> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep list is empty".into()));
    }
    for (n, &m) in keep.iter().enumerate() {
        state.check_mode(m)?;
        if keep[..n].contains(&m) {
            return Err(Error::InvalidArgument(format!(
                "mode {m} listed twice in keep list"
            )));
        }
    }
    let idx: Vec<usize> = keep.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
    let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| state.mean[i]));
    let cm = DMatrix::from_fn(idx.len(), idx.len(), |r, c| state.cm[(idx[r], idx[c])]);
    Ok(GaussianState::from_parts(mean, cm))
}

/// Standard symplectic form for `n` modes in `(q1, p1, ...)` ordering.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for m in 0..n_modes {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues of a CM, ascending, each clamped to at least 1.
pub fn symplectic_eigenvalues(cm: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(cm)?;
    let mut nu = symplectic_eigenvalues_raw(cm)?;
    for v in nu.iter_mut() {
        *v = v.max(1.0);
    }
    Ok(nu)
}

/// Unclamped symplectic eigenvalues via `L^T Ω^T V Ω L` with `V = L L^T`.
fn symplectic_eigenvalues_raw(cm: &DMatrix<f64>) -> Result<Vec<f64>> {
    let dim = cm.nrows();
    if dim != cm.ncols() || dim % 2 != 0 || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "CM must be square with even positive dimension, got {}x{}",
            cm.nrows(),
            cm.ncols()
        )));
    }
    if dim == 2 {
        let det = cm[(0, 0)] * cm[(1, 1)] - cm[(0, 1)] * cm[(1, 0)];
        if !(det > 0.0) {
            return Err(Error::InvalidState(format!(
                "single-mode CM has non-positive determinant {det}"
            )));
        }
        return Ok(vec![det.sqrt()]);
    }
    let l = cholesky_with_jitter(cm)?;
    let omega = symplectic_form(dim / 2);
    let k = l.transpose() * &omega * &l;
    let gram = k.transpose() * &k;
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev
        .chunks(2)
        .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
        .collect())
}

/// `h(ν)` in bits; zero at and below the vacuum level.
pub fn entropy_function(nu: f64) -> f64 {
    if nu <= 1.0 + 1e-12 {
        return 0.0;
    }
    let plus = 0.5 * (nu + 1.0);
    let minus = 0.5 * (nu - 1.0);
    plus * plus.log2() - minus * minus.log2()
}

/// Von Neumann entropy (bits) of the Gaussian state with this CM.
pub fn gaussian_entropy(cm: &DMatrix<f64>) -> Result<f64> {
    Ok(symplectic_eigenvalues(cm)?.into_iter().map(entropy_function).sum())
}

/// `tr(ρ1 ρ2) = exp[-¼ Δᵀ V⁻¹ Δ]` for two pure Gaussian states sharing the
/// CM `cm` with means `mean1`, `mean2`.
pub fn pure_overlap_same_cm(mean1: &DVector<f64>, mean2: &DVector<f64>, cm: &DMatrix<f64>) -> Result<f64> {
    if mean1.len() != mean2.len() || mean1.len() != cm.nrows() || cm.nrows() != cm.ncols() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: means {} and {}, CM {}x{}",
            mean1.len(),
            mean2.len(),
            cm.nrows(),
            cm.ncols()
        )));
    }
    let delta = mean1 - mean2;
    Ok((-0.25 * quadratic_form_inverse(cm, &delta)?).exp())
}

/// `dᵀ V⁻¹ d` through a Cholesky solve.
pub(crate) fn quadratic_form_inverse(cm: &DMatrix<f64>, d: &DVector<f64>) -> Result<f64> {
    let l = cholesky_with_jitter(cm)?;
    let y = l
        .solve_lower_triangular(d)
        .ok_or_else(|| Error::NumericalDegeneracy("singular Cholesky factor".into()))?;
    Ok(y.norm_squared())
}

/// Binary Shannon entropy in bits; inputs within 1e-12 of [0, 1] are clamped.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(p >= -1e-12 && p <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(binary_entropy_clamped(p))
}

/// Binary entropy without range checking; `p` is clamped to [0, 1].
#[inline]
pub(crate) fn binary_entropy_clamped(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let q = 1.0 - p;
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if q > 0.0 {
        h -= q * q.log2();
    }
    h
}

#[inline]
pub(crate) fn normal_density(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(cm: &DMatrix<f64>) -> Result<()> {
    if cm.nrows() != cm.ncols() {
        return Err(Error::InvalidArgument(format!(
            "CM is not square: {}x{}",
            cm.nrows(),
            cm.ncols()
        )));
    }
    let scale = cm.amax().max(1.0);
    let asym = (cm - cm.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!(
            "CM is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

pub(crate) fn cholesky_with_jitter(cm: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cm.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = cm.nrows();
    let jittered = cm + DMatrix::<f64>::identity(n, n) * CHOLESKY_JITTER;
    jittered
        .cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::NumericalDegeneracy("matrix is not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tmsv_blocks() {
        let s = tmsv_state(1.0).unwrap();
        assert_eq!(s.cm(), &DMatrix::<f64>::identity(4, 4));
        let s = tmsv_state(2.0).unwrap();
        assert!(close(s.cm()[(0, 2)], 1.7320508, 1e-7));
        assert!(close(s.cm()[(1, 3)], -1.7320508, 1e-7));
        for mu in [1.0, 2.0, 5.0, 40.0] {
            let nu = symplectic_eigenvalues(tmsv_state(mu).unwrap().cm()).unwrap();
            assert!(nu.iter().all(|&v| close(v, 1.0, 1e-9)), "{nu:?}");
        }
        assert!(matches!(tmsv_state(0.5), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn beam_splitter_limits() {
        let s = GaussianState::coherent(1.5, -0.5).tensor(&GaussianState::thermal(3.0).unwrap());
        let same = beam_splitter(&s, 0, 1, 1.0).unwrap();
        assert!((same.cm() - s.cm()).amax() < 1e-15);
        assert!((same.mean() - s.mean()).amax() < 1e-15);

        let swapped = beam_splitter(&s, 0, 1, 0.0).unwrap();
        // mode 0 receives mode 1, mode 1 receives -mode 0
        assert!(close(swapped.cm()[(0, 0)], 3.0, 1e-15));
        assert!(close(swapped.cm()[(2, 2)], 1.0, 1e-15));
        assert!(close(swapped.mean()[2], -1.5, 1e-15));
        assert!(close(swapped.mean()[3], 0.5, 1e-15));

        let vac = GaussianState::vacuum(2);
        for t in [0.0, 0.3, 0.5, 0.9] {
            let out = beam_splitter(&vac, 0, 1, t).unwrap();
            assert!((out.cm() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
        }
        assert!(beam_splitter(&vac, 0, 0, 0.5).is_err());
        assert!(beam_splitter(&vac, 0, 2, 0.5).is_err());
        assert!(beam_splitter(&vac, 0, 1, 1.5).is_err());
    }

    #[test]
    fn homodyne_on_vacuum_and_tmsv() {
        let c = condition_homodyne(&GaussianState::vacuum(1), 0, Quadrature::Q, 0.0).unwrap();
        assert!(close(c.density, 1.0 / (2.0 * std::f64::consts::PI).sqrt(), 1e-15));
        assert_eq!(c.state.n_modes(), 0);

        let mu = 3.7;
        let c = condition_homodyne(&tmsv_state(mu).unwrap(), 0, Quadrature::Q, 0.8).unwrap();
        assert!(close(c.state.cm()[(0, 0)], 1.0 / mu, 1e-12));
        assert!(close(c.state.cm()[(1, 1)], mu, 1e-12));
        assert!(close(c.density, normal_density(0.8, mu), 1e-15));
    }

    #[test]
    fn homodyne_product_state_leaves_other_factor() {
        let other = GaussianState::thermal(2.5).unwrap();
        let s = GaussianState::coherent(0.3, 0.1).tensor(&other);
        let c = condition_homodyne(&s, 0, Quadrature::P, -0.4).unwrap();
        assert!((c.state.cm() - other.cm()).amax() < 1e-15);
        assert!((c.state.mean() - other.mean()).amax() < 1e-15);
    }

    #[test]
    fn homodyne_degenerate_variance() {
        let s = GaussianState::from_parts(DVector::zeros(4), DMatrix::zeros(4, 4));
        assert!(matches!(
            condition_homodyne(&s, 0, Quadrature::Q, 0.0),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn partial_trace_cases() {
        let s = tmsv_state(4.0).unwrap();
        let all = partial_trace(&s, &[0, 1]).unwrap();
        assert_eq!(all, s);
        let one = partial_trace(&s, &[1]).unwrap();
        assert!((one.cm() - DMatrix::<f64>::identity(2, 2) * 4.0).amax() < 1e-15);

        let t = GaussianState::coherent(1.0, 2.0).tensor(&GaussianState::thermal(3.0).unwrap());
        let swapped = partial_trace(&t, &[1, 0]).unwrap();
        assert_eq!(swapped.mean().as_slice(), &[0.0, 0.0, 1.0, 2.0]);
        assert!(close(swapped.cm()[(0, 0)], 3.0, 0.0));
        assert!(close(swapped.cm()[(2, 2)], 1.0, 0.0));

        assert!(partial_trace(&s, &[]).is_err());
        assert!(partial_trace(&s, &[1, 1]).is_err());
        assert!(partial_trace(&s, &[2]).is_err());
    }

    #[test]
    fn symplectic_eigenvalue_examples() {
        let nu = symplectic_eigenvalues(&DMatrix::identity(6, 6)).unwrap();
        assert!(nu.iter().all(|&v| close(v, 1.0, 1e-12)));
        let nu = symplectic_eigenvalues(&(DMatrix::identity(2, 2) * 3.0)).unwrap();
        assert!(close(nu[0], 3.0, 1e-12));
        let nu = symplectic_eigenvalues(tmsv_state(5.0).unwrap().cm()).unwrap();
        assert!(nu.iter().all(|&v| close(v, 1.0, 1e-9)));

        let mut bad = DMatrix::identity(2, 2);
        bad[(0, 1)] = 0.5;
        assert!(matches!(symplectic_eigenvalues(&bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(gaussian_entropy(&DMatrix::identity(4, 4)).unwrap(), 0.0);
        assert!(close(gaussian_entropy(&(DMatrix::identity(2, 2) * 3.0)).unwrap(), 2.0, 1e-12));
        for mu in [1.5, 10.0] {
            assert!(gaussian_entropy(tmsv_state(mu).unwrap().cm()).unwrap() < 1e-7);
        }
    }

    #[test]
    fn overlap_examples() {
        let cm = DMatrix::identity(2, 2);
        let a = DVector::from_vec(vec![2.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 0.0]);
        assert!(close(pure_overlap_same_cm(&a, &a, &cm).unwrap(), 1.0, 0.0));
        assert!(close(pure_overlap_same_cm(&a, &b, &cm).unwrap(), 0.3678794, 1e-7));
        assert_eq!(
            pure_overlap_same_cm(&a, &b, &cm).unwrap(),
            pure_overlap_same_cm(&b, &a, &cm).unwrap()
        );
        assert!(pure_overlap_same_cm(&a, &DVector::zeros(4), &cm).is_err());
    }

    #[test]
    fn binary_entropy_examples() {
        assert!(close(binary_entropy(0.5).unwrap(), 1.0, 1e-15));
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0 + 1e-13).unwrap(), 0.0);
        assert!(close(binary_entropy(0.25).unwrap(), 0.8112781, 1e-7));
        assert!(binary_entropy(1.1).is_err());
        assert!(binary_entropy(-0.01).is_err());
    }

    #[test]
    fn new_rejects_unphysical() {
        let cm = DMatrix::identity(2, 2) * 0.5;
        assert!(matches!(
            GaussianState::new(DVector::zeros(2), cm),
            Err(Error::InvalidState(_))
        ));
        assert!(GaussianState::new(DVector::zeros(4), DMatrix::identity(2, 2)).is_err());
        let mut asym = DMatrix::identity(2, 2) * 2.0;
        asym[(0, 1)] = 0.1;
        let s = GaussianState::new(DVector::zeros(2), asym).unwrap();
        assert_eq!(s.cm()[(0, 1)], s.cm()[(1, 0)]);
    }
}
