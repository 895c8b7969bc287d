//! Single-point information quantities and the single-point rate.
//!
//! Complete scenario: Eve's state for signs `(κ, β̃)` is `|κ⟩ ⊗ |β̃⟩` with
//! `|κ⟩ = c₀|0⟩ + κ c₁|1⟩` and `|β̃⟩ = c₊|+⟩ + β̃ c₋|−⟩` in orthonormal
//! bases, where `A = ⟨+κ|−κ⟩ = c₀² − c₁²` and likewise for `B`. Phases are
//! dropped, so every matrix below is real.
//!
//! Restricted scenarios: Eve's conditional CM `V` is fixed, and the two
//! `κ` hypotheses differ only by the mean shift `𝔸 d`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{
    binary_entropy_clamped, cholesky_with_jitter, entropy_function, gaussian_entropy,
    quadratic_form_inverse, symplectic_form,
};
use crate::linalg::sym_eigenvalues4;
use crate::probability::{CondSignProbs, PSPoint, Sign, SignKinematics};
use crate::protocol::{
    eve_state_complete, eve_state_restricted, noise_for, BetaMode, DerivedNoise, DetectorModel,
    ProtocolParams, Scenario,
};

const EIG_CLAMP: f64 = 1e-10;
/// Single-point rates this small are indistinguishable from the round-off
/// of the entropy differences and are not post-selected.
pub const SELECTION_FLOOR: f64 = 1e-12;

/// Overlaps and the squared basis coefficients derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapCoeffs {
    pub ov_a: f64,
    pub ov_b: f64,
    pub c0sq: f64,
    pub c1sq: f64,
    pub cpsq: f64,
    pub cmsq: f64,
}

impl OverlapCoeffs {
    pub fn from_overlaps(ov_a: f64, ov_b: f64) -> Self {
        Self {
            ov_a,
            ov_b,
            c0sq: 0.5 * (1.0 + ov_a),
            c1sq: 0.5 * (1.0 - ov_a),
            cpsq: 0.5 * (1.0 + ov_b),
            cmsq: 0.5 * (1.0 - ov_b),
        }
    }
}

/// Per-unit-amplitude overlap exponents: `A = exp(−½ 𝔸² e_a)`,
/// `B = exp(−½ 𝔹² e_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapExponents {
    pub e_a: f64,
    pub e_b: f64,
}

impl OverlapExponents {
    pub fn coeffs(&self, amp_a: f64, amp_b: f64) -> OverlapCoeffs {
        OverlapCoeffs::from_overlaps(
            (-0.5 * amp_a * amp_a * self.e_a).exp(),
            (-0.5 * amp_b * amp_b * self.e_b).exp(),
        )
    }
}

/// Closed forms `1 − ητ/υ` for untrusted and absorbed detectors. Trusted
/// detectors leave Eve with a mixed state; there the exponents are read off
/// the toolbox states as `¼ dᵀV⁻¹d` for the unit-amplitude mean difference.
pub fn overlap_exponents(params: &ProtocolParams, dn: &DerivedNoise) -> Result<OverlapExponents> {
    let (e_a, e_b) = match params.detector_model {
        DetectorModel::Trusted => {
            let da = eve_state_complete(params, Sign::Plus, Sign::Plus, 1.0, 0.0, 0.0)?;
            let da_m = eve_state_complete(params, Sign::Minus, Sign::Plus, 1.0, 0.0, 0.0)?;
            let db_m = eve_state_complete(params, Sign::Plus, Sign::Minus, 0.0, 1.0, 0.0)?;
            let db = eve_state_complete(params, Sign::Plus, Sign::Plus, 0.0, 1.0, 0.0)?;
            let ea = 0.25 * quadratic_form_inverse(da.cm(), &(da.mean() - da_m.mean()))?;
            let eb = 0.25 * quadratic_form_inverse(db.cm(), &(db.mean() - db_m.mean()))?;
            (ea, eb)
        }
        DetectorModel::Untrusted | DetectorModel::Absorbed => {
            let p = params.effective();
            (1.0 - p.eta * p.tau_a / dn.upsilon, 1.0 - p.eta * p.tau_b / dn.upsilon)
        }
    };
    for (name, e) in [("A", e_a), ("B", e_b)] {
        if e < -1e-12 {
            return Err(Error::InvalidState(format!(
                "overlap exponent for {name} is negative ({e}); υ below ητ"
            )));
        }
    }
    Ok(OverlapExponents { e_a: e_a.max(0.0), e_b: e_b.max(0.0) })
}

pub fn overlap_coeffs(point: &PSPoint, dn: &DerivedNoise, params: &ProtocolParams) -> Result<OverlapCoeffs> {
    Ok(overlap_exponents(params, dn)?.coeffs(point.amp_a, point.amp_b))
}

/// Diagonal scaling `D = diag(c₀c₊, c₀c₋, c₁c₊, c₁c₋)` of the `{0+, 0−, 1+, 1−}` basis.
fn basis_scale(c: &OverlapCoeffs) -> [f64; 4] {
    [
        (c.c0sq * c.cpsq).sqrt(),
        (c.c0sq * c.cmsq).sqrt(),
        (c.c1sq * c.cpsq).sqrt(),
        (c.c1sq * c.cmsq).sqrt(),
    ]
}

fn check_probs(p: &[[f64; 2]; 2]) -> Result<()> {
    let total: f64 = p.iter().flatten().sum();
    if p.iter().flatten().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("sign probabilities {p:?} do not sum to 1")));
    }
    Ok(())
}

/// `ρ = D M D` with `M_{(a,b),(a',b')} = Σ p_{κβ̃} κ^{a+a'} β̃^{b+b'}`.
fn total_matrix_unchecked(c: &OverlapCoeffs, joint: &[[f64; 2]; 2]) -> [[f64; 4]; 4] {
    // Σ p κ^i β̃^j for parities i, j
    let mut moments = [[0.0; 2]; 2];
    for (ik, k) in [1.0, -1.0].into_iter().enumerate() {
        for (ib, b) in [1.0, -1.0].into_iter().enumerate() {
            let p = joint[ik][ib];
            moments[0][0] += p;
            moments[1][0] += k * p;
            moments[0][1] += b * p;
            moments[1][1] += k * b * p;
        }
    }
    let d = basis_scale(c);
    let mut rho = [[0.0; 4]; 4];
    for r in 0..4 {
        for s in 0..4 {
            let (a, b) = (r >> 1, r & 1);
            let (a2, b2) = (s >> 1, s & 1);
            rho[r][s] = d[r] * d[s] * moments[(a + a2) & 1][(b + b2) & 1];
        }
    }
    rho
}

/// Eve's total state in the `{0+, 0−, 1+, 1−}` expansion; `joint` is
/// `p(κβ̃|𝔸𝔹γ)` as `[κ][β̃]`.
pub fn eve_total_matrix(coeffs: &OverlapCoeffs, joint: &[[f64; 2]; 2]) -> Result<[[f64; 4]; 4]> {
    check_probs(joint)?;
    let rho = total_matrix_unchecked(coeffs, joint);
    let trace: f64 = (0..4).map(|i| rho[i][i]).sum();
    if (trace - 1.0).abs() > 1e-9 {
        return Err(Error::Internal(format!("total matrix trace {trace} != 1")));
    }
    Ok(rho)
}

/// Eve's state given `κ`; `p_bsign` is `p(β̃|κ𝔸𝔹γ)`.
pub fn eve_conditional_matrix(coeffs: &OverlapCoeffs, kappa: Sign, p_bsign: [f64; 2]) -> Result<[[f64; 4]; 4]> {
    let mut joint = [[0.0; 2]; 2];
    joint[kappa.index()] = p_bsign;
    eve_total_matrix(coeffs, &joint)
}

/// Non-zero eigenvalues `½(1 ± √(1 − 16 p₊ p₋ c₊² c₋²))` of the conditional state.
pub fn conditional_eigenvalues(coeffs: &OverlapCoeffs, p_bsign: [f64; 2]) -> [f64; 2] {
    let disc = (1.0 - 16.0 * p_bsign[0] * p_bsign[1] * coeffs.cpsq * coeffs.cmsq).max(0.0);
    let root = disc.sqrt();
    [0.5 * (1.0 + root), 0.5 * (1.0 - root)]
}

/// Shannon entropy (bits) of a spectrum after clamping and renormalizing.
pub fn spectrum_entropy(eigenvalues: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &v in eigenvalues {
        if v < -EIG_CLAMP || !v.is_finite() {
            return Err(Error::Internal(format!("eigenvalue {v} is not a probability")));
        }
        total += v.max(0.0);
    }
    if total <= 0.0 {
        return Err(Error::Internal("spectrum has zero weight".into()));
    }
    Ok(eigenvalues
        .iter()
        .map(|&v| {
            let x = (v.max(0.0) / total).min(1.0);
            if x > 0.0 {
                -x * x.log2()
            } else {
                0.0
            }
        })
        .sum())
}

/// `χ̃` from overlap coefficients and the sign posteriors.
pub(crate) fn holevo_complete_from(c: &OverlapCoeffs, probs: &CondSignProbs) -> Result<f64> {
    let total = spectrum_entropy(&sym_eigenvalues4(total_matrix_unchecked(c, &probs.joint)))?;
    let mut conditional = 0.0;
    for k in 0..2 {
        if probs.kappa[k] > 0.0 {
            let lam = conditional_eigenvalues(c, probs.bsign_given_kappa[k]);
            conditional += probs.kappa[k] * (binary_entropy_clamped(lam[0]));
        }
    }
    Ok((total - conditional).max(0.0))
}

/// `Ĩ_AB = H₂(p(+|𝔸𝔹γ)) − Σ_β̃ p(β̃|𝔸𝔹γ) H₂(p(+|β̃𝔸𝔹γ))`, clamped to `[0, 1]`.
pub(crate) fn mutual_info_from(probs: &CondSignProbs) -> f64 {
    let mut i = binary_entropy_clamped(probs.kappa[0]);
    for b in 0..2 {
        i -= probs.bsign[b] * binary_entropy_clamped(probs.kappa_given_bsign[b][0]);
    }
    i.clamp(0.0, 1.0)
}

/// `V + p₊ p₋ Δx̄ Δx̄ᵀ` with `Δx̄ = x̄₊ − x̄₋`.
pub fn mixture_cm_inflation(
    cm: &DMatrix<f64>,
    mean_plus: &DVector<f64>,
    mean_minus: &DVector<f64>,
    p_plus: f64,
) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&p_plus) {
        return Err(Error::InvalidArgument(format!("p_plus = {p_plus} outside [0, 1]")));
    }
    if mean_plus.len() != cm.nrows() || mean_minus.len() != cm.nrows() || !cm.is_square() {
        return Err(Error::InvalidArgument("dimension mismatch in mixture inflation".into()));
    }
    let d = mean_plus - mean_minus;
    Ok(cm + (&d * d.transpose()) * (p_plus * (1.0 - p_plus)))
}

/// `1 − H₂(F₋)` with `F₋ = (1 − √(1 − F))/2`; `one_minus_f` is passed
/// separately to keep precision when `F → 1`.
pub(crate) fn iae_from_fidelity(one_minus_f: f64) -> f64 {
    let f_minus = 0.5 * (1.0 - one_minus_f.clamp(0.0, 1.0).sqrt());
    (1.0 - binary_entropy_clamped(f_minus)).max(0.0)
}

/// `S(V + c ddᵀ) − S(V)` as a function of `c ≥ 0`.
///
/// With `V = L Lᵀ`, `K = Lᵀ Ω L` and `e = L⁻¹ d`, the squared symplectic
/// eigenvalues of the update are the roots `s'` of
/// `1 + c Σ_k s_k Q_k / (s_k − s') = 0`, where `s_k` are the distinct
/// eigenvalues of `KᵀK` and `Q_k` the squared projections of `e` onto their
/// eigenspaces. Each group with `Q_k > 0` releases one mode to a root in
/// `(s_k, s_{k+1})`; the others keep their eigenvalue.
#[derive(Debug, Clone)]
pub(crate) struct RankOneEntropy {
    /// `(s_k, s_k Q_k)` for groups with non-zero weight, `s_k` ascending.
    poles: Vec<(f64, f64)>,
}

impl RankOneEntropy {
    pub(crate) fn new(cm: &DMatrix<f64>, d: &DVector<f64>) -> Result<Self> {
        let n = cm.nrows();
        if d.len() != n || n % 2 != 0 {
            return Err(Error::InvalidArgument("dimension mismatch in rank-one entropy".into()));
        }
        let l = cholesky_with_jitter(cm)?;
        let k = l.transpose() * symplectic_form(n / 2) * &l;
        let e = l
            .solve_lower_triangular(d)
            .ok_or_else(|| Error::NumericalDegeneracy("singular Cholesky factor".into()))?;
        let eig = nalgebra::SymmetricEigen::new(k.transpose() * &k);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let total_q = e.norm_squared();
        let mut groups: Vec<(f64, f64, usize)> = Vec::new();
        for &j in &order {
            let s = eig.eigenvalues[j];
            let q = eig.eigenvectors.column(j).dot(&e).powi(2);
            match groups.last_mut() {
                Some((s0, q0, m)) if (s - *s0 / *m as f64).abs() <= 1e-9 * s.abs().max(1.0) => {
                    *s0 += s;
                    *q0 += q;
                    *m += 1;
                }
                _ => groups.push((s, q, 1)),
            }
        }
        let poles = groups
            .into_iter()
            .map(|(s, q, m)| ((s / m as f64).max(1.0), q))
            .filter(|&(_, q)| q > 1e-14 * total_q)
            .map(|(s, q)| (s, s * q))
            .collect();
        Ok(Self { poles })
    }

    pub(crate) fn entropy_increase(&self, c: f64) -> f64 {
        if !(c > 0.0) || self.poles.is_empty() {
            return 0.0;
        }
        let secular = |x: f64| c * self.poles.iter().map(|&(s, w)| w / (x - s)).sum::<f64>() - 1.0;
        let spread: f64 = self.poles.iter().map(|&(_, w)| w).sum::<f64>() * c;
        let mut total = 0.0;
        for (i, &(s, _)) in self.poles.iter().enumerate() {
            let mut lo = s;
            let mut hi = match self.poles.get(i + 1) {
                Some(&(next, _)) => next,
                None => s + spread + 1e-300,
            };
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if secular(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            total += entropy_function(root.sqrt()) - entropy_function(s.sqrt());
        }
        total.max(0.0)
    }
}

/// Eve information per scenario, with the state-independent work done once.
#[derive(Debug, Clone)]
enum EveModel {
    Complete(OverlapExponents),
    Restricted {
        collective: bool,
        mixture: RankOneEntropy,
        /// `dᵀ V⁻¹ d` for the mean shift `d` between `κ = ±` per unit `𝔸`
        shift_metric: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    pub i_ab: f64,
    pub eve_info: f64,
    /// `β·Ĩ_AB − eve_info`
    pub rate: f64,
}

/// Single-point rate evaluator for fixed protocol parameters.
#[derive(Debug, Clone)]
pub struct RateModel {
    params: ProtocolParams,
    dn: DerivedNoise,
    kin: SignKinematics,
    eve: EveModel,
}

impl RateModel {
    pub fn new(params: &ProtocolParams) -> Result<Self> {
        let dn = noise_for(params)?;
        Self::with_noise(params, &dn)
    }

    pub fn with_noise(params: &ProtocolParams, dn: &DerivedNoise) -> Result<Self> {
        params.validate()?;
        let kin = SignKinematics::new(params, dn)?;
        let eve = match params.scenario {
            Scenario::CompleteCollective => EveModel::Complete(overlap_exponents(params, dn)?),
            Scenario::RestrictedCollective | Scenario::RestrictedIndividual => {
                let plus = eve_state_restricted(params, Sign::Plus, 1.0, 0.0)?;
                let minus = eve_state_restricted(params, Sign::Minus, 1.0, 0.0)?;
                let shift = plus.mean() - minus.mean();
                let cm = plus.cm().clone();
                EveModel::Restricted {
                    collective: params.scenario == Scenario::RestrictedCollective,
                    mixture: RankOneEntropy::new(&cm, &shift)?,
                    shift_metric: quadratic_form_inverse(&cm, &shift)?,
                }
            }
        };
        Ok(Self { params: *params, dn: *dn, kin, eve })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn noise(&self) -> &DerivedNoise {
        &self.dn
    }

    pub fn kinematics(&self) -> &SignKinematics {
        &self.kin
    }

    pub fn overlap_exponents(&self) -> Option<&OverlapExponents> {
        match &self.eve {
            EveModel::Complete(e) => Some(e),
            EveModel::Restricted { .. } => None,
        }
    }

    /// Eve's info depends on `𝔹` only in the complete scenario.
    #[allow(dead_code)]
    pub(crate) fn eve_depends_on_amp_b(&self) -> bool {
        matches!(self.eve, EveModel::Complete(_))
    }

    pub fn sign_probs(&self, point: &PSPoint) -> CondSignProbs {
        self.kin.probs(point)
    }

    pub fn mutual_info(&self, point: &PSPoint) -> f64 {
        mutual_info_from(&self.kin.probs(point))
    }

    /// Restricted-scenario Eve information at `(𝔸, γ)`.
    pub fn eve_info_restricted(&self, amp_a: f64, gamma: f64) -> Result<f64> {
        match &self.eve {
            EveModel::Complete(_) => Err(Error::InvalidArgument(
                "restricted Eve information requested in the complete scenario".into(),
            )),
            EveModel::Restricted { collective, mixture, shift_metric } => {
                if amp_a == 0.0 {
                    return Ok(0.0);
                }
                if *collective {
                    let p_plus = self.p_plus_given_ag(amp_a, gamma);
                    Ok(mixture.entropy_increase(p_plus * (1.0 - p_plus) * amp_a * amp_a))
                } else {
                    let x = 0.25 * amp_a * amp_a * shift_metric;
                    Ok(iae_from_fidelity(-(-x).exp_m1()))
                }
            }
        }
    }

    fn p_plus_given_ag(&self, amp_a: f64, gamma: f64) -> f64 {
        let a = self.kin.a_coef * amp_a;
        let vt = self.kin.upsilon_tilde.unwrap_or(self.dn.upsilon);
        crate::probability::logistic_neg(2.0 * a * gamma / vt)
    }

    /// Eve's information at a point; `probs` must be `self.sign_probs(point)`.
    pub(crate) fn eve_info_with(&self, point: &PSPoint, probs: &CondSignProbs, ov: Option<&OverlapCoeffs>) -> Result<f64> {
        match &self.eve {
            EveModel::Complete(e) => {
                let c = match ov {
                    Some(c) => *c,
                    None => e.coeffs(point.amp_a, point.amp_b),
                };
                holevo_complete_from(&c, probs)
            }
            EveModel::Restricted { .. } => self.eve_info_restricted(point.amp_a, point.gamma),
        }
    }

    pub fn eve_info(&self, point: &PSPoint) -> Result<f64> {
        let probs = self.kin.probs(point);
        self.eve_info_with(point, &probs, None)
    }

    pub fn breakdown(&self, point: &PSPoint) -> Result<RateBreakdown> {
        let probs = self.kin.probs(point);
        let i_ab = mutual_info_from(&probs);
        let eve_info = self.eve_info_with(point, &probs, None)?;
        Ok(self.combine(i_ab, eve_info))
    }

    pub(crate) fn combine(&self, i_ab: f64, eve_info: f64) -> RateBreakdown {
        RateBreakdown { i_ab, eve_info, rate: self.params.beta_rec * i_ab - eve_info }
    }

    /// A point is post-selected iff this value is positive. Rates at or
    /// below [`SELECTION_FLOOR`] are treated as round-off. The value is
    /// scaled by `Ĩ_AB + Ĩ_E` so that it stays informative in the tails,
    /// where both terms vanish.
    pub(crate) fn selection_value(&self, b: &RateBreakdown) -> f64 {
        let v = match self.params.beta_mode {
            BetaMode::Pointwise => b.rate,
            BetaMode::Global => b.i_ab - b.eve_info,
        };
        (v - SELECTION_FLOOR) / (b.i_ab + b.eve_info + SELECTION_FLOOR)
    }
}

pub fn single_point_mutual_info(point: &PSPoint, dn: &DerivedNoise, params: &ProtocolParams) -> Result<f64> {
    Ok(mutual_info_from(&SignKinematics::new(params, dn)?.probs(point)))
}

pub fn single_point_holevo_complete(point: &PSPoint, dn: &DerivedNoise, params: &ProtocolParams) -> Result<f64> {
    if params.scenario != Scenario::CompleteCollective {
        return Err(Error::InvalidArgument("complete-scenario Holevo bound needs scenario complete_collective".into()));
    }
    let probs = SignKinematics::new(params, dn)?.probs(point);
    holevo_complete_from(&overlap_coeffs(point, dn, params)?, &probs)
}

fn restricted_model(params: &ProtocolParams, dn: &DerivedNoise, scenario: Scenario) -> Result<RateModel> {
    if !params.scenario.is_restricted() {
        return Err(Error::InvalidArgument("operation requires a restricted scenario".into()));
    }
    RateModel::with_noise(&ProtocolParams { scenario, ..*params }, dn)
}

/// `χ̃^RE` via the Gaussian upper bound on the mixture entropy, evaluated
/// directly from the toolbox states.
pub fn single_point_holevo_restricted(amp_a: f64, gamma: f64, dn: &DerivedNoise, params: &ProtocolParams) -> Result<f64> {
    let model = restricted_model(params, dn, Scenario::RestrictedCollective)?;
    let plus = eve_state_restricted(params, Sign::Plus, amp_a, gamma)?;
    let minus = eve_state_restricted(params, Sign::Minus, amp_a, gamma)?;
    let p_plus = model.p_plus_given_ag(amp_a, gamma);
    let inflated = mixture_cm_inflation(plus.cm(), plus.mean(), minus.mean(), p_plus)?;
    Ok((gaussian_entropy(&inflated)? - gaussian_entropy(plus.cm())?).max(0.0))
}

/// `Ĩ_AE` for individual attacks.
pub fn single_point_iae_individual(amp_a: f64, gamma: f64, dn: &DerivedNoise, params: &ProtocolParams) -> Result<f64> {
    restricted_model(params, dn, Scenario::RestrictedIndividual)?.eve_info_restricted(amp_a, gamma)
}

pub fn single_point_rate(point: &PSPoint, dn: &DerivedNoise, params: &ProtocolParams) -> Result<RateBreakdown> {
    RateModel::with_noise(params, dn)?.breakdown(point)
}
