//! Closed-form densities and sign posteriors.
//!
//! Sign convention: index 0 is `+` (bit 0), index 1 is `−`. All conditional
//! sign probabilities reduce to logistic functions of the log-weights
//!
//! `w(κ, β̃) = (−κ a γ + β̃ b (γ + κ a)) / υ`
//!
//! with `a = 𝔸 √(ητ_A/2)`, and `b = 𝔹 √(ητ_B/2)` (complete scenario) or
//! `b = 𝔹 Δ` (restricted scenarios). Bob's restricted-scenario outcome is the
//! heterodyne q-value rescaled by `√2`, so its marginal variance is `μ + 1`.

use crate::error::{Error, Result};
use crate::gaussian::normal_density;
use crate::protocol::{DerivedNoise, ProtocolParams, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// One post-selection coordinate `(𝔸, 𝔹, γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PSPoint {
    pub amp_a: f64,
    pub amp_b: f64,
    pub gamma: f64,
}

impl PSPoint {
    pub fn new(amp_a: f64, amp_b: f64, gamma: f64) -> Result<Self> {
        if !(amp_a >= 0.0 && amp_b >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid point (A={amp_a}, B={amp_b}, gamma={gamma})"
            )));
        }
        Ok(Self { amp_a, amp_b, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignPair {
    pub kappa: Sign,
    pub bsign: Sign,
}

impl SignPair {
    pub const ALL: [SignPair; 4] = [
        SignPair { kappa: Sign::Plus, bsign: Sign::Plus },
        SignPair { kappa: Sign::Plus, bsign: Sign::Minus },
        SignPair { kappa: Sign::Minus, bsign: Sign::Plus },
        SignPair { kappa: Sign::Minus, bsign: Sign::Minus },
    ];
}

/// `1 / (1 + e^z)` without overflow.
#[inline]
pub(crate) fn logistic_neg(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `ln cosh x` without overflow.
#[inline]
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let y = x.abs();
    y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2
}

/// Scale factors turning amplitudes into the `a`, `b` of the log-weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignKinematics {
    pub a_coef: f64,
    pub b_coef: f64,
    pub upsilon: f64,
    /// `ṽ`, restricted scenarios only.
    pub upsilon_tilde: Option<f64>,
}

impl SignKinematics {
    pub fn new(params: &ProtocolParams, dn: &DerivedNoise) -> Result<Self> {
        let p = params.effective();
        let a_coef = (0.5 * p.eta * p.tau_a).sqrt();
        let (b_coef, upsilon_tilde) = if p.scenario.is_restricted() {
            let r = dn.restricted()?;
            (r.delta_coeff, Some(r.upsilon_tilde))
        } else {
            ((0.5 * p.eta * p.tau_b).sqrt(), None)
        };
        Ok(Self { a_coef, b_coef, upsilon: dn.upsilon, upsilon_tilde })
    }

    /// Sign posteriors at a point.
    pub fn probs(&self, point: &PSPoint) -> CondSignProbs {
        let a = self.a_coef * point.amp_a;
        let b = self.b_coef * point.amp_b;
        let mut out = sign_probs_ab(a, b, point.gamma, self.upsilon);
        out.kappa_given_ag = self.upsilon_tilde.map(|vt| {
            let p = logistic_neg(2.0 * a * point.gamma / vt);
            [p, 1.0 - p]
        });
        out
    }
}

/// Every conditional sign probability at one point. Array layouts use the
/// sign index (`+` = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondSignProbs {
    /// `p(κ|β̃𝔸𝔹γ)` as `[β̃][κ]`.
    pub kappa_given_bsign: [[f64; 2]; 2],
    /// `p(β̃|κ𝔸𝔹γ)` as `[κ][β̃]`.
    pub bsign_given_kappa: [[f64; 2]; 2],
    /// `p(κ|𝔸𝔹γ)`.
    pub kappa: [f64; 2],
    /// `p(β̃|𝔸𝔹γ)`.
    pub bsign: [f64; 2],
    /// `p(κβ̃|𝔸𝔹γ)` as `[κ][β̃]`.
    pub joint: [[f64; 2]; 2],
    /// `p(κ|𝔸γ)`, restricted scenarios only.
    pub kappa_given_ag: Option<[f64; 2]>,
}

fn pair(p_plus: f64) -> [f64; 2] {
    [p_plus, 1.0 - p_plus]
}

pub(crate) fn sign_probs_ab(a: f64, b: f64, gamma: f64, upsilon: f64) -> CondSignProbs {
    let g = gamma;
    let inv = 1.0 / upsilon;
    let kappa_given_bsign = [
        pair(logistic_neg(2.0 * a * (g - b) * inv)),
        pair(logistic_neg(2.0 * a * (g + b) * inv)),
    ];
    let bsign_given_kappa = [
        pair(logistic_neg(-2.0 * b * (g + a) * inv)),
        pair(logistic_neg(-2.0 * b * (g - a) * inv)),
    ];
    let zk = 2.0 * a * g * inv + ln_cosh(b * (g - a) * inv) - ln_cosh(b * (g + a) * inv);
    let zb = -2.0 * b * g * inv + ln_cosh(a * (g + b) * inv) - ln_cosh(a * (g - b) * inv);

    let mut w = [[0.0; 2]; 2];
    for (ik, k) in [1.0, -1.0].into_iter().enumerate() {
        for (ib, s) in [1.0, -1.0].into_iter().enumerate() {
            w[ik][ib] = (-k * a * g + s * b * (g + k * a)) * inv;
        }
    }
    let wmax = w.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut joint = [[0.0; 2]; 2];
    let mut total = 0.0;
    for ik in 0..2 {
        for ib in 0..2 {
            joint[ik][ib] = (w[ik][ib] - wmax).exp();
            total += joint[ik][ib];
        }
    }
    for row in &mut joint {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    CondSignProbs {
        kappa_given_bsign,
        bsign_given_kappa,
        kappa: pair(logistic_neg(zk)),
        bsign: pair(logistic_neg(zb)),
        joint,
        kappa_given_ag: None,
    }
}

/// Normal density with variance `sigma`.
pub fn gaussian_prior_density(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prior variance must be > 0, got {sigma}"
        )));
    }
    Ok(normal_density(x, sigma))
}

/// `p(γ|κβ̃𝔸𝔹)`, complete scenario.
pub fn p_gamma_complete(
    point: &PSPoint,
    signs: SignPair,
    dn: &DerivedNoise,
    params: &ProtocolParams,
) -> f64 {
    let p = params.effective();
    let mean = -(0.5 * p.eta).sqrt()
        * (signs.kappa.value() * point.amp_a * p.tau_a.sqrt()
            - signs.bsign.value() * point.amp_b * p.tau_b.sqrt());
    normal_density(point.gamma - mean, dn.upsilon)
}

/// `p(γ|κ𝔸)`, restricted scenarios.
pub fn p_gamma_restricted(
    amp_a: f64,
    kappa: Sign,
    gamma: f64,
    dn: &DerivedNoise,
    params: &ProtocolParams,
) -> Result<f64> {
    let p = params.effective();
    let r = dn.restricted()?;
    let mean = -kappa.value() * amp_a * (0.5 * p.eta * p.tau_a).sqrt();
    Ok(normal_density(gamma - mean, r.upsilon_tilde))
}

/// Density of Bob's rescaled heterodyne outcome `x = β̃𝔹` given `κ𝔸γ`.
pub fn p_bb_given_kag(
    point: &PSPoint,
    signs: SignPair,
    dn: &DerivedNoise,
    params: &ProtocolParams,
) -> Result<f64> {
    let p = params.effective();
    let r = dn.restricted()?;
    let a = point.amp_a * (0.5 * p.eta * p.tau_a).sqrt();
    let gain = ((p.mu * p.mu - 1.0) * 0.5 * p.eta * p.tau_b).sqrt() / r.upsilon_tilde;
    let mean = gain * (point.gamma + signs.kappa.value() * a);
    let x = signs.bsign.value() * point.amp_b;
    Ok(normal_density(x - mean, r.v_b))
}

fn require_scenario(params: &ProtocolParams, restricted: bool) -> Result<()> {
    if params.scenario.is_restricted() != restricted {
        return Err(Error::InvalidArgument(format!(
            "operation not available for scenario {}",
            params.scenario.name()
        )));
    }
    Ok(())
}

pub fn cond_sign_probs_complete(
    point: &PSPoint,
    dn: &DerivedNoise,
    params: &ProtocolParams,
) -> Result<CondSignProbs> {
    require_scenario(params, false)?;
    Ok(SignKinematics::new(params, dn)?.probs(point))
}

pub fn cond_sign_probs_restricted(
    point: &PSPoint,
    dn: &DerivedNoise,
    params: &ProtocolParams,
) -> Result<CondSignProbs> {
    require_scenario(params, true)?;
    Ok(SignKinematics::new(params, dn)?.probs(point))
}

/// Variance of Bob's magnitude prior: `σ_B` in the complete scenario, the
/// heterodyne marginal `μ + 1` in the restricted ones.
pub fn bob_prior_variance(params: &ProtocolParams) -> f64 {
    match params.scenario {
        Scenario::CompleteCollective => params.sigma_b,
        _ => params.mu + 1.0,
    }
}

/// `p(𝔸𝔹γ)`: sum over the four sign atoms. Requires `σ_A > 0` (and `σ_B > 0`
/// in the complete scenario).
pub fn joint_ps_density(point: &PSPoint, dn: &DerivedNoise, params: &ProtocolParams) -> Result<f64> {
    let prior_a = gaussian_prior_density(point.amp_a, params.sigma_a)?;
    let mut total = 0.0;
    if params.scenario.is_restricted() {
        for s in SignPair::ALL {
            total += p_bb_given_kag(point, s, dn, params)?
                * p_gamma_restricted(point.amp_a, s.kappa, point.gamma, dn, params)?;
        }
        Ok(total * prior_a)
    } else {
        let prior_b = gaussian_prior_density(point.amp_b, params.sigma_b)?;
        for s in SignPair::ALL {
            total += p_gamma_complete(point, s, dn, params);
        }
        Ok(total * prior_a * prior_b)
    }
}
