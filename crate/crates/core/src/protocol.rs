//! Protocol parameters, derived noise scalars and the Gaussian description of
//! the relay, built on the [`crate::gaussian`] toolbox.
//!
//! Mode order of the global state (indices into [`GaussianState`]):
//!
//! | index | mode | present when |
//! |-------|------|--------------|
//! | 0 | `A`  Alice's signal | always |
//! | 1 | `B`  Bob's signal | always |
//! | 2, 3 | `E1`, `e1` Eve's TMSV on Alice's link | always |
//! | 4, 5 | `E2`, `e2` Eve's TMSV on Bob's link | always |
//! | 6..9 | `D1`, `d1`, `D2`, `d2` detector-noise TMSVs | trusted / untrusted detectors |
//! | last | `b` Bob's retained TMSV mode | restricted scenarios |
//!
//! After the relay the measured modes `A''` (p) and `B''` (q) are removed and
//! the remaining modes keep their relative order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    beam_splitter, condition_homodyne, partial_trace, GaussianState, Quadrature,
};
use crate::probability::Sign;

/// Fiber loss in dB per km.
pub const FIBER_LOSS_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CompleteCollective,
    RestrictedIndividual,
    RestrictedCollective,
}

impl Scenario {
    pub fn is_restricted(self) -> bool {
        !matches!(self, Scenario::CompleteCollective)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CompleteCollective => "complete_collective",
            Scenario::RestrictedIndividual => "restricted_individual",
            Scenario::RestrictedCollective => "restricted_collective",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete_collective" => Ok(Scenario::CompleteCollective),
            "restricted_individual" => Ok(Scenario::RestrictedIndividual),
            "restricted_collective" => Ok(Scenario::RestrictedCollective),
            _ => Err(Error::InvalidParameter(format!("unknown scenario '{s}'"))),
        }
    }
}

/// How detector inefficiency is modelled at the relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorModel {
    /// Detector-noise modes are discarded (not held by Eve).
    Trusted,
    /// Detector-noise modes are held by Eve.
    Untrusted,
    /// Efficiency folded into the link transmissivities; requires `s_det = 1`.
    Absorbed,
}

impl DetectorModel {
    pub fn name(self) -> &'static str {
        match self {
            DetectorModel::Trusted => "trusted",
            DetectorModel::Untrusted => "untrusted",
            DetectorModel::Absorbed => "absorbed",
        }
    }
}

impl std::str::FromStr for DetectorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trusted" => Ok(DetectorModel::Trusted),
            "untrusted" => Ok(DetectorModel::Untrusted),
            "absorbed" => Ok(DetectorModel::Absorbed),
            _ => Err(Error::InvalidParameter(format!("unknown detector model '{s}'"))),
        }
    }
}

/// Where the reconciliation efficiency enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// `R̃ = β Ĩ_AB − eve`; post-selection acts on this rate.
    Pointwise,
    /// Post-selection region from `Ĩ_AB − eve`; `β` scales the integrated
    /// mutual information over that region only.
    Global,
}

impl BetaMode {
    pub fn name(self) -> &'static str {
        match self {
            BetaMode::Pointwise => "pointwise",
            BetaMode::Global => "global",
        }
    }
}

impl std::str::FromStr for BetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(BetaMode::Pointwise),
            "global" => Ok(BetaMode::Global),
            _ => Err(Error::InvalidParameter(format!("unknown beta mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub tau_a: f64,
    pub tau_b: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub eta: f64,
    pub s_det: f64,
    pub detector_model: DetectorModel,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub mu: f64,
    pub beta_rec: f64,
    pub scenario: Scenario,
    pub beta_mode: BetaMode,
}

impl Default for ProtocolParams {
    /// Ideal, lossless, complete-scenario parameters.
    fn default() -> Self {
        Self {
            tau_a: 1.0,
            tau_b: 1.0,
            eps_a: 0.0,
            eps_b: 0.0,
            eta: 1.0,
            s_det: 1.0,
            detector_model: DetectorModel::Untrusted,
            sigma_a: 1.0,
            sigma_b: 1.0,
            mu: 2.0,
            beta_rec: 1.0,
            scenario: Scenario::CompleteCollective,
            beta_mode: BetaMode::Pointwise,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        unit_open("tau_a", self.tau_a)?;
        unit_open("tau_b", self.tau_b)?;
        unit_open("eta", self.eta)?;
        unit_open("beta_rec", self.beta_rec)?;
        non_negative("eps_a", self.eps_a)?;
        non_negative("eps_b", self.eps_b)?;
        non_negative("sigma_a", self.sigma_a)?;
        non_negative("sigma_b", self.sigma_b)?;
        if !(self.s_det >= 1.0 && self.s_det.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "s_det must be >= 1, got {}",
                self.s_det
            )));
        }
        if self.detector_model == DetectorModel::Absorbed && self.s_det != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "absorbed detector model requires s_det = 1, got {}",
                self.s_det
            )));
        }
        if self.scenario.is_restricted() && !(self.mu > 1.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "restricted scenarios require mu > 1, got {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// Parameters actually seen by the channel model: the absorbed model maps
    /// `τ -> ητ` and `η -> 1`.
    pub fn effective(&self) -> ProtocolParams {
        let mut p = *self;
        if p.detector_model == DetectorModel::Absorbed {
            p.tau_a *= p.eta;
            p.tau_b *= p.eta;
            p.eta = 1.0;
        }
        p
    }

    /// Sets the link transmissivities from per-link fiber lengths.
    pub fn with_link_km(mut self, alice_km: f64, bob_km: f64) -> Result<Self> {
        self.tau_a = tau_from_km(alice_km)?;
        self.tau_b = tau_from_km(bob_km)?;
        Ok(self)
    }

    /// Symmetric configuration: the total distance is split evenly.
    pub fn with_total_km(self, total_km: f64) -> Result<Self> {
        self.with_link_km(0.5 * total_km, 0.5 * total_km)
    }

    pub(crate) fn has_detector_modes(&self) -> bool {
        self.detector_model != DetectorModel::Absorbed
    }
}

/// Thermal variances of Eve's injected modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaPair {
    pub omega_a: f64,
    pub omega_b: f64,
}

pub fn tau_from_db(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "loss must be >= 0 dB, got {loss_db}"
        )));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

pub fn tau_from_km(length_km: f64) -> Result<f64> {
    if !(length_km >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "length must be >= 0 km, got {length_km}"
        )));
    }
    tau_from_db(FIBER_LOSS_DB_PER_KM * length_km)
}

/// `ω = 1 + ε (ητ/2) / (1 − ητ/2)` per link.
pub fn omega_from_epsilon(params: &ProtocolParams) -> Result<OmegaPair> {
    let omega = |eps: f64, tau: f64| {
        let x = 0.5 * params.eta * tau;
        if x >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "ητ/2 = {x} must be below 1"
            )));
        }
        Ok(1.0 + eps * x / (1.0 - x))
    };
    Ok(OmegaPair {
        omega_a: omega(params.eps_a, params.tau_a)?,
        omega_b: omega(params.eps_b, params.tau_b)?,
    })
}

/// Noise scalars that only exist when Bob is modelled by a TMSV (`μ > 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedNoise {
    /// Variance of the relay outcome with Bob's mode thermal.
    pub upsilon_tilde: f64,
    pub upsilon_tilde_prime: f64,
    /// Scale of Bob's heterodyne outcome in the sign posteriors.
    pub delta_coeff: f64,
    /// Conditional variance of Bob's heterodyne q-outcome.
    pub v_b: f64,
    /// Remote-preparation gain `sqrt((μ+1)/(μ−1))`.
    pub xi: f64,
    /// Rescaling of the relay outcome in Bob-conditioned posteriors.
    pub gamma_prime_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedNoise {
    /// Variance of the q relay outcome given both parties' signals.
    pub upsilon: f64,
    pub restricted: Option<RestrictedNoise>,
}

impl DerivedNoise {
    pub fn restricted(&self) -> Result<&RestrictedNoise> {
        self.restricted
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("restricted noise needs mu > 1".into()))
    }
}

/// Closed-form noise scalars. The absorbed detector model is applied first.
pub fn derived_noise(params: &ProtocolParams, omegas: &OmegaPair) -> Result<DerivedNoise> {
    let p = params.effective();
    if p.scenario.is_restricted() && !(p.mu > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "restricted scenarios require mu > 1, got {}",
            p.mu
        )));
    }
    let (eta, s) = (p.eta, if params.detector_model == DetectorModel::Absorbed { 1.0 } else { p.s_det });
    let (ta, tb) = (p.tau_a, p.tau_b);
    let (wa, wb) = (omegas.omega_a, omegas.omega_b);
    let upsilon = (1.0 - eta) * s + 0.5 * eta * (ta + tb + (1.0 - ta) * wa + (1.0 - tb) * wb);
    let restricted = (p.mu > 1.0 && p.mu.is_finite()).then(|| {
        let mu = p.mu;
        let upsilon_tilde = upsilon + 0.5 * eta * tb * (mu - 1.0);
        let upsilon_tilde_prime =
            (1.0 - eta) * s + 0.5 * eta * (ta + tb + wa * (1.0 - ta) + wb * (1.0 - tb));
        RestrictedNoise {
            upsilon_tilde,
            upsilon_tilde_prime,
            delta_coeff: (0.5 * eta * tb).sqrt() * ((mu - 1.0) / (mu + 1.0)).sqrt(),
            v_b: (mu + 1.0) * (1.0 - (mu - 1.0) / upsilon_tilde * 0.5 * eta * tb),
            xi: ((mu + 1.0) / (mu - 1.0)).sqrt(),
            gamma_prime_factor: (upsilon_tilde_prime + 0.5 * eta * (mu - 1.0) * tb) / upsilon_tilde,
        }
    });
    Ok(DerivedNoise { upsilon, restricted })
}

/// Convenience: validate, derive ω from ε and compute the noise scalars.
pub fn noise_for(params: &ProtocolParams) -> Result<DerivedNoise> {
    params.validate()?;
    derived_noise(params, &omega_from_epsilon(params)?)
}

const MODE_A: usize = 0;
const MODE_B: usize = 1;
const MODE_E1: usize = 2;
const MODE_E2: usize = 4;
const MODE_D1: usize = 6;
const MODE_D2: usize = 8;

fn n_global_modes(p: &ProtocolParams) -> usize {
    6 + if p.has_detector_modes() { 4 } else { 0 } + usize::from(p.scenario.is_restricted())
}

fn place_tmsv(cm: &mut nalgebra::DMatrix<f64>, i: usize, j: usize, mu: f64) {
    let c = (mu * mu - 1.0).max(0.0).sqrt();
    for k in 0..2 {
        cm[(2 * i + k, 2 * i + k)] = mu;
        cm[(2 * j + k, 2 * j + k)] = mu;
    }
    cm[(2 * i, 2 * j)] = c;
    cm[(2 * j, 2 * i)] = c;
    cm[(2 * i + 1, 2 * j + 1)] = -c;
    cm[(2 * j + 1, 2 * i + 1)] = -c;
}

/// Global state just before the relay homodynes: signals prepared, Eve's
/// entangling cloners applied on both links, relay beam splitter and
/// detector-efficiency beam splitters applied. In restricted scenarios Bob's
/// signal is half of a TMSV(μ) and `bsign`, `amp_b` are ignored.
pub fn build_pre_relay_state(
    params: &ProtocolParams,
    kappa: Sign,
    amp_a: f64,
    bsign: Sign,
    amp_b: f64,
) -> Result<GaussianState> {
    params.validate()?;
    let omegas = omega_from_epsilon(params)?;
    let p = params.effective();
    let n = n_global_modes(&p);
    let mut mean = nalgebra::DVector::zeros(2 * n);
    let mut cm = nalgebra::DMatrix::identity(2 * n, 2 * n);
    mean[2 * MODE_A] = kappa.value() * amp_a;
    if p.scenario.is_restricted() {
        place_tmsv(&mut cm, MODE_B, n - 1, p.mu);
    } else {
        mean[2 * MODE_B] = bsign.value() * amp_b;
    }
    place_tmsv(&mut cm, MODE_E1, MODE_E1 + 1, omegas.omega_a);
    place_tmsv(&mut cm, MODE_E2, MODE_E2 + 1, omegas.omega_b);
    if p.has_detector_modes() {
        place_tmsv(&mut cm, MODE_D1, MODE_D1 + 1, p.s_det);
        place_tmsv(&mut cm, MODE_D2, MODE_D2 + 1, p.s_det);
    }
    let mut state = GaussianState::from_parts(mean, cm);
    state = beam_splitter(&state, MODE_A, MODE_E1, p.tau_a)?;
    state = beam_splitter(&state, MODE_B, MODE_E2, p.tau_b)?;
    // A'' = (A' + B')/√2 is measured in p, B'' = (B' − A')/√2 in q
    state = beam_splitter(&state, MODE_A, MODE_B, 0.5)?;
    if p.has_detector_modes() {
        state = beam_splitter(&state, MODE_A, MODE_D1, p.eta)?;
        state = beam_splitter(&state, MODE_B, MODE_D2, p.eta)?;
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct RelayOutcome {
    /// Residual modes `(E1, e1, E2, e2, [D1, d1, D2, d2], [b])`.
    pub state: GaussianState,
    /// Marginal density of `γ_q`.
    pub density_q: f64,
    /// Density of `γ_p` given `γ_q`.
    pub density_p: f64,
}

/// Relay homodynes: q on `B''` with outcome `gamma_q`, then p on `A''` with
/// outcome `gamma_p`.
pub fn relay_and_condition(
    state: &GaussianState,
    gamma_q: f64,
    gamma_p: f64,
) -> Result<RelayOutcome> {
    let after_q = condition_homodyne(state, MODE_B, Quadrature::Q, gamma_q)?;
    let after_p = condition_homodyne(&after_q.state, MODE_A, Quadrature::P, gamma_p)?;
    Ok(RelayOutcome {
        state: after_p.state,
        density_q: after_q.density,
        density_p: after_p.density,
    })
}

/// Indices of Eve's modes within the residual state of [`relay_and_condition`].
pub fn eve_modes(params: &ProtocolParams) -> Vec<usize> {
    match params.detector_model {
        DetectorModel::Untrusted => (0..8).collect(),
        DetectorModel::Trusted | DetectorModel::Absorbed => (0..4).collect(),
    }
}

/// Index of Bob's retained mode `b` within the residual state.
pub fn bob_residual_mode(params: &ProtocolParams) -> usize {
    if params.has_detector_modes() {
        8
    } else {
        4
    }
}

/// Eve's conditional state, complete scenario, with `γ_p = 0`.
pub fn eve_state_complete(
    params: &ProtocolParams,
    kappa: Sign,
    bsign: Sign,
    amp_a: f64,
    amp_b: f64,
    gamma: f64,
) -> Result<GaussianState> {
    let mut p = *params;
    p.scenario = Scenario::CompleteCollective;
    let pre = build_pre_relay_state(&p, kappa, amp_a, bsign, amp_b)?;
    let out = relay_and_condition(&pre, gamma, 0.0)?;
    partial_trace(&out.state, &eve_modes(&p))
}

/// Residual state (Eve's modes followed by Bob's `b`), restricted scenario,
/// with `γ_p = 0`.
pub fn residual_state_restricted(
    params: &ProtocolParams,
    kappa: Sign,
    amp_a: f64,
    gamma: f64,
) -> Result<GaussianState> {
    let mut p = *params;
    if !p.scenario.is_restricted() {
        p.scenario = Scenario::RestrictedCollective;
    }
    let pre = build_pre_relay_state(&p, kappa, amp_a, Sign::Plus, 0.0)?;
    let out = relay_and_condition(&pre, gamma, 0.0)?;
    let mut keep = eve_modes(&p);
    keep.push(bob_residual_mode(&p));
    partial_trace(&out.state, &keep)
}

/// Eve's conditional state, restricted scenario (Bob's mode traced out),
/// with `γ_p = 0`.
pub fn eve_state_restricted(
    params: &ProtocolParams,
    kappa: Sign,
    amp_a: f64,
    gamma: f64,
) -> Result<GaussianState> {
    let residual = residual_state_restricted(params, kappa, amp_a, gamma)?;
    let n_eve = residual.n_modes() - 1;
    partial_trace(&residual, &(0..n_eve).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::symplectic_eigenvalues;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tau_conversions() {
        assert_eq!(tau_from_db(0.0).unwrap(), 1.0);
        assert!(close(tau_from_db(3.0).unwrap(), 0.5011872, 1e-7));
        assert!(close(tau_from_db(0.75).unwrap(), 0.8413951, 1e-7));
        assert!(tau_from_db(-1.0).is_err());
        assert_eq!(tau_from_km(0.0).unwrap(), 1.0);
        assert!(close(tau_from_km(5.0).unwrap(), 0.7943282, 1e-7));
        assert!(close(tau_from_km(50.0).unwrap(), 0.1, 1e-15));
        assert!(tau_from_km(-0.1).is_err());
    }

    #[test]
    fn omega_examples() {
        let mut p = ProtocolParams::default();
        let w = omega_from_epsilon(&p).unwrap();
        assert_eq!((w.omega_a, w.omega_b), (1.0, 1.0));
        p.eps_a = 0.05;
        p.tau_a = 0.5;
        assert!(close(omega_from_epsilon(&p).unwrap().omega_a, 1.0166667, 1e-7));
        p.tau_a = 1e-9;
        assert!(close(omega_from_epsilon(&p).unwrap().omega_a, 1.0, 1e-9));
    }

    #[test]
    fn omega_monotone_in_eps_and_tau() {
        let mut p = ProtocolParams::default();
        let mut last = 0.0;
        for k in 0..20 {
            p.eps_a = 0.01 * k as f64;
            let w = omega_from_epsilon(&p).unwrap().omega_a;
            assert!(w >= last);
            last = w;
        }
        p.eps_a = 0.05;
        last = 0.0;
        for k in 1..=20 {
            p.tau_a = 0.05 * k as f64;
            let w = omega_from_epsilon(&p).unwrap().omega_a;
            assert!(w > last);
            last = w;
        }
    }

    #[test]
    fn upsilon_examples() {
        let mut p = ProtocolParams::default();
        p.eps_a = 0.3;
        p.eps_b = 0.2;
        assert!(close(noise_for(&p).unwrap().upsilon, 1.0, 1e-15));

        let mut p = ProtocolParams { eta: 0.8, ..Default::default() };
        for t in [0.1, 0.5, 0.93] {
            p.tau_a = t;
            p.tau_b = 0.3;
            assert!(close(noise_for(&p).unwrap().upsilon, 1.0, 1e-15));
        }

        let p = ProtocolParams { tau_a: 0.6, tau_b: 0.6, ..Default::default() };
        let w = OmegaPair { omega_a: 1.1, omega_b: 1.1 };
        assert!(close(derived_noise(&p, &w).unwrap().upsilon, 1.04, 1e-14));
    }

    #[test]
    fn restricted_noise_identities() {
        let p = ProtocolParams {
            tau_a: 0.4,
            tau_b: 0.7,
            eps_a: 0.05,
            eps_b: 0.08,
            eta: 0.85,
            s_det: 1.3,
            mu: 6.0,
            scenario: Scenario::RestrictedCollective,
            ..Default::default()
        };
        let dn = noise_for(&p).unwrap();
        let r = dn.restricted().unwrap();
        assert!(close(r.upsilon_tilde - r.upsilon_tilde_prime, 0.5 * 0.85 * 0.7 * 5.0, 1e-12));
        assert!(close(r.upsilon_tilde_prime, dn.upsilon, 1e-14));
        assert!(close(r.gamma_prime_factor, 1.0, 1e-14));
        assert!(close(r.v_b * r.upsilon_tilde, 7.0 * dn.upsilon, 1e-12));
        assert!(r.v_b > 0.0 && r.xi > 1.0 && r.delta_coeff > 0.0);
    }

    #[test]
    fn validation() {
        let ok = ProtocolParams::default();
        assert!(ok.validate().is_ok());
        let bad = [
            ProtocolParams { tau_a: 0.0, ..ok },
            ProtocolParams { eta: 1.2, ..ok },
            ProtocolParams { s_det: 0.5, ..ok },
            ProtocolParams { sigma_b: -1.0, ..ok },
            ProtocolParams { detector_model: DetectorModel::Absorbed, s_det: 2.0, ..ok },
            ProtocolParams { scenario: Scenario::RestrictedCollective, mu: 1.0, ..ok },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        // complete scenario ignores mu
        assert!(ProtocolParams { mu: 0.3, ..ok }.validate().is_ok());
    }

    #[test]
    fn transparent_links_leave_eve_uncorrelated() {
        let p = ProtocolParams { eps_a: 0.4, eps_b: 0.4, tau_a: 1.0, tau_b: 1.0, ..Default::default() };
        let s = build_pre_relay_state(&p, Sign::Plus, 1.3, Sign::Minus, 0.7).unwrap();
        let cm = s.cm();
        for signal in 0..4 {
            for eve in 4..12 {
                assert_eq!(cm[(signal, eve)], 0.0);
            }
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_mean_and_pure_global_state() {
        let p = ProtocolParams { tau_a: 0.6, tau_b: 0.3, eps_a: 0.1, eps_b: 0.2, eta: 0.9, s_det: 1.4, ..Default::default() };
        let s = build_pre_relay_state(&p, Sign::Plus, 0.0, Sign::Plus, 0.0).unwrap();
        assert!(s.mean().amax() == 0.0);
        let nu = symplectic_eigenvalues(s.cm()).unwrap();
        assert!(nu.iter().all(|&v| close(v, 1.0, 1e-9)), "{nu:?}");
    }

    #[test]
    fn eve_complete_is_pure_and_decoupled_on_transparent_links() {
        let p = ProtocolParams { tau_a: 0.5, tau_b: 0.8, eps_a: 0.1, eps_b: 0.05, eta: 0.9, s_det: 1.2, ..Default::default() };
        let e = eve_state_complete(&p, Sign::Minus, Sign::Plus, 1.2, 0.4, 0.3).unwrap();
        assert_eq!(e.n_modes(), 8);
        let nu = symplectic_eigenvalues(e.cm()).unwrap();
        assert!(nu.iter().all(|&v| close(v, 1.0, 1e-8)), "{nu:?}");

        let p = ProtocolParams::default();
        let plus = eve_state_complete(&p, Sign::Plus, Sign::Plus, 2.0, 1.0, 0.3).unwrap();
        let minus = eve_state_complete(&p, Sign::Minus, Sign::Plus, 2.0, 1.0, 0.3).unwrap();
        assert!((plus.mean() - minus.mean()).amax() < 1e-12);
    }

    #[test]
    fn eve_restricted_properties() {
        let p = ProtocolParams {
            tau_a: 0.5,
            tau_b: 0.5,
            mu: 10.0,
            scenario: Scenario::RestrictedCollective,
            ..Default::default()
        };
        let a = eve_state_restricted(&p, Sign::Plus, 1.0, 0.2).unwrap();
        let b = eve_state_restricted(&p, Sign::Minus, 2.5, -1.0).unwrap();
        assert!((a.cm() - b.cm()).amax() < 1e-12);
        let nu = symplectic_eigenvalues(a.cm()).unwrap();
        assert!(nu[nu.len() - 1] > 1.0 + 1e-3, "{nu:?}");

        // μ -> 1 reduces to the complete scenario with Bob's amplitude zero
        let p1 = ProtocolParams { mu: 1.0 + 1e-12, ..p };
        let r = eve_state_restricted(&p1, Sign::Plus, 1.5, 0.7).unwrap();
        let c = eve_state_complete(&p1, Sign::Plus, Sign::Plus, 1.5, 0.0, 0.7).unwrap();
        assert!((r.cm() - c.cm()).amax() < 1e-5);
        assert!((r.mean() - c.mean()).amax() < 1e-5);
    }
}
