//! Closed forms against oracles built only from the Gaussian toolbox or from
//! Gaussian densities and Bayes' rule. Each check returns the worst absolute
//! deviation over its draws.

#![allow(dead_code)]

use cvmdi_core::gaussian::{beam_splitter, homodyne_density, pure_overlap_same_cm, GaussianState, Quadrature};
use cvmdi_core::probability::{
    cond_sign_probs_complete, cond_sign_probs_restricted, p_bb_given_kag, p_gamma_complete, p_gamma_restricted,
    Sign,
};
use cvmdi_core::protocol::{build_pre_relay_state, eve_state_complete, noise_for, residual_state_restricted};
use cvmdi_core::rates::{conditional_eigenvalues, eve_conditional_matrix, mixture_cm_inflation, overlap_coeffs, OverlapCoeffs};
use cvmdi_core::{DetectorModel, PSPoint, ProtocolParams, Scenario, SignPair};
use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DRAWS: usize = 1000;
/// Relay mode measured in q.
const RELAY_Q_MODE: usize = 1;

pub fn random_params(rng: &mut ChaCha8Rng, scenario: Scenario, model: DetectorModel) -> ProtocolParams {
    ProtocolParams {
        tau_a: rng.random_range(0.05..=1.0),
        tau_b: rng.random_range(0.05..=1.0),
        eps_a: rng.random_range(0.0..0.1),
        eps_b: rng.random_range(0.0..0.1),
        eta: rng.random_range(0.5..=1.0),
        s_det: if model == DetectorModel::Absorbed { 1.0 } else { rng.random_range(1.0..1.5) },
        detector_model: model,
        sigma_a: rng.random_range(0.5..20.0),
        sigma_b: rng.random_range(0.5..20.0),
        mu: rng.random_range(1.1..20.0),
        beta_rec: 1.0,
        scenario,
        ..Default::default()
    }
}

pub fn random_point(rng: &mut ChaCha8Rng) -> PSPoint {
    PSPoint::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), rng.random_range(-4.0..4.0)).unwrap()
}

/// `A` and `B` against the toolbox overlap of Eve's complete-scenario states.
pub fn overlap_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let model = if i % 2 == 0 { DetectorModel::Untrusted } else { DetectorModel::Absorbed };
        let p = random_params(&mut rng, Scenario::CompleteCollective, model);
        let dn = noise_for(&p).unwrap();
        let pt = random_point(&mut rng);
        let c = overlap_coeffs(&pt, &dn, &p).unwrap();
        let state = |k, b| eve_state_complete(&p, k, b, pt.amp_a, pt.amp_b, pt.gamma).unwrap();
        let (pp, mp, pm) = (state(Sign::Plus, Sign::Plus), state(Sign::Minus, Sign::Plus), state(Sign::Plus, Sign::Minus));
        worst = worst.max((pp.cm() - mp.cm()).amax()).max((pp.cm() - pm.cm()).amax());
        let a = pure_overlap_same_cm(pp.mean(), mp.mean(), pp.cm()).unwrap().sqrt();
        let b = pure_overlap_same_cm(pp.mean(), pm.mean(), pp.cm()).unwrap().sqrt();
        worst = worst.max((a - c.ov_a).abs()).max((b - c.ov_b).abs());
    }
    worst
}

type Posteriors = ([[f64; 2]; 2], [[f64; 2]; 2], [f64; 2], [f64; 2], [[f64; 2]; 2]);

/// Direct Bayes over the four sign hypotheses with equal priors.
fn bayes(lik: [[f64; 2]; 2]) -> Posteriors {
    let total: f64 = lik.iter().flatten().sum();
    let mut joint = [[0.0; 2]; 2];
    let mut k_given_b = [[0.0; 2]; 2];
    let mut b_given_k = [[0.0; 2]; 2];
    for k in 0..2 {
        for b in 0..2 {
            joint[k][b] = lik[k][b] / total;
            k_given_b[b][k] = lik[k][b] / (lik[0][b] + lik[1][b]);
            b_given_k[k][b] = lik[k][b] / (lik[k][0] + lik[k][1]);
        }
    }
    let kappa = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let bsign = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    (k_given_b, b_given_k, kappa, bsign, joint)
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn flat(m: [[f64; 2]; 2]) -> [f64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

/// Every logistic posterior, both scenario families.
pub fn posterior_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = [Scenario::CompleteCollective, Scenario::RestrictedCollective, Scenario::RestrictedIndividual];
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let scenario = scenarios[i % 3];
        let p = random_params(&mut rng, scenario, DetectorModel::Untrusted);
        let dn = noise_for(&p).unwrap();
        let pt = random_point(&mut rng);
        let mut lik = [[0.0; 2]; 2];
        for s in SignPair::ALL {
            lik[s.kappa.index()][s.bsign.index()] = if scenario.is_restricted() {
                p_gamma_restricted(pt.amp_a, s.kappa, pt.gamma, &dn, &p).unwrap() * p_bb_given_kag(&pt, s, &dn, &p).unwrap()
            } else {
                p_gamma_complete(&pt, s, &dn, &p)
            };
        }
        let (kb, bk, k, b, j) = bayes(lik);
        let c = if scenario.is_restricted() {
            cond_sign_probs_restricted(&pt, &dn, &p).unwrap()
        } else {
            cond_sign_probs_complete(&pt, &dn, &p).unwrap()
        };
        worst = worst
            .max(max_dev(&flat(kb), &flat(c.kappa_given_bsign)))
            .max(max_dev(&flat(bk), &flat(c.bsign_given_kappa)))
            .max(max_dev(&k, &c.kappa))
            .max(max_dev(&b, &c.bsign))
            .max(max_dev(&flat(j), &flat(c.joint)));
        if scenario.is_restricted() {
            let g = [
                p_gamma_restricted(pt.amp_a, Sign::Plus, pt.gamma, &dn, &p).unwrap(),
                p_gamma_restricted(pt.amp_a, Sign::Minus, pt.gamma, &dn, &p).unwrap(),
            ];
            let k_ag = [g[0] / (g[0] + g[1]), g[1] / (g[0] + g[1])];
            worst = worst.max(max_dev(&k_ag, &c.kappa_given_ag.unwrap()));
        }
    }
    worst
}

/// `υ` (complete) and `ṽ` (restricted) against the variances of the relay
/// quadratures in the toolbox state.
pub fn variance_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let model = [DetectorModel::Untrusted, DetectorModel::Trusted, DetectorModel::Absorbed][i % 3];
        let restricted = i % 2 == 1;
        let scenario = if restricted { Scenario::RestrictedCollective } else { Scenario::CompleteCollective };
        let p = random_params(&mut rng, scenario, model);
        let dn = noise_for(&p).unwrap();
        let state = build_pre_relay_state(&p, Sign::Plus, 0.0, Sign::Plus, 0.0).unwrap();
        let expected = if restricted { dn.restricted().unwrap().upsilon_tilde } else { dn.upsilon };
        let k = 2 * RELAY_Q_MODE;
        // q of B'' and p of A'' share the variance
        worst = worst.max((state.cm()[(k, k)] - expected).abs()).max((state.cm()[(1, 1)] - expected).abs());
    }
    worst
}

/// Relay-outcome densities against the toolbox homodyne marginal.
pub fn gamma_density_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let restricted = i % 2 == 1;
        let scenario = if restricted { Scenario::RestrictedCollective } else { Scenario::CompleteCollective };
        let p = random_params(&mut rng, scenario, DetectorModel::Untrusted);
        let dn = noise_for(&p).unwrap();
        let pt = random_point(&mut rng);
        let signs = SignPair::ALL[i % 4];
        let state = build_pre_relay_state(&p, signs.kappa, pt.amp_a, signs.bsign, pt.amp_b).unwrap();
        let toolbox = homodyne_density(&state, RELAY_Q_MODE, Quadrature::Q, pt.gamma).unwrap();
        let closed = if restricted {
            p_gamma_restricted(pt.amp_a, signs.kappa, pt.gamma, &dn, &p).unwrap()
        } else {
            p_gamma_complete(&pt, signs, &dn, &p)
        };
        worst = worst.max((toolbox - closed).abs());
    }
    worst
}

/// Heterodyne of Bob's retained mode: mix with vacuum, measure q, rescale
/// the outcome by √2.
fn heterodyne_x_density(residual: &GaussianState, mode: usize, x: f64) -> f64 {
    let with_vac = residual.tensor(&GaussianState::vacuum(1));
    let mixed = beam_splitter(&with_vac, mode, residual.n_modes(), 0.5).unwrap();
    homodyne_density(&mixed, mode, Quadrature::Q, x / 2f64.sqrt()).unwrap() / 2f64.sqrt()
}

/// Bob's outcome density against a toolbox heterodyne.
pub fn heterodyne_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let model = if i % 2 == 0 { DetectorModel::Untrusted } else { DetectorModel::Absorbed };
        let p = random_params(&mut rng, Scenario::RestrictedCollective, model);
        let dn = noise_for(&p).unwrap();
        let pt = random_point(&mut rng);
        let signs = SignPair::ALL[i % 4];
        let residual = residual_state_restricted(&p, signs.kappa, pt.amp_a, pt.gamma).unwrap();
        let x = signs.bsign.value() * pt.amp_b;
        let toolbox = heterodyne_x_density(&residual, residual.n_modes() - 1, x);
        let closed = p_bb_given_kag(&pt, signs, &dn, &p).unwrap();
        worst = worst.max((toolbox - closed).abs());
    }
    worst
}

/// Closed-form conditional eigenvalues against a numeric eigensolve of the
/// assembled 4×4 matrices; the two remaining eigenvalues must vanish.
pub fn eigenvalue_deviation(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..DRAWS {
        let c = OverlapCoeffs::from_overlaps(rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let pb: f64 = rng.random_range(0.0..=1.0);
        let closed = conditional_eigenvalues(&c, [pb, 1.0 - pb]);
        for kappa in Sign::BOTH {
            let m = eve_conditional_matrix(&c, kappa, [pb, 1.0 - pb]).unwrap();
            let mut ev: Vec<f64> = SymmetricEigen::new(Matrix4::from_fn(|r, s| m[r][s])).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            worst = worst.max((ev[0] - closed[0]).abs()).max((ev[1] - closed[1]).abs());
            worst = worst.max(ev[2].abs()).max(ev[3].abs());
        }
    }
    worst
}

pub const MIXTURE_SAMPLES: usize = 1_000_000;

/// Largest |z| of the entries of `mixture_cm_inflation` against the sample
/// covariance of the mixture, using per-entry standard errors.
pub fn mixture_max_z(cm: &DMatrix<f64>, plus: &DVector<f64>, minus: &DVector<f64>, p_plus: f64, seed: u64) -> f64 {
    let n = cm.nrows();
    let expected = mixture_cm_inflation(cm, plus, minus, p_plus).unwrap();
    let l = cm.clone().cholesky().expect("CM is positive definite").l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(MIXTURE_SAMPLES);
    let mut mean = DVector::<f64>::zeros(n);
    for _ in 0..MIXTURE_SAMPLES {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let centre = if rng.random::<f64>() < p_plus { plus } else { minus };
        let x = centre + &l * z;
        mean += &x;
        xs.push(x);
    }
    let m = MIXTURE_SAMPLES as f64;
    mean /= m;
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut sum_sq = DMatrix::<f64>::zeros(n, n);
    for x in &xs {
        let d = x - &mean;
        for i in 0..n {
            for j in 0..n {
                let v = d[i] * d[j];
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v * v;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let cov = sum[(i, j)] / m;
            let se = ((sum_sq[(i, j)] / m - cov * cov) / m).sqrt();
            worst = worst.max(((cov - expected[(i, j)]) / se).abs());
        }
    }
    worst
}

/// Eve's two conditional states at a realistic restricted point.
pub fn eve_mixture_components() -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let p = ProtocolParams {
        tau_a: 0.5,
        tau_b: 0.4,
        eps_a: 0.05,
        eps_b: 0.05,
        eta: 0.8,
        detector_model: DetectorModel::Absorbed,
        mu: 6.0,
        scenario: Scenario::RestrictedCollective,
        ..Default::default()
    };
    let plus = cvmdi_core::protocol::eve_state_restricted(&p, Sign::Plus, 1.5, 0.7).unwrap();
    let minus = cvmdi_core::protocol::eve_state_restricted(&p, Sign::Minus, 1.5, 0.7).unwrap();
    assert!((plus.cm() - minus.cm()).amax() < 1e-12);
    (plus.cm().clone(), plus.mean().clone(), minus.mean().clone())
}

/// The three exact cases: single component, coincident means, and the
/// textbook equal mixture at ±2.
pub fn mixture_trivial_cases_hold() -> bool {
    let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
    let plus = DVector::from_vec(vec![1.0, -2.0]);
    let minus = DVector::from_vec(vec![-0.5, 0.25]);
    let one = DMatrix::identity(2, 2);
    let textbook =
        mixture_cm_inflation(&one, &DVector::from_vec(vec![2.0, 0.0]), &DVector::from_vec(vec![-2.0, 0.0]), 0.5).unwrap();
    mixture_cm_inflation(&v, &plus, &minus, 1.0).unwrap() == v
        && mixture_cm_inflation(&v, &plus, &plus, 0.4).unwrap() == v
        && textbook == DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0])
}
