//! Nelder-Mead over the free modulation parameters and the distance drivers.
//!
//! Free parameters are searched in log space: `(ln σ_A, ln σ_B)` in the
//! complete scenario and `(ln σ_A, ln(μ − 1))` in the restricted ones.

use crate::error::{Error, Result};
use crate::integration::{ps_rate, GridSpec};
use crate::protocol::{tau_from_km, ProtocolParams};

pub const DEFAULT_RATE_FLOOR: f64 = 1e-6;
/// Multi-start values of σ (and of μ − 1) in SNU.
pub const START_VALUES: [f64; 4] = [0.5, 2.0, 8.0, 32.0];
const SIMPLEX_STEP: f64 = 0.5;
const DIAMETER_TOL: f64 = 1e-3;
const MAX_EVALS_PER_START: usize = 200;
const RANGE_RESOLUTION_KM: f64 = 0.1;
const RANGE_CAP_KM: f64 = 640.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeParams {
    /// `(σ_A, σ_B)`
    SigmaASigmaB,
    /// `(σ_A, μ)`
    SigmaAMu,
}

impl FreeParams {
    pub fn for_params(params: &ProtocolParams) -> Self {
        if params.scenario.is_restricted() {
            FreeParams::SigmaAMu
        } else {
            FreeParams::SigmaASigmaB
        }
    }

    pub fn names(self) -> [&'static str; 2] {
        match self {
            FreeParams::SigmaASigmaB => ["sigma_a", "sigma_b"],
            FreeParams::SigmaAMu => ["sigma_a", "mu"],
        }
    }

    fn decode(self, base: &ProtocolParams, y: [f64; 2]) -> ProtocolParams {
        let mut p = *base;
        p.sigma_a = y[0].exp();
        match self {
            FreeParams::SigmaASigmaB => p.sigma_b = y[1].exp(),
            FreeParams::SigmaAMu => p.mu = 1.0 + y[1].exp(),
        }
        p
    }

    fn encode(self, values: [f64; 2]) -> [f64; 2] {
        match self {
            FreeParams::SigmaASigmaB => [values[0].ln(), values[1].ln()],
            FreeParams::SigmaAMu => [values[0].ln(), (values[1] - 1.0).ln()],
        }
    }

    fn values(self, p: &ProtocolParams) -> [f64; 2] {
        match self {
            FreeParams::SigmaASigmaB => [p.sigma_a, p.sigma_b],
            FreeParams::SigmaAMu => [p.sigma_a, p.mu],
        }
    }

    /// Apply optimized values to a parameter set.
    pub fn apply(self, base: &ProtocolParams, values: [f64; 2]) -> ProtocolParams {
        self.decode(base, self.encode(values))
    }

    /// The default starting points, as parameter values.
    pub fn default_starts(self) -> Vec<[f64; 2]> {
        START_VALUES
            .iter()
            .map(|&s| match self {
                FreeParams::SigmaASigmaB => [s, s],
                FreeParams::SigmaAMu => [s, 1.0 + s],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    pub free: FreeParams,
    /// `(σ_A, σ_B)` or `(σ_A, μ)`
    pub best_params: [f64; 2],
    pub best_rate: f64,
    pub n_evals: usize,
    pub converged: bool,
}

impl OptResult {
    pub fn apply(&self, base: &ProtocolParams) -> ProtocolParams {
        self.free.apply(base, self.best_params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub distance_km: f64,
    pub best_rate: f64,
    pub best_params: [f64; 2],
    pub n_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierRow {
    pub alice_km: f64,
    /// `None` when even a zero-length Bob link stays below the floor.
    pub max_bob_km: Option<f64>,
}

struct NmOutcome {
    x: [f64; 2],
    f: f64,
    evals: usize,
    converged: bool,
    hit_target: bool,
}

/// Maximizes `f` from `x0`. Non-finite values count as `−∞`. Stops early
/// once `target` is reached.
fn nelder_mead<F>(f: &mut F, x0: [f64; 2], target: Option<f64>) -> NmOutcome
where
    F: FnMut([f64; 2]) -> f64,
{
    let mut evals = 0;
    let mut eval = |x: [f64; 2], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let reached = |fv: f64| target.is_some_and(|t| -fv >= t);
    let mut simplex = [x0, [x0[0] + SIMPLEX_STEP, x0[1]], [x0[0], x0[1] + SIMPLEX_STEP]];
    let mut values = [0.0; 3];
    for i in 0..3 {
        values[i] = eval(simplex[i], &mut evals);
        if reached(values[i]) {
            return NmOutcome { x: simplex[i], f: -values[i], evals, converged: false, hit_target: true };
        }
    }
    let mut converged = false;
    loop {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let diameter = (0..3)
            .flat_map(|i| (i + 1..3).map(move |j| (i, j)))
            .map(|(i, j)| ((simplex[i][0] - simplex[j][0]).powi(2) + (simplex[i][1] - simplex[j][1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        if diameter < DIAMETER_TOL {
            converged = true;
            break;
        }
        if evals >= MAX_EVALS_PER_START {
            break;
        }
        let centroid = [0.5 * (simplex[0][0] + simplex[1][0]), 0.5 * (simplex[0][1] + simplex[1][1])];
        let along = |t: f64| [centroid[0] + t * (simplex[2][0] - centroid[0]), centroid[1] + t * (simplex[2][1] - centroid[1])];
        let xr = along(-1.0);
        let fr = eval(xr, &mut evals);
        let mut step = if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(xe, &mut evals);
            if fe < fr {
                Some((xe, fe))
            } else {
                Some((xr, fr))
            }
        } else if fr < values[1] {
            Some((xr, fr))
        } else {
            let (xc, fc) = if fr < values[2] {
                let xc = along(-0.5);
                (xc, eval(xc, &mut evals))
            } else {
                let xc = along(0.5);
                (xc, eval(xc, &mut evals))
            };
            (fc < values[2].min(fr)).then_some((xc, fc))
        };
        match step.take() {
            Some((x, fx)) => {
                simplex[2] = x;
                values[2] = fx;
                if reached(fx) {
                    return NmOutcome { x, f: -fx, evals, converged: false, hit_target: true };
                }
            }
            None => {
                for i in 1..3 {
                    simplex[i] = [
                        simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
                    ];
                    values[i] = eval(simplex[i], &mut evals);
                    if reached(values[i]) {
                        return NmOutcome { x: simplex[i], f: -values[i], evals, converged: false, hit_target: true };
                    }
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    NmOutcome { x: simplex[best], f: -values[best], evals, converged, hit_target: false }
}

/// Optimizes from explicit starting values (given as parameter values, not
/// logs). With `target`, returns as soon as any evaluation reaches it.
pub fn optimize_rate_from(
    params: &ProtocolParams,
    grid: &GridSpec,
    starts: &[[f64; 2]],
    target: Option<f64>,
) -> Result<OptResult> {
    params.validate()?;
    grid.validate()?;
    let free = FreeParams::for_params(params);
    let mut objective = |y: [f64; 2]| match ps_rate(&free.decode(params, y), grid) {
        Ok(r) => r.value,
        Err(_) => f64::NAN,
    };
    let mut best: Option<NmOutcome> = None;
    let mut total_evals = 0;
    for s in starts {
        let out = nelder_mead(&mut objective, free.encode(*s), target);
        total_evals += out.evals;
        let better = best.as_ref().is_none_or(|b| out.f > b.f);
        let hit = out.hit_target;
        if better {
            best = Some(out);
        }
        if hit {
            break;
        }
    }
    let best = best.ok_or_else(|| Error::OptimizationFailure("no starting points".into()))?;
    if !best.f.is_finite() {
        return Err(Error::OptimizationFailure("no start produced a finite rate".into()));
    }
    let p = free.decode(params, best.x);
    Ok(OptResult {
        free,
        best_params: free.values(&p),
        best_rate: best.f,
        n_evals: total_evals,
        converged: best.converged || best.hit_target,
    })
}

/// Multi-start optimization of the free parameters for the scenario.
pub fn optimize_rate(params: &ProtocolParams, grid: &GridSpec) -> Result<OptResult> {
    let free = FreeParams::for_params(params);
    optimize_rate_from(params, grid, &free.default_starts(), None)
}

/// Sets link transmissivities for a distance: split evenly when `symmetric`,
/// otherwise the distance is Bob's link and Alice's link is kept.
pub fn at_distance(base: &ProtocolParams, distance_km: f64, symmetric: bool) -> Result<ProtocolParams> {
    let mut p = *base;
    if symmetric {
        p.tau_a = tau_from_km(0.5 * distance_km)?;
        p.tau_b = p.tau_a;
    } else {
        p.tau_b = tau_from_km(distance_km)?;
    }
    Ok(p)
}

fn starts_for(free: FreeParams, warm: Option<&OptResult>) -> Vec<[f64; 2]> {
    match warm {
        Some(w) if w.best_rate > 0.0 => vec![w.best_params],
        _ => free.default_starts(),
    }
}

/// Optimized `R_PS` at each distance. With `warm_start`, every row after the
/// first starts from the previous optimum (falling back to the multi-start
/// set when the previous rate was zero).
pub fn distance_sweep(
    base: &ProtocolParams,
    distances_km: &[f64],
    symmetric: bool,
    grid: &GridSpec,
    warm_start: bool,
) -> Result<Vec<SweepRow>> {
    let free = FreeParams::for_params(base);
    let mut rows = Vec::with_capacity(distances_km.len());
    let mut prev: Option<OptResult> = None;
    for &d in distances_km {
        let p = at_distance(base, d, symmetric)?;
        let starts = starts_for(free, if warm_start { prev.as_ref() } else { None });
        let opt = optimize_rate_from(&p, grid, &starts, None)?;
        rows.push(SweepRow { distance_km: d, best_rate: opt.best_rate, best_params: opt.best_params, n_evals: opt.n_evals });
        prev = Some(opt);
    }
    Ok(rows)
}

/// Largest distance whose optimized `R_PS` stays at or above `rate_floor`,
/// to 0.1 km. `symmetric` bisects the total distance; otherwise Bob's link.
pub fn max_range(base: &ProtocolParams, rate_floor: f64, symmetric: bool, grid: &GridSpec) -> Result<f64> {
    Ok(max_range_detail(base, rate_floor, symmetric, grid)?.0)
}

/// As [`max_range`], also returning the optimum found at the returned distance.
pub fn max_range_detail(
    base: &ProtocolParams,
    rate_floor: f64,
    symmetric: bool,
    grid: &GridSpec,
) -> Result<(f64, OptResult)> {
    if !(rate_floor > 0.0) {
        return Err(Error::InvalidArgument(format!("rate floor must be > 0, got {rate_floor}")));
    }
    let free = FreeParams::for_params(base);
    let check = |d: f64, warm: Option<&OptResult>| -> Result<OptResult> {
        let p = at_distance(base, d, symmetric)?;
        let mut starts = Vec::new();
        if let Some(w) = warm {
            starts.push(w.best_params);
        }
        starts.extend(free.default_starts());
        optimize_rate_from(&p, grid, &starts, Some(rate_floor))
    };
    let origin = check(0.0, None)?;
    if origin.best_rate < rate_floor {
        return Err(Error::NoRange(format!(
            "optimized rate {:e} at 0 km is below the floor {rate_floor:e}",
            origin.best_rate
        )));
    }
    let (mut lo, mut lo_opt) = (0.0, origin);
    let mut hi = 5.0;
    loop {
        let opt = check(hi, Some(&lo_opt))?;
        if opt.best_rate < rate_floor {
            break;
        }
        lo = hi;
        lo_opt = opt;
        hi *= 2.0;
        if hi > RANGE_CAP_KM {
            return Ok((lo, lo_opt));
        }
    }
    while hi - lo > RANGE_RESOLUTION_KM {
        let mid = 0.5 * (lo + hi);
        let opt = check(mid, Some(&lo_opt))?;
        if opt.best_rate >= rate_floor {
            lo = mid;
            lo_opt = opt;
        } else {
            hi = mid;
        }
    }
    Ok((lo, lo_opt))
}

/// Maximum Bob-relay distance for each Alice-relay distance.
pub fn asymmetric_frontier(
    base: &ProtocolParams,
    alice_km: &[f64],
    rate_floor: f64,
    grid: &GridSpec,
) -> Result<Vec<FrontierRow>> {
    if alice_km.is_empty() {
        return Err(Error::InvalidArgument("alice_km list is empty".into()));
    }
    alice_km
        .iter()
        .map(|&a| {
            let mut p = *base;
            p.tau_a = tau_from_km(a)?;
            match max_range(&p, rate_floor, false, grid) {
                Ok(b) => Ok(FrontierRow { alice_km: a, max_bob_km: Some(b) }),
                Err(Error::NoRange(_)) => Ok(FrontierRow { alice_km: a, max_bob_km: None }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Optimal `(σ_A, μ)` over a distance window (symmetric links).
pub fn optimal_param_sweep(
    base: &ProtocolParams,
    window_km: &[f64],
    grid: &GridSpec,
    warm_start: bool,
) -> Result<Vec<SweepRow>> {
    if !base.scenario.is_restricted() {
        return Err(Error::InvalidArgument("optimal parameter sweep needs a restricted scenario".into()));
    }
    distance_sweep(base, window_km, true, grid, warm_start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_peak() {
        let mut f = |x: [f64; 2]| -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2);
        let out = nelder_mead(&mut f, [0.0, 0.0], None);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-3 && (out.x[1] + 0.5).abs() < 1e-3);
        assert!(out.evals <= MAX_EVALS_PER_START + 3);
    }

    #[test]
    fn nelder_mead_target_exit() {
        let mut f = |x: [f64; 2]| -(x[0] - 3.0).powi(2) - x[1].powi(2);
        let out = nelder_mead(&mut f, [0.0, 0.0], Some(-4.0));
        assert!(out.hit_target && out.f >= -4.0);
    }

    #[test]
    fn nelder_mead_handles_nan() {
        let mut f = |x: [f64; 2]| if x[0] > 0.2 { f64::NAN } else { -(x[0] + 1.0).powi(2) };
        let out = nelder_mead(&mut f, [0.0, 0.0], None);
        assert!(out.f.is_finite());
        assert!((out.x[0] + 1.0).abs() < 1e-2);
    }

    #[test]
    fn parameter_encoding_roundtrip() {
        let base = ProtocolParams::default();
        for free in [FreeParams::SigmaASigmaB, FreeParams::SigmaAMu] {
            let p = free.apply(&base, [3.0, 4.5]);
            let v = free.values(&p);
            assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] - 4.5).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_mapping() {
        let base = ProtocolParams::default();
        let p = at_distance(&base, 10.0, true).unwrap();
        assert!((p.tau_a - tau_from_km(5.0).unwrap()).abs() < 1e-15 && p.tau_a == p.tau_b);
        let p = at_distance(&ProtocolParams { tau_a: 0.9, ..base }, 10.0, false).unwrap();
        assert_eq!(p.tau_a, 0.9);
        assert!((p.tau_b - tau_from_km(10.0).unwrap()).abs() < 1e-15);
    }
}
