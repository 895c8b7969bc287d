//! Raw and post-selected rates over the `(𝔸, 𝔹, γ)` volume.
//!
//! Quadrature is a tensor Gauss-Legendre rule on a truncated box. Each sign
//! atom carries the prior density `g(x, σ)` of its magnitude, so summing over
//! signs reproduces the two-sided normalization; `σ = 0` is a point mass at
//! zero with weight ½ per sign. The integrand is even in `γ`, so only the
//! non-negative half of the symmetric `γ` rule is evaluated, on a box sized
//! per `(𝔸, 𝔹)` line from its own conditional means.
//!
//! The post-selected integrand has a kink where `R̃` changes sign, and near
//! the end of the range the selected region is a thin sliver in the tails.
//! Every axis is handled the same way: the sign of the selection value is
//! scanned at the rule's nodes, boundaries are located by root finding, and
//! each selected interval gets its own composite Gauss-Legendre rule. On the
//! amplitude axes the scanned quantity is the peak selection value over the
//! inner axes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::normal_density;
use crate::probability::{bob_prior_variance, PSPoint};
use crate::protocol::ProtocolParams;
use crate::rates::{mutual_info_from, OverlapCoeffs, OverlapExponents, RateModel};

pub const MC_BATCH: usize = 10_000;
pub const MC_MIN_SAMPLES: usize = 10_000;
/// Gauss-Legendre nodes per panel inside post-selected `γ` intervals.
const PANEL_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_a: usize,
    pub n_b: usize,
    pub n_g: usize,
    /// Half-width of the box in prior standard deviations.
    pub cutoff_sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_a: 24, n_b: 24, n_g: 48, cutoff_sigmas: 6.0 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_a < 8 || self.n_b < 8 || self.n_g < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid node counts must be >= 8, got ({}, {}, {})",
                self.n_a, self.n_b, self.n_g
            )));
        }
        if !(self.cutoff_sigmas >= 4.0 && self.cutoff_sigmas.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cutoff_sigmas must be >= 4, got {}",
                self.cutoff_sigmas
            )));
        }
        Ok(())
    }

    /// Every axis scaled by `factor`, rounded up.
    pub fn refined(&self, factor: f64) -> GridSpec {
        let scale = |n: usize| (n as f64 * factor).ceil() as usize;
        GridSpec { n_a: scale(self.n_a), n_b: scale(self.n_b), n_g: scale(self.n_g), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_evals: u64,
    /// Probability weight of the post-selected region.
    pub ps_mass: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending and
/// exactly antisymmetric.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Nodes and weights mapped to `[lo, hi]`.
fn legendre_on(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

/// One axis: nodes and weights, the weights including the prior if any.
#[derive(Debug, Clone)]
struct Axis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    max: f64,
    /// prior variance folded into the weights
    prior: Option<f64>,
}

impl Axis {
    fn density(&self, x: f64) -> f64 {
        self.prior.map_or(1.0, |s| normal_density(x, s))
    }
}

fn prior_axis(n: usize, sigma: f64, cutoff: f64) -> Axis {
    if sigma == 0.0 {
        return Axis { nodes: vec![0.0], weights: vec![0.5], max: 0.0, prior: None };
    }
    let max = cutoff * sigma.sqrt();
    let (nodes, w) = legendre_on(n, 0.0, max);
    let weights = nodes.iter().zip(&w).map(|(x, w)| w * normal_density(*x, sigma)).collect();
    Axis { nodes, weights, max, prior: Some(sigma) }
}

fn plain_axis(n: usize, max: f64) -> Axis {
    let (nodes, weights) = legendre_on(n, 0.0, max);
    Axis { nodes, weights, max, prior: None }
}

/// Non-negative half of the symmetric `γ` rule, weights doubled off zero.
fn gamma_axis(n: usize, half_width: f64) -> Axis {
    let (x, w) = legendre_on(n, -half_width, half_width);
    let start = n / 2;
    let nodes: Vec<f64> = x[start..].iter().map(|v| v.abs()).collect();
    let weights = x[start..]
        .iter()
        .zip(&w[start..])
        .map(|(v, w)| if *v == 0.0 { *w } else { 2.0 * w })
        .collect();
    Axis { nodes, weights, max: half_width, prior: None }
}

/// Integration box and weights for fixed parameters.
#[derive(Debug, Clone)]
struct Layout {
    a: Axis,
    b: Axis,
    /// `γ` half-rule on `[0, 1]`, scaled per line
    g: Axis,
    cutoff: f64,
}

fn layout(model: &RateModel, grid: &GridSpec) -> Layout {
    let p = model.params();
    let cutoff = grid.cutoff_sigmas;
    let a = prior_axis(grid.n_a, p.sigma_a, cutoff);
    let b = if p.scenario.is_restricted() {
        plain_axis(grid.n_b, cutoff * bob_prior_variance(p).sqrt())
    } else {
        prior_axis(grid.n_b, p.sigma_b, cutoff)
    };
    Layout { a, b, g: gamma_axis(grid.n_g, 1.0), cutoff }
}

/// Sum of the four sign-atom likelihoods of `γ` (and Bob's outcome in the
/// restricted scenarios), excluding the magnitude priors.
#[derive(Debug, Clone, Copy)]
struct Likelihood {
    complete: bool,
    a_coef: f64,
    b_coef: f64,
    upsilon: f64,
    upsilon_tilde: f64,
    bob_gain: f64,
    v_b: f64,
}

impl Likelihood {
    fn new(model: &RateModel) -> Result<Self> {
        let p = model.params().effective();
        let kin = model.kinematics();
        if p.scenario.is_restricted() {
            let r = model.noise().restricted()?;
            Ok(Self {
                complete: false,
                a_coef: kin.a_coef,
                b_coef: 0.0,
                upsilon: kin.upsilon,
                upsilon_tilde: r.upsilon_tilde,
                bob_gain: ((p.mu * p.mu - 1.0) * 0.5 * p.eta * p.tau_b).sqrt() / r.upsilon_tilde,
                v_b: r.v_b,
            })
        } else {
            Ok(Self {
                complete: true,
                a_coef: kin.a_coef,
                b_coef: kin.b_coef,
                upsilon: kin.upsilon,
                upsilon_tilde: kin.upsilon,
                bob_gain: 0.0,
                v_b: 1.0,
            })
        }
    }

    /// Half-width of the `γ` box on one line: the largest conditional mean
    /// plus `cutoff` conditional standard deviations.
    fn gamma_half_width(&self, amp_a: f64, amp_b: f64, cutoff: f64) -> f64 {
        let a = self.a_coef * amp_a;
        if self.complete {
            a + self.b_coef * amp_b + cutoff * self.upsilon.sqrt()
        } else {
            let vt = self.upsilon_tilde;
            let var_x = self.bob_gain * self.bob_gain * vt + self.v_b;
            a + vt * self.bob_gain * amp_b / var_x + cutoff * vt.sqrt()
        }
    }

    fn eval(&self, amp_a: f64, amp_b: f64, gamma: f64) -> f64 {
        let a = self.a_coef * amp_a;
        let mut total = 0.0;
        if self.complete {
            let b = self.b_coef * amp_b;
            for k in [1.0, -1.0] {
                for s in [1.0, -1.0] {
                    total += normal_density(gamma + k * a - s * b, self.upsilon);
                }
            }
        } else {
            for k in [1.0, -1.0] {
                let shifted = gamma + k * a;
                let pg = normal_density(shifted, self.upsilon_tilde);
                let mean = self.bob_gain * shifted;
                total += pg
                    * (normal_density(amp_b - mean, self.v_b) + normal_density(-amp_b - mean, self.v_b));
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Sums {
    raw: f64,
    ps: f64,
    ps_mass: f64,
    mass: f64,
    evals: u64,
}


/// Sign change of `f` between `lo` and `hi` by Illinois false position.
#[allow(clippy::too_many_arguments)]
fn illinois<F>(
    mut f: F,
    mut lo: f64,
    mut f_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut side = 0i8;
    for _ in 0..max_iter {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo.min(hi) && x < lo.max(hi)) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == (f_lo > 0.0) {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Selected sub-intervals of `[0, max]` given values `f` at ascending
/// points `x`, boundaries refined by `root`.
fn selected_intervals<R>(x: &[f64], f: &[f64], max: f64, mut root: R) -> Result<Vec<(f64, f64)>>
where
    R: FnMut(f64, f64, f64, f64) -> Result<f64>,
{
    let mut out = Vec::new();
    let mut start = (f[0] > 0.0).then_some(0.0);
    for i in 0..x.len() - 1 {
        if (f[i] > 0.0) != (f[i + 1] > 0.0) {
            let b = root(x[i], f[i], x[i + 1], f[i + 1])?;
            match start.take() {
                Some(l) => out.push((l, b)),
                None => start = Some(b),
            }
        }
    }
    if let Some(l) = start {
        out.push((l, max));
    }
    Ok(out)
}

/// Composite rule over `intervals`, with panels no coarser than the
/// spacing of an `n`-node rule on `[0, max]`.
fn panel_rule(intervals: &[(f64, f64)], max: f64, n: usize, panel: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let (px, pw) = panel;
    let mut out = Vec::new();
    for &(l, r) in intervals {
        let n_panels = ((r - l) / max * n as f64 / px.len() as f64).ceil().max(1.0) as usize;
        let width = (r - l) / n_panels as f64;
        for k in 0..n_panels {
            let a = l + k as f64 * width;
            for (t, w) in px.iter().zip(pw) {
                out.push((a + 0.5 * width * (t + 1.0), 0.5 * width * w));
            }
        }
    }
    out
}

/// Single-point evaluation along one `(𝔸, 𝔹)` line.
struct Line<'a> {
    model: &'a RateModel,
    lik: &'a Likelihood,
    amp_a: f64,
    amp_b: f64,
    coeffs: Option<OverlapCoeffs>,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    /// `γ`-likelihood without the magnitude priors
    density: f64,
    rate: f64,
    selection: f64,
}

impl Line<'_> {
    fn eval(&self, gamma: f64) -> Result<Sample> {
        let point = PSPoint { amp_a: self.amp_a, amp_b: self.amp_b, gamma };
        let probs = self.model.sign_probs(&point);
        let i_ab = mutual_info_from(&probs);
        let eve = self.model.eve_info_with(&point, &probs, self.coeffs.as_ref())?;
        let br = self.model.combine(i_ab, eve);
        Ok(Sample {
            density: self.lik.eval(self.amp_a, self.amp_b, gamma),
            rate: br.rate,
            selection: self.model.selection_value(&br),
        })
    }

    fn selection(&self, gamma: f64) -> Result<f64> {
        let point = PSPoint { amp_a: self.amp_a, amp_b: self.amp_b, gamma };
        let probs = self.model.sign_probs(&point);
        let i_ab = mutual_info_from(&probs);
        let eve = self.model.eve_info_with(&point, &probs, self.coeffs.as_ref())?;
        Ok(self.model.selection_value(&self.model.combine(i_ab, eve)))
    }

    /// Scan points: `γ = 0` followed by the half-axis nodes.
    fn scan_points(g: &Axis) -> Vec<f64> {
        let mut x = Vec::with_capacity(g.nodes.len() + 1);
        if g.nodes[0] != 0.0 {
            x.push(0.0);
        }
        x.extend_from_slice(&g.nodes);
        x
    }

    /// Golden-section maximum of the selection value around the best scan
    /// point, when a parabola through its neighbours leaves the sign open.
    fn refine_peak(&self, x: &[f64], sel: &[f64], evals: &mut u64) -> Result<Option<(f64, f64)>> {
        let (i, &top) = sel
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if top > 0.0 || !top.is_finite() {
            return Ok(None);
        }
        let (l, r) = (i.saturating_sub(1), (i + 1).min(x.len() - 1));
        if l < i && i < r {
            let (x0, x1, x2) = (x[l], x[i], x[r]);
            let (y0, y1, y2) = (sel[l], sel[i], sel[r]);
            let d01 = (y1 - y0) / (x1 - x0);
            let d12 = (y2 - y1) / (x2 - x1);
            let c2 = (d12 - d01) / (x2 - x0);
            if c2 < 0.0 {
                let c1 = d01 - c2 * (x0 + x1);
                let vertex = -c1 / (2.0 * c2);
                let estimate = y0 + d01 * (vertex - x0) + c2 * (vertex - x0) * (vertex - x1);
                if 2.0 * estimate - top <= 0.0 {
                    return Ok(None);
                }
            }
        }
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (x[l], x[r]);
        let mut c = hi - ratio * (hi - lo);
        let mut d = lo + ratio * (hi - lo);
        let mut fc = self.selection(c)?;
        let mut fd = self.selection(d)?;
        *evals += 2;
        for _ in 0..20 {
            if fc > fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - ratio * (hi - lo);
                fc = self.selection(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + ratio * (hi - lo);
                fd = self.selection(d)?;
            }
            *evals += 1;
        }
        Ok(Some(if fc > fd { (c, fc) } else { (d, fd) }))
    }

    /// Largest selection value along the line, from the scan and a local
    /// refinement.
    fn peak(&self, g: &Axis, evals: &mut u64) -> Result<f64> {
        let x = Self::scan_points(g);
        let sel = x.iter().map(|&v| self.selection(v)).collect::<Result<Vec<_>>>()?;
        *evals += x.len() as u64;
        let top = sel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(match self.refine_peak(&x, &sel, evals)? {
            Some((_, v)) => top.max(v),
            None => top,
        })
    }
}

/// Integrals over the non-negative `γ` half-line for one `(𝔸, 𝔹)` pair,
/// already doubled for the negative half, and the peak selection value of
/// the scan.
fn integrate_line(line: &Line, g: &Axis, panel: &(Vec<f64>, Vec<f64>)) -> Result<(Sums, f64)> {
    let mut s = Sums::default();
    let scan_x = Line::scan_points(g);
    let scan = scan_x.iter().map(|&x| line.eval(x)).collect::<Result<Vec<_>>>()?;
    let offset = scan.len() - g.nodes.len();
    s.evals += scan.len() as u64;
    for (i, w) in g.weights.iter().enumerate() {
        let m = w * scan[offset + i].density;
        s.raw += m * scan[offset + i].rate;
        s.mass += m;
    }
    let mut scan_x = scan_x;
    let mut sel: Vec<f64> = scan.iter().map(|p| p.selection).collect();
    let mut peak = sel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // a selected window narrower than the scan spacing
    if let Some((x, v)) = line.refine_peak(&scan_x, &sel, &mut s.evals)? {
        peak = peak.max(v);
        if v > 0.0 {
            let at = scan_x.partition_point(|&p| p < x);
            scan_x.insert(at, x);
            sel.insert(at, v);
        }
    }
    let selected = sel.iter().filter(|v| **v > 0.0).count();
    if selected == 0 {
        return Ok((s, peak));
    }
    if selected == sel.len() {
        s.ps = s.raw;
        s.ps_mass = s.mass;
        return Ok((s, peak));
    }
    let mut evals = 0;
    let intervals = selected_intervals(&scan_x, &sel, g.max, |lo, f_lo, hi, f_hi| {
        let tol = 1e-10 * hi.abs().max(1.0);
        illinois(
            |x| {
                evals += 1;
                line.selection(x)
            },
            lo,
            f_lo,
            hi,
            f_hi,
            tol,
            60,
        )
    })?;
    s.evals += evals;
    for (x, w) in panel_rule(&intervals, g.max, g.nodes.len(), panel) {
        let p = line.eval(x)?;
        let m = 2.0 * w * p.density;
        s.ps += m * p.rate;
        s.ps_mass += m;
        s.evals += 1;
    }
    Ok((s, peak))
}

/// Kink-aware rule along one amplitude axis. `inner(x)` integrates the
/// remaining axes at `x` and reports the peak selection value it saw;
/// `peak(x)` reports that value alone. Raw integrals use the base rule.
/// The post-selected integral uses the base rule only when every node is
/// selected, otherwise the selected intervals get composite panels.
fn integrate_axis<I, P>(axis: &Axis, panel: &(Vec<f64>, Vec<f64>), inner: I, peak: P) -> Result<(Sums, f64)>
where
    I: Fn(f64) -> Result<(Sums, f64)> + Sync,
    P: Fn(f64, &mut u64) -> Result<f64>,
{
    let base = axis.nodes.par_iter().map(|&x| inner(x)).collect::<Result<Vec<_>>>()?;
    let mut s = Sums::default();
    for ((inn, _), w) in base.iter().zip(&axis.weights) {
        s.raw += w * inn.raw;
        s.mass += w * inn.mass;
        s.evals += inn.evals;
    }
    let peaks: Vec<f64> = base.iter().map(|b| b.1).collect();
    let top = peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let selected = peaks.iter().filter(|v| **v > 0.0).count();
    if selected == 0 {
        return Ok((s, top));
    }
    if selected == peaks.len() || axis.nodes.len() == 1 {
        for ((inn, _), w) in base.iter().zip(&axis.weights) {
            s.ps += w * inn.ps;
            s.ps_mass += w * inn.ps_mass;
        }
        return Ok((s, top));
    }
    let tol = 1e-6 * axis.max;
    let intervals = selected_intervals(&axis.nodes, &peaks, axis.max, |lo, f_lo, hi, f_hi| {
        illinois(|x| peak(x, &mut s.evals), lo, f_lo, hi, f_hi, tol, 40)
    })?;
    let rule = panel_rule(&intervals, axis.max, axis.nodes.len(), panel);
    let parts = rule.par_iter().map(|&(x, _)| inner(x)).collect::<Result<Vec<_>>>()?;
    for ((x, w), (inn, _)) in rule.iter().zip(&parts) {
        let w = w * axis.density(*x);
        s.ps += w * inn.ps;
        s.ps_mass += w * inn.ps_mass;
        s.evals += inn.evals;
    }
    Ok((s, top))
}

struct Integrand<'a> {
    model: &'a RateModel,
    lik: Likelihood,
    exps: Option<OverlapExponents>,
    lay: Layout,
    panel: (Vec<f64>, Vec<f64>),
}

impl Integrand<'_> {
    fn gamma_axis(&self, amp_a: f64, amp_b: f64) -> Axis {
        let h = self.lik.gamma_half_width(amp_a, amp_b, self.lay.cutoff);
        let g = &self.lay.g;
        Axis {
            nodes: g.nodes.iter().map(|x| x * h).collect(),
            weights: g.weights.iter().map(|w| w * h).collect(),
            max: h,
            prior: None,
        }
    }

    fn line(&self, amp_a: f64, amp_b: f64) -> Line<'_> {
        Line {
            model: self.model,
            lik: &self.lik,
            amp_a,
            amp_b,
            coeffs: self.exps.map(|e| e.coeffs(amp_a, amp_b)),
        }
    }

    fn slice(&self, amp_a: f64) -> Result<(Sums, f64)> {
        integrate_axis(
            &self.lay.b,
            &self.panel,
            |b| integrate_line(&self.line(amp_a, b), &self.gamma_axis(amp_a, b), &self.panel),
            |b, evals| self.line(amp_a, b).peak(&self.gamma_axis(amp_a, b), evals),
        )
    }

    fn slice_peak(&self, amp_a: f64, evals: &mut u64) -> Result<f64> {
        let mut top = f64::NEG_INFINITY;
        for &b in &self.lay.b.nodes {
            top = top.max(self.line(amp_a, b).peak(&self.gamma_axis(amp_a, b), evals)?);
        }
        Ok(top)
    }
}

fn integrate(params: &ProtocolParams, grid: &GridSpec) -> Result<Sums> {
    grid.validate()?;
    let model = RateModel::new(params)?;
    let f = Integrand {
        model: &model,
        lik: Likelihood::new(&model)?,
        exps: model.overlap_exponents().copied(),
        lay: layout(&model, grid),
        panel: gauss_legendre(PANEL_NODES),
    };
    let (total, _) = integrate_axis(&f.lay.a, &f.panel, |a| f.slice(a), |a, evals| f.slice_peak(a, evals))?;
    if !total.raw.is_finite() || !total.ps.is_finite() {
        return Err(Error::NumericalDegeneracy("non-finite rate integral".into()));
    }
    Ok(total)
}

/// `R = ∫ p R̃`.
pub fn raw_rate(params: &ProtocolParams, grid: &GridSpec) -> Result<RateEstimate> {
    let s = integrate(params, grid)?;
    Ok(RateEstimate { value: s.raw, std_err: 0.0, n_evals: s.evals, ps_mass: s.ps_mass.clamp(0.0, 1.0) })
}

/// `R_PS = ∫ p max{R̃, 0}`.
pub fn ps_rate(params: &ProtocolParams, grid: &GridSpec) -> Result<RateEstimate> {
    let s = integrate(params, grid)?;
    Ok(RateEstimate { value: s.ps, std_err: 0.0, n_evals: s.evals, ps_mass: s.ps_mass.clamp(0.0, 1.0) })
}

/// Raw and post-selected rates from one pass over the grid.
pub fn rate_pair(params: &ProtocolParams, grid: &GridSpec) -> Result<(RateEstimate, RateEstimate)> {
    let s = integrate(params, grid)?;
    let mass = s.ps_mass.clamp(0.0, 1.0);
    Ok((
        RateEstimate { value: s.raw, std_err: 0.0, n_evals: s.evals, ps_mass: mass },
        RateEstimate { value: s.ps, std_err: 0.0, n_evals: s.evals, ps_mass: mass },
    ))
}

#[derive(Debug, Clone, Copy, Default)]
struct McSums {
    n: u64,
    raw: f64,
    raw_sq: f64,
    ps: f64,
    ps_sq: f64,
    selected: u64,
}

/// Forward-sampled protocol draws: raw and post-selected estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimates {
    pub raw: RateEstimate,
    pub ps: RateEstimate,
}

fn mc_batch(model: &RateModel, batch: u64, n: usize, seed: u64) -> Result<McSums> {
    let p = model.params();
    let eff = p.effective();
    let lik = Likelihood::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    let mut s = McSums::default();
    let sd_a = p.sigma_a.sqrt();
    for _ in 0..n {
        let qa: f64 = sd_a * rng.sample::<f64, _>(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let k = if qa >= 0.0 { 1.0 } else { -1.0 };
        let amp_a = qa.abs();
        let a = lik.a_coef * amp_a;
        let (amp_b, gamma) = if p.scenario.is_restricted() {
            let shifted = lik.upsilon_tilde.sqrt() * z1;
            let gamma = shifted - k * a;
            let x = lik.bob_gain * shifted + lik.v_b.sqrt() * z2;
            (x.abs(), gamma)
        } else {
            let qb = p.sigma_b.sqrt() * z2;
            let b = (0.5 * eff.eta * eff.tau_b).sqrt() * qb;
            (qb.abs(), -(k * a - b) + lik.upsilon.sqrt() * z1)
        };
        let br = model.breakdown(&PSPoint { amp_a, amp_b, gamma })?;
        let ps = if model.selection_value(&br) > 0.0 {
            s.selected += 1;
            br.rate
        } else {
            0.0
        };
        s.n += 1;
        s.raw += br.rate;
        s.raw_sq += br.rate * br.rate;
        s.ps += ps;
        s.ps_sq += ps * ps;
    }
    Ok(s)
}

/// Monte Carlo estimate with `n_samples` draws; batch `k` of
/// [`MC_BATCH`] samples uses ChaCha8 stream `k` of `seed`, and batches are
/// reduced in index order, so the result does not depend on thread count.
pub fn montecarlo(params: &ProtocolParams, n_samples: usize, seed: u64) -> Result<McEstimates> {
    if n_samples < MC_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "n_samples must be >= {MC_MIN_SAMPLES}, got {n_samples}"
        )));
    }
    let model = RateModel::new(params)?;
    let n_batches = n_samples.div_ceil(MC_BATCH);
    let batches = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let n = MC_BATCH.min(n_samples - b * MC_BATCH);
            mc_batch(&model, b as u64, n, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = McSums::default();
    for b in &batches {
        t.n += b.n;
        t.raw += b.raw;
        t.raw_sq += b.raw_sq;
        t.ps += b.ps;
        t.ps_sq += b.ps_sq;
        t.selected += b.selected;
    }
    let n = t.n as f64;
    let est = |sum: f64, sq: f64| {
        let mean = sum / n;
        let var = ((sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        RateEstimate { value: mean, std_err: (var / n).sqrt(), n_evals: t.n, ps_mass: t.selected as f64 / n }
    };
    Ok(McEstimates { raw: est(t.raw, t.raw_sq), ps: est(t.ps, t.ps_sq) })
}

pub fn ps_rate_montecarlo(params: &ProtocolParams, n_samples: usize, seed: u64) -> Result<RateEstimate> {
    Ok(montecarlo(params, n_samples, seed)?.ps)
}

pub fn raw_rate_montecarlo(params: &ProtocolParams, n_samples: usize, seed: u64) -> Result<RateEstimate> {
    Ok(montecarlo(params, n_samples, seed)?.raw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub base: RateEstimate,
    pub refined: RateEstimate,
    /// `|ΔR_PS| / max(R_PS, 1e-12)`
    pub rel_change: f64,
}

/// Recomputes `R_PS` with every axis refined by 1.5.
pub fn convergence_check(params: &ProtocolParams, grid: &GridSpec) -> Result<Convergence> {
    let base = ps_rate(params, grid)?;
    let refined = ps_rate(params, &grid.refined(1.5))?;
    Ok(Convergence {
        base,
        refined,
        rel_change: (refined.value - base.value).abs() / base.value.max(1e-12),
    })
}
