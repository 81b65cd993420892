//! Finite-size scaling: polynomial interpolation of ratio curves, pairwise
//! crossings, data collapse and slope exponents. All uncertainties are
//! parametric bootstraps (each point redrawn from a normal with its sigma).

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub r: f64,
    pub sigma: f64,
}

/// `R(x)` at one linear size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub l: usize,
    pub points: Vec<CurvePoint>,
}

impl RatioCurve {
    pub fn new(l: usize, points: Vec<CurvePoint>) -> Result<Self> {
        let c = RatioCurve { l, points };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::InvalidParam("curve size must be positive".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].x > w[0].x) {
                return Err(Error::InvalidParam(format!("L={}: x values not strictly increasing at {}", self.l, w[1].x)));
            }
        }
        for p in &self.points {
            if !(p.sigma > 0.0) || !p.sigma.is_finite() || !p.x.is_finite() || !p.r.is_finite() {
                return Err(Error::InvalidParam(format!("L={}: bad point {p:?}", self.l)));
            }
        }
        Ok(())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.points.first().map_or(f64::NAN, |p| p.x), self.points.last().map_or(f64::NAN, |p| p.x))
    }

    /// Copy with every `r` redrawn from `N(r, sigma)`.
    pub fn resampled<R: Rng + ?Sized>(&self, rng: &mut R) -> RatioCurve {
        let points = self
            .points
            .iter()
            .map(|p| {
                let z: f64 = rng.sample(StandardNormal);
                CurvePoint { r: p.r + p.sigma * z, ..*p }
            })
            .collect();
        RatioCurve { l: self.l, points }
    }

    fn sort_key(&self) -> (usize, Vec<[u64; 3]>) {
        (self.l, self.points.iter().map(|p| [p.x.to_bits(), p.r.to_bits(), p.sigma.to_bits()]).collect())
    }
}

/// Weighted least-squares solution with parameter covariance; rows are
/// already scaled by `1/sigma`.
fn weighted_lsq(a: DMatrix<f64>, b: DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = a.ncols();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::Numerical(format!("rank-deficient design matrix (condition {:e})", smax / smin)));
    }
    let coef = svd.solve(&b, 0.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let v_t = svd.v_t.as_ref().expect("requested");
    let mut cov = DMatrix::zeros(k, k);
    for (m, s) in svd.singular_values.iter().enumerate() {
        let row = v_t.row(m);
        cov += row.transpose() * row / (s * s);
    }
    Ok((coef, cov))
}

/// Polynomial in `t = (x - center) / half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub center: f64,
    pub half_width: f64,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
}

impl PolyFit {
    fn t(&self, x: f64) -> f64 {
        (x - self.center) / self.half_width
    }

    fn basis(&self, x: f64) -> Vec<f64> {
        let t = self.t(x);
        (0..self.coefficients.len()).map(|k| t.powi(k as i32)).collect()
    }

    fn dbasis(&self, x: f64) -> Vec<f64> {
        let t = self.t(x);
        (0..self.coefficients.len())
            .map(|k| if k == 0 { 0.0 } else { k as f64 * t.powi(k as i32 - 1) / self.half_width })
            .collect()
    }

    fn contract(&self, phi: &[f64]) -> (f64, f64) {
        let v: f64 = phi.iter().zip(&self.coefficients).map(|(a, c)| a * c).sum();
        let mut var = 0.0;
        for (i, a) in phi.iter().enumerate() {
            for (j, b) in phi.iter().enumerate() {
                var += a * self.covariance[i][j] * b;
            }
        }
        (v, var.max(0.0).sqrt())
    }

    pub fn value(&self, x: f64) -> f64 {
        self.basis(x).iter().zip(&self.coefficients).map(|(a, c)| a * c).sum()
    }

    /// Value with propagated one-sigma error.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        self.contract(&self.basis(x))
    }

    /// First derivative with propagated error.
    pub fn slope(&self, x: f64) -> (f64, f64) {
        self.contract(&self.dbasis(x))
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }
}

pub const DEFAULT_DEGREE: usize = 3;

/// Weighted polynomial least squares. Needs at least `degree + 2` points.
pub fn fit_curve(curve: &RatioCurve, degree: usize) -> Result<PolyFit> {
    fit_poly(curve, degree, true)
}

/// Bootstrap refits pass `warn = false`.
fn fit_poly(curve: &RatioCurve, degree: usize, warn: bool) -> Result<PolyFit> {
    curve.validate()?;
    let n = curve.points.len();
    if n < degree + 2 {
        return Err(Error::InsufficientData(format!("L={}: {n} points for degree {degree}", curve.l)));
    }
    let (lo, hi) = curve.x_range();
    let center = 0.5 * (lo + hi);
    let half_width = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);
    let k = degree + 1;
    let a = DMatrix::from_fn(n, k, |i, m| {
        let p = curve.points[i];
        ((p.x - center) / half_width).powi(m as i32) / p.sigma
    });
    let b = DVector::from_fn(n, |i, _| curve.points[i].r / curve.points[i].sigma);
    let (coef, cov) = weighted_lsq(a.clone(), b.clone())?;
    let chi2 = (a * &coef - b).norm_squared();
    let fit = PolyFit {
        center,
        half_width,
        coefficients: coef.iter().copied().collect(),
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        chi2,
        dof: n - k,
    };
    if warn && !is_monotone_like_data(curve, &fit) {
        log::warn!("L={}: interpolant is not monotone on the data interval", curve.l);
    }
    Ok(fit)
}

/// True unless the data are monotone and the fit is not.
fn is_monotone_like_data(curve: &RatioCurve, fit: &PolyFit) -> bool {
    let d: Vec<f64> = curve.points.windows(2).map(|w| w[1].r - w[0].r).collect();
    let sign = if d.iter().all(|&v| v > 0.0) {
        1.0
    } else if d.iter().all(|&v| v < 0.0) {
        -1.0
    } else {
        return true;
    };
    let (lo, hi) = curve.x_range();
    (0..=200).all(|k| {
        let x = lo + (hi - lo) * k as f64 / 200.0;
        sign * fit.slope(x).0 >= 0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingOptions {
    pub degree: usize,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions { degree: DEFAULT_DEGREE, n_boot: 1000, seed: 0 }
    }
}

/// Crossing of two sizes. `x` is `None` when the fits do not cross inside
/// the shared window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub l_a: usize,
    pub l_b: usize,
    pub x: Option<f64>,
    pub sigma: Option<f64>,
    /// Bootstrap replicas that also crossed.
    pub n_boot_crossed: usize,
}

const ROOT_GRID: usize = 256;

/// Roots of `fa - fb` inside `[lo, hi]`, located on a grid and refined by
/// bisection.
fn roots(fa: &PolyFit, fb: &PolyFit, lo: f64, hi: f64) -> Vec<f64> {
    let g = |x: f64| fa.value(x) - fb.value(x);
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(lo);
    for k in 1..=ROOT_GRID {
        let x1 = lo + (hi - lo) * k as f64 / ROOT_GRID as f64;
        let g1 = g(x1);
        if g0 == 0.0 {
            out.push(x0);
        } else if g0 * g1 < 0.0 {
            let (mut a, mut b, mut ga) = (x0, x1, g0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 || b - a <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
                    a = m;
                    b = m;
                    break;
                }
                if ga * gm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    ga = gm;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        g0 = g1;
    }
    if g0 == 0.0 {
        out.push(x0);
    }
    out
}

fn shared_window(a: &RatioCurve, b: &RatioCurve) -> Option<(f64, f64)> {
    let (la, ha) = a.x_range();
    let (lb, hb) = b.x_range();
    let (lo, hi) = (la.max(lb), ha.min(hb));
    (lo < hi).then_some((lo, hi))
}

fn nearest(rs: &[f64], target: f64) -> Option<f64> {
    rs.iter().copied().min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
}

/// Crossing of the two interpolants, with a bootstrap error. Symmetric in its
/// arguments bit for bit.
pub fn find_crossing(a: &RatioCurve, b: &RatioCurve, opts: CrossingOptions) -> Result<Crossing> {
    let (a, b) = if a.sort_key() <= b.sort_key() { (a, b) } else { (b, a) };
    let mut out = Crossing { l_a: a.l, l_b: b.l, x: None, sigma: None, n_boot_crossed: 0 };
    let Some((lo, hi)) = shared_window(a, b) else {
        return Ok(out);
    };
    let (fa, fb) = (fit_curve(a, opts.degree)?, fit_curve(b, opts.degree)?);
    let rs = roots(&fa, &fb, lo, hi);
    let Some(x) = nearest(&rs, 0.5 * (lo + hi)) else {
        return Ok(out);
    };
    if rs.len() > 1 {
        log::warn!("L={} vs L={}: {} crossings in window, keeping {x}", a.l, b.l, rs.len());
    }
    out.x = Some(x);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut xs = Vec::with_capacity(opts.n_boot);
    for _ in 0..opts.n_boot {
        let (ra, rb) = (a.resampled(&mut rng), b.resampled(&mut rng));
        let (Ok(fa), Ok(fb)) = (fit_poly(&ra, opts.degree, false), fit_poly(&rb, opts.degree, false)) else {
            continue;
        };
        if let Some(xb) = nearest(&roots(&fa, &fb, lo, hi), x) {
            xs.push(xb);
        }
    }
    out.n_boot_crossed = xs.len();
    out.sigma = std_dev(&xs);
    Ok(out)
}

/// Crossings of `(L, 2L)` pairs when both sizes are present, otherwise of
/// neighbouring sizes.
pub fn crossing_pairs(sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut s = sizes.to_vec();
    s.sort_unstable();
    s.dedup();
    let doubled: Vec<(usize, usize)> = s.iter().filter(|&&l| s.contains(&(2 * l))).map(|&l| (l, 2 * l)).collect();
    if doubled.is_empty() {
        s.windows(2).map(|w| (w[0], w[1])).collect()
    } else {
        doubled
    }
}

fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseOptions {
    pub interior_knots: usize,
    /// Keep only points with `|x - x_c_init| <= window`.
    #[serde(default)]
    pub window: Option<f64>,
    pub restarts: usize,
    pub max_iters: u64,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        CollapseOptions { interior_knots: 4, window: None, restarts: 10, max_iters: 2000, n_boot: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub x_c: f64,
    pub nu: f64,
    pub quality: f64,
    /// Bootstrap standard deviations.
    pub errors: CollapseErrors,
    pub converged: bool,
}

/// `None` when too few bootstrap refits succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseErrors {
    pub x_c: Option<f64>,
    pub nu: Option<f64>,
}

const NU_RANGE: (f64, f64) = (0.1, 10.0);

struct Pooled {
    u: f64,
    r: f64,
    w: f64,
    weight_share: f64,
}

/// Master-curve quality `S(x_c, nu)`. Every point is mapped to
/// `u = (x - x_c) L^(1/nu)` and the union is fitted by one cubic regression
/// spline with knots at quantiles of `u` in which each size carries equal
/// weight. `S` is the weighted mean squared residual `sum w r^2 / sum w`
/// (with `w = 1/sigma^2`), inflated by `n / (n - k)` for the `k` spline
/// parameters; it is unchanged when every sigma is scaled by a common factor.
/// Infinite when some size has fewer than three points.
///
/// The point set never depends on `(x_c, nu)`, so `S` is continuous; an
/// earlier version kept only the `u` range shared by all sizes, which let
/// the minimizer park on window edges where points drop out.
pub fn collapse_quality(curves: &[RatioCurve], x_c: f64, nu: f64, interior_knots: usize) -> f64 {
    if !(nu >= NU_RANGE.0 && nu <= NU_RANGE.1) || !x_c.is_finite() {
        return f64::INFINITY;
    }
    let scaled: Vec<Vec<(f64, CurvePoint)>> = curves
        .iter()
        .map(|c| {
            let f = (c.l as f64).powf(1.0 / nu);
            c.points.iter().map(|p| ((p.x - x_c) * f, *p)).collect()
        })
        .collect();
    let lo = scaled.iter().flatten().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().flatten().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return f64::INFINITY;
    }
    let mut pts = Vec::new();
    for c in &scaled {
        if c.len() < 3 {
            return f64::INFINITY;
        }
        let share = 1.0 / c.len() as f64;
        pts.extend(c.iter().map(|(u, p)| Pooled { u: *u, r: p.r, w: 1.0 / (p.sigma * p.sigma), weight_share: share }));
    }
    // order-independent pooling
    pts.sort_by(|a, b| a.u.total_cmp(&b.u).then(a.r.total_cmp(&b.r)).then(a.w.total_cmp(&b.w)));
    let knots = balanced_quantiles(&pts, interior_knots);
    let k = 4 + knots.len();
    let n = pts.len();
    if n <= k {
        return f64::INFINITY;
    }
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let basis = |u: f64, m: usize| {
        let t = (u - mid) / half;
        if m < 4 {
            t.powi(m as i32)
        } else {
            ((t - (knots[m - 4] - mid) / half).max(0.0)).powi(3)
        }
    };
    let a = DMatrix::from_fn(n, k, |i, m| basis(pts[i].u, m) * pts[i].w.sqrt());
    let b = DVector::from_fn(n, |i, _| pts[i].r * pts[i].w.sqrt());
    let Ok((coef, _)) = weighted_lsq(a.clone(), b.clone()) else {
        return f64::INFINITY;
    };
    let chi2 = (a * coef - b).norm_squared();
    let sw: f64 = pts.iter().map(|p| p.w).sum();
    chi2 / sw * n as f64 / (n - k) as f64
}

fn balanced_quantiles(pts: &[Pooled], k: usize) -> Vec<f64> {
    let total: f64 = pts.iter().map(|p| p.weight_share).sum();
    let mut out = Vec::with_capacity(k);
    let mut acc = 0.0;
    let mut q = 1;
    for p in pts {
        acc += p.weight_share;
        while q <= k && acc >= total * q as f64 / (k + 1) as f64 {
            out.push(p.u);
            q += 1;
        }
    }
    out.dedup();
    out
}

struct Objective<'a> {
    curves: &'a [RatioCurve],
    knots: usize,
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let q = collapse_quality(self.curves, p[0], p[1].exp(), self.knots);
        Ok(if q.is_finite() { q } else { f64::MAX })
    }
}

struct Minimum {
    x_c: f64,
    nu: f64,
    quality: f64,
    converged: bool,
}

fn simplex(curves: &[RatioCurve], start: (f64, f64), step: (f64, f64), opts: &CollapseOptions) -> Result<Minimum> {
    let (x0, l0) = (start.0, start.1.ln());
    let init = vec![vec![x0, l0], vec![x0 + step.0, l0], vec![x0, l0 + step.1]];
    let solver = NelderMead::new(init)
        .with_sd_tolerance(1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(Objective { curves, knots: opts.interior_knots }, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let st = res.state();
    let best = st.get_best_param().cloned().unwrap_or_else(|| vec![x0, l0]);
    let converged = matches!(st.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    Ok(Minimum { x_c: best[0], nu: best[1].exp(), quality: st.get_best_cost(), converged })
}

fn best_of(curves: &[RatioCurve], x_c: f64, nu: f64, opts: &CollapseOptions, rng: &mut ChaCha8Rng) -> Result<Minimum> {
    let span = curves
        .iter()
        .map(|c| c.x_range().1 - c.x_range().0)
        .fold(0.0, f64::max)
        .max(1e-6);
    let mut best = simplex(curves, (x_c, nu), (0.05 * span, 0.1), opts)?;
    for _ in 0..opts.restarts {
        let dx: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1 * span;
        let dl: f64 = rng.sample::<f64, _>(StandardNormal) * 0.3;
        let start = (x_c + dx, (nu * dl.exp()).clamp(NU_RANGE.0 * 1.01, NU_RANGE.1 * 0.99));
        let m = simplex(curves, start, (0.05 * span, 0.1), opts)?;
        if m.quality < best.quality {
            best = m;
        }
    }
    Ok(best)
}

/// Minimizes [`collapse_quality`] by simplex descent over `(x_c, ln nu)`
/// from the initial guess plus `restarts` randomly perturbed starts.
/// Bootstrap fits restart from the best point. A fit that hits the
/// iteration cap is returned with `converged = false`.
pub fn collapse_fit(curves: &[RatioCurve], x_c_init: f64, nu_init: f64, opts: CollapseOptions) -> Result<CollapseFit> {
    let mut sizes: Vec<usize> = curves.iter().map(|c| c.l).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientData(format!("collapse needs at least 3 sizes, got {}", sizes.len())));
    }
    for c in curves {
        c.validate()?;
    }
    let windowed: Vec<RatioCurve> = curves
        .iter()
        .map(|c| RatioCurve {
            l: c.l,
            points: c.points.iter().filter(|p| opts.window.is_none_or(|w| (p.x - x_c_init).abs() <= w)).copied().collect(),
        })
        .collect();
    if let Some(c) = windowed.iter().find(|c| c.points.len() < 3) {
        return Err(Error::InsufficientData(format!("L={}: {} points in the collapse window", c.l, c.points.len())));
    }
    let curves = &windowed[..];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let best = best_of(curves, x_c_init, nu_init, &opts, &mut rng)?;
    if !best.quality.is_finite() || best.quality == f64::MAX {
        return Err(Error::Numerical("collapse quality is not finite near the initial guess".into()));
    }
    if !best.converged {
        log::warn!("collapse fit did not converge; best so far x_c={} nu={}", best.x_c, best.nu);
    }
    let boot_opts = CollapseOptions { restarts: 0, ..opts };
    let mut xs = Vec::new();
    let mut nus = Vec::new();
    for _ in 0..opts.n_boot {
        let rs: Vec<RatioCurve> = curves.iter().map(|c| c.resampled(&mut rng)).collect();
        if let Ok(m) = best_of(&rs, best.x_c, best.nu, &boot_opts, &mut rng) {
            if m.quality < f64::MAX {
                xs.push(m.x_c);
                nus.push(m.nu);
            }
        }
    }
    Ok(CollapseFit {
        x_c: best.x_c,
        nu: best.nu,
        quality: best.quality,
        errors: CollapseErrors { x_c: std_dev(&xs), nu: std_dev(&nus) },
        converged: best.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeExponent {
    pub nu: f64,
    /// Bootstrap error; `None` with fewer than three usable sizes.
    pub sigma: Option<f64>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeOptions {
    pub degree: usize,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        SlopeOptions { degree: DEFAULT_DEGREE, n_boot: 500, seed: 0 }
    }
}

/// `1/nu` from a weighted log-log fit of `|dR/dx|` at `x_c` against `L`.
/// Returns the exponent and the sizes that entered.
fn slope_nu(curves: &[RatioCurve], x_c: f64, degree: usize, warn: bool) -> Result<(f64, Vec<usize>)> {
    let mut slopes = Vec::new();
    for c in curves {
        let (lo, hi) = c.x_range();
        if !(x_c >= lo && x_c <= hi) {
            return Err(Error::InvalidParam(format!("x_c = {x_c} outside the L={} range [{lo}, {hi}]", c.l)));
        }
        let (s, e) = fit_poly(c, degree, warn)?.slope(x_c);
        slopes.push((c.l, s, e));
    }
    let sign = slopes.iter().map(|s| s.1.signum()).sum::<f64>().signum();
    let mut pts = Vec::new();
    for &(l, s, e) in &slopes {
        if sign == 0.0 || s * sign <= 0.0 {
            if warn {
                log::warn!("L={l}: slope {s} at x_c has the wrong sign, excluded");
            }
            continue;
        }
        let rel = (e / s.abs()).max(1e-12);
        pts.push(((l as f64).ln(), s.abs().ln(), 1.0 / rel, l));
    }
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!("{} sizes with usable slopes", pts.len())));
    }
    let a = DMatrix::from_fn(pts.len(), 2, |i, m| if m == 0 { pts[i].2 } else { pts[i].0 * pts[i].2 });
    let b = DVector::from_fn(pts.len(), |i, _| pts[i].1 * pts[i].2);
    let (coef, _) = weighted_lsq(a, b)?;
    if !(coef[1] > 0.0) {
        return Err(Error::Numerical(format!("slopes do not grow with L (exponent {})", coef[1])));
    }
    Ok((1.0 / coef[1], pts.iter().map(|p| p.3).collect()))
}

pub fn nu_from_slopes(curves: &[RatioCurve], x_c: f64, opts: SlopeOptions) -> Result<SlopeExponent> {
    let (nu, sizes) = slope_nu(curves, x_c, opts.degree, true)?;
    if sizes.len() < 3 {
        return Ok(SlopeExponent { nu, sigma: None, sizes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut nus = Vec::with_capacity(opts.n_boot);
    for _ in 0..opts.n_boot {
        let rs: Vec<RatioCurve> = curves.iter().map(|c| c.resampled(&mut rng)).collect();
        if let Ok((n, _)) = slope_nu(&rs, x_c, opts.degree, false) {
            nus.push(n);
        }
    }
    Ok(SlopeExponent { nu, sigma: std_dev(&nus), sizes })
}

/// Noise-free or noisy samples of `R = f((x - x_c) L^(1/nu))`.
pub fn synthetic_curves<F: Fn(f64) -> f64>(
    sizes: &[usize],
    xs: &[f64],
    x_c: f64,
    nu: f64,
    sigma: f64,
    f: F,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<RatioCurve> {
    let mut rng = rng;
    sizes
        .iter()
        .map(|&l| {
            let points = xs
                .iter()
                .map(|&x| {
                    let noise = match rng.as_deref_mut() {
                        Some(r) => sigma * r.sample::<f64, _>(StandardNormal),
                        None => 0.0,
                    };
                    CurvePoint { x, r: f((x - x_c) * (l as f64).powf(1.0 / nu)) + noise, sigma }
                })
                .collect();
            RatioCurve { l, points }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    fn master(u: f64) -> f64 {
        2.0 - u.tanh()
    }

    #[test]
    fn exact_cubic_has_zero_residual() {
        let pts = grid(-1.0, 2.0, 9)
            .into_iter()
            .map(|x| CurvePoint { x, r: 1.0 - 2.0 * x + 0.5 * x * x * x, sigma: 0.1 })
            .collect();
        let fit = fit_curve(&RatioCurve::new(4, pts).unwrap(), 3).unwrap();
        assert!(fit.chi2 < 1e-20, "{}", fit.chi2);
        assert!((fit.value(0.3) - (1.0 - 0.6 + 0.5 * 0.027)).abs() < 1e-12);
        assert!((fit.slope(1.0).0 - (-2.0 + 1.5)).abs() < 1e-10);
    }

    #[test]
    fn noisy_cubic_chi2_is_reasonable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut chis = Vec::new();
        for _ in 0..200 {
            let pts = grid(0.0, 1.0, 30)
                .into_iter()
                .map(|x| CurvePoint { x, r: x * x * x - x + 0.02 * rng.sample::<f64, _>(StandardNormal), sigma: 0.02 })
                .collect();
            chis.push(fit_curve(&RatioCurve { l: 4, points: pts }, 3).unwrap().reduced_chi2());
        }
        let inside = chis.iter().filter(|c| (0.5..=1.5).contains(*c)).count();
        assert!(inside as f64 >= 0.9 * chis.len() as f64, "{inside}");
        let mean = chis.iter().sum::<f64>() / chis.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn rank_deficiency_and_short_curves_are_errors() {
        let pts = |xs: &[f64]| xs.iter().map(|&x| CurvePoint { x, r: x, sigma: 1.0 }).collect::<Vec<_>>();
        assert!(matches!(fit_curve(&RatioCurve::new(4, pts(&[0.0, 1.0, 2.0])).unwrap(), 3), Err(Error::InsufficientData(_))));
        // three distinct abscissae up to rounding cannot fix a cubic
        let clumped = RatioCurve::new(4, pts(&[0.0, 1e-15, 1.0, 1.0 + 1e-15, 2.0, 2.0 + 1e-15])).unwrap();
        assert!(matches!(fit_curve(&clumped, 3), Err(Error::Numerical(_))));
        assert!(RatioCurve::new(4, pts(&[0.0, 0.0])).is_err());
        assert!(RatioCurve::new(4, vec![CurvePoint { x: 0.0, r: 1.0, sigma: 0.0 }]).is_err());
    }

    #[test]
    fn lines_cross_at_half() {
        let line = |l, a: f64, b: f64| RatioCurve {
            l,
            points: grid(0.0, 1.0, 11).into_iter().map(|x| CurvePoint { x, r: a + b * x, sigma: 1e-6 }).collect(),
        };
        let c = find_crossing(&line(4, 1.0, -1.0), &line(8, 0.0, 1.0), CrossingOptions { degree: 1, n_boot: 200, seed: 1 }).unwrap();
        assert!((c.x.unwrap() - 0.5).abs() < 1e-12);
        assert!(c.sigma.unwrap() < 1e-5);

        let par = find_crossing(&line(4, 1.0, 1.0), &line(8, 0.0, 1.0), CrossingOptions { degree: 1, n_boot: 10, seed: 1 }).unwrap();
        assert_eq!(par.x, None);
    }

    #[test]
    fn planted_crossing_is_recovered_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = grid(0.30, 0.40, 11);
        let curves = synthetic_curves(&[8, 16], &xs, 0.355, 1.0, 0.005, master, Some(&mut rng));
        let opts = CrossingOptions { n_boot: 1000, seed: 4, ..Default::default() };
        let ab = find_crossing(&curves[0], &curves[1], opts).unwrap();
        let ba = find_crossing(&curves[1], &curves[0], opts).unwrap();
        assert_eq!(ab, ba);
        let (x, s) = (ab.x.unwrap(), ab.sigma.unwrap());
        assert!(s > 0.0 && s < 0.01, "{s}");
        assert!((x - 0.355).abs() < 3.0 * s, "{x} +- {s}");
    }

    #[test]
    fn pairs_prefer_doubling() {
        assert_eq!(crossing_pairs(&[4, 6, 8, 12]), vec![(4, 8), (6, 12)]);
        assert_eq!(crossing_pairs(&[4, 6, 10]), vec![(4, 6), (6, 10)]);
    }

    #[test]
    fn quality_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = grid(0.30, 0.41, 12);
        let curves = synthetic_curves(&[6, 8, 12], &xs, 0.355, 1.0, 0.01, master, Some(&mut rng));
        let s = collapse_quality(&curves, 0.36, 0.9, 2);
        let rev: Vec<RatioCurve> = curves.iter().rev().cloned().collect();
        assert_eq!(s, collapse_quality(&rev, 0.36, 0.9, 2));
        let scaled: Vec<RatioCurve> = curves
            .iter()
            .map(|c| RatioCurve { l: c.l, points: c.points.iter().map(|p| CurvePoint { sigma: 7.0 * p.sigma, ..*p }).collect() })
            .collect();
        assert!((collapse_quality(&scaled, 0.36, 0.9, 2) / s - 1.0).abs() < 1e-12);
        // the planted point beats a wrong one
        assert!(collapse_quality(&curves, 0.355, 1.0, 2) < collapse_quality(&curves, 0.34, 1.5, 2));
    }

    #[test]
    fn exact_data_collapse_recovers_planted_point() {
        let xs = grid(0.30, 0.41, 23);
        let curves = synthetic_curves(&[8, 12, 16], &xs, 0.355, 1.0, 1e-6, master, None);
        let fit = collapse_fit(&curves, 0.35, 1.2, CollapseOptions { n_boot: 0, ..Default::default() }).unwrap();
        assert!((fit.x_c - 0.355).abs() < 1e-3, "{fit:?}");
        assert!((fit.nu - 1.0).abs() < 1e-3, "{fit:?}");
    }

    #[test]
    fn noisy_collapse_recovers_planted_exponents() {
        for (nu, seed) in [(1.0, 21), (2.0 / 3.0, 22)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs = grid(0.31, 0.40, 19);
            let curves = synthetic_curves(&[8, 12, 16, 24], &xs, 0.355, nu, 0.005, master, Some(&mut rng));
            let fit = collapse_fit(&curves, 0.35, 1.0, CollapseOptions { n_boot: 20, seed, ..Default::default() }).unwrap();
            assert!((fit.nu / nu - 1.0).abs() < 0.05, "{nu}: {fit:?}");
            assert!((fit.x_c - 0.355).abs() < 0.005, "{fit:?}");
            let e = fit.errors.nu.unwrap();
            assert!(e > 0.0 && e < 0.1 * nu, "{fit:?}");
        }
    }

    #[test]
    fn collapse_needs_three_sizes() {
        let xs = grid(0.3, 0.4, 10);
        let curves = synthetic_curves(&[8, 8, 16], &xs, 0.355, 1.0, 0.01, master, None);
        assert!(matches!(collapse_fit(&curves, 0.35, 1.0, CollapseOptions::default()), Err(Error::InsufficientData(_))));
        assert!(collapse_fit(&curves[..1], 0.35, 1.0, CollapseOptions::default()).is_err());
    }

    #[test]
    fn slopes_recover_planted_exponents() {
        for (nu, tol) in [(1.0, 0.05), (1.70, 0.1)] {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let xs = grid(0.345, 0.365, 11);
            let curves = synthetic_curves(&[8, 16, 32], &xs, 0.355, nu, 1e-3, master, Some(&mut rng));
            let e = nu_from_slopes(&curves, 0.355, SlopeOptions { n_boot: 200, ..Default::default() }).unwrap();
            assert!((e.nu - nu).abs() < tol, "{nu}: {e:?}");
            assert!(e.sigma.unwrap() < tol, "{e:?}");
        }
        let xs = grid(0.345, 0.365, 11);
        let two = synthetic_curves(&[8, 16], &xs, 0.355, 1.0, 1e-3, master, None);
        let e = nu_from_slopes(&two, 0.355, SlopeOptions::default()).unwrap();
        assert_eq!(e.sigma, None);
        assert!((e.nu - 1.0).abs() < 0.05);
    }
}
