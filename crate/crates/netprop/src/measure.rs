//! Mean measures of the approximating Poisson process: exact sums over
//! realized patterns, closed forms for power-law / exp-power / multi-slope
//! gains, the Monte-Carlo form E|xi|(h^{-1}(St)), and disk-truncated
//! intensity measures for random patterns.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{FadingModel, Moment};
use crate::pathloss::{lambert_w, MultiSlope, PathLossModel};
use crate::patterns::{GrowthFunction, PointPattern2D, RadiusClasses};
use crate::propagation::point_probability;
use crate::rng::stream_rng;

/// Truncation-risk guard: beyond-window contribution probability per point.
pub const TRUNCATION_GUARD: f64 = 1e-6;

/// How a mean-measure value was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    ExactSum,
    ClosedForm,
    MonteCarlo,
}

/// A nondecreasing evaluator t -> M(t).
#[derive(Clone)]
pub struct MeanMeasure {
    kind: MeasureKind,
    cached: bool,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for MeanMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeanMeasure")
            .field("kind", &self.kind)
            .field("cached", &self.cached)
            .finish()
    }
}

impl MeanMeasure {
    pub fn from_fn(
        kind: MeasureKind,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MeanMeasure { kind, cached: false, eval: Arc::new(eval) }
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (self.eval)(t)
        }
    }

    /// Identity measure M(t) = t.
    pub fn identity() -> Self {
        MeanMeasure::from_fn(MeasureKind::ClosedForm, |t| t)
    }

    /// Exact per-point sum M(t) = sum_i P(0 < h(r_i)/S <= t).
    pub fn exact_sum(
        classes: Arc<RadiusClasses>,
        path_loss: PathLossModel,
        fading: FadingModel,
    ) -> Result<Self> {
        path_loss.validate()?;
        fading.validate()?;
        let pl = path_loss.clone();
        let fd = fading.clone();
        Ok(MeanMeasure::from_fn(MeasureKind::ExactSum, move |t| {
            exact_sum(&classes, &pl, &fd, t).unwrap_or(f64::NAN)
        }))
    }

    /// Power-law closed form M(t) = lambda pi t^{2/beta} E S^{2/beta} / K^2.
    pub fn power_law(lambda: f64, k: f64, beta: f64, fading: FadingModel) -> Result<Self> {
        // also validates parameters and moment finiteness
        closed_form_power_law(lambda, k, beta, &fading, 1.0)?;
        Ok(MeanMeasure::from_fn(MeasureKind::ClosedForm, move |t| {
            closed_form_power_law(lambda, k, beta, &fading, t).unwrap_or(f64::NAN)
        }))
    }

    /// Exp-power (Lambert W) closed form evaluated by quadrature.
    pub fn lambert(lambda: f64, alpha: f64, beta: f64, fading: FadingModel) -> Result<Self> {
        closed_form_lambert(lambda, alpha, beta, &fading, 1.0, LambertEval::Quadrature)?;
        Ok(MeanMeasure::from_fn(MeasureKind::ClosedForm, move |t| {
            closed_form_lambert(lambda, alpha, beta, &fading, t, LambertEval::Quadrature)
                .map(|(v, _)| v)
                .unwrap_or(f64::NAN)
        }))
    }

    /// Multi-slope closed form.
    pub fn multi_slope(lambda: f64, model: MultiSlope, fading: FadingModel) -> Result<Self> {
        multislope_mean(lambda, &model, &fading, 1.0)?;
        Ok(MeanMeasure::from_fn(MeasureKind::ClosedForm, move |t| {
            multislope_mean(lambda, &model, &fading, t).unwrap_or(f64::NAN)
        }))
    }

    /// Disk-truncated intensity form for random patterns of intensity lambda
    /// on a window of radius r_max: M(t) = lambda pi E[min(h^{-1}(St), r_max)^2].
    pub fn truncated_disk_intensity(
        lambda: f64,
        r_max: f64,
        path_loss: PathLossModel,
        fading: FadingModel,
    ) -> Result<Self> {
        if !(lambda > 0.0 && r_max > 0.0) {
            return Err(Error::InvalidParameter(
                "truncated intensity needs lambda > 0 and r_max > 0".into(),
            ));
        }
        path_loss.validate()?;
        fading.validate()?;
        let cap = lambda * std::f64::consts::PI * r_max * r_max;
        Ok(MeanMeasure::from_fn(MeasureKind::ClosedForm, move |t| {
            let v = expect_fn(
                &fading,
                &|s| {
                    let r = path_loss.inverse(s * t).unwrap_or(0.0).min(r_max);
                    lambda * std::f64::consts::PI * r * r
                },
                1e-10 * cap.max(1.0),
            )
            .unwrap_or(f64::NAN);
            v.min(cap)
        }))
    }

    /// Replace the evaluator by a dense piecewise-linear interpolant in
    /// (ln t, M) built on a log grid; exact values at the nodes. Queries below
    /// the grid extrapolate with the first segment's log-slope, queries above
    /// clamp to the last node.
    pub fn cached_log_grid(&self, t_min: f64, t_max: f64, n: usize) -> Result<MeanMeasure> {
        if !(t_min > 0.0 && t_max > t_min && n >= 8) {
            return Err(Error::InvalidParameter(
                "grid cache needs 0 < t_min < t_max and n >= 8".into(),
            ));
        }
        let l0 = t_min.ln();
        let l1 = t_max.ln();
        let xs: Vec<f64> = (0..n)
            .map(|i| l0 + (l1 - l0) * i as f64 / (n - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.par_iter().map(|&x| self.value(x.exp())).collect();
        for w in ys.windows(2) {
            if !(w[1] >= w[0] - 1e-9 * w[1].abs().max(1.0)) {
                return Err(Error::DegenerateMeasure(
                    "measure is not nondecreasing on the cache grid".into(),
                ));
            }
        }
        let kind = self.kind;
        Ok(MeanMeasure {
            kind,
            cached: true,
            eval: Arc::new(move |t: f64| {
                let x = t.ln();
                if x >= l1 {
                    return ys[n - 1];
                }
                if x <= l0 {
                    // power-law-style extrapolation from the first segment
                    let (x0, x1) = (xs[0], xs[1]);
                    let (y0, y1) = (ys[0].max(1e-300), ys[1].max(1e-300));
                    let slope = (y1.ln() - y0.ln()) / (x1 - x0);
                    return (y0.ln() + slope * (x - x0)).exp();
                }
                let idx = ((x - l0) / (l1 - l0) * (n - 1) as f64).floor() as usize;
                let idx = idx.min(n - 2);
                let w = (x - xs[idx]) / (xs[idx + 1] - xs[idx]);
                ys[idx] * (1.0 - w) + ys[idx + 1] * w
            }),
        })
    }
}

/// M(t) = sum_i p_i(t) over a finite pattern given as radius classes.
pub fn exact_sum(
    classes: &RadiusClasses,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    t: f64,
) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(r, m) in classes.classes() {
        total += m as f64 * point_probability(path_loss, fading, r, t)?;
    }
    Ok(total)
}

/// M^xi(t) for a concrete realized pattern: the Cox directing measure at t.
pub fn conditional_mean(
    pattern: &PointPattern2D,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    t: f64,
) -> Result<f64> {
    exact_sum(&pattern.radius_classes(), path_loss, fading, t)
}

/// Example-A closed form: lambda pi t^{2/beta} E[S^{2/beta}] / K^2.
pub fn closed_form_power_law(
    lambda: f64,
    k: f64,
    beta: f64,
    fading: &FadingModel,
    t: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    PathLossModel::power_law(k, beta)?;
    let moment = match fading.fractional_moment(2.0 / beta)? {
        Moment::Finite(v) => v,
        Moment::Infinite => {
            return Err(Error::InvalidParameter(format!(
                "E S^{{2/beta}} is infinite for beta = {beta}: propagation invariance fails and \
                 the power-law mean measure diverges"
            )))
        }
    };
    if t <= 0.0 {
        return Ok(0.0);
    }
    Ok(lambda * std::f64::consts::PI * t.powf(2.0 / beta) * moment / (k * k))
}

/// Evaluation strategy for the exp-power mean measure.
#[derive(Clone, Copy, Debug)]
pub enum LambertEval {
    Quadrature,
    MonteCarlo { n_samples: usize, seed: u64 },
}

/// Example-B closed form: pi lambda E[(tS)^{2/beta} e^{-2 W((alpha/beta)(tS)^{1/beta})}].
///
/// Returns the value and, for the Monte-Carlo path, its standard error.
pub fn closed_form_lambert(
    lambda: f64,
    alpha: f64,
    beta: f64,
    fading: &FadingModel,
    t: f64,
    eval: LambertEval,
) -> Result<(f64, Option<f64>)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    PathLossModel::exp_power(alpha, beta)?;
    fading.validate()?;
    if t <= 0.0 {
        return Ok((0.0, None));
    }
    let pi = std::f64::consts::PI;
    let integrand = move |s: f64| -> f64 {
        let ts = (t * s).powf(1.0 / beta);
        let w = lambert_w(alpha / beta * ts).expect("nonnegative argument");
        ts.powi(2) * (-2.0 * w).exp()
    };
    match eval {
        LambertEval::Quadrature => {
            // the integrand is bounded by (tS)^{2/beta}, whose mean is finite
            let bound = match fading.fractional_moment(2.0 / beta)? {
                Moment::Finite(m) => lambda * pi * t.powf(2.0 / beta) * m,
                Moment::Infinite => {
                    return Err(Error::InvalidParameter(
                        "E S^{2/beta} is infinite: exp-power mean measure diverges".into(),
                    ))
                }
            };
            let v = expect_fn(fading, &integrand, 1e-10 * bound.max(1e-30))?;
            Ok((lambda * pi * v, None))
        }
        LambertEval::MonteCarlo { n_samples, seed } => {
            if n_samples < 100 {
                return Err(Error::InvalidParameter(
                    "Monte-Carlo evaluation needs n_samples >= 100".into(),
                ));
            }
            let mut rng = stream_rng(seed, &[0x1a3b_0001]);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n_samples {
                let v = integrand(fading.sample(&mut rng));
                sum += v;
                sum_sq += v * v;
            }
            let n = n_samples as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
            Ok((lambda * pi * mean, Some(lambda * pi * (var / n).sqrt())))
        }
    }
}

/// Example-C closed form:
/// lambda pi sum_i c_i^2 t^{2/beta_i} E[1{s_{i-1} <= tS < s_i} S^{2/beta_i}].
pub fn multislope_mean(
    lambda: f64,
    model: &MultiSlope,
    fading: &FadingModel,
    t: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    fading.validate()?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let pi = std::f64::consts::PI;
    let c = model.inverse_coefficients();
    let betas = model.exponents();
    let levels = model.levels();
    let mut total = 0.0;
    for i in 0..c.len() {
        let lo = if i == 0 { 0.0 } else { levels[i - 1] };
        let hi = if i == levels.len() { f64::INFINITY } else { levels[i] };
        let p = 2.0 / betas[i];
        // E[1{lo <= tS < hi} S^{2/beta_i}]
        let trunc = fading.truncated_moment(p, lo / t, hi / t)?;
        total += c[i] * c[i] * t.powf(p) * trunc;
    }
    Ok(lambda * pi * total)
}

/// Literal transcription of the printed multi-slope display (factor 2 pi
/// lambda, first-power c_i, segments 1..k only). Reported alongside the
/// implemented form for transparency; the two disagree whenever the model has
/// nontrivial coefficients, which is why the implemented form is
/// cross-validated against the Monte-Carlo oracle instead.
pub fn multislope_mean_literal_display(
    lambda: f64,
    model: &MultiSlope,
    fading: &FadingModel,
    t: f64,
) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let c = model.inverse_coefficients();
    let betas = model.exponents();
    let levels = model.levels();
    let mut total = 0.0;
    for i in 0..levels.len() {
        let lo = if i == 0 { 0.0 } else { levels[i - 1] };
        let hi = levels[i];
        let p = 2.0 / betas[i];
        total += c[i] * t.powf(p) * fading.truncated_moment(p, lo / t, hi / t)?;
    }
    Ok(2.0 * lambda * std::f64::consts::PI * total)
}

/// What the Monte-Carlo estimator counts against.
#[derive(Clone, Debug)]
pub enum MeasureTarget<'a> {
    /// |xi|(h^{-1}(St)) for a realized pattern
    Pattern(&'a RadiusClasses),
    /// D(h^{-1}(St)) for a growth function / intensity form
    Growth(&'a GrowthFunction),
}

/// Monte-Carlo mean measure: average of |xi|(h^{-1}(S_j t)) (pattern form) or
/// D(h^{-1}(S_j t)) (intensity form), with its standard error.
pub fn monte_carlo_mean(
    target: &MeasureTarget<'_>,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    t: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "monte_carlo_mean needs n_samples >= 100, got {n_samples}"
        )));
    }
    path_loss.validate()?;
    fading.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if let MeasureTarget::Pattern(classes) = target {
        let r_max = classes.r_max();
        let p_beyond = fading.tail(path_loss.evaluate(r_max)? / t)?;
        if p_beyond > TRUNCATION_GUARD {
            let suggested = min_radius_for_point_prob(path_loss, fading, t, TRUNCATION_GUARD)?;
            return Err(Error::TruncationRisk {
                detail: format!(
                    "P(h^{{-1}}(St) > r_max) = {p_beyond:.3e} exceeds {TRUNCATION_GUARD:.0e}"
                ),
                suggested_r_max: suggested,
            });
        }
    }
    let draws: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[0x3c3c_0001, i as u64]);
            let s = fading.sample(&mut rng);
            let r = path_loss.inverse(s * t).unwrap_or(0.0);
            match target {
                MeasureTarget::Pattern(classes) => classes.count_within(r) as f64,
                MeasureTarget::Growth(growth) => growth.value(r),
            }
        })
        .collect();
    let n = n_samples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|&d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Expectation of a function of a fading draw, by adaptive quadrature in each
/// factor's natural domain. Supports up to two stochastic factors.
pub fn expect_fn(fading: &FadingModel, f: &dyn Fn(f64) -> f64, abs_tol: f64) -> Result<f64> {
    fading.validate()?;
    // factor the model: deterministic scale plus simple stochastic parts
    let mut scale = 1.0;
    let mut parts: Vec<FadingModel> = Vec::new();
    fn collect(m: &FadingModel, scale: &mut f64, parts: &mut Vec<FadingModel>) {
        match m {
            FadingModel::Deterministic { s0 } => *scale *= s0,
            FadingModel::Product { components } => {
                components.iter().for_each(|c| collect(c, scale, parts))
            }
            FadingModel::SharedFactor { idiosyncratic, common } => {
                collect(idiosyncratic, scale, parts);
                collect(common, scale, parts);
            }
            other => parts.push(other.clone()),
        }
    }
    collect(fading, &mut scale, &mut parts);

    // integrate E[g(X)] for one simple factor in its natural domain
    fn expect_simple(
        m: &FadingModel,
        g: &dyn Fn(f64) -> f64,
        tol: f64,
    ) -> f64 {
        use crate::numeric::integrate as quad;
        match m {
            FadingModel::Lognormal { sigma, beta } => {
                let mu = -sigma * sigma / beta;
                quad(
                    &|z: f64| {
                        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                        if phi == 0.0 {
                            return 0.0;
                        }
                        phi * g((sigma * z + mu).exp())
                    },
                    -38.0,
                    38.0,
                    tol,
                )
            }
            FadingModel::Exponential { mu } => {
                let hi = 50.0 / mu;
                quad(
                    &|y: f64| {
                        let w = mu * (-mu * y).exp();
                        if w == 0.0 {
                            return 0.0;
                        }
                        w * g(y)
                    },
                    0.0,
                    hi,
                    tol,
                )
            }
            _ => unreachable!("parts contain only simple stochastic factors"),
        }
    }

    Ok(match parts.len() {
        0 => f(scale),
        1 => expect_simple(&parts[0], &|x| f(scale * x), abs_tol),
        2 => {
            let (a, b) = (parts[0].clone(), parts[1].clone());
            expect_simple(
                &b,
                &|y| expect_simple(&a, &|x| f(scale * x * y), abs_tol / 10.0),
                abs_tol,
            )
        }
        n => {
            return Err(Error::Unsupported(format!(
                "expectation over a product with {n} stochastic factors (max 2)"
            )))
        }
    })
}

/// Dense log-grid interpolant of an upper-tail function P(S >= s).
///
/// Composite tails cost a quadrature per evaluation; mean-measure grids over
/// millions of radius classes evaluate the same tail at a narrow band of
/// arguments, so one tabulation pass amortizes them. Interpolation is linear
/// in (ln s, ln tail), keeping the relative error below ~1e-6 on the grids
/// used here.
pub struct CachedTail {
    ln_lo: f64,
    ln_hi: f64,
    ln_tails: Vec<f64>,
}

impl CachedTail {
    pub fn new(fading: &FadingModel, s_lo: f64, s_hi: f64, n: usize) -> Result<Self> {
        if !(s_lo > 0.0 && s_hi > s_lo && n >= 16) {
            return Err(Error::InvalidParameter(
                "cached tail needs 0 < s_lo < s_hi and n >= 16".into(),
            ));
        }
        fading.validate()?;
        let ln_lo = s_lo.ln();
        let ln_hi = s_hi.ln();
        let ln_tails: Result<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s = (ln_lo + (ln_hi - ln_lo) * i as f64 / (n - 1) as f64).exp();
                Ok(fading.tail(s)?.max(0.0).ln())
            })
            .collect();
        Ok(CachedTail { ln_lo, ln_hi, ln_tails: ln_tails? })
    }

    pub fn tail(&self, s: f64) -> f64 {
        if !(s > 0.0) {
            return 1.0;
        }
        let x = s.ln();
        let n = self.ln_tails.len();
        if x <= self.ln_lo {
            return self.ln_tails[0].exp();
        }
        if x >= self.ln_hi {
            return 0.0;
        }
        let pos = (x - self.ln_lo) / (self.ln_hi - self.ln_lo) * (n - 1) as f64;
        let idx = (pos.floor() as usize).min(n - 2);
        let w = pos - idx as f64;
        let a = self.ln_tails[idx];
        let b = self.ln_tails[idx + 1];
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            return 0.0;
        }
        (a * (1.0 - w) + b * w).exp()
    }
}

/// Smallest r with P(h(r)/S <= tau) <= eps: the per-point truncation helper.
pub fn min_radius_for_point_prob(
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
    eps: f64,
) -> Result<f64> {
    if !(tau > 0.0 && eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter("need tau > 0 and eps in (0,1)".into()));
    }
    let p_at = |r: f64| -> Result<f64> { fading.tail(path_loss.evaluate(r)? / tau) };
    let mut hi = 1.0;
    let mut guard = 0;
    while p_at(hi)? > eps {
        hi *= 2.0;
        guard += 1;
        if guard > 400 {
            return Err(Error::InvalidParameter(
                "no finite radius reaches the requested point probability".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        if p_at(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Mean-measure mass omitted by truncating the pattern at `r_from`:
/// E[(D(h^{-1}(S tau)) - D(r_from))^+].
pub fn omitted_mass(
    growth: &GrowthFunction,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
    r_from: f64,
) -> Result<f64> {
    growth.validate()?;
    let d_from = growth.value(r_from);
    expect_fn(
        fading,
        &|s| {
            let r = path_loss.inverse(s * tau).unwrap_or(0.0);
            (growth.value(r) - d_from).max(0.0)
        },
        1e-10 * (1.0 + d_from),
    )
}

/// Smallest r_max whose omitted mean-measure mass is below `eps_mass`.
pub fn min_radius_for_tail_mass(
    growth: &GrowthFunction,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
    eps_mass: f64,
) -> Result<f64> {
    if !(eps_mass > 0.0) {
        return Err(Error::InvalidParameter("eps_mass must be positive".into()));
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while omitted_mass(growth, path_loss, fading, tau, hi)? > eps_mass {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::InvalidParameter(
                "no finite radius reaches the requested omitted mass".into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if omitted_mass(growth, path_loss, fading, tau, mid)? > eps_mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
