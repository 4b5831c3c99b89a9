//! Total-variation certificates for the Poisson approximation of the
//! restricted propagation process, the Cox-process bound for random patterns,
//! and the variance-ratio diagnostic separating Poisson from Cox limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::measure::min_radius_for_point_prob;
use crate::pathloss::PathLossModel;
use crate::patterns::{PatternSampler, RadiusClasses};
use crate::propagation::point_probability;
use crate::rng::derive_seed;

/// Which side of the reciprocal map a report describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessSide {
    /// inverse powers on (0, tau]
    Propagation,
    /// received powers on [tau, inf)
    Power,
}

/// Per-point probability threshold beyond which omitted points count as a
/// truncation risk for the bound computation.
pub const BOUND_TRUNCATION_GUARD: f64 = 1e-12;

/// Total-variation bracket for d_TV(L(Z|_tau), L(N|_tau)):
/// upper = sum p_i^2 (clipped at 1), lower = (1 and 1/M(tau)) / 32 * sum p_i^2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TVBoundReport {
    pub side: ProcessSide,
    pub tau: f64,
    pub n_points: u64,
    pub sum_p: f64,
    pub sum_p_sq: f64,
    pub max_p: f64,
    /// sum p_i^2 without the [0,1] clip; the bound is vacuous above 1 but the
    /// raw value is what decays along convergence sweeps.
    pub upper_unclipped: f64,
    pub upper: f64,
    pub lower: f64,
    /// alternative upper form M(tau) * sup p_i; never tighter than sum p^2
    pub upper_mean_sup: f64,
    /// per-point probability just beyond the window edge
    pub edge_point_prob: f64,
}

fn assemble_report(tau: f64, n_points: u64, sum_p: f64, sum_p_sq: f64, max_p: f64, edge: f64) -> TVBoundReport {
    let lower = (1f64.min(1.0 / sum_p)) / 32.0 * sum_p_sq;
    TVBoundReport {
        side: ProcessSide::Propagation,
        tau,
        n_points,
        sum_p,
        sum_p_sq,
        max_p,
        upper_unclipped: sum_p_sq,
        upper: sum_p_sq.min(1.0),
        lower: if sum_p > 0.0 { lower } else { 0.0 },
        upper_mean_sup: sum_p * max_p,
        edge_point_prob: edge,
    }
}

/// Exact per-point bound report for a finite pattern.
///
/// `truncation_guard` is the largest tolerable per-point probability just
/// beyond the window; pass [`BOUND_TRUNCATION_GUARD`] for the strict default
/// or a larger budget when the omitted mass is independently controlled.
pub fn tv_bounds_with_guard(
    classes: &RadiusClasses,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
    truncation_guard: f64,
) -> Result<TVBoundReport> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    path_loss.validate()?;
    fading.validate()?;
    let edge = fading.tail(path_loss.evaluate(classes.r_max())? / tau)?;
    if edge > truncation_guard {
        let suggested = min_radius_for_point_prob(path_loss, fading, tau, truncation_guard)?;
        return Err(Error::TruncationRisk {
            detail: format!(
                "points beyond r_max could contribute p_i(tau) = {edge:.3e} > {truncation_guard:.0e}"
            ),
            suggested_r_max: suggested,
        });
    }
    let cls = classes.classes();
    // parallel chunked reduction in fixed chunk order keeps sums deterministic
    let partials: Vec<(f64, f64, f64)> = cls
        .par_chunks(16_384)
        .map(|chunk| {
            let mut sum_p = 0.0;
            let mut sum_sq = 0.0;
            let mut max_p = 0.0f64;
            for &(r, m) in chunk {
                let p = point_probability(path_loss, fading, r, tau).unwrap_or(f64::NAN);
                sum_p += m as f64 * p;
                sum_sq += m as f64 * p * p;
                max_p = max_p.max(p);
            }
            (sum_p, sum_sq, max_p)
        })
        .collect();
    let mut sum_p = 0.0;
    let mut sum_sq = 0.0;
    let mut max_p = 0.0f64;
    for (a, b, c) in partials {
        sum_p += a;
        sum_sq += b;
        max_p = max_p.max(c);
    }
    Ok(assemble_report(tau, classes.total_points(), sum_p, sum_sq, max_p, edge))
}

/// [`tv_bounds_with_guard`] at the strict default guard.
pub fn tv_bounds(
    classes: &RadiusClasses,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
) -> Result<TVBoundReport> {
    tv_bounds_with_guard(classes, path_loss, fading, tau, BOUND_TRUNCATION_GUARD)
}

/// Bound report for a synthetic pattern given directly by per-point
/// probabilities (desk-scale checks and count-law experiments).
pub fn tv_bounds_from_probabilities(probs: &[f64], tau: f64) -> Result<TVBoundReport> {
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0,1]")));
        }
    }
    let sum_p: f64 = probs.iter().sum();
    let sum_sq: f64 = probs.iter().map(|p| p * p).sum();
    let max_p = probs.iter().cloned().fold(0.0f64, f64::max);
    Ok(assemble_report(tau, probs.len() as u64, sum_p, sum_sq, max_p, 0.0))
}

/// Relabel a bound report across the reciprocal map: the numeric bounds are
/// preserved, the threshold becomes 1/tau on the other side.
pub fn power_side_bounds(report: &TVBoundReport) -> Result<TVBoundReport> {
    if !(report.tau > 0.0 && report.tau.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cannot relabel a report with tau = {}; the inverted threshold would be degenerate",
            report.tau
        )));
    }
    let mut out = report.clone();
    out.tau = 1.0 / report.tau;
    out.side = match report.side {
        ProcessSide::Propagation => ProcessSide::Power,
        ProcessSide::Power => ProcessSide::Propagation,
    };
    Ok(out)
}

/// Monte-Carlo estimate of the Cox bound E integral p^{(x)}(tau)^2 Xi(dx):
/// average over pattern realizations of sum_x p^{(x)}(tau)^2.
pub fn cox_bound(
    sampler: &PatternSampler,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
    n_reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "cox_bound needs n_reps >= 100, got {n_reps}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    path_loss.validate()?;
    fading.validate()?;
    let edge = fading.tail(path_loss.evaluate(sampler.r_max())? / tau)?;
    if edge > BOUND_TRUNCATION_GUARD {
        let suggested =
            min_radius_for_point_prob(path_loss, fading, tau, BOUND_TRUNCATION_GUARD)?;
        return Err(Error::TruncationRisk {
            detail: format!(
                "points beyond r_max could contribute p(tau) = {edge:.3e} > {BOUND_TRUNCATION_GUARD:.0e}"
            ),
            suggested_r_max: suggested,
        });
    }
    let draws: Result<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let pattern = sampler.sample(derive_seed(seed, &[0xc0b0, i as u64]))?;
            let mut acc = 0.0;
            for &(r, m) in pattern.radius_classes().classes() {
                let p = point_probability(path_loss, fading, r, tau)?;
                acc += m as f64 * p * p;
            }
            Ok(acc)
        })
        .collect();
    let draws = draws?;
    let n = n_reps as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|&d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// One point of a variance-ratio curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarianceRatioPoint {
    pub r: f64,
    pub ratio: f64,
    pub stderr: f64,
    pub mean_count: f64,
    pub var_count: f64,
}

/// Empirical Var(|Xi|(r)) / E(|Xi|(r))^2 over replicated patterns, with
/// delete-one jackknife standard errors.
pub fn variance_ratio(
    sampler: &PatternSampler,
    r_grid: &[f64],
    n_reps: usize,
    seed: u64,
) -> Result<Vec<VarianceRatioPoint>> {
    if n_reps < 1000 {
        return Err(Error::InvalidParameter(format!(
            "variance_ratio needs n_reps >= 1000, got {n_reps}"
        )));
    }
    for &r in r_grid {
        if !(r > 0.0) || r > sampler.r_max() {
            return Err(Error::OutOfWindow { r, r_max: sampler.r_max() });
        }
    }
    let counts: Result<Vec<Vec<u64>>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let pattern = sampler.sample(derive_seed(seed, &[0x7a77, i as u64]))?;
            let classes = pattern.radius_classes();
            Ok(r_grid.iter().map(|&r| classes.count_within(r)).collect())
        })
        .collect();
    let counts = counts?;
    let n = n_reps as f64;
    let mut out = Vec::with_capacity(r_grid.len());
    for (j, &r) in r_grid.iter().enumerate() {
        let ks: Vec<f64> = counts.iter().map(|row| row[j] as f64).collect();
        let sum: f64 = ks.iter().sum();
        let sum_sq: f64 = ks.iter().map(|k| k * k).sum();
        let mean = sum / n;
        let var = (sum_sq - n * mean * mean) / (n - 1.0);
        let ratio = if var == 0.0 {
            0.0
        } else if mean > 0.0 {
            var / (mean * mean)
        } else {
            0.0
        };
        // delete-one jackknife over replications
        let mut sq_dev = 0.0;
        let mut jk_sum = 0.0;
        let mut jk_vals = Vec::with_capacity(ks.len());
        for &k in &ks {
            let m_i = (sum - k) / (n - 1.0);
            let var_i = ((sum_sq - k * k) - (n - 1.0) * m_i * m_i) / (n - 2.0);
            let r_i = if var_i == 0.0 {
                0.0
            } else if m_i > 0.0 {
                var_i / (m_i * m_i)
            } else {
                0.0
            };
            jk_vals.push(r_i);
            jk_sum += r_i;
        }
        let jk_mean = jk_sum / n;
        for v in jk_vals {
            sq_dev += (v - jk_mean) * (v - jk_mean);
        }
        let stderr = ((n - 1.0) / n * sq_dev).sqrt();
        out.push(VarianceRatioPoint { r, ratio, stderr, mean_count: mean, var_count: var });
    }
    Ok(out)
}

/// Exact d_TV between the count law of a finite independent-indicator sum and
/// the Poisson law with the same mean; the desk-scale oracle for the bracket.
pub fn exact_count_tv_bernoulli_sum(probs: &[f64]) -> Result<f64> {
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0,1]")));
        }
    }
    let n = probs.len();
    // pmf of the Poisson-binomial by direct convolution
    let mut pmf = vec![0.0f64; n + 1];
    pmf[0] = 1.0;
    for &p in probs {
        for k in (1..=n).rev() {
            pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    let mean: f64 = probs.iter().sum();
    // 0.5 * sum_k |pmf(k) - pois(k)| + 0.5 * P(Poisson > n)
    let mut pois = (-mean).exp();
    let mut acc = 0.0;
    let mut pois_cum = 0.0;
    for (k, &q) in pmf.iter().enumerate() {
        acc += (q - pois).abs();
        pois_cum += pois;
        pois *= mean / (k + 1) as f64;
    }
    Ok(0.5 * (acc + (1.0 - pois_cum).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ten_identical_points_example() {
        let report = tv_bounds_from_probabilities(&[0.1; 10], 1.0).unwrap();
        assert_abs_diff_eq!(report.sum_p, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.upper, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(report.lower, 0.1 / 32.0, epsilon = 1e-12);
    }

    #[test]
    fn single_point_example() {
        let report = tv_bounds_from_probabilities(&[0.2], 1.0).unwrap();
        assert_abs_diff_eq!(report.upper, 0.04, epsilon = 1e-12);
        // 1 and (1/0.2) = 1
        assert_abs_diff_eq!(report.lower, 0.04 / 32.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_probabilities_clip_the_upper_bound() {
        let report = tv_bounds_from_probabilities(&[1.0, 1.0, 0.5], 1.0).unwrap();
        assert!(report.upper_unclipped > 1.0);
        assert_eq!(report.upper, 1.0);
        assert!(report.lower <= report.upper);
    }

    #[test]
    fn bracket_holds_on_every_report() {
        let cases: Vec<Vec<f64>> = vec![
            vec![0.1; 10],
            vec![0.9, 0.05],
            vec![0.3, 0.3, 0.3],
            (1..100).map(|i| 1.0 / (i as f64 + 10.0)).collect(),
        ];
        for probs in cases {
            let r = tv_bounds_from_probabilities(&probs, 2.0).unwrap();
            assert!(r.lower <= r.upper + 1e-15);
            assert!(r.upper <= r.upper_mean_sup.min(1.0) + 1e-12 || r.upper == 1.0);
        }
    }

    #[test]
    fn exact_two_point_tv_lies_in_the_bracket() {
        let cases = [(0.3, 0.4), (0.05, 0.9), (0.5, 0.5), (0.01, 0.02)];
        for &(p1, p2) in &cases {
            let probs = [p1, p2];
            let report = tv_bounds_from_probabilities(&probs, 1.0).unwrap();
            let exact = exact_count_tv_bernoulli_sum(&probs).unwrap();
            assert!(
                report.lower <= exact + 1e-12 && exact <= report.upper + 1e-12,
                "bracket violated for ({p1},{p2}): lower {}, exact {exact}, upper {}",
                report.lower,
                report.upper
            );
        }
    }

    #[test]
    fn relabel_round_trip() {
        let report = tv_bounds_from_probabilities(&[0.1, 0.2], 4.0).unwrap();
        let power = power_side_bounds(&report).unwrap();
        assert_eq!(power.side, ProcessSide::Power);
        assert_abs_diff_eq!(power.tau, 0.25, epsilon = 1e-15);
        assert_eq!(power.upper, report.upper);
        assert_eq!(power.lower, report.lower);
        let back = power_side_bounds(&power).unwrap();
        assert_eq!(back.side, ProcessSide::Propagation);
        assert_abs_diff_eq!(back.tau, 4.0, epsilon = 1e-12);
        // degenerate thresholds are rejected
        let mut bad = report.clone();
        bad.tau = f64::INFINITY;
        assert!(power_side_bounds(&bad).is_err());
        bad.tau = 0.0;
        assert!(power_side_bounds(&bad).is_err());
    }

    #[test]
    fn tv_bounds_from_pattern_matches_hand_sum() {
        let classes = RadiusClasses::new(vec![(1.0, 1), (2.0, 1)], 40.0).unwrap();
        let pl = PathLossModel::power_law(1.0, 2.0).unwrap();
        let fading = FadingModel::Exponential { mu: 1.0 };
        let report = tv_bounds(&classes, &pl, &fading, 4.0).unwrap();
        let p1 = (-0.25f64).exp();
        let p2 = (-1f64).exp();
        assert_abs_diff_eq!(report.sum_p, p1 + p2, epsilon = 1e-12);
        assert_abs_diff_eq!(report.sum_p_sq, p1 * p1 + p2 * p2, epsilon = 1e-12);
        assert_abs_diff_eq!(report.max_p, p1, epsilon = 1e-12);
    }

    #[test]
    fn truncation_guard_raises() {
        let classes = RadiusClasses::new(vec![(1.0, 1)], 2.0).unwrap();
        let pl = PathLossModel::power_law(1.0, 2.0).unwrap();
        let fading = FadingModel::Exponential { mu: 1.0 };
        assert!(matches!(
            tv_bounds(&classes, &pl, &fading, 4.0),
            Err(Error::TruncationRisk { .. })
        ));
        // a relaxed guard admits the same configuration
        assert!(tv_bounds_with_guard(&classes, &pl, &fading, 4.0, 0.5).is_ok());
    }

    #[test]
    fn cox_bound_reduces_to_sum_p_sq_for_fixed_patterns() {
        let pattern =
            crate::patterns::PointPattern2D::from_raw_radii(&[1.0, 2.0, 3.0], 40.0).unwrap();
        let classes = pattern.radius_classes();
        let pl = PathLossModel::power_law(1.0, 2.0).unwrap();
        let fading = FadingModel::Exponential { mu: 1.0 };
        let fixed = PatternSampler::Fixed(std::sync::Arc::new(pattern));
        let (est, se) = cox_bound(&fixed, &pl, &fading, 4.0, 128, 0).unwrap();
        let report = tv_bounds(&classes, &pl, &fading, 4.0).unwrap();
        assert_abs_diff_eq!(est, report.sum_p_sq, epsilon = 1e-12);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn variance_ratio_is_zero_for_lattices() {
        let lattice = crate::patterns::make_lattice(crate::patterns::LatticeKind::Square, 1.0, 8.0)
            .unwrap();
        let fixed = PatternSampler::Fixed(std::sync::Arc::new(lattice));
        let pts = variance_ratio(&fixed, &[2.0, 5.0, 8.0], 1000, 0).unwrap();
        for p in pts {
            assert_eq!(p.ratio, 0.0);
            assert_eq!(p.stderr, 0.0);
        }
    }
}
