//! Empirical goodness-of-fit for batches of restricted-process realizations:
//! time rescaling, Kolmogorov-Smirnov against the uniform law, count
//! dispersion with a chi-square interval, and the total-variation distance of
//! the empirical count law from the matching Poisson law.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::measure::MeanMeasure;
use crate::propagation::PropagationProcess;
use crate::rng::stream_rng;

/// Sample size at and above which the asymptotic Kolmogorov distribution is
/// used for p-values; the exact matrix evaluation is used below.
pub const KS_EXACT_LIMIT: usize = 35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PoissonConsistent,
    Overdispersed,
    Underdispersed,
}

/// Decision thresholds; the levels are artifact choices calibrated by
/// simulation, not paper values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GofThresholds {
    /// two-sided level of the dispersion confidence interval
    pub dispersion_ci_level: f64,
    /// smallest acceptable KS p-value
    pub ks_p_min: f64,
    /// null quantile the count TV must stay below
    pub count_tv_null_quantile: f64,
    /// replications used to calibrate the count-TV null quantile
    pub null_calibration_reps: usize,
}

impl Default for GofThresholds {
    fn default() -> Self {
        GofThresholds {
            dispersion_ci_level: 0.01,
            ks_p_min: 0.01,
            count_tv_null_quantile: 0.99,
            null_calibration_reps: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoFReport {
    pub n_reps: usize,
    pub tau: f64,
    pub mean_count: f64,
    pub dispersion_index: f64,
    pub dispersion_ci: (f64, f64),
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub count_tv: f64,
    pub count_tv_null_q: f64,
    pub dispersion_pass: bool,
    pub ks_pass: bool,
    pub count_pass: bool,
    pub verdict: Verdict,
}

/// Map each point t of a restricted process to M(t)/M(tau) in (0, 1]; under
/// the Poisson(M) null these are i.i.d. uniform order statistics given the
/// count.
pub fn time_rescale(process: &PropagationProcess, measure: &MeanMeasure) -> Result<Vec<f64>> {
    let tau = process.tau().ok_or_else(|| {
        Error::InvalidParameter("time_rescale needs a process restricted to (0, tau]".into())
    })?;
    let m_tau = measure.value(tau);
    if !(m_tau > 0.0) {
        return Err(Error::DegenerateMeasure(format!(
            "M(tau) = {m_tau} at tau = {tau}; rescaling is undefined"
        )));
    }
    Ok(process
        .values()
        .iter()
        .map(|&t| (measure.value(t) / m_tau).clamp(f64::MIN_POSITIVE, 1.0))
        .collect())
}

/// Two-sided KS statistic against the uniform law on (0, 1], with the exact
/// finite-sample p-value below [`KS_EXACT_LIMIT`] observations and the
/// asymptotic Kolmogorov p-value at and above it.
pub fn ks_uniform(points: &[f64]) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::InsufficientData("KS needs at least one observation".into()));
    }
    let mut sorted = points.to_vec();
    for &u in &sorted {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("rescaled point {u} outside (0, 1]")));
        }
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    let n = sorted.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &u) in sorted.iter().enumerate() {
        let upper = (i + 1) as f64 / nf - u;
        let lower = u - i as f64 / nf;
        d = d.max(upper).max(lower);
    }
    let p = if n < KS_EXACT_LIMIT {
        (1.0 - ks_cdf_exact(n, d)).clamp(0.0, 1.0)
    } else {
        kolmogorov_sf(nf.sqrt() * d)
    };
    Ok((d, p))
}

/// Exact P(D_n < d) by the Marsaglia-Tsang-Wang matrix method.
pub fn ks_cdf_exact(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let k = (nf * d).floor() as usize + 1;
    let h = k as f64 - nf * d;
    let m = 2 * k - 1;
    let mut big_h = vec![vec![0.0f64; m]; m];
    for (i, row) in big_h.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i + 1 >= j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        big_h[i][0] -= h.powi(i as i32 + 1);
        big_h[m - 1][i] -= h.powi((m - i) as i32);
    }
    big_h[m - 1][0] += if 2.0 * h - 1.0 > 0.0 { (2.0 * h - 1.0).powi(m as i32) } else { 0.0 };
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                for g in 1..=(i + 1 - j) {
                    big_h[i][j] /= g as f64;
                }
            }
        }
    }
    // H^n by binary exponentiation with overflow scaling
    const SCALE_CAP: f64 = 1e140;
    let mut e_q: i64 = 0;
    let mut q = identity(m);
    let mut pw = big_h;
    let mut e_pw: i64 = 0;
    let mut exp = n;
    loop {
        if exp % 2 == 1 {
            q = mat_mul(&q, &pw);
            e_q += e_pw;
            if q[k - 1][k - 1] > SCALE_CAP {
                scale_down(&mut q, SCALE_CAP);
                e_q += 1;
            }
        }
        exp /= 2;
        if exp == 0 {
            break;
        }
        pw = mat_mul(&pw, &pw);
        e_pw *= 2;
        if pw[k - 1][k - 1] > SCALE_CAP {
            scale_down(&mut pw, SCALE_CAP);
            e_pw += 1;
        }
    }
    let s = q[k - 1][k - 1];
    if s <= 0.0 {
        return 0.0;
    }
    // multiply by n!/n^n in log space, restoring the scaling exponent
    let log_val =
        s.ln() + ln_gamma(nf + 1.0) - nf * nf.ln() + (e_q as f64) * SCALE_CAP.ln();
    log_val.exp().clamp(0.0, 1.0)
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    let mut id = vec![vec![0.0; m]; m];
    for (i, row) in id.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    id
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut c = vec![vec![0.0; m]; m];
    for i in 0..m {
        for l in 0..m {
            let av = a[i][l];
            if av == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += av * b[l][j];
            }
        }
    }
    c
}

fn scale_down(a: &mut [Vec<f64>], by: f64) {
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v /= by;
        }
    }
}

/// Survival function of the asymptotic Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // dual theta series converges fast for small arguments
        let v = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut cdf = 0.0;
        for k in 0..50 {
            let odd = (2 * k + 1) as f64;
            let term = (-odd * odd * v).exp();
            cdf += term;
            if term < 1e-18 {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * cdf).clamp(0.0, 1.0)
    } else {
        let mut sf = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sf += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
            if term < 1e-18 {
                break;
            }
        }
        sf.clamp(0.0, 1.0)
    }
}

/// Sample variance / sample mean of replication counts, plus a two-sided
/// chi-square interval calibrated for the Poisson null.
pub fn dispersion(counts: &[u64], ci_level: f64) -> Result<(f64, (f64, f64))> {
    if counts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "dispersion needs at least 2 counts, got {}",
            counts.len()
        )));
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::InvalidParameter(format!("ci level {ci_level} outside (0,1)")));
    }
    let n = counts.len() as f64;
    let sum: f64 = counts.iter().map(|&c| c as f64).sum();
    let mean = sum / n;
    if mean == 0.0 {
        return Err(Error::DegenerateMeasure(
            "all counts are zero; the dispersion index is undefined".into(),
        ));
    }
    let var = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    let index = var / mean;
    let chi = ChiSquared::new(n - 1.0).expect("df > 0");
    let lo_q = chi.inverse_cdf(ci_level / 2.0);
    let hi_q = chi.inverse_cdf(1.0 - ci_level / 2.0);
    let ci = (index * (n - 1.0) / hi_q, index * (n - 1.0) / lo_q);
    Ok((index, ci))
}

/// Total-variation distance between the empirical count pmf and
/// Poisson(m_tau), with the Poisson tail beyond the enumeration cutoff
/// accounted for to below 1e-12.
pub fn count_fit(counts: &[u64], m_tau: f64) -> Result<f64> {
    if !(m_tau > 0.0) {
        return Err(Error::InvalidParameter(format!("m_tau must be positive, got {m_tau}")));
    }
    if counts.is_empty() {
        return Err(Error::InsufficientData("count_fit needs at least one count".into()));
    }
    let max_count = *counts.iter().max().expect("nonempty") as usize;
    let n = counts.len() as f64;
    let mut hist = vec![0.0f64; max_count + 1];
    for &c in counts {
        hist[c as usize] += 1.0 / n;
    }
    let mut pois = (-m_tau).exp();
    let mut cum = 0.0;
    let mut acc = 0.0;
    let mut k = 0usize;
    loop {
        let emp = hist.get(k).copied().unwrap_or(0.0);
        acc += (emp - pois).abs();
        cum += pois;
        if k >= max_count && 1.0 - cum < 1e-12 {
            break;
        }
        pois *= m_tau / (k + 1) as f64;
        k += 1;
        if k > max_count + 10_000_000 {
            break;
        }
    }
    Ok(0.5 * (acc + (1.0 - cum).max(0.0)))
}

/// Null distribution quantile of `count_fit` under Poisson(m_tau) with the
/// same batch size, estimated from seeded simulation.
pub fn count_tv_null_quantile(
    n_reps: usize,
    m_tau: f64,
    quantile: f64,
    calibration_reps: usize,
    seed: u64,
) -> Result<f64> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {quantile} outside (0,1)")));
    }
    let pois = Poisson::new(m_tau)
        .map_err(|e| Error::InvalidParameter(format!("invalid Poisson mean {m_tau}: {e}")))?;
    let mut tvs = Vec::with_capacity(calibration_reps);
    for b in 0..calibration_reps {
        let mut rng = stream_rng(seed, &[0x7e57_ca1b, b as u64]);
        let counts: Vec<u64> = (0..n_reps).map(|_| pois.sample(&mut rng) as u64).collect();
        tvs.push(count_fit(&counts, m_tau)?);
    }
    tvs.sort_by(|a, b| a.partial_cmp(b).expect("finite tv"));
    let idx = ((calibration_reps as f64 * quantile).ceil() as usize).clamp(1, calibration_reps);
    Ok(tvs[idx - 1])
}

/// Run the three-part Poisson consistency check on a batch.
///
/// `pooled_rescaled` are the time-rescaled points pooled across replications
/// (conditional on counts, i.i.d. uniform under the null).
pub fn diagnose(
    counts: &[u64],
    pooled_rescaled: &[f64],
    m_tau: f64,
    tau: f64,
    seed: u64,
    thresholds: &GofThresholds,
) -> Result<GoFReport> {
    let (index, ci) = dispersion(counts, thresholds.dispersion_ci_level)?;
    let (ks_stat, ks_p) = if pooled_rescaled.is_empty() {
        (0.0, 1.0)
    } else {
        ks_uniform(pooled_rescaled)?
    };
    let count_tv = count_fit(counts, m_tau)?;
    let null_q = count_tv_null_quantile(
        counts.len(),
        m_tau,
        thresholds.count_tv_null_quantile,
        thresholds.null_calibration_reps,
        seed,
    )?;
    let mean_count = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    let dispersion_pass = ci.0 <= 1.0 && 1.0 <= ci.1;
    let ks_pass = ks_p > thresholds.ks_p_min;
    let count_pass = count_tv <= null_q;
    let verdict = if dispersion_pass && ks_pass && count_pass {
        Verdict::PoissonConsistent
    } else if !dispersion_pass {
        if index > 1.0 {
            Verdict::Overdispersed
        } else {
            Verdict::Underdispersed
        }
    } else if index >= 1.0 {
        Verdict::Overdispersed
    } else {
        Verdict::Underdispersed
    };
    Ok(GoFReport {
        n_reps: counts.len(),
        tau,
        mean_count,
        dispersion_index: index,
        dispersion_ci: ci,
        ks_statistic: ks_stat,
        ks_p_value: ks_p,
        count_tv,
        count_tv_null_q: null_q,
        dispersion_pass,
        ks_pass,
        count_pass,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rescale_examples() {
        let m = MeanMeasure::identity();
        let n = PropagationProcess::from_values(vec![0.2, 0.7]).unwrap();
        let r = n.restrict(1.0).unwrap();
        let v = time_rescale(&r, &m).unwrap();
        assert_abs_diff_eq!(v[0], 0.2, epsilon = 1e-13);
        assert_abs_diff_eq!(v[1], 0.7, epsilon = 1e-13);
        // M(t) = t^2, tau = 1, point 0.5 -> 0.25
        let sq = MeanMeasure::from_fn(crate::measure::MeasureKind::ClosedForm, |t| t * t);
        let n = PropagationProcess::from_values(vec![0.5]).unwrap().restrict(1.0).unwrap();
        assert_abs_diff_eq!(time_rescale(&n, &sq).unwrap()[0], 0.25, epsilon = 1e-13);
        // empty process
        let n = PropagationProcess::from_values(vec![]).unwrap().restrict(1.0).unwrap();
        assert!(time_rescale(&n, &m).unwrap().is_empty());
        // degenerate measure
        let zero = MeanMeasure::from_fn(crate::measure::MeasureKind::ClosedForm, |_| 0.0);
        assert!(matches!(
            time_rescale(&n, &zero),
            Err(Error::DegenerateMeasure(_))
        ));
    }

    #[test]
    fn ks_statistic_examples() {
        let (d, p) = ks_uniform(&[0.1, 0.5, 0.9]).unwrap();
        assert_abs_diff_eq!(d, 7.0 / 30.0, epsilon = 1e-12);
        // exact p-value for n = 3 (independent matrix-method reference)
        assert_abs_diff_eq!(p, 0.9857777777777778, epsilon = 1e-9);
        // perfectly spaced points have the minimal discrepancy 1/(2n)
        let n = 20;
        let spaced: Vec<f64> = (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect();
        let (d, _) = ks_uniform(&spaced).unwrap();
        assert_abs_diff_eq!(d, 1.0 / (2 * n) as f64, epsilon = 1e-12);
        // all mass at 1.0: the one-sided lower excursion reaches u_(1) - 0 = 1
        let (d, p) = ks_uniform(&[1.0; 12]).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
        assert!(p < 1e-6);
    }

    #[test]
    fn ks_rejects_bad_input() {
        assert!(ks_uniform(&[]).is_err());
        assert!(ks_uniform(&[0.0]).is_err());
        assert!(ks_uniform(&[1.2]).is_err());
    }

    #[test]
    fn exact_ks_cdf_reference_values() {
        // references from an independent exact implementation
        assert_abs_diff_eq!(1.0 - ks_cdf_exact(10, 0.3), 0.27053557479999946, epsilon = 1e-10);
        assert_abs_diff_eq!(ks_cdf_exact(3, 7.0 / 30.0), 0.014222222222222214, epsilon = 1e-12);
    }

    #[test]
    fn asymptotic_kolmogorov_reference_values() {
        assert_abs_diff_eq!(kolmogorov_sf(1.0), 0.26999967167735456, epsilon = 1e-12);
        assert_abs_diff_eq!(kolmogorov_sf(0.5), 0.9639452436648751, epsilon = 1e-12);
        assert_abs_diff_eq!(kolmogorov_sf(2.0), 0.0006709252557796953, epsilon = 1e-14);
    }

    #[test]
    fn exact_and_asymptotic_agree_near_the_crossover() {
        // at n = 40 the asymptotic approximation is already close
        for d in [0.1, 0.15, 0.2, 0.25] {
            let exact = 1.0 - ks_cdf_exact(40, d);
            let asym = kolmogorov_sf((40f64).sqrt() * d);
            assert!((exact - asym).abs() < 0.02, "d = {d}: exact {exact}, asym {asym}");
        }
    }

    #[test]
    fn dispersion_examples() {
        // constant counts -> index 0
        let (idx, _) = dispersion(&[4, 4, 4, 4, 4], 0.01).unwrap();
        assert_eq!(idx, 0.0);
        // two-point mixture {2, 6} balanced: index = 1 + 16/(2*8) = 2
        let mut counts = Vec::new();
        for _ in 0..5000 {
            counts.push(2u64);
            counts.push(6u64);
        }
        let (idx, ci) = dispersion(&counts, 0.01).unwrap();
        assert!((idx - 2.0).abs() < 0.2, "index {idx}");
        assert!(ci.0 > 1.0, "overdispersion must be detected, ci {ci:?}");
        // degenerate input
        assert!(dispersion(&[1], 0.01).is_err());
        assert!(dispersion(&[0, 0, 0], 0.01).is_err());
    }

    #[test]
    fn count_fit_examples() {
        // all counts zero vs Poisson(5): TV = 1 - e^{-5}
        let tv = count_fit(&vec![0u64; 1000], 5.0).unwrap();
        assert_abs_diff_eq!(tv, 1.0 - (-5f64).exp(), epsilon = 1e-9);
        // empirical pmf equal to the Poisson pmf -> small TV for a large batch
        let mut rng = stream_rng(3, &[]);
        let pois = Poisson::new(5.0).unwrap();
        let counts: Vec<u64> = (0..100_000).map(|_| pois.sample(&mut rng) as u64).collect();
        let tv = count_fit(&counts, 5.0).unwrap();
        assert!(tv <= 0.01, "null TV too large: {tv}");
    }

    #[test]
    fn diagnose_flags_the_right_direction() {
        let mut rng = stream_rng(1, &[]);
        let pois = Poisson::new(5.0).unwrap();
        let null_counts: Vec<u64> = (0..4000).map(|_| pois.sample(&mut rng) as u64).collect();
        let report =
            diagnose(&null_counts, &[], 5.0, 1.0, 42, &GofThresholds::default()).unwrap();
        assert_eq!(report.verdict, Verdict::PoissonConsistent);
        // an equal mixture of Poisson(2) and Poisson(8) is overdispersed
        let p2 = Poisson::new(2.0).unwrap();
        let p8 = Poisson::new(8.0).unwrap();
        let mixed: Vec<u64> = (0..4000)
            .map(|i| if i % 2 == 0 { p2.sample(&mut rng) } else { p8.sample(&mut rng) } as u64)
            .collect();
        let report = diagnose(&mixed, &[], 5.0, 1.0, 42, &GofThresholds::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Overdispersed);
        // thinned-to-constant counts are underdispersed
        let constant: Vec<u64> = (0..4000).map(|i| 5 + (i % 2) as u64 * 0).collect();
        let report = diagnose(&constant, &[], 5.0, 1.0, 42, &GofThresholds::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Underdispersed);
    }
}
