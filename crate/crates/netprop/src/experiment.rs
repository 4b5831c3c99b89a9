//! Reproducible multi-replication experiment drivers shared by the CLI and
//! the acceptance suite: the sigma-sweep convergence study, batch simulation
//! with time rescaling, and the shared-factor overdispersion study.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{tv_bounds_with_guard, TVBoundReport};
use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::gof::{diagnose, dispersion, GoFReport, GofThresholds};
use crate::measure::{
    closed_form_power_law, min_radius_for_tail_mass, CachedTail, MeanMeasure, MeasureKind,
};
use crate::pathloss::PathLossModel;
use crate::patterns::{
    lattice_radius_classes, GrowthFunction, LatticeKind, PatternSampler, RadiusClasses,
};
use crate::propagation::generate;
use crate::rng::{derive_seed, stream_rng};
use crate::simulate::RestrictedSampler;

/// Resolution of the dense measure cache used for time rescaling.
const MEASURE_GRID_POINTS: usize = 2048;
/// Lower end of the measure cache, as a fraction of tau.
const MEASURE_GRID_SPAN: f64 = 1e-16;
/// Resolution of the tabulated composite tail.
const TAIL_GRID_POINTS: usize = 32_768;

/// Counts and pooled rescaled points from a batch of replications.
#[derive(Clone, Debug, Default)]
pub struct ReplicationBatch {
    pub counts: Vec<u64>,
    pub pooled_rescaled: Vec<f64>,
}

/// Simulate `n_reps` replications of N|_tau with the restricted engine and
/// pool the time-rescaled points (replication order, then point order).
pub fn run_restricted_batch(
    sampler: &RestrictedSampler,
    measure: &MeanMeasure,
    n_reps: usize,
    seed: u64,
) -> Result<ReplicationBatch> {
    let tau = sampler.tau();
    let m_tau = measure.value(tau);
    if !(m_tau > 0.0) {
        return Err(Error::DegenerateMeasure(format!("M(tau) = {m_tau}")));
    }
    let per_rep: Result<Vec<(u64, Vec<f64>)>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[0x5e5e_0001, i as u64]);
            let values = sampler.sample_values(&mut rng)?;
            let rescaled: Vec<f64> = values
                .iter()
                .map(|&t| (measure.value(t) / m_tau).clamp(f64::MIN_POSITIVE, 1.0))
                .collect();
            Ok((values.len() as u64, rescaled))
        })
        .collect();
    let per_rep = per_rep?;
    let mut batch = ReplicationBatch::default();
    for (count, rescaled) in per_rep {
        batch.counts.push(count);
        batch.pooled_rescaled.extend(rescaled);
    }
    Ok(batch)
}

/// Simulate replications by drawing a fresh pattern per replication, running
/// the full generate -> restrict -> rescale pipeline.
pub fn run_pattern_batch(
    pattern: &PatternSampler,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    tau: f64,
    measure: &MeanMeasure,
    n_reps: usize,
    seed: u64,
) -> Result<ReplicationBatch> {
    let m_tau = measure.value(tau);
    if !(m_tau > 0.0) {
        return Err(Error::DegenerateMeasure(format!("M(tau) = {m_tau}")));
    }
    let per_rep: Result<Vec<(u64, Vec<f64>)>> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let pat = pattern.sample(derive_seed(seed, &[0x6a77, i as u64]))?;
            let process = generate(&pat, path_loss, fading, derive_seed(seed, &[0x6a78, i as u64]))?;
            let restricted = process.restrict(tau)?;
            let rescaled: Vec<f64> = restricted
                .values()
                .iter()
                .map(|&t| (measure.value(t) / m_tau).clamp(f64::MIN_POSITIVE, 1.0))
                .collect();
            Ok((restricted.len() as u64, rescaled))
        })
        .collect();
    let per_rep = per_rep?;
    let mut batch = ReplicationBatch::default();
    for (count, rescaled) in per_rep {
        batch.counts.push(count);
        batch.pooled_rescaled.extend(rescaled);
    }
    Ok(batch)
}

/// Configuration of the sigma-sweep convergence study on a lattice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergeSpec {
    pub lattice: LatticeKind,
    pub s: f64,
    pub k: f64,
    pub beta: f64,
    pub sigmas: Vec<f64>,
    pub tau: f64,
    pub n_reps: usize,
    pub seed: u64,
    /// fixed window override; otherwise the mass-budget helper picks r_max
    pub r_max: Option<f64>,
    /// omitted-mass budget as a fraction of the limit mean L(tau)
    pub mass_budget: f64,
    pub thresholds: GofThresholds,
}

impl ConvergeSpec {
    pub fn defaults(lattice: LatticeKind, s: f64, k: f64, beta: f64, sigmas: Vec<f64>, tau: f64) -> Self {
        ConvergeSpec {
            lattice,
            s,
            k,
            beta,
            sigmas,
            tau,
            n_reps: 10_000,
            seed: 0,
            r_max: None,
            mass_budget: 0.02,
            thresholds: GofThresholds::default(),
        }
    }
}

/// Per-sigma results of the convergence study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub sigma: f64,
    pub r_max: f64,
    pub n_points: u64,
    /// limit mean L(tau) from the power-law closed form
    pub limit_mean: f64,
    /// exact truncated mean M(tau) of the simulated pattern
    pub m_tau: f64,
    pub bounds: TVBoundReport,
    pub gof: GoFReport,
}

/// Run the sigma sweep: per sigma, choose the window, build the exact
/// restricted sampler and cached mean measure, simulate, and diagnose.
pub fn run_converge(spec: &ConvergeSpec) -> Result<Vec<ConvergeRow>> {
    if spec.sigmas.is_empty() {
        return Err(Error::InvalidParameter("sigma sweep must be nonempty".into()));
    }
    let growth = GrowthFunction::for_lattice(spec.lattice, spec.s);
    let path_loss = PathLossModel::power_law(spec.k, spec.beta)?;
    let mut rows = Vec::with_capacity(spec.sigmas.len());
    for (j, &sigma) in spec.sigmas.iter().enumerate() {
        let fading = FadingModel::Lognormal { sigma, beta: spec.beta };
        let limit_mean =
            closed_form_power_law(growth.intensity(), spec.k, spec.beta, &fading, spec.tau)?;
        let r_max = match spec.r_max {
            Some(r) => r,
            None => min_radius_for_tail_mass(
                &growth,
                &path_loss,
                &fading,
                spec.tau,
                spec.mass_budget * limit_mean,
            )?,
        };
        let classes = lattice_radius_classes(spec.lattice, spec.s, r_max)?;
        let sampler = RestrictedSampler::new(&classes, &path_loss, &fading, spec.tau)?;
        let classes = Arc::new(classes);
        let measure = MeanMeasure::exact_sum(classes.clone(), path_loss.clone(), fading.clone())?
            .cached_log_grid(spec.tau * MEASURE_GRID_SPAN, spec.tau, MEASURE_GRID_POINTS)?;
        let batch = run_restricted_batch(
            &sampler,
            &measure,
            spec.n_reps,
            derive_seed(spec.seed, &[0xc03f, j as u64]),
        )?;
        let m_tau = sampler.mean();
        let gof = diagnose(
            &batch.counts,
            &batch.pooled_rescaled,
            m_tau,
            spec.tau,
            derive_seed(spec.seed, &[0x90f0, j as u64]),
            &spec.thresholds,
        )?;
        // the window was chosen from an omitted-mass budget, so the strict
        // per-point guard is replaced by full reporting of the edge term
        let bounds = tv_bounds_with_guard(&classes, &path_loss, &fading, spec.tau, 1.0)?;
        rows.push(ConvergeRow {
            sigma,
            r_max,
            n_points: classes.total_points(),
            limit_mean,
            m_tau,
            bounds,
            gof,
        });
    }
    Ok(rows)
}

/// Configuration of the shared-factor overdispersion study (one lattice, one
/// sigma, common factor shared per replication).
#[derive(Clone, Debug)]
pub struct SharedFactorSpec {
    pub lattice: LatticeKind,
    pub s: f64,
    pub k: f64,
    pub beta: f64,
    pub sigma: f64,
    pub common: FadingModel,
    pub tau: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub mass_budget: f64,
}

/// Shared sampler plus the matching iid-composite sampler and measure for the
/// flip experiment.
pub struct SharedFactorStudy {
    pub shared_sampler: RestrictedSampler,
    pub iid_sampler: RestrictedSampler,
    pub iid_measure: MeanMeasure,
    pub iid_m_tau: f64,
    pub tau: f64,
}

impl SharedFactorStudy {
    pub fn build(spec: &SharedFactorSpec) -> Result<Self> {
        let growth = GrowthFunction::for_lattice(spec.lattice, spec.s);
        let path_loss = PathLossModel::power_law(spec.k, spec.beta)?;
        let lognormal = FadingModel::Lognormal { sigma: spec.sigma, beta: spec.beta };
        let shared = FadingModel::SharedFactor {
            idiosyncratic: Box::new(lognormal.clone()),
            common: Box::new(spec.common.clone()),
        };
        let iid = FadingModel::Product {
            components: vec![lognormal.clone(), spec.common.clone()],
        };
        let limit_mean =
            closed_form_power_law(growth.intensity(), spec.k, spec.beta, &iid, spec.tau)?;
        let r_max = min_radius_for_tail_mass(
            &growth,
            &path_loss,
            &iid,
            spec.tau,
            spec.mass_budget * limit_mean,
        )?;
        let classes = lattice_radius_classes(spec.lattice, spec.s, r_max)?;
        let shared_sampler = RestrictedSampler::new(&classes, &path_loss, &shared, spec.tau)?;
        let iid_sampler = RestrictedSampler::new(&classes, &path_loss, &iid, spec.tau)?;
        let iid_m_tau = iid_sampler.mean();
        // composite tails are quadratures; tabulate the tail once so the
        // measure grid build does interpolation instead of repeated integration
        let gains: Result<Vec<(f64, f64)>> = classes
            .classes()
            .iter()
            .map(|&(r, m)| Ok((path_loss.evaluate(r)?, m as f64)))
            .collect();
        let gains = gains?;
        let s_lo = gains.first().expect("nonempty lattice").0 / spec.tau;
        let s_hi = gains.last().expect("nonempty lattice").0 / (spec.tau * MEASURE_GRID_SPAN);
        let cached_tail = CachedTail::new(&iid, s_lo * 0.5, s_hi * 2.0, TAIL_GRID_POINTS)?;
        let measure = MeanMeasure::from_fn(MeasureKind::ExactSum, move |t| {
            gains.iter().map(|&(g, m)| m * cached_tail.tail(g / t)).sum()
        })
        .cached_log_grid(spec.tau * MEASURE_GRID_SPAN, spec.tau, MEASURE_GRID_POINTS)?;
        Ok(SharedFactorStudy {
            shared_sampler,
            iid_sampler,
            iid_measure: measure,
            iid_m_tau,
            tau: spec.tau,
        })
    }

    /// Fraction of meta-replications whose dispersion interval lies entirely
    /// above 1 (flagged overdispersed), for `n_meta` batches of `n_reps`
    /// shared-factor replications.
    pub fn shared_overdispersion_rate(
        &self,
        n_meta: usize,
        n_reps: usize,
        ci_level: f64,
        seed: u64,
    ) -> Result<f64> {
        let flags: Result<Vec<bool>> = (0..n_meta)
            .into_par_iter()
            .map(|m| {
                let counts: Result<Vec<u64>> = (0..n_reps)
                    .map(|i| {
                        let mut rng =
                            stream_rng(seed, &[0x53f0, m as u64, i as u64]);
                        self.shared_sampler.sample_count(&mut rng)
                    })
                    .collect();
                let (_, ci) = dispersion(&counts?, ci_level)?;
                Ok(ci.0 > 1.0)
            })
            .collect();
        let flags = flags?;
        Ok(flags.iter().filter(|&&f| f).count() as f64 / n_meta as f64)
    }

    /// Full diagnosis of the iid-composite arm.
    pub fn diagnose_iid(
        &self,
        n_reps: usize,
        seed: u64,
        thresholds: &GofThresholds,
    ) -> Result<GoFReport> {
        let batch = run_restricted_batch(&self.iid_sampler, &self.iid_measure, n_reps, seed)?;
        diagnose(
            &batch.counts,
            &batch.pooled_rescaled,
            self.iid_m_tau,
            self.tau,
            derive_seed(seed, &[0xd1a6]),
            thresholds,
        )
    }
}

/// Exact-sum mean measure over explicit classes, cached for rescaling.
pub fn cached_exact_sum_measure(
    classes: Arc<RadiusClasses>,
    path_loss: PathLossModel,
    fading: FadingModel,
    tau: f64,
) -> Result<MeanMeasure> {
    MeanMeasure::exact_sum(classes, path_loss, fading)?
        .cached_log_grid(tau * MEASURE_GRID_SPAN, tau, MEASURE_GRID_POINTS)
}

/// Disk-truncated intensity measure, cached for rescaling.
pub fn cached_intensity_measure(
    lambda: f64,
    r_max: f64,
    path_loss: PathLossModel,
    fading: FadingModel,
    tau: f64,
) -> Result<MeanMeasure> {
    MeanMeasure::truncated_disk_intensity(lambda, r_max, path_loss, fading)?
        .cached_log_grid(tau * MEASURE_GRID_SPAN, tau, MEASURE_GRID_POINTS)
}
