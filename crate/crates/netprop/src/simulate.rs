//! Exact replication engine for the restricted process N|_tau.
//!
//! Given a pattern as radius classes, each point enters (0, tau] independently
//! with probability p_i(tau), and an entering point's value follows the
//! conditional law of h(r_i)/S given the hit. The engine samples that
//! representation directly: writing the hit indicator as min(1, K_i) with
//! K_i ~ Poisson(q_i), q_i = -ln(1 - p_i), the superposed arrival stream is a
//! single Poisson draw whose arrivals are categorical over points, and
//! collisions are removed exactly. This is distribution-identical to
//! generate-then-restrict while costing O(expected hits) per replication
//! instead of O(pattern size).
//!
//! For shared-factor fading the per-point probabilities depend on the common
//! draw v. The superposition table is built at an envelope v_cap (a
//! 1 - 1e-9 quantile of the common law) and arrivals are thinned by
//! q_i(v)/q_i(v_cap), which is exact Poisson thinning because p_i(v) is
//! nondecreasing in v; the rare v > v_cap replication falls back to a full
//! per-class pass.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::pathloss::PathLossModel;
use crate::patterns::RadiusClasses;

/// Classes with hit probability above this bound are simulated per class with
/// binomial draws instead of entering the superposition table.
const CERTAIN_CUT: f64 = 0.999;
/// Envelope quantile for the shared-factor common draw.
const ENVELOPE_TAIL: f64 = 1e-9;

#[derive(Clone, Debug)]
struct ClassEntry {
    gain: f64,
    m: u64,
    p_bar: f64,
    q_bar: f64,
}

/// One-configuration sampler for N|_tau replications.
pub struct RestrictedSampler {
    tau: f64,
    idio: FadingModel,
    common: Option<FadingModel>,
    v_cap: f64,
    entries: Vec<ClassEntry>,
    cum_weight: Vec<f64>,
    total_q: f64,
    high: Vec<ClassEntry>,
    /// (gain, multiplicity) for every class, for the over-envelope fallback
    full: Vec<(f64, u64)>,
    mean: f64,
    sum_p_sq: f64,
}

impl RestrictedSampler {
    pub fn new(
        classes: &RadiusClasses,
        path_loss: &PathLossModel,
        fading: &FadingModel,
        tau: f64,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        path_loss.validate()?;
        fading.validate()?;
        let (idio, common) = fading.shared_split();
        let (idio, common) = (idio.clone(), common.cloned());
        let v_cap = match &common {
            None => 1.0,
            Some(c) => c.quantile(1.0 - ENVELOPE_TAIL)?,
        };
        let tau_env = tau * v_cap;
        // per-class envelope probabilities, computed in parallel but kept in
        // class order so the table is deterministic
        let probs: Result<Vec<(f64, f64)>> = classes
            .classes()
            .par_iter()
            .map(|&(r, _)| {
                let gain = path_loss.evaluate(r)?;
                Ok((gain, idio.tail(gain / tau_env)?))
            })
            .collect();
        let probs = probs?;
        let mut entries = Vec::new();
        let mut high = Vec::new();
        let mut cum_weight = Vec::new();
        let mut full = Vec::with_capacity(probs.len());
        let mut total_q = 0.0;
        let mut mean = 0.0;
        let mut sum_p_sq = 0.0;
        for (&(_, m), &(gain, p)) in classes.classes().iter().zip(probs.iter()) {
            mean += m as f64 * p;
            sum_p_sq += m as f64 * p * p;
            full.push((gain, m));
            if p <= 0.0 {
                continue;
            }
            let e = ClassEntry { gain, m, p_bar: p, q_bar: -(-p).ln_1p() };
            if p >= CERTAIN_CUT {
                high.push(e);
            } else {
                total_q += m as f64 * e.q_bar;
                cum_weight.push(total_q);
                entries.push(e);
            }
        }
        Ok(RestrictedSampler {
            tau,
            idio,
            common,
            v_cap,
            entries,
            cum_weight,
            total_q,
            high,
            full,
            mean,
            sum_p_sq,
        })
    }

    /// Exact M(tau) for i.i.d. fading; for shared-factor fading this is the
    /// envelope mean, not the marginal one.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Exact sum of p_i(tau)^2 (i.i.d. fading).
    pub fn sum_p_sq(&self) -> f64 {
        self.sum_p_sq
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_shared(&self) -> bool {
        self.common.is_some()
    }

    /// One replication of N|_tau, sorted ascending.
    pub fn sample_values(&self, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        let mut values = Vec::new();
        self.replicate(rng, &mut |gain_over_v, s0, rng| {
            let s = self.idio.sample_conditional_ge(s0, rng)?;
            values.push(gain_over_v / s);
            Ok(())
        })?;
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ok(values)
    }

    /// One replication, count only.
    pub fn sample_count(&self, rng: &mut ChaCha12Rng) -> Result<u64> {
        let mut n = 0u64;
        self.replicate(rng, &mut |_, _, _| {
            n += 1;
            Ok(())
        })?;
        Ok(n)
    }

    /// Drive one replication; `emit(gain_over_v, s0_idio, rng)` is called once
    /// per entering point, where the point's value is gain_over_v / S_idio
    /// with S_idio drawn conditionally >= s0_idio.
    fn replicate(
        &self,
        rng: &mut ChaCha12Rng,
        emit: &mut dyn FnMut(f64, f64, &mut ChaCha12Rng) -> Result<()>,
    ) -> Result<()> {
        let v = match &self.common {
            None => 1.0,
            Some(c) => c.sample(rng),
        };
        if v > self.v_cap {
            return self.replicate_full_pass(v, rng, emit);
        }
        let vtau = v * self.tau;
        // high-probability tier: per-class binomial
        for e in &self.high {
            let p = if self.common.is_none() { e.p_bar } else { self.idio.tail(e.gain / vtau)? };
            let hits = if p >= 1.0 {
                e.m
            } else if p <= 0.0 {
                0
            } else {
                Binomial::new(e.m, p).expect("valid binomial").sample(rng)
            };
            let s0 = e.gain / vtau;
            for _ in 0..hits {
                emit(e.gain / v, s0, rng)?;
            }
        }
        // superposition tier
        if self.total_q > 0.0 {
            let t = Poisson::new(self.total_q).expect("positive mean").sample(rng) as u64;
            let mut seen: HashSet<(u32, u64)> = HashSet::new();
            for _ in 0..t {
                let u = rng.random::<f64>() * self.total_q;
                let g = self.cum_weight.partition_point(|&w| w < u).min(self.entries.len() - 1);
                let e = &self.entries[g];
                // thinning for the shared-factor envelope
                if self.common.is_some() {
                    let p_v = self.idio.tail(e.gain / vtau)?;
                    let q_v = if p_v >= 1.0 { f64::INFINITY } else { -(-p_v).ln_1p() };
                    let accept = (q_v / e.q_bar).min(1.0);
                    if !(rng.random::<f64>() < accept) {
                        continue;
                    }
                }
                let idx = rng.random_range(0..e.m);
                if !seen.insert((g as u32, idx)) {
                    continue;
                }
                emit(e.gain / v, e.gain / vtau, rng)?;
            }
        }
        Ok(())
    }

    /// Exact per-class pass for the rare over-envelope common draw.
    fn replicate_full_pass(
        &self,
        v: f64,
        rng: &mut ChaCha12Rng,
        emit: &mut dyn FnMut(f64, f64, &mut ChaCha12Rng) -> Result<()>,
    ) -> Result<()> {
        let vtau = v * self.tau;
        for &(gain, m) in &self.full {
            let p = self.idio.tail(gain / vtau)?;
            let hits = if p >= 1.0 {
                m
            } else if p <= 0.0 {
                0
            } else {
                Binomial::new(m, p).expect("valid binomial").sample(rng)
            };
            let s0 = gain / vtau;
            for _ in 0..hits {
                emit(gain / v, s0, rng)?;
            }
        }
        Ok(())
    }
}

/// Run replications in parallel with per-replication derived seeds; results
/// are independent of the thread count.
pub fn sample_counts_batch(
    sampler: &RestrictedSampler,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream_rng(seed, &[0x5e5e_0001, i as u64]);
            sampler.sample_count(&mut rng)
        })
        .collect()
}

/// Values for every replication, in replication order.
pub fn sample_values_batch(
    sampler: &RestrictedSampler,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream_rng(seed, &[0x5e5e_0001, i as u64]);
            sampler.sample_values(&mut rng)
        })
        .collect()
}
