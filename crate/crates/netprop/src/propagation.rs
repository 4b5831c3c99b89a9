//! The propagation process N = {h(|x_i|)/S_i} on (0, inf), its restriction to
//! (0, tau], and the inversion to the received-power process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::pathloss::PathLossModel;
use crate::patterns::{PatternProvenance, PointPattern2D};
use crate::rng::stream_rng;

/// What produced a process realization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProcessProvenance {
    pub pattern: PatternProvenance,
    pub n_points: usize,
    pub path_loss: PathLossModel,
    pub fading: FadingModel,
    pub seed: u64,
}

/// Sorted inverse-power values, optionally restricted to (0, tau].
#[derive(Clone, Debug)]
pub struct PropagationProcess {
    values: Vec<f64>,
    tau: Option<f64>,
    provenance: Option<ProcessProvenance>,
}

impl PropagationProcess {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "propagation values must be strictly positive, got {v}"
                )));
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ok(PropagationProcess { values, tau: None, provenance: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The restriction threshold, if this process was restricted.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn provenance(&self) -> Option<&ProcessProvenance> {
        self.provenance.as_ref()
    }

    /// N((0, t]): number of values at or below t.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    /// Keep the values in (0, tau] and record tau.
    pub fn restrict(&self, tau: f64) -> Result<PropagationProcess> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let cut = self.count_up_to(tau);
        Ok(PropagationProcess {
            values: self.values[..cut].to_vec(),
            tau: Some(tau),
            provenance: self.provenance.clone(),
        })
    }

    /// Map x -> 1/x onto the power side; a tau-restricted process maps onto
    /// powers in [1/tau, inf).
    pub fn invert_to_powers(&self) -> PowerProcess {
        let values = self.values.iter().rev().map(|v| 1.0 / v).collect();
        PowerProcess { values, min_power: self.tau.map(|t| 1.0 / t) }
    }

    /// One value per row, header `y`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "y")?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Received powers sorted descending; the reciprocal image of a propagation
/// process.
#[derive(Clone, Debug)]
pub struct PowerProcess {
    values: Vec<f64>,
    min_power: Option<f64>,
}

impl PowerProcess {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Lower edge of the power window ([tau_power, inf)), if restricted.
    pub fn min_power(&self) -> Option<f64> {
        self.min_power
    }

    /// Back to inverse powers; exact reciprocal round trip.
    pub fn invert_to_propagation(&self) -> PropagationProcess {
        let values: Vec<f64> = self.values.iter().rev().map(|v| 1.0 / v).collect();
        PropagationProcess { values, tau: self.min_power.map(|p| 1.0 / p), provenance: None }
    }
}

/// Assemble the propagation process for one fading replication.
///
/// Fading draws attach to points in the pattern's (radius, angle) order; a
/// shared-factor model draws its common factor once per call, before any
/// per-point draw.
pub fn generate(
    pattern: &PointPattern2D,
    path_loss: &PathLossModel,
    fading: &FadingModel,
    seed: u64,
) -> Result<PropagationProcess> {
    path_loss.validate()?;
    fading.validate()?;
    let mut rng = stream_rng(seed, &[0x4e50_0001]);
    let rep = fading.replication(&mut rng);
    let mut values = Vec::with_capacity(pattern.len());
    for &r in pattern.radii() {
        let gain = path_loss.evaluate(r)?;
        let s = rep.sample(&mut rng);
        values.push(gain / s);
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(PropagationProcess {
        values,
        tau: None,
        provenance: Some(ProcessProvenance {
            pattern: pattern.provenance().clone(),
            n_points: pattern.len(),
            path_loss: path_loss.clone(),
            fading: fading.clone(),
            seed,
        }),
    })
}

/// p^{(x)}(t) = P(0 < h(r)/S <= t) = P(S >= h(r)/t) for a point at radius r.
pub fn point_probability(
    path_loss: &PathLossModel,
    fading: &FadingModel,
    r: f64,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("threshold t must be positive, got {t}")));
    }
    let gain = path_loss.evaluate(r)?;
    fading.tail(gain / t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::PointPattern2D;
    use approx::assert_abs_diff_eq;

    fn unit_fading() -> FadingModel {
        FadingModel::Deterministic { s0: 1.0 }
    }

    fn squared_gain() -> PathLossModel {
        PathLossModel::power_law(1.0, 2.0).unwrap()
    }

    #[test]
    fn generate_with_unit_fading_is_the_gain() {
        let pattern = PointPattern2D::from_raw_radii(&[1.0, 2.0], 3.0).unwrap();
        let n = generate(&pattern, &squared_gain(), &unit_fading(), 0).unwrap();
        assert_eq!(n.values(), &[1.0, 4.0]);
        let half = FadingModel::Deterministic { s0: 2.0 };
        let n = generate(&pattern, &squared_gain(), &half, 0).unwrap();
        assert_eq!(n.values(), &[0.5, 2.0]);
    }

    #[test]
    fn empty_pattern_gives_empty_process() {
        let pattern = PointPattern2D::from_raw_radii(&[], 1.0).unwrap();
        let n = generate(&pattern, &squared_gain(), &unit_fading(), 0).unwrap();
        assert!(n.is_empty());
        assert!(n.restrict(1.0).unwrap().is_empty());
    }

    #[test]
    fn restriction_examples() {
        let n = PropagationProcess::from_values(vec![1.0, 4.0]).unwrap();
        assert_eq!(n.restrict(2.0).unwrap().values(), &[1.0]);
        assert_eq!(n.restrict(5.0).unwrap().values(), &[1.0, 4.0]);
        assert_eq!(n.restrict(4.0).unwrap().values(), &[1.0, 4.0]);
        assert!(n.restrict(0.0).is_err());
    }

    #[test]
    fn inversion_examples() {
        let n = PropagationProcess::from_values(vec![1.0, 4.0]).unwrap();
        let p = n.invert_to_powers();
        assert_eq!(p.values(), &[1.0, 0.25]);
        let back = p.invert_to_propagation();
        assert_eq!(back.values(), n.values());
        let single = PropagationProcess::from_values(vec![0.5]).unwrap();
        assert_eq!(single.invert_to_powers().values(), &[2.0]);
    }

    #[test]
    fn power_duality_is_exact() {
        let n = PropagationProcess::from_values(vec![0.25, 1.0, 3.0, 8.0]).unwrap();
        let p = n.invert_to_powers();
        for (k, &pw) in p.values().iter().enumerate() {
            // k-th largest power is the reciprocal of the k-th smallest value
            assert_eq!(pw, 1.0 / n.values()[k]);
        }
        let r = n.restrict(3.0).unwrap();
        let pw = r.invert_to_powers();
        assert_eq!(pw.min_power(), Some(1.0 / 3.0));
        assert!(pw.values().iter().all(|&v| v >= 1.0 / 3.0));
    }

    #[test]
    fn point_probability_examples() {
        // h(r) = r^2, r = 2, S ~ exp(1), t = 4 -> P(S >= 1) = e^{-1}
        let p = point_probability(
            &squared_gain(),
            &FadingModel::Exponential { mu: 1.0 },
            2.0,
            4.0,
        )
        .unwrap();
        assert_abs_diff_eq!(p, (-1f64).exp(), epsilon = 1e-13);
        // lognormal sigma=2, beta=4, h(r)=r^4, r=1, t=1
        let p = point_probability(
            &PathLossModel::power_law(1.0, 4.0).unwrap(),
            &FadingModel::Lognormal { sigma: 2.0, beta: 4.0 },
            1.0,
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(p, 0.308537538725987, epsilon = 1e-12);
        // deterministic S = 1, h(r) = r^2, r = 2, t = 1 -> 0
        let p = point_probability(&squared_gain(), &unit_fading(), 2.0, 1.0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn monotone_coupling_in_tau() {
        let pattern = PointPattern2D::from_raw_radii(&[0.5, 1.0, 1.5, 2.0], 2.0).unwrap();
        let fading = FadingModel::Lognormal { sigma: 1.0, beta: 4.0 };
        let n = generate(&pattern, &squared_gain(), &fading, 42).unwrap();
        let mut prev: Vec<f64> = Vec::new();
        for tau in [0.1, 0.5, 1.0, 5.0, 50.0] {
            let cur = n.restrict(tau).unwrap().values().to_vec();
            assert!(prev.iter().all(|v| cur.contains(v)));
            prev = cur;
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let pattern = PointPattern2D::from_raw_radii(&[0.5, 1.0, 1.5], 2.0).unwrap();
        let fading = crate::fading::suzuki(1.0, 4.0);
        let a = generate(&pattern, &squared_gain(), &fading, 9).unwrap();
        let b = generate(&pattern, &squared_gain(), &fading, 9).unwrap();
        assert_eq!(a.values(), b.values());
        let c = generate(&pattern, &squared_gain(), &fading, 10).unwrap();
        assert_ne!(a.values(), c.values());
    }
}
