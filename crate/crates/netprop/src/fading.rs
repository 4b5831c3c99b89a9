//! Fading/shadowing distribution families: sampling, exact upper tails,
//! fractional moments, and product composites including a shared common
//! factor drawn once per replication.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{Error, Result};
use crate::numeric::{integrate, normal_tail, normal_tail_inv};

/// Tail integration target for composite models.
const COMPOSITE_TAIL_TOL: f64 = 1e-11;
/// Truncated-moment quadrature target.
const TRUNC_MOMENT_TOL: f64 = 1e-9;

/// A fading distribution; all values are dimensionless powers, samples are
/// strictly positive.
///
/// `lognormal(sigma, beta)` is exp(sigma B - sigma^2/beta) with B standard
/// normal, so E S^{2/beta} = 1. `shared-factor` multiplies an idiosyncratic
/// per-point draw by a common factor drawn once per replication.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FadingModel {
    Lognormal { sigma: f64, beta: f64 },
    Exponential { mu: f64 },
    Deterministic { s0: f64 },
    Product { components: Vec<FadingModel> },
    SharedFactor { idiosyncratic: Box<FadingModel>, common: Box<FadingModel> },
}

/// A fractional moment that may diverge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
}

/// Rate making an exponential factor satisfy E S^{2/beta} = 1 (the Suzuki
/// normalization): Gamma(1 + 2/beta)^{beta/2}.
pub fn suzuki_rate(beta: f64) -> f64 {
    gamma(1.0 + 2.0 / beta).powf(beta / 2.0)
}

/// The Suzuki composite: lognormal(sigma, beta) times an independent
/// exponential with the normalizing rate.
pub fn suzuki(sigma: f64, beta: f64) -> FadingModel {
    FadingModel::Product {
        components: vec![
            FadingModel::Lognormal { sigma, beta },
            FadingModel::Exponential { mu: suzuki_rate(beta) },
        ],
    }
}

/// One-parameter simple families; deterministic factors fold into a scale.
#[derive(Clone, Copy, Debug)]
enum Simple {
    Lognormal { sigma: f64, beta: f64 },
    Exponential { mu: f64 },
}

impl Simple {
    fn tail(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        match *self {
            Simple::Lognormal { sigma, beta } => {
                normal_tail((s.ln() + sigma * sigma / beta) / sigma)
            }
            Simple::Exponential { mu } => (-mu * s).exp(),
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match *self {
            Simple::Lognormal { sigma, beta } => {
                let z = normal_tail_inv(1.0 - u);
                (sigma * z - sigma * sigma / beta).exp()
            }
            Simple::Exponential { mu } => -(-u).ln_1p() / mu,
        }
    }

    fn moment(&self, p: f64) -> f64 {
        match *self {
            Simple::Lognormal { sigma, beta } => {
                (p * p * sigma * sigma / 2.0 - p * sigma * sigma / beta).exp()
            }
            Simple::Exponential { mu } => gamma(1.0 + p) / mu.powf(p),
        }
    }

    /// E[S^p 1{lo <= S < hi}] in closed form.
    fn truncated_moment(&self, p: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match *self {
            Simple::Lognormal { sigma, beta } => {
                let m = -sigma * sigma / beta;
                let cdf = |bound: f64| -> f64 {
                    if bound <= 0.0 {
                        0.0
                    } else if bound.is_infinite() {
                        1.0
                    } else {
                        1.0 - normal_tail((bound.ln() - m) / sigma - p * sigma)
                    }
                };
                self.moment(p) * (cdf(hi) - cdf(lo))
            }
            Simple::Exponential { mu } => {
                let reg = |bound: f64| -> f64 {
                    if bound <= 0.0 {
                        0.0
                    } else if bound.is_infinite() {
                        1.0
                    } else {
                        gamma_lr(1.0 + p, mu * bound)
                    }
                };
                gamma(1.0 + p) / mu.powf(p) * (reg(hi) - reg(lo))
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Simple::Lognormal { sigma, beta } => {
                let b: f64 = StandardNormal.sample(rng);
                (sigma * b - sigma * sigma / beta).exp()
            }
            Simple::Exponential { mu } => Exp::new(mu).expect("positive rate").sample(rng),
        }
    }

    /// Draw S conditional on S >= s0 (inverse-tail for the lognormal,
    /// memorylessness for the exponential).
    fn sample_conditional_ge(&self, s0: f64, rng: &mut impl Rng) -> f64 {
        if s0 <= 0.0 {
            return self.sample(rng);
        }
        match *self {
            Simple::Lognormal { sigma, beta } => {
                let z0 = (s0.ln() + sigma * sigma / beta) / sigma;
                let t0 = normal_tail(z0);
                let u: f64 = rng.random::<f64>();
                let z = normal_tail_inv((u * t0).clamp(f64::MIN_POSITIVE, 1.0));
                (sigma * z - sigma * sigma / beta).exp()
            }
            Simple::Exponential { mu } => {
                s0 + Exp::new(mu).expect("positive rate").sample(rng)
            }
        }
    }
}

/// A model factored into a deterministic scale and simple stochastic parts.
struct Factored {
    scale: f64,
    parts: Vec<Simple>,
}

impl FadingModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            FadingModel::Lognormal { sigma, beta } => {
                if *sigma > 0.0 && sigma.is_finite() && *beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "lognormal needs sigma > 0 and beta > 0, got sigma = {sigma}, beta = {beta}"
                    )))
                }
            }
            FadingModel::Exponential { mu } => {
                if *mu > 0.0 && mu.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("exponential needs mu > 0, got {mu}")))
                }
            }
            FadingModel::Deterministic { s0 } => {
                if *s0 > 0.0 && s0.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "deterministic fading needs s0 > 0, got {s0}"
                    )))
                }
            }
            FadingModel::Product { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter("empty fading product".into()));
                }
                components.iter().try_for_each(|c| c.validate())
            }
            FadingModel::SharedFactor { idiosyncratic, common } => {
                idiosyncratic.validate()?;
                common.validate()?;
                if matches!(**common, FadingModel::SharedFactor { .. }) {
                    return Err(Error::Unsupported("nested shared factors".into()));
                }
                Ok(())
            }
        }
    }

    fn factorize_into(&self, out: &mut Factored) -> Result<()> {
        match self {
            FadingModel::Lognormal { sigma, beta } => {
                out.parts.push(Simple::Lognormal { sigma: *sigma, beta: *beta });
            }
            FadingModel::Exponential { mu } => {
                out.parts.push(Simple::Exponential { mu: *mu });
            }
            FadingModel::Deterministic { s0 } => out.scale *= s0,
            FadingModel::Product { components } => {
                for c in components {
                    c.factorize_into(out)?;
                }
            }
            FadingModel::SharedFactor { idiosyncratic, common } => {
                idiosyncratic.factorize_into(out)?;
                common.factorize_into(out)?;
            }
        }
        Ok(())
    }

    fn factorize(&self) -> Result<Factored> {
        self.validate()?;
        let mut out = Factored { scale: 1.0, parts: Vec::new() };
        self.factorize_into(&mut out)?;
        Ok(out)
    }

    /// One marginal draw. For shared-factor models this draws a fresh common
    /// factor too; replication-level sharing is what
    /// [`FadingModel::replication`] is for.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            FadingModel::Lognormal { sigma, beta } => {
                Simple::Lognormal { sigma: *sigma, beta: *beta }.sample(rng)
            }
            FadingModel::Exponential { mu } => Simple::Exponential { mu: *mu }.sample(rng),
            FadingModel::Deterministic { s0 } => *s0,
            FadingModel::Product { components } => {
                components.iter().map(|c| c.sample(rng)).product()
            }
            FadingModel::SharedFactor { idiosyncratic, common } => {
                idiosyncratic.sample(rng) * common.sample(rng)
            }
        }
    }

    /// Start one replication: the common factor of a shared-factor model is
    /// drawn here, once, and multiplies every subsequent per-point draw.
    pub fn replication(&self, rng: &mut impl Rng) -> ReplicationSampler<'_> {
        match self {
            FadingModel::SharedFactor { idiosyncratic, common } => ReplicationSampler {
                per_point: idiosyncratic,
                common: common.sample(rng),
            },
            other => ReplicationSampler { per_point: other, common: 1.0 },
        }
    }

    /// Batched draws under replication semantics (one shared factor for the
    /// whole batch).
    pub fn sample_batch(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let rep = self.replication(rng);
        (0..n).map(|_| rep.sample(rng)).collect()
    }

    /// Exact upper tail P(S >= s), s > 0.
    pub fn tail(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("tail needs s > 0, got {s}")));
        }
        if s.is_infinite() {
            return Ok(0.0);
        }
        let f = self.factorize()?;
        let s_eff = s / f.scale;
        Ok(match f.parts.len() {
            0 => {
                if s_eff <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            1 => f.parts[0].tail(s_eff),
            2 => {
                let (a, b) = (f.parts[0], f.parts[1]);
                // P(AB >= s) = E_B[ tail_A(s / B) ], integrated over B's CDF
                integrate(
                    &|u: f64| {
                        let bv = b.quantile(u);
                        if bv <= 0.0 {
                            0.0
                        } else {
                            a.tail(s_eff / bv)
                        }
                    },
                    0.0,
                    1.0,
                    COMPOSITE_TAIL_TOL,
                )
                .clamp(0.0, 1.0)
            }
            n => {
                return Err(Error::Unsupported(format!(
                    "tail of a product with {n} stochastic factors (max 2)"
                )))
            }
        })
    }

    /// Fractional moment E S^p, p > 0; closed form per factor.
    pub fn fractional_moment(&self, p: f64) -> Result<Moment> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("fractional moment needs p > 0, got {p}")));
        }
        let f = self.factorize()?;
        let mut acc = f.scale.powf(p);
        for part in &f.parts {
            let m = part.moment(p);
            if !m.is_finite() {
                return Ok(Moment::Infinite);
            }
            acc *= m;
        }
        if acc.is_finite() {
            Ok(Moment::Finite(acc))
        } else {
            Ok(Moment::Infinite)
        }
    }

    /// E[S^p 1{lo <= S < hi}]; closed forms for simple families, one
    /// quadrature pass for two-factor composites.
    pub fn truncated_moment(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("truncated moment needs p > 0, got {p}")));
        }
        if !(lo >= 0.0) || hi < lo {
            return Err(Error::Domain(format!("bad truncation range [{lo}, {hi})")));
        }
        let f = self.factorize()?;
        let (lo_eff, hi_eff) = (lo / f.scale, hi / f.scale);
        let scale_p = f.scale.powf(p);
        Ok(match f.parts.len() {
            0 => {
                if lo_eff <= 1.0 && 1.0 < hi_eff {
                    scale_p
                } else {
                    0.0
                }
            }
            1 => scale_p * f.parts[0].truncated_moment(p, lo_eff, hi_eff),
            2 => {
                let (a, b) = (f.parts[0], f.parts[1]);
                scale_p
                    * integrate(
                        &|u: f64| {
                            let bv = b.quantile(u);
                            if bv <= 0.0 {
                                return 0.0;
                            }
                            bv.powf(p) * a.truncated_moment(p, lo_eff / bv, hi_eff / bv)
                        },
                        0.0,
                        1.0,
                        TRUNC_MOMENT_TOL,
                    )
            }
            n => {
                return Err(Error::Unsupported(format!(
                    "truncated moment of a product with {n} stochastic factors (max 2)"
                )))
            }
        })
    }

    /// Draw S conditional on S >= s0 (marginal law for composites).
    pub fn sample_conditional_ge(&self, s0: f64, rng: &mut impl Rng) -> Result<f64> {
        let f = self.factorize()?;
        let s_eff = s0 / f.scale;
        Ok(match f.parts.len() {
            0 => {
                if s_eff <= 1.0 {
                    f.scale
                } else {
                    return Err(Error::Domain(format!(
                        "conditioning a deterministic value on S >= {s0} has probability zero"
                    )));
                }
            }
            1 => f.scale * f.parts[0].sample_conditional_ge(s_eff, rng),
            2 => {
                let (a, b) = (f.parts[0], f.parts[1]);
                if s_eff <= 0.0 {
                    return Ok(f.scale * a.sample(rng) * b.sample(rng));
                }
                // marginal CDF of B given AB >= s, in B's quantile domain:
                // H(v) = int_0^v tail_A(s / q_B(u)) du, normalized by H(1)
                let h = |v: f64| -> f64 {
                    integrate(
                        &|u: f64| {
                            let bv = b.quantile(u);
                            if bv <= 0.0 {
                                0.0
                            } else {
                                a.tail(s_eff / bv)
                            }
                        },
                        0.0,
                        v,
                        COMPOSITE_TAIL_TOL,
                    )
                };
                let total = h(1.0);
                if total <= 0.0 {
                    return Err(Error::Domain(format!(
                        "conditioning on S >= {s0} has probability zero"
                    )));
                }
                let target = rng.random::<f64>() * total;
                let (mut lo_u, mut hi_u) = (0.0f64, 1.0f64);
                for _ in 0..60 {
                    let mid = 0.5 * (lo_u + hi_u);
                    if h(mid) < target {
                        lo_u = mid;
                    } else {
                        hi_u = mid;
                    }
                }
                let bv = b.quantile(0.5 * (lo_u + hi_u));
                let av = a.sample_conditional_ge(s_eff / bv, rng);
                f.scale * av * bv
            }
            n => {
                return Err(Error::Unsupported(format!(
                    "conditional sampling of a product with {n} stochastic factors (max 2)"
                )))
            }
        })
    }

    /// Quantile function for the simple one-factor families.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile needs u in [0,1), got {u}")));
        }
        match self {
            FadingModel::Lognormal { sigma, beta } => {
                Ok(Simple::Lognormal { sigma: *sigma, beta: *beta }.quantile(u))
            }
            FadingModel::Exponential { mu } => Ok(Simple::Exponential { mu: *mu }.quantile(u)),
            FadingModel::Deterministic { s0 } => Ok(*s0),
            other => Err(Error::Unsupported(format!(
                "quantile of a composite fading model: {other:?}"
            ))),
        }
    }

    /// The idiosyncratic part and common-factor law of a shared-factor model;
    /// identity view for iid models (common factor degenerate at 1).
    pub fn shared_split(&self) -> (&FadingModel, Option<&FadingModel>) {
        match self {
            FadingModel::SharedFactor { idiosyncratic, common } => {
                (idiosyncratic, Some(common))
            }
            other => (other, None),
        }
    }
}

/// Per-replication fading source: a fixed common factor times fresh
/// idiosyncratic draws.
pub struct ReplicationSampler<'a> {
    per_point: &'a FadingModel,
    common: f64,
}

impl ReplicationSampler<'_> {
    pub fn common_factor(&self) -> f64 {
        self.common
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.common * self.per_point.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn deterministic_basics() {
        let m = FadingModel::Deterministic { s0: 3.0 };
        let mut rng = stream_rng(1, &[]);
        assert_eq!(m.sample(&mut rng), 3.0);
        assert_eq!(m.tail(2.0).unwrap(), 1.0);
        assert_eq!(m.tail(3.0).unwrap(), 1.0);
        assert_eq!(m.tail(3.0000001).unwrap(), 0.0);
        // deterministic s0 = 1, s = 2 -> 0
        let unit = FadingModel::Deterministic { s0: 1.0 };
        assert_eq!(unit.tail(2.0).unwrap(), 0.0);
    }

    #[test]
    fn lognormal_tail_reference() {
        let m = FadingModel::Lognormal { sigma: 2.0, beta: 4.0 };
        assert_abs_diff_eq!(m.tail(1.0).unwrap(), 0.308537538725987, epsilon = 1e-12);
        assert!(m.tail(0.0).is_err());
    }

    #[test]
    fn exponential_tail_reference() {
        let m = FadingModel::Exponential { mu: 1.0 };
        assert_abs_diff_eq!(m.tail(2f64.ln()).unwrap(), 0.5, epsilon = 1e-13);
    }

    #[test]
    fn lognormal_moments() {
        let m = FadingModel::Lognormal { sigma: 3.0, beta: 4.0 };
        let v = m.fractional_moment(0.5).unwrap().finite().unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        let m = FadingModel::Lognormal { sigma: 2.0, beta: 4.0 };
        let v = m.fractional_moment(1.0).unwrap().finite().unwrap();
        assert_abs_diff_eq!(v, (2.0f64 - 1.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn exponential_moments() {
        let m = FadingModel::Exponential { mu: 1.0 };
        assert_abs_diff_eq!(
            m.fractional_moment(1.0).unwrap().finite().unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Suzuki normalization: rate Gamma(1 + 2/beta)^{beta/2} at beta = 2 is 1
        assert_abs_diff_eq!(suzuki_rate(2.0), 1.0, epsilon = 1e-12);
        let m = FadingModel::Exponential { mu: suzuki_rate(4.0) };
        assert_abs_diff_eq!(
            m.fractional_moment(0.5).unwrap().finite().unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn composite_tail_against_independent_quadrature() {
        // P(S_L S_F >= s), sigma = 2, beta = 4, mu = 1; 30-digit references
        let m = FadingModel::Product {
            components: vec![
                FadingModel::Lognormal { sigma: 2.0, beta: 4.0 },
                FadingModel::Exponential { mu: 1.0 },
            ],
        };
        assert_abs_diff_eq!(m.tail(1.0).unwrap(), 0.2553540609198002, epsilon = 1e-9);
        assert_abs_diff_eq!(m.tail(0.5).unwrap(), 0.3613144574259096, epsilon = 1e-9);
    }

    #[test]
    fn composite_moment_is_product_of_moments() {
        let m = suzuki(2.0, 4.0);
        let v = m.fractional_moment(0.5).unwrap().finite().unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn truncated_moments_sum_to_full_moment() {
        for m in [
            FadingModel::Lognormal { sigma: 1.5, beta: 3.0 },
            FadingModel::Exponential { mu: 0.7 },
        ] {
            let p = 0.8;
            let full = m.fractional_moment(p).unwrap().finite().unwrap();
            let a = m.truncated_moment(p, 0.0, 1.3).unwrap();
            let b = m.truncated_moment(p, 1.3, f64::INFINITY).unwrap();
            assert_abs_diff_eq!(a + b, full, epsilon = 1e-9 * full);
        }
    }

    #[test]
    fn tail_is_monotone_and_bounded() {
        let models = [
            FadingModel::Lognormal { sigma: 2.0, beta: 4.0 },
            FadingModel::Exponential { mu: 1.3 },
            suzuki(1.0, 4.0),
        ];
        for m in &models {
            let mut prev = 1.0;
            for i in 0..60 {
                let s = 10f64.powf(-3.0 + 6.0 * i as f64 / 59.0);
                let t = m.tail(s).unwrap();
                assert!((0.0..=1.0).contains(&t));
                assert!(t <= prev + 1e-12, "tail not nonincreasing for {m:?}");
                prev = t;
            }
            assert!(m.tail(1e9).unwrap() < 1e-6);
        }
    }

    #[test]
    fn conditional_sampling_matches_tail() {
        // P(S >= s1 | S >= s0) should equal tail(s1)/tail(s0)
        let mut rng = stream_rng(7, &[1]);
        for m in [
            FadingModel::Lognormal { sigma: 2.0, beta: 4.0 },
            FadingModel::Exponential { mu: 1.0 },
        ] {
            let (s0, s1) = (1.5, 3.0);
            let n = 40_000;
            let mut hits = 0usize;
            for _ in 0..n {
                let s = m.sample_conditional_ge(s0, &mut rng).unwrap();
                assert!(s >= s0 * (1.0 - 1e-12));
                if s >= s1 {
                    hits += 1;
                }
            }
            let expect = m.tail(s1).unwrap() / m.tail(s0).unwrap();
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            let got = hits as f64 / n as f64;
            assert!((got - expect).abs() < 5.0 * se, "{m:?}: got {got}, expect {expect}");
        }
    }

    #[test]
    fn shared_factor_replication_semantics() {
        let m = FadingModel::SharedFactor {
            idiosyncratic: Box::new(FadingModel::Deterministic { s0: 2.0 }),
            common: Box::new(FadingModel::Exponential { mu: 1.0 }),
        };
        let mut rng = stream_rng(3, &[]);
        let rep = m.replication(&mut rng);
        let a = rep.sample(&mut rng);
        let b = rep.sample(&mut rng);
        // same common factor within a replication, deterministic idiosyncratic part
        assert_eq!(a, b);
        assert_eq!(a, 2.0 * rep.common_factor());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(FadingModel::Lognormal { sigma: 0.0, beta: 4.0 }.validate().is_err());
        assert!(FadingModel::Exponential { mu: -1.0 }.validate().is_err());
        assert!(FadingModel::Deterministic { s0: 0.0 }.validate().is_err());
        assert!(FadingModel::Product { components: vec![] }.validate().is_err());
    }

    #[test]
    fn three_factor_tail_is_unsupported() {
        let m = FadingModel::Product {
            components: vec![
                FadingModel::Exponential { mu: 1.0 },
                FadingModel::Exponential { mu: 1.0 },
                FadingModel::Exponential { mu: 1.0 },
            ],
        };
        assert!(matches!(m.tail(1.0), Err(Error::Unsupported(_))));
        // but sampling and moments still work
        let mut rng = stream_rng(5, &[]);
        assert!(m.sample(&mut rng) > 0.0);
        assert!(m.fractional_moment(1.0).unwrap().finite().is_some());
    }

    #[test]
    fn fading_specs_parse_from_json() {
        let m: FadingModel =
            serde_json::from_str(r#"{"kind":"lognormal","sigma":2,"beta":4}"#).unwrap();
        assert!(matches!(m, FadingModel::Lognormal { sigma, beta } if sigma == 2.0 && beta == 4.0));
        let m: FadingModel = serde_json::from_str(
            r#"{"kind":"shared-factor",
                "idiosyncratic":{"kind":"lognormal","sigma":1,"beta":4},
                "common":{"kind":"exponential","mu":0.8}}"#,
        )
        .unwrap();
        assert!(m.validate().is_ok());
    }
}
