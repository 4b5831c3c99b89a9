//! Radial path-gain models h(r), their generalized inverses
//! h^{-1}(y) = inf{x : h(x) > y}, and the Lambert W function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Left-continuous nondecreasing radial gain, positive on (0, inf).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathLossModel {
    /// h(r) = (K r)^beta
    PowerLaw { k: f64, beta: f64 },
    /// h(r) = r^beta e^{alpha r}; alpha = 0 degenerates to the power law
    ExpPower { alpha: f64, beta: f64 },
    /// Piecewise power segments joined continuously at the breakpoints
    MultiSlope(MultiSlope),
    /// Left-continuous step interpolation of tabulated monotone gains
    Tabulated(TabulatedMonotone),
}

/// Multi-slope gain: h(r) = b_i^{-1} r^{beta_i} on [r_{i-1}, r_i) with
/// 0 = r_0 < r_1 < ... < r_k < r_{k+1} = inf. Only b_1 is free; the remaining
/// coefficients are forced by continuity at the breakpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MultiSlopeSpec", into = "MultiSlopeSpec")]
pub struct MultiSlope {
    breakpoints: Vec<f64>,
    exponents: Vec<f64>,
    coeffs: Vec<f64>,
    levels: Vec<f64>,
}

/// Wire form of a multi-slope model; field names fixed by the CLI schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiSlopeSpec {
    pub breakpoints: Vec<f64>,
    pub exponents: Vec<f64>,
    pub b1: f64,
}

impl TryFrom<MultiSlopeSpec> for MultiSlope {
    type Error = Error;
    fn try_from(spec: MultiSlopeSpec) -> Result<Self> {
        MultiSlope::new(&spec.breakpoints, &spec.exponents, spec.b1)
    }
}

impl From<MultiSlope> for MultiSlopeSpec {
    fn from(m: MultiSlope) -> Self {
        MultiSlopeSpec {
            breakpoints: m.breakpoints.clone(),
            exponents: m.exponents.clone(),
            b1: m.coeffs[0],
        }
    }
}

impl MultiSlope {
    /// `breakpoints` are r_1 < ... < r_k; `exponents` are beta_1..beta_{k+1};
    /// b_2..b_{k+1} are derived from continuity: b_{i+1} = b_i r_i^{beta_{i+1}-beta_i}.
    pub fn new(breakpoints: &[f64], exponents: &[f64], b1: f64) -> Result<Self> {
        if exponents.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "multi-slope needs {} exponents for {} breakpoints, got {}",
                breakpoints.len() + 1,
                breakpoints.len(),
                exponents.len()
            )));
        }
        if !(b1 > 0.0 && b1.is_finite()) {
            return Err(Error::InvalidParameter(format!("b1 must be positive, got {b1}")));
        }
        let mut prev = 0.0;
        for &r in breakpoints {
            if !(r > prev && r.is_finite()) {
                return Err(Error::InvalidParameter(
                    "breakpoints must be strictly increasing and positive".into(),
                ));
            }
            prev = r;
        }
        for &b in exponents {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter("exponents must be positive".into()));
            }
        }
        let mut coeffs = vec![b1];
        for (i, &r) in breakpoints.iter().enumerate() {
            let b_next = coeffs[i] * r.powf(exponents[i + 1] - exponents[i]);
            coeffs.push(b_next);
        }
        // gain levels at the breakpoints: s_i = r_i^{beta_i} / b_i
        let levels = breakpoints
            .iter()
            .enumerate()
            .map(|(i, &r)| r.powf(exponents[i]) / coeffs[i])
            .collect();
        Ok(MultiSlope {
            breakpoints: breakpoints.to_vec(),
            exponents: exponents.to_vec(),
            coeffs,
            levels,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Gain levels s_i = h(r_i) at the breakpoints.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// c_i = b_i^{1/beta_i}, the inverse-side coefficients.
    pub fn inverse_coefficients(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .zip(self.exponents.iter())
            .map(|(&b, &beta)| b.powf(1.0 / beta))
            .collect()
    }

    fn eval(&self, r: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&x| x <= r);
        r.powf(self.exponents[i]) / self.coeffs[i]
    }

    fn inv(&self, y: f64) -> f64 {
        let i = self.levels.partition_point(|&s| s <= y);
        self.coeffs[i].powf(1.0 / self.exponents[i]) * y.powf(1.0 / self.exponents[i])
    }
}

/// Tabulated left-continuous step gain: h(x) = values[i] on (x_{i-1}, x_i],
/// constant at values[last] beyond the table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabulatedMonotone {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedMonotone {
    pub fn new(radii: &[f64], values: &[f64]) -> Result<Self> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(Error::InvalidParameter(
                "tabulated model needs equal-length nonempty radii/values".into(),
            ));
        }
        let mut prev_r = 0.0;
        for &r in radii {
            if !(r > prev_r && r.is_finite()) {
                return Err(Error::InvalidParameter(
                    "tabulated radii must be strictly increasing and positive".into(),
                ));
            }
            prev_r = r;
        }
        let mut prev_v = 0.0;
        for &v in values {
            if !(v >= prev_v && v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "tabulated gains must be positive and nondecreasing".into(),
                ));
            }
            prev_v = v;
        }
        Ok(TabulatedMonotone { radii: radii.to_vec(), values: values.to_vec() })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn eval(&self, r: f64) -> f64 {
        // left-continuous: the step value applies on (x_{i-1}, x_i]
        let i = self.radii.partition_point(|&x| x < r);
        self.values[i.min(self.values.len() - 1)]
    }

    fn inv(&self, y: f64) -> f64 {
        // inf{x : h(x) > y}: first step whose value exceeds y begins at the
        // previous table radius (or 0 for the first step)
        let i = self.values.partition_point(|&v| v <= y);
        if i == self.values.len() {
            f64::INFINITY
        } else if i == 0 {
            0.0
        } else {
            self.radii[i - 1]
        }
    }
}

impl PathLossModel {
    pub fn power_law(k: f64, beta: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "power law needs K > 0 and beta > 0, got K = {k}, beta = {beta}"
            )));
        }
        Ok(PathLossModel::PowerLaw { k, beta })
    }

    pub fn exp_power(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exp-power needs alpha >= 0 and beta > 0, got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(PathLossModel::ExpPower { alpha, beta })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PathLossModel::PowerLaw { k, beta } => {
                Self::power_law(*k, *beta).map(|_| ())
            }
            PathLossModel::ExpPower { alpha, beta } => Self::exp_power(*alpha, *beta).map(|_| ()),
            PathLossModel::MultiSlope(m) => {
                MultiSlope::new(&m.breakpoints, &m.exponents, m.coeffs[0]).map(|_| ())
            }
            PathLossModel::Tabulated(t) => TabulatedMonotone::new(&t.radii, &t.values).map(|_| ()),
        }
    }

    /// h(r) for r > 0.
    pub fn evaluate(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("path gain needs r > 0, got {r}")));
        }
        Ok(match self {
            PathLossModel::PowerLaw { k, beta } => (k * r).powf(*beta),
            PathLossModel::ExpPower { alpha, beta } => r.powf(*beta) * (alpha * r).exp(),
            PathLossModel::MultiSlope(m) => m.eval(r),
            PathLossModel::Tabulated(t) => t.eval(r),
        })
    }

    /// Generalized inverse h^{-1}(y) = inf{x : h(x) > y} for y >= 0.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("generalized inverse needs y >= 0, got {y}")));
        }
        Ok(match self {
            PathLossModel::PowerLaw { k, beta } => y.powf(1.0 / beta) / k,
            PathLossModel::ExpPower { alpha, beta } => {
                if *alpha == 0.0 {
                    y.powf(1.0 / beta)
                } else {
                    (beta / alpha) * lambert_w(alpha / beta * y.powf(1.0 / beta))?
                }
            }
            PathLossModel::MultiSlope(m) => m.inv(y),
            PathLossModel::Tabulated(t) => t.inv(y),
        })
    }

    /// Whether h is continuous and strictly increasing (so the generalized
    /// inverse is an exact two-sided inverse).
    pub fn is_strictly_increasing(&self) -> bool {
        !matches!(self, PathLossModel::Tabulated(_))
    }
}

/// Principal-branch Lambert W on [0, inf): the w >= 0 solving w e^w = y.
///
/// Guarded Halley iteration from the initial guess ln(1 + y); the residual is
/// driven below 1e-13 * max(1, y), with a bisection fallback that cannot fail
/// on this domain.
pub fn lambert_w(y: f64) -> Result<f64> {
    if y < 0.0 || y.is_nan() {
        return Err(Error::Domain(format!(
            "lambert_w supports the principal branch on y >= 0, got {y}"
        )));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let tol = 1e-13 * y.max(1.0);
    let mut w = (1.0 + y).ln();
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - y;
        if f.abs() <= tol {
            return Ok(w);
        }
        // Halley step: f' = e^w (w + 1), f'' = e^w (w + 2)
        let fp = ew * (w + 1.0);
        let step = f / (fp - f * (w + 2.0) / (2.0 * (w + 1.0)));
        let next = w - step;
        w = if next.is_finite() && next >= 0.0 { next } else { 0.5 * w };
    }
    // bisection fallback on [0, hi] with w e^w monotone
    let mut lo = 0.0f64;
    let mut hi = (1.0 + y).ln().max(1.0);
    while hi * hi.exp() < y {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() > y {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_slope() -> MultiSlope {
        MultiSlope::new(&[1.0], &[2.0, 4.0], 1.0).unwrap()
    }

    #[test]
    fn power_law_examples() {
        let m = PathLossModel::power_law(1.0, 4.0).unwrap();
        assert_abs_diff_eq!(m.evaluate(2.0).unwrap(), 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.inverse(16.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(m.evaluate(0.0).is_err());
        assert!(m.evaluate(-1.0).is_err());
    }

    #[test]
    fn exp_power_examples() {
        let m = PathLossModel::exp_power(0.0, 2.0).unwrap();
        assert_abs_diff_eq!(m.evaluate(3.0).unwrap(), 9.0, epsilon = 1e-12);
        let m = PathLossModel::exp_power(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(m.evaluate(1.0).unwrap(), std::f64::consts::E, epsilon = 1e-12);
        assert_abs_diff_eq!(m.inverse(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn multi_slope_continuity_and_round_trip() {
        let m = two_slope();
        // b2 forced by continuity equals 1 here
        assert_abs_diff_eq!(m.coefficients()[1], 1.0, epsilon = 1e-14);
        let pl = PathLossModel::MultiSlope(m);
        assert_abs_diff_eq!(pl.evaluate(0.5).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(pl.evaluate(2.0).unwrap(), 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pl.inverse(0.25).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pl.inverse(16.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn multi_slope_continuity_at_breakpoints() {
        let m = MultiSlope::new(&[0.7, 3.0, 11.0], &[1.5, 2.5, 4.0, 6.0], 2.0).unwrap();
        let pl = PathLossModel::MultiSlope(m.clone());
        for &r in m.breakpoints() {
            let below = pl.evaluate(r * (1.0 - 1e-13)).unwrap();
            let at = pl.evaluate(r).unwrap();
            assert!((below - at).abs() <= 1e-11 * at, "discontinuity at {r}");
        }
    }

    #[test]
    fn multi_slope_rejects_bad_specs() {
        assert!(MultiSlope::new(&[1.0, 0.5], &[2.0, 3.0, 4.0], 1.0).is_err());
        assert!(MultiSlope::new(&[1.0], &[2.0], 1.0).is_err());
        assert!(MultiSlope::new(&[1.0], &[2.0, 4.0], 0.0).is_err());
        assert!(MultiSlope::new(&[1.0], &[2.0, -4.0], 1.0).is_err());
    }

    #[test]
    fn tabulated_generalized_inverse() {
        let t = TabulatedMonotone::new(&[1.0, 2.0, 3.0], &[1.0, 5.0, 5.0]).unwrap();
        let pl = PathLossModel::Tabulated(t);
        // h = 1 on (0,1], 5 on (1,2], 5 on (2,3], 5 beyond
        assert_eq!(pl.evaluate(0.5).unwrap(), 1.0);
        assert_eq!(pl.evaluate(1.0).unwrap(), 1.0);
        assert_eq!(pl.evaluate(1.5).unwrap(), 5.0);
        assert_eq!(pl.evaluate(10.0).unwrap(), 5.0);
        // inf{x : h(x) > y}
        assert_eq!(pl.inverse(0.0).unwrap(), 0.0);
        assert_eq!(pl.inverse(0.5).unwrap(), 0.0);
        assert_eq!(pl.inverse(1.0).unwrap(), 1.0);
        assert_eq!(pl.inverse(4.9).unwrap(), 1.0);
        assert_eq!(pl.inverse(5.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn lambert_w_reference_values() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-13);
        // bisection-grade reference value
        assert_abs_diff_eq!(lambert_w(1.0).unwrap(), 0.5671432904097838, epsilon = 1e-12);
        assert!(lambert_w(-0.1).is_err());
    }

    #[test]
    fn lambert_w_residual_bound_on_log_grid() {
        let n = 1000;
        for i in 0..=n {
            let y = 10f64.powf(-6.0 + 12.0 * i as f64 / n as f64);
            let w = lambert_w(y).unwrap();
            let resid = (w * w.exp() - y).abs();
            assert!(resid <= 1e-12 * y.max(1.0), "y={y} resid={resid}");
            // identity used by the mean-measure formula: W^2 = y^2 e^{-2W}
            let lhs = w * w;
            let rhs = y * y * (-2.0 * w).exp();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300), "identity at y={y}");
        }
    }

    #[test]
    fn inverse_is_right_inverse_on_log_grid() {
        let models = [
            PathLossModel::power_law(2.0, 3.5).unwrap(),
            PathLossModel::exp_power(0.7, 1.8).unwrap(),
            PathLossModel::MultiSlope(two_slope()),
        ];
        for m in &models {
            for i in 0..=300 {
                let r = 10f64.powf(-3.0 + 6.0 * i as f64 / 300.0);
                let y = m.evaluate(r).unwrap();
                let back = m.inverse(y).unwrap();
                assert!(
                    (back - r).abs() <= 1e-10 * r,
                    "round trip failed for {m:?} at r = {r}: got {back}"
                );
            }
        }
    }
}
