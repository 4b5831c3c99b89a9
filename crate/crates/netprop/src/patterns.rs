//! Planar transmitter patterns: deterministic lattices, homogeneous Poisson,
//! alpha-Ginibre and a two-intensity Cox mixture, all restricted to a disk of
//! radius `r_max` with the origin excluded.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::poisson_excess_index;
use crate::rng::stream_rng;

/// Regular lattice families with the origin at a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    Triangular,
    Hexagonal,
    Square,
}

/// Asymptotic radial growth `D(r)` of the number of points within distance r.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GrowthFunction {
    Triangular { s: f64 },
    Hexagonal { s: f64 },
    Square { s: f64 },
    DiskArea { lambda: f64 },
}

impl GrowthFunction {
    pub fn for_lattice(kind: LatticeKind, s: f64) -> Self {
        match kind {
            LatticeKind::Triangular => GrowthFunction::Triangular { s },
            LatticeKind::Hexagonal => GrowthFunction::Hexagonal { s },
            LatticeKind::Square => GrowthFunction::Square { s },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GrowthFunction::Triangular { s }
            | GrowthFunction::Hexagonal { s }
            | GrowthFunction::Square { s } => s > 0.0 && s.is_finite(),
            GrowthFunction::DiskArea { lambda } => lambda > 0.0 && lambda.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "growth function needs a positive finite scale".into(),
            ))
        }
    }

    /// D(r): triangular 2*pi*r^2/(sqrt(3) s^2); hexagonal 4*pi*r^2/(3 sqrt(3) s^2);
    /// square pi*r^2/s^2; disk-area lambda*pi*r^2.
    pub fn value(&self, r: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let r2 = r * r;
        match *self {
            GrowthFunction::Triangular { s } => 2.0 * pi * r2 / (3f64.sqrt() * s * s),
            GrowthFunction::Hexagonal { s } => 4.0 * pi * r2 / (3.0 * 3f64.sqrt() * s * s),
            GrowthFunction::Square { s } => pi * r2 / (s * s),
            GrowthFunction::DiskArea { lambda } => lambda * pi * r2,
        }
    }

    /// Points per unit area in the large-r limit: D(r) / (pi r^2).
    pub fn intensity(&self) -> f64 {
        self.value(1.0) / std::f64::consts::PI
    }
}

/// Evaluate a growth function; thin wrapper kept for symmetry with the other
/// module operations.
pub fn growth_value(d: &GrowthFunction, r: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::Domain(format!("growth function needs r >= 0, got {r}")));
    }
    d.validate()?;
    Ok(d.value(r))
}

/// Parameters of the alpha-Ginibre process: thinning alpha in (0,1], scale c
/// with first intensity c/pi.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GinibreParams {
    pub alpha: f64,
    pub c: f64,
}

impl GinibreParams {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ginibre alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ginibre c must be positive, got {c}"
            )));
        }
        Ok(GinibreParams { alpha, c })
    }

    /// First intensity rho^(1) = c / pi.
    pub fn first_intensity(&self) -> f64 {
        self.c / std::f64::consts::PI
    }

    /// Pair correlation g(u) = 1 - exp(-(c/alpha) u^2).
    pub fn pair_correlation(&self, u: f64) -> f64 {
        1.0 - (-(self.c / self.alpha) * u * u).exp()
    }
}

/// How a pattern was produced; serialized into the CSV sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatternProvenance {
    Lattice { lattice: LatticeKind, s: f64 },
    Poisson { lambda: f64, seed: u64 },
    AlphaGinibre { alpha: f64, c: f64, seed: u64, exact_dpp: bool },
    CoxMixture { lambda1: f64, lambda2: f64, chosen: f64, seed: u64 },
    RawRadii,
}

/// A finite realization of transmitter positions in the plane.
///
/// Points are stored sorted by (norm, angle); the origin is excluded and all
/// norms are <= `r_max`.
#[derive(Clone, Debug)]
pub struct PointPattern2D {
    points: Vec<[f64; 2]>,
    radii: Vec<f64>,
    r_max: f64,
    provenance: PatternProvenance,
}

impl PointPattern2D {
    fn from_points(
        mut points: Vec<[f64; 2]>,
        r_max: f64,
        provenance: PatternProvenance,
    ) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "r_max must be positive and finite, got {r_max}"
            )));
        }
        points.retain(|p| {
            let n2 = p[0] * p[0] + p[1] * p[1];
            n2 > 0.0 && n2.sqrt() <= r_max
        });
        points.sort_by(|a, b| {
            let (ra, ta) = (a[0].hypot(a[1]), a[1].atan2(a[0]));
            let (rb, tb) = (b[0].hypot(b[1]), b[1].atan2(b[0]));
            (ra, ta).partial_cmp(&(rb, tb)).expect("finite coordinates")
        });
        let radii = points.iter().map(|p| p[0].hypot(p[1])).collect();
        Ok(PointPattern2D { points, radii, r_max, provenance })
    }

    /// Build a pattern from raw radii (for patterns generated elsewhere,
    /// possibly in another dimension); points are placed on the positive axis.
    pub fn from_raw_radii(radii: &[f64], r_max: f64) -> Result<Self> {
        for &r in radii {
            if !(r > 0.0) || r > r_max {
                return Err(Error::InvalidParameter(format!(
                    "raw radius {r} outside (0, r_max = {r_max}]"
                )));
            }
        }
        let points = radii.iter().map(|&r| [r, 0.0]).collect();
        Self::from_points(points, r_max, PatternProvenance::RawRadii)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Radii sorted ascending (same order as `points`).
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn provenance(&self) -> &PatternProvenance {
        &self.provenance
    }

    /// |xi|(r): number of points with 0 < |x| <= r. Counting beyond the
    /// simulated disk is undefined and rejected.
    pub fn radial_count(&self, r: f64) -> Result<usize> {
        if r < 0.0 {
            return Err(Error::Domain(format!("radial count needs r >= 0, got {r}")));
        }
        if r > self.r_max {
            return Err(Error::OutOfWindow { r, r_max: self.r_max });
        }
        Ok(self.radii.partition_point(|&x| x <= r))
    }

    /// Write the pattern as CSV with header `x,y` at full double precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y")?;
        for p in &self.points {
            writeln!(w, "{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    /// Provenance sidecar contents.
    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "provenance": self.provenance,
            "r_max": self.r_max,
            "n_points": self.points.len(),
        })
    }

    /// Group the pattern's points into exact radius classes.
    pub fn radius_classes(&self) -> RadiusClasses {
        let mut classes: Vec<(f64, u64)> = Vec::new();
        for &r in &self.radii {
            match classes.last_mut() {
                Some((r0, m)) if r0.to_bits() == r.to_bits() => *m += 1,
                _ => classes.push((r, 1)),
            }
        }
        RadiusClasses::new(classes, self.r_max).expect("pattern radii are valid classes")
    }
}

/// Points grouped by exact radius, sorted ascending. The compact form used by
/// mean-measure sums and the replication engine, where only distances from the
/// origin matter.
#[derive(Clone, Debug)]
pub struct RadiusClasses {
    classes: Vec<(f64, u64)>,
    cum: Vec<u64>,
    r_max: f64,
}

impl RadiusClasses {
    pub fn new(mut classes: Vec<(f64, u64)>, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter("r_max must be positive".into()));
        }
        for &(r, _) in &classes {
            if !(r > 0.0) || r > r_max {
                return Err(Error::InvalidParameter(format!(
                    "radius class {r} outside (0, {r_max}]"
                )));
            }
        }
        classes.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite radii"));
        let mut cum = Vec::with_capacity(classes.len());
        let mut acc = 0u64;
        for &(_, m) in &classes {
            acc += m;
            cum.push(acc);
        }
        Ok(RadiusClasses { classes, cum, r_max })
    }

    pub fn classes(&self) -> &[(f64, u64)] {
        &self.classes
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn total_points(&self) -> u64 {
        self.cum.last().copied().unwrap_or(0)
    }

    /// Number of points with radius <= r.
    pub fn count_within(&self, r: f64) -> u64 {
        let idx = self.classes.partition_point(|&(x, _)| x <= r);
        if idx == 0 { 0 } else { self.cum[idx - 1] }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// All vertices of the lattice within the disk of radius `r_max`, origin
/// removed. Deterministic.
pub fn make_lattice(kind: LatticeKind, s: f64, r_max: f64) -> Result<PointPattern2D> {
    check_positive("lattice edge length s", s)?;
    check_positive("r_max", r_max)?;
    let mut points = Vec::new();
    for_each_lattice_site(kind, s, r_max, |x, y| points.push([x, y]));
    PointPattern2D::from_points(points, r_max, PatternProvenance::Lattice { lattice: kind, s })
}

/// Radius classes of a lattice, grouped by the exact integer squared norm in
/// lattice units; avoids materializing the points for very large windows.
pub fn lattice_radius_classes(kind: LatticeKind, s: f64, r_max: f64) -> Result<RadiusClasses> {
    check_positive("lattice edge length s", s)?;
    check_positive("r_max", r_max)?;
    // squared norm in units of s^2 is integral: square i^2+j^2; triangular
    // i^2+ij+j^2; hexagonal 3(i^2+ij+j^2) + delta(3(i+j)+1), delta in {0,1}.
    let n_cap = (r_max / s) * (r_max / s);
    let n_cap_int = n_cap.floor() as i64;
    if n_cap_int < 1 {
        return RadiusClasses::new(Vec::new(), r_max);
    }
    let mut counts: Vec<u32> = vec![0; (n_cap_int + 1) as usize];
    let mut bump = |n: i64| {
        if n >= 1 && n <= n_cap_int {
            counts[n as usize] += 1;
        }
    };
    match kind {
        LatticeKind::Square => {
            let imax = (n_cap.sqrt().floor()) as i64;
            for i in -imax..=imax {
                let rem = n_cap_int - i * i;
                if rem < 0 {
                    continue;
                }
                let jmax = ((rem as f64).sqrt().floor()) as i64;
                for j in -jmax..=jmax {
                    bump(i * i + j * j);
                }
            }
        }
        LatticeKind::Triangular => {
            // i^2 + ij + j^2 = (i + j/2)^2 + 3 j^2/4 >= 3 max(i,j)^2 / 4
            let imax = (2.0 * n_cap.sqrt() / 3f64.sqrt()).ceil() as i64 + 1;
            for i in -imax..=imax {
                for j in -imax..=imax {
                    bump(i * i + i * j + j * j);
                }
            }
        }
        LatticeKind::Hexagonal => {
            let imax = ((n_cap / 3.0).sqrt() * 2.0 / 3f64.sqrt()).ceil() as i64 + 4;
            for i in -imax..=imax {
                for j in -imax..=imax {
                    let q = i * i + i * j + j * j;
                    bump(3 * q);
                    bump(3 * q + 3 * (i + j) + 1);
                }
            }
        }
    }
    // exact radii: r = s * sqrt(n); drop classes that land beyond r_max from
    // floating-point rounding of the boundary.
    let classes: Vec<(f64, u64)> = counts
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &m)| m > 0)
        .map(|(n, &m)| (s * (n as f64).sqrt(), m as u64))
        .filter(|&(r, _)| r <= r_max)
        .collect();
    RadiusClasses::new(classes, r_max)
}

fn for_each_lattice_site(kind: LatticeKind, s: f64, r_max: f64, mut f: impl FnMut(f64, f64)) {
    let r2 = r_max * r_max;
    match kind {
        LatticeKind::Square => {
            let imax = (r_max / s).floor() as i64;
            for i in -imax..=imax {
                for j in -imax..=imax {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let (x, y) = (i as f64 * s, j as f64 * s);
                    if x * x + y * y <= r2 {
                        f(x, y);
                    }
                }
            }
        }
        LatticeKind::Triangular => {
            // basis a1 = (s, 0), a2 = (s/2, s*sqrt(3)/2)
            let imax = (2.0 * r_max / s).ceil() as i64 + 1;
            for i in -imax..=imax {
                for j in -imax..=imax {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let x = s * (i as f64 + 0.5 * j as f64);
                    let y = s * (3f64.sqrt() / 2.0) * j as f64;
                    if x * x + y * y <= r2 {
                        f(x, y);
                    }
                }
            }
        }
        LatticeKind::Hexagonal => {
            // honeycomb: bravais a1 = (3s/2, sqrt(3)s/2), a2 = (3s/2, -sqrt(3)s/2),
            // basis {(0,0), (s,0)}, origin at a vertex
            let imax = (2.0 * (r_max + s) / s).ceil() as i64 + 1;
            for i in -imax..=imax {
                for j in -imax..=imax {
                    let bx = 1.5 * s * (i + j) as f64;
                    let by = (3f64.sqrt() / 2.0) * s * (i - j) as f64;
                    for dx in [0.0, s] {
                        let (x, y) = (bx + dx, by);
                        if i == 0 && j == 0 && dx == 0.0 {
                            continue;
                        }
                        if x * x + y * y <= r2 {
                            f(x, y);
                        }
                    }
                }
            }
        }
    }
}

/// Homogeneous Poisson pattern on the disk: count ~ Poisson(lambda pi r_max^2),
/// positions i.i.d. uniform. Deterministic given the seed.
pub fn sample_poisson(lambda: f64, r_max: f64, seed: u64) -> Result<PointPattern2D> {
    check_positive("lambda", lambda)?;
    check_positive("r_max", r_max)?;
    let mut rng = stream_rng(seed, &[0x9015_5001]);
    let points = poisson_disk_points(lambda, r_max, &mut rng);
    PointPattern2D::from_points(points, r_max, PatternProvenance::Poisson { lambda, seed })
}

fn poisson_disk_points(lambda: f64, r_max: f64, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mean = lambda * std::f64::consts::PI * r_max * r_max;
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    (0..n)
        .map(|_| {
            let r = r_max * rng.random::<f64>().sqrt();
            let th = rng.random::<f64>() * std::f64::consts::TAU;
            [r * th.cos(), r * th.sin()]
        })
        .collect()
}

/// Two-intensity Cox mixture: a fair coin picks lambda1 or lambda2, then the
/// pattern is Poisson with the chosen intensity.
pub fn sample_cox_mixture(
    lambda1: f64,
    lambda2: f64,
    r_max: f64,
    seed: u64,
) -> Result<PointPattern2D> {
    check_positive("lambda1", lambda1)?;
    check_positive("lambda2", lambda2)?;
    check_positive("r_max", r_max)?;
    let mut rng = stream_rng(seed, &[0xc0c5_0001]);
    let chosen = if rng.random::<bool>() { lambda1 } else { lambda2 };
    let points = poisson_disk_points(chosen, r_max, &mut rng);
    PointPattern2D::from_points(
        points,
        r_max,
        PatternProvenance::CoxMixture { lambda1, lambda2, chosen, seed },
    )
}

/// Truncation index for the Kostlan radial construction: smallest k_max such
/// that the expected number of omitted points within r_max stays below 1e-8.
/// Kostlan radii are stochastically increasing in k, so the omitted indices
/// are exactly those beyond k_max.
pub fn ginibre_k_max(params: &GinibreParams, r_max: f64) -> u64 {
    let x = params.c * r_max * r_max / params.alpha;
    poisson_excess_index(x, 1e-8 / params.alpha.max(1e-12))
}

/// Kostlan-type radial sampler for the alpha-Ginibre process.
///
/// Index k is retained with probability alpha; a retained index emits a point
/// with squared modulus Gamma(shape k, scale alpha/c) and an independent
/// uniform angle. Exact in law for every statistic of the point *radii*
/// (counts within disks in particular); pairwise-distance statistics need the
/// exact sampler [`sample_alpha_ginibre_dpp`].
pub fn sample_alpha_ginibre(
    params: &GinibreParams,
    r_max: f64,
    seed: u64,
) -> Result<PointPattern2D> {
    GinibreParams::new(params.alpha, params.c)?;
    check_positive("r_max", r_max)?;
    let mut rng = stream_rng(seed, &[0x61b2_0001]);
    let k_max = ginibre_k_max(params, r_max);
    let scale = params.alpha / params.c;
    let mut points = Vec::new();
    for k in 1..=k_max {
        if rng.random::<f64>() >= params.alpha {
            continue;
        }
        let sq = Gamma::new(k as f64, scale).expect("valid gamma").sample(&mut rng);
        let r = sq.sqrt();
        if r > r_max {
            continue;
        }
        let th = rng.random::<f64>() * std::f64::consts::TAU;
        points.push([r * th.cos(), r * th.sin()]);
    }
    PointPattern2D::from_points(
        points,
        r_max,
        PatternProvenance::AlphaGinibre { alpha: params.alpha, c: params.c, seed, exact_dpp: false },
    )
}

/// Exact alpha-Ginibre sampler on the disk.
///
/// The alpha-Ginibre process is the alpha-thinning of a Ginibre-type process
/// with c' = c/alpha. Restricted to the disk of radius R, that process is a
/// determinantal projection mixture with eigenfunctions proportional to
/// z^k e^{-c'|z|^2/2} and eigenvalues lambda_k = P(Gamma(k+1,1) <= c' R^2);
/// each eigenfunction is switched on independently and the resulting
/// projection process is drawn by sequential conditional sampling. Cost grows
/// cubically with the expected point count, so this sampler is intended for
/// moderate windows (second-moment validation), while the Kostlan sampler
/// covers large-window radial work.
pub fn sample_alpha_ginibre_dpp(
    params: &GinibreParams,
    r_max: f64,
    seed: u64,
) -> Result<PointPattern2D> {
    GinibreParams::new(params.alpha, params.c)?;
    check_positive("r_max", r_max)?;
    let mut rng = stream_rng(seed, &[0x61b2_0002]);
    let cp = params.c / params.alpha;
    let x = cp * r_max * r_max;
    let k_hi = poisson_excess_index(x, 1e-9);
    // eigenvalues lambda_k = P(Gamma(k+1,1) <= x), k = 0..k_hi
    let lambdas: Vec<f64> = (0..=k_hi).map(|k| gamma_lr((k + 1) as f64, x)).collect();
    let active: Vec<u64> = (0..=k_hi).filter(|&k| rng.random::<f64>() < lambdas[k as usize]).collect();
    let n = active.len();
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(n);
    if n > 0 {
        // Phi(z) = (psi_k(z))_{k active}; |psi_k|^2 integrates to 1 on the disk.
        let log_norm: Vec<f64> = active
            .iter()
            .map(|&k| {
                // |phi_k(z)|^2 = (c'/pi) (c' r^2)^k e^{-c' r^2} / k!; divide by lambda_k
                -(lambdas[k as usize].ln())
            })
            .collect();
        let eval_phi = |r: f64, th: f64, out: &mut Vec<Complex64>| {
            out.clear();
            let lr2 = (cp * r * r).ln();
            for (idx, &k) in active.iter().enumerate() {
                let kf = k as f64;
                let power = if k == 0 { 0.0 } else { kf * lr2 };
                let logmag2 = power - ln_gamma(kf + 1.0) - cp * r * r
                    + (cp / std::f64::consts::PI).ln()
                    + log_norm[idx];
                let mag = (0.5 * logmag2).exp();
                let ang = kf * th;
                out.push(Complex64::from_polar(mag, ang));
            }
        };
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut phi: Vec<Complex64> = Vec::with_capacity(n);
        for _step in 0..n {
            loop {
                // proposal: pick an active eigenfunction uniformly, draw r^2 from
                // Gamma(k+1,1) conditioned <= x via inverse CDF, angle uniform
                let pick = rng.random_range(0..n);
                let k = active[pick];
                let u = rng.random::<f64>() * lambdas[k as usize];
                let g = statrs::distribution::Gamma::new((k + 1) as f64, 1.0)
                    .expect("valid gamma");
                use statrs::distribution::ContinuousCDF;
                let r2 = g.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
                let r = (r2 / cp).sqrt();
                let th = rng.random::<f64>() * std::f64::consts::TAU;
                eval_phi(r, th, &mut phi);
                let kxx: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
                let proj: f64 = basis
                    .iter()
                    .map(|w| inner(w, &phi).norm_sqr())
                    .sum();
                let accept = ((kxx - proj) / kxx).max(0.0);
                if rng.random::<f64>() < accept {
                    points.push([r * th.cos(), r * th.sin()]);
                    // Gram-Schmidt step: extend the used-direction basis
                    let mut u_vec = phi.clone();
                    for w in &basis {
                        let c = inner(w, &phi);
                        for (uv, wv) in u_vec.iter_mut().zip(w.iter()) {
                            *uv -= c * wv;
                        }
                    }
                    let norm: f64 = u_vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        for v in &mut u_vec {
                            *v /= norm;
                        }
                        basis.push(u_vec);
                    }
                    break;
                }
            }
        }
    }
    // alpha-thinning of the c' = c/alpha process yields the alpha-Ginibre law
    points.retain(|_| rng.random::<f64>() < params.alpha);
    PointPattern2D::from_points(
        points,
        r_max,
        PatternProvenance::AlphaGinibre { alpha: params.alpha, c: params.c, seed, exact_dpp: true },
    )
}

/// <w, f> = sum_k w_k * conj(f_k).
fn inner(w: &[Complex64], f: &[Complex64]) -> Complex64 {
    w.iter().zip(f.iter()).map(|(a, b)| a * b.conj()).sum()
}

/// Reusable pattern source for replicated experiments. Deterministic samplers
/// ignore the replication seed.
#[derive(Clone, Debug)]
pub enum PatternSampler {
    Fixed(std::sync::Arc<PointPattern2D>),
    Poisson { lambda: f64, r_max: f64 },
    CoxMixture { lambda1: f64, lambda2: f64, r_max: f64 },
    Ginibre { params: GinibreParams, r_max: f64 },
    GinibreDpp { params: GinibreParams, r_max: f64 },
}

impl PatternSampler {
    pub fn sample(&self, seed: u64) -> Result<PointPattern2D> {
        match self {
            PatternSampler::Fixed(p) => Ok((**p).clone()),
            PatternSampler::Poisson { lambda, r_max } => sample_poisson(*lambda, *r_max, seed),
            PatternSampler::CoxMixture { lambda1, lambda2, r_max } => {
                sample_cox_mixture(*lambda1, *lambda2, *r_max, seed)
            }
            PatternSampler::Ginibre { params, r_max } => {
                sample_alpha_ginibre(params, *r_max, seed)
            }
            PatternSampler::GinibreDpp { params, r_max } => {
                sample_alpha_ginibre_dpp(params, *r_max, seed)
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, PatternSampler::Fixed(_))
    }

    pub fn r_max(&self) -> f64 {
        match self {
            PatternSampler::Fixed(p) => p.r_max(),
            PatternSampler::Poisson { r_max, .. }
            | PatternSampler::CoxMixture { r_max, .. }
            | PatternSampler::Ginibre { r_max, .. }
            | PatternSampler::GinibreDpp { r_max, .. } => *r_max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_lattice_disk_counts() {
        // all integer (i,j) != 0 with i^2+j^2 <= 6.25
        let p = make_lattice(LatticeKind::Square, 1.0, 2.5).unwrap();
        assert_eq!(p.len(), 20);
        // nearest lattice point is at distance 1
        let p = make_lattice(LatticeKind::Square, 1.0, 0.5).unwrap();
        assert_eq!(p.len(), 0);
    }

    #[test]
    fn square_lattice_matches_growth_at_large_radius() {
        let r = 200.0;
        let p = lattice_radius_classes(LatticeKind::Square, 1.0, r).unwrap();
        let expected = GrowthFunction::Square { s: 1.0 }.value(r);
        let ratio = p.total_points() as f64 / expected;
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn growth_values() {
        assert_abs_diff_eq!(
            GrowthFunction::Square { s: 1.0 }.value(1.0),
            std::f64::consts::PI,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            GrowthFunction::Triangular { s: 1.0 }.value(1.0),
            3.62759872846843570,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            GrowthFunction::Hexagonal { s: 1.0 }.value(1.0),
            2.41839915231229047,
            epsilon = 1e-13
        );
        for g in [
            GrowthFunction::Square { s: 0.7 },
            GrowthFunction::Triangular { s: 2.0 },
            GrowthFunction::Hexagonal { s: 1.3 },
            GrowthFunction::DiskArea { lambda: 2.5 },
        ] {
            assert_eq!(growth_value(&g, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn lattice_classes_agree_with_enumerated_points() {
        for kind in [LatticeKind::Square, LatticeKind::Triangular, LatticeKind::Hexagonal] {
            let pat = make_lattice(kind, 1.0, 12.3).unwrap();
            let classes = lattice_radius_classes(kind, 1.0, 12.3).unwrap();
            assert_eq!(pat.len() as u64, classes.total_points(), "{kind:?}");
            for r in [0.5, 1.0, 3.3, 7.9, 12.3] {
                assert_eq!(
                    pat.radial_count(r).unwrap() as u64,
                    classes.count_within(r),
                    "{kind:?} at r={r}"
                );
            }
        }
    }

    #[test]
    fn radial_count_examples() {
        let p = make_lattice(LatticeKind::Square, 1.0, 3.0).unwrap();
        assert_eq!(p.radial_count(6f64.sqrt()).unwrap(), 20);
        assert_eq!(p.radial_count(0.0).unwrap(), 0);
        assert_eq!(p.radial_count(3.0).unwrap(), p.len());
        assert!(matches!(
            p.radial_count(3.5),
            Err(Error::OutOfWindow { .. })
        ));
    }

    #[test]
    fn lattice_rejects_bad_params() {
        assert!(make_lattice(LatticeKind::Square, 0.0, 1.0).is_err());
        assert!(make_lattice(LatticeKind::Square, 1.0, -1.0).is_err());
    }

    #[test]
    fn poisson_counts_have_the_right_mean() {
        let mut total = 0usize;
        let n = 4000;
        for i in 0..n {
            total += sample_poisson(2.0, 1.0, i).unwrap().len();
        }
        let mean = total as f64 / n as f64;
        let expect = 2.0 * std::f64::consts::PI;
        // se = sqrt(mean/n) ~ 0.04
        assert!((mean - expect).abs() < 4.0 * (expect / n as f64).sqrt() + 0.05, "mean {mean}");
    }

    #[test]
    fn cox_mixture_degenerates_to_poisson() {
        let a = sample_cox_mixture(1.5, 1.5, 2.0, 9).unwrap();
        match a.provenance() {
            PatternProvenance::CoxMixture { chosen, .. } => assert_eq!(*chosen, 1.5),
            other => panic!("unexpected provenance {other:?}"),
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let a = sample_poisson(1.0, 5.0, 77).unwrap();
        let b = sample_poisson(1.0, 5.0, 77).unwrap();
        assert_eq!(a.points(), b.points());
        let a = sample_alpha_ginibre(&GinibreParams::new(0.5, 1.0).unwrap(), 3.0, 5).unwrap();
        let b = sample_alpha_ginibre(&GinibreParams::new(0.5, 1.0).unwrap(), 3.0, 5).unwrap();
        assert_eq!(a.points(), b.points());
        let a = sample_alpha_ginibre_dpp(&GinibreParams::new(0.5, 1.0).unwrap(), 2.0, 5).unwrap();
        let b = sample_alpha_ginibre_dpp(&GinibreParams::new(0.5, 1.0).unwrap(), 2.0, 5).unwrap();
        assert_eq!(a.points(), b.points());
    }

    #[test]
    fn raw_radii_pattern() {
        let p = PointPattern2D::from_raw_radii(&[2.0, 1.0, 1.0], 2.5).unwrap();
        assert_eq!(p.radial_count(1.0).unwrap(), 2);
        assert_eq!(p.radial_count(2.5).unwrap(), 3);
        assert!(PointPattern2D::from_raw_radii(&[0.0], 1.0).is_err());
        assert!(PointPattern2D::from_raw_radii(&[3.0], 1.0).is_err());
    }

    #[test]
    fn ginibre_truncation_index_is_tight() {
        let params = GinibreParams::new(0.5, 1.0).unwrap();
        let k = ginibre_k_max(&params, 3.0);
        assert!(k >= 18, "k_max {k} too small for x = 18");
        assert!(k < 200);
    }

    #[test]
    fn csv_round_trip_header() {
        let p = PointPattern2D::from_raw_radii(&[1.0], 2.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y\n"));
        assert!(text.contains("1,0"));
    }
}
