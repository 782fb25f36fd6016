//! Probability metrics: total variation, Hellinger, 1-Wasserstein, and the
//! Hellinger/TV distances between scaled (unnormalized) measures.
//!
//! Conventions: `d_TV = 1/2 ∫|p - q|`, `d_H = sqrt(1/2 ∫(√p - √q)^2)`, and
//! `W1 = ∫|F_a - F_b|` over the real line (exact in one dimension).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domains::{DomainSpec, Distribution, Gaussian1D, GridDensity, JointGrid2D};
use crate::error::{Error, Result};
use crate::special::{abs_linear_integral, erf_fn, norm_cdf, norm_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Tv,
    Hellinger,
    W1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Tv, MetricKind::Hellinger, MetricKind::W1];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Tv => "tv",
            MetricKind::Hellinger => "hellinger",
            MetricKind::W1 => "w1",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" => Ok(MetricKind::Tv),
            "hellinger" | "h" => Ok(MetricKind::Hellinger),
            "w1" | "wasserstein" => Ok(MetricKind::W1),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    ClosedForm,
    Quadrature,
    CdfL1,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub metric: MetricKind,
    pub value: f64,
    pub method: Method,
    /// `|trapezoid - Simpson|` on the same nodes; zero for closed forms and
    /// empirical measures. Diagnostic only.
    pub est_numerical_error: f64,
}

impl DistanceReport {
    fn new(metric: MetricKind, value: f64, method: Method, est: f64) -> Self {
        Self { metric, value, method, est_numerical_error: est }
    }
}

pub fn distance(kind: MetricKind, a: &Distribution, b: &Distribution, d: &DomainSpec) -> Result<DistanceReport> {
    match kind {
        MetricKind::Tv => tv(a, b, d),
        MetricKind::Hellinger => hellinger(a, b, d),
        MetricKind::W1 => w1(a, b, d),
    }
}

/// Total variation distance. Particle sets are refused: against a density
/// the value is identically one and says nothing.
pub fn tv(a: &Distribution, b: &Distribution, d: &DomainSpec) -> Result<DistanceReport> {
    use Distribution::*;
    match (a, b) {
        (Gaussian(ga), Gaussian(gb)) => Ok(DistanceReport::new(MetricKind::Tv, gaussian_tv(ga, gb), Method::ClosedForm, 0.0)),
        (Joint(ja), Joint(jb)) => {
            let (w, pa, pb) = joint_pair(ja, jb)?;
            let v = 0.5 * w.iter().zip(pa.iter().zip(pb)).map(|(w, (p, q))| w * (p - q).abs()).sum::<f64>();
            Ok(DistanceReport::new(MetricKind::Tv, v, Method::Quadrature, 0.0))
        }
        _ => {
            let (ga, gb) = grid_pair(a, b, d)?;
            let diff: Vec<f64> = ga.values().iter().zip(gb.values()).map(|(p, q)| (p - q).abs()).collect();
            let trap = 0.5 * d.integrate(&diff);
            let simp = 0.5 * d.integrate_simpson(&diff);
            Ok(DistanceReport::new(MetricKind::Tv, trap, Method::Quadrature, (trap - simp).abs()))
        }
    }
}

pub fn hellinger(a: &Distribution, b: &Distribution, d: &DomainSpec) -> Result<DistanceReport> {
    use Distribution::*;
    match (a, b) {
        (Gaussian(ga), Gaussian(gb)) => Ok(DistanceReport::new(
            MetricKind::Hellinger,
            gaussian_hellinger(ga, gb),
            Method::ClosedForm,
            0.0,
        )),
        (Joint(ja), Joint(jb)) => {
            let (w, pa, pb) = joint_pair(ja, jb)?;
            let s: f64 = w.iter().zip(pa.iter().zip(pb)).map(|(w, (p, q))| w * (p.sqrt() - q.sqrt()).powi(2)).sum();
            Ok(DistanceReport::new(MetricKind::Hellinger, (0.5 * s).sqrt(), Method::Quadrature, 0.0))
        }
        _ => {
            let (ga, gb) = grid_pair(a, b, d)?;
            let sq: Vec<f64> = ga.values().iter().zip(gb.values()).map(|(p, q)| (p.sqrt() - q.sqrt()).powi(2)).collect();
            let trap = (0.5 * d.integrate(&sq)).sqrt();
            let simp = (0.5 * d.integrate_simpson(&sq).max(0.0)).sqrt();
            Ok(DistanceReport::new(MetricKind::Hellinger, trap, Method::Quadrature, (trap - simp).abs()))
        }
    }
}

/// 1-Wasserstein distance as the L1 distance between CDFs.
///
/// Two Gaussians use their exact CDFs on the nodes of `d`. Every other
/// combination is evaluated exactly on the atomic measures (grid node masses,
/// particles) by merging their breakpoints, so continuous-vs-empirical pairs
/// are handled directly.
pub fn w1(a: &Distribution, b: &Distribution, d: &DomainSpec) -> Result<DistanceReport> {
    use Distribution::*;
    if let (Gaussian(ga), Gaussian(gb)) = (a, b) {
        let diff: Vec<f64> = d.nodes().iter().map(|&x| gaussian_cdf_gap(ga, gb, x)).collect();
        let trap = d.integrate(&diff);
        let simp = d.integrate_simpson(&diff);
        return Ok(DistanceReport::new(MetricKind::W1, trap, Method::CdfL1, (trap - simp).abs()));
    }
    let atoms_a = atoms(a, d)?;
    let atoms_b = atoms(b, d)?;
    let value = w1_atoms(&atoms_a, &atoms_b);
    let empirical = matches!(a, Particles(_)) || matches!(b, Particles(_));
    let (method, est) = if empirical {
        (Method::Empirical, 0.0)
    } else {
        let (ga, gb) = grid_pair(a, b, d)?;
        (Method::CdfL1, (value - piecewise_linear_cdf_l1(&ga, &gb)).abs())
    };
    Ok(DistanceReport::new(MetricKind::W1, value, method, est))
}

/// Hellinger distance between scaled measures on the same grid.
pub fn scaled_hellinger(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    if a.domain() != b.domain() {
        return Err(Error::DomainMismatch);
    }
    let sq: Vec<f64> = a.values().iter().zip(b.values()).map(|(p, q)| (p.sqrt() - q.sqrt()).powi(2)).collect();
    let v = (0.5 * a.domain().integrate(&sq)).sqrt();
    crate::error::ensure_finite(v, "scaled Hellinger distance")
}

/// Total variation distance between scaled measures on the same grid.
pub fn scaled_tv(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    if a.domain() != b.domain() {
        return Err(Error::DomainMismatch);
    }
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(p, q)| (p - q).abs()).collect();
    crate::error::ensure_finite(0.5 * a.domain().integrate(&diff), "scaled TV distance")
}

/// Exact TV distance between two normal laws on the real line.
pub fn gaussian_tv(a: &Gaussian1D, b: &Gaussian1D) -> f64 {
    let (m1, v1, m2, v2) = (a.mean(), a.variance(), b.mean(), b.variance());
    if (v1 - v2).abs() <= 1e-13 * v1.max(v2) {
        let v = 0.5 * (v1 + v2);
        return erf_fn((m1 - m2).abs() / (2.0 * (2.0 * v).sqrt()));
    }
    // Densities cross at the roots of A x^2 + B x + C = 0.
    let qa = 0.5 / v2 - 0.5 / v1;
    let qb = m1 / v1 - m2 / v2;
    let qc = 0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 - 0.5 * (v1 / v2).ln();
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let q = -0.5 * (qb + qb.signum().max(0.0).mul_add(2.0, -1.0) * disc);
    let (mut r1, mut r2) = (q / qa, qc / q);
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    // Signed mass differences on (-inf, r1) and (r2, inf); the middle
    // interval carries the negated sum, which is the TV distance.
    let left = norm_cdf((r1 - m1) / s1) - norm_cdf((r1 - m2) / s2);
    let right = norm_sf((r2 - m1) / s1) - norm_sf((r2 - m2) / s2);
    (left + right).abs().min(1.0)
}

/// Exact Hellinger distance between two normal laws via the Bhattacharyya
/// coefficient.
pub fn gaussian_hellinger(a: &Gaussian1D, b: &Gaussian1D) -> f64 {
    let (v1, v2) = (a.variance(), b.variance());
    let t = (v1 - v2) / (v1 + v2);
    let dm = a.mean() - b.mean();
    let ln_bc = 0.25 * (-t * t).ln_1p() - dm * dm / (4.0 * (v1 + v2));
    (-ln_bc.exp_m1()).max(0.0).sqrt()
}

fn gaussian_cdf_gap(a: &Gaussian1D, b: &Gaussian1D, x: f64) -> f64 {
    // Compare in whichever tail keeps the values small.
    let za = (x - a.mean()) / a.std_dev();
    let zb = (x - b.mean()) / b.std_dev();
    if za + zb < 0.0 {
        (norm_cdf(za) - norm_cdf(zb)).abs()
    } else {
        (norm_sf(za) - norm_sf(zb)).abs()
    }
}

fn grid_pair(a: &Distribution, b: &Distribution, d: &DomainSpec) -> Result<(GridDensity, GridDensity)> {
    for x in [a, b] {
        if let Distribution::Particles(_) = x {
            return Err(Error::UnsupportedRepresentation(
                "TV/Hellinger against a particle set is degenerate; use W1".into(),
            ));
        }
    }
    Ok((a.to_grid(d)?, b.to_grid(d)?))
}

fn joint_pair<'a>(a: &'a JointGrid2D, b: &'a JointGrid2D) -> Result<(Vec<f64>, &'a [f64], &'a [f64])> {
    if a.x_domain() != b.x_domain() || a.w_domain() != b.w_domain() {
        return Err(Error::DomainMismatch);
    }
    Ok((a.weights(), a.values(), b.values()))
}

/// `(position, mass)` pairs sorted by position.
fn atoms(a: &Distribution, d: &DomainSpec) -> Result<Vec<(f64, f64)>> {
    match a {
        Distribution::Particles(p) => {
            if p.points().iter().any(|x| !d.contains(*x)) {
                return Err(Error::DomainMismatch);
            }
            let mut v: Vec<(f64, f64)> = p.points().iter().copied().zip(p.weights().iter().copied()).collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            Ok(v)
        }
        Distribution::Joint(_) => Err(Error::UnsupportedRepresentation(
            "W1 on the joint space needs a 2-D transport solver".into(),
        )),
        other => {
            let g = other.to_grid(d)?;
            Ok(d.nodes().into_iter().zip(g.atom_masses()).collect())
        }
    }
}

/// W1 between two atomic measures given as position-sorted atom lists.
pub(crate) fn w1_atoms(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut last: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            total += (fa - fb).abs() * (x - prev);
        }
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == x {
            fb += b[j].1;
            j += 1;
        }
        last = Some(x);
    }
    total
}

/// CDF-L1 distance treating each grid density as piecewise linear; used as
/// the independent estimate in `est_numerical_error`.
fn piecewise_linear_cdf_l1(a: &GridDensity, b: &GridDensity) -> f64 {
    let d = a.domain();
    let h = d.spacing();
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut prev_gap = 0.0;
    let mut total = 0.0;
    for k in 1..a.values().len() {
        fa += 0.5 * h * (a.values()[k - 1] + a.values()[k]);
        fb += 0.5 * h * (b.values()[k - 1] + b.values()[k]);
        let gap = fa - fb;
        total += abs_linear_integral(prev_gap, gap, h);
        prev_gap = gap;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::discretize;
    use crate::domains::ParticleSet;

    fn g(m: f64, v: f64) -> Distribution {
        Gaussian1D::new(m, v).unwrap().into()
    }

    fn wide() -> DomainSpec {
        DomainSpec::new(-40.0, 40.0, 8001).unwrap()
    }

    fn grid(m: f64, v: f64, d: &DomainSpec) -> Distribution {
        discretize(&Gaussian1D::new(m, v).unwrap(), d).unwrap().into()
    }

    #[test]
    fn tv_examples() {
        let d = wide();
        assert_eq!(tv(&g(0.0, 1.0), &g(0.0, 1.0), &d).unwrap().value, 0.0);
        // Oracle: 2Φ(1) - 1 (scipy quadrature gives 0.682689482).
        let closed = tv(&g(0.0, 1.0), &g(2.0, 1.0), &d).unwrap();
        assert!((closed.value - 0.682_689_492_137_085_9).abs() < 1e-12, "{}", closed.value);
        let quad = tv(&grid(0.0, 1.0, &d), &grid(2.0, 1.0, &d), &d).unwrap();
        assert_eq!(quad.method, Method::Quadrature);
        assert!((quad.value - closed.value).abs() < 1e-5);
        // Case 1 priors: 2Φ(9/√5) - 1, not within 1e-6 of one.
        let c1 = tv(&grid(-10.0, 5.0, &d), &grid(8.0, 5.0, &d), &d).unwrap().value;
        assert!((c1 - 0.999_943_005_879_7).abs() < 1e-7, "{c1}");
    }

    #[test]
    fn tv_unequal_variances_matches_quadrature() {
        let d = wide();
        let v = gaussian_tv(&Gaussian1D::new(0.0, 1.0).unwrap(), &Gaussian1D::new(0.0, 4.0).unwrap());
        // Crossings at ±sqrt(8 ln 2 / 3); 30-digit reference value.
        assert!((v - 0.322_674_568_834_768_66).abs() < 1e-14, "{v}");
        for (m1, v1, m2, v2) in [(0.0, 1.0, 0.0, 4.0), (-1.0, 0.3, 2.0, 5.0), (3.0, 2.0, 2.5, 0.05)] {
            let closed = gaussian_tv(&Gaussian1D::new(m1, v1).unwrap(), &Gaussian1D::new(m2, v2).unwrap());
            let quad = tv(&grid(m1, v1, &d), &grid(m2, v2, &d), &d).unwrap().value;
            // Kinks of |p - q| at the crossing points limit the grid sum.
            assert!((closed - quad).abs() < 1e-5, "{closed} vs {quad}");
        }
    }

    #[test]
    fn tv_refuses_particles() {
        let p: Distribution = ParticleSet::equally_weighted(vec![0.0, 1.0]).unwrap().into();
        assert!(matches!(tv(&p, &g(0.0, 1.0), &wide()), Err(Error::UnsupportedRepresentation(_))));
        assert!(matches!(hellinger(&g(0.0, 1.0), &p, &wide()), Err(Error::UnsupportedRepresentation(_))));
    }

    #[test]
    fn hellinger_examples() {
        let d = wide();
        assert_eq!(hellinger(&g(1.0, 2.0), &g(1.0, 2.0), &d).unwrap().value, 0.0);
        let expect = (1.0 - (-0.5f64).exp()).sqrt();
        assert!((hellinger(&g(0.0, 1.0), &g(2.0, 1.0), &d).unwrap().value - expect).abs() < 1e-14);
        assert!((expect - 0.627_27).abs() < 1e-5);
        // Quadrature oracle: 0.3249196962.
        let h = hellinger(&g(0.0, 1.0), &g(0.0, 4.0), &d).unwrap().value;
        assert!((h - 0.324_919_696_232_906).abs() < 1e-12);
        let q = hellinger(&grid(0.0, 1.0, &d), &grid(0.0, 4.0, &d), &d).unwrap().value;
        assert!((h - q).abs() < 1e-7);
    }

    #[test]
    fn w1_examples() {
        let d = wide();
        let r = w1(&g(0.0, 1.0), &g(2.0, 1.0), &d).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
        let atomic = w1(&grid(0.0, 1.0, &d), &grid(2.0, 1.0, &d), &d).unwrap().value;
        assert!((atomic - 2.0).abs() < 1e-6);

        let p: Distribution = ParticleSet::new(vec![0.3, -1.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap().into();
        assert_eq!(w1(&p, &p.clone(), &d).unwrap().value, 0.0);

        let u = DomainSpec::new(-1.0, 3.0, 4001).unwrap();
        let a: Distribution = GridDensity::uniform(u, 0.0, 1.0).unwrap().into();
        let b: Distribution = GridDensity::uniform(u, 0.5, 1.5).unwrap().into();
        assert!((w1(&a, &b, &u).unwrap().value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn w1_continuous_vs_empirical() {
        // A single atom at 0 against N(0,1): E|X| = sqrt(2/pi).
        let d = wide();
        let p: Distribution = ParticleSet::equally_weighted(vec![0.0]).unwrap().into();
        let r = w1(&p, &grid(0.0, 1.0, &d), &d).unwrap();
        assert_eq!(r.method, Method::Empirical);
        assert!((r.value - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-4);
        let outside: Distribution = ParticleSet::equally_weighted(vec![50.0]).unwrap().into();
        assert_eq!(w1(&outside, &p, &d), Err(Error::DomainMismatch));
    }

    #[test]
    fn scaled_hellinger_examples() {
        let d = wide();
        let base = discretize(&Gaussian1D::new(0.0, 1.0).unwrap(), &d).unwrap();
        let four = base.scale(4.0).unwrap();
        let one = base.scale(1.0).unwrap();
        let dh = scaled_hellinger(&four, &one).unwrap();
        assert!((dh - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(((4f64.sqrt() - 1.0) - 2f64.sqrt() * dh).abs() < 1e-9);
        assert_eq!(scaled_hellinger(&one, &one).unwrap(), 0.0);
        let shifted = discretize(&Gaussian1D::new(2.0, 1.0).unwrap(), &d).unwrap();
        assert!((scaled_hellinger(&base, &shifted).unwrap() - 0.627_271_345).abs() < 1e-8);
    }

    #[test]
    fn domain_mismatch() {
        let a = grid(0.0, 1.0, &wide());
        let other = DomainSpec::new(-30.0, 30.0, 6001).unwrap();
        assert_eq!(tv(&a, &grid(0.0, 1.0, &other), &other), Err(Error::DomainMismatch));
    }

    #[test]
    fn metric_kind_parsing() {
        assert_eq!("Hellinger".parse::<MetricKind>().unwrap(), MetricKind::Hellinger);
        assert!("kl".parse::<MetricKind>().is_err());
        assert_eq!(MetricKind::W1.to_string(), "w1");
    }
}
