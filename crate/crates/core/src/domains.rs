//! Truncated domains and the distribution representations shared by every
//! other module.
//!
//! A [`GridDensity`] holds density values at uniformly spaced nodes. All
//! integrals against it use composite trapezoid weights, so a grid density
//! is, for every computation in this crate, the discrete measure with mass
//! `w_i * p_i` at node `x_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_sf, normal_ln_pdf, normal_pdf};

/// Minimum node count accepted for a domain.
pub const MIN_GRID_POINTS: usize = 101;

/// Largest tail mass [`discretize`] lets fall outside the domain.
pub const MAX_TAIL_MASS: f64 = 1e-10;

/// Tolerance on the trapezoid mass of a normalized 1-D grid density.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// Tolerance on the trapezoid mass of a normalized 2-D grid density.
pub const JOINT_NORMALIZATION_TOL: f64 = 1e-6;

/// A closed interval `[lower, upper]` sampled at `grid_points` uniform nodes,
/// endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    lower: f64,
    upper: f64,
    grid_points: usize,
}

impl DomainSpec {
    pub fn new(lower: f64, upper: f64, grid_points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::InvalidDomain(format!("bounds [{lower}, {upper}] not finite")));
        }
        if lower >= upper {
            return Err(Error::InvalidDomain(format!("lower {lower} >= upper {upper}")));
        }
        if grid_points < MIN_GRID_POINTS {
            return Err(Error::InvalidDomain(format!(
                "{grid_points} grid points, need at least {MIN_GRID_POINTS}"
            )));
        }
        Ok(Self { lower, upper, grid_points })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    /// Diameter `D` of the domain under the absolute-value metric.
    pub fn diameter(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn spacing(&self) -> f64 {
        self.diameter() / (self.grid_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.grid_points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.grid_points).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Composite trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.grid_points];
        w[0] = 0.5 * h;
        w[self.grid_points - 1] = 0.5 * h;
        w
    }

    /// Trapezoid integral of node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.grid_points);
        let n = values.len();
        let interior: f64 = values[1..n - 1].iter().sum();
        self.spacing() * (interior + 0.5 * (values[0] + values[n - 1]))
    }

    /// Composite Simpson integral of node values. With an even node count
    /// the last interval is closed with the trapezoid rule.
    pub fn integrate_simpson(&self, values: &[f64]) -> f64 {
        let h = self.spacing();
        let n = values.len();
        let m = if n % 2 == 1 { n } else { n - 1 };
        let mut s = values[0] + values[m - 1];
        for (i, v) in values.iter().enumerate().take(m - 1).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        let mut total = s * h / 3.0;
        if m < n {
            total += 0.5 * h * (values[n - 2] + values[n - 1]);
        }
        total
    }

    /// Index of the node nearest to `x` (clamped to the domain).
    pub fn nearest_index(&self, x: f64) -> usize {
        let t = ((x - self.lower) / self.spacing()).round();
        t.clamp(0.0, (self.grid_points - 1) as f64) as usize
    }
}

/// A univariate normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    mean: f64,
    variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidParameter(format!("mean {mean} not finite")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::DegenerateVariance(variance));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        normal_pdf(x, self.mean, self.variance)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        normal_ln_pdf(x, self.mean, self.variance)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        norm_cdf((x - self.mean) / self.std_dev())
    }

    /// Mass outside `d`.
    pub fn tail_mass(&self, d: &DomainSpec) -> f64 {
        let s = self.std_dev();
        norm_cdf((d.lower() - self.mean) / s) + norm_sf((d.upper() - self.mean) / s)
    }
}

/// Density values at the nodes of a domain.
///
/// `normalized == false` marks a scaled measure: finite, positive mass that
/// need not be one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    domain: DomainSpec,
    values: Vec<f64>,
    normalized: bool,
}

impl GridDensity {
    /// A scaled (unnormalized) density; mass must be finite and positive.
    pub fn scaled(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        check_values(&values, domain.grid_points())?;
        let mass = domain.integrate(&values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::NonFinite(format!("scaled density mass {mass}")));
        }
        Ok(Self { domain, values, normalized: false })
    }

    /// Normalizes `values` by their trapezoid mass.
    pub fn normalize_from(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        Self::scaled(domain, values).map(|g| g.normalize())
    }

    pub fn from_fn(domain: DomainSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = domain.nodes().into_iter().map(f).collect();
        Self::normalize_from(domain, values)
    }

    /// Uniform density on `[a, b]` (zero elsewhere on the grid).
    pub fn uniform(domain: DomainSpec, a: f64, b: f64) -> Result<Self> {
        Self::from_fn(domain, |x| if x >= a && x <= b { 1.0 } else { 0.0 })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mass(&self) -> f64 {
        self.domain.integrate(&self.values)
    }

    pub fn normalize(self) -> Self {
        let mass = self.mass();
        let values = self.values.into_iter().map(|v| v / mass).collect();
        Self { domain: self.domain, values, normalized: true }
    }

    /// Returns `c * self` as a scaled density.
    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::scaled(self.domain, self.values.iter().map(|v| c * v).collect())
    }

    /// Node masses `w_i * p_i`.
    pub fn atom_masses(&self) -> Vec<f64> {
        self.domain.weights().iter().zip(&self.values).map(|(w, p)| w * p).collect()
    }

    /// Mass carried by the two boundary nodes.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.values.len();
        let half = 0.5 * self.domain.spacing();
        half * (self.values[0] + self.values[n - 1])
    }

    /// Linear interpolation; zero outside the domain.
    pub fn value_at(&self, x: f64) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        let t = (x - self.domain.lower()) / self.domain.spacing();
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

fn check_values(values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(Error::InvalidParameter(format!(
            "{} values for {expected} nodes",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::NonFinite(format!("density value {v}")));
    }
    Ok(())
}

/// Weighted point masses (an empirical measure).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Weights must already sum to one within `1e-12`.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty particle set".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("particle point or weight".into()));
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidParameter("negative particle weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        Ok(Self { points, weights })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_unnormalized(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::AllWeightsZero);
        }
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("particle weight total {total}")));
        }
        Self::new(points, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn equally_weighted(points: Vec<f64>) -> Result<Self> {
        let n = points.len().max(1) as f64;
        let weights = vec![1.0 / n; points.len()];
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

/// Density on the product grid `X x W`, stored row-major with `x` as the row
/// index: `values[ix * nw + iw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrid2D {
    x_domain: DomainSpec,
    w_domain: DomainSpec,
    values: Vec<f64>,
    normalized: bool,
}

impl JointGrid2D {
    pub fn scaled(x_domain: DomainSpec, w_domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        check_values(&values, x_domain.grid_points() * w_domain.grid_points())?;
        let g = Self { x_domain, w_domain, values, normalized: false };
        let mass = g.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::NonFinite(format!("joint density mass {mass}")));
        }
        Ok(g)
    }

    pub fn normalize_from(x_domain: DomainSpec, w_domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        Self::scaled(x_domain, w_domain, values).map(|g| g.normalize())
    }

    pub fn from_fn(x_domain: DomainSpec, w_domain: DomainSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = x_domain.nodes();
        let ws = w_domain.nodes();
        let mut values = Vec::with_capacity(xs.len() * ws.len());
        for &x in &xs {
            for &w in &ws {
                values.push(f(x, w));
            }
        }
        Self::normalize_from(x_domain, w_domain, values)
    }

    /// Product of two independent Gaussians, discretized.
    pub fn product_gaussian(
        x_domain: DomainSpec,
        w_domain: DomainSpec,
        gx: &Gaussian1D,
        gw: &Gaussian1D,
    ) -> Result<Self> {
        for (g, d) in [(gx, &x_domain), (gw, &w_domain)] {
            let tail = g.tail_mass(d);
            if tail > MAX_TAIL_MASS {
                return Err(Error::DomainTooSmall { mass: tail });
            }
        }
        Self::from_fn(x_domain, w_domain, |x, w| gx.pdf(x) * gw.pdf(w))
    }

    pub fn x_domain(&self) -> &DomainSpec {
        &self.x_domain
    }

    pub fn w_domain(&self) -> &DomainSpec {
        &self.w_domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn nw(&self) -> usize {
        self.w_domain.grid_points()
    }

    pub fn at(&self, ix: usize, iw: usize) -> f64 {
        self.values[ix * self.nw() + iw]
    }

    /// Product trapezoid weights in storage order.
    pub fn weights(&self) -> Vec<f64> {
        product_weights(&self.x_domain, &self.w_domain)
    }

    pub fn mass(&self) -> f64 {
        self.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    pub fn normalize(self) -> Self {
        let mass = self.mass();
        let values = self.values.into_iter().map(|v| v / mass).collect();
        Self { values, normalized: true, ..self }
    }

    /// Mass carried by nodes on the boundary of the rectangle.
    pub fn boundary_mass(&self) -> f64 {
        let (nx, nw) = (self.x_domain.grid_points(), self.nw());
        let w = self.weights();
        let mut m = 0.0;
        for ix in 0..nx {
            for iw in 0..nw {
                if ix == 0 || iw == 0 || ix + 1 == nx || iw + 1 == nw {
                    let k = ix * nw + iw;
                    m += w[k] * self.values[k];
                }
            }
        }
        m
    }

    /// Marginal density of the state on the x grid.
    pub fn x_marginal(&self) -> Result<GridDensity> {
        let ww = self.w_domain.weights();
        let nw = self.nw();
        let values = (0..self.x_domain.grid_points())
            .map(|ix| (0..nw).map(|iw| ww[iw] * self.at(ix, iw)).sum())
            .collect();
        GridDensity::normalize_from(self.x_domain, values)
    }

    /// Marginal density of the parameter on the w grid.
    pub fn w_marginal(&self) -> Result<GridDensity> {
        let wx = self.x_domain.weights();
        let nx = self.x_domain.grid_points();
        let values = (0..self.nw())
            .map(|iw| (0..nx).map(|ix| wx[ix] * self.at(ix, iw)).sum())
            .collect();
        GridDensity::normalize_from(self.w_domain, values)
    }

    /// Means and covariance `(mean_x, mean_w, var_x, cov_xw, var_w)`.
    pub fn moments(&self) -> Result<(f64, f64, f64, f64, f64)> {
        if !self.normalized {
            return Err(Error::Unnormalized);
        }
        let xs = self.x_domain.nodes();
        let ws = self.w_domain.nodes();
        let wt = self.weights();
        let nw = self.nw();
        let (mut mx, mut mw) = (0.0, 0.0);
        for (k, (v, w)) in self.values.iter().zip(&wt).enumerate() {
            let m = v * w;
            mx += m * xs[k / nw];
            mw += m * ws[k % nw];
        }
        let (mut vxx, mut vxw, mut vww) = (0.0, 0.0, 0.0);
        for (k, (v, w)) in self.values.iter().zip(&wt).enumerate() {
            let m = v * w;
            let dx = xs[k / nw] - mx;
            let dw = ws[k % nw] - mw;
            vxx += m * dx * dx;
            vxw += m * dx * dw;
            vww += m * dw * dw;
        }
        Ok((mx, mw, vxx, vxw, vww))
    }
}

pub(crate) fn product_weights(x: &DomainSpec, w: &DomainSpec) -> Vec<f64> {
    let wx = x.weights();
    let ww = w.weights();
    let mut out = Vec::with_capacity(wx.len() * ww.len());
    for a in &wx {
        for b in &ww {
            out.push(a * b);
        }
    }
    out
}

/// Any of the representations a prior, posterior or approximation can take.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Gaussian(Gaussian1D),
    Grid(GridDensity),
    Particles(ParticleSet),
    Joint(JointGrid2D),
}

impl Distribution {
    /// Node values on `d` for a 1-D density representation.
    pub fn to_grid(&self, d: &DomainSpec) -> Result<GridDensity> {
        match self {
            Distribution::Gaussian(g) => discretize(g, d),
            Distribution::Grid(g) if g.domain() == d => Ok(g.clone()),
            Distribution::Grid(_) => Err(Error::DomainMismatch),
            Distribution::Particles(_) => Err(Error::UnsupportedRepresentation(
                "particle set has no density on the grid".into(),
            )),
            Distribution::Joint(_) => Err(Error::UnsupportedRepresentation(
                "joint density where a 1-D density is required".into(),
            )),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Distribution::Gaussian(_) => "gaussian",
            Distribution::Grid(_) => "grid",
            Distribution::Particles(_) => "particles",
            Distribution::Joint(_) => "joint",
        }
    }
}

impl From<Gaussian1D> for Distribution {
    fn from(g: Gaussian1D) -> Self {
        Distribution::Gaussian(g)
    }
}

impl From<GridDensity> for Distribution {
    fn from(g: GridDensity) -> Self {
        Distribution::Grid(g)
    }
}

impl From<ParticleSet> for Distribution {
    fn from(p: ParticleSet) -> Self {
        Distribution::Particles(p)
    }
}

impl From<JointGrid2D> for Distribution {
    fn from(j: JointGrid2D) -> Self {
        Distribution::Joint(j)
    }
}

/// Samples a Gaussian onto the nodes of `d` and renormalizes.
pub fn discretize(g: &Gaussian1D, d: &DomainSpec) -> Result<GridDensity> {
    let tail = g.tail_mass(d);
    if tail > MAX_TAIL_MASS {
        return Err(Error::DomainTooSmall { mass: tail });
    }
    GridDensity::from_fn(*d, |x| g.pdf(x))
}

/// Trapezoid mean and variance of a normalized grid density.
pub fn moments(g: &GridDensity) -> Result<(f64, f64)> {
    if !g.is_normalized() {
        return Err(Error::Unnormalized);
    }
    let nodes = g.domain().nodes();
    let masses = g.atom_masses();
    let mean: f64 = masses.iter().zip(&nodes).map(|(m, x)| m * x).sum();
    let var: f64 = masses.iter().zip(&nodes).map(|(m, x)| m * (x - mean).powi(2)).sum();
    Ok((mean, var))
}
