//! Learning-error bounds for online variational inference with a Gaussian
//! likelihood `N(y; Phi(x), Gamma)`, and a Monte Carlo ELBO estimator.
//!
//! With `c_h = (2 pi)^{-r/2} det(Gamma)^{-1/2}` the supremum of the
//! likelihood, an ELBO floor `L_k(Q_k) >= eps_k` gives
//! `d(Q_k*, Q_k) <= alpha sqrt(ln c_h - eps_k)`, and the learning error is the
//! usual ledger over those incremental errors with step constants
//! `c_h / Z_i` (TV, W1) or `2 sqrt(c_h / Z_i)` (Hellinger).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::grid_update;
use crate::bounds::{BoundLedger, LedgerVariant};
use crate::domains::{DomainSpec, Distribution, Gaussian1D, JointGrid2D};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricKind};
use crate::models::{LikelihoodModel, ProblemKind, SystemSpec, TransitionModel};
use crate::special::LN_2PI;
use crate::EVIDENCE_FLOOR;

/// Per-step inputs of the parameter-error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaInput {
    /// `C~_VI(y_k; k)`.
    pub c_tilde: f64,
    /// `||w_hat_k - w_bar||`.
    pub param_error: f64,
    /// `Z_{k, w_hat_k}(Q_{k-1})`.
    pub evidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VIBoundInputs {
    /// Data dimension.
    pub r: u32,
    pub det_gamma: f64,
    pub elbo_floors: Vec<f64>,
    /// `Z_i(Q_{i-1})`, or `Z_i(P_{i-1})` for the exact-sequence form.
    pub evidences: Vec<f64>,
    #[serde(default)]
    pub diameter: Option<f64>,
    #[serde(default)]
    pub beta_inputs: Option<Vec<BetaInput>>,
}

impl VIBoundInputs {
    /// `ln c_h = -(r/2) ln(2 pi) - (1/2) ln det(Gamma)`.
    pub fn ln_c_h(&self) -> f64 {
        -0.5 * self.r as f64 * LN_2PI - 0.5 * self.det_gamma.ln()
    }

    fn validate(&self, metric: MetricKind) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidParameter("data dimension r must be positive".into()));
        }
        if !(self.det_gamma > 0.0 && self.det_gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("det(Gamma) = {}", self.det_gamma)));
        }
        if self.elbo_floors.is_empty() || self.elbo_floors.len() != self.evidences.len() {
            return Err(Error::InvalidParameter(format!(
                "{} ELBO floors for {} evidences",
                self.elbo_floors.len(),
                self.evidences.len()
            )));
        }
        if let Some(e) = self.elbo_floors.iter().find(|e| !e.is_finite()) {
            return Err(Error::NonFinite(format!("ELBO floor {e}")));
        }
        for &z in &self.evidences {
            check_z(z)?;
        }
        if metric == MetricKind::W1 && self.diameter.is_none() {
            return Err(Error::MissingDiameter);
        }
        Ok(())
    }

    /// `sqrt(ln c_h - eps_j)` for every step.
    fn kl_terms(&self) -> Result<Vec<f64>> {
        let a = self.ln_c_h();
        self.elbo_floors
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let arg = a - e;
                if arg < 0.0 {
                    Err(Error::VacuousBound { step: i + 1, argument: arg })
                } else {
                    Ok(arg.sqrt())
                }
            })
            .collect()
    }
}

fn check_z(z: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("evidence {z}")));
    }
    if z <= EVIDENCE_FLOOR {
        return Err(Error::ZeroEvidence { evidence: z });
    }
    Ok(())
}

/// `1/sqrt(2)` for TV and Hellinger, `D/sqrt(2)` for W1.
pub fn alpha(metric: MetricKind, diameter: Option<f64>) -> Result<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match metric {
        MetricKind::W1 => diameter.map(|d| d * s).ok_or(Error::MissingDiameter),
        _ => Ok(s),
    }
}

fn vi_step_constant(metric: MetricKind, ln_c_h: f64, z: f64) -> f64 {
    let ratio = ln_c_h.exp() / z;
    match metric {
        MetricKind::Hellinger => 2.0 * ratio.sqrt(),
        _ => ratio,
    }
}

/// `C_VI` for step `j` of a `k = evidences.len()` step run: `alpha` times
/// the product of the step constants `i = j+1..=k`.
pub fn c_vi(inp: &VIBoundInputs, metric: MetricKind, j: usize) -> Result<f64> {
    inp.validate(metric)?;
    let k = inp.evidences.len();
    if j == 0 || j > k {
        return Err(Error::InvalidParameter(format!("step {j} outside 1..={k}")));
    }
    let a = inp.ln_c_h();
    let prod: f64 = inp.evidences[j..].iter().map(|&z| vi_step_constant(metric, a, z)).product();
    Ok(alpha(metric, inp.diameter)? * prod)
}

/// The parameter-error term added to the step-`k` incremental error.
pub fn beta(metric: MetricKind, b: &BetaInput) -> Result<f64> {
    check_z(b.evidence)?;
    if !(b.c_tilde >= 0.0 && b.param_error >= 0.0) {
        return Err(Error::InvalidParameter("C~_VI and the parameter error must be nonnegative".into()));
    }
    let ratio = b.c_tilde * b.param_error / b.evidence;
    Ok(match metric {
        MetricKind::Hellinger => 2.0 * ratio.sqrt(),
        _ => std::f64::consts::SQRT_2 * ratio,
    })
}

/// Per-step ledger of `B_k / alpha`; multiply by [`alpha`] for the bounds.
pub fn vi_ledger(inp: &VIBoundInputs, metric: MetricKind, with_beta: bool) -> Result<BoundLedger> {
    inp.validate(metric)?;
    let mut eps = inp.kl_terms()?;
    if with_beta {
        let b = inp
            .beta_inputs
            .as_ref()
            .ok_or_else(|| Error::MissingConstant("beta inputs for every step".into()))?;
        if b.len() != eps.len() {
            return Err(Error::InvalidParameter(format!("{} beta inputs for {} steps", b.len(), eps.len())));
        }
        for (e, bi) in eps.iter_mut().zip(b) {
            *e += beta(metric, bi)?;
        }
    }
    let a = inp.ln_c_h();
    let ks: Vec<f64> = inp.evidences.iter().map(|&z| vi_step_constant(metric, a, z)).collect();
    BoundLedger::from_constants(metric, LedgerVariant::Set2, &ks, &eps, 1, 0.0)
}

/// Per-step bounds `alpha B_k`, `k = 1..=steps`.
pub fn vi_bounds(inp: &VIBoundInputs, metric: MetricKind, with_beta: bool) -> Result<Vec<f64>> {
    let al = alpha(metric, inp.diameter)?;
    Ok(vi_ledger(inp, metric, with_beta)?.bounds().into_iter().map(|b| al * b).collect())
}

/// Bound on the learning error after the last step, known parameter.
pub fn vi_bound_type1(inp: &VIBoundInputs, metric: MetricKind) -> Result<f64> {
    vi_bounds(inp, metric, false).map(|b| *b.last().expect("at least one step"))
}

/// Bound with a plug-in parameter estimate at every step.
pub fn vi_bound_type2(inp: &VIBoundInputs, metric: MetricKind) -> Result<f64> {
    vi_bounds(inp, metric, true).map(|b| *b.last().expect("at least one step"))
}

/// `C~_VI(y_k; k)`: the likelihood-weighted integral of the parameter
/// Lipschitz constant of the transition density, on the grid.
pub fn c_tilde_vi(s: &SystemSpec, k: usize) -> Result<f64> {
    let (Some(t), Some(wd)) = (s.transition(), s.w_domain()) else {
        return Err(Error::UnsupportedRepresentation("C~_VI needs a parameter-state system".into()));
    };
    let y = s.y(k)?;
    let d = s.domain();
    let xs = d.nodes();
    let ws = wd.nodes();
    let h = s.likelihood();
    let g_lip: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let mut best: f64 = 0.0;
            for &xp in &xs {
                let mut prev = t.density(x, xp, ws[0]);
                for pair in ws.windows(2) {
                    let cur = t.density(x, xp, pair[1]);
                    best = best.max((cur - prev).abs() / (pair[1] - pair[0]));
                    prev = cur;
                }
            }
            best
        })
        .collect();
    let integrand: Vec<f64> = xs.iter().zip(&g_lip).map(|(&x, g)| h.eval(y, x, 0.0) * g).collect();
    crate::error::ensure_finite(d.integrate(&integrand), "C~_VI")
}

/// Gaussian on `(x, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateGaussian {
    pub mean_x: f64,
    pub mean_w: f64,
    pub var_x: f64,
    pub cov_xw: f64,
    pub var_w: f64,
}

impl BivariateGaussian {
    pub fn new(mean_x: f64, mean_w: f64, var_x: f64, cov_xw: f64, var_w: f64) -> Result<Self> {
        for v in [mean_x, mean_w, var_x, cov_xw, var_w] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("bivariate Gaussian parameter {v}")));
            }
        }
        let det = var_x * var_w - cov_xw * cov_xw;
        if !(var_x > 0.0 && var_w > 0.0 && det > 0.0) {
            return Err(Error::DegenerateVariance(det));
        }
        Ok(Self { mean_x, mean_w, var_x, cov_xw, var_w })
    }

    pub fn independent(x: &Gaussian1D, w: &Gaussian1D) -> Self {
        Self { mean_x: x.mean(), mean_w: w.mean(), var_x: x.variance(), cov_xw: 0.0, var_w: w.variance() }
    }

    /// Moment-matched Gaussian of a joint grid density.
    pub fn from_joint(j: &JointGrid2D) -> Result<Self> {
        let (mx, mw, vx, cxw, vw) = j.moments()?;
        Self::new(mx, mw, vx, cxw, vw)
    }

    fn det(&self) -> f64 {
        self.var_x * self.var_w - self.cov_xw * self.cov_xw
    }

    pub fn ln_pdf(&self, x: f64, w: f64) -> f64 {
        let (dx, dw) = (x - self.mean_x, w - self.mean_w);
        let det = self.det();
        let quad = (self.var_w * dx * dx - 2.0 * self.cov_xw * dx * dw + self.var_x * dw * dw) / det;
        -LN_2PI - 0.5 * det.ln() - 0.5 * quad
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let l11 = self.var_x.sqrt();
        let l21 = self.cov_xw / l11;
        let l22 = (self.var_w - l21 * l21).sqrt();
        (self.mean_x + l11 * z1, self.mean_w + l21 * z1 + l22 * z2)
    }

    pub fn to_joint(&self, x_domain: DomainSpec, w_domain: DomainSpec) -> Result<JointGrid2D> {
        JointGrid2D::from_fn(x_domain, w_domain, |x, w| self.ln_pdf(x, w).exp())
    }
}

/// A variational family member: `Q_k` for 1-D systems or `Q_k(x, w)` for
/// parameter-state systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum VariationalDensity {
    Gaussian(Gaussian1D),
    Bivariate(BivariateGaussian),
}

impl VariationalDensity {
    pub fn ln_pdf(&self, x: f64, w: f64) -> f64 {
        match self {
            VariationalDensity::Gaussian(g) => g.ln_pdf(x),
            VariationalDensity::Bivariate(b) => b.ln_pdf(x, w),
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            VariationalDensity::Gaussian(g) => {
                let z: f64 = StandardNormal.sample(rng);
                (g.mean() + g.std_dev() * z, 0.0)
            }
            VariationalDensity::Bivariate(b) => b.sample(rng),
        }
    }
}

impl From<Gaussian1D> for VariationalDensity {
    fn from(g: Gaussian1D) -> Self {
        VariationalDensity::Gaussian(g)
    }
}

impl From<BivariateGaussian> for VariationalDensity {
    fn from(b: BivariateGaussian) -> Self {
        VariationalDensity::Bivariate(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of `E_q[ln h(y_k | x) + ln q_pred(x) - ln q(x)]`,
/// where `q_pred` is `prev` itself for inverse problems and `prev` pushed
/// through the transition (quadrature over the state nodes) otherwise.
pub fn elbo_mc(
    q: &VariationalDensity,
    s: &SystemSpec,
    k: usize,
    prev: &VariationalDensity,
    n: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!("{n} Monte Carlo samples; at least 100 are needed")));
    }
    let expect_joint = s.kind() == ProblemKind::Ps;
    for v in [q, prev] {
        if matches!(v, VariationalDensity::Bivariate(_)) != expect_joint {
            return Err(Error::UnsupportedRepresentation(format!(
                "{:?} systems need {} variational densities",
                s.kind(),
                if expect_joint { "bivariate" } else { "univariate" }
            )));
        }
    }
    let y = s.y(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64)> = (0..n).map(|_| q.sample(&mut rng)).collect();
    let h = s.likelihood();
    let d = s.domain();
    let (nodes, weights) = (d.nodes(), d.weights());
    let ln_pred = |x: f64, w: f64| -> f64 {
        match s.transition() {
            None => prev.ln_pdf(x, w),
            Some(t) => {
                let v: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&xp, &wt)| wt * t.density(x, xp, w) * prev.ln_pdf(xp, w).exp())
                    .sum();
                v.ln()
            }
        }
    };
    let terms: Vec<f64> = draws
        .par_iter()
        .map(|&(x, w)| h.eval(y, x, w).ln() + ln_pred(x, w) - q.ln_pdf(x, w))
        .collect();
    if let Some(bad) = terms.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("ELBO integrand {bad}")));
    }
    let nf = n as f64;
    let mean = terms.iter().sum::<f64>() / nf;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(ElboEstimate { value: mean, std_error: (var / nf).sqrt(), samples: n })
}

/// The linear-Gaussian parameter-state toy: `x_k = w x_{k-1} + N(0, q)`,
/// `y_k = x_k + N(0, r)`, prior `N(m_x, v_x) x N(m_w, v_w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsToy {
    pub steps: usize,
    pub true_w: f64,
    pub process_var: f64,
    pub noise_var: f64,
    pub prior_x: (f64, f64),
    pub prior_w: (f64, f64),
    pub x_domain: (f64, f64, usize),
    pub w_domain: (f64, f64, usize),
    pub mc_samples: usize,
}

impl Default for PsToy {
    fn default() -> Self {
        Self {
            steps: 5,
            true_w: 0.8,
            process_var: 0.25,
            noise_var: 0.5,
            prior_x: (1.0, 1.0),
            prior_w: (0.5, 0.1),
            x_domain: (-8.0, 8.0, 241),
            w_domain: (-2.0, 3.0, 121),
            mc_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VIToyRow {
    pub step: usize,
    pub elbo: f64,
    pub elbo_std_error: f64,
    /// `Z_k(P_{k-1})`.
    pub evidence_exact: f64,
    /// `Z_k(Q_{k-1})`.
    pub evidence: f64,
    /// Measured `d_TV(P_k, Q_k)` on the grid.
    pub distance: f64,
    pub bound: f64,
}

impl PsToy {
    /// Simulates data and builds the system.
    pub fn system(&self, seed: u64) -> Result<SystemSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        let mut x = self.prior_x.0 + self.prior_x.1.sqrt() * draw(&mut rng);
        let mut ys = Vec::with_capacity(self.steps);
        for _ in 0..self.steps {
            x = self.true_w * x + self.process_var.sqrt() * draw(&mut rng);
            ys.push(x + self.noise_var.sqrt() * draw(&mut rng));
        }
        let xd = DomainSpec::new(self.x_domain.0, self.x_domain.1, self.x_domain.2)?;
        let wd = DomainSpec::new(self.w_domain.0, self.w_domain.1, self.w_domain.2)?;
        SystemSpec::parameter_state(
            TransitionModel::parametric(0.0, self.process_var, 1.0, 0.0)?,
            LikelihoodModel::linear_gaussian(1.0, self.noise_var)?,
            xd,
            wd,
            ys,
        )
    }

    /// Runs the exact grid sequence and the moment-matched Gaussian VI
    /// sequence side by side, with ELBO floors set to the measured ELBOs.
    pub fn run(&self, seed: u64) -> Result<Vec<VIToyRow>> {
        let s = self.system(seed)?;
        let (xd, wd) = (*s.domain(), *s.w_domain().expect("PS system"));
        let gx = Gaussian1D::new(self.prior_x.0, self.prior_x.1)?;
        let gw = Gaussian1D::new(self.prior_w.0, self.prior_w.1)?;
        let mut p: Distribution = JointGrid2D::product_gaussian(xd, wd, &gx, &gw)?.into();
        let mut q_gauss = BivariateGaussian::independent(&gx, &gw);
        let mut q_grid: Distribution = p.clone();
        let (mut elbos, mut ses, mut zs, mut zps, mut dists) = (vec![], vec![], vec![], vec![], vec![]);
        for k in 1..=self.steps {
            let exact = grid_update(&s, k, &p)?;
            zps.push(exact.evidence);
            p = exact.posterior;
            let star = grid_update(&s, k, &q_grid)?;
            let Distribution::Joint(star_joint) = &star.posterior else {
                unreachable!("PS update yields a joint grid")
            };
            let next = BivariateGaussian::from_joint(star_joint)?;
            let elbo = elbo_mc(&next.into(), &s, k, &q_gauss.into(), self.mc_samples, seed ^ ((k as u64) << 32))?;
            q_grid = next.to_joint(xd, wd)?.into();
            q_gauss = next;
            elbos.push(elbo.value);
            ses.push(elbo.std_error);
            zs.push(star.evidence);
            dists.push(metrics::tv(&p, &q_grid, &xd)?.value);
        }
        let inp = VIBoundInputs {
            r: 1,
            det_gamma: self.noise_var,
            elbo_floors: elbos.clone(),
            evidences: zs.clone(),
            diameter: None,
            beta_inputs: None,
        };
        let bounds = vi_bounds(&inp, MetricKind::Tv, false)?;
        Ok((0..self.steps)
            .map(|i| VIToyRow {
                step: i + 1,
                elbo: elbos[i],
                elbo_std_error: ses[i],
                evidence_exact: zps[i],
                evidence: zs[i],
                distance: dists[i],
                bound: bounds[i],
            })
            .collect())
    }
}
