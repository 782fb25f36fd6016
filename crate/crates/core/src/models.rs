//! Likelihood and transition models, the three problem variants, and the
//! model-side constants that enter the step Lipschitz constants.
//!
//! The transition kernel used on the grid is column-normalized: for each
//! previous state `x_j` the weights `w_i T(x_i, x_j)` sum to one exactly, so
//! the discretized system is a Markov chain on the nodes. Every constant
//! below is the larger of its closed form (when the family has one) and the
//! brute-force value on that discretized system.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{DomainSpec, Distribution};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::special::{norm_cdf, normal_pdf};

const CUSTOM_LIP_SAFETY: f64 = 2.0;
const REFINEMENT_FACTOR: usize = 4;
const REFINEMENT_GROWTH_LIMIT: f64 = 1.5;
const E_NEG_HALF: f64 = 0.606_530_659_712_633_4;

type LikelihoodFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;
type KernelFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum LikelihoodFamily {
    /// `h(y, x) = N(y; a x, noise_var)`.
    LinearGaussian { a: f64, noise_var: f64 },
    Custom,
}

/// Observation density `h(y, x[, w])`.
///
/// Custom evaluators receive `(y, x, w)`; `w` is zero outside
/// parameter-state problems. They must be reentrant.
#[derive(Clone)]
pub struct LikelihoodModel {
    family: LikelihoodFamily,
    custom: Option<Arc<LikelihoodFn>>,
    declared_sup: Option<f64>,
    declared_lip: Option<f64>,
}

impl fmt::Debug for LikelihoodModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LikelihoodModel")
            .field("family", &self.family)
            .field("declared_sup", &self.declared_sup)
            .field("declared_lip", &self.declared_lip)
            .finish()
    }
}

impl LikelihoodModel {
    pub fn linear_gaussian(a: f64, noise_var: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidParameter(format!("likelihood slope {a}")));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::DegenerateVariance(noise_var));
        }
        Ok(Self {
            family: LikelihoodFamily::LinearGaussian { a, noise_var },
            custom: None,
            declared_sup: None,
            declared_lip: None,
        })
    }

    pub fn custom(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { family: LikelihoodFamily::Custom, custom: Some(Arc::new(f)), declared_sup: None, declared_lip: None }
    }

    /// Declares `sup_x h(y, x)`; checked against the grid maximum.
    pub fn with_declared_sup(mut self, c: f64) -> Self {
        self.declared_sup = Some(c);
        self
    }

    /// Declares the Lipschitz constant of `x -> h(y, x)`.
    pub fn with_declared_lip(mut self, l: f64) -> Self {
        self.declared_lip = Some(l);
        self
    }

    pub fn family(&self) -> LikelihoodFamily {
        self.family
    }

    pub fn eval(&self, y: f64, x: f64, w: f64) -> f64 {
        match self.family {
            LikelihoodFamily::LinearGaussian { a, noise_var } => normal_pdf(y, a * x, noise_var),
            LikelihoodFamily::Custom => (self.custom.as_ref().expect("custom evaluator"))(y, x, w),
        }
    }

    fn is_custom(&self) -> bool {
        matches!(self.family, LikelihoodFamily::Custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum TransitionFamily {
    /// `x_next ~ N((a + w_scale w) x_prev + w_shift w, q)`.
    LinearGaussian { a: f64, q: f64, w_scale: f64, w_shift: f64 },
    Custom,
}

/// Transition density `T(x_next, x_prev[, w])`.
#[derive(Clone)]
pub struct TransitionModel {
    family: TransitionFamily,
    custom: Option<Arc<KernelFn>>,
}

impl fmt::Debug for TransitionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransitionModel").field("family", &self.family).finish()
    }
}

impl TransitionModel {
    pub fn linear_gaussian(a: f64, q: f64) -> Result<Self> {
        Self::parametric(a, q, 0.0, 0.0)
    }

    /// Linear-Gaussian transition whose mean depends on the parameter `w`.
    pub fn parametric(a: f64, q: f64, w_scale: f64, w_shift: f64) -> Result<Self> {
        if ![a, w_scale, w_shift].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite transition coefficient".into()));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::DegenerateVariance(q));
        }
        Ok(Self { family: TransitionFamily::LinearGaussian { a, q, w_scale, w_shift }, custom: None })
    }

    pub fn custom(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { family: TransitionFamily::Custom, custom: Some(Arc::new(f)) }
    }

    pub fn family(&self) -> TransitionFamily {
        self.family
    }

    pub fn density(&self, x_next: f64, x_prev: f64, w: f64) -> f64 {
        match self.family {
            TransitionFamily::LinearGaussian { a, q, w_scale, w_shift } => {
                normal_pdf(x_next, (a + w_scale * w) * x_prev + w_shift * w, q)
            }
            TransitionFamily::Custom => (self.custom.as_ref().expect("custom kernel"))(x_next, x_prev, w),
        }
    }

    /// Draws `x_next` given `x_prev`. Custom kernels are sampled by inverse
    /// CDF on the nodes of `d`.
    pub fn sample<R: Rng + ?Sized>(&self, x_prev: f64, w: f64, d: &DomainSpec, rng: &mut R) -> Result<f64> {
        match self.family {
            TransitionFamily::LinearGaussian { a, q, w_scale, w_shift } => {
                let mean = (a + w_scale * w) * x_prev + w_shift * w;
                let n = Normal::new(mean, q.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                Ok(n.sample(rng))
            }
            TransitionFamily::Custom => {
                let masses: Vec<f64> =
                    d.weights().iter().zip(d.nodes()).map(|(wt, x)| wt * self.density(x, x_prev, w)).collect();
                let total: f64 = masses.iter().sum();
                if !(total > 0.0 && total.is_finite()) {
                    return Err(Error::NonFinite(format!("transition mass {total}")));
                }
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (i, m) in masses.iter().enumerate() {
                    acc += m;
                    if u < acc {
                        return Ok(d.node(i));
                    }
                }
                Ok(d.upper())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Ip,
    Se,
    Ps,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Inverse { likelihood: LikelihoodModel },
    StateEstimation { transition: TransitionModel, likelihood: LikelihoodModel },
    /// State on the main domain, static parameter `w` on `w_domain`.
    ParameterState { transition: TransitionModel, likelihood: LikelihoodModel, w_domain: DomainSpec },
}

/// Column-normalized kernel matrices, one per parameter node (one for SE).
#[derive(Debug)]
struct KernelCache {
    mats: Vec<Vec<f64>>,
}

/// A problem together with its data sequence and domain(s).
///
/// Steps are 1-based: step `k` consumes `data[k - 1]`. Clones share the
/// kernel cache, which depends only on the transition model and domains.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    problem: Problem,
    data: Vec<f64>,
    domain: DomainSpec,
    kernels: Arc<OnceLock<KernelCache>>,
}

impl SystemSpec {
    pub fn new(problem: Problem, domain: DomainSpec, data: Vec<f64>) -> Result<Self> {
        if let Some(y) = data.iter().find(|y| !y.is_finite()) {
            return Err(Error::NonFinite(format!("observation {y}")));
        }
        Ok(Self { problem, data, domain, kernels: Arc::new(OnceLock::new()) })
    }

    pub fn inverse(likelihood: LikelihoodModel, domain: DomainSpec, data: Vec<f64>) -> Result<Self> {
        Self::new(Problem::Inverse { likelihood }, domain, data)
    }

    pub fn state_estimation(
        transition: TransitionModel,
        likelihood: LikelihoodModel,
        domain: DomainSpec,
        data: Vec<f64>,
    ) -> Result<Self> {
        Self::new(Problem::StateEstimation { transition, likelihood }, domain, data)
    }

    pub fn parameter_state(
        transition: TransitionModel,
        likelihood: LikelihoodModel,
        x_domain: DomainSpec,
        w_domain: DomainSpec,
        data: Vec<f64>,
    ) -> Result<Self> {
        Self::new(Problem::ParameterState { transition, likelihood, w_domain }, x_domain, data)
    }

    /// Same models and domains with a different data sequence.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if let Some(y) = data.iter().find(|y| !y.is_finite()) {
            return Err(Error::NonFinite(format!("observation {y}")));
        }
        Ok(Self { data, ..self.clone() })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn kind(&self) -> ProblemKind {
        match self.problem {
            Problem::Inverse { .. } => ProblemKind::Ip,
            Problem::StateEstimation { .. } => ProblemKind::Se,
            Problem::ParameterState { .. } => ProblemKind::Ps,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn w_domain(&self) -> Option<&DomainSpec> {
        match &self.problem {
            Problem::ParameterState { w_domain, .. } => Some(w_domain),
            _ => None,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn steps(&self) -> usize {
        self.data.len()
    }

    pub fn likelihood(&self) -> &LikelihoodModel {
        match &self.problem {
            Problem::Inverse { likelihood }
            | Problem::StateEstimation { likelihood, .. }
            | Problem::ParameterState { likelihood, .. } => likelihood,
        }
    }

    pub fn transition(&self) -> Option<&TransitionModel> {
        match &self.problem {
            Problem::Inverse { .. } => None,
            Problem::StateEstimation { transition, .. } | Problem::ParameterState { transition, .. } => {
                Some(transition)
            }
        }
    }

    /// Observation `y_k`.
    pub fn y(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.data.len() {
            return Err(Error::InvalidParameter(format!("step {k} outside 1..={}", self.data.len())));
        }
        Ok(self.data[k - 1])
    }

    /// Diameter of the state space; for parameter-state problems the metric
    /// is `|x - x'| + |w - w'|`, so the diameters add.
    pub fn diameter(&self) -> f64 {
        self.domain.diameter() + self.w_domain().map_or(0.0, |d| d.diameter())
    }

    /// Parameter nodes; `[0.0]` when there is no parameter.
    pub(crate) fn w_nodes(&self) -> Vec<f64> {
        self.w_domain().map_or_else(|| vec![0.0], |d| d.nodes())
    }

    /// `h(y, x_i, w)` at every state node.
    pub(crate) fn h_values(&self, y: f64, w: f64) -> Vec<f64> {
        let h = self.likelihood();
        self.domain.nodes().into_iter().map(|x| h.eval(y, x, w)).collect()
    }

    /// Row-major `n x n` matrix `K[i * n + j]` of normalized kernel weights
    /// `T(x_i, x_j, w) / sum_l w_l T(x_l, x_j, w)` for parameter node `iw`.
    pub(crate) fn kernel(&self, iw: usize) -> Result<&[f64]> {
        let t = self
            .transition()
            .ok_or_else(|| Error::UnsupportedRepresentation("inverse problems have no transition".into()))?;
        if self.kernels.get().is_none() {
            let mats = self
                .w_nodes()
                .iter()
                .map(|&w| build_kernel(t, &self.domain, w))
                .collect::<Result<Vec<_>>>()?;
            let _ = self.kernels.set(KernelCache { mats });
        }
        Ok(&self.kernels.get().expect("kernel cache").mats[iw])
    }

    /// Normalized kernel column for an arbitrary previous state.
    pub(crate) fn kernel_column(&self, x_prev: f64, w: f64) -> Result<Vec<f64>> {
        let t = self
            .transition()
            .ok_or_else(|| Error::UnsupportedRepresentation("inverse problems have no transition".into()))?;
        column(t, &self.domain, x_prev, w)
    }

    /// The function `g` of the reduction conditions: the evidence integrand
    /// as a function of the previous state (and parameter). For PS the
    /// result is in joint storage order `ix * nw + iw`.
    pub fn g_values(&self, y: f64) -> Result<Vec<f64>> {
        match self.kind() {
            ProblemKind::Ip => Ok(self.h_values(y, 0.0)),
            ProblemKind::Se => {
                let h = self.h_values(y, 0.0);
                Ok(self.kernel_adjoint(0, &h))
            }
            ProblemKind::Ps => {
                let ws = self.w_nodes();
                let nw = ws.len();
                let n = self.domain.grid_points();
                let mut out = vec![0.0; n * nw];
                for (iw, &w) in ws.iter().enumerate() {
                    let col = self.kernel_adjoint(iw, &self.h_values(y, w));
                    for (j, v) in col.into_iter().enumerate() {
                        out[j * nw + iw] = v;
                    }
                }
                Ok(out)
            }
        }
    }

    /// `sum_i w_i f_i K[i, j]` for every column `j`.
    fn kernel_adjoint(&self, iw: usize, f: &[f64]) -> Vec<f64> {
        let k = self.kernel(iw).expect("transition present");
        let n = f.len();
        let wf: Vec<f64> = self.domain.weights().iter().zip(f).map(|(w, v)| w * v).collect();
        (0..n).into_par_iter().map(|j| (0..n).map(|i| wf[i] * k[i * n + j]).sum()).collect()
    }
}

fn column(t: &TransitionModel, d: &DomainSpec, x_prev: f64, w: f64) -> Result<Vec<f64>> {
    let mut col: Vec<f64> = d.nodes().into_iter().map(|x| t.density(x, x_prev, w)).collect();
    let mass = d.integrate(&col);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::NonFinite(format!("transition mass {mass} from x_prev = {x_prev}")));
    }
    col.iter_mut().for_each(|v| *v /= mass);
    Ok(col)
}

fn build_kernel(t: &TransitionModel, d: &DomainSpec, w: f64) -> Result<Vec<f64>> {
    let n = d.grid_points();
    let cols = d.nodes().into_par_iter().map(|xp| column(t, d, xp, w)).collect::<Result<Vec<_>>>()?;
    let mut m = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[i * n + j] = *v;
        }
    }
    Ok(m)
}

/// Lipschitz ingredients of one step. Only the entries relevant to the
/// problem variant and metric are populated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub kind: ProblemKind,
    /// `sup h(y_k, .)`; reported for every variant.
    pub c_h: f64,
    pub h_lip: Option<f64>,
    pub c_th: Option<f64>,
    pub c_th_star: Option<f64>,
    pub c_th_tilde: Option<f64>,
    pub c_th_tilde_star: Option<f64>,
    pub diameter: f64,
}

/// Model constants for step `k`; Lipschitz quantities only for W1.
pub fn system_constants(s: &SystemSpec, k: usize, metric: MetricKind) -> Result<ConstantsReport> {
    let y = s.y(k)?;
    let w1 = metric == MetricKind::W1;
    let c_h = sup_likelihood(s, y)?;
    let mut r = ConstantsReport {
        kind: s.kind(),
        c_h,
        h_lip: None,
        c_th: None,
        c_th_star: None,
        c_th_tilde: None,
        c_th_tilde_star: None,
        diameter: s.diameter(),
    };
    match s.kind() {
        ProblemKind::Ip => {
            if w1 {
                r.h_lip = Some(likelihood_lip(s, y)?);
            }
        }
        ProblemKind::Se => {
            r.c_th = Some(se_c_th(s, y)?);
            if w1 {
                r.c_th_star = Some(se_c_th_star(s, y)?);
            }
        }
        ProblemKind::Ps => {
            r.c_th_tilde = Some(ps_c_th(s, y)?);
            if w1 {
                r.c_th_tilde_star = Some(ps_c_th_star(s, y)?);
            }
        }
    }
    for v in [Some(r.c_h), r.h_lip, r.c_th, r.c_th_star, r.c_th_tilde, r.c_th_tilde_star].into_iter().flatten() {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::NonFinite(format!("model constant {v}")));
        }
    }
    Ok(r)
}

/// Evidence `Z_k(prior)` if the prior is admissible for step `k`.
pub fn validate_admissible(s: &SystemSpec, k: usize, prior: &Distribution) -> Result<f64> {
    crate::bayes::evidence(s, k, prior)
}

/// `sup N(y; a m, var)` over `m` in `[lo, hi]`.
fn gaussian_sup_over_means(y: f64, a: f64, var: f64, lo: f64, hi: f64) -> f64 {
    let peak = (2.0 * std::f64::consts::PI * var).sqrt().recip();
    if a == 0.0 {
        return normal_pdf(y, 0.0, var);
    }
    let target = y / a;
    if target >= lo && target <= hi {
        peak
    } else {
        normal_pdf(y, a * lo, var).max(normal_pdf(y, a * hi, var))
    }
}

fn refined(d: &DomainSpec) -> Result<DomainSpec> {
    DomainSpec::new(d.lower(), d.upper(), REFINEMENT_FACTOR * (d.grid_points() - 1) + 1)
}

fn check_refinement(coarse: f64, fine: f64, what: &str) -> Result<()> {
    if fine > REFINEMENT_GROWTH_LIMIT * coarse || !fine.is_finite() {
        return Err(Error::UnboundedConstant(format!("{what}: {coarse:e} grows to {fine:e} under refinement")));
    }
    Ok(())
}

fn grid_max(h: &LikelihoodModel, y: f64, d: &DomainSpec, ws: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for x in d.nodes() {
        for &w in ws {
            m = m.max(h.eval(y, x, w));
        }
    }
    m
}

/// Largest adjacent difference quotient of `x -> h(y, x, w)` over all `w`.
fn grid_lip(h: &LikelihoodModel, y: f64, d: &DomainSpec, ws: &[f64]) -> f64 {
    let dx = d.spacing();
    let mut m: f64 = 0.0;
    for &w in ws {
        let vals: Vec<f64> = d.nodes().into_iter().map(|x| h.eval(y, x, w)).collect();
        for pair in vals.windows(2) {
            m = m.max((pair[1] - pair[0]).abs() / dx);
        }
    }
    m
}

fn sup_likelihood(s: &SystemSpec, y: f64) -> Result<f64> {
    let h = s.likelihood();
    let ws = s.w_nodes();
    let grid = grid_max(h, y, s.domain(), &ws);
    let value = match h.family() {
        LikelihoodFamily::LinearGaussian { a, noise_var } => {
            grid.max(gaussian_sup_over_means(y, a, noise_var, s.domain().lower(), s.domain().upper()))
        }
        LikelihoodFamily::Custom => {
            let fine = grid_max(h, y, &refined(s.domain())?, &ws);
            check_refinement(grid, fine, "sup of the likelihood")?;
            grid
        }
    };
    if let Some(decl) = h.declared_sup {
        if grid > decl * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!("declared sup {decl} below grid maximum {grid}")));
        }
        return Ok(decl.max(value));
    }
    Ok(value)
}

fn likelihood_lip(s: &SystemSpec, y: f64) -> Result<f64> {
    let h = s.likelihood();
    let d = s.domain();
    let ws = s.w_nodes();
    let grid = grid_lip(h, y, d, &ws);
    let value = match h.family() {
        LikelihoodFamily::LinearGaussian { a, noise_var } => grid.max(gaussian_lip_on_domain(y, a, noise_var, d)),
        LikelihoodFamily::Custom => {
            let fine = grid_lip(h, y, &refined(d)?, &ws);
            check_refinement(grid, fine, "Lipschitz constant of the likelihood")?;
            CUSTOM_LIP_SAFETY * grid
        }
    };
    if let Some(decl) = h.declared_lip {
        if grid > decl * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!("declared Lipschitz constant {decl} below grid estimate {grid}")));
        }
        return Ok(decl.max(value));
    }
    Ok(value)
}

/// `sup |d/dx N(y; a x, s)|` over `x` in the domain.
fn gaussian_lip_on_domain(y: f64, a: f64, var: f64, d: &DomainSpec) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let global = a.abs() * E_NEG_HALF / (var * (2.0 * std::f64::consts::PI).sqrt());
    let sd = var.sqrt();
    let peaks = [(y - sd) / a, (y + sd) / a];
    if peaks.iter().any(|&x| d.contains(x)) {
        return global;
    }
    let slope = |x: f64| (normal_pdf(y, a * x, var) * a * (y - a * x) / var).abs();
    slope(d.lower()).max(slope(d.upper()))
}

/// `Gaussian transition + Gaussian likelihood` parameters when both
/// families are linear-Gaussian.
fn linear_pair(s: &SystemSpec) -> Option<(f64, f64, (f64, f64, f64, f64))> {
    match (s.likelihood().family(), s.transition()?.family()) {
        (LikelihoodFamily::LinearGaussian { a, noise_var }, TransitionFamily::LinearGaussian { a: at, q, w_scale, w_shift }) => {
            Some((a, noise_var, (at, q, w_scale, w_shift)))
        }
        _ => None,
    }
}

/// `∫_domain N(y; a x, s) dx`.
fn likelihood_mass(y: f64, a: f64, var: f64, d: &DomainSpec) -> f64 {
    if a == 0.0 {
        return normal_pdf(y, 0.0, var) * d.diameter();
    }
    let sd = var.sqrt();
    let (u1, u2) = ((a * d.lower() - y) / sd, (a * d.upper() - y) / sd);
    (norm_cdf(u1.max(u2)) - norm_cdf(u1.min(u2))) / a.abs()
}

fn se_c_th(s: &SystemSpec, y: f64) -> Result<f64> {
    let grid = s.g_values(y)?.into_iter().fold(0.0, f64::max);
    let closed = match linear_pair(s) {
        Some((ah, sv, (at, q, _, _))) => {
            let d = s.domain();
            let (lo, hi) = ((at * d.lower()).min(at * d.upper()), (at * d.lower()).max(at * d.upper()));
            gaussian_sup_over_means(y, ah, sv + ah * ah * q, lo, hi)
        }
        None => 0.0,
    };
    Ok(grid.max(closed))
}

fn se_c_th_star(s: &SystemSpec, y: f64) -> Result<f64> {
    let d = s.domain();
    let n = d.grid_points();
    let dx = d.spacing();
    let k = s.kernel(0)?;
    let h = s.h_values(y, 0.0);
    let wts = d.weights();
    let row_lip: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &k[i * n..(i + 1) * n];
            row.windows(2).map(|p| (p[1] - p[0]).abs() / dx).fold(0.0, f64::max)
        })
        .collect();
    let grid: f64 = (0..n).map(|i| wts[i] * h[i] * row_lip[i]).sum();
    let custom = s.likelihood().is_custom() || matches!(s.transition().map(|t| t.family()), Some(TransitionFamily::Custom));
    let closed = match linear_pair(s) {
        Some((ah, sv, (at, q, _, _))) => {
            at.abs() * E_NEG_HALF / (q * (2.0 * std::f64::consts::PI).sqrt()) * likelihood_mass(y, ah, sv, d)
        }
        None => 0.0,
    };
    Ok(if custom { CUSTOM_LIP_SAFETY * grid } else { grid.max(closed) })
}

fn ps_c_th(s: &SystemSpec, y: f64) -> Result<f64> {
    let grid = s.g_values(y)?.into_iter().fold(0.0, f64::max);
    let closed = match linear_pair(s) {
        Some((ah, sv, (at, q, ws, wsh))) => {
            let (lo, hi) = bilinear_mean_range(s, at, ws, wsh);
            gaussian_sup_over_means(y, ah, sv + ah * ah * q, lo, hi)
        }
        None => 0.0,
    };
    Ok(grid.max(closed))
}

/// Range of `(a + ws w) x + wsh w` over the domain rectangle (attained at
/// the corners, the map being bilinear).
fn bilinear_mean_range(s: &SystemSpec, a: f64, ws: f64, wsh: f64) -> (f64, f64) {
    let (d, wd) = (s.domain(), s.w_domain().expect("parameter domain"));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in [d.lower(), d.upper()] {
        for w in [wd.lower(), wd.upper()] {
            let m = (a + ws * w) * x + wsh * w;
            lo = lo.min(m);
            hi = hi.max(m);
        }
    }
    (lo, hi)
}

fn ps_c_th_star(s: &SystemSpec, y: f64) -> Result<f64> {
    let d = s.domain();
    let wd = *s.w_domain().expect("parameter domain");
    let n = d.grid_points();
    let (dx, dw) = (d.spacing(), wd.spacing());
    let ws = s.w_nodes();
    let nw = ws.len();
    let hs: Vec<Vec<f64>> = ws.iter().map(|&w| s.h_values(y, w)).collect();
    let ks = (0..nw).map(|iw| s.kernel(iw)).collect::<Result<Vec<_>>>()?;
    // f(i; j, iw) = h(x_i, w) K_w[i, j]; with the L1 metric on (x', w) the
    // grid Lipschitz constant is the largest axis-adjacent quotient.
    let row_lip: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let f = |j: usize, iw: usize| hs[iw][i] * ks[iw][i * n + j];
            let mut m: f64 = 0.0;
            for iw in 0..nw {
                for j in 0..n {
                    let v = f(j, iw);
                    if j + 1 < n {
                        m = m.max((f(j + 1, iw) - v).abs() / dx);
                    }
                    if iw + 1 < nw {
                        m = m.max((f(j, iw + 1) - v).abs() / dw);
                    }
                }
            }
            m
        })
        .collect();
    let wts = d.weights();
    let grid: f64 = (0..n).map(|i| wts[i] * row_lip[i]).sum();
    let custom = s.likelihood().is_custom() || matches!(s.transition().map(|t| t.family()), Some(TransitionFamily::Custom));
    let closed = match linear_pair(s) {
        Some((ah, sv, (at, q, wsc, wsh))) => {
            let slope_x = (at + wsc * wd.lower()).abs().max((at + wsc * wd.upper()).abs());
            let slope_w = (wsc * d.lower() + wsh).abs().max((wsc * d.upper() + wsh).abs());
            E_NEG_HALF / (q * (2.0 * std::f64::consts::PI).sqrt()) * slope_x.max(slope_w) * likelihood_mass(y, ah, sv, d)
        }
        None => 0.0,
    };
    Ok(if custom { CUSTOM_LIP_SAFETY * grid } else { grid.max(closed) })
}
