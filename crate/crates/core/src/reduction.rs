//! Sufficient conditions for one-step error reduction,
//! `d(P_k, Q_k*) <= d(P_{k-1}, Q_{k-1})`, evaluated on the grid, together
//! with the two distances they are meant to order.
//!
//! The reference measure `nu` is the grid measure (trapezoid weights), so
//! densities with respect to `nu` are the node values. The conditions are
//! existential in `nu`; a NOT guaranteed verdict only says this witness
//! fails, never that reduction fails.

use serde::{Deserialize, Serialize};

use crate::bayes::{grid_update, predict};
use crate::domains::Distribution;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricKind};
use crate::models::{ProblemKind, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionTheorem {
    Tv,
    Hellinger,
    W1Ip,
    W1Dyn,
}

impl ReductionTheorem {
    pub const ALL: [ReductionTheorem; 4] =
        [ReductionTheorem::Tv, ReductionTheorem::Hellinger, ReductionTheorem::W1Ip, ReductionTheorem::W1Dyn];

    pub fn metric(&self) -> MetricKind {
        match self {
            ReductionTheorem::Tv => MetricKind::Tv,
            ReductionTheorem::Hellinger => MetricKind::Hellinger,
            ReductionTheorem::W1Ip | ReductionTheorem::W1Dyn => MetricKind::W1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ReductionTheorem::Tv => "tv",
            ReductionTheorem::Hellinger => "hellinger",
            ReductionTheorem::W1Ip => "w1-ip",
            ReductionTheorem::W1Dyn => "w1-dyn",
        }
    }
}

impl std::str::FromStr for ReductionTheorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReductionTheorem::ALL
            .into_iter()
            .find(|t| t.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown theorem '{s}'")))
    }
}

/// One inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Condition {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, holds: lhs <= rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionVerdict {
    pub theorem: ReductionTheorem,
    pub conditions: Vec<Condition>,
    pub guaranteed: bool,
    pub evidence_p: f64,
    pub evidence_q: f64,
    pub measured_prior_dist: f64,
    pub measured_post_dist: f64,
}

/// TV conditions for densities `p`, `q` with respect to a discrete `nu`.
pub fn tv_conditions(nu: &[f64], g: &[f64], p: &[f64], q: &[f64]) -> Vec<Condition> {
    let zp = dot3(nu, g, p);
    let zq = dot3(nu, g, q);
    let in_star = |i: usize| if zp >= zq { p[i] >= q[i] } else { p[i] <= q[i] };
    let (mut g_abs, mut g_mass, mut abs_mass) = (0.0, 0.0, 0.0);
    for i in 0..nu.len() {
        if in_star(i) {
            let diff = (p[i] - q[i]).abs();
            g_abs += nu[i] * g[i] * diff;
            g_mass += nu[i] * g[i];
            abs_mass += nu[i] * diff;
        }
    }
    vec![Condition::new("tv.weighted", g_abs, g_mass * abs_mass), Condition::new("tv.mass", g_mass, zp.max(zq))]
}

/// The two Hellinger alternatives; reduction is guaranteed if every
/// condition of either list holds.
pub fn hellinger_conditions(nu: &[f64], g: &[f64], p: &[f64], q: &[f64]) -> (Vec<Condition>, Vec<Condition>) {
    let zp = dot3(nu, g, p);
    let zq = dot3(nu, g, q);
    let g_mass: f64 = nu.iter().zip(g).map(|(n, g)| n * g).sum();
    let (mut g_bc, mut bc, mut g_sq, mut sq) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..nu.len() {
        let root = (p[i] * q[i]).sqrt();
        let gap = (p[i].sqrt() - q[i].sqrt()).powi(2);
        g_bc += nu[i] * g[i] * root;
        bc += nu[i] * root;
        g_sq += nu[i] * g[i] * gap;
        sq += nu[i] * gap;
    }
    let geo = (zp * zq).sqrt();
    let er1 = vec![Condition::new("er.h.1.weighted", g_mass * bc, g_bc), Condition::new("er.h.1.mass", geo, g_mass)];
    let er2 = vec![Condition::new("er.h.2.weighted", g_sq, g_mass * sq), Condition::new("er.h.2.mass", g_mass, geo)];
    (er1, er2)
}

fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((a, b), c)| a * b * c).sum()
}

/// `(nu, p, q)` on the grid of the system, with `nu` the trapezoid weights.
fn grid_densities(s: &SystemSpec, p: &Distribution, q: &Distribution) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    match s.kind() {
        ProblemKind::Ps => match (p, q) {
            (Distribution::Joint(a), Distribution::Joint(b)) => {
                if a.x_domain() != b.x_domain() || a.w_domain() != b.w_domain() {
                    return Err(Error::DomainMismatch);
                }
                Ok((a.weights(), a.values().to_vec(), b.values().to_vec()))
            }
            _ => Err(Error::UnsupportedRepresentation("parameter-state priors must be joint grids".into())),
        },
        _ => {
            let d = s.domain();
            let (a, b) = (p.to_grid(d)?, q.to_grid(d)?);
            Ok((d.weights(), a.values().to_vec(), b.values().to_vec()))
        }
    }
}

fn measured(
    s: &SystemSpec,
    k: usize,
    metric: MetricKind,
    p: &Distribution,
    q: &Distribution,
) -> Result<(f64, f64)> {
    let d = s.domain();
    let prior = metrics::distance(metric, p, q, d)?.value;
    let pp = grid_update(s, k, p)?.posterior;
    let qq = grid_update(s, k, q)?.posterior;
    let post = metrics::distance(metric, &pp, &qq, d)?.value;
    Ok((prior, post))
}

pub fn check_tv(s: &SystemSpec, k: usize, p_prev: &Distribution, q_prev: &Distribution) -> Result<ReductionVerdict> {
    let (nu, p, q) = grid_densities(s, p_prev, q_prev)?;
    let g = s.g_values(s.y(k)?)?;
    let conditions = tv_conditions(&nu, &g, &p, &q);
    let guaranteed = conditions.iter().all(|c| c.holds);
    let (prior, post) = measured(s, k, MetricKind::Tv, p_prev, q_prev)?;
    Ok(ReductionVerdict {
        theorem: ReductionTheorem::Tv,
        guaranteed,
        evidence_p: dot3(&nu, &g, &p),
        evidence_q: dot3(&nu, &g, &q),
        conditions,
        measured_prior_dist: prior,
        measured_post_dist: post,
    })
}

pub fn check_hellinger(
    s: &SystemSpec,
    k: usize,
    p_prev: &Distribution,
    q_prev: &Distribution,
) -> Result<ReductionVerdict> {
    let (nu, p, q) = grid_densities(s, p_prev, q_prev)?;
    let g = s.g_values(s.y(k)?)?;
    let (er1, er2) = hellinger_conditions(&nu, &g, &p, &q);
    let guaranteed = er1.iter().all(|c| c.holds) || er2.iter().all(|c| c.holds);
    let (prior, post) = measured(s, k, MetricKind::Hellinger, p_prev, q_prev)?;
    Ok(ReductionVerdict {
        theorem: ReductionTheorem::Hellinger,
        guaranteed,
        evidence_p: dot3(&nu, &g, &p),
        evidence_q: dot3(&nu, &g, &q),
        conditions: er1.into_iter().chain(er2).collect(),
        measured_prior_dist: prior,
        measured_post_dist: post,
    })
}

/// `f_i = sum_j b_j |x_i - x_j|` for sorted `xs`, by prefix sums.
fn abs_moment(xs: &[f64], b: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let total_b: f64 = b.iter().sum();
    let total_xb: f64 = xs.iter().zip(b).map(|(x, b)| x * b).sum();
    let (mut below_b, mut below_xb) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        below_b += b[i];
        below_xb += xs[i] * b[i];
        let above_b = total_b - below_b;
        let above_xb = total_xb - below_xb;
        out.push(xs[i] * below_b - below_xb + above_xb - xs[i] * above_b);
    }
    out
}

/// `sup_{x0} |E_P |X - x0| - E_Q |X - x0||` over the nodes, which is where
/// the supremum of this piecewise-linear function is attained.
fn sup_abs_moment_gap(xs: &[f64], mp: &[f64], mq: &[f64]) -> f64 {
    let fp = abs_moment(xs, mp);
    let fq = abs_moment(xs, mq);
    fp.iter().zip(&fq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `E_{P x Q}[|X - X'| a(X) a(X')]` for node masses `mp`, `mq`.
fn product_expectation(xs: &[f64], mp: &[f64], mq: &[f64], a: &[f64]) -> f64 {
    let bq: Vec<f64> = mq.iter().zip(a).map(|(m, a)| m * a).collect();
    let f = abs_moment(xs, &bq);
    mp.iter().zip(a).zip(&f).map(|((m, a), f)| m * a * f).sum()
}

pub fn check_w1(
    s: &SystemSpec,
    k: usize,
    p_prev: &Distribution,
    q_prev: &Distribution,
    theorem: ReductionTheorem,
) -> Result<ReductionVerdict> {
    let d = s.domain();
    let xs = d.nodes();
    let y = s.y(k)?;
    let h = s.h_values(y, 0.0);
    let masses = |g: &Distribution| -> Result<Vec<f64>> { Ok(g.to_grid(d)?.atom_masses()) };
    let (mp, mq) = (masses(p_prev)?, masses(q_prev)?);
    let sup_gap = sup_abs_moment_gap(&xs, &mp, &mq);
    let (conditions, zp, zq) = match (theorem, s.kind()) {
        (ReductionTheorem::W1Ip, ProblemKind::Ip) => {
            let zp: f64 = mp.iter().zip(&h).map(|(m, h)| m * h).sum();
            let zq: f64 = mq.iter().zip(&h).map(|(m, h)| m * h).sum();
            let e = product_expectation(&xs, &mp, &mq, &h);
            (vec![Condition::new("w1.ip", e / (zp * zq), sup_gap)], zp, zq)
        }
        (ReductionTheorem::W1Dyn, ProblemKind::Se) => {
            let pm = predict(s, p_prev)?.to_grid(d)?.atom_masses();
            let qm = predict(s, q_prev)?.to_grid(d)?.atom_masses();
            let ones = vec![1.0; xs.len()];
            let e_d = product_expectation(&xs, &pm, &qm, &ones);
            let e_dhh = product_expectation(&xs, &pm, &qm, &h);
            let h_mass = d.integrate(&h);
            let zp: f64 = pm.iter().zip(&h).map(|(m, h)| m * h).sum();
            let zq: f64 = qm.iter().zip(&h).map(|(m, h)| m * h).sum();
            (
                vec![
                    Condition::new("w1.dyn.weighted", e_dhh, h_mass * h_mass * e_d),
                    Condition::new("w1.dyn.spread", e_d, sup_gap),
                    Condition::new("w1.dyn.mass", h_mass * h_mass, zp * zq),
                ],
                zp,
                zq,
            )
        }
        (ReductionTheorem::W1Dyn, ProblemKind::Ps) => {
            return Err(Error::UnsupportedRepresentation(
                "W1 reduction for parameter-state problems needs 2-D optimal transport".into(),
            ))
        }
        (t, kind) => {
            return Err(Error::UnsupportedRepresentation(format!("{} does not apply to {kind:?} systems", t.as_str())))
        }
    };
    let guaranteed = conditions.iter().all(|c| c.holds);
    let (prior, post) = measured(s, k, MetricKind::W1, p_prev, q_prev)?;
    Ok(ReductionVerdict {
        theorem,
        conditions,
        guaranteed,
        evidence_p: zp,
        evidence_q: zq,
        measured_prior_dist: prior,
        measured_post_dist: post,
    })
}

/// Dispatches on the theorem tag.
pub fn check(
    s: &SystemSpec,
    k: usize,
    p_prev: &Distribution,
    q_prev: &Distribution,
    theorem: ReductionTheorem,
) -> Result<ReductionVerdict> {
    match theorem {
        ReductionTheorem::Tv => check_tv(s, k, p_prev, q_prev),
        ReductionTheorem::Hellinger => check_hellinger(s, k, p_prev, q_prev),
        t => check_w1(s, k, p_prev, q_prev, t),
    }
}
