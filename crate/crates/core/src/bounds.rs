//! Step Lipschitz constants of the prior-to-posterior map and the learning
//! error ledgers built from them.
//!
//! Every ledger is the recursion `B_k = K_k B_{k-1} + eps_k`, which unrolls
//! to `sum_j (prod_{i=j+1}^k K_i) eps_j`. The first set of bounds takes
//! `K_i` at the exact-sequence evidence `Z_i(P_{i-1})`, the second at the
//! approximate-sequence evidence `Z_i(Q_{i-1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::models::{system_constants, ConstantsReport, ProblemKind, SystemSpec};
use crate::EVIDENCE_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerVariant {
    /// Evidences of the exact posterior sequence.
    Set1,
    /// Evidences of the approximate posterior sequence.
    Set2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub k: usize,
    pub step_constant: f64,
    pub eps: f64,
    pub cum_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub metric: MetricKind,
    pub variant: LedgerVariant,
    /// Steps before this one are excluded from the sum (1 = full history).
    pub window_start: usize,
    /// Bound carried into step 1 (nonzero only for an inaccurate prior).
    pub initial: f64,
    pub records: Vec<LedgerRecord>,
}

impl BoundLedger {
    /// Builds a ledger from precomputed step constants.
    pub fn from_constants(
        metric: MetricKind,
        variant: LedgerVariant,
        step_constants: &[f64],
        eps: &[f64],
        window_start: usize,
        initial: f64,
    ) -> Result<Self> {
        if step_constants.len() != eps.len() {
            return Err(Error::InvalidParameter(format!(
                "{} step constants for {} incremental errors",
                step_constants.len(),
                eps.len()
            )));
        }
        if window_start == 0 {
            return Err(Error::InvalidParameter("window_start is 1-based".into()));
        }
        for (name, v) in [("step constant", step_constants), ("incremental error", eps)] {
            if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || x.is_nan()) {
                return Err(Error::InvalidParameter(format!("{name} {x} is negative or NaN")));
            }
        }
        if !(initial >= 0.0) {
            return Err(Error::InvalidParameter(format!("initial bound {initial}")));
        }
        let mut records = Vec::with_capacity(eps.len());
        let mut prev = if window_start == 1 { initial } else { 0.0 };
        for (idx, (&kc, &e)) in step_constants.iter().zip(eps).enumerate() {
            let k = idx + 1;
            let cum = if k < window_start { 0.0 } else { advance(kc, prev, e) };
            records.push(LedgerRecord { k, step_constant: kc, eps: e, cum_bound: cum });
            prev = cum;
        }
        Ok(Self { metric, variant, window_start, initial, records })
    }

    pub fn final_bound(&self) -> f64 {
        self.records.last().map_or(self.initial, |r| r.cum_bound)
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cum_bound).collect()
    }

    /// Recomputes every record from its stored `K` and `eps`; true when the
    /// stored cumulative bounds are reproduced bit for bit.
    pub fn replay(&self) -> bool {
        let ks: Vec<f64> = self.records.iter().map(|r| r.step_constant).collect();
        let eps: Vec<f64> = self.records.iter().map(|r| r.eps).collect();
        BoundLedger::from_constants(self.metric, self.variant, &ks, &eps, self.window_start, self.initial)
            .map(|l| l.records == self.records)
            .unwrap_or(false)
    }
}

/// `K * prev + eps`, with `0 * inf = 0` and overflow saturating to `+inf`.
fn advance(k: f64, prev: f64, eps: f64) -> f64 {
    let carried = if prev == 0.0 { 0.0 } else { k * prev };
    let v = carried + eps;
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Step constant `K` for `metric` and the problem variant of `c`, evaluated
/// at evidence `z`.
pub fn step_constant(metric: MetricKind, c: &ConstantsReport, z: f64) -> Result<f64> {
    check_z(z)?;
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::MissingConstant(name.to_string()));
    let numerator = match (metric, c.kind) {
        (MetricKind::Tv | MetricKind::Hellinger, ProblemKind::Ip) => c.c_h,
        (MetricKind::Tv | MetricKind::Hellinger, ProblemKind::Se) => need(c.c_th, "C_Th")?,
        (MetricKind::Tv | MetricKind::Hellinger, ProblemKind::Ps) => need(c.c_th_tilde, "C~_Th")?,
        (MetricKind::W1, ProblemKind::Ip) => 2.0 * c.diameter * need(c.h_lip, "||h||_Lip")? + c.c_h,
        (MetricKind::W1, ProblemKind::Se) => 2.0 * c.diameter * need(c.c_th_star, "C*_Th")?,
        (MetricKind::W1, ProblemKind::Ps) => {
            2.0 * c.diameter * need(c.c_th_tilde_star, "C~*_Th")? + need(c.c_th_tilde, "C~_Th")?
        }
    };
    let ratio = numerator / z;
    Ok(match metric {
        MetricKind::Hellinger => 2.0 * ratio.sqrt(),
        _ => ratio,
    })
}

/// `K(mu; y_k)` for a prior with evidence `z`.
pub fn pointwise_k(s: &SystemSpec, k: usize, metric: MetricKind, z: f64) -> Result<f64> {
    step_constant(metric, &system_constants(s, k, metric)?, z)
}

/// Bound on `d(F mu, F mu')` using the larger of the two evidences.
pub fn step_bound_symmetric(metric: MetricKind, c: &ConstantsReport, z_a: f64, z_b: f64, prior_dist: f64) -> Result<f64> {
    check_z(z_a)?;
    check_z(z_b)?;
    let k = step_constant(metric, c, z_a.max(z_b))?;
    Ok(if prior_dist == 0.0 { 0.0 } else { k * prior_dist })
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

fn step_constants(s: &SystemSpec, metric: MetricKind, evidences: &[f64]) -> Result<Vec<f64>> {
    evidences.iter().enumerate().map(|(i, &z)| pointwise_k(s, i + 1, metric, z)).collect()
}

/// First set of bounds; `exact_evidences[i - 1] = Z_i(P_{i-1})`.
pub fn recursion_set1(
    metric: MetricKind,
    s: &SystemSpec,
    exact_evidences: &[f64],
    eps: &[f64],
    window_start: usize,
) -> Result<BoundLedger> {
    let ks = step_constants(s, metric, exact_evidences)?;
    BoundLedger::from_constants(metric, LedgerVariant::Set1, &ks, eps, window_start, 0.0)
}

/// Second (computable) set of bounds; `approx_evidences[i - 1] = Z_i(Q_{i-1})`.
pub fn recursion_set2(
    metric: MetricKind,
    s: &SystemSpec,
    approx_evidences: &[f64],
    eps: &[f64],
    window_start: usize,
) -> Result<BoundLedger> {
    let ks = step_constants(s, metric, approx_evidences)?;
    BoundLedger::from_constants(metric, LedgerVariant::Set2, &ks, eps, window_start, 0.0)
}

/// `W1 <= D d_TV`.
pub fn tv_to_w1_bound(tv_bound: f64, diameter: f64) -> Result<f64> {
    if !(tv_bound >= 0.0 && diameter >= 0.0) {
        return Err(Error::InvalidParameter("TV bound and diameter must be nonnegative".into()));
    }
    Ok(diameter * tv_bound)
}

/// Learning-error ledger when inference starts from an estimated prior at
/// distance `d0` from the true one.
///
/// The extra term `C(Y_{2:k}, ., 1) C^ d0` is carried by starting the
/// recursion at `B_0 = d0`; `C^` is taken to be the step-1
/// constant, evaluated at `evidences[0]`. The incremental error at step 1 is
/// measured against `F_1` of the estimated prior.
pub fn inaccurate_prior_bound(
    metric: MetricKind,
    s: &SystemSpec,
    variant: LedgerVariant,
    evidences: &[f64],
    eps: &[f64],
    d0: f64,
) -> Result<BoundLedger> {
    if !(d0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("prior error {d0}")));
    }
    let ks = step_constants(s, metric, evidences)?;
    BoundLedger::from_constants(metric, variant, &ks, eps, 1, d0)
}

/// Bound on the distance between two approximate outputs of the same
/// method, both measured against the exact sequence.
pub fn two_output_bound(
    metric: MetricKind,
    s: &SystemSpec,
    eps_a: &[f64],
    eps_b: &[f64],
    exact_evidences: &[f64],
) -> Result<f64> {
    if eps_a.len() != eps_b.len() {
        return Err(Error::InvalidParameter("incremental error sequences differ in length".into()));
    }
    let sum: Vec<f64> = eps_a.iter().zip(eps_b).map(|(a, b)| a + b).collect();
    Ok(recursion_set1(metric, s, exact_evidences, &sum, 1)?.final_bound())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiteratureRatio {
    /// Our TV constant `1 / (Z v Z')`.
    pub ours: f64,
    /// The earlier constant `2 / (Z v Z')`.
    pub literature: f64,
    pub ratio: f64,
}

/// Compares the TV step constant with the one from earlier stability work.
pub fn literature_ratio(z_a: f64, z_b: f64) -> Result<LiteratureRatio> {
    check_z(z_a)?;
    check_z(z_b)?;
    let ours = 1.0 / z_a.max(z_b);
    let literature = 2.0 * ours;
    Ok(LiteratureRatio { ours, literature, ratio: ours / literature })
}
