//! Randomized soundness search for the reduction conditions.
//!
//! Each trial draws a length scale `L` log-uniformly in `[0.1, 10]` and
//! builds everything relative to it: domain `[-12 L, 12 L]`, prior means in
//! `[-2.5 L, 2.5 L]`, prior standard deviations up to `1.2 L`. The reduction
//! conditions are stated against the grid measure, so varying `L` varies
//! how the conditions weigh the likelihood.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::domains::{DomainSpec, Distribution, Gaussian1D};
use crate::error::{Error, Result};
use crate::models::{LikelihoodModel, ProblemKind, SystemSpec, TransitionModel};
use crate::reduction::{check, ReductionTheorem, ReductionVerdict};

pub const FUZZ_GRID_POINTS: usize = 241;
/// Post distance may exceed the prior distance by this much before a
/// guaranteed verdict counts as a counterexample.
pub const SOUNDNESS_SLACK: f64 = 1e-8;

/// A fully specified fuzz instance; enough to rebuild it as a fixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzTrial {
    pub kind: ProblemKind,
    pub length_scale: f64,
    pub obs_a: f64,
    pub obs_var: f64,
    /// Transition `N(trans_a x', trans_var)`; unused for inverse problems.
    pub trans_a: f64,
    pub trans_var: f64,
    pub y: f64,
    pub p: (f64, f64),
    pub q: (f64, f64),
    pub grid_points: usize,
}

impl FuzzTrial {
    pub fn system(&self) -> Result<SystemSpec> {
        let l = self.length_scale;
        let d = DomainSpec::new(-12.0 * l, 12.0 * l, self.grid_points)?;
        let h = LikelihoodModel::linear_gaussian(self.obs_a, self.obs_var)?;
        match self.kind {
            ProblemKind::Ip => SystemSpec::inverse(h, d, vec![self.y]),
            ProblemKind::Se => {
                SystemSpec::state_estimation(TransitionModel::linear_gaussian(self.trans_a, self.trans_var)?, h, d, vec![self.y])
            }
            ProblemKind::Ps => Err(Error::UnsupportedRepresentation("fuzzing covers 1-D systems".into())),
        }
    }

    pub fn priors(&self) -> Result<(Distribution, Distribution)> {
        Ok((Gaussian1D::new(self.p.0, self.p.1)?.into(), Gaussian1D::new(self.q.0, self.q.1)?.into()))
    }

    pub fn check(&self, theorem: ReductionTheorem) -> Result<ReductionVerdict> {
        let s = self.system()?;
        let (p, q) = self.priors()?;
        check(&s, 1, &p, &q, theorem)
    }

    /// Draws an instance suitable for `theorem`.
    pub fn draw(theorem: ReductionTheorem, rng: &mut impl Rng) -> Self {
        let kind = match theorem {
            ReductionTheorem::W1Ip => ProblemKind::Ip,
            ReductionTheorem::W1Dyn => ProblemKind::Se,
            _ => {
                if rng.random_bool(0.5) {
                    ProblemKind::Ip
                } else {
                    ProblemKind::Se
                }
            }
        };
        let l = 10f64.powf(rng.random_range(-1.0..=1.0));
        let prior = |rng: &mut dyn rand::RngCore| {
            let m = rng.random_range(-2.5..=2.5) * l;
            let sd = rng.random_range(0.05..=1.2) * l;
            (m, sd * sd)
        };
        let p = prior(rng);
        // Narrow pairs sharing a centre are where certificates tend to live.
        let q = if rng.random_bool(0.25) {
            let sd = rng.random_range(0.05..=0.6) * l;
            (p.0 + rng.random_range(-0.3..=0.3) * l, sd * sd)
        } else {
            prior(rng)
        };
        let obs_a = rng.random_range(0.3..=2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let obs_sd = 10f64.powf(rng.random_range(-1.0..=0.7)) * l;
        let trans_a = rng.random_range(-1.0..=1.0);
        let trans_sd = rng.random_range(0.05..=0.8) * l;
        let y = obs_a * rng.random_range(-2.5..=2.5) * l + obs_sd * rng.random_range(-1.0..=1.0);
        Self {
            kind,
            length_scale: l,
            obs_a,
            obs_var: obs_sd * obs_sd,
            trans_a,
            trans_var: trans_sd * trans_sd,
            y,
            p,
            q,
            grid_points: FUZZ_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzCase {
    pub index: usize,
    pub trial: FuzzTrial,
    pub verdict: ReductionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub theorem: ReductionTheorem,
    pub seed: u64,
    /// Trials that produced a verdict.
    pub trials: usize,
    /// Draws rejected by the model (for example an inadmissible prior).
    pub skipped: usize,
    pub guaranteed: usize,
    /// Guaranteed verdicts per sufficient-condition set. Hellinger has two
    /// sets (`er.h.1`, `er.h.2`) and a verdict may satisfy both.
    pub routes: BTreeMap<String, usize>,
    /// Guaranteed verdicts whose measured distances increased.
    pub violations: usize,
    pub counterexamples: Vec<FuzzCase>,
    /// Up to five guaranteed instances, in trial order.
    pub certificates: Vec<FuzzCase>,
}

/// Runs trials until `trials` verdicts are collected (at most `4 * trials`
/// draws). Trial `i` uses stream `i` of `seed`, so the report does not depend
/// on the thread count.
pub fn reduction_fuzz(theorem: ReductionTheorem, trials: usize, seed: u64) -> Result<FuzzReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let mut report = FuzzReport {
        theorem,
        seed,
        trials: 0,
        skipped: 0,
        guaranteed: 0,
        routes: BTreeMap::new(),
        violations: 0,
        counterexamples: vec![],
        certificates: vec![],
    };
    let mut next = 0usize;
    while report.trials < trials && next < 4 * trials {
        let batch = (trials - report.trials).min(4 * trials - next);
        let results: Vec<(usize, FuzzTrial, Result<ReductionVerdict>)> = (next..next + batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
                let t = FuzzTrial::draw(theorem, &mut rng);
                (i, t, t.check(theorem))
            })
            .collect();
        next += batch;
        for (index, trial, res) in results {
            if report.trials == trials {
                break;
            }
            match res {
                Ok(verdict) => {
                    report.trials += 1;
                    if verdict.guaranteed {
                        report.guaranteed += 1;
                        for r in routes(theorem, &verdict) {
                            *report.routes.entry(r).or_default() += 1;
                        }
                        let case = FuzzCase { index, trial, verdict };
                        if case.verdict.measured_post_dist > case.verdict.measured_prior_dist + SOUNDNESS_SLACK {
                            report.violations += 1;
                            report.counterexamples.push(case.clone());
                        }
                        if report.certificates.len() < 5 {
                            report.certificates.push(case);
                        }
                    }
                }
                Err(e) if e.is_numerical() || matches!(e, Error::InvalidParameter(_)) => report.skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}

/// Condition sets that hold in full for a guaranteed verdict.
pub fn routes(theorem: ReductionTheorem, v: &ReductionVerdict) -> Vec<String> {
    match theorem {
        ReductionTheorem::Hellinger => ["er.h.1", "er.h.2"]
            .into_iter()
            .filter(|p| v.conditions.iter().filter(|c| c.name.starts_with(p)).all(|c| c.holds))
            .map(String::from)
            .collect(),
        t => vec![t.as_str().to_string()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuzz_is_deterministic_and_sized() {
        let a = reduction_fuzz(ReductionTheorem::Tv, 30, 2).unwrap();
        let b = reduction_fuzz(ReductionTheorem::Tv, 30, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 30);
        assert_eq!(a.violations, 0);
        assert_eq!(a.routes.values().sum::<usize>(), a.guaranteed);
    }

    #[test]
    fn drawn_instances_fit_the_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in ReductionTheorem::ALL {
            let f = FuzzTrial::draw(t, &mut rng);
            let l = f.length_scale;
            assert!(f.p.0.abs() <= 2.5 * l && f.p.1.sqrt() <= 1.2 * l);
        }
    }
}
