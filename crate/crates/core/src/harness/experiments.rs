use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{derive_seed, DomainOverride, RunRecord, RunRow};
use crate::bayes::{conjugate_update_ip, draw_particles, gaussian_projection_step, grid_update, particle_step};
use crate::bounds::{recursion_set1, recursion_set2, step_bound_symmetric};
use crate::domains::{discretize, DomainSpec, Distribution, Gaussian1D};
use crate::error::{Error, Result};
use crate::metrics::{self, gaussian_hellinger, gaussian_tv, MetricKind};
use crate::models::{system_constants, LikelihoodModel, SystemSpec, TransitionModel};
use crate::onlinevi::PsToy;
use crate::special::normal_pdf;

/// Observation model of the illustrative example: `y = 1.1 x + N(0, 3)`.
pub const EXAMPLE_A: f64 = 1.1;
pub const EXAMPLE_NOISE_VAR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    GaussProj,
    Particle,
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    Ok(())
}

fn gaussian(d: &Distribution) -> Gaussian1D {
    match d {
        Distribution::Gaussian(g) => *g,
        _ => unreachable!("conjugate update returns a Gaussian"),
    }
}

/// Prior pair of a reproduction case; case 3 draws it from the seed.
pub fn case_priors(case: u8, rng: &mut impl Rng) -> Result<(Gaussian1D, Gaussian1D)> {
    match case {
        1 => Ok((Gaussian1D::new(-10.0, 5.0)?, Gaussian1D::new(8.0, 5.0)?)),
        2 => Ok((Gaussian1D::new(0.0, 1.0)?, Gaussian1D::new(2.0, 1.0)?)),
        3 => {
            let mut draw = || -> Result<Gaussian1D> {
                let m = rng.random_range(-10.0..=10.0);
                let v: f64 = rng.random_range(0.0..=5.0);
                Gaussian1D::new(m, v.max(1e-3))
            };
            let p = draw()?;
            Ok((p, draw()?))
        }
        c => Err(Error::Config(format!("case must be 1, 2 or 3, got {c}"))),
    }
}

/// Two conjugate posterior sequences driven by the same single observation,
/// with the symmetric one-step bounds for TV and Hellinger.
pub fn reproduce(case: u8, steps: usize, seed: u64) -> Result<RunRecord> {
    check_steps(steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut p, mut q) = case_priors(case, &mut rng)?;
    let (p0, q0) = (p, q);
    let x_true = Normal::new(p.mean(), p.std_dev()).expect("valid normal").sample(&mut rng);
    let noise: f64 = Normal::new(0.0, EXAMPLE_NOISE_VAR.sqrt()).expect("valid normal").sample(&mut rng);
    let y = EXAMPLE_A * x_true + noise;

    // Domain only serves the sup of the likelihood; it contains y / a.
    let half = 100.0f64.max(2.0 * (y / EXAMPLE_A).abs());
    let d = DomainSpec::new(-half, half, 2001)?;
    let s = SystemSpec::inverse(LikelihoodModel::linear_gaussian(EXAMPLE_A, EXAMPLE_NOISE_VAR)?, d, vec![y])?;
    let c = system_constants(&s, 1, MetricKind::Tv)?;

    let series = format!("case{case}");
    let mut rows = Vec::with_capacity(2 * steps);
    for k in 1..=steps {
        let up = conjugate_update_ip(&p, EXAMPLE_A, EXAMPLE_NOISE_VAR, y)?;
        let uq = conjugate_update_ip(&q, EXAMPLE_A, EXAMPLE_NOISE_VAR, y)?;
        let (np, nq) = (gaussian(&up.posterior), gaussian(&uq.posterior));
        for (metric, dist) in [(MetricKind::Tv, gaussian_tv as fn(&Gaussian1D, &Gaussian1D) -> f64), (MetricKind::Hellinger, gaussian_hellinger)] {
            let prior_dist = dist(&p, &q);
            rows.push(RunRow {
                series: series.clone(),
                step: k,
                metric,
                distance: dist(&np, &nq),
                bound: step_bound_symmetric(metric, &c, up.evidence, uq.evidence, prior_dist)?,
                evidence_p: up.evidence,
                evidence_q: uq.evidence,
            });
        }
        p = np;
        q = nq;
    }
    rows.sort_by_key(|r| (r.metric as u8, r.step));
    let meta = json!({
        "case": case,
        "seed": seed,
        "steps": steps,
        "y": y,
        "x_true": x_true,
        "prior_p": {"mean": p0.mean(), "variance": p0.variance()},
        "prior_q": {"mean": q0.mean(), "variance": q0.variance()},
        "c_h": c.c_h,
    });
    Ok(RunRecord::new(&format!("reproduce_case{case}"), rows, meta))
}

/// Bimodal observation model `y = x +/- delta + N(0, s)`.
pub fn bimodal_system(delta: f64, noise_var: f64, d: DomainSpec, data: Vec<f64>) -> Result<SystemSpec> {
    let h = LikelihoodModel::custom(move |y, x, _| {
        0.5 * (normal_pdf(y, x - delta, noise_var) + normal_pdf(y, x + delta, noise_var))
    });
    SystemSpec::inverse(h, d, data)
}

/// Exact grid sequence against the assumed-density filter, TV and Hellinger.
pub fn gauss_proj_run(s: &SystemSpec, prior: Gaussian1D) -> Result<RunRecord> {
    let d = *s.domain();
    let mut p: Distribution = discretize(&prior, &d)?.into();
    let mut q = prior;
    let (mut zp, mut zq) = (vec![], vec![]);
    let (mut eps_tv, mut eps_h) = (vec![], vec![]);
    let (mut dist_tv, mut dist_h) = (vec![], vec![]);
    for k in 1..=s.steps() {
        let exact = grid_update(s, k, &p)?;
        let step = gaussian_projection_step(s, k, &q)?;
        zp.push(exact.evidence);
        zq.push(step.exact.evidence);
        eps_tv.push(step.incremental_error.tv);
        eps_h.push(step.incremental_error.hellinger);
        p = exact.posterior;
        q = step.approx;
        let qd: Distribution = discretize(&q, &d)?.into();
        dist_tv.push(metrics::tv(&p, &qd, &d)?.value);
        dist_h.push(metrics::hellinger(&p, &qd, &d)?.value);
    }
    let mut rows = Vec::new();
    for (metric, eps, dist) in [(MetricKind::Tv, &eps_tv, &dist_tv), (MetricKind::Hellinger, &eps_h, &dist_h)] {
        let set1 = recursion_set1(metric, s, &zp, eps, 1)?;
        let set2 = recursion_set2(metric, s, &zq, eps, 1)?;
        push_ledger_rows(&mut rows, "set1", metric, dist, &set1.bounds(), &zp, &zq);
        push_ledger_rows(&mut rows, "set2", metric, dist, &set2.bounds(), &zp, &zq);
    }
    let meta = json!({
        "filter": "gauss_proj",
        "data": s.data(),
        "prior": {"mean": prior.mean(), "variance": prior.variance()},
        "domain": {"lower": d.lower(), "upper": d.upper(), "grid_points": d.grid_points()},
        "incremental_error_tv": eps_tv,
        "incremental_error_hellinger": eps_h,
    });
    Ok(RunRecord::new("bound_validate_gauss_proj", rows, meta))
}

/// Exact grid sequence against a bootstrap particle filter, in W1.
pub fn particle_run(s: &SystemSpec, prior: Gaussian1D, n: usize, seed: u64) -> Result<RunRecord> {
    let d = *s.domain();
    let mut p: Distribution = discretize(&prior, &d)?.into();
    let mut q = draw_particles(&prior, n, derive_seed(seed, 0))?;
    let (mut zp, mut zq, mut eps, mut dist) = (vec![], vec![], vec![], vec![]);
    for k in 1..=s.steps() {
        // Q_0 = P_0; from step 2 on the prior of the step is the particle set.
        let q_prev: Distribution = if k == 1 { p.clone() } else { q.clone().into() };
        let exact = grid_update(s, k, &p)?;
        let star = grid_update(s, k, &q_prev)?;
        q = particle_step(s, k, &q, n, derive_seed(seed, k as u64))?;
        let qd: Distribution = q.clone().into();
        zp.push(exact.evidence);
        zq.push(star.evidence);
        eps.push(metrics::w1(&star.posterior, &qd, &d)?.value);
        p = exact.posterior;
        dist.push(metrics::w1(&p, &qd, &d)?.value);
    }
    let set1 = recursion_set1(MetricKind::W1, s, &zp, &eps, 1)?;
    let set2 = recursion_set2(MetricKind::W1, s, &zq, &eps, 1)?;
    let mut rows = Vec::new();
    push_ledger_rows(&mut rows, "set1", MetricKind::W1, &dist, &set1.bounds(), &zp, &zq);
    push_ledger_rows(&mut rows, "set2", MetricKind::W1, &dist, &set2.bounds(), &zp, &zq);
    let meta = json!({
        "filter": "particle",
        "particles": n,
        "seed": seed,
        "data": s.data(),
        "prior": {"mean": prior.mean(), "variance": prior.variance()},
        "domain": {"lower": d.lower(), "upper": d.upper(), "grid_points": d.grid_points()},
        "incremental_error_w1": eps,
    });
    Ok(RunRecord::new("bound_validate_particle", rows, meta))
}

fn push_ledger_rows(
    rows: &mut Vec<RunRow>,
    series: &str,
    metric: MetricKind,
    dist: &[f64],
    bounds: &[f64],
    zp: &[f64],
    zq: &[f64],
) {
    for i in 0..dist.len() {
        rows.push(RunRow {
            series: series.to_string(),
            step: i + 1,
            metric,
            distance: dist[i],
            bound: bounds[i],
            evidence_p: zp[i],
            evidence_q: zq[i],
        });
    }
}

pub const BIMODAL_DELTA: f64 = 2.0;
pub const BIMODAL_NOISE_VAR: f64 = 0.5;
pub const DEFAULT_PARTICLES: usize = 2000;

/// The two validation systems with seeded synthetic data.
pub fn bound_validate(
    filter: Filter,
    steps: usize,
    seed: u64,
    domain: Option<&DomainOverride>,
    particles: Option<usize>,
) -> Result<RunRecord> {
    check_steps(steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    match filter {
        Filter::GaussProj => {
            let d = match domain {
                Some(o) => o.to_domain()?,
                None => DomainSpec::new(-20.0, 20.0, 801)?,
            };
            let prior = Gaussian1D::new(0.0, 4.0)?;
            let x_true = 2.0 * std_normal.sample(&mut rng);
            let data = (0..steps)
                .map(|_| {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    x_true + sign * BIMODAL_DELTA + BIMODAL_NOISE_VAR.sqrt() * std_normal.sample(&mut rng)
                })
                .collect();
            let s = bimodal_system(BIMODAL_DELTA, BIMODAL_NOISE_VAR, d, data)?;
            let mut r = gauss_proj_run(&s, prior)?;
            r.metadata["seed"] = json!(seed);
            r.metadata["x_true"] = json!(x_true);
            Ok(r)
        }
        Filter::Particle => {
            let d = match domain {
                Some(o) => o.to_domain()?,
                None => DomainSpec::new(-20.0, 20.0, 1601)?,
            };
            let n = particles.unwrap_or(DEFAULT_PARTICLES);
            let prior = Gaussian1D::new(0.0, 1.0)?;
            let mut x = std_normal.sample(&mut rng);
            let data = (0..steps)
                .map(|_| {
                    x = 0.9 * x + std_normal.sample(&mut rng);
                    x + std_normal.sample(&mut rng)
                })
                .collect();
            let s = SystemSpec::state_estimation(
                TransitionModel::linear_gaussian(0.9, 1.0)?,
                LikelihoodModel::linear_gaussian(1.0, 1.0)?,
                d,
                data,
            )?;
            particle_run(&s, prior, n, seed)
        }
    }
}

/// Moment-matched Gaussian VI on the parameter-state toy, TV only.
pub fn vi_demo(steps: usize, seed: u64) -> Result<RunRecord> {
    check_steps(steps)?;
    let toy = PsToy { steps, ..PsToy::default() };
    let out = toy.run(seed)?;
    let rows = out
        .iter()
        .map(|r| RunRow {
            series: "vi".into(),
            step: r.step,
            metric: MetricKind::Tv,
            distance: r.distance,
            bound: r.bound,
            evidence_p: r.evidence_exact,
            evidence_q: r.evidence,
        })
        .collect();
    let meta = json!({
        "seed": seed,
        "toy": toy,
        "elbo": out.iter().map(|r| r.elbo).collect::<Vec<_>>(),
        "elbo_std_error": out.iter().map(|r| r.elbo_std_error).collect::<Vec<_>>(),
    });
    Ok(RunRecord::new("vi_demo", rows, meta))
}
