//! The prior-to-posterior map: exact (conjugate, grid) and approximate
//! (Gaussian projection, bootstrap particle) realizations, and the evidence.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{moments, Distribution, Gaussian1D, GridDensity, JointGrid2D, ParticleSet};
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::{ProblemKind, SystemSpec};
use crate::special::normal_pdf;
use crate::EVIDENCE_FLOOR;

/// Posterior mass allowed on the boundary nodes before the domain is
/// declared too small.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub posterior: Distribution,
    /// `Z_k(prior)`, the mass of the updated measure before normalization.
    pub evidence: f64,
    /// The prior pushed through the transition (SE and PS only).
    pub predicted: Option<Distribution>,
}

/// Closed-form update for `y = a x + eta`, `eta ~ N(0, noise_var)`.
pub fn conjugate_update_ip(prior: &Gaussian1D, a: f64, noise_var: f64, y: f64) -> Result<UpdateResult> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::DegenerateVariance(noise_var));
    }
    let (m, v) = (prior.mean(), prior.variance());
    let var = 1.0 / (1.0 / v + a * a / noise_var);
    let mean = var * (m / v + a * y / noise_var);
    let evidence = normal_pdf(y, a * m, a * a * v + noise_var);
    check_evidence(evidence)?;
    Ok(UpdateResult { posterior: Gaussian1D::new(mean, var)?.into(), evidence, predicted: None })
}

/// `Z_k(prior)`, failing with `ZeroEvidence` when the prior is not
/// admissible for step `k`.
pub fn evidence(s: &SystemSpec, k: usize, prior: &Distribution) -> Result<f64> {
    Ok(unnormalized(s, k, prior)?.evidence)
}

/// Exact update on the grid (or on the particle atoms for an IP particle
/// prior).
pub fn grid_update(s: &SystemSpec, k: usize, prior: &Distribution) -> Result<UpdateResult> {
    let u = unnormalized(s, k, prior)?;
    let posterior = match u.updated {
        Updated::Grid(g) => {
            let g = g.normalize();
            check_boundary(g.boundary_mass())?;
            Distribution::Grid(g)
        }
        Updated::Joint(j) => {
            let j = j.normalize();
            check_boundary(j.boundary_mass())?;
            Distribution::Joint(j)
        }
        Updated::Particles(points, weights) => ParticleSet::from_unnormalized(points, weights)?.into(),
    };
    Ok(UpdateResult { posterior, evidence: u.evidence, predicted: u.predicted })
}

/// Pushes a prior through the transition of an SE or PS system.
pub fn predict(s: &SystemSpec, prior: &Distribution) -> Result<Distribution> {
    match s.kind() {
        ProblemKind::Ip => Err(Error::UnsupportedRepresentation("inverse problems have no transition".into())),
        ProblemKind::Se => predict_1d(s, prior).map(Distribution::Grid),
        ProblemKind::Ps => match prior {
            Distribution::Joint(j) => predict_joint(s, j).map(Distribution::Joint),
            other => Err(Error::UnsupportedRepresentation(format!(
                "parameter-state priors must be joint grids, got {}",
                other.kind_name()
            ))),
        },
    }
}

enum Updated {
    Grid(GridDensity),
    Joint(JointGrid2D),
    Particles(Vec<f64>, Vec<f64>),
}

struct Unnormalized {
    updated: Updated,
    evidence: f64,
    predicted: Option<Distribution>,
}

fn unnormalized(s: &SystemSpec, k: usize, prior: &Distribution) -> Result<Unnormalized> {
    let y = s.y(k)?;
    let d = *s.domain();
    match s.kind() {
        ProblemKind::Ip => {
            if let Distribution::Particles(p) = prior {
                if p.points().iter().any(|x| !d.contains(*x)) {
                    return Err(Error::DomainMismatch);
                }
                let h = s.likelihood();
                let weights: Vec<f64> = p.points().iter().zip(p.weights()).map(|(x, w)| w * h.eval(y, *x, 0.0)).collect();
                let z: f64 = weights.iter().sum();
                check_evidence(z)?;
                return Ok(Unnormalized {
                    updated: Updated::Particles(p.points().to_vec(), weights),
                    evidence: z,
                    predicted: None,
                });
            }
            let g = prior.to_grid(&d)?;
            let (updated, z) = weight_1d(s, y, &g)?;
            Ok(Unnormalized { updated, evidence: z, predicted: None })
        }
        ProblemKind::Se => {
            let pred = predict_1d(s, prior)?;
            let (updated, z) = weight_1d(s, y, &pred)?;
            Ok(Unnormalized { updated, evidence: z, predicted: Some(pred.into()) })
        }
        ProblemKind::Ps => {
            let Distribution::Joint(j) = prior else {
                return Err(Error::UnsupportedRepresentation(format!(
                    "parameter-state priors must be joint grids, got {}",
                    prior.kind_name()
                )));
            };
            let pred = predict_joint(s, j)?;
            let ws = s.w_nodes();
            let nw = ws.len();
            let hs: Vec<Vec<f64>> = ws.iter().map(|&w| s.h_values(y, w)).collect();
            let values: Vec<f64> =
                pred.values().iter().enumerate().map(|(idx, p)| p * hs[idx % nw][idx / nw]).collect();
            let z: f64 = pred.weights().iter().zip(&values).map(|(w, v)| w * v).sum();
            check_evidence(z)?;
            let updated = JointGrid2D::scaled(d, *pred.w_domain(), values)?;
            Ok(Unnormalized { updated: Updated::Joint(updated), evidence: z, predicted: Some(pred.into()) })
        }
    }
}

fn weight_1d(s: &SystemSpec, y: f64, g: &GridDensity) -> Result<(Updated, f64)> {
    let h = s.h_values(y, 0.0);
    let values: Vec<f64> = g.values().iter().zip(&h).map(|(p, h)| p * h).collect();
    let z = g.domain().integrate(&values);
    check_evidence(z)?;
    Ok((Updated::Grid(GridDensity::scaled(*g.domain(), values)?), z))
}

fn predict_1d(s: &SystemSpec, prior: &Distribution) -> Result<GridDensity> {
    let d = *s.domain();
    let n = d.grid_points();
    let values: Vec<f64> = match prior {
        Distribution::Particles(p) => {
            if p.points().iter().any(|x| !d.contains(*x)) {
                return Err(Error::DomainMismatch);
            }
            let cols = p.points().par_iter().map(|&x| s.kernel_column(x, 0.0)).collect::<Result<Vec<_>>>()?;
            let mut acc = vec![0.0; n];
            for (col, w) in cols.iter().zip(p.weights()) {
                for (a, c) in acc.iter_mut().zip(col) {
                    *a += w * c;
                }
            }
            acc
        }
        other => {
            let g = other.to_grid(&d)?;
            let k = s.kernel(0)?;
            let wp: Vec<f64> = d.weights().iter().zip(g.values()).map(|(w, p)| w * p).collect();
            (0..n).into_par_iter().map(|i| k[i * n..(i + 1) * n].iter().zip(&wp).map(|(a, b)| a * b).sum()).collect()
        }
    };
    GridDensity::normalize_from(d, values)
}

fn predict_joint(s: &SystemSpec, prior: &JointGrid2D) -> Result<JointGrid2D> {
    let d = *s.domain();
    let wd = *s.w_domain().ok_or_else(|| Error::UnsupportedRepresentation("no parameter domain".into()))?;
    if prior.x_domain() != &d || prior.w_domain() != &wd {
        return Err(Error::DomainMismatch);
    }
    let n = d.grid_points();
    let nw = wd.grid_points();
    let wx = d.weights();
    let ks = (0..nw).map(|iw| s.kernel(iw)).collect::<Result<Vec<_>>>()?;
    // Column iw of the joint grid is pushed through its own kernel.
    let cols: Vec<Vec<f64>> = (0..nw)
        .into_par_iter()
        .map(|iw| {
            let wp: Vec<f64> = (0..n).map(|j| wx[j] * prior.at(j, iw)).collect();
            let k = ks[iw];
            (0..n).map(|i| k[i * n..(i + 1) * n].iter().zip(&wp).map(|(a, b)| a * b).sum()).collect()
        })
        .collect();
    let mut values = vec![0.0; n * nw];
    for (iw, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * nw + iw] = *v;
        }
    }
    JointGrid2D::normalize_from(d, wd, values)
}

fn check_evidence(z: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("evidence {z}")));
    }
    if z <= EVIDENCE_FLOOR {
        return Err(Error::ZeroEvidence { evidence: z });
    }
    Ok(())
}

fn check_boundary(mass: f64) -> Result<()> {
    if mass > BOUNDARY_MASS_TOL {
        return Err(Error::DomainTooSmall { mass });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementalErrors {
    pub tv: f64,
    pub hellinger: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStep {
    /// Moment-matched Gaussian of the exact one-step posterior.
    pub approx: Gaussian1D,
    pub exact: UpdateResult,
    /// Distances between the exact one-step posterior and the discretized
    /// approximation.
    pub incremental_error: IncrementalErrors,
}

/// One step of the assumed-density filter.
pub fn gaussian_projection_step(s: &SystemSpec, k: usize, prior: &Gaussian1D) -> Result<ProjectionStep> {
    let exact = grid_update(s, k, &(*prior).into())?;
    let Distribution::Grid(post) = &exact.posterior else {
        return Err(Error::UnsupportedRepresentation("Gaussian projection needs a 1-D system".into()));
    };
    let (mean, var) = moments(post)?;
    let approx = Gaussian1D::new(mean, var)?;
    let d = s.domain();
    let exact_d: Distribution = post.clone().into();
    let approx_d: Distribution = crate::domains::discretize(&approx, d)?.into();
    let incremental_error = IncrementalErrors {
        tv: metrics::tv(&exact_d, &approx_d, d)?.value,
        hellinger: metrics::hellinger(&exact_d, &approx_d, d)?.value,
        w1: metrics::w1(&exact_d, &approx_d, d)?.value,
    };
    Ok(ProjectionStep { approx, exact, incremental_error })
}

/// One bootstrap particle filter step: propagate, weight, multinomially
/// resample to `n` equally weighted particles. States leaving the domain get
/// zero weight.
pub fn particle_step(s: &SystemSpec, k: usize, prior: &ParticleSet, n: usize, seed: u64) -> Result<ParticleSet> {
    if s.kind() != ProblemKind::Se {
        return Err(Error::UnsupportedRepresentation("particle filter is implemented for state estimation".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("particle count must be at least 1".into()));
    }
    let y = s.y(k)?;
    let d = s.domain();
    let t = s.transition().expect("SE system has a transition");
    let h = s.likelihood();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut moved = Vec::with_capacity(prior.len());
    for &x in prior.points() {
        moved.push(t.sample(x, 0.0, d, &mut rng)?);
    }
    let weights: Vec<f64> = moved
        .iter()
        .zip(prior.weights())
        .map(|(&x, w)| if d.contains(x) { w * h.eval(y, x, 0.0) } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllWeightsZero);
    }
    let index = WeightedIndex::new(&weights).map_err(|_| Error::AllWeightsZero)?;
    let points = (0..n).map(|_| moved[index.sample(&mut rng)]).collect();
    ParticleSet::equally_weighted(points)
}

/// `n` independent draws from a Gaussian, equally weighted.
pub fn draw_particles(g: &Gaussian1D, n: usize, seed: u64) -> Result<ParticleSet> {
    let normal = Normal::new(g.mean(), g.std_dev()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParticleSet::equally_weighted((0..n).map(|_| normal.sample(&mut rng)).collect())
}
