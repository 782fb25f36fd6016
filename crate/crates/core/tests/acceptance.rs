//! Acceptance criteria 1-9. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bsl_core::bayes::{conjugate_update_ip, grid_update};
use bsl_core::bounds::{literature_ratio, step_constant};
use bsl_core::harness::{
    bound_validate, derive_seed, emit, fuzz::routes, reduction_fuzz, reproduce, vi_demo, Filter, FuzzTrial, RunRecord,
};
use bsl_core::metrics::{self, gaussian_hellinger, gaussian_tv, scaled_hellinger, MetricKind};
use bsl_core::models::system_constants;
use bsl_core::onlinevi::{beta, c_vi, elbo_mc, vi_bound_type1, BetaInput, PsToy, VIBoundInputs};
use bsl_core::reduction::ReductionTheorem;
use bsl_core::{
    discretize, DomainSpec, Distribution, Gaussian1D, GridDensity, LikelihoodModel, SystemSpec, TransitionModel,
};

type Outcome = Result<String, String>;

fn rng(criterion: u64, i: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(criterion, i))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: bsl_core::Error) -> String {
    e.to_string()
}

fn criterion1() -> Outcome {
    let t = Instant::now();
    let mut rows = 0;
    for case in [1u8, 2] {
        for seed in 0..10 {
            let r = reproduce(case, 20, seed).map_err(err)?;
            ensure(r.rows.len() == 40, || format!("case {case}: {} rows", r.rows.len()))?;
            ensure(r.violations == 0, || format!("case {case} seed {seed}: {} violations", r.violations))?;
            rows += r.rows.len();
        }
    }
    for seed in 0..200 {
        let r = reproduce(3, 20, seed).map_err(err)?;
        ensure(r.violations == 0, || format!("case 3 seed {seed}: {} violations", r.violations))?;
        rows += r.rows.len();
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{rows} rows, 0 violations, {secs:.2} s"))
}

fn criterion2() -> Outcome {
    let mut r = rng(2, 0);
    for _ in 0..10_000 {
        let za = 10f64.powf(r.random_range(-250.0..5.0));
        let zb = 10f64.powf(r.random_range(-250.0..5.0));
        let lr = literature_ratio(za, zb).map_err(err)?;
        ensure(lr.ratio == 0.5, || format!("ratio {} for ({za:e}, {zb:e})", lr.ratio))?;
    }
    Ok("ratio exactly 0.5 on 10000 evidence pairs".into())
}

/// Random admissible 1-D system (inverse or state estimation) with a
/// random prior pair on a [-15, 15] grid.
fn random_instance(r: &mut ChaCha8Rng, state_estimation: bool) -> bsl_core::Result<(SystemSpec, Distribution, Distribution)> {
    let d = DomainSpec::new(-15.0, 15.0, 301)?;
    let a = r.random_range(0.5..2.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let noise_sd: f64 = r.random_range(0.3..3.0);
    let y = a * r.random_range(-3.0..3.0) + noise_sd * r.random_range(-1.0..1.0);
    let h = LikelihoodModel::linear_gaussian(a, noise_sd * noise_sd)?;
    let s = if state_estimation {
        let sd: f64 = r.random_range(0.2..1.0);
        SystemSpec::state_estimation(TransitionModel::linear_gaussian(r.random_range(-1.0..1.0), sd * sd)?, h, d, vec![y])?
    } else {
        SystemSpec::inverse(h, d, vec![y])?
    };
    let mut prior = || -> bsl_core::Result<Distribution> {
        let sd: f64 = r.random_range(0.2..1.5);
        Ok(discretize(&Gaussian1D::new(r.random_range(-3.0..3.0), sd * sd)?, &d)?.into())
    };
    let p = prior()?;
    Ok((s, p, prior()?))
}

fn criterion3() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (mi, metric) in MetricKind::ALL.into_iter().enumerate() {
        for i in 0..500u64 {
            let mut r = rng(3, mi as u64 * 1000 + i);
            let (s, p, q) = random_instance(&mut r, i % 2 == 1).map_err(err)?;
            let d = *s.domain();
            let c = system_constants(&s, 1, metric).map_err(err)?;
            let (up, uq) = (grid_update(&s, 1, &p).map_err(err)?, grid_update(&s, 1, &q).map_err(err)?);
            let prior = metrics::distance(metric, &p, &q, &d).map_err(err)?.value;
            let post = metrics::distance(metric, &up.posterior, &uq.posterior, &d).map_err(err)?.value;
            for z in [up.evidence, uq.evidence] {
                let k = step_constant(metric, &c, z).map_err(err)?;
                let bound = k * prior;
                ensure(post <= bound + 1e-9, || format!("{metric} trial {i}: {post} > {bound}"))?;
                if bound > 0.0 {
                    worst = worst.max(post / bound);
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} prior pairs over TV, Hellinger, W1; largest distance/bound {worst:.3}"))
}

fn criterion4() -> Outcome {
    let t = Instant::now();
    let mut rows = 0;
    for filter in [Filter::GaussProj, Filter::Particle] {
        for seed in 0..20 {
            let r = bound_validate(filter, 10, seed, None, None).map_err(err)?;
            ensure(r.violations == 0, || format!("{filter:?} seed {seed}: {} violations", r.violations))?;
            ensure(r.rows.iter().any(|x| x.series == "set1") && r.rows.iter().any(|x| x.series == "set2"), || {
                "missing ledger series".into()
            })?;
            rows += r.rows.len();
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{rows} ledger rows over 40 runs, 0 violations, {secs:.1} s"))
}

fn criterion5() -> Outcome {
    let (a, noise) = (1.1f64, 3.0f64);
    let d = DomainSpec::new(-40.0, 40.0, 8001).map_err(err)?;
    let mut r = rng(5, 0);
    let ys: Vec<f64> = (0..20).map(|_| a * 0.7 + noise.sqrt() * r.random_range(-1.5..1.5)).collect();
    let s = SystemSpec::inverse(LikelihoodModel::linear_gaussian(a, noise).map_err(err)?, d, ys.clone()).map_err(err)?;
    let mut exact = Gaussian1D::new(0.0, 1.0).map_err(err)?;
    let mut grid: Distribution = discretize(&exact, &d).map_err(err)?.into();
    let (mut dm, mut dv, mut dn): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (k, &y) in ys.iter().enumerate() {
        exact = match conjugate_update_ip(&exact, a, noise, y).map_err(err)?.posterior {
            Distribution::Gaussian(g) => g,
            _ => unreachable!(),
        };
        grid = grid_update(&s, k + 1, &grid).map_err(err)?.posterior;
        let Distribution::Grid(g) = &grid else { unreachable!() };
        let (m, v) = bsl_core::moments(g).map_err(err)?;
        dm = dm.max((m - exact.mean()).abs());
        dv = dv.max((v / exact.variance() - 1.0).abs());
        dn = dn.max((g.mass() - 1.0).abs());
    }
    ensure(dm <= 1e-6 && dv <= 1e-6, || format!("mean gap {dm:e}, variance gap {dv:e}"))?;
    ensure(dn <= 1e-8, || format!("normalization gap {dn:e}"))?;
    Ok(format!("20 steps: mean gap {dm:.1e}, relative variance gap {dv:.1e}, mass gap {dn:.1e}"))
}

fn random_density(r: &mut ChaCha8Rng, d: &DomainSpec) -> GridDensity {
    let comps: Vec<(f64, f64, f64)> =
        (0..r.random_range(1..=3)).map(|_| (r.random_range(0.2..1.0), r.random_range(-4.0..4.0), r.random_range(0.3..1.5))).collect();
    GridDensity::from_fn(*d, |x| {
        comps.iter().map(|(w, m, s)| w * (-0.5 * ((x - m) / s).powi(2)).exp() / s).sum()
    })
    .expect("valid density")
}

fn criterion6() -> Outcome {
    let d = DomainSpec::new(-10.0, 10.0, 401).map_err(err)?;
    let dist = |m: MetricKind, a: &GridDensity, b: &GridDensity| -> Result<f64, String> {
        Ok(metrics::distance(m, &a.clone().into(), &b.clone().into(), &d).map_err(err)?.value)
    };
    for i in 0..300u64 {
        let mut r = rng(6, i);
        let [a, b, c] = [0, 1, 2].map(|_| random_density(&mut r, &d));
        for m in MetricKind::ALL {
            let (ab, ba, bc, ac) = (dist(m, &a, &b)?, dist(m, &b, &a)?, dist(m, &b, &c)?, dist(m, &a, &c)?);
            ensure(ab >= 0.0 && (ab - ba).abs() <= 1e-12, || format!("{m} symmetry {ab} {ba}"))?;
            ensure(ac <= ab + bc + 1e-9, || format!("{m} triangle {ac} > {ab} + {bc}"))?;
        }
        let ks: Vec<f64> = (0..3).map(|_| 10f64.powf(r.random_range(-1.0..1.0))).collect();
        let sa = a.scale(ks[0]).map_err(err)?;
        let sb = b.scale(ks[1]).map_err(err)?;
        let sc = c.scale(ks[2]).map_err(err)?;
        let (ab, ba) = (scaled_hellinger(&sa, &sb).map_err(err)?, scaled_hellinger(&sb, &sa).map_err(err)?);
        let (bc, ac) = (scaled_hellinger(&sb, &sc).map_err(err)?, scaled_hellinger(&sa, &sc).map_err(err)?);
        ensure((ab - ba).abs() <= 1e-12 && ac <= ab + bc + 1e-9, || "scaled Hellinger axioms".into())?;
    }
    for i in 0..500u64 {
        let mut r = rng(6, 10_000 + i);
        let g = |r: &mut ChaCha8Rng| Gaussian1D::new(r.random_range(-5.0..5.0), r.random_range(0.01..25.0)).unwrap();
        let (p, q) = (g(&mut r), g(&mut r));
        let (tv, h) = (gaussian_tv(&p, &q), gaussian_hellinger(&p, &q));
        ensure(h * h <= tv + 1e-9 && tv <= 2f64.sqrt() * h + 1e-9, || format!("sandwich tv {tv} h {h}"))?;
        let (a, b) = (random_density(&mut r, &d), random_density(&mut r, &d));
        let (w1, tvg) = (dist(MetricKind::W1, &a, &b)?, dist(MetricKind::Tv, &a, &b)?);
        ensure(w1 <= d.diameter() * tvg + 1e-9, || format!("W1 {w1} > D TV {tvg}"))?;
    }
    for i in 0..200u64 {
        let mut r = rng(6, 20_000 + i);
        let (p, q) = (random_density(&mut r, &d), random_density(&mut r, &d));
        let (k, kp) = (10f64.powf(r.random_range(-2.0..2.0)), 10f64.powf(r.random_range(-2.0..2.0)));
        let (sa, sb) = (p.scale(k).map_err(err)?, q.scale(kp).map_err(err)?);
        let dh = scaled_hellinger(&sa, &sb).map_err(err)?;
        let (mk, mkp) = (sa.mass(), sb.mass());
        ensure((mk.sqrt() - mkp.sqrt()).abs() <= 2f64.sqrt() * dh + 1e-9, || format!("mass gap, pair {i}"))?;
        let h = dist(MetricKind::Hellinger, &p, &q)?;
        ensure(h <= 2.0 / mk.sqrt() * dh + 1e-9, || format!("normalized Hellinger, pair {i}"))?;
    }
    let n = discretize(&Gaussian1D::new(0.0, 1.0).map_err(err)?, &d).map_err(err)?;
    let eq = 2f64.sqrt() * scaled_hellinger(&n.scale(4.0).map_err(err)?, &n).map_err(err)?;
    ensure((eq - 1.0).abs() <= 1e-9, || format!("equality case gives {eq}"))?;
    Ok(format!("axioms on 300 triples, sandwich and W1 on 500 pairs, scaled-measure inequalities on 200 pairs; equality case {eq:.12}"))
}

/// Certificates found by the seed-1 fuzz runs, one per condition set.
const FIXTURES: [(ReductionTheorem, &str, &str); 5] = [
    (
        ReductionTheorem::Tv,
        "tv",
        r#"{"kind": "ip", "length_scale": 0.13858800005786168, "obs_a": 1.9965233945149534, "obs_var": 0.0015104403240517041, "trans_a": -0.42639289744551556, "trans_var": 0.00020069535849311448, "y": 0.14282703134924324, "p": [0.27356854922145873, 0.018451323850997882], "q": [0.1680170236482162, 0.0014551899442484413], "grid_points": 241}"#,
    ),
    (
        ReductionTheorem::Hellinger,
        "er.h.1",
        r#"{"kind": "se", "length_scale": 0.19843738954931778, "obs_a": 1.2877681291192968, "obs_var": 0.007075920244734919, "trans_a": 0.7506681006016866, "trans_var": 0.006968817193601166, "y": -0.0673418469827094, "p": [-0.31921728715080433, 0.046459853977954754], "q": [0.24024988019212856, 0.03069975450780176], "grid_points": 241}"#,
    ),
    (
        ReductionTheorem::Hellinger,
        "er.h.2",
        r#"{"kind": "ip", "length_scale": 0.36702033558778624, "obs_a": 1.2699346046641697, "obs_var": 0.00791220791260078, "trans_a": -0.6490235546721284, "trans_var": 0.056761937577727746, "y": -0.9283215422877793, "p": [-0.7748546522485178, 0.051921199800570826], "q": [-0.717265195963169, 0.03191730551046157], "grid_points": 241}"#,
    ),
    (
        ReductionTheorem::W1Ip,
        "w1-ip",
        r#"{"kind": "ip", "length_scale": 2.0645518716589586, "obs_a": -1.1824067988612892, "obs_var": 0.0876853421393398, "trans_a": -0.6062064424746261, "trans_var": 0.16306196840444964, "y": -5.719528862338464, "p": [-0.39631801515448284, 2.155616946366621], "q": [-4.129999855832678, 0.7859839093449211], "grid_points": 241}"#,
    ),
    (
        ReductionTheorem::W1Dyn,
        "w1-dyn",
        r#"{"kind": "se", "length_scale": 0.32787742321593055, "obs_a": -1.5883100455409487, "obs_var": 0.08381252115676736, "trans_a": -0.15615573077252387, "trans_var": 0.02703852644923253, "y": 0.45718418810056094, "p": [0.1024218747248396, 0.005425869551041668], "q": [0.6913890302645572, 0.024660626484337315], "grid_points": 241}"#,
    ),
];

fn criterion7() -> Outcome {
    let mut summary = Vec::new();
    for t in ReductionTheorem::ALL {
        let f = reduction_fuzz(t, 1000, 1).map_err(err)?;
        ensure(f.trials >= 1000, || format!("{}: only {} trials", t.as_str(), f.trials))?;
        ensure(f.violations == 0, || format!("{}: {} unsound certificates", t.as_str(), f.violations))?;
        let want: &[&str] = match t {
            ReductionTheorem::Hellinger => &["er.h.1", "er.h.2"],
            _ => &[t.as_str()],
        };
        for w in want {
            ensure(f.routes.get(*w).copied().unwrap_or(0) >= 1, || format!("{w}: no certificate found"))?;
        }
        for (route, n) in &f.routes {
            summary.push(format!("{route} {n}/{}", f.trials));
        }
    }
    for (t, route, json) in FIXTURES {
        let trial: FuzzTrial = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let v = trial.check(t).map_err(err)?;
        ensure(v.guaranteed && routes(t, &v).iter().any(|r| r == route), || format!("fixture {route} not certified"))?;
        ensure(v.measured_post_dist < v.measured_prior_dist, || format!("fixture {route} does not reduce"))?;
    }
    Ok(format!("0 violations; certified {}; 5 frozen certificates hold", summary.join(", ")))
}

fn criterion8() -> Outcome {
    let d = DomainSpec::new(-30.0, 30.0, 601).map_err(err)?;
    let prior = Gaussian1D::new(0.0, 1.0).map_err(err)?;
    for seed in 0..100u64 {
        let mut r = rng(8, seed);
        let y = 1.1 * r.random_range(-2.0..2.0) + 3f64.sqrt() * r.random_range(-1.0..1.0);
        let s = SystemSpec::inverse(LikelihoodModel::linear_gaussian(1.1, 3.0).map_err(err)?, d, vec![y]).map_err(err)?;
        let up = conjugate_update_ip(&prior, 1.1, 3.0, y).map_err(err)?;
        let Distribution::Gaussian(post) = up.posterior else { unreachable!() };
        let q = Gaussian1D::new(
            post.mean() + post.std_dev() * r.random_range(-2.0..2.0),
            post.variance() * r.random_range(-1.0f64..1.0).exp(),
        )
        .map_err(err)?;
        let e = elbo_mc(&q.into(), &s, 1, &prior.into(), 2000, seed).map_err(err)?;
        let ln_z = up.evidence.ln();
        ensure(e.value <= ln_z + 3.0 * e.std_error, || format!("seed {seed}: ELBO {} > ln Z {ln_z}", e.value))?;
    }
    let toy = PsToy::default();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        for row in toy.run(seed).map_err(err)? {
            ensure(row.distance <= row.bound, || format!("seed {seed} step {}: {} > {}", row.step, row.distance, row.bound))?;
            worst = worst.max(row.distance / row.bound);
        }
    }
    let mut r = rng(8, 1000);
    for _ in 0..1000 {
        let b = BetaInput { c_tilde: r.random_range(0.0..10.0), param_error: 0.0, evidence: r.random_range(1e-6..5.0) };
        for m in MetricKind::ALL {
            ensure(beta(m, &b).map_err(err)? == 0.0, || "nonzero beta at the true parameter".into())?;
        }
    }
    for _ in 0..1000 {
        let k = r.random_range(1..8);
        let inp = VIBoundInputs {
            r: r.random_range(1..4),
            det_gamma: r.random_range(0.01..3.0),
            elbo_floors: (0..k).map(|_| r.random_range(-20.0..-5.0)).collect(),
            evidences: (0..k).map(|_| r.random_range(0.01..1.0)).collect(),
            diameter: Some(r.random_range(0.5..50.0)),
            beta_inputs: None,
        };
        let dm = inp.diameter.unwrap();
        for j in 1..=k {
            let (tv, w1) = (c_vi(&inp, MetricKind::Tv, j).map_err(err)?, c_vi(&inp, MetricKind::W1, j).map_err(err)?);
            ensure((w1 - dm * tv).abs() <= 1e-12 * w1.abs().max(1.0), || format!("C_VI row mismatch {w1} vs {}", dm * tv))?;
        }
        let (tv, w1) = (vi_bound_type1(&inp, MetricKind::Tv).map_err(err)?, vi_bound_type1(&inp, MetricKind::W1).map_err(err)?);
        ensure((w1 - dm * tv).abs() <= 1e-12 * w1.abs().max(1.0), || "W1 bound is not D times the TV bound".into())?;
    }
    Ok(format!("ELBO below ln Z on 100 seeds; PS toy 50 steps dominated (max distance/bound {worst:.2e}); beta and table identities hold"))
}

fn csv_bytes(r: &RunRecord) -> Vec<String> {
    r.groups().into_iter().map(|(_, rows)| emit::csv_string(&rows).expect("nonempty")).collect()
}

fn all_runs() -> bsl_core::Result<Vec<Vec<String>>> {
    Ok(vec![
        csv_bytes(&reproduce(3, 20, 7)?),
        csv_bytes(&bound_validate(Filter::GaussProj, 10, 3, None, None)?),
        csv_bytes(&bound_validate(Filter::Particle, 5, 3, None, Some(500))?),
        csv_bytes(&vi_demo(3, 3)?),
    ])
}

fn criterion9() -> Outcome {
    let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool");
    let one = pool(1).install(all_runs).map_err(err)?;
    let again = pool(1).install(all_runs).map_err(err)?;
    let many = pool(4).install(all_runs).map_err(err)?;
    ensure(one == again, || "repeat run differs".into())?;
    ensure(one == many, || "1-thread and 4-thread runs differ".into())?;
    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let r = reproduce(2, 20, 5).map_err(err)?;
    let (pa, pb) = (emit::write_csv(&r, dir_a.path()).map_err(err)?, emit::write_csv(&r, dir_b.path()).map_err(err)?);
    for (a, b) in pa.iter().zip(&pb) {
        ensure(std::fs::read(a).ok() == std::fs::read(b).ok(), || format!("{} differs", a.display()))?;
    }
    Ok("byte-identical CSV across repeats and across 1 vs 4 threads".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("reproduction of the illustrative example", criterion1),
        ("constant ratio against earlier work", criterion2),
        ("one-step Lipschitz bounds", criterion3),
        ("learning-error ledgers for approximate filters", criterion4),
        ("conjugate and grid updates agree", criterion5),
        ("metric suite", criterion6),
        ("reduction soundness fuzz", criterion7),
        ("online VI suite", criterion8),
        ("determinism", criterion9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        match f() {
            Ok(detail) => println!("criterion {} ({name}): PASS [{detail}] ({:.1} s)", i + 1, t.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{detail}]", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
