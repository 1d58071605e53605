//! Fast invariant suite behind `lipflat verify`.

use lipflat::content::{covers, greedy_content};
use lipflat::converse::{degree_coverage_within, smooth_perturbation, GridMap};
use lipflat::corpus::{distort_check, generate, Kind, Profile};
use lipflat::metric::{kuratowski_embed, max_epsilon_net, neighborhood_graph, validate_metric, GraphMode, LipschitzMap};
use lipflat::normgeom::{adapted_basis, tilde_k_witness, NormedSpace, Sampling};
use lipflat::perturb::{check_scalar, scalar_perturb, shrink_to_budget, ScalarOptions};
use nalgebra::DMatrix;
use rand::Rng;
use serde_json::{json, Value};

use crate::CliError;

struct Check {
    name: &'static str,
    pass: bool,
    detail: Value,
}

fn corpus() -> Vec<Kind> {
    vec![
        Kind::FourCorner { depth: 3 },
        Kind::Dust { s: 1.5, depth: 3 },
        Kind::Segment { n: 41 },
        Kind::Circle { n: 40 },
        Kind::LipschitzGraph { n: 41, g: Profile::Sine },
        Kind::CrossingSegments { n: 40 },
    ]
}

fn metrics() -> lipflat::Result<Check> {
    let mut pass = true;
    for kind in corpus() {
        pass &= validate_metric(&generate(kind)?.space()?.to_rows()).pass;
    }
    Ok(Check {
        name: "corpus spaces are metric",
        pass,
        detail: json!({ "sets": corpus().len() }),
    })
}

fn scalar() -> lipflat::Result<Check> {
    let g = generate(Kind::FourCorner { depth: 3 })?;
    let space = g.space()?;
    let graph = neighborhood_graph(&space, GraphMode::Complete)?;
    let levels: Vec<f64> = g.points.rows().map(|p| 0.6 * p[0] + 0.8 * p[1]).collect();
    let in_v: Vec<bool> = (0..space.len()).map(|i| i % 3 != 0).collect();
    let opts = ScalarOptions {
        reach: None,
        level_moves: true,
    };
    let f = scalar_perturb(&graph, &levels, 1.0, &in_v, 0.1, opts)?;
    let c = check_scalar(&graph, &levels, 1.0, &in_v, 0.1, opts, &f);
    Ok(Check {
        name: "scalar perturbation edge bounds",
        pass: c.passed(),
        detail: serde_json::to_value(&c).expect("serializes"),
    })
}

fn witnesses(seed: u64) -> lipflat::Result<Check> {
    let mut r = lipflat::rng::stream(seed, 3);
    let s = Sampling::default();
    let mut worst_euclid: f64 = 0.0;
    for _ in 0..20 {
        let m = r.gen_range(1..=6);
        let d = r.gen_range(0..=m);
        let w = DMatrix::from_fn(m, d, |_, _| r.gen_range(-1.0..1.0));
        let space = NormedSpace::euclidean(m)?;
        worst_euclid = worst_euclid.max(tilde_k_witness(&adapted_basis(&space, &w, s)?, &space, s)?);
    }
    let mut worst_ratio: f64 = 0.0;
    for p in [1.0, f64::INFINITY] {
        for d in 1..=2usize {
            let m = 4;
            let w = DMatrix::from_fn(m, d, |_, _| r.gen_range(-1.0..1.0));
            let space = NormedSpace::lp(m, p)?;
            let k = tilde_k_witness(&adapted_basis(&space, &w, s)?, &space, s)?;
            worst_ratio = worst_ratio.max(k / ((d as f64).sqrt() + 2.0));
        }
    }
    Ok(Check {
        name: "adapted basis witnesses",
        pass: worst_euclid <= 1.0 + 1e-9 && worst_ratio <= 1.0,
        detail: json!({ "euclidean_max": worst_euclid, "l1_linf_max_ratio": worst_ratio }),
    })
}

fn kuratowski() -> lipflat::Result<Check> {
    let space = generate(Kind::FourCorner { depth: 4 })?.space()?;
    let eps = 0.05;
    let f = kuratowski_embed(&space, &max_epsilon_net(&space, eps)?)?;
    let dist = distort_check(&f, &space)?;
    Ok(Check {
        name: "kuratowski embedding",
        pass: f.lip() <= 1.0 + 1e-12 && dist.max <= 2.0 * eps,
        detail: json!({ "lip": f.lip(), "distortion": dist.max, "eps": eps }),
    })
}

fn shrink() -> lipflat::Result<Check> {
    let space = generate(Kind::FourCorner { depth: 4 })?.space()?;
    let f = LipschitzMap::identity(&space)?;
    let (g, rep) = shrink_to_budget(&space, &f, f.lip(), 0.05)?;
    Ok(Check {
        name: "shrink to budget",
        pass: g.lip() < f.lip() && rep.sup_move <= 0.05,
        detail: serde_json::to_value(&rep).expect("serializes"),
    })
}

fn cover() -> lipflat::Result<Check> {
    let mut pass = true;
    for kind in corpus() {
        let g = generate(kind)?;
        let space = g.space()?;
        let f = LipschitzMap::identity(&space)?;
        let est = greedy_content(f.values(), f.target(), 1.0, g.coupled_delta())?;
        pass &= covers(&est, f.values(), f.target());
    }
    Ok(Check {
        name: "greedy covers contain their input",
        pass,
        detail: json!({ "sets": corpus().len() }),
    })
}

fn degree(seed: u64) -> lipflat::Result<Check> {
    let mut maps = vec![GridMap::sample(48, |p| p)?];
    for c in 0..10 {
        maps.push(GridMap::sample(48, smooth_perturbation(lipflat::rng::derive(seed, c), 0.099))?);
    }
    let mut covered = 0;
    for m in &maps {
        covered += degree_coverage_within(m, 0.1, 0.85)?.covered as usize;
    }
    Ok(Check {
        name: "degree coverage of perturbed discs",
        pass: covered == maps.len(),
        detail: json!({ "covered": covered, "maps": maps.len() }),
    })
}

pub fn run(seed: u64) -> Result<Value, CliError> {
    let checks = [metrics()?, scalar()?, witnesses(seed)?, kuratowski()?, shrink()?, cover()?, degree(seed)?];
    let mut rows = Vec::new();
    for c in &checks {
        eprintln!("{}: {}", c.name, if c.pass { "PASS" } else { "FAIL" });
        rows.push(json!({ "name": c.name, "pass": c.pass, "detail": c.detail }));
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    let out = json!({ "checks": rows, "failed": failed });
    if failed > 0 {
        return Err(CliError::Check(format!("{failed} of {} checks failed", checks.len()), out));
    }
    Ok(out)
}
