//! One pass/fail line per acceptance criterion. Run with
//! `cargo test -p lipflat --test acceptance -- --nocapture`.

mod common;

use std::time::{Duration, Instant};

use lipflat::content::greedy_content;
use lipflat::converse::{degree_coverage_within, segment_candidates, smooth_perturbation, GridMap};
use lipflat::corpus::{generate, Kind, Profile};
use lipflat::metric::{kuratowski_embed, max_epsilon_net, FiniteMetricSpace, LipschitzMap};
use lipflat::normgeom::{adapted_basis, tilde_k_witness, NormedSpace, Sampling};
use lipflat::perturb::{default_fragments, flatten, glue, scalar_perturb, FlattenConfig, GluePiece, Outcome, PerturbationReport, ScalarOptions};
use lipflat::{Error, PointCloud};
use nalgebra::DMatrix;
use rand::Rng;
use serde_json::{json, Value};

const SCALAR_LIMIT: Duration = Duration::from_secs(10);
const WITNESS_LIMIT: Duration = Duration::from_secs(30);
const CANTOR_LIMIT: Duration = Duration::from_secs(60);
const DEGREE_LIMIT: Duration = Duration::from_secs(20);

struct Verdict {
    id: u32,
    pass: bool,
    line: String,
    report: Value,
}

impl Verdict {
    fn new(id: u32, pass: bool, line: String, report: Value) -> Self {
        Verdict { id, pass, line, report }
    }
}

struct Run {
    name: &'static str,
    space: FiniteMetricSpace,
    f: LipschitzMap,
    sigma: LipschitzMap,
    report: PerturbationReport,
    elapsed: Duration,
}

fn run_flatten(name: &'static str, kind: Kind, f: impl Fn(&FiniteMetricSpace) -> LipschitzMap, d: usize, eps: f64, theta: f64, cfg: FlattenConfig) -> Run {
    let space = generate(kind).unwrap().space().unwrap();
    let f = f(&space);
    let frags = default_fragments(&space).unwrap();
    let all: Vec<usize> = (0..space.len()).collect();
    let t = Instant::now();
    let (sigma, report) = flatten(&space, &all, &f, d, eps, theta, &frags, &cfg).unwrap();
    Run {
        name,
        space,
        f,
        sigma,
        report,
        elapsed: t.elapsed(),
    }
}

fn identity(space: &FiniteMetricSpace) -> LipschitzMap {
    LipschitzMap::identity(space).unwrap()
}

/// The suite's flatten runs, with parameters frozen after calibration.
fn flatten_runs() -> Vec<Run> {
    let cantor_delta = 2.0 * 4f64.powi(-5);
    vec![
        run_flatten(
            "four_corner(5) identity",
            Kind::FourCorner { depth: 5 },
            identity,
            0,
            0.05,
            0.97,
            FlattenConfig {
                content_delta: Some(cantor_delta),
                ..FlattenConfig::default()
            },
        ),
        run_flatten(
            "four_corner(5) kuratowski",
            Kind::FourCorner { depth: 5 },
            |s| kuratowski_embed(s, &max_epsilon_net(s, 0.02).unwrap()).unwrap(),
            0,
            0.11,
            0.93,
            FlattenConfig {
                content_delta: Some(cantor_delta),
                budget_slack: Some(0.05),
                ..FlattenConfig::default()
            },
        ),
        run_flatten("segment(201)", Kind::Segment { n: 201 }, identity, 0, 0.01, 0.9, FlattenConfig::default()),
        run_flatten(
            "dust(1.5, 4)",
            Kind::Dust { s: 1.5, depth: 4 },
            identity,
            1,
            0.05,
            0.9,
            FlattenConfig {
                s: 1.5,
                ..FlattenConfig::default()
            },
        ),
    ]
}

fn c1_scalar_oracle() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let graphs = 60;
    for seed in 0..graphs {
        let n = 4 + (seed as usize % 13);
        let i = common::instance(1000 + seed, n, seed % 3 == 0);
        let f = scalar_perturb(&i.graph, &i.levels, i.t_norm, &i.in_v, i.delta, ScalarOptions::default()).unwrap();
        let oracle = common::brute_force(&i, None, false);
        worst = f.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let elapsed = t.elapsed();
    let pass = worst <= 1e-9 && elapsed < SCALAR_LIMIT;
    Verdict::new(
        1,
        pass,
        format!("scalar oracle equivalence on {graphs} graphs: max diff {worst:.3e} (tol 1e-9), {elapsed:.2?} (limit {SCALAR_LIMIT:?})"),
        json!({ "graphs": graphs, "max_diff": worst }),
    )
}

fn c2_scalar_bounds(runs: &[Run]) -> Verdict {
    let mut viol = 0;
    let mut edges = 0;
    for r in runs {
        viol += r.report.scalar.lipschitz_violations + r.report.scalar.flat_violations;
        edges += r.report.scalar.edges;
    }
    let pass = viol == 0 && runs.iter().all(|r| r.report.scalar.passed());
    Verdict::new(
        2,
        pass,
        format!("edge bounds across {} flatten runs: {viol} violations over {edges} checked edges", runs.len()),
        json!(runs.iter().map(|r| &r.report.scalar).collect::<Vec<_>>()),
    )
}

fn c3_witnesses() -> Verdict {
    let t = Instant::now();
    let mut r = common::rng(303);
    let mut euclid_worst: f64 = 0.0;
    for _ in 0..100 {
        let m = r.gen_range(1..=8);
        let d = r.gen_range(0..=m);
        let w = DMatrix::from_fn(m, d, |_, _| r.gen_range(-1.0..1.0));
        let space = NormedSpace::euclidean(m).unwrap();
        let ab = adapted_basis(&space, &w, Sampling::default()).unwrap();
        euclid_worst = euclid_worst.max(tilde_k_witness(&ab, &space, Sampling::default()).unwrap());
    }
    let mut lp_excess = f64::NEG_INFINITY;
    let mut lp_max: f64 = 0.0;
    for p_inf in [false, true] {
        for d in [1usize, 2] {
            for _ in 0..10 {
                let m = r.gen_range(d + 1..=6);
                let w = DMatrix::from_fn(m, d, |_, _| r.gen_range(-1.0..1.0));
                let space = if p_inf { NormedSpace::linf(m) } else { NormedSpace::lp(m, 1.0) }.unwrap();
                let ab = adapted_basis(&space, &w, Sampling::default()).unwrap();
                let k = tilde_k_witness(&ab, &space, Sampling::default()).unwrap();
                lp_max = lp_max.max(k);
                lp_excess = lp_excess.max(k - ((d as f64).sqrt() + 2.0));
            }
        }
    }
    let elapsed = t.elapsed();
    let pass = euclid_worst <= 1.0 + 1e-9 && lp_excess <= 0.0 && elapsed < WITNESS_LIMIT;
    Verdict::new(
        3,
        pass,
        format!(
            "K~ witnesses: euclidean max {euclid_worst:.12} (<= 1+1e-9), l1/linf max {lp_max:.4} with worst excess over sqrt(d)+2 of {lp_excess:.4}, {elapsed:.2?} (limit {WITNESS_LIMIT:?})"
        ),
        json!({ "euclidean_max": euclid_worst, "lp_max": lp_max, "lp_excess": lp_excess }),
    )
}

fn corpus_twenty() -> Vec<Kind> {
    let mut v: Vec<Kind> = (2..=5).map(|depth| Kind::FourCorner { depth }).collect();
    for (s, depth) in [(0.5, 3), (0.5, 4), (1.5, 3), (1.5, 4), (1.8, 3)] {
        v.push(Kind::Dust { s, depth });
    }
    v.extend([11, 51, 201].map(|n| Kind::Segment { n }));
    v.extend([16, 64, 128].map(|n| Kind::Circle { n }));
    v.extend([Profile::Sine, Profile::Tent, Profile::Abs].map(|g| Kind::LipschitzGraph { n: 50, g }));
    v.extend([20, 40].map(|n| Kind::CrossingSegments { n }));
    v
}

fn c4_kuratowski() -> Verdict {
    let kinds = corpus_twenty();
    let mut rows = Vec::new();
    let mut pass = true;
    let mut worst_lip: f64 = 0.0;
    let mut worst_slack = f64::INFINITY;
    for kind in &kinds {
        let space = generate(*kind).unwrap().space().unwrap();
        for eps in [0.05, 0.1] {
            let net = max_epsilon_net(&space, eps).unwrap();
            let f = kuratowski_embed(&space, &net).unwrap();
            let lip = common::naive_lip(&space, f.values(), common::sup);
            let slack = lipflat::par::min(space.len(), |i| {
                (i + 1..space.len())
                    .map(|j| f.target().dist(f.value(i), f.value(j)) - space.dist(i, j))
                    .fold(f64::INFINITY, f64::min)
            });
            pass &= lip <= 1.0 + 1e-12 && slack >= -2.0 * eps;
            worst_lip = worst_lip.max(lip);
            worst_slack = worst_slack.min(slack + 2.0 * eps);
            rows.push(json!({ "kind": kind, "eps": eps, "m": net.len(), "lip": lip, "min_slack": slack }));
        }
    }
    Verdict::new(
        4,
        pass && kinds.len() == 20,
        format!(
            "kuratowski on {} spaces x 2 eps: max lip {worst_lip:.15}, min (slack + 2 eps) {worst_slack:.4}",
            kinds.len()
        ),
        Value::Array(rows),
    )
}

fn c5_glue(runs: &[Run]) -> Verdict {
    // the reference example: two pieces 3 rho0 apart
    let space = generate(Kind::Segment { n: 101 }).unwrap().space().unwrap();
    let f = identity(&space);
    let shift = |dy: f64| {
        let rows: Vec<Vec<f64>> = (0..101).map(|x| vec![f.value(x)[0], f.value(x)[1] + dy]).collect();
        LipschitzMap::new(&space, f.target().clone(), PointCloud::from_rows(&rows).unwrap()).unwrap()
    };
    let pieces = vec![
        GluePiece {
            indices: (0..=10).collect(),
            sigma: shift(0.009),
        },
        GluePiece {
            indices: (40..=50).collect(),
            sigma: shift(-0.009),
        },
    ];
    let (sigma, example) = glue(&space, &f, &pieces, 0.1, 0.01).unwrap();
    let measured = common::naive_lip(&space, sigma.values(), common::euclid);
    let mut pass = measured <= example.bound + 1e-9 && example.bound <= 1.2 + 1e-12;
    let mut parts = vec![format!("example {measured:.4} <= {:.4}", example.bound)];
    let mut reports = vec![json!(example)];
    for r in runs {
        match &r.report.glue {
            Some(g) => {
                let lip = common::naive_lip(&r.space, r.sigma.values(), |v| r.sigma.target().norm(v));
                // sigma is the glued map after budget fitting, so the bound on it is implied
                pass &= g.within_bound && g.lip <= g.bound + 1e-9;
                parts.push(format!("{} {:.4} <= {:.4}", r.name, g.lip, g.bound));
                reports.push(json!({ "run": r.name, "glue": g, "final_lip": lip }));
            }
            None => {
                parts.push(format!("{} skipped (sup precondition unmet)", r.name));
                reports.push(json!({ "run": r.name, "glue": null }));
            }
        }
    }
    Verdict::new(5, pass, format!("glue bound L + 2 eps/rho0: {}", parts.join("; ")), Value::Array(reports))
}

fn image_content(r: &Run, delta: f64, s: f64) -> f64 {
    greedy_content(r.sigma.values(), r.sigma.target(), s, delta).unwrap().value
}

fn c6_cantor(run: &Run) -> Verdict {
    let delta = 2.0 * 4f64.powi(-5);
    let lip = common::naive_lip(&run.space, run.sigma.values(), common::euclid);
    let sup = run.sigma.sup_dist(&run.f);
    let before = greedy_content(run.f.values(), run.f.target(), 1.0, delta).unwrap().value;
    let after = image_content(run, delta, 1.0);
    let pass = lip <= 1.0 && sup < 0.05 && after <= 0.5 * before && run.elapsed < CANTOR_LIMIT;
    Verdict::new(
        6,
        pass,
        format!(
            "four_corner(5) flatten: lip {lip:.6} (<= 1), sup {sup:.4} (< 0.05), content {after:.4} / {before:.4} = {:.4} (<= 0.5), {:.2?} (limit {CANTOR_LIMIT:?})",
            after / before,
            run.elapsed
        ),
        json!(run.report),
    )
}

fn c7_distortion(run: &Run) -> Verdict {
    let delta = 2.0 * 4f64.powi(-5);
    let dist = lipflat::corpus::distort_check(&run.sigma, &run.space).unwrap().max;
    let lip = run.sigma.lip();
    let before = greedy_content(run.f.values(), run.f.target(), 1.0, delta).unwrap().value;
    let after = image_content(run, delta, 1.0);
    let pass = dist < 0.1 && lip <= 1.05 && after <= 0.5 * before;
    Verdict::new(
        7,
        pass,
        format!(
            "kuratowski(0.02) into linf^{} flatten: distortion {dist:.4} (< 0.1), lip {lip:.4} (<= 1.05), content ratio {:.4} (<= 0.5)",
            run.f.target().dim(),
            after / before
        ),
        json!(run.report),
    )
}

fn c8_segment(run: &Run) -> Verdict {
    let g = generate(Kind::Segment { n: 201 }).unwrap();
    let delta = g.coupled_delta();
    let mut candidates = segment_candidates(&run.space, 49, 8).unwrap();
    candidates.push(run.sigma.clone());
    let mut floor = f64::INFINITY;
    let mut pre_ok = true;
    let mut rows = Vec::new();
    for c in &candidates {
        let lip = common::naive_lip(&run.space, c.values(), common::euclid);
        let sup = c.sup_dist(&run.f);
        pre_ok &= lip <= 1.0 && sup < 0.01;
        let est = greedy_content(c.values(), c.target(), 1.0, delta).unwrap();
        floor = floor.min(est.packing_value());
        rows.push(json!({ "lip": lip, "sup": sup, "packing": est.packing_value(), "cover": est.value }));
    }
    let failed = !matches!(run.report.outcome, Outcome::Collapsed);
    let pass = pre_ok && floor >= 0.2 && failed;
    Verdict::new(
        8,
        pass,
        format!(
            "segment(201): {} candidates 1-lipschitz with sup < 0.01: {pre_ok}, min packing content {floor:.4} (>= 0.2), flatten outcome {:?}",
            candidates.len(),
            run.report.outcome
        ),
        json!({ "candidates": rows, "flatten": run.report }),
    )
}

fn c9_degree() -> Verdict {
    let t = Instant::now();
    let mut covered = 0;
    let mut maps = 0;
    let mut worst: f64 = 1.0;
    let id = GridMap::sample(64, |p| p).unwrap();
    let mut all: Vec<GridMap> = vec![id];
    all.extend((0..100).map(|seed| GridMap::sample(64, smooth_perturbation(seed, 0.099)).unwrap()));
    for g in &all {
        maps += 1;
        let c = degree_coverage_within(g, 0.1, 0.85).unwrap();
        worst = worst.min(c.covered_fraction);
        covered += c.covered as usize;
    }
    let constant = GridMap::sample(64, |_| [0.0, 0.0]).unwrap();
    let rejected = matches!(degree_coverage_within(&constant, 0.1, 0.85), Err(Error::Precondition(_)));
    let elapsed = t.elapsed();
    let pass = covered == maps && rejected && elapsed < DEGREE_LIMIT;
    Verdict::new(
        9,
        pass,
        format!(
            "degree coverage of B(0,0.85): {covered}/{maps} maps covered (worst fraction {worst:.4}), constant map rejected: {rejected}, {elapsed:.2?} (limit {DEGREE_LIMIT:?})"
        ),
        json!({ "covered": covered, "maps": maps, "worst_fraction": worst, "constant_rejected": rejected }),
    )
}

fn c10_measure(runs: &[Run]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rows = Vec::new();
    for r in runs {
        let rep = &r.report;
        let ok = rep.parameters.s <= 2.0 && rep.measure_reduction_holds();
        pass &= ok;
        parts.push(format!(
            "{} {:.4} <= {:.4} (C^ {:.3} <= {:.1})",
            r.name, rep.content_after.value, rep.measure_bound, rep.c_hat, rep.c_hat_cap
        ));
        rows.push(json!({ "run": r.name, "after": rep.content_after.value, "bound": rep.measure_bound, "c_hat": rep.c_hat, "cap": rep.c_hat_cap }));
    }
    Verdict::new(10, pass, format!("measure reduction: {}", parts.join("; ")), Value::Array(rows))
}

fn c11_dust(run: &Run) -> Verdict {
    let delta = run.report.parameters.content_delta;
    let before = greedy_content(run.f.values(), run.f.target(), 1.5, delta).unwrap().value;
    let after = image_content(run, delta, 1.5);
    let ratio = after / before;
    Verdict::new(
        11,
        ratio <= 0.7,
        format!("dust(1.5, 4), d = 1: content ratio {ratio:.4} (<= 0.7), outcome {:?}", run.report.outcome),
        json!(run.report),
    )
}

fn suite() -> Vec<Verdict> {
    let runs = flatten_runs();
    vec![
        c1_scalar_oracle(),
        c2_scalar_bounds(&runs),
        c3_witnesses(),
        c4_kuratowski(),
        c5_glue(&runs),
        c6_cantor(&runs[0]),
        c7_distortion(&runs[1]),
        c8_segment(&runs[2]),
        c9_degree(),
        c10_measure(&runs),
        c11_dust(&runs[3]),
    ]
}

#[test]
fn acceptance() {
    let first = suite();
    let second = suite();
    let mut all = Vec::new();
    let mut same = true;
    for (a, b) in first.into_iter().zip(&second) {
        let ja = serde_json::to_string(&a.report).unwrap();
        let jb = serde_json::to_string(&b.report).unwrap();
        same &= ja == jb && a.pass == b.pass;
        all.push(a);
    }
    all.push(Verdict::new(
        12,
        same,
        format!("determinism: reports of criteria 1-11 identical across two runs: {same}"),
        Value::Null,
    ));
    println!();
    for v in &all {
        println!("criterion {:>2}: {}  {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.line);
    }
    let failed: Vec<u32> = all.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!("acceptance: {}/{} criteria pass", all.len() - failed.len(), all.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
