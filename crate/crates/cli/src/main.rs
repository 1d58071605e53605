//! Command-line runner: generates test sets, runs the pipeline stages and
//! writes JSON reports.
//!
//! Exit status is 0 on success, 1 when the configuration or a precondition
//! is rejected, and 2 when a run completes but one of its checks fails.

mod verify;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lipflat::content::{covers, greedy_content, grid_content, ContentEstimate, Method};
use lipflat::converse::{degree_coverage_within, segment_candidates, smooth_perturbation, GridMap};
use lipflat::corpus::{distort_check, generate, Kind, Profile};
use lipflat::metric::{
    kuratowski_embed, lipschitz_constant, max_epsilon_net, read_cloud_csv, read_matrix_csv, write_cloud_csv, FiniteMetricSpace, LipschitzMap,
};
use lipflat::normgeom::{Norm, NormedSpace};
use lipflat::perturb::{default_fragments, flatten, FlattenConfig, Outcome};
use lipflat::tangent::{fit_tangent_field, partition_by_field};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Report schema version; bumped whenever a report field changes meaning.
const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "lipflat", version, about = "Lipschitz flattening experiments on finite metric spaces")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "LIPFLAT_THREADS")]
    threads: Option<usize>,
    /// Run configuration in TOML or JSON; replaces the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Write a corpus set as CSV.
    Gen(GenArgs),
    /// Kuratowski embedding of a space into l_inf over an eps-net.
    Embed(EmbedArgs),
    /// Hausdorff content estimate of a point set.
    Content(ContentArgs),
    /// Fit a tangent field and partition the set into flat pieces.
    Tangent(TangentArgs),
    /// Flatten a set under the identity or a Kuratowski embedding.
    Flatten(FlattenArgs),
    /// Content lower bounds for rectifiable sets.
    Converse(ConverseArgs),
    /// Run the invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum KindName {
    FourCorner,
    Dust,
    Segment,
    Circle,
    LipschitzGraph,
    CrossingSegments,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct GenParams {
    /// Recursion depth for dusts.
    #[arg(long, default_value_t = 5)]
    depth: u32,
    /// Similarity dimension for `dust`.
    #[arg(long = "dim", default_value_t = 1.5)]
    dim: f64,
    /// Point count for curves.
    #[arg(long, default_value_t = 201)]
    n: usize,
    /// Profile for `lipschitz_graph`: sine, tent or abs.
    #[arg(long, default_value = "sine")]
    g: String,
}

impl GenParams {
    fn kind(&self, name: KindName) -> Result<Kind, CliError> {
        Ok(match name {
            KindName::FourCorner => Kind::FourCorner { depth: self.depth },
            KindName::Dust => Kind::Dust { s: self.dim, depth: self.depth },
            KindName::Segment => Kind::Segment { n: self.n },
            KindName::Circle => Kind::Circle { n: self.n },
            KindName::LipschitzGraph => Kind::LipschitzGraph {
                n: self.n,
                g: Profile::parse(&self.g)?,
            },
            KindName::CrossingSegments => Kind::CrossingSegments { n: self.n },
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct GenArgs {
    kind: KindName,
    #[command(flatten)]
    #[serde(flatten)]
    params: GenParams,
    /// Output CSV.
    #[arg(short, long)]
    output: PathBuf,
}

/// Where a space comes from.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct Input {
    /// Point cloud CSV with header x1..xk.
    #[arg(long)]
    set: Option<PathBuf>,
    /// Headerless square distance matrix CSV.
    #[arg(long, conflicts_with = "set")]
    matrix: Option<PathBuf>,
    /// Norm on the point cloud: l1, l2, linf or an exponent.
    #[arg(long, default_value = "l2")]
    metric: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct EmbedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    #[arg(long)]
    eps: f64,
    /// CSV of embedded coordinates.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    Greedy,
    Grid,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct ContentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Cover scale (grid side for `grid`); default twice the spacing.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodName::Greedy)]
    method: MethodName,
    /// CSV of cover elements.
    #[arg(long)]
    cover: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct TangentArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    #[arg(long, default_value_t = 4)]
    pieces: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Norm on the target of the identity map.
    #[arg(long, default_value = "l2")]
    target: String,
    /// CSV of per-point violation and piece.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct FlattenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: Input,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    /// Norm on the target of the identity map.
    #[arg(long)]
    target: Option<String>,
    /// Map through the Kuratowski embedding over a net of this scale
    /// instead of the identity.
    #[arg(long, conflicts_with = "target")]
    kuratowski: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long)]
    content_delta: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pieces: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    budget_slack: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    collapse_ratio: f64,
    /// CSV of the perturbed map.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ConverseMode {
    /// Perturbations of the unit segment against a content floor.
    Segment,
    /// Degree coverage of perturbations of the unit disc.
    Disc,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct ConverseArgs {
    mode: ConverseMode,
    /// Segment sample size.
    #[arg(long, default_value_t = 201)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Seeded candidates (segment) or perturbed maps (disc).
    #[arg(long, default_value_t = 49)]
    candidates: usize,
    #[arg(long, default_value_t = 8)]
    seed: u64,
    /// Content every segment candidate must keep.
    #[arg(long, default_value_t = 0.2)]
    floor: f64,
    /// Disc grid resolution.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    /// Radius of the disc that must be covered.
    #[arg(long, default_value_t = 0.85)]
    radius: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    /// Rejected configuration or precondition.
    Rejected(String),
    /// A completed run failed a check.
    Check(String, Value),
}

impl From<lipflat::Error> for CliError {
    fn from(e: lipflat::Error) -> Self {
        CliError::Rejected(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Rejected(e.to_string())
    }
}

fn reject(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Rejected(format!("invalid value for `{field}`: {reason}"))
}

fn parse_norm(field: &str, s: &str) -> Result<Norm, CliError> {
    match s {
        "l1" => Ok(Norm::P(1.0)),
        "l2" => Ok(Norm::P(2.0)),
        "linf" | "inf" => Ok(Norm::P(f64::INFINITY)),
        _ => {
            let p: f64 = s
                .trim_start_matches('l')
                .parse()
                .map_err(|_| reject(field, format!("{s:?} is not l1, l2, linf or an exponent")))?;
            if p >= 1.0 {
                Ok(Norm::P(p))
            } else {
                Err(reject(field, format!("exponent {p} is below 1")))
            }
        }
    }
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(reject(field, format!("{x} is not a positive number")))
    }
}

fn open_unit(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(reject(field, format!("{x} is not in (0, 1)")))
    }
}

fn exists(field: &str, p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(reject(field, format!("{} does not exist", p.display())))
    }
}

impl Input {
    fn validate(&self) -> Result<(), CliError> {
        parse_norm("metric", &self.metric)?;
        match (&self.set, &self.matrix) {
            (Some(p), None) => exists("set", p),
            (None, Some(p)) => exists("matrix", p),
            _ => Err(reject("set", "pass exactly one of --set or --matrix")),
        }
    }

    fn load(&self) -> Result<FiniteMetricSpace, CliError> {
        if let Some(p) = &self.set {
            let cloud = read_cloud_csv(BufReader::new(File::open(p)?))?;
            let norm = NormedSpace::new(cloud.dim(), parse_norm("metric", &self.metric)?)?;
            Ok(FiniteMetricSpace::from_cloud(cloud, norm)?)
        } else {
            let p = self.matrix.as_ref().expect("validated");
            Ok(FiniteMetricSpace::from_matrix(read_matrix_csv(BufReader::new(File::open(p)?))?)?)
        }
    }
}

fn coordinate_map(space: &FiniteMetricSpace, field: &str, norm: &str) -> Result<LipschitzMap, CliError> {
    let cloud = space
        .coords()
        .ok_or_else(|| reject(field, "a coordinate map needs a point cloud input"))?;
    let target = NormedSpace::new(cloud.dim(), parse_norm(field, norm)?)?;
    Ok(LipschitzMap::new(space, target, cloud.clone())?)
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let io = |e: csv::Error| CliError::Rejected(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_map(path: &Path, f: &LipschitzMap) -> Result<(), CliError> {
    write_cloud_csv(BufWriter::new(File::create(path)?), f.values())?;
    Ok(())
}

fn gen(a: &GenArgs) -> Result<Value, CliError> {
    let kind = a.params.kind(a.kind)?;
    let g = generate(kind)?;
    write_cloud_csv(BufWriter::new(File::create(&a.output)?), &g.points)?;
    let out = json!({
        "kind": g.kind,
        "points": g.points.len(),
        "expected_points": g.expected_len(),
        "spacing": g.spacing,
        "coupled_delta": g.coupled_delta(),
    });
    if g.points.len() != g.expected_len() {
        return Err(CliError::Check(format!("generated {} points, expected {}", g.points.len(), g.expected_len()), out));
    }
    Ok(out)
}

fn embed(a: &EmbedArgs) -> Result<Value, CliError> {
    a.input.validate()?;
    positive("eps", a.eps)?;
    let space = a.input.load()?;
    let net = max_epsilon_net(&space, a.eps)?;
    let f = kuratowski_embed(&space, &net)?;
    let lip = lipschitz_constant(&space, f.target(), f.values());
    let distortion = distort_check(&f, &space)?;
    if let Some(p) = &a.output {
        write_map(p, &f)?;
    }
    let out = json!({
        "points": space.len(),
        "net": net,
        "target_dim": f.target().dim(),
        "lip": lip,
        "distortion": distortion,
    });
    if lip > 1.0 + 1e-12 || distortion.max > 2.0 * a.eps * (1.0 + 1e-12) {
        return Err(CliError::Check(format!("lip {lip} or distortion {} above 2 eps", distortion.max), out));
    }
    Ok(out)
}

fn content(a: &ContentArgs) -> Result<Value, CliError> {
    a.input.validate()?;
    positive("s", a.s)?;
    if let Some(d) = a.delta {
        positive("delta", d)?;
    }
    let space = a.input.load()?;
    let cloud = space
        .coords()
        .ok_or_else(|| reject("matrix", "content estimates need a point cloud input"))?;
    let norm = space.coord_norm().expect("cloud carries a norm");
    let spacing = space.min_separation();
    let delta = a.delta.unwrap_or(if spacing.is_finite() { 2.0 * spacing } else { 1.0 });
    let est: ContentEstimate = match a.method {
        MethodName::Greedy => greedy_content(cloud, norm, a.s, delta)?,
        MethodName::Grid => grid_content(cloud, a.s, delta)?,
    };
    if let Some(p) = &a.cover {
        let k = est.cover.first().map_or(0, |e| e.center.len());
        let mut header: Vec<String> = ["center_index", "radius", "diameter", "covers"].map(String::from).to_vec();
        header.extend((1..=k).map(|i| format!("c{i}")));
        let rows = est.cover.iter().map(|e| {
            let mut r = vec![e.center_index.to_string(), format!("{:?}", e.radius), format!("{:?}", e.diameter), e.covers.to_string()];
            r.extend(e.center.iter().map(|c| format!("{c:?}")));
            r
        });
        write_csv(p, &header, rows)?;
    }
    let covered = est.method == Method::Grid || covers(&est, cloud, norm);
    let out = json!({
        "points": space.len(),
        "value": est.value,
        "packing": est.packing,
        "elements": est.cover.len(),
        "delta": est.delta,
        "s": est.s,
        "method": est.method,
        "covers_input": covered,
    });
    if !covered {
        return Err(CliError::Check("cover misses an input point".into(), out));
    }
    Ok(out)
}

fn tangent(a: &TangentArgs) -> Result<Value, CliError> {
    a.input.validate()?;
    open_unit("theta", a.theta)?;
    if a.pieces == 0 {
        return Err(reject("pieces", "need at least one piece"));
    }
    parse_norm("target", &a.target)?;
    let space = a.input.load()?;
    let f = coordinate_map(&space, "target", &a.target)?;
    let frags = default_fragments(&space)?;
    let all: Vec<usize> = (0..space.len()).collect();
    let field = fit_tangent_field(&space, &all, &f, &frags, a.d, a.theta)?;
    let part = partition_by_field(&field, &f, &frags, a.theta, a.pieces, a.seed)?;
    if let Some(p) = &a.output {
        let mut piece_of = vec![String::new(); space.len()];
        for (k, piece) in part.pieces.iter().enumerate() {
            for &i in &piece.indices {
                piece_of[i] = k.to_string();
            }
        }
        let header = ["index", "violation", "piece"].map(String::from);
        let rows = field
            .points
            .iter()
            .zip(&field.per_point_violation)
            .map(|(&i, v)| vec![i.to_string(), format!("{v:?}"), piece_of[i].clone()]);
        write_csv(p, &header, rows)?;
    }
    Ok(json!({
        "points": space.len(),
        "d": field.d,
        "violation": field.violation,
        "incident_length": field.incident_length,
        "partition": part.summary(),
    }))
}

fn flatten_cmd(a: &FlattenArgs) -> Result<Value, CliError> {
    a.input.validate()?;
    positive("eps", a.eps)?;
    open_unit("theta", a.theta)?;
    positive("s", a.s)?;
    for (name, v) in [("content_delta", a.content_delta), ("margin", a.margin), ("delta", a.delta), ("kuratowski", a.kuratowski)] {
        if let Some(x) = v {
            positive(name, x)?;
        }
    }
    if let Some(b) = a.budget_slack {
        if !(b >= 0.0) {
            return Err(reject("budget_slack", format!("{b} is negative")));
        }
    }
    open_unit("collapse_ratio", a.collapse_ratio)?;
    if a.pieces == 0 {
        return Err(reject("pieces", "need at least one piece"));
    }
    let target = a.target.as_deref().unwrap_or("l2");
    parse_norm("target", target)?;
    let space = a.input.load()?;
    let f = match a.kuratowski {
        Some(e) => kuratowski_embed(&space, &max_epsilon_net(&space, e)?)?,
        None => coordinate_map(&space, "target", target)?,
    };
    let cfg = FlattenConfig {
        s: a.s,
        content_delta: a.content_delta,
        margin: a.margin,
        delta: a.delta,
        pieces: a.pieces,
        seed: a.seed,
        collapse_ratio: a.collapse_ratio,
        budget_slack: a.budget_slack,
        ..FlattenConfig::default()
    };
    let frags = default_fragments(&space)?;
    let all: Vec<usize> = (0..space.len()).collect();
    let (sigma, report) = flatten(&space, &all, &f, a.d, a.eps, a.theta, &frags, &cfg)?;
    if let Some(p) = &a.output {
        write_map(p, &sigma)?;
    }
    let lip = lipschitz_constant(&space, sigma.target(), sigma.values());
    let sup = sigma.sup_dist(&f);
    let out = json!({
        "lip_sigma_recomputed": lip,
        "sup_move_recomputed": sup,
        "report": report,
    });
    let tol = 1e-9;
    if lip > report.budget * (1.0 + tol) + tol || sup > a.eps {
        return Err(CliError::Check(format!("lip {lip} vs budget {}, sup move {sup} vs eps {}", report.budget, a.eps), out));
    }
    if matches!(report.outcome, Outcome::Collapsed) && !report.measure_reduction_holds() {
        return Err(CliError::Check("collapsed run exceeds its measure bound".into(), out));
    }
    Ok(out)
}

fn converse(a: &ConverseArgs) -> Result<Value, CliError> {
    positive("eps", a.eps)?;
    match a.mode {
        ConverseMode::Segment => converse_segment(a),
        ConverseMode::Disc => converse_disc(a),
    }
}

fn converse_segment(a: &ConverseArgs) -> Result<Value, CliError> {
    if a.n < 2 {
        return Err(reject("n", "need at least two points"));
    }
    if !(a.floor >= 0.0) {
        return Err(reject("floor", "need a nonnegative floor"));
    }
    let g = generate(Kind::Segment { n: a.n })?;
    let space = g.space()?;
    let f = LipschitzMap::identity(&space)?;
    let delta = g.coupled_delta();
    let mut maps = segment_candidates(&space, a.candidates, a.seed)?;
    let frags = default_fragments(&space)?;
    let all: Vec<usize> = (0..space.len()).collect();
    let (sigma, report) = flatten(&space, &all, &f, 0, a.eps, 0.9, &frags, &FlattenConfig::default())?;
    maps.push(sigma);
    let mut rows = Vec::new();
    let mut floor = f64::INFINITY;
    let mut admissible = true;
    for m in &maps {
        let lip = lipschitz_constant(&space, m.target(), m.values());
        let sup = m.sup_dist(&f);
        let est = greedy_content(m.values(), m.target(), 1.0, delta)?;
        admissible &= lip <= 1.0 + 1e-12 && sup < a.eps;
        floor = floor.min(est.packing_value());
        rows.push(json!({ "lip": lip, "sup": sup, "packing": est.packing_value(), "cover": est.value }));
    }
    let passes = floor >= a.floor;
    let out = json!({
        "delta": delta,
        "candidates": rows,
        "admissible": admissible,
        "min_content": floor,
        "floor": a.floor,
        "passes": passes,
        "flatten_outcome": report.outcome,
    });
    if !admissible {
        return Err(CliError::Rejected(format!("a candidate is not 1-lipschitz within {} of the identity", a.eps)));
    }
    if !passes {
        return Err(CliError::Check(format!("content {floor} below floor {}", a.floor), out));
    }
    Ok(out)
}

fn converse_disc(a: &ConverseArgs) -> Result<Value, CliError> {
    if a.resolution < 4 {
        return Err(reject("resolution", "need at least 4"));
    }
    positive("radius", a.radius)?;
    // amplitude just under eps so every map stays eps-close to the identity
    let amplitude = 0.99 * a.eps;
    let mut maps = vec![GridMap::sample(a.resolution, |p| p)?];
    for c in 0..a.candidates {
        maps.push(GridMap::sample(a.resolution, smooth_perturbation(lipflat::rng::derive(a.seed, c as u64), amplitude))?);
    }
    let mut rows = Vec::new();
    let mut covered = 0;
    for m in &maps {
        let c = degree_coverage_within(m, a.eps, a.radius)?;
        covered += c.covered as usize;
        rows.push(json!({
            "covered": c.covered,
            "covered_fraction": c.covered_fraction,
            "by_degree": c.by_degree,
            "by_proximity": c.by_proximity,
            "boundary_disp": c.boundary_disp,
        }));
    }
    let out = json!({ "maps": rows, "covered": covered, "total": maps.len(), "radius": a.radius });
    if covered != maps.len() {
        return Err(CliError::Check(format!("{} of {} maps leave part of the disc uncovered", maps.len() - covered, maps.len()), out));
    }
    Ok(out)
}

fn execute(cmd: &Command) -> Result<Value, CliError> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Embed(a) => embed(a),
        Command::Content(a) => content(a),
        Command::Tangent(a) => tangent(a),
        Command::Flatten(a) => flatten_cmd(a),
        Command::Converse(a) => converse(a),
        Command::Verify(a) => verify::run(a.seed),
    }
}

/// Turns a config table into argv so the file goes through the same
/// parsing, defaults and validation as flags.
fn config_argv(path: &Path) -> Result<Vec<String>, CliError> {
    exists("config", path)?;
    let text = std::fs::read_to_string(path)?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| reject("config", e))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| reject("config", e))?;
        serde_json::to_value(t).map_err(|e| reject("config", e))?
    };
    let Value::Object(map) = value else {
        return Err(reject("config", "expected a table"));
    };
    let command = map
        .get("command")
        .and_then(Value::as_str)
        .ok_or_else(|| reject("command", "missing subcommand name"))?;
    let mut argv = vec!["lipflat".to_string(), command.to_string()];
    for key in ["kind", "mode"] {
        if let Some(v) = map.get(key) {
            argv.push(scalar(key, v)?);
        }
    }
    for (key, v) in &map {
        if matches!(key.as_str(), "command" | "kind" | "mode") || v.is_null() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => argv.push(flag),
            Value::Bool(false) => {}
            _ => {
                argv.push(flag);
                argv.push(scalar(key, v)?);
            }
        }
    }
    Ok(argv)
}

fn scalar(key: &str, v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(reject(key, "expected a string or a number")),
    }
}

fn parse(argv: Vec<String>) -> Result<Cli, ExitCode> {
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn emit(path: Option<&Path>, report: &Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "{text}")?;
            w.flush()
        }
        None => writeln!(std::io::stdout().lock(), "{text}"),
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(n) = cli.threads {
        lipflat::par::init_threads(n);
    }
    let command = match (&cli.config, cli.command.clone()) {
        (Some(_), Some(_)) => {
            eprintln!("error: pass either a subcommand or --config, not both");
            return ExitCode::from(1);
        }
        (None, None) => {
            eprintln!("error: missing subcommand; see --help");
            return ExitCode::from(1);
        }
        (None, Some(c)) => c,
        (Some(path), None) => {
            let argv = match config_argv(path) {
                Ok(a) => a,
                Err(e) => return fail(e),
            };
            match parse(argv) {
                Ok(c) => c.command.expect("argv names a subcommand"),
                Err(code) => return code,
            }
        }
    };
    let result = execute(&command);
    let (status, body) = match result {
        Ok(v) => ("ok", v),
        Err(CliError::Check(msg, v)) => {
            eprintln!("check failed: {msg}");
            ("check_failed", json!({ "message": msg, "result": v }))
        }
        Err(e) => return fail(e),
    };
    let report = json!({
        "schema": SCHEMA,
        "version": lipflat::VERSION,
        "config": command,
        "status": status,
        "result": body,
    });
    if let Err(e) = emit(cli.report.as_deref(), &report) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(1);
    }
    if status == "ok" {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn fail(e: CliError) -> ExitCode {
    match e {
        CliError::Rejected(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        CliError::Check(msg, _) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
    }
}
