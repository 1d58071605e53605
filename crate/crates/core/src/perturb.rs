//! Scalar and vector perturbations, cutoff gluing, budget rescaling and the
//! flattening pipeline.
//!
//! The scalar perturbation is a shortest-path problem. Every point starts at
//! its level `T(F(x))`; moving along an edge `y -> z` with
//! `T(F(z)) >= T(F(y))` costs `delta |T| len` when the edge is local to `V`
//! and `T(F(z)) - T(F(y)) + delta |T| len` otherwise. The value `f(x)` is the
//! cheapest arrival cost over all starts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::content::{greedy_content, ContentEstimate};
use crate::corpus::{distort_check, DistortionReport};
use crate::metric::{neighborhood_graph, CurveFragment, FiniteMetricSpace, Graph, GraphMode, LipschitzMap};
use crate::normgeom::{adapted_basis, AdaptedBasis, Sampling};
use crate::tangent::{fit_tangent_field, partition_by_field, PartitionSummary, Piece};
use crate::{par, Error, PointCloud, Result};

/// Relative slack used when asserting inequalities on computed values.
pub const CHECK_TOL: f64 = 1e-12;

/// `{x : D(x, S) < margin}`, ascending. Distances within a relative
/// `1e-12` of the margin count as on the boundary and are excluded.
pub fn neighborhood_v(space: &FiniteMetricSpace, s: &[usize], margin: f64) -> Result<Vec<usize>> {
    if !(margin > 0.0) {
        return Err(Error::param("margin", "need margin > 0"));
    }
    let cut = margin * (1.0 - 1e-12);
    let inside = par::map(space.len(), |x| space.dist_to_set(x, s) < cut);
    Ok((0..space.len()).filter(|&x| inside[x]).collect())
}

fn mask(n: usize, idx: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in idx {
        m[i] = true;
    }
    m
}

/// Edge rules for [`scalar_perturb`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarOptions {
    /// Edges with both ends in `V` are cheap only up to this length.
    /// `None`: every such edge is cheap.
    pub reach: Option<f64>,
    /// Also allow descending moves `z -> y` at cost `3 delta |T| len`.
    pub level_moves: bool,
}

impl ScalarOptions {
    /// Rules used inside [`flatten`].
    pub fn local(reach: f64) -> Self {
        ScalarOptions {
            reach: Some(reach),
            level_moves: true,
        }
    }

    fn is_local(&self, len: f64) -> bool {
        self.reach.map_or(true, |r| len <= r)
    }
}

fn check_scalar_args(graph: &Graph, levels: &[f64], t_norm: f64, in_v: &[bool], delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", "need 0 < delta < 1"));
    }
    if !(t_norm > 0.0 && t_norm.is_finite()) {
        return Err(Error::param("T", "functional must be nonzero"));
    }
    let n = graph.node_count();
    for len in [levels.len(), in_v.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    Ok(())
}

/// Scalar perturbation of the level function `levels = T o F` whose
/// Lipschitz norm is `t_norm`, on `graph`, with neighbourhood mask `in_v`.
/// Dense Dijkstra from every start at once; ties resolve to the smallest
/// index.
pub fn scalar_perturb(
    graph: &Graph,
    levels: &[f64],
    t_norm: f64,
    in_v: &[bool],
    delta: f64,
    opts: ScalarOptions,
) -> Result<Vec<f64>> {
    check_scalar_args(graph, levels, t_norm, in_v, delta)?;
    let n = graph.node_count();
    let mut dist = levels.to_vec();
    let mut done = vec![false; n];
    let slope = delta * t_norm;
    for _ in 0..n {
        let mut y = usize::MAX;
        for x in 0..n {
            if !done[x] && (y == usize::MAX || dist[x] < dist[y]) {
                y = x;
            }
        }
        done[y] = true;
        for &(z, len) in graph.neighbors(y) {
            if done[z] {
                continue;
            }
            let rise = levels[z] - levels[y];
            let w = if rise >= 0.0 {
                if in_v[y] && in_v[z] && opts.is_local(len) {
                    slope * len
                } else {
                    rise + slope * len
                }
            } else if opts.level_moves {
                3.0 * slope * len
            } else {
                continue;
            };
            let cand = dist[y] + w;
            if cand < dist[z] {
                dist[z] = cand;
            }
        }
    }
    Ok(dist)
}

/// [`scalar_perturb`] for a covector `t` applied to the values of `f`;
/// the functional's norm is taken as `|t|_* Lip F`.
pub fn scalar_perturb_map(
    graph: &Graph,
    f: &LipschitzMap,
    t: &[f64],
    v: &[usize],
    delta: f64,
    opts: ScalarOptions,
) -> Result<Vec<f64>> {
    let levels = apply_covector(f, t)?;
    let t_norm = f.target().dual_norm(t) * f.lip();
    scalar_perturb(graph, &levels, t_norm, &mask(graph.node_count(), v), delta, opts)
}

fn apply_covector(f: &LipschitzMap, t: &[f64]) -> Result<Vec<f64>> {
    if t.len() != f.target().dim() {
        return Err(Error::DimensionMismatch {
            expected: f.target().dim(),
            found: t.len(),
        });
    }
    Ok((0..f.len())
        .map(|i| f.value(i).iter().zip(t).map(|(a, b)| a * b).sum())
        .collect())
}

/// Edge audit of a scalar perturbation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarCheck {
    pub edges: usize,
    /// Edges with both ends in `V` that count as local.
    pub local_v_edges: usize,
    /// Edges failing `|f(y)-f(z)| <= |T(F(y))-T(F(z))| + 3 delta |T| len`.
    pub lipschitz_violations: usize,
    /// Local `V` edges failing `|f(y)-f(z)| <= 3 delta |T| len`.
    pub flat_violations: usize,
    /// Points with `f > T o F`.
    pub above_baseline: usize,
    /// `max |T(F(x)) - f(x)|`.
    pub sup_move: f64,
}

impl ScalarCheck {
    pub fn passed(&self) -> bool {
        self.lipschitz_violations == 0 && self.flat_violations == 0 && self.above_baseline == 0
    }

    fn absorb(&mut self, o: &ScalarCheck) {
        self.edges += o.edges;
        self.local_v_edges += o.local_v_edges;
        self.lipschitz_violations += o.lipschitz_violations;
        self.flat_violations += o.flat_violations;
        self.above_baseline += o.above_baseline;
        self.sup_move = self.sup_move.max(o.sup_move);
    }
}

fn tol(xs: [f64; 4]) -> f64 {
    CHECK_TOL * xs.iter().fold(1.0_f64, |m, x| m.max(x.abs()))
}

/// Checks the edge inequalities on every edge of `graph`.
pub fn check_scalar(
    graph: &Graph,
    levels: &[f64],
    t_norm: f64,
    in_v: &[bool],
    delta: f64,
    opts: ScalarOptions,
    f: &[f64],
) -> ScalarCheck {
    let slope = 3.0 * delta * t_norm;
    let mut c = ScalarCheck {
        edges: graph.edge_count(),
        ..ScalarCheck::default()
    };
    for &(y, z, len) in graph.edges() {
        let step = (f[y] - f[z]).abs();
        let t = tol([f[y], f[z], levels[y], levels[z]]);
        if step > (levels[y] - levels[z]).abs() + slope * len + t {
            c.lipschitz_violations += 1;
        }
        if in_v[y] && in_v[z] && opts.is_local(len) {
            c.local_v_edges += 1;
            if step > slope * len + t {
                c.flat_violations += 1;
            }
        }
    }
    for (&fx, &lx) in f.iter().zip(levels) {
        if fx > lx {
            c.above_baseline += 1;
        }
        c.sup_move = c.sup_move.max(lx - fx);
    }
    c
}

/// Settings for [`vector_perturb`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorOptions {
    /// Radius of `V` around the piece; also the local edge length.
    pub margin: f64,
    /// Scalar slope parameter; `None` uses `1 - theta`.
    pub delta: Option<f64>,
    pub scalar: ScalarOptions,
    pub sampling: Sampling,
}

impl VectorOptions {
    pub fn new(margin: f64) -> Self {
        VectorOptions {
            margin,
            delta: None,
            scalar: ScalarOptions::local(margin),
            sampling: Sampling::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorPerturbation {
    pub sigma: LipschitzMap,
    pub basis: AdaptedBasis,
    pub v: Vec<usize>,
    pub delta: f64,
    /// `|T_i|` in the target's dual norm, `T_i = b_i* o Q`.
    pub functional_norms: Vec<f64>,
    pub check: ScalarCheck,
    /// `max_x |sigma_i(x) - F(x)|`.
    pub sup_move: f64,
    /// Least `e` with `|sigma(y)-sigma(z)| <= |P(F(y)-F(z))| + e D(y,z)` over
    /// local pairs of the piece.
    pub flat_slack: f64,
    /// `flat_slack / ((1 - theta) Lip F)`.
    pub c_v: f64,
}

fn subtract(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `sigma_i = P o F + sum_i f_i b_i` with `f_i` the scalar perturbation of
/// `b_i* o Q o F` on `graph`.
pub fn vector_perturb(
    space: &FiniteMetricSpace,
    graph: &Graph,
    f: &LipschitzMap,
    piece: &Piece,
    theta: f64,
    opts: &VectorOptions,
) -> Result<VectorPerturbation> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", "need 0 < theta < 1"));
    }
    if graph.node_count() != space.len() || f.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: graph.node_count().min(f.len()),
        });
    }
    let target = f.target();
    let m = target.dim();
    let basis = adapted_basis(target, &piece.frame, opts.sampling)?;
    let delta = opts.delta.unwrap_or(1.0 - theta);
    let v = neighborhood_v(space, &piece.indices, opts.margin)?;
    let in_v = mask(space.len(), &v);
    let n = space.len();
    let functionals: Vec<Vec<f64>> = (0..m).map(|i| basis.complement_functional(i)).collect();
    let functional_norms: Vec<f64> = functionals.iter().map(|t| target.dual_norm(t)).collect();
    let coords = par::map(m, |i| -> Result<(Vec<f64>, ScalarCheck)> {
        let levels = apply_covector(f, &functionals[i])?;
        let t_norm = functional_norms[i] * f.lip();
        if !(t_norm > 1e-14) {
            // nothing to perturb along this coordinate
            return Ok((levels, ScalarCheck::default()));
        }
        let vals = scalar_perturb(graph, &levels, t_norm, &in_v, delta, opts.scalar)?;
        let check = check_scalar(graph, &levels, t_norm, &in_v, delta, opts.scalar, &vals);
        Ok((vals, check))
    });
    let mut fs = Vec::with_capacity(m);
    let mut check = ScalarCheck::default();
    for c in coords {
        let (vals, ck) = c?;
        check.absorb(&ck);
        fs.push(vals);
    }
    let mut data = Vec::with_capacity(n * m);
    for x in 0..n {
        let mut y = mat_vec(&basis.p, f.value(x));
        for (i, fi) in fs.iter().enumerate() {
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += fi[x] * basis.basis[(k, i)];
            }
        }
        data.extend(y);
    }
    let sigma = LipschitzMap::new(space, target.clone(), PointCloud::new(m, data)?)?;
    let sup_move = sigma.sup_dist(f);
    let reach = opts.scalar.reach.unwrap_or(f64::INFINITY);
    let flat_slack = flat_slack(space, f, &sigma, &basis.p, &piece.indices, reach);
    let c_v = if f.lip() > 0.0 {
        flat_slack / ((1.0 - theta) * f.lip())
    } else {
        0.0
    };
    Ok(VectorPerturbation {
        sigma,
        basis,
        v,
        delta,
        functional_norms,
        check,
        sup_move,
        flat_slack,
        c_v,
    })
}

fn flat_slack(space: &FiniteMetricSpace, f: &LipschitzMap, sigma: &LipschitzMap, p: &DMatrix<f64>, s: &[usize], reach: f64) -> f64 {
    let t = f.target();
    par::max(s.len(), |a| {
        let y = s[a];
        s[a + 1..]
            .iter()
            .filter(|&&z| space.dist(y, z) <= reach)
            .map(|&z| {
                let ds = t.dist(sigma.value(y), sigma.value(z));
                let dp = t.norm(&mat_vec(p, &subtract(f.value(y), f.value(z))));
                (ds - dp) / space.dist(y, z)
            })
            .fold(0.0, f64::max)
    })
    .max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GluePiece {
    pub indices: Vec<usize>,
    pub sigma: LipschitzMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlueReport {
    /// `max(Lip F, Lip sigma_i on B(S_i, rho0))`.
    pub l: f64,
    pub rho0: f64,
    pub eps: f64,
    /// `L + 2 eps / rho0`.
    pub bound: f64,
    pub lip: f64,
    pub within_bound: bool,
}

/// `chi = max(rho0/2 - D(x,S), 0) / (rho0/2)`.
pub fn cutoff(dist_to_piece: f64, rho0: f64) -> f64 {
    ((rho0 / 2.0 - dist_to_piece).max(0.0)) / (rho0 / 2.0)
}

/// `sigma = F + sum chi_i (sigma_i - F)`. Rejects pieces closer than
/// `2 rho0` and pieces moving some point of `B(S_i, rho0)` by `eps` or more.
pub fn glue(space: &FiniteMetricSpace, f: &LipschitzMap, pieces: &[GluePiece], rho0: f64, eps: f64) -> Result<(LipschitzMap, GlueReport)> {
    if !(rho0 > 0.0) || !(eps > 0.0) {
        return Err(Error::param("rho0", "need rho0 > 0 and eps > 0"));
    }
    for (a, pa) in pieces.iter().enumerate() {
        for pb in &pieces[a + 1..] {
            let gap = pa
                .indices
                .iter()
                .map(|&x| space.dist_to_set(x, &pb.indices))
                .fold(f64::INFINITY, f64::min);
            if gap < 2.0 * rho0 {
                return Err(Error::Precondition(format!(
                    "pieces at distance {gap} overlap after inflation by rho0 = {rho0}"
                )));
            }
        }
    }
    let target = f.target();
    let n = space.len();
    let dists: Vec<Vec<f64>> = pieces
        .iter()
        .map(|p| par::map(n, |x| space.dist_to_set(x, &p.indices)))
        .collect();
    let mut l = f.lip();
    for (p, d) in pieces.iter().zip(&dists) {
        let ball: Vec<usize> = (0..n).filter(|&x| d[x] < rho0).collect();
        let worst = ball
            .iter()
            .map(|&x| target.dist(p.sigma.value(x), f.value(x)))
            .fold(0.0, f64::max);
        if worst >= eps {
            return Err(Error::Precondition(format!(
                "piece moves a point of its rho0-neighbourhood by {worst} >= eps = {eps}"
            )));
        }
        let lip_ball = par::max(ball.len(), |a| {
            ball[a + 1..]
                .iter()
                .map(|&z| target.dist(p.sigma.value(ball[a]), p.sigma.value(z)) / space.dist(ball[a], z))
                .fold(0.0, f64::max)
        });
        l = l.max(lip_ball);
    }
    let m = target.dim();
    let mut data = Vec::with_capacity(n * m);
    for x in 0..n {
        let mut y = f.value(x).to_vec();
        for (p, d) in pieces.iter().zip(&dists) {
            let chi = cutoff(d[x], rho0);
            if chi > 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += chi * (p.sigma.value(x)[k] - f.value(x)[k]);
                }
            }
        }
        data.extend(y);
    }
    let sigma = LipschitzMap::new(space, target.clone(), PointCloud::new(m, data)?)?;
    let bound = l + 2.0 * eps / rho0;
    let report = GlueReport {
        l,
        rho0,
        eps,
        bound,
        lip: sigma.lip(),
        within_bound: sigma.lip() <= bound + 1e-9,
    };
    Ok((sigma, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkReport {
    pub budget: f64,
    pub delta: f64,
    pub sup_move: f64,
}

/// `g = (L - delta) f / L` with `delta = eps / (2 L |f|_inf)`, clamped so
/// the factor stays in `[0, 1]`.
pub fn shrink_to_budget(space: &FiniteMetricSpace, f: &LipschitzMap, budget: f64, eps: f64) -> Result<(LipschitzMap, ShrinkReport)> {
    if !(budget > 0.0) || !(eps > 0.0) {
        return Err(Error::param("budget", "need budget > 0 and eps > 0"));
    }
    if f.lip() > budget * (1.0 + CHECK_TOL) {
        return Err(Error::Precondition(format!(
            "Lipschitz constant {} exceeds budget {budget}",
            f.lip()
        )));
    }
    let norm = f.sup_norm();
    if norm == 0.0 {
        return Ok((
            f.clone(),
            ShrinkReport {
                budget,
                delta: 0.0,
                sup_move: 0.0,
            },
        ));
    }
    let delta = (eps / (2.0 * budget * norm)).min(budget);
    let factor = (budget - delta) / budget;
    let data = f.values().as_slice().iter().map(|x| x * factor).collect();
    let g = LipschitzMap::new(space, f.target().clone(), PointCloud::new(f.target().dim(), data)?)?;
    let sup_move = g.sup_dist(f);
    Ok((g, ShrinkReport { budget, delta, sup_move }))
}

/// `c + lambda (f - c)`.
pub fn rescale_about(space: &FiniteMetricSpace, f: &LipschitzMap, center: &[f64], lambda: f64) -> Result<LipschitzMap> {
    let m = f.target().dim();
    let mut data = Vec::with_capacity(f.len() * m);
    for x in 0..f.len() {
        data.extend(f.value(x).iter().zip(center).map(|(v, c)| c + lambda * (v - c)));
    }
    LipschitzMap::new(space, f.target().clone(), PointCloud::new(m, data)?)
}

/// `F + t (sigma - F)`.
pub fn blend(space: &FiniteMetricSpace, f: &LipschitzMap, sigma: &LipschitzMap, t: f64) -> Result<LipschitzMap> {
    let data = f
        .values()
        .as_slice()
        .iter()
        .zip(sigma.values().as_slice())
        .map(|(a, b)| a + t * (b - a))
        .collect();
    LipschitzMap::new(space, f.target().clone(), PointCloud::new(f.target().dim(), data)?)
}

/// Settings for [`flatten`]. `None` fields take data-driven defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlattenConfig {
    /// Dimension `s` for content figures.
    pub s: f64,
    /// Content scale; default twice the spacing of `S`.
    pub content_delta: Option<f64>,
    /// `V` margin and local edge length; default twice the spacing of `S`.
    pub margin: Option<f64>,
    /// Scalar slope; default `1 - theta`.
    pub delta: Option<f64>,
    /// Piece budget for the partition.
    pub pieces: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// A run collapses when the content ratio falls below this.
    pub collapse_ratio: f64,
    /// Lipschitz budget is `K~ Lip F + budget_slack`; default 0 when
    /// `K~ = 1` and `eps` otherwise.
    pub budget_slack: Option<f64>,
}

impl Default for FlattenConfig {
    fn default() -> Self {
        FlattenConfig {
            s: 1.0,
            content_delta: None,
            margin: None,
            delta: None,
            pieces: 4,
            seed: crate::rng::DEFAULT_SEED,
            sampling: Sampling::default(),
            collapse_ratio: 0.8,
            budget_slack: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Nothing to do: `S` empty or `d >= m`.
    Unchanged,
    Collapsed,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlattenParameters {
    pub d: usize,
    pub theta: f64,
    pub delta: f64,
    pub eps: f64,
    pub margin: f64,
    pub rho0: f64,
    pub s: f64,
    pub content_delta: f64,
    pub pieces: usize,
    pub seed: u64,
}

/// The candidate map before any fallback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lip: f64,
    pub sup_move: f64,
    pub content_ratio: f64,
    /// Factor applied to reach the Lipschitz budget (1 when not needed).
    pub rescale: f64,
    pub shrink: Option<ShrinkReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub outcome: Outcome,
    pub parameters: FlattenParameters,
    pub lip_f: f64,
    pub lip_sigma: f64,
    pub budget: f64,
    pub tilde_k: f64,
    pub k_d: f64,
    pub sup_move: f64,
    pub content_before: ContentEstimate,
    pub content_after: ContentEstimate,
    pub content_ratio: f64,
    /// Largest `rho` such that every pair of a piece closer than `rho`
    /// satisfies the flatness inequality with the construction's slack.
    pub flat_radius: f64,
    /// Measured flatness slack on local pairs of `S`.
    pub flat_slack: f64,
    pub c_v: f64,
    /// `content_after / (flat_slack^(s-d) content_before)`.
    pub c_hat: f64,
    /// `64 (K_d Lip F + 1)^s`.
    pub c_hat_cap: f64,
    /// `flat_slack^(s-d) c_hat content_before`.
    pub measure_bound: f64,
    pub distortion: DistortionReport,
    pub scalar: ScalarCheck,
    pub glue: Option<GlueReport>,
    pub partition: Option<PartitionSummary>,
    pub discarded: Vec<usize>,
    pub candidate: Candidate,
    /// Blend factor `t` of the returned `F + t (sigma - F)`.
    pub blend: f64,
}

impl PerturbationReport {
    pub fn measure_reduction_holds(&self) -> bool {
        self.content_after.value <= self.measure_bound * (1.0 + 1e-9) && self.c_hat <= self.c_hat_cap
    }
}

fn spacing_of(space: &FiniteMetricSpace, s: &[usize]) -> f64 {
    par::min(s.len(), |a| {
        s.iter()
            .filter(|&&b| b != s[a])
            .map(|&b| space.dist(s[a], b))
            .fold(f64::INFINITY, f64::min)
    })
}

fn image_of(f: &LipschitzMap, s: &[usize]) -> PointCloud {
    f.values().select(s)
}

fn content_of(f: &LipschitzMap, s: &[usize], dim: f64, delta: f64) -> Result<ContentEstimate> {
    greedy_content(&image_of(f, s), f.target(), dim, delta)
}

/// Separates pieces: pieces are visited largest first and points within
/// `2 rho0` of an already kept piece are discarded.
fn disjointify(space: &FiniteMetricSpace, pieces: Vec<Piece>, rho0: f64) -> (Vec<Piece>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    order.sort_by(|&a, &b| pieces[b].indices.len().cmp(&pieces[a].indices.len()).then(a.cmp(&b)));
    let mut kept: Vec<Piece> = Vec::new();
    let mut discarded = Vec::new();
    for k in order {
        let mut p = pieces[k].clone();
        let (keep, drop): (Vec<usize>, Vec<usize>) = p
            .indices
            .iter()
            .partition(|&&x| kept.iter().all(|q| space.dist_to_set(x, &q.indices) >= 2.0 * rho0));
        discarded.extend(drop);
        p.indices = keep;
        if !p.indices.is_empty() {
            kept.push(p);
        }
    }
    discarded.sort_unstable();
    (kept, discarded)
}

fn min_gap(space: &FiniteMetricSpace, pieces: &[Piece]) -> f64 {
    let mut gap = f64::INFINITY;
    for (a, pa) in pieces.iter().enumerate() {
        for pb in &pieces[a + 1..] {
            for &x in &pa.indices {
                gap = gap.min(space.dist_to_set(x, &pb.indices));
            }
        }
    }
    gap
}

/// Largest `rho` below which every same-piece pair satisfies
/// `|sigma(y)-sigma(z)| <= |P(F(y)-F(z))| + slack D(y,z)`.
fn flat_radius(space: &FiniteMetricSpace, f: &LipschitzMap, sigma: &LipschitzMap, pieces: &[(Vec<usize>, DMatrix<f64>, f64)]) -> f64 {
    let t = f.target();
    let mut first_bad = f64::INFINITY;
    let mut widest: f64 = 0.0;
    for (s, p, slack) in pieces {
        let bad = par::min(s.len(), |a| {
            let y = s[a];
            s[a + 1..]
                .iter()
                .filter(|&&z| {
                    let d = space.dist(y, z);
                    let ds = t.dist(sigma.value(y), sigma.value(z));
                    let dp = t.norm(&mat_vec(p, &subtract(f.value(y), f.value(z))));
                    ds > dp + slack * d + CHECK_TOL * (1.0 + ds)
                })
                .map(|&z| space.dist(y, z))
                .fold(f64::INFINITY, f64::min)
        });
        first_bad = first_bad.min(bad);
        widest = widest.max(space.subset_diameter(s));
    }
    if first_bad.is_finite() {
        first_bad
    } else {
        widest
    }
}

/// Flattens `S` under `F`: fits a `d`-dimensional tangent field, partitions
/// `S` into pieces, perturbs each piece, glues, and brings the Lipschitz
/// constant within budget. When the candidate does not collapse the content
/// of `F(S)` within `eps`, the returned map is `F + t (sigma - F)` with sup
/// displacement at most `eps / 2` and the report's outcome is `Failed`.
#[allow(clippy::too_many_arguments)]
pub fn flatten(
    space: &FiniteMetricSpace,
    s: &[usize],
    f: &LipschitzMap,
    d: usize,
    eps: f64,
    theta: f64,
    fragments: &[CurveFragment],
    cfg: &FlattenConfig,
) -> Result<(LipschitzMap, PerturbationReport)> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "need eps > 0"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", "need 0 < theta < 1"));
    }
    if f.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: f.len(),
        });
    }
    if let Some(&x) = s.iter().find(|&&x| x >= space.len()) {
        return Err(Error::param("S", format!("index {x} out of range")));
    }
    let mut s: Vec<usize> = s.to_vec();
    s.sort_unstable();
    s.dedup();
    let target = f.target().clone();
    let m = target.dim();
    let spacing = spacing_of(space, &s);
    let default_scale = if spacing.is_finite() { 2.0 * spacing } else { eps };
    let content_delta = cfg.content_delta.unwrap_or(default_scale);
    let margin = cfg.margin.unwrap_or(default_scale);
    let delta = cfg.delta.unwrap_or(1.0 - theta);
    let mut params = FlattenParameters {
        d,
        theta,
        delta,
        eps,
        margin,
        rho0: eps,
        s: cfg.s,
        content_delta,
        pieces: cfg.pieces,
        seed: cfg.seed,
    };
    let before = content_of(f, &s, cfg.s, content_delta)?;

    if s.is_empty() || d >= m {
        let report = unchanged_report(space, f, &s, params, before)?;
        return Ok((f.clone(), report));
    }

    let field = fit_tangent_field(space, &s, f, fragments, d, theta)?;
    let partition = partition_by_field(&field, f, fragments, theta, cfg.pieces, cfg.seed)?;
    let summary = partition.summary();
    let gap = min_gap(space, &partition.pieces);
    let rho0 = if gap.is_finite() { eps.min((gap / 2.0).max(margin)) } else { eps };
    params.rho0 = rho0;
    let (pieces, mut discarded) = disjointify(space, partition.pieces, rho0);
    discarded.extend(partition.unassigned.iter().copied());
    discarded.sort_unstable();

    let graph = neighborhood_graph(space, GraphMode::Complete)?;
    let vopts = VectorOptions {
        margin,
        delta: Some(delta),
        scalar: ScalarOptions::local(margin),
        sampling: cfg.sampling,
    };
    let mut runs = Vec::with_capacity(pieces.len());
    for p in &pieces {
        runs.push(vector_perturb(space, &graph, f, p, theta, &vopts)?);
    }
    let mut scalar = ScalarCheck::default();
    for r in &runs {
        scalar.absorb(&r.check);
    }
    let tilde_k = runs.iter().map(|r| r.basis.tilde_k).fold(1.0, f64::max);
    let k_d = runs.iter().map(|r| r.basis.k_d).fold(0.0, f64::max);
    let c_v = runs.iter().map(|r| r.c_v).fold(0.0, f64::max);

    let n = space.len();
    let near_move = |r: &VectorPerturbation, p: &Piece| {
        (0..n)
            .filter(|&x| space.dist_to_set(x, &p.indices) < rho0)
            .map(|x| target.dist(r.sigma.value(x), f.value(x)))
            .fold(0.0, f64::max)
    };
    let raw_move = runs.iter().zip(&pieces).map(|(r, p)| near_move(r, p)).fold(0.0, f64::max);
    let glue_pieces: Vec<GluePiece> = runs
        .iter()
        .zip(&pieces)
        .map(|(r, p)| GluePiece {
            indices: p.indices.clone(),
            sigma: r.sigma.clone(),
        })
        .collect();
    let (glued, glue_report) = if raw_move < eps {
        let (g, rep) = glue(space, f, &glue_pieces, rho0, eps)?;
        (g, Some(rep))
    } else {
        // the sup precondition fails; glue for the record without it
        (glue_unchecked(space, f, &glue_pieces, rho0)?, None)
    };

    let slack = cfg
        .budget_slack
        .unwrap_or(if tilde_k <= 1.0 + 1e-9 { 0.0 } else { eps });
    let budget = tilde_k * f.lip() + slack;
    let (candidate, rescale, shrink) = fit_budget(space, f, &glued, &s, budget, eps)?;
    let cand_after = content_of(&candidate, &s, cfg.s, content_delta)?;
    let cand_ratio = ratio(cand_after.value, before.value);
    let cand_move = candidate.sup_dist(f);
    let cand = Candidate {
        lip: candidate.lip(),
        sup_move: cand_move,
        content_ratio: cand_ratio,
        rescale,
        shrink,
    };

    let failure = if cand_move >= eps {
        Some(format!("sup displacement {cand_move:.6} is not below eps = {eps}"))
    } else if cand_ratio >= cfg.collapse_ratio {
        Some(format!(
            "content ratio {cand_ratio:.4} is not below {}",
            cfg.collapse_ratio
        ))
    } else {
        None
    };
    let (sigma, blend_t, outcome) = match failure {
        None => (candidate, 1.0, Outcome::Collapsed),
        Some(reason) => {
            let t = if cand_move > 0.0 { (0.5 * eps / cand_move).min(1.0) } else { 1.0 };
            (blend(space, f, &candidate, t)?, t, Outcome::Failed { reason })
        }
    };

    let after = content_of(&sigma, &s, cfg.s, content_delta)?;
    let content_ratio = ratio(after.value, before.value);
    let piece_slack: Vec<(Vec<usize>, DMatrix<f64>, f64)> = runs
        .iter()
        .zip(&pieces)
        .map(|(r, p)| {
            let slack = 3.0 * delta * r.functional_norms.iter().sum::<f64>() * f.lip();
            (p.indices.clone(), r.basis.p.clone(), slack)
        })
        .collect();
    let flat_r = flat_radius(space, f, &sigma, &piece_slack);
    let slack = piece_slack
        .iter()
        .map(|(idx, p, _)| flat_slack(space, f, &sigma, p, idx, margin))
        .fold(0.0, f64::max);
    let expo = cfg.s - d as f64;
    let scale = slack.powf(expo);
    let c_hat = if after.value == 0.0 {
        0.0
    } else if scale * before.value > 0.0 {
        after.value / (scale * before.value)
    } else {
        f64::INFINITY
    };
    let c_hat_cap = 64.0 * (k_d * f.lip() + 1.0).powf(cfg.s);
    let report = PerturbationReport {
        outcome,
        parameters: params,
        lip_f: f.lip(),
        lip_sigma: sigma.lip(),
        budget,
        tilde_k,
        k_d,
        sup_move: sigma.sup_dist(f),
        content_before: before.clone(),
        content_after: after.clone(),
        content_ratio,
        flat_radius: flat_r,
        flat_slack: slack,
        c_v,
        c_hat,
        c_hat_cap,
        measure_bound: scale * c_hat * before.value,
        distortion: distort_check(&sigma, space)?,
        scalar,
        glue: glue_report,
        partition: Some(summary),
        discarded,
        candidate: cand,
        blend: blend_t,
    };
    Ok((sigma, report))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn glue_unchecked(space: &FiniteMetricSpace, f: &LipschitzMap, pieces: &[GluePiece], rho0: f64) -> Result<LipschitzMap> {
    let m = f.target().dim();
    let mut data = Vec::with_capacity(space.len() * m);
    for x in 0..space.len() {
        let mut y = f.value(x).to_vec();
        for p in pieces {
            let chi = cutoff(space.dist_to_set(x, &p.indices), rho0);
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += chi * (p.sigma.value(x)[k] - f.value(x)[k]);
            }
        }
        data.extend(y);
    }
    LipschitzMap::new(space, f.target().clone(), PointCloud::new(m, data)?)
}

/// Brings `sigma` within `budget`: a homothety about the centroid of
/// `F(S)` down to the budget when needed, then the budget shrink with
/// `eps / 10`.
fn fit_budget(
    space: &FiniteMetricSpace,
    f: &LipschitzMap,
    sigma: &LipschitzMap,
    s: &[usize],
    budget: f64,
    eps: f64,
) -> Result<(LipschitzMap, f64, Option<ShrinkReport>)> {
    if budget <= 0.0 {
        // F is constant on a space with at least two points, or trivial
        return Ok((sigma.clone(), 1.0, None));
    }
    let (scaled, lambda) = if sigma.lip() > budget {
        let center = image_of(f, s).centroid().unwrap_or_else(|| vec![0.0; f.target().dim()]);
        let lambda = budget / sigma.lip() * (1.0 - 1e-9);
        (rescale_about(space, sigma, &center, lambda)?, lambda)
    } else {
        (sigma.clone(), 1.0)
    };
    let (g, rep) = shrink_to_budget(space, &scaled, budget, eps / 10.0)?;
    Ok((g, lambda, Some(rep)))
}

fn unchanged_report(
    space: &FiniteMetricSpace,
    f: &LipschitzMap,
    _s: &[usize],
    params: FlattenParameters,
    before: ContentEstimate,
) -> Result<PerturbationReport> {
    Ok(PerturbationReport {
        outcome: Outcome::Unchanged,
        parameters: params,
        lip_f: f.lip(),
        lip_sigma: f.lip(),
        budget: f.lip(),
        tilde_k: 1.0,
        k_d: 0.0,
        sup_move: 0.0,
        content_after: before.clone(),
        content_before: before,
        content_ratio: 1.0,
        flat_radius: 0.0,
        flat_slack: 0.0,
        c_v: 0.0,
        c_hat: 0.0,
        c_hat_cap: 0.0,
        measure_bound: 0.0,
        distortion: distort_check(f, space)?,
        scalar: ScalarCheck::default(),
        glue: None,
        partition: None,
        discarded: Vec::new(),
        candidate: Candidate {
            lip: f.lip(),
            sup_move: 0.0,
            content_ratio: 1.0,
            rescale: 1.0,
            shrink: None,
        },
        blend: 0.0,
    })
}

/// Edge fragments of the `k` nearest-neighbour graph; the default family for
/// tangent fitting.
pub fn default_fragments(space: &FiniteMetricSpace) -> Result<Vec<CurveFragment>> {
    if space.len() < 2 {
        return Ok(Vec::new());
    }
    let k = 8.min(space.len() - 1);
    let g = neighborhood_graph(space, GraphMode::Knn(k))?;
    Ok(crate::metric::edge_fragments(space, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, Kind};
    use crate::normgeom::NormedSpace;

    fn line(n: usize) -> FiniteMetricSpace {
        generate(Kind::Segment { n }).unwrap().space().unwrap()
    }

    #[test]
    fn neighborhood_examples() {
        let s = line(101);
        assert_eq!(neighborhood_v(&s, &[50], 0.05).unwrap(), (46..=54).collect::<Vec<_>>());
        assert_eq!(neighborhood_v(&s, &[3], 2.0).unwrap().len(), 101);
        let all: Vec<usize> = (0..101).collect();
        assert_eq!(neighborhood_v(&s, &all, 1e-6).unwrap(), all);
        assert!(neighborhood_v(&s, &[0], 0.0).is_err());
    }

    #[test]
    fn scalar_empty_v_is_identity() {
        let s = line(12);
        let g = neighborhood_graph(&s, GraphMode::Complete).unwrap();
        let levels: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.1).collect();
        let f = scalar_perturb(&g, &levels, 1.0, &[false; 12], 0.3, ScalarOptions::default()).unwrap();
        assert_eq!(f, levels);
    }

    #[test]
    fn scalar_rejects_bad_args() {
        let s = line(3);
        let g = neighborhood_graph(&s, GraphMode::Complete).unwrap();
        let lv = [0.0, 0.5, 1.0];
        assert!(scalar_perturb(&g, &lv, 1.0, &[true; 3], 1.0, ScalarOptions::default()).is_err());
        assert!(scalar_perturb(&g, &lv, 0.0, &[true; 3], 0.5, ScalarOptions::default()).is_err());
    }

    #[test]
    fn shrink_example() {
        let s = FiniteMetricSpace::from_matrix(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let t = NormedSpace::euclidean(1).unwrap();
        let f = LipschitzMap::new(&s, t, PointCloud::new(1, vec![2.0, 0.0]).unwrap()).unwrap();
        assert_eq!(f.lip(), 1.0);
        let (g, rep) = shrink_to_budget(&s, &f, 1.0, 0.1).unwrap();
        assert!((rep.delta - 0.025).abs() < 1e-15);
        assert!((rep.sup_move - 0.05).abs() < 1e-12);
        assert!(g.lip() <= 0.975 + 1e-15);
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.0, 0.2), 1.0);
        assert_eq!(cutoff(0.05, 0.2), 0.5);
        assert_eq!(cutoff(0.2, 0.2), 0.0);
    }
}
