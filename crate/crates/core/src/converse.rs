//! Lower bounds for images of balls and rectifiable sets: planar degree
//! coverage by winding numbers, content lower bounds under near-isometric
//! maps, and a derivative boost producing images of positive content.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::content::{greedy_content, ContentEstimate};
use crate::metric::{FiniteMetricSpace, LipschitzMap};
use crate::normgeom::NormedSpace;
use crate::{par, rng, Error, PointCloud, Result};

/// Grid-scale share of the disc that must hold sample points.
pub const DEFAULT_DENSITY_SLACK: f64 = 0.1;
/// Discount on the continuum constants absorbing discretisation error.
pub const SLACK_FACTOR: f64 = 0.5;

/// A planar map sampled on a square lattice inside the closed unit disc,
/// together with a loop of nodes on the unit circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub resolution: f64,
    pub nodes: Vec<[f64; 2]>,
    pub values: Vec<[f64; 2]>,
    /// Indices of the boundary loop, counterclockwise.
    pub boundary: Vec<usize>,
    /// Lattice neighbour pairs `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub boundary_disp: f64,
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

impl GridMap {
    /// Samples `f` on an `res x res` lattice over `[-1,1]^2` (nodes outside
    /// the disc dropped) plus `4 res` equally spaced circle nodes.
    pub fn sample(res: usize, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        if res < 2 {
            return Err(Error::param("resolution", "need at least a 2x2 grid"));
        }
        let h = 2.0 / (res - 1) as f64;
        let mut nodes = Vec::new();
        let mut slot = vec![usize::MAX; res * res];
        for i in 0..res {
            for j in 0..res {
                let p = [-1.0 + i as f64 * h, -1.0 + j as f64 * h];
                if norm2(p) <= 1.0 {
                    slot[i * res + j] = nodes.len();
                    nodes.push(p);
                }
            }
        }
        let mut edges = Vec::new();
        for i in 0..res {
            for j in 0..res {
                let a = slot[i * res + j];
                if a == usize::MAX {
                    continue;
                }
                if i + 1 < res && slot[(i + 1) * res + j] != usize::MAX {
                    edges.push((a, slot[(i + 1) * res + j]));
                }
                if j + 1 < res && slot[i * res + j + 1] != usize::MAX {
                    edges.push((a, slot[i * res + j + 1]));
                }
            }
        }
        let first = nodes.len();
        let k = 4 * res;
        for t in 0..k {
            let a = 2.0 * PI * t as f64 / k as f64;
            nodes.push([a.cos(), a.sin()]);
        }
        let boundary: Vec<usize> = (first..first + k).collect();
        let values: Vec<[f64; 2]> = nodes.iter().map(|&p| f(p)).collect();
        Self::assemble(h, nodes, values, boundary, edges)
    }

    fn assemble(h: f64, nodes: Vec<[f64; 2]>, values: Vec<[f64; 2]>, boundary: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "image coordinates must be finite"));
        }
        if boundary.len() < 3 {
            return Err(Error::param("boundary", "need at least three boundary nodes"));
        }
        let boundary_disp = boundary
            .iter()
            .map(|&b| norm2(sub2(values[b], nodes[b])))
            .fold(0.0, f64::max);
        Ok(GridMap {
            resolution: h,
            nodes,
            values,
            boundary,
            edges,
            boundary_disp,
        })
    }

    /// Builds a map from rows `(x1, x2, y1, y2)`. Nodes within `1e-9` of the
    /// unit circle form the boundary loop, ordered by angle; lattice edges
    /// join nodes at the most common nearest-neighbour distance.
    pub fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        let nodes: Vec<[f64; 2]> = rows.iter().map(|r| [r[0], r[1]]).collect();
        let values: Vec<[f64; 2]> = rows.iter().map(|r| [r[2], r[3]]).collect();
        if let Some(i) = nodes.iter().position(|&p| norm2(p) > 1.0 + 1e-9) {
            return Err(Error::param("nodes", format!("node {i} lies outside the unit disc")));
        }
        let mut boundary: Vec<usize> = (0..nodes.len())
            .filter(|&i| norm2(nodes[i]) >= 1.0 - 1e-9)
            .collect();
        boundary.sort_by(|&a, &b| {
            let ta = nodes[a][1].atan2(nodes[a][0]);
            let tb = nodes[b][1].atan2(nodes[b][0]);
            ta.total_cmp(&tb).then(a.cmp(&b))
        });
        let interior: Vec<usize> = (0..nodes.len()).filter(|&i| norm2(nodes[i]) < 1.0 - 1e-9).collect();
        let h = interior
            .iter()
            .flat_map(|&a| interior.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
            .map(|(a, b)| norm2(sub2(nodes[a], nodes[b])))
            .fold(f64::INFINITY, f64::min);
        let h = if h.is_finite() { h } else { 2.0 };
        let mut edges = Vec::new();
        for (x, &a) in interior.iter().enumerate() {
            for &b in &interior[x + 1..] {
                if (norm2(sub2(nodes[a], nodes[b])) - h).abs() <= 1e-9 * h.max(1.0) {
                    edges.push((a.min(b), a.max(b)));
                }
            }
        }
        Self::assemble(h, nodes, values, boundary, edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn is_boundary(&self) -> Vec<bool> {
        let mut b = vec![false; self.len()];
        for &i in &self.boundary {
            b[i] = true;
        }
        b
    }

    /// Longest image edge over lattice edges and boundary loop steps.
    pub fn image_mesh(&self) -> f64 {
        let loop_steps = (0..self.boundary.len()).map(|k| {
            let a = self.boundary[k];
            let b = self.boundary[(k + 1) % self.boundary.len()];
            norm2(sub2(self.values[a], self.values[b]))
        });
        self.edges
            .iter()
            .map(|&(a, b)| norm2(sub2(self.values[a], self.values[b])))
            .chain(loop_steps)
            .fold(0.0, f64::max)
    }

    /// Winding number of the image of the boundary loop around `p`.
    pub fn winding_number(&self, p: [f64; 2]) -> i64 {
        let k = self.boundary.len();
        let mut w = 0i64;
        for t in 0..k {
            let a = self.values[self.boundary[t]];
            let b = self.values[self.boundary[(t + 1) % k]];
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
            if a[1] <= p[1] {
                if b[1] > p[1] && cross > 0.0 {
                    w += 1;
                }
            } else if b[1] <= p[1] && cross < 0.0 {
                w -= 1;
            }
        }
        w
    }
}

/// A translation-free smooth field on the plane with sup norm below
/// `amplitude`: a sum of three seeded sine modes.
pub fn smooth_perturbation(seed: u64, amplitude: f64) -> impl Fn([f64; 2]) -> [f64; 2] {
    let mut r = rng::stream(seed, 0);
    let modes: Vec<[f64; 6]> = (0..3)
        .map(|_| {
            [
                r.gen_range(-1.0..1.0),
                r.gen_range(-1.0..1.0),
                r.gen_range(0.5..3.0),
                r.gen_range(0.5..3.0),
                r.gen_range(0.0..2.0 * PI),
                r.gen_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    // each coordinate is bounded by the sum of |weights|, normalised to one
    let total: f64 = modes.iter().map(|m| m[0].abs() + m[1].abs()).sum::<f64>().max(1e-12);
    let scale = amplitude / total * std::f64::consts::FRAC_1_SQRT_2;
    move |p: [f64; 2]| {
        let mut out = p;
        for m in &modes {
            out[0] += scale * m[0] * (m[2] * p[0] + m[3] * p[1] + m[4]).sin();
            out[1] += scale * m[1] * (m[3] * p[0] - m[2] * p[1] + m[5]).sin();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: bool,
    pub covered_fraction: f64,
    pub radius: f64,
    pub targets: usize,
    /// Covered through a nonzero winding number.
    pub by_degree: usize,
    /// Covered only through proximity to an image point.
    pub by_proximity: usize,
    pub uncovered: Vec<[f64; 2]>,
    pub boundary_disp: f64,
    pub image_mesh: f64,
}

/// Checks that the image of the disc covers `B(0, 1 - eps - 2 resolution)`.
pub fn degree_coverage(map: &GridMap, eps: f64) -> Result<Coverage> {
    degree_coverage_within(map, eps, 1.0 - eps - 2.0 * map.resolution)
}

/// [`degree_coverage`] on lattice targets in the closed disc of `radius`.
/// A target is covered when the boundary image winds around it or it lies
/// within the longest image edge of some image point.
pub fn degree_coverage_within(map: &GridMap, eps: f64, radius: f64) -> Result<Coverage> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::param("eps", "need 0 < eps < 1/2"));
    }
    if map.boundary_disp >= eps {
        return Err(Error::Precondition(format!(
            "boundary displacement {} is not below eps = {eps}",
            map.boundary_disp
        )));
    }
    let on_loop = map.is_boundary();
    let targets: Vec<[f64; 2]> = (0..map.len())
        .filter(|&i| !on_loop[i] && norm2(map.nodes[i]) <= radius)
        .map(|i| map.nodes[i])
        .collect();
    let mesh = map.image_mesh();
    let verdict = par::map(targets.len(), |t| {
        let p = targets[t];
        if map.winding_number(p) != 0 {
            1u8
        } else if map.values.iter().any(|&v| norm2(sub2(v, p)) <= mesh) {
            2
        } else {
            0
        }
    });
    let by_degree = verdict.iter().filter(|&&v| v == 1).count();
    let by_proximity = verdict.iter().filter(|&&v| v == 2).count();
    let uncovered: Vec<[f64; 2]> = targets
        .iter()
        .zip(&verdict)
        .filter(|(_, &v)| v == 0)
        .map(|(&p, _)| p)
        .collect();
    let covered_fraction = if targets.is_empty() {
        1.0
    } else {
        (by_degree + by_proximity) as f64 / targets.len() as f64
    };
    Ok(Coverage {
        covered: uncovered.is_empty(),
        covered_fraction,
        radius,
        targets: targets.len(),
        by_degree,
        by_proximity,
        uncovered,
        boundary_disp: map.boundary_disp,
        image_mesh: mesh,
    })
}

/// `(1 - slack) / (4 K sqrt(n))`.
pub fn rect_threshold(k: f64, n: usize, slack: f64) -> f64 {
    (1.0 - slack) / (4.0 * k * (n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectOptions {
    /// Required share of occupied grid cells is `1 - density_slack`.
    pub density_slack: f64,
    pub slack_factor: f64,
    /// Content scale; default twice the sample spacing.
    pub delta: Option<f64>,
}

impl Default for RectOptions {
    fn default() -> Self {
        RectOptions {
            density_slack: DEFAULT_DENSITY_SLACK,
            slack_factor: SLACK_FACTOR,
            delta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectBound {
    pub content: ContentEstimate,
    /// Packing lower bound used for the verdict.
    pub lower: f64,
    pub threshold: f64,
    pub passes: bool,
    pub density: f64,
    pub grid: f64,
    /// `min (|f(x)-f(y)| - |x-y|/K)` over pairs.
    pub pair_margin: f64,
    pub slack_factor: f64,
}

/// Share of lattice cells of side `h` centred in the closed unit ball that
/// contain a sample point.
pub fn ball_density(sample: &PointCloud, h: f64) -> f64 {
    let n = sample.dim();
    let per_axis = (2.0 / h).ceil() as i64;
    let cell_of = |x: &[f64]| -> Vec<i64> { x.iter().map(|&c| ((c + 1.0) / h).floor() as i64).collect() };
    let occupied: std::collections::BTreeSet<Vec<i64>> = sample.rows().map(cell_of).collect();
    let mut total = 0usize;
    let mut hit = 0usize;
    let mut idx = vec![0i64; n];
    loop {
        let centre: Vec<f64> = idx.iter().map(|&i| -1.0 + (i as f64 + 0.5) * h).collect();
        if centre.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            total += 1;
            if occupied.contains(&idx) {
                hit += 1;
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return if total == 0 { 0.0 } else { hit as f64 / total as f64 };
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Content lower bound for `f(E)` when `f` is `K`-bi-Lipschitz up to an
/// additive `eps` on the sample `E` of the unit ball of `R^n`.
pub fn rect_lower_bound(space: &FiniteMetricSpace, f: &LipschitzMap, k: f64, eps: f64, opts: &RectOptions) -> Result<RectBound> {
    if !(k >= 1.0) {
        return Err(Error::param("K", "need K >= 1"));
    }
    let sample = space
        .coords()
        .ok_or_else(|| Error::param("E", "sample must carry coordinates"))?;
    if sample.is_empty() {
        return Err(Error::param("E", "empty sample"));
    }
    if let Some(i) = (0..sample.len()).find(|&i| sample.row(i).iter().map(|c| c * c).sum::<f64>() > 1.0 + 1e-12) {
        return Err(Error::param("E", format!("point {i} lies outside the unit ball")));
    }
    let n = sample.dim();
    let target = f.target();
    let len = space.len();
    let worst = par::map(len, |i| {
        let mut best = (f64::INFINITY, i, i);
        for j in i + 1..len {
            let m = target.dist(f.value(i), f.value(j)) - space.dist(i, j) / k;
            if m < best.0 {
                best = (m, i, j);
            }
        }
        best
    });
    let (pair_margin, bi, bj) = worst.into_iter().fold((f64::INFINITY, 0, 0), |a, b| if b.0 < a.0 { b } else { a });
    if pair_margin < -eps {
        return Err(Error::Precondition(format!(
            "pair ({bi}, {bj}) violates |f(x)-f(y)| >= |x-y|/K - eps by {}",
            -eps - pair_margin
        )));
    }
    let spacing = space.min_separation();
    let grid = if spacing.is_finite() { 2.0 * spacing } else { 2.0 };
    let density = ball_density(sample, grid);
    if density < 1.0 - opts.density_slack {
        return Err(Error::Precondition(format!(
            "sample fills {density:.4} of the ball at grid {grid}, below {}",
            1.0 - opts.density_slack
        )));
    }
    let delta = opts.delta.unwrap_or(grid);
    let content = greedy_content(f.values(), target, n as f64, delta)?;
    let lower = content.packing_value();
    let threshold = rect_threshold(k, n, opts.slack_factor);
    Ok(RectBound {
        passes: lower >= threshold,
        content,
        lower,
        threshold,
        density,
        grid,
        pair_margin,
        slack_factor: opts.slack_factor,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositiveImage {
    pub x0: usize,
    pub window: f64,
    /// Least-squares derivative at `x0`, rows = target coordinates.
    pub jacobian: Vec<Vec<f64>>,
    pub boosted: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub t_op_norm: f64,
    pub t_lip: f64,
    pub t_sup: f64,
    /// Smallest `|f*(x)-f*(y)| / |x-y|` over window pairs.
    pub local_lower: f64,
    pub content: ContentEstimate,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `f* = f + T*` where `T = S - Df(x0)` lifts every singular value of the
/// fitted derivative to at least `eps / 4` and `T*` is `T(x - x0)` capped
/// radially outside the unit ball around `x0`.
pub fn positive_image_perturb(space: &FiniteMetricSpace, f: &LipschitzMap, eps: f64, window: Option<f64>) -> Result<(LipschitzMap, PositiveImage)> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "need eps > 0"));
    }
    let a = space
        .coords()
        .ok_or_else(|| Error::param("A", "sample must carry coordinates"))?;
    if a.is_empty() {
        return Err(Error::param("A", "empty sample"));
    }
    let n = a.dim();
    let m = f.target().dim();
    if m < n {
        return Err(Error::param("f", format!("target dimension {m} is below the domain dimension {n}")));
    }
    let spacing = space.min_separation();
    let base = if spacing.is_finite() { spacing } else { 1.0 };
    let r = window.unwrap_or(4.0 * base);
    let counts = par::map(a.len(), |i| (0..a.len()).filter(|&j| space.dist(i, j) <= r).count());
    let x0 = (0..a.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    let near: Vec<usize> = (0..a.len()).filter(|&j| j != x0 && space.dist(x0, j) <= r).collect();

    let p0 = DVector::from_column_slice(a.row(x0));
    let f0 = DVector::from_column_slice(f.value(x0));
    let dx = DMatrix::from_fn(near.len(), n, |k, c| a.row(near[k])[c] - p0[c]);
    let df = DMatrix::from_fn(near.len(), m, |k, c| f.value(near[k])[c] - f0[c]);
    // least squares: J^T = pinv(dX) dF
    let jac_t = if near.is_empty() {
        DMatrix::zeros(n, m)
    } else {
        dx.clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::DegenerateBasis(e.to_string()))?
            * df
    };
    let jac = jac_t.transpose();
    let svd = jac.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let floor = eps / 4.0;
    let lifted = DVector::from_iterator(svd.singular_values.len(), svd.singular_values.iter().map(|&s| s.max(floor)));
    let s = &u * DMatrix::from_diagonal(&lifted) * &vt;
    let t = &s - &jac;
    let t_op = t.clone().svd(false, false).singular_values.max();

    let euclid = NormedSpace::euclidean(m)?;
    let mut data = Vec::with_capacity(a.len() * m);
    let mut shift = Vec::with_capacity(a.len() * m);
    for i in 0..a.len() {
        let d = DVector::from_column_slice(a.row(i)) - &p0;
        let r = d.norm();
        let v = if r > 1.0 { &t * d / r } else { &t * d };
        shift.extend(v.iter().copied());
        data.extend(f.value(i).iter().zip(v.iter()).map(|(x, y)| x + y));
    }
    let tstar = LipschitzMap::new(space, euclid.clone(), PointCloud::new(m, shift)?)?;
    let fstar = LipschitzMap::new(space, f.target().clone(), PointCloud::new(m, data)?)?;
    let mut window_pts = near.clone();
    window_pts.push(x0);
    window_pts.sort_unstable();
    let local_lower = window_pts
        .iter()
        .enumerate()
        .flat_map(|(k, &y)| window_pts[k + 1..].iter().map(move |&z| (y, z)))
        .map(|(y, z)| f.target().dist(fstar.value(y), fstar.value(z)) / space.dist(y, z))
        .fold(f64::INFINITY, f64::min);
    let content = greedy_content(fstar.values(), f.target(), n as f64, 2.0 * base)?;
    let report = PositiveImage {
        x0,
        window: r,
        jacobian: rows_of(&jac),
        boosted: rows_of(&s),
        singular_values: svd.singular_values.iter().copied().collect(),
        t_op_norm: t_op,
        t_lip: tstar.lip(),
        t_sup: tstar.sup_norm(),
        local_lower,
        content,
    };
    Ok((fstar, report))
}

/// Seeded 1-Lipschitz maps of the `n`-point unit segment into the plane
/// moving every point by less than `0.01`: a slight contraction plus
/// sine ripples with bounded slope.
pub fn segment_candidates(space: &FiniteMetricSpace, count: usize, seed: u64) -> Result<Vec<LipschitzMap>> {
    let pts = space
        .coords()
        .ok_or_else(|| Error::param("space", "segment sample must carry coordinates"))?;
    let euclid = NormedSpace::euclidean(2)?;
    let mut out = Vec::with_capacity(count);
    for c in 0..count {
        let mut r = rng::stream(seed, c as u64);
        let lambda = 0.985;
        let k = r.gen_range(1..=8) as f64;
        let alpha = 0.01 * r.gen::<f64>();
        let beta = (0.025 * k).min(0.09) * r.gen::<f64>();
        let (p1, p2) = (r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..2.0 * PI));
        let w = 2.0 * PI * k;
        let data = pts
            .rows()
            .flat_map(|p| {
                let t = p[0];
                [
                    lambda * t + (1.0 - lambda) / 2.0 + alpha * ((w * t + p1).sin() - p1.sin()) / w,
                    p[1] + beta * (w * t + p2).sin() / w,
                ]
            })
            .collect();
        out.push(LipschitzMap::new(space, euclid.clone(), PointCloud::new(2, data)?)?);
    }
    Ok(out)
}
