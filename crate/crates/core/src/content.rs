//! Hausdorff content estimates.
//!
//! [`greedy_content`] covers a point set by closed balls of radius
//! `delta / 2` centred at data points, each charged the nominal diameter
//! `delta`, and reports `count * delta^s` as an upper estimate together with
//! a separate packing estimate. [`grid_content`] counts occupied grid cells.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::metric::FiniteMetricSpace;
use crate::normgeom::NormedSpace;
use crate::{par, Error, PointCloud, Result};

/// Relative tolerance on ball membership, so that points exactly on a
/// sphere survive rounding.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverElement {
    /// Index of the centre in the input (greedy) or cell index (grid).
    pub center_index: usize,
    /// Centre coordinates; empty for abstract metric inputs.
    pub center: Vec<f64>,
    pub radius: f64,
    pub diameter: f64,
    /// Points first covered by this element.
    pub covers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingBound {
    pub count: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentEstimate {
    pub s: f64,
    pub delta: f64,
    pub value: f64,
    pub method: Method,
    pub cover: Vec<CoverElement>,
    /// Greedy packing of balls of diameter `delta / 2`; greedy method only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packing: Option<PackingBound>,
}

impl ContentEstimate {
    fn empty(s: f64, delta: f64, method: Method) -> Self {
        ContentEstimate {
            s,
            delta,
            value: 0.0,
            method,
            cover: Vec::new(),
            packing: (method == Method::Greedy).then_some(PackingBound { count: 0, value: 0.0 }),
        }
    }

    pub fn packing_value(&self) -> f64 {
        self.packing.as_ref().map_or(0.0, |p| p.value)
    }
}

fn check(s: f64, delta: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param("s", "need 0 < s < inf"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", "need delta > 0"));
    }
    Ok(())
}

#[derive(PartialEq, Eq)]
struct Candidate {
    gain: usize,
    index: usize,
}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.gain.cmp(&o.gain).then(o.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Greedy set cover: balls are `lists[c]`; picks the ball with the most
/// uncovered points, smallest index on ties. Returns `(centre, newly covered)`.
fn greedy_cover(lists: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let n = lists.len();
    let mut covered = vec![false; n];
    let mut left = n;
    let mut heap: BinaryHeap<Candidate> = lists
        .iter()
        .enumerate()
        .map(|(index, l)| Candidate { gain: l.len(), index })
        .collect();
    let mut chosen = Vec::new();
    while left > 0 {
        let Some(top) = heap.pop() else { break };
        let gain = lists[top.index].iter().filter(|&&j| !covered[j]).count();
        if gain == top.gain {
            for &j in &lists[top.index] {
                covered[j] = true;
            }
            left -= gain;
            chosen.push((top.index, gain));
        } else if gain > 0 {
            heap.push(Candidate { gain, index: top.index });
        }
    }
    chosen
}

/// Greedy packing in index order: keep a point when it is farther than
/// `delta / 2` from every kept point.
fn greedy_packing<D: Fn(usize, usize) -> f64>(n: usize, delta: f64, dist: D) -> usize {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..n {
        if kept.iter().all(|&j| dist(i, j) > delta / 2.0) {
            kept.push(i);
        }
    }
    kept.len()
}

fn greedy_impl<D>(n: usize, s: f64, delta: f64, dist: D, center: impl Fn(usize) -> Vec<f64>) -> ContentEstimate
where
    D: Fn(usize, usize) -> f64 + Sync + Send,
{
    if n == 0 {
        return ContentEstimate::empty(s, delta, Method::Greedy);
    }
    let count = greedy_packing(n, delta, &dist);
    let packing = Some(PackingBound {
        count,
        value: count as f64 * (delta / 2.0).powf(s),
    });
    // a set of diameter at most delta is its own cover element
    let spread = par::max(n, |i| (0..n).map(|j| dist(i, j)).fold(0.0, f64::max)).max(0.0);
    if spread <= delta {
        return ContentEstimate {
            s,
            delta,
            value: spread.powf(s),
            method: Method::Greedy,
            cover: vec![CoverElement {
                center_index: 0,
                center: center(0),
                radius: (0..n).map(|j| dist(0, j)).fold(0.0, f64::max),
                diameter: spread,
                covers: n,
            }],
            packing,
        };
    }
    let r = delta / 2.0;
    let reach = r * (1.0 + MEMBERSHIP_TOL);
    let lists = par::map(n, |c| (0..n).filter(|&j| dist(c, j) <= reach).collect::<Vec<usize>>());
    let chosen = greedy_cover(&lists);
    let cover: Vec<CoverElement> = chosen
        .into_iter()
        .map(|(c, covers)| CoverElement {
            center_index: c,
            center: center(c),
            radius: r,
            diameter: delta,
            covers,
        })
        .collect();
    let value = cover.len() as f64 * delta.powf(s);
    ContentEstimate {
        s,
        delta,
        value,
        method: Method::Greedy,
        cover,
        packing,
    }
}

/// Greedy ball-cover estimate of the `s`-content at scale `delta` for
/// points in a normed space.
pub fn greedy_content(points: &PointCloud, norm: &NormedSpace, s: f64, delta: f64) -> Result<ContentEstimate> {
    check(s, delta)?;
    if !points.is_empty() && points.dim() != norm.dim() {
        return Err(Error::DimensionMismatch {
            expected: norm.dim(),
            found: points.dim(),
        });
    }
    Ok(greedy_impl(
        points.len(),
        s,
        delta,
        |i, j| norm.dist(points.row(i), points.row(j)),
        |i| points.row(i).to_vec(),
    ))
}

/// [`greedy_content`] for a subset of an abstract metric space.
pub fn greedy_content_metric(space: &FiniteMetricSpace, subset: &[usize], s: f64, delta: f64) -> Result<ContentEstimate> {
    check(s, delta)?;
    let mut est = greedy_impl(subset.len(), s, delta, |i, j| space.dist(subset[i], subset[j]), |_| Vec::new());
    for e in &mut est.cover {
        e.center_index = subset[e.center_index];
    }
    Ok(est)
}

/// Occupied axis-aligned cells of side `r`, anchored at the origin, each
/// charged its diameter `r sqrt(k)`.
pub fn grid_content(points: &PointCloud, s: f64, r: f64) -> Result<ContentEstimate> {
    check(s, r)?;
    let k = points.dim();
    let diam = r * (k.max(1) as f64).sqrt();
    if points.is_empty() {
        return Ok(ContentEstimate::empty(s, diam, Method::Grid));
    }
    let cells: BTreeSet<Vec<i64>> = points
        .rows()
        .map(|p| p.iter().map(|x| (x / r).floor() as i64).collect())
        .collect();
    let cover = cells
        .iter()
        .enumerate()
        .map(|(i, c)| CoverElement {
            center_index: i,
            center: c.iter().map(|&ci| (ci as f64 + 0.5) * r).collect(),
            radius: diam / 2.0,
            diameter: diam,
            covers: 0,
        })
        .collect::<Vec<_>>();
    Ok(ContentEstimate {
        s,
        delta: diam,
        value: cells.len() as f64 * diam.powf(s),
        method: Method::Grid,
        cover,
        packing: None,
    })
}

/// Smallest margin by which `points` sit inside the cover: the minimum over
/// points of the largest `radius - dist(point, centre)` over cover elements.
/// Negative when some point is uncovered.
pub fn cover_slack(est: &ContentEstimate, points: &PointCloud, norm: &NormedSpace) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    par::min(points.len(), |i| {
        est.cover
            .iter()
            .map(|e| e.radius - norm.dist(points.row(i), &e.center))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Whether every point lies in some closed cover ball, up to the relative
/// membership tolerance used when the cover was built.
pub fn covers(est: &ContentEstimate, points: &PointCloud, norm: &NormedSpace) -> bool {
    let r = est.cover.iter().map(|e| e.radius).fold(0.0, f64::max);
    cover_slack(est, points, norm) >= -MEMBERSHIP_TOL * r
}
