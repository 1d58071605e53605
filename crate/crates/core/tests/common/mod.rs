#![allow(dead_code)]

use lipflat::metric::{FiniteMetricSpace, Graph};
use lipflat::PointCloud;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random planar points with a random edge subset (kept connected by a
/// spanning path) and random levels from a covector.
pub struct Instance {
    pub space: FiniteMetricSpace,
    pub graph: Graph,
    pub levels: Vec<f64>,
    pub t_norm: f64,
    pub in_v: Vec<bool>,
    pub delta: f64,
}

pub fn instance(seed: u64, n: usize, quantised: bool) -> Instance {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.gen::<f64>(), r.gen::<f64>()]).collect();
    let space = FiniteMetricSpace::euclidean_cloud(PointCloud::from_rows(&rows).unwrap()).unwrap();
    let density = r.gen_range(0.3..=1.0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || r.gen::<f64>() < density {
                edges.push((i, j, space.dist(i, j)));
            }
        }
    }
    let graph = Graph::from_edges(n, edges).unwrap();
    let t: [f64; 2] = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
    let t_norm = (t[0] * t[0] + t[1] * t[1]).sqrt();
    let levels = rows
        .iter()
        .map(|p| {
            let v = t[0] * p[0] + t[1] * p[1];
            if quantised {
                (v * 4.0).round() / 4.0
            } else {
                v
            }
        })
        .collect();
    let in_v = (0..n).map(|_| r.gen::<f64>() < 0.6).collect();
    let delta = r.gen_range(0.05..0.95);
    Instance {
        space,
        graph,
        levels,
        t_norm,
        in_v,
        delta,
    }
}

/// Edge weight of `y -> z`, or `None` when the move is not admissible.
pub fn weight(i: &Instance, y: usize, z: usize, len: f64, reach: Option<f64>, level_moves: bool) -> Option<f64> {
    let rise = i.levels[z] - i.levels[y];
    let local = reach.map_or(true, |r| len <= r);
    if rise >= 0.0 {
        if i.in_v[y] && i.in_v[z] && local {
            Some(i.delta * i.t_norm * len)
        } else {
            Some(rise + i.delta * i.t_norm * len)
        }
    } else if level_moves {
        Some(3.0 * i.delta * i.t_norm * len)
    } else {
        None
    }
}

/// Minimum over every admissible simple path ending at each node of
/// `T(F(start)) + path weight`, by exhaustive depth-first enumeration.
pub fn brute_force(i: &Instance, reach: Option<f64>, level_moves: bool) -> Vec<f64> {
    let n = i.levels.len();
    let mut best = i.levels.clone();
    let mut on_path = vec![false; n];
    fn walk(
        i: &Instance,
        at: usize,
        cost: f64,
        on_path: &mut Vec<bool>,
        best: &mut Vec<f64>,
        reach: Option<f64>,
        level_moves: bool,
    ) {
        if cost < best[at] {
            best[at] = cost;
        }
        for &(z, len) in i.graph.neighbors(at) {
            if on_path[z] {
                continue;
            }
            if let Some(w) = weight(i, at, z, len, reach, level_moves) {
                on_path[z] = true;
                walk(i, z, cost + w, on_path, best, reach, level_moves);
                on_path[z] = false;
            }
        }
    }
    for s in 0..n {
        on_path[s] = true;
        walk(i, s, i.levels[s], &mut on_path, &mut best, reach, level_moves);
        on_path[s] = false;
    }
    best
}

/// Lipschitz constant by an independent double loop.
pub fn naive_lip(space: &FiniteMetricSpace, vals: &PointCloud, norm: impl Fn(&[f64]) -> f64) -> f64 {
    let mut l: f64 = 0.0;
    for a in 0..space.len() {
        for b in a + 1..space.len() {
            let d: Vec<f64> = vals.row(a).iter().zip(vals.row(b)).map(|(x, y)| x - y).collect();
            l = l.max(norm(&d) / space.dist(a, b));
        }
    }
    l
}

pub fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
