//! Deterministic planar test sets: self-similar dusts (unrectifiable type)
//! and segments, circles, graphs and crossings (rectifiable).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::metric::{FiniteMetricSpace, LipschitzMap};
use crate::{par, Error, PointCloud, Result};

/// Named Lipschitz profiles for [`Kind::LipschitzGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `0.5 + 0.25 sin(2 pi t)`.
    Sine,
    /// `0.5 min(t, 1 - t)`.
    Tent,
    /// `|t - 0.5|`.
    Abs,
}

impl Profile {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Profile::Sine => 0.5 + 0.25 * (2.0 * PI * t).sin(),
            Profile::Tent => 0.5 * t.min(1.0 - t),
            Profile::Abs => (t - 0.5).abs(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sine" => Ok(Profile::Sine),
            "tent" => Ok(Profile::Tent),
            "abs" => Ok(Profile::Abs),
            _ => Err(Error::param("g", format!("unknown profile {name:?}; expected sine, tent or abs"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    FourCorner { depth: u32 },
    Dust { s: f64, depth: u32 },
    Segment { n: usize },
    Circle { n: usize },
    LipschitzGraph { n: usize, g: Profile },
    CrossingSegments { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSet {
    pub kind: Kind,
    pub points: PointCloud,
    /// Smallest distance between distinct points.
    pub spacing: f64,
}

impl GeneratedSet {
    pub fn space(&self) -> Result<FiniteMetricSpace> {
        FiniteMetricSpace::euclidean_cloud(self.points.clone())
    }

    /// Content scale tied to the sample: twice the spacing.
    pub fn coupled_delta(&self) -> f64 {
        2.0 * self.spacing
    }

    /// Closed-form point count for the kind.
    pub fn expected_len(&self) -> usize {
        expected_len(&self.kind)
    }
}

pub fn expected_len(kind: &Kind) -> usize {
    match *kind {
        Kind::FourCorner { depth } | Kind::Dust { depth, .. } => 4usize.pow(depth),
        Kind::Segment { n } | Kind::Circle { n } | Kind::LipschitzGraph { n, .. } => n,
        Kind::CrossingSegments { n } => 2 * n,
    }
}

/// Contraction ratio `4^(-1/s)` whose similarity dimension is `s`.
pub fn dust_ratio(s: f64) -> f64 {
    4f64.powf(-1.0 / s)
}

/// Centres of the `4^depth` squares of side `r^depth` kept by the planar
/// construction keeping the four corner squares of ratio `r`.
fn corner_squares(r: f64, depth: u32) -> (PointCloud, f64) {
    let count = 4usize.pow(depth);
    let half = 0.5 * r.powi(depth as i32);
    let mut data = Vec::with_capacity(2 * count);
    for code in 0..count {
        let (mut x, mut y) = (half, half);
        let mut scale = 1.0;
        for level in 0..depth {
            // most significant quadrant first
            let q = (code >> (2 * (depth - 1 - level))) & 3;
            let step = (1.0 - r) * scale;
            x += step * (q & 1) as f64;
            y += step * (q >> 1) as f64;
            scale *= r;
        }
        data.push(x);
        data.push(y);
    }
    let spacing = if depth == 0 { 1.0 } else { (1.0 - r) * r.powi(depth as i32 - 1) };
    (PointCloud::new(2, data).expect("finite"), spacing)
}

fn min_pair_distance(pc: &PointCloud) -> f64 {
    let n = pc.len();
    par::min(n, |i| {
        (i + 1..n)
            .map(|j| {
                let (a, b) = (pc.row(i), pc.row(j));
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    })
}

pub fn generate(kind: Kind) -> Result<GeneratedSet> {
    let need_count = |n: usize, min: usize| {
        if n < min {
            Err(Error::param("n", format!("need n >= {min}, got {n}")))
        } else {
            Ok(())
        }
    };
    let (points, spacing) = match kind {
        Kind::FourCorner { depth } => {
            if depth > 10 {
                return Err(Error::param("depth", "depth above 10 is not supported"));
            }
            corner_squares(0.25, depth)
        }
        Kind::Dust { s, depth } => {
            if !(s > 0.0 && s < 2.0) || s == 1.0 {
                return Err(Error::param("s", format!("need s in (0,2) with s != 1, got {s}")));
            }
            if depth > 10 {
                return Err(Error::param("depth", "depth above 10 is not supported"));
            }
            corner_squares(dust_ratio(s), depth)
        }
        Kind::Segment { n } => {
            need_count(n, 2)?;
            let data = (0..n).flat_map(|i| [i as f64 / (n - 1) as f64, 0.0]).collect();
            (PointCloud::new(2, data)?, 1.0 / (n - 1) as f64)
        }
        Kind::Circle { n } => {
            need_count(n, 2)?;
            let data = (0..n)
                .flat_map(|i| {
                    let a = 2.0 * PI * i as f64 / n as f64;
                    [0.5 + 0.5 * a.cos(), 0.5 + 0.5 * a.sin()]
                })
                .collect();
            (PointCloud::new(2, data)?, (PI / n as f64).sin())
        }
        Kind::LipschitzGraph { n, g } => {
            need_count(n, 2)?;
            let data = (0..n)
                .flat_map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    [t, g.eval(t)]
                })
                .collect();
            let pc = PointCloud::new(2, data)?;
            let sp = min_pair_distance(&pc);
            (pc, sp)
        }
        Kind::CrossingSegments { n } => {
            need_count(n, 2)?;
            if n % 2 == 1 {
                return Err(Error::param("n", "crossing segments need an even n so no point is shared"));
            }
            let t = |i: usize| i as f64 / (n - 1) as f64;
            let data = (0..n)
                .flat_map(|i| [t(i), t(i)])
                .chain((0..n).flat_map(|i| [t(i), 1.0 - t(i)]))
                .collect();
            let pc = PointCloud::new(2, data)?;
            let sp = min_pair_distance(&pc);
            (pc, sp)
        }
    };
    Ok(GeneratedSet { kind, points, spacing })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub max: f64,
    pub pairs: usize,
    /// `(lower edge, upper edge, count)` over ten equal bins of `[0, max]`.
    pub histogram: Vec<(f64, f64, usize)>,
}

/// `|D(x,y) - |sigma(x) - sigma(y)||` over all pairs.
pub fn distort_check(sigma: &LipschitzMap, space: &FiniteMetricSpace) -> Result<DistortionReport> {
    if sigma.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: sigma.len(),
        });
    }
    let n = space.len();
    let t = sigma.target();
    let rows = par::map(n, |i| {
        (i + 1..n)
            .map(|j| (space.dist(i, j) - t.dist(sigma.value(i), sigma.value(j))).abs())
            .collect::<Vec<f64>>()
    });
    let all: Vec<f64> = rows.into_iter().flatten().collect();
    let max = all.iter().copied().fold(0.0, f64::max);
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for &x in &all {
        let k = if max > 0.0 { ((x / max) * bins as f64) as usize } else { 0 };
        counts[k.min(bins - 1)] += 1;
    }
    let width = max / bins as f64;
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * width, (k + 1) as f64 * width, c))
        .collect();
    Ok(DistortionReport {
        max,
        pairs: all.len(),
        histogram,
    })
}
