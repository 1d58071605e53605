//! Cones, conical complements, direction profiles of fragments, and fitted
//! tangent fields with their partition into pieces.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metric::{CurveFragment, FiniteMetricSpace, LipschitzMap};
use crate::points::{dot, euclid, sub};
use crate::{par, rng, Error, Result};

/// Lloyd restarts for the subspace clustering.
pub const RESTARTS: usize = 10;
const MAX_LLOYD: usize = 100;

/// `v . w >= (1 - theta) |v|_2`. `w` must be a Euclidean unit vector.
pub fn cone_membership(v: &[f64], w: &[f64], theta: f64) -> bool {
    debug_assert!((euclid(w) - 1.0).abs() < 1e-10, "w must be a unit vector");
    dot(v, w) >= (1.0 - theta) * euclid(v)
}

/// Orthogonal projection of `v` onto the span of the orthonormal `frame`
/// (columns).
pub fn project(frame: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    if frame.ncols() == 0 {
        return vec![0.0; v.len()];
    }
    let x = DVector::from_column_slice(v);
    (frame * (frame.transpose() * x)).as_slice().to_vec()
}

/// `|pi(v)|_2 >= (1 - theta) |v|_2` with `pi` the orthogonal projection onto
/// the complement of the span of `frame`.
pub fn complement_membership(v: &[f64], frame: &DMatrix<f64>, theta: f64) -> bool {
    let off = sub(v, &project(frame, v));
    euclid(&off) >= (1.0 - theta) * euclid(v)
}

/// `|P_W v|_2 >= (1 - theta) |v|_2`: the symmetric cone of width `theta`
/// around the span of `frame`.
pub fn subspace_cone_membership(v: &[f64], frame: &DMatrix<f64>, theta: f64) -> bool {
    euclid(&project(frame, v)) >= (1.0 - theta) * euclid(v)
}

#[derive(Clone, Debug, PartialEq)]
pub enum DirectionSet {
    Cone { w: Vec<f64>, theta: f64 },
    Complement { frame: DMatrix<f64>, theta: f64 },
}

impl DirectionSet {
    pub fn contains(&self, v: &[f64]) -> bool {
        match self {
            DirectionSet::Cone { w, theta } => cone_membership(v, w, *theta),
            DirectionSet::Complement { frame, theta } => complement_membership(v, frame, *theta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionProfile {
    pub fragment: usize,
    pub increments: Vec<Vec<f64>>,
    pub lengths: Vec<f64>,
    pub total_length: f64,
    /// Length-weighted share of nonzero increments inside the set.
    pub fraction_in: f64,
    /// `fraction_in == 1`.
    pub in_direction: bool,
}

pub fn fragment_profile(gamma: &CurveFragment, f: &LipschitzMap, set: &DirectionSet) -> Result<DirectionProfile> {
    if gamma.len() < 2 {
        return Err(Error::param("fragment", "needs at least two points"));
    }
    if let Some(&i) = gamma.indices.iter().find(|&&i| i >= f.len()) {
        return Err(Error::param("fragment", format!("index {i} outside the map's domain")));
    }
    let mut increments = Vec::new();
    let mut lengths = Vec::new();
    let (mut inside, mut nonzero) = (0.0, 0.0);
    for (a, b, len) in gamma.steps() {
        let v = sub(f.value(b), f.value(a));
        if v.iter().any(|&x| x != 0.0) {
            nonzero += len;
            if set.contains(&v) {
                inside += len;
            }
        }
        increments.push(v);
        lengths.push(len);
    }
    let fraction_in = if nonzero > 0.0 { inside / nonzero } else { 0.0 };
    Ok(DirectionProfile {
        fragment: 0,
        increments,
        lengths,
        total_length: gamma.params[gamma.len() - 1] - gamma.params[0],
        fraction_in,
        in_direction: fraction_in == 1.0,
    })
}

/// Profiles of a whole family, numbered by position.
pub fn family_profiles(fragments: &[CurveFragment], f: &LipschitzMap, set: &DirectionSet) -> Result<Vec<DirectionProfile>> {
    par::map(fragments.len(), |k| {
        fragment_profile(&fragments[k], f, set).map(|mut p| {
            p.fragment = k;
            p
        })
    })
    .into_iter()
    .collect()
}

/// Distinct fragment edges `(a, b, len)` with `a < b`; the first length
/// seen for a pair is kept.
pub fn distinct_edges(fragments: &[CurveFragment]) -> Vec<(usize, usize, f64)> {
    let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for g in fragments {
        for (a, b, len) in g.steps() {
            seen.entry((a.min(b), a.max(b))).or_insert(len);
        }
    }
    seen.into_iter().map(|((a, b), l)| (a, b, l)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    pub d: usize,
    /// Points of `S`, in input order.
    pub points: Vec<usize>,
    /// One orthonormal `m x d` frame per point of `S`.
    pub frames: Vec<DMatrix<f64>>,
    /// Length of distinct fragment edges touching `S` that leave the
    /// `theta`-cone of an endpoint's frame.
    pub violation: f64,
    pub per_point_violation: Vec<f64>,
    /// Length of distinct nonzero fragment edges touching `S`.
    pub incident_length: f64,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    d: usize,
    points: Vec<usize>,
    frames: Vec<Vec<Vec<f64>>>,
    violation: f64,
    per_point_violation: Vec<f64>,
    incident_length: f64,
}

impl Serialize for TangentField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldRepr {
            d: self.d,
            points: self.points.clone(),
            frames: self
                .frames
                .iter()
                .map(|fr| fr.column_iter().map(|c| c.iter().copied().collect()).collect())
                .collect(),
            violation: self.violation,
            per_point_violation: self.per_point_violation.clone(),
            incident_length: self.incident_length,
        }
        .serialize(s)
    }
}

/// Top-`d` right singular directions of the weighted unit increments,
/// completed with coordinate axes when the data span fewer directions.
fn fit_frame(rows: &[Vec<f64>], m: usize, d: usize) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if !rows.is_empty() && d > 0 {
        let a = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        let svd = a.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]).then(x.cmp(&y)));
        let top = svd.singular_values.max();
        for k in order {
            if cols.len() == d || svd.singular_values[k] <= 1e-12 * top {
                break;
            }
            let mut v: DVector<f64> = vt.row(k).transpose();
            // sign convention: first nonzero entry positive
            if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
                if *x < 0.0 {
                    v.neg_mut();
                }
            }
            cols.push(v);
        }
    }
    let mut axis = 0;
    while cols.len() < d {
        let mut e = DVector::zeros(m);
        e[axis] = 1.0;
        axis += 1;
        for c in &cols {
            let p = c.dot(&e);
            e -= c * p;
        }
        let n = e.norm();
        if n > 1e-8 {
            cols.push(e / n);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Fits a `d`-dimensional frame at every point of `s` from the increments of
/// fragment edges incident to it.
pub fn fit_tangent_field(
    space: &FiniteMetricSpace,
    s: &[usize],
    f: &LipschitzMap,
    fragments: &[CurveFragment],
    d: usize,
    theta: f64,
) -> Result<TangentField> {
    let m = f.target().dim();
    if d > m {
        return Err(Error::param("d", format!("subspace dimension {d} exceeds target dimension {m}")));
    }
    check_theta(theta)?;
    if f.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: f.len(),
        });
    }
    let edges = distinct_edges(fragments);
    if let Some(&(_, b, _)) = edges.iter().find(|e| e.1 >= space.len()) {
        return Err(Error::param("fragments", format!("index {b} out of range")));
    }
    let mut slot = vec![usize::MAX; space.len()];
    for (k, &x) in s.iter().enumerate() {
        slot[x] = k;
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); s.len()];
    for (e, &(a, b, _)) in edges.iter().enumerate() {
        for x in [a, b] {
            if slot[x] != usize::MAX {
                incident[slot[x]].push(e);
            }
        }
    }
    let incr = |e: usize| sub(f.value(edges[e].1), f.value(edges[e].0));
    let frames = par::map(s.len(), |k| {
        let rows: Vec<Vec<f64>> = incident[k]
            .iter()
            .filter_map(|&e| {
                let v = incr(e);
                let n = euclid(&v);
                (n > 0.0).then(|| {
                    let w = edges[e].2.sqrt() / n;
                    v.iter().map(|x| x * w).collect()
                })
            })
            .collect();
        fit_frame(&rows, m, d)
    });
    let mut violation = 0.0;
    let mut incident_length = 0.0;
    let mut per_point_violation = vec![0.0; s.len()];
    for (e, &(a, b, len)) in edges.iter().enumerate() {
        let ends: Vec<usize> = [a, b].into_iter().filter(|&x| slot[x] != usize::MAX).collect();
        if ends.is_empty() {
            continue;
        }
        let v = incr(e);
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        incident_length += len;
        let failing: Vec<usize> = ends
            .into_iter()
            .filter(|&x| !subspace_cone_membership(&v, &frames[slot[x]], theta))
            .collect();
        if !failing.is_empty() {
            violation += len;
            for x in failing {
                per_point_violation[slot[x]] += len;
            }
        }
    }
    Ok(TangentField {
        d,
        points: s.to_vec(),
        frames,
        violation,
        per_point_violation,
        incident_length,
    })
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", "need 0 < theta < 1"));
    }
    Ok(())
}

/// Sine of the largest principal angle between span(`u`) and span(`w`),
/// both orthonormal with `u` of dimension at most that of `w`.
pub fn max_principal_sine(u: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    if u.ncols() == 0 {
        return 0.0;
    }
    let resid = u - w * (w.transpose() * u);
    resid.singular_values().max().min(1.0)
}

fn chordal(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = a * a.transpose();
    let pb = b * b.transpose();
    (pa - pb).norm_squared()
}

/// Top-`d` eigenvectors of the mean projection matrix.
fn chordal_mean(frames: &[&DMatrix<f64>], m: usize, d: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(m, m);
    for f in frames {
        acc += *f * f.transpose();
    }
    let eig = acc.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let cols: Vec<DVector<f64>> = order[..d]
        .iter()
        .map(|&k| {
            let mut v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
            if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
                if *x < 0.0 {
                    v.neg_mut();
                }
            }
            v
        })
        .collect();
    DMatrix::from_columns(&cols)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub indices: Vec<usize>,
    pub frame: DMatrix<f64>,
    /// Length of distinct fragment edges touching the piece whose increment
    /// lies in the conical complement of the piece's subspace.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub pieces: Vec<Piece>,
    pub unassigned: Vec<usize>,
    pub cost: f64,
}

impl Partition {
    pub fn summary(&self) -> PartitionSummary {
        PartitionSummary {
            piece_sizes: self.pieces.iter().map(|p| p.indices.len()).collect(),
            piece_violations: self.pieces.iter().map(|p| p.violation).collect(),
            unassigned: self.unassigned.len(),
            cost: self.cost,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub piece_sizes: Vec<usize>,
    pub piece_violations: Vec<f64>,
    pub unassigned: usize,
    pub cost: f64,
}

/// Clusters the field's frames into at most `budget` subspaces and assigns
/// every point whose frame is within the `theta`-cone (sine of the largest
/// principal angle below `1 - theta`) of its nearest subspace.
pub fn partition_by_field(
    field: &TangentField,
    f: &LipschitzMap,
    fragments: &[CurveFragment],
    theta: f64,
    budget: usize,
    seed: u64,
) -> Result<Partition> {
    if budget < 1 {
        return Err(Error::param("M", "piece budget must be at least 1"));
    }
    check_theta(theta)?;
    let m = f.target().dim();
    let d = field.d;
    let n = field.points.len();
    if n == 0 {
        return Ok(Partition {
            pieces: Vec::new(),
            unassigned: Vec::new(),
            cost: 0.0,
        });
    }
    let centers = if d == 0 {
        vec![DMatrix::zeros(m, 0)]
    } else {
        cluster(&field.frames, m, d, budget, seed)
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    let mut unassigned = Vec::new();
    let mut cost = 0.0;
    for (k, fr) in field.frames.iter().enumerate() {
        let (best, sine) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, max_principal_sine(fr, c)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if d == 0 || sine < 1.0 - theta {
            members[best].push(field.points[k]);
            cost += sine * sine;
        } else {
            unassigned.push(field.points[k]);
        }
    }
    let edges = distinct_edges(fragments);
    let pieces = members
        .into_iter()
        .zip(centers)
        .filter(|(idx, _)| !idx.is_empty())
        .map(|(indices, frame)| {
            let violation = piece_violation(&indices, &frame, f, &edges, theta);
            Piece {
                indices,
                frame,
                violation,
            }
        })
        .collect();
    Ok(Partition {
        pieces,
        unassigned,
        cost,
    })
}

fn piece_violation(indices: &[usize], frame: &DMatrix<f64>, f: &LipschitzMap, edges: &[(usize, usize, f64)], theta: f64) -> f64 {
    let inside: std::collections::BTreeSet<usize> = indices.iter().copied().collect();
    edges
        .iter()
        .filter(|(a, b, _)| inside.contains(a) || inside.contains(b))
        .filter(|(a, b, _)| {
            let v = sub(f.value(*b), f.value(*a));
            v.iter().any(|&x| x != 0.0) && complement_membership(&v, frame, theta)
        })
        .map(|e| e.2)
        .sum()
}

/// Seeded k-means on the Grassmannian with the chordal distance, k-means++
/// seeding and [`RESTARTS`] restarts; the cheapest run wins, earliest on ties.
fn cluster(frames: &[DMatrix<f64>], m: usize, d: usize, budget: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let n = frames.len();
    let mut distinct: Vec<usize> = Vec::new();
    for i in 0..n {
        if distinct.iter().all(|&j| chordal(&frames[i], &frames[j]) > 1e-20) {
            distinct.push(i);
            if distinct.len() > budget {
                break;
            }
        }
    }
    let k = budget.min(distinct.len());
    if k == distinct.len() {
        return distinct.iter().map(|&i| frames[i].clone()).collect();
    }
    let runs = par::map(RESTARTS, |run| {
        let mut r = rng::stream(seed, run as u64);
        let mut centers: Vec<DMatrix<f64>> = vec![frames[r.gen_range(0..n)].clone()];
        while centers.len() < k {
            let w: Vec<f64> = frames
                .iter()
                .map(|fr| centers.iter().map(|c| chordal(fr, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = w.iter().sum();
            let pick = if total > 0.0 {
                let mut t = r.gen::<f64>() * total;
                let mut chosen = n - 1;
                for (i, wi) in w.iter().enumerate() {
                    if t < *wi {
                        chosen = i;
                        break;
                    }
                    t -= wi;
                }
                chosen
            } else {
                0
            };
            centers.push(frames[pick].clone());
        }
        let mut assign = vec![usize::MAX; n];
        let mut cost = 0.0;
        for _ in 0..MAX_LLOYD {
            let mut changed = false;
            cost = 0.0;
            for (i, fr) in frames.iter().enumerate() {
                let (best, dist) = centers
                    .iter()
                    .enumerate()
                    .map(|(c, ce)| (c, chordal(fr, ce)))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                cost += dist;
                if assign[i] != best {
                    assign[i] = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let group: Vec<&DMatrix<f64>> = (0..n).filter(|&i| assign[i] == c).map(|i| &frames[i]).collect();
                if !group.is_empty() {
                    *center = chordal_mean(&group, m, d);
                }
            }
        }
        (cost, centers)
    });
    runs.into_iter()
        .fold(None::<(f64, Vec<DMatrix<f64>>)>, |best, run| match best {
            Some(b) if b.0 <= run.0 => Some(b),
            _ => Some(run),
        })
        .map(|b| b.1)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_examples() {
        let w = [1.0, 0.0];
        assert!(cone_membership(&w, &w, 0.3));
        assert!(!cone_membership(&[0.0, 1.0], &w, 0.5));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(cone_membership(&[h, h], &w, 0.3));
    }

    #[test]
    fn complement_examples() {
        let empty = DMatrix::zeros(2, 0);
        assert!(complement_membership(&[0.3, -0.1], &empty, 0.1));
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(!complement_membership(&[2.0, 0.0], &e1, 0.9));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(!complement_membership(&[h, h], &e1, 0.2));
    }

    #[test]
    fn principal_sine() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let diag = DMatrix::from_column_slice(2, 1, &[h, h]);
        assert!((max_principal_sine(&diag, &e1) - h).abs() < 1e-12);
        assert!(max_principal_sine(&e1, &e1) < 1e-15);
    }
}
