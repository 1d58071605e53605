//! Finite metric spaces, neighbourhood graphs, curve fragments, epsilon nets
//! and the Kuratowski embedding into `l_inf^m`.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::normgeom::NormedSpace;
use crate::{par, rng, Error, PointCloud, Result};

/// Above this size the triangle inequality is checked on sampled triples.
pub const EXHAUSTIVE_TRIANGLE_N: usize = 500;
const SAMPLED_TRIPLES: usize = 1_000_000;
/// Relative slack for floating-point symmetry and triangle checks.
pub const METRIC_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricViolation {
    NotSquare { rows: usize, row: usize, len: usize },
    NonFinite { i: usize, j: usize },
    Negative { i: usize, j: usize, value: f64 },
    NonZeroDiagonal { i: usize, value: f64 },
    Asymmetric { i: usize, j: usize, dij: f64, dji: f64 },
    ZeroOffDiagonal { i: usize, j: usize },
    /// `D(i,k) > D(i,j) + D(j,k)`.
    Triangle { i: usize, j: usize, k: usize },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricViolation::NotSquare { rows, row, len } => {
                write!(f, "matrix not square: row {row} has {len} entries, expected {rows}")
            }
            MetricViolation::NonFinite { i, j } => write!(f, "non-finite entry at ({i},{j})"),
            MetricViolation::Negative { i, j, value } => write!(f, "negative entry {value} at ({i},{j})"),
            MetricViolation::NonZeroDiagonal { i, value } => write!(f, "diagonal entry {value} at {i}"),
            MetricViolation::Asymmetric { i, j, dij, dji } => {
                write!(f, "asymmetry: D({i},{j})={dij} but D({j},{i})={dji}")
            }
            MetricViolation::ZeroOffDiagonal { i, j } => write!(f, "distinct points {i} and {j} at distance 0"),
            MetricViolation::Triangle { i, j, k } => {
                write!(f, "triangle inequality fails: D({i},{k}) > D({i},{j}) + D({j},{k})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDiagnostics {
    pub pass: bool,
    pub violation: Option<MetricViolation>,
    pub exhaustive: bool,
    pub triples_checked: u64,
}

/// Checks the metric axioms. Entry checks come first; the triangle scan is
/// exhaustive up to [`EXHAUSTIVE_TRIANGLE_N`] points and seeded-sampled above.
pub fn validate_metric(d: &[Vec<f64>]) -> MetricDiagnostics {
    let n = d.len();
    let fail = |v| MetricDiagnostics {
        pass: false,
        violation: Some(v),
        exhaustive: n <= EXHAUSTIVE_TRIANGLE_N,
        triples_checked: 0,
    };
    if let Some((row, r)) = d.iter().enumerate().find(|(_, r)| r.len() != n) {
        return fail(MetricViolation::NotSquare { rows: n, row, len: r.len() });
    }
    for i in 0..n {
        for j in 0..n {
            let x = d[i][j];
            if !x.is_finite() {
                return fail(MetricViolation::NonFinite { i, j });
            }
            if x < 0.0 {
                return fail(MetricViolation::Negative { i, j, value: x });
            }
        }
    }
    for i in 0..n {
        if d[i][i] != 0.0 {
            return fail(MetricViolation::NonZeroDiagonal { i, value: d[i][i] });
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (d[i][j], d[j][i]);
            if (a - b).abs() > METRIC_TOL * a.max(b) {
                return fail(MetricViolation::Asymmetric { i, j, dij: a, dji: b });
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] == 0.0 {
                return fail(MetricViolation::ZeroOffDiagonal { i, j });
            }
        }
    }
    let broken = |i: usize, j: usize, k: usize| d[i][k] > (d[i][j] + d[j][k]) * (1.0 + METRIC_TOL);
    if n <= EXHAUSTIVE_TRIANGLE_N {
        let first = par::map(n, |i| {
            (0..n).find_map(|j| (0..n).find(|&k| broken(i, j, k)).map(|k| (j, k)))
        });
        let triples = (n as u64).pow(3);
        if let Some((i, (j, k))) = first.into_iter().enumerate().find_map(|(i, x)| x.map(|jk| (i, jk))) {
            return MetricDiagnostics {
                pass: false,
                violation: Some(MetricViolation::Triangle { i, j, k }),
                exhaustive: true,
                triples_checked: triples,
            };
        }
        MetricDiagnostics {
            pass: true,
            violation: None,
            exhaustive: true,
            triples_checked: triples,
        }
    } else {
        let hits = par::map(SAMPLED_TRIPLES, |t| {
            let mut r = rng::stream(rng::DEFAULT_SEED, t as u64);
            let (i, j, k) = (r.gen_range(0..n), r.gen_range(0..n), r.gen_range(0..n));
            broken(i, j, k).then_some((i, j, k))
        });
        let violation = hits
            .into_iter()
            .flatten()
            .next()
            .map(|(i, j, k)| MetricViolation::Triangle { i, j, k });
        MetricDiagnostics {
            pass: violation.is_none(),
            violation,
            exhaustive: false,
            triples_checked: SAMPLED_TRIPLES as u64,
        }
    }
}

/// `n` points with a distance matrix; optionally backed by coordinates in a
/// normed space.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    n: usize,
    d: Vec<f64>,
    coords: Option<(PointCloud, NormedSpace)>,
    labels: Option<Vec<String>>,
}

impl FiniteMetricSpace {
    /// Validates `rows` and builds the space.
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let diag = validate_metric(&rows);
        if let Some(v) = diag.violation {
            return Err(Error::Metric(v));
        }
        let n = rows.len();
        Ok(FiniteMetricSpace {
            n,
            d: rows.into_iter().flatten().collect(),
            coords: None,
            labels: None,
        })
    }

    /// Distances induced by `norm` on the points of `cloud`.
    pub fn from_cloud(cloud: PointCloud, norm: NormedSpace) -> Result<Self> {
        let n = cloud.len();
        if !cloud.is_empty() && cloud.dim() != norm.dim() {
            return Err(Error::DimensionMismatch {
                expected: norm.dim(),
                found: cloud.dim(),
            });
        }
        let rows = par::map(n, |i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { norm.dist(cloud.row(i), cloud.row(j)) })
                .collect::<Vec<f64>>()
        });
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // symmetric by construction, whatever the rounding
                d[i * n + j] = if i < j { rows[i][j] } else { rows[j][i] };
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if d[i * n + j] == 0.0 {
                    return Err(Error::Metric(MetricViolation::ZeroOffDiagonal { i, j }));
                }
            }
        }
        Ok(FiniteMetricSpace {
            n,
            d,
            coords: Some((cloud, norm)),
            labels: None,
        })
    }

    pub fn euclidean_cloud(cloud: PointCloud) -> Result<Self> {
        let norm = NormedSpace::euclidean(cloud.dim().max(1))?;
        FiniteMetricSpace::from_cloud(cloud, norm)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn coords(&self) -> Option<&PointCloud> {
        self.coords.as_ref().map(|c| &c.0)
    }

    pub fn coord_norm(&self) -> Option<&NormedSpace> {
        self.coords.as_ref().map(|c| &c.1)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diameter(&self) -> f64 {
        par::max(self.n, |i| self.row(i).iter().copied().fold(0.0, f64::max)).max(0.0)
    }

    /// Smallest distance between distinct points; infinite below two points.
    pub fn min_separation(&self) -> f64 {
        par::min(self.n, |i| {
            (0..self.n)
                .filter(|&j| j != i)
                .map(|j| self.dist(i, j))
                .fold(f64::INFINITY, f64::min)
        })
    }

    /// `D(i, set)`; infinite for an empty set.
    pub fn dist_to_set(&self, i: usize, set: &[usize]) -> f64 {
        set.iter().map(|&j| self.dist(i, j)).fold(f64::INFINITY, f64::min)
    }

    /// Diameter of a subset.
    pub fn subset_diameter(&self, set: &[usize]) -> f64 {
        par::max(set.len(), |a| {
            set.iter().map(|&b| self.dist(set[a], b)).fold(0.0, f64::max)
        })
        .max(0.0)
    }

    /// Restriction to `indices`, keeping coordinates when present.
    pub fn subspace(&self, indices: &[usize]) -> FiniteMetricSpace {
        let k = indices.len();
        let mut d = vec![0.0; k * k];
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                d[a * k + b] = self.dist(i, j);
            }
        }
        FiniteMetricSpace {
            n: k,
            d,
            coords: self.coords.as_ref().map(|(c, nm)| (c.select(indices), nm.clone())),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
        }
    }
}

/// Serialized form of a space.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceRepr {
    Cloud {
        points: Vec<Vec<f64>>,
        norm: crate::normgeom::Norm,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Matrix {
        distances: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
}

impl From<&FiniteMetricSpace> for SpaceRepr {
    fn from(s: &FiniteMetricSpace) -> Self {
        match &s.coords {
            Some((c, nm)) => SpaceRepr::Cloud {
                points: c.to_rows(),
                norm: nm.norm_kind().clone(),
                labels: s.labels.clone(),
            },
            None => SpaceRepr::Matrix {
                distances: s.to_rows(),
                labels: s.labels.clone(),
            },
        }
    }
}

impl TryFrom<SpaceRepr> for FiniteMetricSpace {
    type Error = Error;

    fn try_from(r: SpaceRepr) -> Result<Self> {
        let (space, labels) = match r {
            SpaceRepr::Cloud { points, norm, labels } => {
                let cloud = PointCloud::from_rows(&points)?;
                let ns = NormedSpace::new(cloud.dim().max(1), norm)?;
                (FiniteMetricSpace::from_cloud(cloud, ns)?, labels)
            }
            SpaceRepr::Matrix { distances, labels } => (FiniteMetricSpace::from_matrix(distances)?, labels),
        };
        match labels {
            Some(l) => space.with_labels(l),
            None => Ok(space),
        }
    }
}

/// Reads a point cloud from CSV with header `x1..xk`.
pub fn read_cloud_csv<R: Read>(r: R) -> Result<PointCloud> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = rdr.headers()?.clone();
    for (i, h) in headers.iter().enumerate() {
        if h.trim() != format!("x{}", i + 1) {
            return Err(Error::param("csv", format!("expected header x{} but found {h:?}", i + 1)));
        }
    }
    let k = headers.len();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: rec.len() });
        }
        for f in rec.iter() {
            let x: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::param("csv", format!("not a number: {f:?}")))?;
            data.push(x);
        }
    }
    PointCloud::new(k, data)
}

pub fn write_cloud_csv<W: Write>(w: W, cloud: &PointCloud) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record((1..=cloud.dim()).map(|i| format!("x{i}")))?;
    for r in cloud.rows() {
        wtr.write_record(r.iter().map(|x| format!("{x:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a headerless square distance matrix.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::param("csv", format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Neighbourhood graph construction rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Complete,
    Knn(usize),
    Radius(f64),
}

impl GraphMode {
    /// Complete up to 2000 points, 16 nearest neighbours above.
    pub fn default_for(n: usize) -> GraphMode {
        if n <= 2000 {
            GraphMode::Complete
        } else {
            GraphMode::Knn(16)
        }
    }
}

/// Simple undirected graph with edges weighted by distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    /// Builds from an edge list, dropping loops and duplicate pairs.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut list: Vec<(usize, usize, f64)> = Vec::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::param("edges", format!("edge ({a},{b}) out of range for {n} nodes")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param("edges", format!("bad weight {w} on ({a},{b})")));
            }
            if a != b {
                list.push((a.min(b), a.max(b), w));
            }
        }
        list.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        list.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
        let mut adj = vec![Vec::new(); n];
        for &(a, b, w) in &list {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        Ok(Graph { n, edges: list, adj })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges `(i, j, len)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }
}

pub fn neighborhood_graph(space: &FiniteMetricSpace, mode: GraphMode) -> Result<Graph> {
    let n = space.len();
    match mode {
        GraphMode::Complete => {
            let rows = par::map(n, |i| {
                (i + 1..n).map(|j| (i, j, space.dist(i, j))).collect::<Vec<_>>()
            });
            Graph::from_edges(n, rows.into_iter().flatten())
        }
        GraphMode::Knn(k) => {
            if k == 0 {
                return Err(Error::param("k", "need k >= 1"));
            }
            let rows = par::map(n, |i| {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                others.sort_by(|&a, &b| space.dist(i, a).total_cmp(&space.dist(i, b)).then(a.cmp(&b)));
                others.truncate(k);
                others.into_iter().map(|j| (i, j, space.dist(i, j))).collect::<Vec<_>>()
            });
            Graph::from_edges(n, rows.into_iter().flatten())
        }
        GraphMode::Radius(r) => {
            if !(r > 0.0) {
                return Err(Error::param("r", "need r > 0"));
            }
            let rows = par::map(n, |i| {
                (i + 1..n)
                    .filter(|&j| space.dist(i, j) <= r)
                    .map(|j| (i, j, space.dist(i, j)))
                    .collect::<Vec<_>>()
            });
            Graph::from_edges(n, rows.into_iter().flatten())
        }
    }
}

/// A bi-Lipschitz vertex path: `indices[j]` sits at parameter `params[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveFragment {
    pub params: Vec<f64>,
    pub indices: Vec<usize>,
    /// `(lower, upper)` with `lower |t_j - t_k| <= D <= upper |t_j - t_k|`.
    pub bilip: (f64, f64),
}

impl CurveFragment {
    /// Parametrizes a vertex path by cumulative length.
    pub fn from_path(space: &FiniteMetricSpace, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::param("indices", "empty path"));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= space.len()) {
            return Err(Error::param("indices", format!("index {i} out of range")));
        }
        let mut params = vec![0.0];
        for w in indices.windows(2) {
            let step = space.dist(w[0], w[1]);
            if step == 0.0 {
                return Err(Error::param("indices", "path repeats a point"));
            }
            params.push(params.last().unwrap() + step);
        }
        let bilip = measure_bilip(space, &indices, &params);
        if !(bilip.0 > 0.0) {
            return Err(Error::param("indices", "path revisits a point"));
        }
        Ok(CurveFragment { params, indices, bilip })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Consecutive steps `(from, to, parameter length)`.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (1..self.indices.len()).map(|j| (self.indices[j - 1], self.indices[j], self.params[j] - self.params[j - 1]))
    }

    /// Exhaustive pair check of the recorded bounds.
    pub fn verify(&self, space: &FiniteMetricSpace) -> bool {
        let strictly_increasing = self.params.windows(2).all(|w| w[0] < w[1]);
        let (lo, hi) = self.bilip;
        let slack = 1.0 + 1e-12;
        strictly_increasing
            && lo > 0.0
            && (0..self.len()).all(|a| {
                (a + 1..self.len()).all(|b| {
                    let dt = self.params[b] - self.params[a];
                    let dd = space.dist(self.indices[a], self.indices[b]);
                    lo * dt <= dd * slack && dd <= hi * dt * slack
                })
            })
    }
}

fn measure_bilip(space: &FiniteMetricSpace, indices: &[usize], params: &[f64]) -> (f64, f64) {
    let q = indices.len();
    if q < 2 {
        return (1.0, 1.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for a in 0..q {
        for b in a + 1..q {
            let r = space.dist(indices[a], indices[b]) / (params[b] - params[a]);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

/// Every graph edge as a two-point fragment.
pub fn edge_fragments(space: &FiniteMetricSpace, graph: &Graph) -> Vec<CurveFragment> {
    graph
        .edges()
        .iter()
        .map(|&(a, b, w)| CurveFragment {
            params: vec![0.0, w],
            indices: vec![a, b],
            bilip: (space.dist(a, b) / w, space.dist(a, b) / w),
        })
        .collect()
}

/// Point images in a normed target, with the measured Lipschitz constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzMap {
    target: NormedSpace,
    values: PointCloud,
    lip: f64,
}

impl LipschitzMap {
    pub fn new(space: &FiniteMetricSpace, target: NormedSpace, values: PointCloud) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: values.len(),
            });
        }
        if !values.is_empty() && values.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: values.dim(),
            });
        }
        let lip = lipschitz_constant(space, &target, &values);
        if !lip.is_finite() {
            return Err(Error::param("values", "Lipschitz constant is not finite"));
        }
        Ok(LipschitzMap { target, values, lip })
    }

    /// The coordinate embedding of a point-cloud space.
    pub fn identity(space: &FiniteMetricSpace) -> Result<Self> {
        let (cloud, norm) = space
            .coords
            .as_ref()
            .ok_or_else(|| Error::param("space", "identity needs a point-cloud space"))?;
        LipschitzMap::new(space, norm.clone(), cloud.clone())
    }

    pub fn target(&self) -> &NormedSpace {
        &self.target
    }

    pub fn values(&self) -> &PointCloud {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max_i |self(i) - other(i)|` in the target norm.
    pub fn sup_dist(&self, other: &LipschitzMap) -> f64 {
        par::max(self.len(), |i| self.target.dist(self.value(i), other.value(i))).max(0.0)
    }

    /// `max_i |self(i)|`.
    pub fn sup_norm(&self) -> f64 {
        par::max(self.len(), |i| self.target.norm(self.value(i))).max(0.0)
    }
}

/// `max_{i<j} |v_i - v_j| / D(i,j)`; zero below two points.
pub fn lipschitz_constant(space: &FiniteMetricSpace, target: &NormedSpace, values: &PointCloud) -> f64 {
    let n = values.len();
    par::max(n, |i| {
        (i + 1..n)
            .map(|j| target.dist(values.row(i), values.row(j)) / space.dist(i, j))
            .fold(0.0, f64::max)
    })
    .max(0.0)
}

/// Greedy maximal epsilon-net scanning indices in ascending order: a point
/// joins when it is at distance `>= eps` from every point already kept.
pub fn max_epsilon_net(space: &FiniteMetricSpace, eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "need eps > 0"));
    }
    let mut net: Vec<usize> = Vec::new();
    for i in 0..space.len() {
        if net.iter().all(|&j| space.dist(i, j) >= eps) {
            net.push(i);
        }
    }
    Ok(net)
}

/// `F(x) = (D(x, x_1), ..., D(x, x_m))` into `l_inf^m`.
pub fn kuratowski_embed(space: &FiniteMetricSpace, net: &[usize]) -> Result<LipschitzMap> {
    if net.is_empty() {
        return Err(Error::param("net", "empty net"));
    }
    if let Some(&j) = net.iter().find(|&&j| j >= space.len()) {
        return Err(Error::param("net", format!("index {j} out of range")));
    }
    let m = net.len();
    let mut data = Vec::with_capacity(space.len() * m);
    for i in 0..space.len() {
        data.extend(net.iter().map(|&j| space.dist(i, j)));
    }
    LipschitzMap::new(space, NormedSpace::linf(m)?, PointCloud::new(m, data)?)
}
