//! Finite-dimensional normed spaces, operator norms and adapted bases.
//!
//! A space is `R^m` with either an `l_p` norm or a polytope norm whose unit
//! ball is the absolutely convex hull of user-supplied vertices. Operator
//! norms are exact where a closed form exists (dual norms, `l_1` domains,
//! `l_inf` codomains, polytope domains, small `l_inf` domains, the `l_2`
//! spectral case) and otherwise are sampled lower bounds.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{par, rng, Error, Result};

/// Largest dimension for which sign vertices are enumerated exhaustively.
pub const EXHAUSTIVE_SIGN_DIM: usize = 12;
/// Largest `l_inf` domain dimension for exact operator norms.
const EXHAUSTIVE_LINF_DOMAIN: usize = 16;
const RANK_TOL: f64 = 1e-12;

/// Evaluates the `l_p` norm, `p` in `[1, inf]`.
pub fn p_norm(v: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param("p", format!("exponent {p} is below 1")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("v", "vector has non-finite entries"));
    }
    Ok(lp(v, p))
}

fn lp(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        let big = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if big == 0.0 {
            return 0.0;
        }
        big * v.iter().map(|x| (x.abs() / big).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Norm whose unit ball is the absolutely convex hull of `vertices`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolytopeNorm {
    vertices: Vec<Vec<f64>>,
    equiv: f64,
}

impl PolytopeNorm {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let m = vertices.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::param("vertices", "need at least one nonzero vertex"));
        }
        if vertices.iter().any(|v| v.len() != m) {
            return Err(Error::param("vertices", "vertices have differing lengths"));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::param("vertices", "non-finite coordinate"));
        }
        let vm = DMatrix::from_fn(m, vertices.len(), |i, j| vertices[j][i]);
        // pick m independent columns greedily to bound the gauge from above
        let mut chosen: Vec<usize> = Vec::new();
        for j in 0..vertices.len() {
            let mut cols: Vec<usize> = chosen.clone();
            cols.push(j);
            let sub = vm.select_columns(cols.iter());
            let sv = sub.singular_values();
            let top = sv.max();
            if top > 0.0 && sv.min() > RANK_TOL * top {
                chosen = cols;
                if chosen.len() == m {
                    break;
                }
            }
        }
        if chosen.len() < m {
            return Err(Error::param(
                "vertices",
                format!("vertices span only {} of {m} dimensions", chosen.len()),
            ));
        }
        let basis = vm.select_columns(chosen.iter());
        let smin = basis.singular_values().min();
        // gauge(x) <= |B^-1 x|_1 <= sqrt(m)/smin |x|_2, gauge(x) >= |x|_2 / max|v_i|_2
        let upper = (m as f64).sqrt() / smin;
        let radius = vertices
            .iter()
            .map(|v| lp(v, 2.0))
            .fold(0.0, f64::max);
        Ok(PolytopeNorm {
            vertices,
            equiv: upper.max(radius).max(1.0),
        })
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// Gauge of the unit ball: min sum |lambda_i| subject to sum lambda_i v_i = x.
    fn gauge(&self, x: &[f64]) -> f64 {
        if x.iter().all(|&c| c == 0.0) {
            return 0.0;
        }
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = self
            .vertices
            .iter()
            .map(|_| (lp.add_var(1.0, (0.0, f64::INFINITY)), lp.add_var(1.0, (0.0, f64::INFINITY))))
            .collect();
        for (i, &xi) in x.iter().enumerate() {
            let expr: Vec<_> = vars
                .iter()
                .zip(&self.vertices)
                .flat_map(|(&(a, b), v)| [(a, v[i]), (b, -v[i])])
                .collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, xi);
        }
        // spanning vertices make the program feasible and bounded
        lp.solve().map(|s| s.objective()).unwrap_or(f64::INFINITY)
    }

    fn dual(&self, t: &[f64]) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.iter().zip(t).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormRepr", into = "NormRepr")]
pub enum Norm {
    P(f64),
    General(PolytopeNorm),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NormRepr {
    P(PValue),
    General(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PValue {
    Num(f64),
    Word(String),
}

impl TryFrom<NormRepr> for Norm {
    type Error = Error;

    fn try_from(r: NormRepr) -> Result<Self> {
        match r {
            NormRepr::P(PValue::Num(p)) if p >= 1.0 => Ok(Norm::P(p)),
            NormRepr::P(PValue::Num(p)) => Err(Error::param("p", format!("exponent {p} is below 1"))),
            NormRepr::P(PValue::Word(w)) if w == "inf" => Ok(Norm::P(f64::INFINITY)),
            NormRepr::P(PValue::Word(w)) => Err(Error::param("p", format!("unknown exponent {w:?}"))),
            NormRepr::General(v) => PolytopeNorm::new(v).map(Norm::General),
        }
    }
}

impl From<Norm> for NormRepr {
    fn from(n: Norm) -> Self {
        match n {
            Norm::P(p) if p.is_infinite() => NormRepr::P(PValue::Word("inf".into())),
            Norm::P(p) => NormRepr::P(PValue::Num(p)),
            Norm::General(g) => NormRepr::General(g.vertices),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Norm::P(p) if p.is_infinite() => write!(f, "l_inf"),
            Norm::P(p) => write!(f, "l_{p}"),
            Norm::General(g) => write!(f, "polytope({} vertices)", g.vertices.len()),
        }
    }
}

/// `R^m` with a norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormedSpace {
    dim: usize,
    norm: Norm,
}

impl NormedSpace {
    pub fn new(dim: usize, norm: Norm) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "space must have positive dimension"));
        }
        match &norm {
            Norm::P(p) if p.is_nan() || *p < 1.0 => {
                return Err(Error::param("p", format!("exponent {p} is below 1")))
            }
            Norm::General(g) if g.dim() != dim => {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.dim(),
                })
            }
            _ => {}
        }
        Ok(NormedSpace { dim, norm })
    }

    pub fn lp(dim: usize, p: f64) -> Result<Self> {
        NormedSpace::new(dim, Norm::P(p))
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        NormedSpace::lp(dim, 2.0)
    }

    pub fn linf(dim: usize) -> Result<Self> {
        NormedSpace::lp(dim, f64::INFINITY)
    }

    pub fn polytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let g = PolytopeNorm::new(vertices)?;
        NormedSpace::new(g.dim(), Norm::General(g))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_kind(&self) -> &Norm {
        &self.norm
    }

    pub fn is_euclidean(&self) -> bool {
        self.norm == Norm::P(2.0)
    }

    fn p(&self) -> Option<f64> {
        match self.norm {
            Norm::P(p) => Some(p),
            Norm::General(_) => None,
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match &self.norm {
            Norm::P(p) => lp(v, *p),
            Norm::General(g) => g.gauge(v),
        }
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&d)
    }

    /// Norm of the covector `v -> t.v`.
    pub fn dual_norm(&self, t: &[f64]) -> f64 {
        match &self.norm {
            Norm::P(p) => lp(t, conjugate(*p)),
            Norm::General(g) => g.dual(t),
        }
    }

    /// `C` with `|v|_2 / C <= |v| <= C |v|_2`.
    pub fn equivalence_constant(&self) -> f64 {
        match &self.norm {
            Norm::P(p) => {
                let e = (0.5 - 1.0 / p).abs();
                (self.dim as f64).powf(e)
            }
            Norm::General(g) => g.equiv,
        }
    }

    /// Coordinate basis scaled to unit norm, as columns.
    pub fn distinguished_basis(&self) -> DMatrix<f64> {
        let mut b = DMatrix::identity(self.dim, self.dim);
        for j in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[j] = 1.0;
            let n = self.norm(&e);
            b[(j, j)] = 1.0 / n;
        }
        b
    }
}

/// Sample count and seed for sampled suprema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            samples: 128,
            seed: rng::DEFAULT_SEED,
        }
    }
}

fn apply(t: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (t * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// Whether [`operator_norm`] uses a closed form for this pair of spaces.
pub fn operator_norm_is_exact(dom: &NormedSpace, cod: &NormedSpace) -> bool {
    cod.dim == 1
        || cod.p() == Some(f64::INFINITY)
        || dom.p() == Some(1.0)
        || matches!(dom.norm, Norm::General(_))
        || (dom.p() == Some(f64::INFINITY) && dom.dim <= EXHAUSTIVE_LINF_DOMAIN)
        || (dom.is_euclidean() && cod.is_euclidean())
}

/// `sup |T x|_cod / |x|_dom`. Exact where [`operator_norm_is_exact`],
/// otherwise the best ratio over seeded starts refined by coordinate ascent.
/// Sample `i` depends only on `(seed, i)`, so more samples never lower the
/// estimate.
pub fn operator_norm(
    t: &DMatrix<f64>,
    dom: &NormedSpace,
    cod: &NormedSpace,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if t.ncols() == 0 {
        return Err(Error::param("dom", "zero-dimensional domain"));
    }
    if t.ncols() != dom.dim {
        return Err(Error::DimensionMismatch {
            expected: dom.dim,
            found: t.ncols(),
        });
    }
    if t.nrows() != cod.dim {
        return Err(Error::DimensionMismatch {
            expected: cod.dim,
            found: t.nrows(),
        });
    }
    Ok(op_norm(t, dom, cod, samples, seed))
}

fn op_norm(t: &DMatrix<f64>, dom: &NormedSpace, cod: &NormedSpace, samples: usize, seed: u64) -> f64 {
    let rows = || (0..t.nrows()).map(|i| t.row(i).iter().copied().collect::<Vec<f64>>());
    if cod.dim == 1 {
        let row: Vec<f64> = t.row(0).iter().copied().collect();
        return dom.dual_norm(&row) * cod.norm(&[1.0]);
    }
    if cod.p() == Some(f64::INFINITY) {
        return rows().map(|r| dom.dual_norm(&r)).fold(0.0, f64::max);
    }
    if dom.p() == Some(1.0) {
        return (0..t.ncols())
            .map(|j| cod.norm(t.column(j).as_slice()))
            .fold(0.0, f64::max);
    }
    if let Norm::General(g) = &dom.norm {
        return g
            .vertices
            .iter()
            .map(|v| cod.norm(&apply(t, v)))
            .fold(0.0, f64::max);
    }
    if dom.p() == Some(f64::INFINITY) && dom.dim <= EXHAUSTIVE_LINF_DOMAIN {
        let m = dom.dim;
        return par::max(1 << (m - 1), |mask| cod.norm(&apply(t, &sign_vector(m, mask << 1))));
    }
    if dom.is_euclidean() && cod.is_euclidean() {
        return t.singular_values().max();
    }
    sampled_op_norm(t, dom, cod, samples, seed)
}

fn sampled_op_norm(t: &DMatrix<f64>, dom: &NormedSpace, cod: &NormedSpace, samples: usize, seed: u64) -> f64 {
    let m = dom.dim;
    let ratio = |x: &[f64]| {
        let n = dom.norm(x);
        if n == 0.0 {
            0.0
        } else {
            cod.norm(&apply(t, x)) / n
        }
    };
    let ascend = |mut x: Vec<f64>| {
        let mut best = ratio(&x);
        let mut step = 0.5;
        while step > 1e-4 {
            let mut improved = false;
            for j in 0..m {
                for s in [step, -step] {
                    let mut y = x.clone();
                    y[j] += s * dom.norm(&x).max(f64::MIN_POSITIVE);
                    let r = ratio(&y);
                    if r > best {
                        best = r;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    };
    // fixed starts: coordinate axes and the top Euclidean singular direction
    let svd = t.clone().svd(false, true);
    let top = svd.v_t.as_ref().and_then(|vt| {
        let k = svd.singular_values.imax();
        (vt.nrows() > k).then(|| vt.row(k).iter().copied().collect::<Vec<f64>>())
    });
    let fixed = par::max(m + 1, |j| {
        if j < m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            ascend(e)
        } else {
            top.clone().map_or(0.0, ascend)
        }
    });
    let sampled = par::max(samples, |i| {
        let mut r = rng::stream(seed, i as u64);
        let x: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        ascend(x)
    });
    fixed.max(sampled)
}

/// Sign vector whose `i`-th entry is `-1` when bit `i` of `mask` is set.
pub fn sign_vector(m: usize, mask: usize) -> Vec<f64> {
    (0..m)
        .map(|i| if (mask >> i) & 1 == 1 { -1.0 } else { 1.0 })
        .collect()
}

fn random_signs(m: usize, seed: u64, i: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, i as u64);
    (0..m).map(|_| if r.gen::<bool>() { -1.0 } else { 1.0 }).collect()
}

/// Max of `f(l)` over sign vertices `l`: all of them for `m <= 12`,
/// otherwise `samples` seeded draws plus the all-ones vertex.
fn over_signs<F>(m: usize, symmetric: bool, s: Sampling, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if m <= EXHAUSTIVE_SIGN_DIM {
        let (count, shift) = if symmetric && m > 0 { (1usize << (m - 1), 1) } else { (1usize << m, 0) };
        par::max(count, |mask| f(&sign_vector(m, mask << shift)))
    } else {
        let all = f(&vec![1.0; m]);
        all.max(par::max(s.samples, |i| f(&random_signs(m, s.seed, i))))
    }
}

fn check_basis(basis: &DMatrix<f64>, space: &NormedSpace) -> Result<DMatrix<f64>> {
    let m = space.dim;
    if basis.nrows() != m || basis.ncols() != m {
        return Err(Error::DegenerateBasis(format!(
            "expected {m}x{m} basis, got {}x{}",
            basis.nrows(),
            basis.ncols()
        )));
    }
    let sv = basis.singular_values();
    if !(sv.min() > RANK_TOL * sv.max()) {
        return Err(Error::DegenerateBasis("basis is rank deficient".into()));
    }
    basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateBasis("basis is not invertible".into()))
}

/// Least `K_u` with `|sum l_i b_i*(x) b_i| <= K_u |l|_inf |x|`, estimated by
/// maximizing the operator norm of `B diag(l) B^-1` over sign vertices.
/// Never below 1.
pub fn unconditional_constant(basis: &DMatrix<f64>, space: &NormedSpace, s: Sampling) -> Result<f64> {
    let inv = check_basis(basis, space)?;
    let m = space.dim;
    let k = over_signs(m, true, s, |l| {
        let mut scaled = basis.clone();
        for (j, lj) in l.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lj);
        }
        op_norm(&(scaled * &inv), space, space, s.samples, s.seed)
    });
    Ok(k.max(1.0))
}

/// Basis, coordinate functionals and complementary projections adapted to a
/// subspace `W`, with measured constants.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedBasis {
    pub dim: usize,
    pub sub_dim: usize,
    /// Columns are the basis vectors `b_i`.
    pub basis: DMatrix<f64>,
    /// Rows are the functionals `b_i*`.
    pub functionals: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub k_p: f64,
    pub k_d: f64,
    pub k_u: f64,
    pub tilde_k: f64,
}

#[derive(Serialize, Deserialize)]
struct AdaptedRepr {
    basis: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    constants: Constants,
    sub_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct Constants {
    k_p: f64,
    k_d: f64,
    k_u: f64,
    tilde_k: f64,
}

pub(crate) fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

impl Serialize for AdaptedBasis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AdaptedRepr {
            // one row per basis vector
            basis: matrix_rows(&self.basis.transpose()),
            p: matrix_rows(&self.p),
            q: matrix_rows(&self.q),
            constants: Constants {
                k_p: self.k_p,
                k_d: self.k_d,
                k_u: self.k_u,
                tilde_k: self.tilde_k,
            },
            sub_dim: self.sub_dim,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AdaptedBasis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = AdaptedRepr::deserialize(d)?;
        let m = r.basis.len();
        if r.basis.iter().chain(&r.p).chain(&r.q).any(|row| row.len() != m) || r.p.len() != m || r.q.len() != m {
            return Err(D::Error::custom("basis, P and Q must be square of equal size"));
        }
        let basis = matrix_from_rows(&r.basis, m).transpose();
        let functionals = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| D::Error::custom("basis is not invertible"))?;
        Ok(AdaptedBasis {
            dim: m,
            sub_dim: r.sub_dim,
            basis,
            functionals,
            p: matrix_from_rows(&r.p, m),
            q: matrix_from_rows(&r.q, m),
            k_p: r.constants.k_p,
            k_d: r.constants.k_d,
            k_u: r.constants.k_u,
            tilde_k: r.constants.tilde_k,
        })
    }
}

impl AdaptedBasis {
    /// `T_i = b_i* o Q` as a row vector.
    pub fn complement_functional(&self, i: usize) -> Vec<f64> {
        (self.functionals.row(i) * &self.q).iter().copied().collect()
    }

    pub fn basis_vector(&self, i: usize) -> Vec<f64> {
        self.basis.column(i).iter().copied().collect()
    }

    /// `P x + sum b_i*(Q x) b_i`, which reproduces `x`.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let coords = &self.functionals * (&self.q * &xv);
        let y = &self.p * &xv + &self.basis * coords;
        y.as_slice().to_vec()
    }
}

/// Orthonormal basis of the column space of `w` (assumed full rank).
fn orthonormal_frame(w: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = w.clone().qr();
    qr.q().columns(0, w.ncols()).into_owned()
}

/// Orthonormal basis of `R^m` whose first columns span `w`.
fn orthonormal_completion(w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = w.nrows();
    let d = w.ncols();
    let mut aug = DMatrix::zeros(m, d + m);
    aug.columns_mut(0, d).copy_from(w);
    aug.columns_mut(d, m).copy_from(&DMatrix::identity(m, m));
    // Householder Q of an m x (d+m) matrix is m x m
    aug.qr().q()
}

/// Builds an [`AdaptedBasis`] for the column span of `w` (an `m x d` frame).
pub fn adapted_basis(space: &NormedSpace, w: &DMatrix<f64>, s: Sampling) -> Result<AdaptedBasis> {
    let m = space.dim;
    let d = w.ncols();
    if d > m {
        return Err(Error::param("d", format!("subspace dimension {d} exceeds {m}")));
    }
    if w.nrows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: w.nrows(),
        });
    }
    if d > 0 {
        let sv = w.singular_values();
        if !(sv.min() > RANK_TOL * sv.max().max(f64::MIN_POSITIVE)) {
            return Err(Error::param("W", "frame is not of full column rank"));
        }
    }
    let (basis, p) = if d == 0 {
        (space.distinguished_basis(), DMatrix::zeros(m, m))
    } else if space.is_euclidean() {
        let b = orthonormal_completion(w);
        let u = b.columns(0, d).into_owned();
        let p = &u * u.transpose();
        (b, p)
    } else if d == m {
        (space.distinguished_basis(), DMatrix::identity(m, m))
    } else {
        (space.distinguished_basis(), minimal_projection(space, w, s))
    };
    let q = DMatrix::identity(m, m) - &p;
    let functionals = check_basis(&basis, space)?;
    let k_p = (0..m)
        .map(|i| space.dual_norm(functionals.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
        .fold(0.0, f64::max);
    let k_d = op_norm(&p, space, space, s.samples, s.seed).max(op_norm(&q, space, space, s.samples, s.seed));
    let mut ab = AdaptedBasis {
        dim: m,
        sub_dim: d,
        basis,
        functionals,
        p,
        q,
        k_p,
        k_d,
        k_u: 1.0,
        tilde_k: 1.0,
    };
    ab.k_u = unconditional_constant(&ab.basis, space, s)?;
    ab.tilde_k = tilde_k_witness(&ab, space, s)?;
    Ok(ab)
}

/// Projection onto span(w) for the distinguished basis: exact by linear
/// programming for `l_1` and `l_inf`, otherwise coordinate descent on the
/// operator norm starting from the orthogonal projection.
fn minimal_projection(space: &NormedSpace, w: &DMatrix<f64>, s: Sampling) -> DMatrix<f64> {
    let m = space.dim;
    let d = w.ncols();
    let full = orthonormal_completion(&orthonormal_frame(w));
    let u = full.columns(0, d).into_owned();
    let n = full.columns(d, m - d).into_owned();
    // P = U (U + N C)^T ranges over all projections onto span(U)
    let proj = |c: &DMatrix<f64>| &u * (&u + &n * c).transpose();
    match space.p() {
        Some(p) if p == 1.0 || p.is_infinite() => {
            if let Some(c) = polyhedral_projection(&u, &n, p.is_infinite()) {
                return proj(&c);
            }
        }
        _ => {}
    }
    let cost = |c: &DMatrix<f64>| op_norm(&proj(c), space, space, s.samples, s.seed);
    let mut c = DMatrix::zeros(m - d, d);
    let mut best = cost(&c);
    let mut step = 0.5;
    let mut rounds = 0;
    while step > 1e-6 && best > 1.0 + 1e-12 && rounds < 10_000 {
        rounds += 1;
        let mut improved = false;
        for idx in 0..c.len() {
            for sgn in [1.0, -1.0] {
                let mut trial = c.clone();
                trial[idx] += sgn * step;
                let v = cost(&trial);
                if v < best - 1e-13 {
                    best = v;
                    c = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    proj(&c)
}

/// Exact minimiser over `C` of the basis constant of `P = U (U + N C)^T`
/// with the standard basis, as a linear program. With `L = diag(l)` the
/// operator `P + L Q = L + (I - L) P` has rows `e_i` (for `l_i = 1`) or
/// `2 P_i - e_i` (for `l_i = -1`), so over sign vertices the `l_inf` constant
/// is the largest `|2 P_i - e_i|_1` and the `l_1` constant is the largest
/// column sum of `max(delta_ij, |2 P_ij - delta_ij|)`.
fn polyhedral_projection(u: &DMatrix<f64>, n: &DMatrix<f64>, rows: bool) -> Option<DMatrix<f64>> {
    let (m, d) = u.shape();
    let k = m - d;
    let base = u * u.transpose();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let c: Vec<_> = (0..k * d).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let t = lp.add_var(1.0, (1.0, f64::INFINITY));
    let mut bounds = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let eye = if i == j { 1.0 } else { 0.0 };
            let lower = if rows { 0.0 } else { eye };
            let sij = lp.add_var(0.0, (lower, f64::INFINITY));
            bounds.push(sij);
            // 2 P_ij - delta_ij = 2 base_ij - delta_ij + 2 sum_{a,b} U_ia C_ba N_jb
            let terms: Vec<(usize, f64)> = (0..d)
                .flat_map(|a| (0..k).map(move |b| (b * d + a, 2.0 * u[(i, a)] * n[(j, b)])))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let offset = 2.0 * base[(i, j)] - eye;
            let mut up: Vec<_> = terms.iter().map(|&(v, w)| (c[v], w)).collect();
            up.push((sij, -1.0));
            lp.add_constraint(up.as_slice(), ComparisonOp::Le, -offset);
            let mut down: Vec<_> = terms.iter().map(|&(v, w)| (c[v], -w)).collect();
            down.push((sij, -1.0));
            lp.add_constraint(down.as_slice(), ComparisonOp::Le, offset);
        }
    }
    for a in 0..m {
        let mut sum: Vec<_> = (0..m)
            .map(|b| if rows { bounds[a * m + b] } else { bounds[b * m + a] })
            .map(|v| (v, 1.0))
            .collect();
        sum.push((t, -1.0));
        lp.add_constraint(sum.as_slice(), ComparisonOp::Le, 0.0);
    }
    let sol = lp.solve().ok()?;
    Some(DMatrix::from_fn(k, d, |b, a| sol[c[b * d + a]]))
}

/// Least `K` with `|P x + sum l_i b_i*(Q x) b_i| <= K |l|_inf |x|`, estimated
/// over sign vertices `l` (exact sign enumeration for `m <= 12`). Never below 1.
pub fn tilde_k_witness(basis: &AdaptedBasis, space: &NormedSpace, s: Sampling) -> Result<f64> {
    let inv = check_basis(&basis.basis, space)?;
    let m = space.dim;
    let tail = &inv * &basis.q;
    let k = over_signs(m, basis.sub_dim == 0, s, |l| {
        let mut scaled = basis.basis.clone();
        for (j, lj) in l.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lj);
        }
        let op = &basis.p + scaled * &tail;
        op_norm(&op, space, space, s.samples, s.seed)
    });
    Ok(k.max(1.0))
}
