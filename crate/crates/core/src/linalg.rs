//! Dense matrix kernels: matrix exponential, linear solves, stationary
//! distributions, and the probability-vector type shared across the crate.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Tolerance for probability vectors summing to one.
pub const PROB_TOL: f64 = 1e-9;
/// Computed transition probabilities below zero by at most this much are clamped.
pub const CLAMP_TOL: f64 = 1e-12;

/// Builds a matrix from row slices.
pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Matrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::EmptyMatrix);
    }
    let ncols = rows[0].as_ref().len();
    if ncols == 0 {
        return Err(Error::EmptyMatrix);
    }
    for r in rows {
        if r.as_ref().len() != ncols {
            return Err(Error::DimensionMismatch {
                what: "matrix row",
                expected: ncols,
                found: r.as_ref().len(),
            });
        }
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flat_map(|r| r.as_ref().iter().copied()),
    ))
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_square(a: &Matrix) -> Result<usize> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

fn check_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A discrete distribution: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        if let Some((i, &p)) = entries.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidProbability(format!("entry {i} is {p}")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self(entries))
    }

    /// Normalizes nonnegative weights. Negatives within [`CLAMP_TOL`] are clamped.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidProbability(format!("weight {i} is {w}")));
            }
            if *w < 0.0 {
                if *w < -CLAMP_TOL {
                    return Err(Error::InvalidProbability(format!("weight {i} is {w}")));
                }
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidProbability("weights have zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::StateOutOfRange { index: at, size: n });
        }
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    /// Row vector times matrix, renormalized.
    pub fn propagate(&self, kernel: &Matrix) -> Result<ProbVector> {
        if kernel.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "distribution and kernel",
                expected: kernel.nrows(),
                found: self.len(),
            });
        }
        let out = kernel.tr_mul(&self.to_dvector());
        ProbVector::from_weights(out.iter().copied().collect())
    }

    /// Total variation distance.
    pub fn total_variation(&self, other: &ProbVector) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

// Padé coefficients b_0..b_m for degrees 3, 5, 7, 9 and 13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norms for which each degree meets double-precision backward error.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &Matrix) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(A t)` by scaling and squaring around a diagonal Padé approximant.
pub fn matrix_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = check_square(a)?;
    check_finite(a, "matrix exponential input")?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidTime(format!("duration {t} must be finite and nonnegative")));
    }
    if t == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    let at = a * t;
    let norm = norm1(&at);
    if norm == 0.0 {
        return Ok(Matrix::identity(n, n));
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(&at, coeffs);
        }
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = at * 2f64.powi(-s);
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = &r * &r;
    }
    check_finite(&r, "matrix exponential result")?;
    Ok(r)
}

fn pade_low(a: &Matrix, b: &[f64]) -> Result<Matrix> {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    // powers of A^2: I, A^2, A^4, ...
    let mut pows = vec![ident.clone(), a2.clone()];
    let half = (b.len() - 1) / 2;
    while pows.len() <= half {
        let next = pows.last().unwrap() * &a2;
        pows.push(next);
    }
    let mut u_inner = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    for (k, p) in pows.iter().enumerate().take(half + 1) {
        u_inner += p * b[2 * k + 1];
        v += p * b[2 * k];
    }
    let u = a * u_inner;
    pade_solve(&u, &v)
}

fn pade13(a: &Matrix) -> Result<Matrix> {
    let b = &PADE13;
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let w1 = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let w2 = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = a * (&a6 * w1 + w2);
    let z1 = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let z2 = &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let v = &a6 * z1 + z2;
    pade_solve(&u, &v)
}

fn pade_solve(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::Singular)
}

/// Transition kernel `exp(Q t)` for a generator: tiny negatives clamped and rows renormalized.
pub fn stochastic_kernel(q: &Matrix, t: f64) -> Result<Matrix> {
    let mut k = matrix_exp(q, t)?;
    for mut row in k.row_iter_mut() {
        for x in row.iter_mut() {
            if *x < 0.0 {
                if *x < -CLAMP_TOL {
                    log::debug!("clamping transition probability {x}");
                }
                *x = 0.0;
            }
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row /= s;
        }
    }
    Ok(k)
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = check_square(a)?;
    if b.len() != n {
        return Err(Error::DimensionMismatch { what: "right-hand side", expected: n, found: b.len() });
    }
    check_finite(a, "linear system")?;
    let lu = a.clone().lu();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if scale == 0.0 || min_pivot <= f64::EPSILON * scale * n as f64 {
        return Err(Error::Singular);
    }
    let x = lu.solve(&DVector::from_column_slice(b)).ok_or(Error::Singular)?;
    Ok(x.iter().copied().collect())
}

/// Solves `x A = b` (row-vector form).
pub fn solve_left(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    solve_linear(&a.transpose(), b)
}

/// 1-norm condition number estimate via the explicit inverse.
pub fn condition_number(a: &Matrix) -> f64 {
    match a.clone().try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

/// Number of closed communicating classes of the chain with generator `q`.
pub fn closed_class_count(q: &Matrix) -> usize {
    let n = q.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && q[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for m in members {
            comp[m.index()] = c;
        }
    }
    let mut leaves = vec![true; sccs.len()];
    for i in 0..n {
        for j in 0..n {
            if i != j && q[(i, j)] > 0.0 && comp[i] != comp[j] {
                leaves[comp[i]] = false;
            }
        }
    }
    leaves.iter().filter(|&&b| b).count()
}

/// Stationary distribution `pi Q = 0`, `sum pi = 1`, by a direct solve with the
/// last balance equation replaced by normalization.
pub fn stationary_distribution(q: &Matrix) -> Result<ProbVector> {
    let n = check_square(q)?;
    check_finite(q, "intensity matrix")?;
    let closed = closed_class_count(q);
    if closed > 1 {
        return Err(Error::Reducible { closed_classes: closed });
    }
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let pi = solve_linear(&a, &b)?;
    ProbVector::from_weights(pi.into_iter().map(|p| if p < 0.0 && p > -1e-10 { 0.0 } else { p }).collect())
}
