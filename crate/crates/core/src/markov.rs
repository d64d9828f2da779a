//! Homogeneous Markov processes given by intensity matrices: transient
//! behaviour, the embedded-chain decomposition, subsystems, and the phase
//! and exit distributions of a subsystem.

use crate::error::{Error, Result};
use crate::indexer::StateIndexer;
use crate::linalg::{self, Matrix, ProbVector};

/// Row-sum tolerance for intensity matrices.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Above this condition number a subsystem solve is logged as ill-conditioned.
const CONDITION_WARN: f64 = 1e12;

/// Generator of a continuous-time Markov chain over the states of an indexer.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix {
    indexer: StateIndexer,
    entries: Matrix,
}

impl IntensityMatrix {
    /// Validates `entries` as an intensity matrix over `indexer`'s states.
    pub fn new(indexer: StateIndexer, entries: Matrix) -> Result<Self> {
        validate_intensity(&entries, &indexer)?;
        Ok(Self { indexer, entries })
    }

    pub fn from_rows<R: AsRef<[f64]>>(indexer: StateIndexer, rows: &[R]) -> Result<Self> {
        Self::new(indexer, linalg::from_rows(rows)?)
    }

    /// Builds from off-diagonal rates, setting each diagonal to the negated row sum.
    pub fn with_repaired_diagonal(indexer: StateIndexer, mut entries: Matrix) -> Result<Self> {
        let n = entries.nrows();
        for i in 0..n {
            entries[(i, i)] = 0.0;
            let s: f64 = entries.row(i).sum();
            entries[(i, i)] = -s;
        }
        Self::new(indexer, entries)
    }

    pub fn zero(indexer: StateIndexer) -> Self {
        let n = indexer.size();
        Self { indexer, entries: Matrix::zeros(n, n) }
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.entries[(from, to)]
    }

    /// Total intensity of leaving `state`.
    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.entries[(state, state)]
    }

    /// `exp(Q t)` with clamped, renormalized rows.
    pub fn transition_matrix(&self, t: f64) -> Result<Matrix> {
        linalg::stochastic_kernel(&self.entries, t)
    }

    pub fn stationary_distribution(&self) -> Result<ProbVector> {
        linalg::stationary_distribution(&self.entries)
    }

    /// Same matrix with every intensity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.indexer.clone(), &self.entries * factor)
    }
}

/// Checks signs and row sums of a candidate intensity matrix.
pub fn validate_intensity(entries: &Matrix, indexer: &StateIndexer) -> Result<()> {
    let n = entries.nrows();
    if n != entries.ncols() {
        return Err(Error::NotSquare { rows: n, cols: entries.ncols() });
    }
    if n != indexer.size() {
        return Err(Error::DimensionMismatch { what: "intensity matrix", expected: indexer.size(), found: n });
    }
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let q = entries[(i, j)];
            if !q.is_finite() {
                return Err(Error::NonFinite("intensity matrix"));
            }
            if i != j && q < 0.0 {
                return Err(Error::NegativeOffDiagonal { row: i, col: j, value: q });
            }
            if i == j && q > 0.0 {
                return Err(Error::PositiveDiagonal { row: i, value: q });
            }
            sum += q;
        }
        if sum.abs() > ROW_SUM_TOL {
            return Err(Error::RowSum { row: i, sum });
        }
    }
    Ok(())
}

/// `p0 exp(Q t)`.
pub fn transient_distribution(p0: &ProbVector, q: &IntensityMatrix, t: f64) -> Result<ProbVector> {
    if p0.len() != q.size() {
        return Err(Error::DimensionMismatch { what: "initial distribution", expected: q.size(), found: p0.len() });
    }
    p0.propagate(&q.transition_matrix(t)?)
}

/// Joint distribution of `(X(s), X(t))` for `s < t`; entry `(i, j)` is
/// `P(X(s) = i, X(t) = j)`.
pub fn joint_two_time(p0: &ProbVector, q: &IntensityMatrix, s: f64, t: f64) -> Result<Matrix> {
    if !(s >= 0.0 && s < t) {
        return Err(Error::InvalidTime(format!("need 0 <= s < t, got s={s}, t={t}")));
    }
    let ps = transient_distribution(p0, q, s)?;
    let k = q.transition_matrix(t - s)?;
    let mut joint = k;
    for (i, mut row) in joint.row_iter_mut().enumerate() {
        row *= ps[i];
    }
    Ok(joint)
}

/// `Q = M (P_E - I)`: holding rates on the diagonal of `holding`, jump
/// probabilities of the embedded chain in `jumps`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDecomposition {
    pub holding: Matrix,
    pub jumps: Matrix,
}

impl EmbeddedDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.jumps.nrows();
        &self.holding * (&self.jumps - Matrix::identity(n, n))
    }
}

pub fn embedded_decomposition(q: &IntensityMatrix) -> Result<EmbeddedDecomposition> {
    let n = q.size();
    let mut holding = Matrix::zeros(n, n);
    let mut jumps = Matrix::zeros(n, n);
    for i in 0..n {
        let qi = q.exit_rate(i);
        if qi <= 0.0 {
            return Err(Error::AbsorbingState { state: i });
        }
        holding[(i, i)] = qi;
        for j in 0..n {
            if j != i {
                jumps[(i, j)] = q.rate(i, j) / qi;
            }
        }
    }
    Ok(EmbeddedDecomposition { holding, jumps })
}

/// Restriction of an intensity matrix to a subset of its states. Rows may leak.
#[derive(Debug, Clone, PartialEq)]
pub struct SubIntensityMatrix {
    parent: StateIndexer,
    retained: Vec<usize>,
    entries: Matrix,
}

impl SubIntensityMatrix {
    /// Builds directly from entries; `retained` names the parent states they cover.
    pub fn new(parent: StateIndexer, retained: Vec<usize>, entries: Matrix) -> Result<Self> {
        let n = retained.len();
        if n == 0 {
            return Err(Error::EmptySubset);
        }
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch { what: "sub-intensity matrix", expected: n, found: entries.nrows() });
        }
        for &r in &retained {
            if r >= parent.size() {
                return Err(Error::StateOutOfRange { index: r, size: parent.size() });
            }
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let u = entries[(i, j)];
                if !u.is_finite() {
                    return Err(Error::NonFinite("sub-intensity matrix"));
                }
                if i != j && u < 0.0 {
                    return Err(Error::NegativeOffDiagonal { row: i, col: j, value: u });
                }
                if i == j && u > 0.0 {
                    return Err(Error::PositiveDiagonal { row: i, value: u });
                }
                sum += u;
            }
            if sum > ROW_SUM_TOL {
                return Err(Error::SubsystemRowSum { row: i, sum });
            }
        }
        Ok(Self { parent, retained, entries })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn parent(&self) -> &StateIndexer {
        &self.parent
    }

    pub fn size(&self) -> usize {
        self.retained.len()
    }

    /// `-U`, checked for nonsingularity.
    fn negated_checked(&self) -> Result<Matrix> {
        let neg = -&self.entries;
        let cond = linalg::condition_number(&neg);
        if !cond.is_finite() {
            return Err(Error::ClosedSubsystem);
        }
        if cond > CONDITION_WARN {
            log::warn!("subsystem solve is ill-conditioned (condition number {cond:.3e})");
        }
        Ok(neg)
    }

    /// Expected occupation time in each retained state before leaving,
    /// starting from `entrance`: `entrance (-U)^{-1}`.
    pub fn occupation_times(&self, entrance: &ProbVector) -> Result<Vec<f64>> {
        self.check_entrance(entrance)?;
        let neg = self.negated_checked()?;
        linalg::solve_left(&neg, entrance.as_slice()).map_err(|e| match e {
            Error::Singular => Error::ClosedSubsystem,
            other => other,
        })
    }

    fn check_entrance(&self, entrance: &ProbVector) -> Result<()> {
        if entrance.len() != self.size() {
            return Err(Error::DimensionMismatch {
                what: "entrance distribution",
                expected: self.size(),
                found: entrance.len(),
            });
        }
        Ok(())
    }
}

/// The subsystem over `retained` states, in the given order.
pub fn extract_subsystem(q: &IntensityMatrix, retained: &[usize]) -> Result<SubIntensityMatrix> {
    if retained.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = q.size();
    for &r in retained {
        if r >= n {
            return Err(Error::StateOutOfRange { index: r, size: n });
        }
    }
    let m = retained.len();
    let entries = Matrix::from_fn(m, m, |i, j| q.rate(retained[i], retained[j]));
    SubIntensityMatrix::new(q.indexer().clone(), retained.to_vec(), entries)
}

/// Phase distribution `F(t) = 1 - P0 exp(U t) e`: probability of having left
/// the subsystem by time `t`.
pub fn phase_cdf(entrance: &ProbVector, u: &SubIntensityMatrix, t: f64) -> Result<f64> {
    u.check_entrance(entrance)?;
    let e = linalg::matrix_exp(u.entries(), t)?;
    let survival: f64 = e.tr_mul(&entrance.to_dvector()).iter().sum();
    Ok((1.0 - survival).clamp(0.0, 1.0))
}

/// Mean sojourn in the subsystem: `P0 (-U)^{-1} e`.
pub fn expected_holding_time(entrance: &ProbVector, u: &SubIntensityMatrix) -> Result<f64> {
    let occ = u.occupation_times(entrance)?;
    Ok(occ.iter().sum())
}

fn complement_of(n: usize, retained: &[usize]) -> Vec<usize> {
    let mut keep = vec![false; n];
    for &r in retained {
        keep[r] = true;
    }
    (0..n).filter(|&i| !keep[i]).collect()
}

/// Distribution of the first state outside `retained` reached from
/// `entrance`, as absorption probabilities `P0 (-U)^{-1} R`. The result is
/// indexed by the complement states in increasing order.
pub fn exit_distribution(entrance: &ProbVector, q: &IntensityMatrix, retained: &[usize]) -> Result<ProbVector> {
    let u = extract_subsystem(q, retained)?;
    let complement = complement_of(q.size(), retained);
    if complement.is_empty() {
        return Err(Error::ClosedSubsystem);
    }
    let occ = u.occupation_times(entrance)?;
    let mut exit = vec![0.0; complement.len()];
    for (i, &r) in retained.iter().enumerate() {
        for (k, &c) in complement.iter().enumerate() {
            exit[k] += occ[i] * q.rate(r, c);
        }
    }
    ProbVector::from_weights(exit).map_err(|_| Error::ClosedSubsystem)
}
