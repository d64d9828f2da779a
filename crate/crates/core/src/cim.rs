//! Conditional intensity matrices and their amalgamation product.

use crate::error::{Error, Result};
use crate::indexer::{StateIndexer, VarId};
use crate::linalg::Matrix;
use crate::markov::IntensityMatrix;

/// A family of intensity matrices over the subject variables, one per
/// instantiation of the conditioning variables (indexed canonically).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalIntensityMatrix {
    subject: StateIndexer,
    conditioning: StateIndexer,
    components: Vec<IntensityMatrix>,
}

impl ConditionalIntensityMatrix {
    pub fn new(subject: StateIndexer, conditioning: StateIndexer, components: Vec<Matrix>) -> Result<Self> {
        if let Some(&v) = subject.vars().iter().find(|&&v| conditioning.contains(v)) {
            return Err(Error::InvalidNetwork(format!(
                "variable {v} is both subject and conditioning variable"
            )));
        }
        if components.len() != conditioning.size() {
            return Err(Error::DimensionMismatch {
                what: "CIM component count",
                expected: conditioning.size(),
                found: components.len(),
            });
        }
        let components = components
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                IntensityMatrix::new(subject.clone(), m)
                    .map_err(|e| e.context(format!("component {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { subject, conditioning, components })
    }

    /// Builds from components listed in the mixed-radix order of `parents`
    /// (an arbitrary order), re-keying them to the canonical conditioning order.
    pub fn from_parent_order(
        subject: StateIndexer,
        parents: Vec<(VarId, usize)>,
        components: Vec<Matrix>,
    ) -> Result<Self> {
        let given = StateIndexer::new(parents.clone())?;
        let canonical = StateIndexer::sorted(parents)?;
        if components.len() != given.size() {
            return Err(Error::DimensionMismatch {
                what: "CIM component count",
                expected: given.size(),
                found: components.len(),
            });
        }
        let proj = canonical.projection(&given)?;
        let mut slots: Vec<Option<Matrix>> = components.into_iter().map(Some).collect();
        let reordered = proj
            .iter()
            .map(|&g| slots[g].take().expect("projection between equal scopes is a bijection"))
            .collect();
        Self::new(subject, canonical, reordered)
    }

    /// A CIM with no conditioning variables.
    pub fn unconditional(q: IntensityMatrix) -> Self {
        let subject = q.indexer().clone();
        Self { subject, conditioning: StateIndexer::empty(), components: vec![q] }
    }

    /// The CIM over no variables at all: the identity of amalgamation.
    pub fn trivial() -> Self {
        Self::unconditional(IntensityMatrix::zero(StateIndexer::empty()))
    }

    pub(crate) fn from_validated(
        subject: StateIndexer,
        conditioning: StateIndexer,
        components: Vec<IntensityMatrix>,
    ) -> Self {
        debug_assert_eq!(components.len(), conditioning.size());
        Self { subject, conditioning, components }
    }

    pub fn subject(&self) -> &StateIndexer {
        &self.subject
    }

    pub fn conditioning(&self) -> &StateIndexer {
        &self.conditioning
    }

    pub fn components(&self) -> &[IntensityMatrix] {
        &self.components
    }

    pub fn component(&self, context: usize) -> &IntensityMatrix {
        &self.components[context]
    }

    /// The intensity matrix for one instantiation of the conditioning
    /// variables, given in canonical conditioning order.
    pub fn condition(&self, instantiation: &[usize]) -> Result<&IntensityMatrix> {
        let k = self.conditioning.index(instantiation)?;
        Ok(&self.components[k])
    }

    /// `Q(s_i -> s_j | c_k)`.
    pub fn rate(&self, from: usize, to: usize, context: usize) -> f64 {
        self.components[context].rate(from, to)
    }
}

/// Amalgamation product of two CIMs with disjoint subjects.
///
/// The result is over `S1 ∪ S2` given `(C1 ∪ C2) − (S1 ∪ S2)`, both in
/// canonical (sorted) order. Intensities that change exactly one variable are
/// read from the factor owning that variable, with that factor's context
/// projected from the joint instantiation; all other off-diagonal intensities
/// are zero and diagonals are the negated row sums.
pub fn amalgamate(
    a: &ConditionalIntensityMatrix,
    b: &ConditionalIntensityMatrix,
) -> Result<ConditionalIntensityMatrix> {
    if let Some(&v) = a.subject.vars().iter().find(|&&v| b.subject.contains(v)) {
        return Err(Error::OverlappingSubjects { var: v.0 });
    }
    let subject = a.subject.union(&b.subject)?;
    let all_cond = a.conditioning.union(&b.conditioning)?;
    // every shared variable must agree on its domain size
    subject.union(&all_cond)?;
    let conditioning = all_cond.difference(&subject);

    let factors = [FactorMap::new(a, &subject, &conditioning)?, FactorMap::new(b, &subject, &conditioning)?];
    let mut owner = vec![(0usize, 0usize); subject.len()];
    for (fi, f) in factors.iter().enumerate() {
        for (k, &p) in f.subj_pos.iter().enumerate() {
            owner[p] = (fi, k);
        }
    }

    let n = subject.size();
    let mut components = Vec::with_capacity(conditioning.size());
    for c in 0..conditioning.size() {
        let mut m = Matrix::zeros(n, n);
        for s in 0..n {
            let local = [
                (factors[0].local_subject(s, &subject), factors[0].context(s, c, &subject, &conditioning)),
                (factors[1].local_subject(s, &subject), factors[1].context(s, c, &subject, &conditioning)),
            ];
            for p in 0..subject.len() {
                let (fi, k) = owner[p];
                let f = &factors[fi];
                let (ls, lc) = local[fi];
                let current = subject.value_at(s, p);
                for v in (0..subject.cards()[p]).filter(|&v| v != current) {
                    let target = subject.with_value(s, p, v);
                    let local_target = f.cim.subject.with_value(ls, k, v);
                    m[(s, target)] = f.cim.rate(ls, local_target, lc);
                }
            }
        }
        components.push(IntensityMatrix::with_repaired_diagonal(subject.clone(), m)?);
    }
    Ok(ConditionalIntensityMatrix { subject, conditioning, components })
}

/// Left fold of [`amalgamate`]; the empty product is the trivial CIM.
pub fn amalgamate_all<'c, I>(cims: I) -> Result<ConditionalIntensityMatrix>
where
    I: IntoIterator<Item = &'c ConditionalIntensityMatrix>,
{
    let mut acc: Option<ConditionalIntensityMatrix> = None;
    for cim in cims {
        acc = Some(match acc {
            None => cim.clone(),
            Some(prev) => amalgamate(&prev, cim)?,
        });
    }
    Ok(acc.unwrap_or_else(ConditionalIntensityMatrix::trivial))
}

/// Where a factor's variables sit inside the joint subject/conditioning scopes.
struct FactorMap<'f> {
    cim: &'f ConditionalIntensityMatrix,
    subj_pos: Vec<usize>,
    // (variable is in the joint subject, its position there or in the joint conditioning)
    ctx_src: Vec<(bool, usize)>,
}

impl<'f> FactorMap<'f> {
    fn new(cim: &'f ConditionalIntensityMatrix, subject: &StateIndexer, conditioning: &StateIndexer) -> Result<Self> {
        let subj_pos = subject.positions_of(&cim.subject)?;
        let ctx_src = cim
            .conditioning
            .vars()
            .iter()
            .map(|&v| match subject.position(v) {
                Some(p) => (true, p),
                None => (false, conditioning.position(v).expect("context var is in S or C")),
            })
            .collect();
        Ok(Self { cim, subj_pos, ctx_src })
    }

    fn local_subject(&self, s: usize, subject: &StateIndexer) -> usize {
        self.subj_pos
            .iter()
            .zip(self.cim.subject.strides())
            .map(|(&p, &stride)| subject.value_at(s, p) * stride)
            .sum()
    }

    fn context(&self, s: usize, c: usize, subject: &StateIndexer, conditioning: &StateIndexer) -> usize {
        self.ctx_src
            .iter()
            .zip(self.cim.conditioning.strides())
            .map(|(&(in_subject, p), &stride)| {
                let value = if in_subject { subject.value_at(s, p) } else { conditioning.value_at(c, p) };
                value * stride
            })
            .sum()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::{from_rows, rows_of};

    pub(crate) const Z: VarId = VarId(0);
    pub(crate) const W: VarId = VarId(1);
    pub(crate) const Y: VarId = VarId(1);

    fn m(rows: &[[f64; 2]]) -> Matrix {
        from_rows(rows).unwrap()
    }

    fn bin(v: VarId) -> StateIndexer {
        StateIndexer::single(v, 2).unwrap()
    }

    pub(crate) fn q_w_given_z() -> ConditionalIntensityMatrix {
        ConditionalIntensityMatrix::new(
            bin(W),
            bin(Z),
            vec![m(&[[-1.0, 1.0], [2.0, -2.0]]), m(&[[-3.0, 3.0], [4.0, -4.0]])],
        )
        .unwrap()
    }

    pub(crate) fn q_z_given_w() -> ConditionalIntensityMatrix {
        ConditionalIntensityMatrix::new(
            bin(Z),
            bin(W),
            vec![m(&[[-5.0, 5.0], [6.0, -6.0]]), m(&[[-7.0, 7.0], [8.0, -8.0]])],
        )
        .unwrap()
    }

    pub(crate) fn q_y(scale: f64) -> ConditionalIntensityMatrix {
        ConditionalIntensityMatrix::unconditional(
            IntensityMatrix::new(bin(Y), m(&[[-1.0, 1.0], [2.0, -2.0]]) * scale).unwrap(),
        )
    }

    pub(crate) fn q_z_given_y() -> ConditionalIntensityMatrix {
        ConditionalIntensityMatrix::new(
            bin(Z),
            bin(Y),
            vec![m(&[[-3.0, 3.0], [15.0, -15.0]]), m(&[[-5.0, 5.0], [4.0, -4.0]])],
        )
        .unwrap()
    }

    /// The amalgamated Y, Z system under ordering [Z, Y].
    pub(crate) fn q_yz() -> IntensityMatrix {
        amalgamate(&q_y(1.0), &q_z_given_y()).unwrap().components()[0].clone()
    }

    #[test]
    fn condition_selects_component() {
        let e = VarId(0);
        let h = VarId(1);
        let q = ConditionalIntensityMatrix::new(
            bin(e),
            bin(h),
            vec![m(&[[-0.01, 0.01], [10.0, -10.0]]), m(&[[-2.0, 2.0], [0.01, -0.01]])],
        )
        .unwrap();
        assert_eq!(rows_of(q.condition(&[0]).unwrap().entries()), vec![vec![-0.01, 0.01], vec![10.0, -10.0]]);
        assert_eq!(rows_of(q.condition(&[1]).unwrap().entries()), vec![vec![-2.0, 2.0], vec![0.01, -0.01]]);
        assert!(q.condition(&[2]).is_err());
        assert!(q.condition(&[]).is_err());
        let u = q_y(1.0);
        assert_eq!(u.condition(&[]).unwrap(), &u.components()[0]);
    }

    #[test]
    fn amalgamation_of_two_cycle() {
        let q = amalgamate(&q_w_given_z(), &q_z_given_w()).unwrap();
        assert_eq!(q.subject().vars(), &[Z, W]);
        assert!(q.conditioning().is_empty());
        let expected = vec![
            vec![-6.0, 1.0, 5.0, 0.0],
            vec![2.0, -9.0, 0.0, 7.0],
            vec![6.0, 0.0, -9.0, 3.0],
            vec![0.0, 8.0, 4.0, -12.0],
        ];
        assert_eq!(rows_of(q.components()[0].entries()), expected);
    }

    #[test]
    fn amalgamation_of_chain() {
        let expected = vec![
            vec![-4.0, 1.0, 3.0, 0.0],
            vec![2.0, -7.0, 0.0, 5.0],
            vec![15.0, 0.0, -16.0, 1.0],
            vec![0.0, 4.0, 2.0, -6.0],
        ];
        assert_eq!(rows_of(q_yz().entries()), expected);
    }

    #[test]
    fn amalgamation_with_one_value_variable() {
        let dummy = ConditionalIntensityMatrix::unconditional(
            IntensityMatrix::new(StateIndexer::single(VarId(7), 1).unwrap(), Matrix::zeros(1, 1)).unwrap(),
        );
        let q = amalgamate(&q_y(1.0), &dummy).unwrap();
        assert_eq!(q.subject().vars(), &[Y, VarId(7)]);
        assert_eq!(q.components()[0].entries(), q_y(1.0).components()[0].entries());
    }

    #[test]
    fn amalgamation_keeps_outside_context() {
        // W|Z amalgamated with a CIM over an unrelated variable stays conditioned on Z
        let other = ConditionalIntensityMatrix::unconditional(
            IntensityMatrix::new(bin(VarId(5)), m(&[[-1.0, 1.0], [1.0, -1.0]])).unwrap(),
        );
        let q = amalgamate(&q_w_given_z(), &other).unwrap();
        assert_eq!(q.conditioning().vars(), &[Z]);
        assert_eq!(q.components().len(), 2);
        // (w1, x1) -> (w2, x1) under z2 comes from Q_{W|z2}
        assert_eq!(q.components()[1].rate(0, 2), 3.0);
    }

    #[test]
    fn amalgamation_rejects_overlap_and_domain_conflicts() {
        assert!(matches!(
            amalgamate(&q_w_given_z(), &q_w_given_z()),
            Err(Error::OverlappingSubjects { var: 1 })
        ));
        let ternary_z = ConditionalIntensityMatrix::unconditional(
            IntensityMatrix::new(
                StateIndexer::single(Z, 3).unwrap(),
                from_rows(&[[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]]).unwrap(),
            )
            .unwrap(),
        );
        assert!(matches!(amalgamate(&q_w_given_z(), &ternary_z), Err(Error::DomainMismatch { .. })));
    }

    #[test]
    fn amalgamation_commutes() {
        let ab = amalgamate(&q_w_given_z(), &q_z_given_w()).unwrap();
        let ba = amalgamate(&q_z_given_w(), &q_w_given_z()).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn parent_order_is_canonicalized() {
        // parents listed as [B, A] (B most significant); canonical order is [A, B]
        let a = VarId(1);
        let b = VarId(2);
        let subj = bin(VarId(3));
        let comps: Vec<Matrix> = (0..4).map(|k| m(&[[-(k as f64 + 1.0), k as f64 + 1.0], [1.0, -1.0]])).collect();
        let q = ConditionalIntensityMatrix::from_parent_order(subj, vec![(b, 2), (a, 2)], comps).unwrap();
        assert_eq!(q.conditioning().vars(), &[a, b]);
        // canonical (a=1, b=0) is given-order (b=0, a=1) = index 1 -> rate 2
        assert_eq!(q.condition(&[1, 0]).unwrap().rate(0, 1), 2.0);
        assert_eq!(q.condition(&[0, 1]).unwrap().rate(0, 1), 3.0);
    }
}
