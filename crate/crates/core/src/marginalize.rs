//! Approximate elimination of subject variables from a CIM.
//!
//! Both methods need, for every retained state `s'` and conditioning context
//! `c`, a distribution over the eliminated variables `P0(y | s', c)`. It is
//! derived by exact conditioning from a reference distribution over the
//! CIM's subject states.

use serde::{Deserialize, Serialize};

use crate::cim::ConditionalIntensityMatrix;
use crate::error::{Error, Result};
use crate::indexer::{StateIndexer, VarId};
use crate::linalg::{Matrix, ProbVector};
use crate::markov::{IntensityMatrix, SubIntensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalizationMethod {
    /// Eliminated variables frozen at their reference values, first-order expansion.
    Linear,
    /// Each retained state becomes a collapsed subsystem preserving the mean
    /// holding time and the exit distribution.
    Subsystem,
}

impl std::str::FromStr for MarginalizationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "subsystem" => Ok(Self::Subsystem),
            other => Err(Error::InvalidConfig(format!("unknown marginalization method '{other}'"))),
        }
    }
}

impl std::fmt::Display for MarginalizationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Subsystem => "subsystem",
        })
    }
}

/// Reference distribution over the subject states of the CIM being reduced.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceDistribution {
    /// One distribution used for every conditioning context.
    Shared(ProbVector),
    /// One distribution per conditioning context, in canonical context order.
    PerContext(Vec<ProbVector>),
}

impl ReferenceDistribution {
    fn for_context(&self, c: usize) -> &ProbVector {
        match self {
            Self::Shared(p) => p,
            Self::PerContext(ps) => &ps[c],
        }
    }

    fn check(&self, cim: &ConditionalIntensityMatrix) -> Result<()> {
        let n = cim.subject().size();
        let dists: Vec<&ProbVector> = match self {
            Self::Shared(p) => vec![p],
            Self::PerContext(ps) => {
                if ps.len() != cim.conditioning().size() {
                    return Err(Error::DimensionMismatch {
                        what: "per-context reference distributions",
                        expected: cim.conditioning().size(),
                        found: ps.len(),
                    });
                }
                ps.iter().collect()
            }
        };
        for p in dists {
            if p.len() != n {
                return Err(Error::DimensionMismatch { what: "reference distribution", expected: n, found: p.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalizationConfig {
    pub method: MarginalizationMethod,
    pub reference: ReferenceDistribution,
    /// Use a uniform conditional where the reference has zero mass instead of failing.
    pub uniform_fallback: bool,
}

/// Reduces `cim` by eliminating `eliminate` with the configured method.
pub fn marginalize_cim(
    cim: &ConditionalIntensityMatrix,
    eliminate: &[VarId],
    config: &MarginalizationConfig,
) -> Result<ConditionalIntensityMatrix> {
    match config.method {
        MarginalizationMethod::Linear => marg_linear(cim, eliminate, &config.reference, config.uniform_fallback),
        MarginalizationMethod::Subsystem => {
            marg_subsystem(cim, eliminate, &config.reference, config.uniform_fallback)
        }
    }
}

/// Split of a subject scope into kept (`S'`) and eliminated (`Y`) variables.
struct Split {
    kept: StateIndexer,
    // full[s'][y] = index of s' ⊕ y in the subject scope
    full: Vec<Vec<usize>>,
}

impl Split {
    fn new(subject: &StateIndexer, eliminate: &[VarId]) -> Result<Self> {
        for &v in eliminate {
            if !subject.contains(v) {
                return Err(Error::NotInSubject { var: v.0 });
            }
        }
        let elim = subject.restrict(eliminate)?;
        let kept = subject.difference(&elim);
        let to_kept = subject.projection(&kept)?;
        let to_elim = subject.projection(&elim)?;
        let mut full = vec![vec![0; elim.size()]; kept.size()];
        for s in 0..subject.size() {
            full[to_kept[s]][to_elim[s]] = s;
        }
        Ok(Self { kept, full })
    }

    /// `P0(y | s')` from the reference distribution for one context.
    fn conditional(&self, p: &ProbVector, kept_state: usize, uniform_fallback: bool) -> Result<Vec<f64>> {
        let weights: Vec<f64> = self.full[kept_state].iter().map(|&s| p[s]).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            Ok(weights.into_iter().map(|w| w / total).collect())
        } else if uniform_fallback {
            let n = weights.len();
            Ok(vec![1.0 / n as f64; n])
        } else {
            let a = self.kept.assignment(kept_state);
            let desc: Vec<String> =
                self.kept.vars().iter().zip(&a).map(|(v, x)| format!("{v}={x}")).collect();
            Err(Error::ZeroMassConditioning { state: format!("({})", desc.join(", ")) })
        }
    }
}

/// Eliminating every subject variable leaves a single state that never moves.
fn without_subject(cim: &ConditionalIntensityMatrix) -> ConditionalIntensityMatrix {
    let kept = StateIndexer::empty();
    let components = (0..cim.conditioning().size())
        .map(|_| IntensityMatrix::zero(kept.clone()))
        .collect();
    ConditionalIntensityMatrix::from_validated(kept, cim.conditioning().clone(), components)
}

/// Linear approximation of the marginal:
/// `Q'(s1' -> s2' | c) = Σ_y Q(s1'⊕y -> s2'⊕y | c) P0(y | s1', c)`.
pub fn marg_linear(
    cim: &ConditionalIntensityMatrix,
    eliminate: &[VarId],
    reference: &ReferenceDistribution,
    uniform_fallback: bool,
) -> Result<ConditionalIntensityMatrix> {
    reference.check(cim)?;
    if eliminate.is_empty() {
        return Ok(cim.clone());
    }
    let split = Split::new(cim.subject(), eliminate)?;
    if split.kept.is_empty() {
        return Ok(without_subject(cim));
    }
    let n = split.kept.size();
    let mut components = Vec::with_capacity(cim.conditioning().size());
    for (c, q) in cim.components().iter().enumerate() {
        let p = reference.for_context(c);
        let mut out = Matrix::zeros(n, n);
        for from in 0..n {
            let w = split.conditional(p, from, uniform_fallback)?;
            for to in (0..n).filter(|&to| to != from) {
                out[(from, to)] = split.full[from]
                    .iter()
                    .zip(&split.full[to])
                    .zip(&w)
                    .map(|((&a, &b), &wy)| q.rate(a, b) * wy)
                    .sum();
            }
        }
        components.push(IntensityMatrix::with_repaired_diagonal(split.kept.clone(), out)?);
    }
    Ok(ConditionalIntensityMatrix::from_validated(split.kept, cim.conditioning().clone(), components))
}

/// Subsystem approximation of the marginal. Every retained state `s'`
/// collapses the states `{s' ⊕ y}` into one; its exit rate is the reciprocal
/// of the mean holding time `P0 (-U)^{-1} e` and its outgoing intensities are
/// that rate times the exit distribution, summed by the target's `S'` value.
pub fn marg_subsystem(
    cim: &ConditionalIntensityMatrix,
    eliminate: &[VarId],
    reference: &ReferenceDistribution,
    uniform_fallback: bool,
) -> Result<ConditionalIntensityMatrix> {
    reference.check(cim)?;
    if eliminate.is_empty() {
        return Ok(cim.clone());
    }
    let split = Split::new(cim.subject(), eliminate)?;
    if split.kept.is_empty() {
        return Ok(without_subject(cim));
    }
    let to_kept = cim.subject().projection(&split.kept)?;
    let n = split.kept.size();
    let full_n = cim.subject().size();
    let mut components = Vec::with_capacity(cim.conditioning().size());
    for (c, q) in cim.components().iter().enumerate() {
        let p = reference.for_context(c);
        let mut out = Matrix::zeros(n, n);
        for from in 0..n {
            let retained = &split.full[from];
            if retained.len() == 1 {
                // a singleton collapses exactly
                let s = retained[0];
                for t in (0..full_n).filter(|&t| t != s) {
                    out[(from, to_kept[t])] += q.rate(s, t);
                }
                out[(from, from)] = 0.0;
                continue;
            }
            let entrance = ProbVector::new(split.conditional(p, from, uniform_fallback)?)?;
            let m = retained.len();
            let u_entries = Matrix::from_fn(m, m, |i, j| q.rate(retained[i], retained[j]));
            let u = SubIntensityMatrix::new(cim.subject().clone(), retained.clone(), u_entries)?;
            let occupation = u.occupation_times(&entrance).map_err(|e| match e {
                Error::ClosedSubsystem => Error::ClosedSubsystem.context(format!(
                    "collapsing retained state {from} in context {c}"
                )),
                other => other,
            })?;
            let holding: f64 = occupation.iter().sum();
            if !(holding > 0.0 && holding.is_finite()) {
                return Err(Error::ClosedSubsystem);
            }
            let rate = 1.0 / holding;
            // exit probabilities P0 (-U)^{-1} R, aggregated by kept value of the target
            let mut exit = vec![0.0; n];
            for (i, &s) in retained.iter().enumerate() {
                for t in 0..full_n {
                    let kt = to_kept[t];
                    if kt != from {
                        exit[kt] += occupation[i] * q.rate(s, t);
                    }
                }
            }
            for to in (0..n).filter(|&to| to != from) {
                out[(from, to)] = rate * exit[to];
            }
        }
        components.push(IntensityMatrix::with_repaired_diagonal(split.kept.clone(), out)?);
    }
    Ok(ConditionalIntensityMatrix::from_validated(split.kept, cim.conditioning().clone(), components))
}

/// Per-context reference distributions over `cim`'s subject, obtained from a
/// joint distribution `joint` over `scope` (which must cover subject and
/// conditioning variables) by marginalizing and conditioning on each context.
pub fn reference_from_joint(
    cim: &ConditionalIntensityMatrix,
    joint: &[f64],
    scope: &StateIndexer,
    uniform_fallback: bool,
) -> Result<ReferenceDistribution> {
    let both = cim.subject().union(cim.conditioning())?;
    let marg = crate::indexer::marginalize_onto(joint, scope, &both)?;
    let to_subject = both.projection(cim.subject())?;
    let to_context = both.projection(cim.conditioning())?;
    let mut per = vec![vec![0.0; cim.subject().size()]; cim.conditioning().size()];
    for (i, &m) in marg.iter().enumerate() {
        per[to_context[i]][to_subject[i]] += m;
    }
    let dists = per
        .into_iter()
        .enumerate()
        .map(|(c, w)| {
            if w.iter().sum::<f64>() > 0.0 {
                ProbVector::from_weights(w)
            } else if uniform_fallback {
                ProbVector::uniform(w.len())
            } else {
                Err(Error::ZeroMassConditioning { state: format!("conditioning context {c}") })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceDistribution::PerContext(dists))
}

/// Expected holding time of each collapsed state; exposed for diagnostics.
pub fn collapsed_holding_times(
    q: &IntensityMatrix,
    eliminate: &[VarId],
    reference: &ProbVector,
) -> Result<Vec<f64>> {
    let split = Split::new(q.indexer(), eliminate)?;
    (0..split.kept.size())
        .map(|s| {
            let retained = &split.full[s];
            let entrance = ProbVector::new(split.conditional(reference, s, false)?)?;
            let u = crate::markov::extract_subsystem(q, retained)?;
            crate::markov::expected_holding_time(&entrance, &u)
        })
        .collect()
}

/// Entrance distribution `P0(y | s')` of each collapsed state.
pub fn entrance_distributions(
    subject: &StateIndexer,
    eliminate: &[VarId],
    reference: &ProbVector,
) -> Result<Vec<ProbVector>> {
    let split = Split::new(subject, eliminate)?;
    (0..split.kept.size())
        .map(|s| ProbVector::new(split.conditional(reference, s, false)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cim::tests::{q_yz, q_z_given_y, Y, Z};
    use crate::linalg::from_rows;

    // reference over [Z, Y] with P(Y) = [.3, .7], P(Z | y1) = [.7, .3], P(Z | y2) = [.3, .7]
    fn reference() -> ReferenceDistribution {
        ReferenceDistribution::Shared(ProbVector::new(vec![0.21, 0.21, 0.09, 0.49]).unwrap())
    }

    fn joint() -> ConditionalIntensityMatrix {
        ConditionalIntensityMatrix::unconditional(q_yz())
    }

    #[test]
    fn linear_rows() {
        let out = marg_linear(&joint(), &[Y], &reference(), false).unwrap();
        let q = out.components()[0].entries();
        assert_eq!(out.subject().vars(), &[Z]);
        assert_eq!((q[(0, 0)], q[(0, 1)]), (-4.0, 4.0));
        let oracle = 15.0 * 0.09 / 0.58 + 4.0 * 0.49 / 0.58;
        assert!((q[(1, 0)] - oracle).abs() < 1e-9);
        assert!((q[(1, 0)] - 5.7069).abs() < 1e-4);
        assert!((q[(1, 1)] + oracle).abs() < 1e-9);
    }

    #[test]
    fn subsystem_matches_collapse_example() {
        let out = marg_subsystem(&joint(), &[Y], &reference(), false).unwrap();
        let q = out.components()[0].entries();
        let expected = [[-3.7143, 3.7143], [5.7698, -5.7698]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((q[(i, j)] - expected[i][j]).abs() < 1e-3, "({i},{j}) = {}", q[(i, j)]);
            }
        }
        assert!((q[(0, 1)] - 26.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn entrance_and_holding_time() {
        let p = ProbVector::new(vec![0.21, 0.21, 0.09, 0.49]).unwrap();
        let entrance = entrance_distributions(q_yz().indexer(), &[Y], &p).unwrap();
        assert_eq!(entrance[0].as_slice(), &[0.5, 0.5]);
        let holding = collapsed_holding_times(&q_yz(), &[Y], &p).unwrap();
        assert!((holding[0] - 0.2692).abs() < 1e-4);
        assert!((holding[0] - 7.0 / 26.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_collapse_is_exact() {
        // eliminate a one-value variable
        let d = VarId(7);
        let dummy = ConditionalIntensityMatrix::unconditional(
            IntensityMatrix::new(StateIndexer::single(d, 1).unwrap(), Matrix::zeros(1, 1)).unwrap(),
        );
        let both = crate::cim::amalgamate(&q_z_given_y(), &dummy).unwrap();
        let n = both.subject().size();
        let reference = ReferenceDistribution::Shared(ProbVector::uniform(n).unwrap());
        for method in [MarginalizationMethod::Linear, MarginalizationMethod::Subsystem] {
            let cfg = MarginalizationConfig { method, reference: reference.clone(), uniform_fallback: false };
            let out = marginalize_cim(&both, &[d], &cfg).unwrap();
            assert_eq!(out, q_z_given_y(), "{method}");
        }
    }

    #[test]
    fn point_mass_reference_selects_slice() {
        // P concentrated on y2 for every z: linear result is the y2 slice
        let p = ReferenceDistribution::Shared(ProbVector::new(vec![0.0, 0.4, 0.0, 0.6]).unwrap());
        let out = marg_linear(&joint(), &[Y], &p, false).unwrap();
        let q = out.components()[0].entries();
        assert_eq!((q[(0, 1)], q[(1, 0)]), (5.0, 4.0));
    }

    #[test]
    fn identical_slices_and_independent_reference() {
        let cim = ConditionalIntensityMatrix::new(
            StateIndexer::single(Z, 2).unwrap(),
            StateIndexer::single(Y, 2).unwrap(),
            vec![from_rows(&[[-2.0, 2.0], [3.0, -3.0]]).unwrap(); 2],
        )
        .unwrap();
        let y = ConditionalIntensityMatrix::unconditional(
            IntensityMatrix::from_rows(StateIndexer::single(Y, 2).unwrap(), &[[-1.0, 1.0], [1.0, -1.0]]).unwrap(),
        );
        let both = crate::cim::amalgamate(&y, &cim).unwrap();
        // independent product [.4, .6] x [.25, .75] over [Z, Y]
        let p = ProbVector::new(vec![0.1, 0.3, 0.15, 0.45]).unwrap();
        for method in [MarginalizationMethod::Linear, MarginalizationMethod::Subsystem] {
            let cfg = MarginalizationConfig {
                method,
                reference: ReferenceDistribution::Shared(p.clone()),
                uniform_fallback: false,
            };
            let out = marginalize_cim(&both, &[Y], &cfg).unwrap();
            let q = out.components()[0].entries();
            assert!((q[(0, 1)] - 2.0).abs() < 1e-12 && (q[(1, 0)] - 3.0).abs() < 1e-12, "{method}");
        }
    }

    #[test]
    fn zero_mass_state_is_an_error_unless_fallback() {
        let p = ReferenceDistribution::Shared(ProbVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap());
        let err = marg_linear(&joint(), &[Y], &p, false).unwrap_err();
        assert!(matches!(err, Error::ZeroMassConditioning { .. }));
        assert!(marg_subsystem(&joint(), &[Y], &p, false).is_err());
        let out = marg_linear(&joint(), &[Y], &p, true).unwrap();
        // uniform conditional on z2: (15 + 4) / 2
        assert!((out.components()[0].entries()[(1, 0)] - 9.5).abs() < 1e-12);
    }

    #[test]
    fn eliminating_unknown_variable_fails() {
        let err = marg_linear(&joint(), &[VarId(5)], &reference(), false).unwrap_err();
        assert!(matches!(err, Error::NotInSubject { var: 5 }));
    }

    #[test]
    fn per_context_reference_from_joint() {
        // Z | Y with a joint over [Z, Y]
        let scope = q_yz().indexer().clone();
        let r = reference_from_joint(&q_z_given_y(), &[0.21, 0.21, 0.09, 0.49], &scope, false).unwrap();
        let ReferenceDistribution::PerContext(ps) = r else { panic!("expected per-context") };
        assert!((ps[0][0] - 0.7).abs() < 1e-12 && (ps[1][1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn eliminating_whole_subject_gives_trivial_dynamics() {
        let out = marg_subsystem(&joint(), &[Z, Y], &reference(), false).unwrap();
        assert_eq!(out.subject().size(), 1);
        assert_eq!(out.components()[0].entries()[(0, 0)], 0.0);
    }
}
