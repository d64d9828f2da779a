//! Exact queries over the joint process: filtering through point evidence,
//! smoothing with later evidence, and first-passage times.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::indexer::{marginalize_onto, StateIndexer, VarId};
use crate::linalg::ProbVector;
use crate::markov::{expected_holding_time, extract_subsystem, phase_cdf, IntensityMatrix};
use crate::model::Ctbn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub var: VarId,
    pub value: usize,
}

/// Point observations ordered by time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evidence {
    observations: Vec<Observation>,
}

impl Evidence {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates values and ordering. Repeated identical observations are
    /// merged; conflicting values for one variable at one time are rejected.
    pub fn new(model: &Ctbn, observations: Vec<Observation>) -> Result<Self> {
        let mut kept: Vec<Observation> = Vec::with_capacity(observations.len());
        for (k, o) in observations.into_iter().enumerate() {
            if !(o.time >= 0.0 && o.time.is_finite()) {
                return Err(Error::InvalidEvidence(format!("observation {k} has invalid time {}", o.time)));
            }
            if o.var.0 >= model.len() {
                return Err(Error::UnknownVariable(o.var.to_string()));
            }
            if o.value >= model.card(o.var) {
                return Err(Error::ValueOutOfDomain { var: o.var.0, value: o.value, card: model.card(o.var) });
            }
            if let Some(last) = kept.last() {
                if o.time < last.time {
                    return Err(Error::InvalidEvidence(format!(
                        "observation {k} at t={} precedes an earlier one at t={}",
                        o.time, last.time
                    )));
                }
            }
            let same = kept.iter().rev().take_while(|p| p.time == o.time).find(|p| p.var == o.var);
            match same {
                Some(p) if p.value == o.value => continue,
                Some(p) => {
                    return Err(Error::InvalidEvidence(format!(
                        "'{}' observed as both '{}' and '{}' at t={}",
                        model.variable(o.var).name,
                        model.variable(o.var).values[p.value],
                        model.variable(o.var).values[o.value],
                        o.time
                    )))
                }
                None => kept.push(o),
            }
        }
        Ok(Self { observations: kept })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.observations.last().map(|o| o.time)
    }

    /// Observations grouped by time.
    pub fn groups(&self) -> Vec<(f64, Vec<Observation>)> {
        let mut out: Vec<(f64, Vec<Observation>)> = Vec::new();
        for &o in &self.observations {
            match out.last_mut() {
                Some((t, g)) if *t == o.time => g.push(o),
                _ => out.push((o.time, vec![o])),
            }
        }
        out
    }

    /// Observations at or before `t`, and those strictly after.
    pub fn split_at(&self, t: f64) -> (Evidence, Evidence) {
        let (a, b): (Vec<_>, Vec<_>) = self.observations.iter().partition(|o| o.time <= t);
        (Evidence { observations: a }, Evidence { observations: b })
    }
}

/// A marginal query at one time, optionally restricted to states agreeing
/// with same-time values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub time: f64,
    pub targets: Vec<VarId>,
    pub given: Vec<(VarId, usize)>,
}

/// Exact inference on the amalgamated joint process of one network.
#[derive(Debug, Clone)]
pub struct ExactEngine<'m> {
    model: &'m Ctbn,
    scope: StateIndexer,
    q: IntensityMatrix,
    initial: ProbVector,
}

impl<'m> ExactEngine<'m> {
    pub fn new(model: &'m Ctbn, cap: usize) -> Result<Self> {
        let scope = model.joint_scope(cap)?;
        let q = model.joint_intensity(cap)?;
        let initial = model.initial_joint(cap)?;
        Ok(Self { model, scope, q, initial })
    }

    pub fn model(&self) -> &Ctbn {
        self.model
    }

    pub fn scope(&self) -> &StateIndexer {
        &self.scope
    }

    pub fn intensity(&self) -> &IntensityMatrix {
        &self.q
    }

    pub fn initial(&self) -> &ProbVector {
        &self.initial
    }

    /// Distribution at `t` with no evidence.
    pub fn transient(&self, t: f64) -> Result<ProbVector> {
        self.advance(&self.initial, t)
    }

    fn advance(&self, p: &ProbVector, dt: f64) -> Result<ProbVector> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTime(format!("cannot propagate over {dt}")));
        }
        if dt == 0.0 {
            return Ok(p.clone());
        }
        p.propagate(&self.q.transition_matrix(dt)?)
    }

    /// Zeroes states inconsistent with `obs` and renormalizes.
    pub fn condition(&self, p: &ProbVector, obs: &[Observation]) -> Result<ProbVector> {
        let mut w = p.as_slice().to_vec();
        for o in obs {
            let pos = self.scope.position(o.var).ok_or_else(|| Error::UnknownVariable(o.var.to_string()))?;
            for (s, ws) in w.iter_mut().enumerate() {
                if self.scope.value_at(s, pos) != o.value {
                    *ws = 0.0;
                }
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(self.zero_probability(o));
            }
        }
        ProbVector::from_weights(w)
    }

    fn zero_probability(&self, o: &Observation) -> Error {
        let v = self.model.variable(o.var);
        Error::ZeroProbabilityEvidence { time: o.time, var: v.name.clone(), value: v.values[o.value].clone() }
    }

    /// Forward filtering from the initial distribution to `t`, which must not
    /// precede any observation.
    pub fn filter(&self, evidence: &Evidence, t: f64) -> Result<ProbVector> {
        self.filter_from(&self.initial, 0.0, evidence, t)
    }

    /// Forward filtering starting from `p` at time `t0`. Observations must lie in `[t0, t]`.
    pub fn filter_from(&self, p: &ProbVector, t0: f64, evidence: &Evidence, t: f64) -> Result<ProbVector> {
        if let Some(last) = evidence.last_time() {
            if last > t {
                return Err(Error::InvalidTime(format!("filter time {t} precedes evidence at {last}")));
            }
        }
        if evidence.observations().first().is_some_and(|o| o.time < t0) {
            return Err(Error::InvalidTime(format!("evidence precedes the start time {t0}")));
        }
        if t < t0 {
            return Err(Error::InvalidTime(format!("filter time {t} precedes the start time {t0}")));
        }
        let mut p = p.clone();
        let mut now = t0;
        for (time, group) in evidence.groups() {
            p = self.advance(&p, time - now)?;
            p = self.condition(&p, &group)?;
            now = time;
        }
        self.advance(&p, t - now)
    }

    /// Likelihood of the observations (all strictly after `t`) as a function of the state at `t`.
    pub fn backward_likelihood(&self, later: &Evidence, t: f64) -> Result<Vec<f64>> {
        let groups = later.groups();
        let n = self.scope.size();
        let mut beta = DVector::from_element(n, 1.0);
        let mut next_time = None;
        for (time, group) in groups.iter().rev() {
            if let Some(nt) = next_time {
                beta = self.q.transition_matrix(nt - time)? * beta;
            }
            for o in group {
                let pos = self.scope.position(o.var).ok_or_else(|| Error::UnknownVariable(o.var.to_string()))?;
                for s in 0..n {
                    if self.scope.value_at(s, pos) != o.value {
                        beta[s] = 0.0;
                    }
                }
            }
            next_time = Some(*time);
        }
        if let Some(nt) = next_time {
            if nt < t {
                return Err(Error::InvalidTime(format!("backward evidence at {nt} precedes {t}")));
            }
            beta = self.q.transition_matrix(nt - t)? * beta;
        }
        Ok(beta.iter().copied().collect())
    }

    /// `P(X(t) | all evidence)`, combining forward filtering with the
    /// likelihood of observations after `t`.
    pub fn posterior_at(&self, evidence: &Evidence, t: f64) -> Result<ProbVector> {
        let (before, after) = evidence.split_at(t);
        let alpha = self.filter(&before, t)?;
        if after.is_empty() {
            return Ok(alpha);
        }
        let beta = self.backward_likelihood(&after, t)?;
        let w: Vec<f64> = alpha.as_slice().iter().zip(&beta).map(|(a, b)| a * b).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(self.zero_probability(&after.observations()[0]));
        }
        ProbVector::from_weights(w)
    }

    /// Exact marginal of a joint distribution.
    pub fn marginal(&self, p: &ProbVector, vars: &[VarId]) -> Result<ProbVector> {
        if vars.is_empty() {
            return Err(Error::InvalidConfig("marginal over no variables".into()));
        }
        let onto = self.model.scope(vars)?;
        ProbVector::from_weights(marginalize_onto(p.as_slice(), &self.scope, &onto)?)
    }

    /// Answers a query given all evidence; same-time `given` values condition the result.
    pub fn query(&self, spec: &QuerySpec, evidence: &Evidence) -> Result<ProbVector> {
        let mut p = self.posterior_at(evidence, spec.time)?;
        if !spec.given.is_empty() {
            let obs: Vec<Observation> =
                spec.given.iter().map(|&(var, value)| Observation { time: spec.time, var, value }).collect();
            p = self.condition(&p, &obs)?;
        }
        self.marginal(&p, &spec.targets)
    }

    fn passage_parts(&self, x: VarId, value: usize, p0: &ProbVector) -> Result<(f64, Option<(ProbVector, Vec<usize>)>)> {
        if p0.len() != self.scope.size() {
            return Err(Error::DimensionMismatch { what: "initial distribution", expected: self.scope.size(), found: p0.len() });
        }
        let pos = self.scope.position(x).ok_or_else(|| Error::UnknownVariable(x.to_string()))?;
        if value >= self.scope.cards()[pos] {
            return Err(Error::ValueOutOfDomain { var: x.0, value, card: self.scope.cards()[pos] });
        }
        let outside: Vec<usize> = (0..self.scope.size()).filter(|&s| self.scope.value_at(s, pos) != value).collect();
        let outside_mass: f64 = outside.iter().map(|&s| p0[s]).sum();
        let inside = (1.0 - outside_mass).clamp(0.0, 1.0);
        if outside.is_empty() || outside_mass <= 0.0 {
            return Ok((1.0, None));
        }
        let entrance = ProbVector::from_weights(outside.iter().map(|&s| p0[s]).collect())?;
        Ok((inside, Some((entrance, outside))))
    }

    /// `P(first time x = value is at most t)` starting from `p0`; initial mass
    /// already at the value passes at time 0.
    pub fn first_passage_cdf(&self, x: VarId, value: usize, p0: &ProbVector, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidTime(format!("passage time {t} is negative")));
        }
        let (inside, rest) = self.passage_parts(x, value, p0)?;
        let Some((entrance, outside)) = rest else { return Ok(1.0) };
        let u = extract_subsystem(&self.q, &outside)?;
        Ok((inside + (1.0 - inside) * phase_cdf(&entrance, &u, t)?).clamp(0.0, 1.0))
    }

    /// Mean first-passage time to `x = value` from `p0`.
    pub fn expected_first_passage(&self, x: VarId, value: usize, p0: &ProbVector) -> Result<f64> {
        let (inside, rest) = self.passage_parts(x, value, p0)?;
        let Some((entrance, outside)) = rest else { return Ok(0.0) };
        let u = extract_subsystem(&self.q, &outside)?;
        Ok((1.0 - inside) * expected_holding_time(&entrance, &u)?)
    }
}
