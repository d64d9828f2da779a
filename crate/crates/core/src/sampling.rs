//! Forward sampling of event sequences.
//!
//! The sampler keeps one pending candidate per variable. Each round the next
//! event is picked in proportion to the candidates' rates, the waiting time is
//! drawn from the pooled rate, and candidates of the changed variable and its
//! children are discarded and regenerated.
//!
//! Trajectory `i` of a batch uses a ChaCha8 generator seeded with the batch
//! seed and switched to stream `i`, so batches are reproducible regardless of
//! how work is split across threads.

use std::io::Write;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::indexer::{StateIndexer, VarId};
use crate::linalg::ProbVector;
use crate::model::Ctbn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub var: VarId,
    pub value: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub initial: Vec<usize>,
    pub events: Vec<Event>,
}

impl EventSequence {
    /// Full assignment after applying every event at or before `t`.
    pub fn state_at(&self, t: f64) -> Result<Vec<usize>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidTime(format!("query time {t} is negative")));
        }
        let mut state = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            state[e.var.0] = e.value;
        }
        Ok(state)
    }

    pub fn final_state(&self) -> Vec<usize> {
        let mut state = self.initial.clone();
        for e in &self.events {
            state[e.var.0] = e.value;
        }
        state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub target: usize,
    pub rate: f64,
}

/// Pending candidate events, at most one per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    slots: Vec<Option<Candidate>>,
}

impl CandidateList {
    fn new(n: usize) -> Self {
        Self { slots: vec![None; n] }
    }

    pub fn get(&self, x: VarId) -> Option<Candidate> {
        self.slots[x.0]
    }

    pub fn len(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, Candidate)> + '_ {
        self.slots.iter().enumerate().filter_map(|(i, c)| c.map(|c| (VarId(i), c)))
    }

    pub fn total_rate(&self) -> f64 {
        self.iter().map(|(_, c)| c.rate).sum()
    }
}

/// Hooks into the sampler's individual steps; all default to no-ops.
pub trait SamplerObserver {
    /// A candidate was generated for `var`, reading the current values of `reads`.
    fn candidate_drawn(&mut self, _var: VarId, _reads: &[VarId]) {}
    /// The candidate list just before an event is chosen.
    fn round(&mut self, _candidates: &CandidateList, _state: &[usize]) {}
    /// An event was committed and the candidates of `removed` discarded.
    fn committed(&mut self, _event: &Event, _removed: &[VarId]) {}
}

pub struct NoObserver;

impl SamplerObserver for NoObserver {}

fn categorical<R: Rng>(weights: impl Iterator<Item = f64> + Clone, total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Draws a full assignment from the initial network.
pub fn sample_initial<R: Rng>(model: &Ctbn, rng: &mut R) -> Result<Vec<usize>> {
    let bn = model.initial();
    let mut state = vec![0; model.len()];
    for x in bn.topological_order()? {
        let row = &bn.cpt(x)[bn.parents(x).index_of_full(&state)];
        state[x.0] = categorical(row.as_slice().iter().copied(), 1.0, rng);
    }
    Ok(state)
}

fn draw_candidate<R: Rng, O: SamplerObserver>(
    model: &Ctbn,
    x: VarId,
    state: &[usize],
    rng: &mut R,
    observer: &mut O,
) -> Option<Candidate> {
    let cim = model.cim(x);
    let context = cim.conditioning().index_of_full(state);
    let current = state[x.0];
    let q = cim.component(context);
    let reads: Vec<VarId> = std::iter::once(x).chain(model.parents(x).iter().copied()).collect();
    observer.candidate_drawn(x, &reads);
    let rate = q.exit_rate(current);
    if rate <= 0.0 {
        return None;
    }
    let weights = (0..model.card(x)).map(|j| if j == current { 0.0 } else { q.rate(current, j) });
    let target = categorical(weights, rate, rng);
    Some(Candidate { target, rate })
}

/// Samples one trajectory on `[0, t_end]`.
pub fn sample_trajectory_with<R: Rng, O: SamplerObserver>(
    model: &Ctbn,
    t_end: f64,
    rng: &mut R,
    observer: &mut O,
) -> Result<EventSequence> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidTime(format!("end time {t_end} must be positive and finite")));
    }
    let initial = sample_initial(model, rng)?;
    let children: Vec<Vec<VarId>> = model.var_ids().map(|x| model.children(x)).collect();
    let mut state = initial.clone();
    let mut events = Vec::new();
    let mut candidates = CandidateList::new(model.len());
    let mut now = 0.0;
    loop {
        for x in model.var_ids() {
            if candidates.slots[x.0].is_none() {
                candidates.slots[x.0] = draw_candidate(model, x, &state, rng, observer);
            }
        }
        observer.round(&candidates, &state);
        let total = candidates.total_rate();
        if total <= 0.0 {
            break;
        }
        let pick = categorical(candidates.slots.iter().map(|c| c.map_or(0.0, |c| c.rate)), total, rng);
        let chosen = candidates.slots[pick].expect("picked slot holds a candidate");
        let u: f64 = rng.sample(Open01);
        now += -u.ln() / total;
        if now > t_end {
            break;
        }
        let event = Event { var: VarId(pick), value: chosen.target, time: now };
        state[pick] = chosen.target;
        events.push(event);
        let mut removed = vec![VarId(pick)];
        removed.extend(children[pick].iter().copied().filter(|&c| c.0 != pick));
        for r in &removed {
            candidates.slots[r.0] = None;
        }
        observer.committed(&event, &removed);
    }
    Ok(EventSequence { initial, events })
}

/// Generator for trajectory `index` of a batch seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_trajectory(model: &Ctbn, t_end: f64, seed: u64) -> Result<EventSequence> {
    sample_trajectory_with(model, t_end, &mut trajectory_rng(seed, 0), &mut NoObserver)
}

/// Samples `count` trajectories in parallel; the result is independent of thread count.
pub fn sample_many(model: &Ctbn, t_end: f64, count: usize, seed: u64) -> Result<Vec<EventSequence>> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_trajectory_with(model, t_end, &mut trajectory_rng(seed, i as u64), &mut NoObserver))
        .collect()
}

/// Normalized histogram of the trajectories' states at `t`, projected onto `scope`.
pub fn empirical_distribution(trajs: &[EventSequence], t: f64, scope: &StateIndexer) -> Result<ProbVector> {
    if trajs.is_empty() {
        return Err(Error::InvalidConfig("empirical distribution of no trajectories".into()));
    }
    let mut counts = vec![0.0; scope.size()];
    for tr in trajs {
        counts[scope.index_of_full(&tr.state_at(t)?)] += 1.0;
    }
    ProbVector::from_weights(counts)
}

/// Writes trajectories as CSV. Each trajectory starts with one row per
/// variable at time 0 giving its initial value.
pub fn write_csv<W: Write>(model: &Ctbn, trajs: &[EventSequence], out: &mut W) -> Result<()> {
    writeln!(out, "trajectory,time,variable,new_value")?;
    for (k, tr) in trajs.iter().enumerate() {
        for x in model.var_ids() {
            let v = model.variable(x);
            writeln!(out, "{k},0,{},{}", v.name, v.values[tr.initial[x.0]])?;
        }
        for e in &tr.events {
            let v = model.variable(e.var);
            writeln!(out, "{k},{},{},{}", e.time, v.name, v.values[e.value])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;
    use crate::markov::transient_distribution;
    use crate::model::tests::{chain_model, wz_model};
    use crate::model::{CtbnBuilder, DEFAULT_CAP};

    fn two_state(start: Vec<f64>) -> Ctbn {
        let mut b = CtbnBuilder::new();
        let x = b.variable("X", &["x1", "x2"]);
        b.dynamics(x, &[], vec![from_rows(&[[-1.0, 1.0], [2.0, -2.0]]).unwrap()]).initial(x, &[], vec![start]);
        b.build().unwrap()
    }

    #[test]
    fn zero_dynamics_never_move() {
        let mut b = CtbnBuilder::new();
        let x = b.variable("X", &["a", "b"]);
        let y = b.variable("Y", &["a", "b", "c"]);
        b.dynamics(x, &[], vec![crate::linalg::Matrix::zeros(2, 2)])
            .dynamics(y, &[x], vec![crate::linalg::Matrix::zeros(3, 3); 2])
            .initial(x, &[], vec![vec![0.5, 0.5]])
            .initial(y, &[], vec![vec![0.2, 0.3, 0.5]]);
        let net = b.build().unwrap();
        let tr = sample_trajectory(&net, 100.0, 3).unwrap();
        assert!(tr.events.is_empty());
    }

    #[test]
    fn state_at_boundaries() {
        let net = two_state(vec![1.0, 0.0]);
        let tr = sample_trajectory(&net, 10.0, 11).unwrap();
        assert!(!tr.events.is_empty());
        assert_eq!(tr.state_at(0.0).unwrap(), vec![0]);
        assert_eq!(tr.state_at(tr.events[0].time / 2.0).unwrap(), vec![0]);
        assert_eq!(tr.state_at(10.0).unwrap(), tr.final_state());
        assert!(tr.state_at(-1.0).is_err());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let net = chain_model();
        assert_eq!(sample_trajectory(&net, 5.0, 42).unwrap(), sample_trajectory(&net, 5.0, 42).unwrap());
        assert_ne!(sample_trajectory(&net, 5.0, 42).unwrap(), sample_trajectory(&net, 5.0, 43).unwrap());
        assert_eq!(sample_many(&net, 2.0, 20, 9).unwrap(), sample_many(&net, 2.0, 20, 9).unwrap());
    }

    #[test]
    fn events_are_well_formed() {
        let net = chain_model();
        for tr in sample_many(&net, 5.0, 200, 1).unwrap() {
            let mut state = tr.initial.clone();
            let mut last = 0.0;
            for e in &tr.events {
                assert!(e.time > last && e.time <= 5.0);
                assert_ne!(state[e.var.0], e.value);
                state[e.var.0] = e.value;
                last = e.time;
            }
        }
    }

    #[test]
    fn first_event_time_has_unit_mean() {
        let net = two_state(vec![1.0, 0.0]);
        let trajs = sample_many(&net, 50.0, 100_000, 5).unwrap();
        let mean = trajs.iter().map(|t| t.events[0].time).sum::<f64>() / trajs.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn single_variable_matches_transient() {
        let net = two_state(vec![1.0, 0.0]);
        let trajs = sample_many(&net, 1.0, 100_000, 6).unwrap();
        let scope = net.joint_scope(DEFAULT_CAP).unwrap();
        let emp = empirical_distribution(&trajs, 1.0, &scope).unwrap();
        let q = net.joint_intensity(DEFAULT_CAP).unwrap();
        let exact = transient_distribution(&ProbVector::point_mass(2, 0).unwrap(), &q, 1.0).unwrap();
        assert!((exact[0] - 0.683262).abs() < 1e-6);
        assert!(emp.total_variation(&exact) < 0.01);
    }

    #[test]
    fn empirical_distribution_basics() {
        let one = EventSequence { initial: vec![1, 0], events: vec![] };
        let other = EventSequence { initial: vec![0, 1], events: vec![] };
        let scope = wz_model().joint_scope(DEFAULT_CAP).unwrap();
        assert_eq!(empirical_distribution(&[one.clone()], 0.0, &scope).unwrap().as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            empirical_distribution(&[one, other], 0.0, &scope).unwrap().as_slice(),
            &[0.0, 0.5, 0.5, 0.0]
        );
        assert!(empirical_distribution(&[], 0.0, &scope).is_err());
    }

    struct Recorder {
        reads: Vec<(VarId, Vec<VarId>)>,
        violations: Vec<String>,
        children: Vec<Vec<VarId>>,
    }

    impl SamplerObserver for Recorder {
        fn candidate_drawn(&mut self, var: VarId, reads: &[VarId]) {
            self.reads.push((var, reads.to_vec()));
        }
        fn round(&mut self, candidates: &CandidateList, _state: &[usize]) {
            if candidates.iter().any(|(_, c)| c.rate <= 0.0) {
                self.violations.push("non-positive rate".into());
            }
        }
        fn committed(&mut self, event: &Event, removed: &[VarId]) {
            let mut expected = vec![event.var];
            expected.extend(self.children[event.var.0].iter().copied());
            if removed != expected.as_slice() {
                self.violations.push(format!("removed {removed:?} after {event:?}"));
            }
        }
    }

    #[test]
    fn candidate_discipline_and_local_reads() {
        let net = chain_model();
        let z = VarId(2);
        let mut rec = Recorder {
            reads: Vec::new(),
            violations: Vec::new(),
            children: net.var_ids().map(|x| net.children(x)).collect(),
        };
        for i in 0..200 {
            sample_trajectory_with(&net, 5.0, &mut trajectory_rng(77, i), &mut rec).unwrap();
        }
        assert!(rec.violations.is_empty(), "{:?}", rec.violations);
        let z_reads: Vec<_> = rec.reads.iter().filter(|(v, _)| *v == z).collect();
        assert!(!z_reads.is_empty());
        assert!(z_reads.iter().all(|(_, r)| r == &vec![z, VarId(1)]));
    }

    #[test]
    fn csv_layout() {
        let net = two_state(vec![1.0, 0.0]);
        let trajs = vec![EventSequence { initial: vec![0], events: vec![Event { var: VarId(0), value: 1, time: 0.5 }] }];
        let mut buf = Vec::new();
        write_csv(&net, &trajs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "trajectory,time,variable,new_value\n0,0,X,x1\n0,0.5,X,x2\n");
        let mut empty = Vec::new();
        write_csv(&net, &[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "trajectory,time,variable,new_value\n");
    }
}
