//! Approximate inference on a clique tree whose potentials are intensity
//! matrices.
//!
//! Each clique holds the amalgamated CIMs of the variables assigned to it
//! and a distribution over its variables. Calibrating the dynamics passes
//! messages inward to a root and back out; every message is the clique's
//! potential times its other incoming messages, approximately reduced to the
//! sepset. The product of a clique's potential with all incoming messages is
//! its local intensity matrix, used to move the clique's distribution forward
//! in time.

mod graph;

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use nalgebra::DVector;

pub use graph::{has_running_intersection, moralize, spanning_tree, triangulated_cliques};

use crate::cim::{amalgamate, ConditionalIntensityMatrix};
use crate::error::{Error, Result};
use crate::exact::{Evidence, Observation};
use crate::indexer::{marginalize_onto, StateIndexer, VarId};
use crate::linalg::ProbVector;
use crate::marginalize::{marginalize_cim, reference_from_joint, MarginalizationConfig, MarginalizationMethod};
use crate::markov::IntensityMatrix;
use crate::model::{Ctbn, DEFAULT_CAP};

/// Sepset marginals of adjacent cliques must agree this closely after calibration.
pub const SEPSET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub method: MarginalizationMethod,
    /// Reference distributions for marginalization are taken this far ahead
    /// under the previous dynamics.
    pub tstar: f64,
    /// Interval between recalculations of the dynamics; `None` never recalculates.
    pub recalc: Option<f64>,
    /// Clique at which message passing is rooted.
    pub root: usize,
    pub uniform_fallback: bool,
    pub cap: usize,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            method: MarginalizationMethod::Subsystem,
            tstar: 0.0,
            recalc: None,
            root: 0,
            uniform_fallback: false,
            cap: DEFAULT_CAP,
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tstar >= 0.0 && self.tstar.is_finite()) {
            return Err(Error::InvalidConfig(format!("t* must be a nonnegative time, got {}", self.tstar)));
        }
        if let Some(d) = self.recalc {
            if !(d >= 0.0) || d.is_nan() {
                return Err(Error::InvalidConfig(format!("recalculation interval must be nonnegative, got {d}")));
            }
        }
        Ok(())
    }

    /// The recalculation interval, if recalculation is enabled.
    pub fn interval(&self) -> Option<f64> {
        self.recalc.filter(|d| *d > 0.0 && d.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct Clique {
    scope: StateIndexer,
    assigned: Vec<VarId>,
    potential: ConditionalIntensityMatrix,
    dist: ProbVector,
    dynamics: Option<IntensityMatrix>,
}

impl Clique {
    pub fn scope(&self) -> &StateIndexer {
        &self.scope
    }

    /// Variables whose dynamics live in this clique.
    pub fn assigned(&self) -> &[VarId] {
        &self.assigned
    }

    pub fn potential(&self) -> &ConditionalIntensityMatrix {
        &self.potential
    }

    pub fn distribution(&self) -> &ProbVector {
        &self.dist
    }

    /// The calibrated local intensity matrix, once computed.
    pub fn dynamics(&self) -> Option<&IntensityMatrix> {
        self.dynamics.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct CliqueTree {
    cliques: Vec<Clique>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    messages: BTreeMap<(usize, usize), ConditionalIntensityMatrix>,
    variables: Vec<(VarId, usize)>,
    names: Vec<(String, Vec<String>)>,
    config: ApproxConfig,
    time: f64,
    boundaries_passed: u64,
}

impl CliqueTree {
    /// Builds the tree and its initial potentials and distributions. Dynamics
    /// are calibrated lazily on first use.
    pub fn build(model: &Ctbn, config: ApproxConfig) -> Result<Self> {
        config.validate()?;
        let parents: Vec<Vec<VarId>> = model.var_ids().map(|x| model.parents(x).to_vec()).collect();
        let sets = triangulated_cliques(moralize(&parents));
        let edges = spanning_tree(&sets);
        let mut assigned = vec![Vec::new(); sets.len()];
        for x in model.var_ids() {
            let mut family: BTreeSet<usize> = parents[x.0].iter().map(|p| p.0).collect();
            family.insert(x.0);
            let home = sets
                .iter()
                .position(|c| family.is_subset(c))
                .ok_or_else(|| Error::CliqueTree(format!("no clique holds the family of {x}")))?;
            assigned[home].push(x);
        }
        let mut cliques = Vec::with_capacity(sets.len());
        for (set, assigned) in sets.iter().zip(assigned) {
            let vars: Vec<VarId> = set.iter().map(|&v| VarId(v)).collect();
            let scope = model.scope(&vars)?;
            if scope.size() > config.cap {
                return Err(Error::CapExceeded { size: scope.size() as u128, cap: config.cap });
            }
            let potential = model.family_product(&assigned)?;
            let dist = model.initial_marginal(&vars, config.cap)?;
            cliques.push(Clique { scope, assigned, potential, dist, dynamics: None });
        }
        let mut neighbors = vec![Vec::new(); cliques.len()];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        if config.root >= cliques.len() {
            return Err(Error::InvalidConfig(format!(
                "root clique {} does not exist ({} cliques)",
                config.root,
                cliques.len()
            )));
        }
        debug!("clique tree with {} cliques and edges {:?}", cliques.len(), edges);
        Ok(Self {
            cliques,
            edges,
            neighbors,
            messages: BTreeMap::new(),
            variables: model.var_ids().map(|x| (x, model.card(x))).collect(),
            names: model.variables().iter().map(|v| (v.name.clone(), v.values.clone())).collect(),
            config,
            time: 0.0,
            boundaries_passed: 0,
        })
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn sepset(&self, i: usize, j: usize) -> StateIndexer {
        self.cliques[i].scope.intersection(&self.cliques[j].scope)
    }

    pub fn message(&self, from: usize, to: usize) -> Option<&ConditionalIntensityMatrix> {
        self.messages.get(&(from, to))
    }

    pub fn config(&self) -> &ApproxConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// First clique containing `x`.
    pub fn home_of(&self, x: VarId) -> Result<usize> {
        self.cliques
            .iter()
            .position(|c| c.scope.contains(x))
            .ok_or_else(|| Error::UnknownVariable(x.to_string()))
    }

    /// Pre-order from `root` with children visited by index, and each clique's parent.
    fn rooted(&self, root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
        let mut order = Vec::with_capacity(self.cliques.len());
        let mut parent = vec![None; self.cliques.len()];
        let mut stack = vec![root];
        let mut seen = vec![false; self.cliques.len()];
        seen[root] = true;
        while let Some(i) = stack.pop() {
            order.push(i);
            for &k in self.neighbors[i].iter().rev() {
                if !seen[k] {
                    seen[k] = true;
                    parent[k] = Some(i);
                    stack.push(k);
                }
            }
        }
        (order, parent)
    }

    fn reference_scope_dist(&self, i: usize) -> Result<ProbVector> {
        let clique = &self.cliques[i];
        match &clique.dynamics {
            Some(q) if self.config.tstar > 0.0 => clique.dist.propagate(&q.transition_matrix(self.config.tstar)?),
            _ => Ok(clique.dist.clone()),
        }
    }

    fn compute_message(&self, i: usize, j: usize) -> Result<ConditionalIntensityMatrix> {
        let mut operand = self.cliques[i].potential.clone();
        for &k in &self.neighbors[i] {
            if k != j {
                let incoming = self.messages.get(&(k, i)).expect("schedule delivers inner messages first");
                operand = amalgamate(&operand, incoming)?;
            }
        }
        let sep = self.sepset(i, j);
        let eliminate: Vec<VarId> = operand.subject().vars().iter().copied().filter(|&v| !sep.contains(v)).collect();
        let base = self.reference_scope_dist(i)?;
        let reference = reference_from_joint(&operand, base.as_slice(), &self.cliques[i].scope, self.config.uniform_fallback)?;
        let cfg = MarginalizationConfig {
            method: self.config.method,
            reference,
            uniform_fallback: self.config.uniform_fallback,
        };
        marginalize_cim(&operand, &eliminate, &cfg)
    }

    /// Passes messages toward the root and back, then assembles every
    /// clique's local intensity matrix.
    pub fn calibrate_dynamics(&mut self) -> Result<()> {
        let (order, parent) = self.rooted(self.config.root);
        self.messages.clear();
        for &i in order.iter().rev() {
            if let Some(p) = parent[i] {
                let m = self.compute_message(i, p).map_err(|e| Error::Message { from: i, to: p, cause: Box::new(e) })?;
                self.messages.insert((i, p), m);
            }
        }
        for &i in &order {
            for &c in &self.neighbors[i] {
                if parent[c] == Some(i) {
                    let m = self.compute_message(i, c).map_err(|e| Error::Message { from: i, to: c, cause: Box::new(e) })?;
                    self.messages.insert((i, c), m);
                }
            }
        }
        let mut dynamics = Vec::with_capacity(self.cliques.len());
        for (i, clique) in self.cliques.iter().enumerate() {
            let mut q = clique.potential.clone();
            for &k in &self.neighbors[i] {
                q = amalgamate(&q, &self.messages[&(k, i)])?;
            }
            if q.subject() != &clique.scope || !q.conditioning().is_empty() {
                return Err(Error::CliqueTree(format!(
                    "local dynamics of clique {i} cover {:?} given {:?}",
                    q.subject().vars(),
                    q.conditioning().vars()
                )));
            }
            dynamics.push(q.components()[0].clone());
        }
        for (clique, q) in self.cliques.iter_mut().zip(dynamics) {
            clique.dynamics = Some(q);
        }
        debug!("calibrated dynamics at t={}", self.time);
        Ok(())
    }

    fn ensure_dynamics(&mut self) -> Result<()> {
        if self.cliques.iter().any(|c| c.dynamics.is_none()) {
            self.calibrate_dynamics()?;
        }
        Ok(())
    }

    fn step_all(&mut self, dt: f64) -> Result<()> {
        if dt <= 0.0 {
            return Ok(());
        }
        for clique in &mut self.cliques {
            let q = clique.dynamics.as_ref().expect("dynamics calibrated");
            clique.dist = clique.dist.propagate(&q.transition_matrix(dt)?)?;
        }
        Ok(())
    }

    /// Moves every clique distribution forward to absolute time `t`,
    /// recalculating the dynamics at each multiple of the interval on the way.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if !(t.is_finite() && t >= self.time) {
            return Err(Error::InvalidTime(format!("cannot move from t={} to t={t}", self.time)));
        }
        self.ensure_dynamics()?;
        while self.time < t {
            let (next, boundary) = match self.config.interval() {
                Some(d) => {
                    let b = (self.boundaries_passed + 1) as f64 * d;
                    if b - t <= 1e-9 * d {
                        (b.min(t), true)
                    } else {
                        (t, false)
                    }
                }
                None => (t, false),
            };
            self.step_all(next - self.time)?;
            self.time = next;
            if boundary {
                self.boundaries_passed += 1;
                self.calibrate_dynamics()?;
            }
        }
        // a boundary exactly at the start time
        if let Some(d) = self.config.interval() {
            while ((self.boundaries_passed + 1) as f64 * d) - self.time <= 1e-9 * d {
                self.boundaries_passed += 1;
                self.calibrate_dynamics()?;
            }
        }
        Ok(())
    }

    /// Moves forward by `d`.
    pub fn propagate(&mut self, d: f64) -> Result<()> {
        if !(d >= 0.0) {
            return Err(Error::InvalidTime(format!("cannot propagate over {d}")));
        }
        self.advance_to(self.time + d)
    }

    /// Rescales every clique, walking away from `root`, so that its sepset
    /// marginal matches its neighbor's on the root side.
    pub fn calibrate_distributions(&mut self, root: usize) -> Result<()> {
        let (order, parent) = self.rooted(root);
        for &c in &order {
            let Some(p) = parent[c] else { continue };
            let sep = self.sepset(p, c);
            let upstream = marginalize_onto(self.cliques[p].dist.as_slice(), &self.cliques[p].scope, &sep)?;
            let child = &self.cliques[c];
            let own = marginalize_onto(child.dist.as_slice(), &child.scope, &sep)?;
            let proj = child.scope.projection(&sep)?;
            let mut counts = vec![0usize; sep.size()];
            for &s in &proj {
                counts[s] += 1;
            }
            let weights: Vec<f64> = child
                .dist
                .as_slice()
                .iter()
                .zip(&proj)
                .map(|(&w, &s)| if own[s] > 0.0 { w * upstream[s] / own[s] } else { upstream[s] / counts[s] as f64 })
                .collect();
            self.cliques[c].dist = ProbVector::from_weights(weights)?;
        }
        Ok(())
    }

    fn zero_probability(&self, o: &Observation) -> Error {
        let (name, values) = &self.names[o.var.0];
        Error::ZeroProbabilityEvidence { time: o.time, var: name.clone(), value: values[o.value].clone() }
    }

    fn condition_clique(&mut self, i: usize, o: &Observation) -> Result<()> {
        let clique = &self.cliques[i];
        let pos = clique.scope.position(o.var).ok_or_else(|| Error::UnknownVariable(o.var.to_string()))?;
        if o.value >= clique.scope.cards()[pos] {
            return Err(Error::ValueOutOfDomain { var: o.var.0, value: o.value, card: clique.scope.cards()[pos] });
        }
        let w: Vec<f64> = (0..clique.scope.size())
            .map(|s| if clique.scope.value_at(s, pos) == o.value { clique.dist[s] } else { 0.0 })
            .collect();
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(self.zero_probability(o));
        }
        self.cliques[i].dist = ProbVector::from_weights(w)?;
        Ok(())
    }

    /// Conditions on simultaneous observations at the current time, then
    /// recalculates the dynamics from the conditioned distributions.
    pub fn incorporate(&mut self, observations: &[Observation]) -> Result<()> {
        self.ensure_dynamics()?;
        for o in observations {
            let root = self.home_of(o.var)?;
            self.calibrate_distributions(root)?;
            self.condition_clique(root, o)?;
            self.calibrate_distributions(root)?;
        }
        self.calibrate_dynamics()
    }

    pub fn incorporate_evidence(&mut self, var: VarId, value: usize) -> Result<()> {
        self.incorporate(&[Observation { time: self.time, var, value }])
    }

    fn sepsets_consistent(&self) -> Result<()> {
        for &(a, b) in &self.edges {
            let sep = self.sepset(a, b);
            let ma = marginalize_onto(self.cliques[a].dist.as_slice(), &self.cliques[a].scope, &sep)?;
            let mb = marginalize_onto(self.cliques[b].dist.as_slice(), &self.cliques[b].scope, &sep)?;
            let gap = ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if gap > SEPSET_TOL {
                return Err(Error::CliqueTree(format!("cliques {a} and {b} disagree on their sepset by {gap:e}")));
            }
        }
        Ok(())
    }

    /// The joint distribution in product form, `Π P_i / Π P_sepset`.
    /// Sepset marginals must already agree.
    pub fn approx_joint(&self) -> Result<ProbVector> {
        self.sepsets_consistent()?;
        let size: u128 = self.variables.iter().map(|&(_, c)| c as u128).product();
        if size > self.config.cap as u128 {
            return Err(Error::CapExceeded { size, cap: self.config.cap });
        }
        let joint = StateIndexer::sorted(self.variables.clone())?;
        let mut w = vec![1.0; joint.size()];
        for clique in &self.cliques {
            let proj = joint.projection(&clique.scope)?;
            for (x, wx) in w.iter_mut().enumerate() {
                *wx *= clique.dist[proj[x]];
            }
        }
        for &(a, b) in &self.edges {
            let sep = self.sepset(a, b);
            let marg = marginalize_onto(self.cliques[a].dist.as_slice(), &self.cliques[a].scope, &sep)?;
            let proj = joint.projection(&sep)?;
            for (x, wx) in w.iter_mut().enumerate() {
                let m = marg[proj[x]];
                *wx = if m > 0.0 { *wx / m } else { 0.0 };
            }
        }
        ProbVector::from_weights(w)
    }

    /// Product-form joint after a calibration pass from the configured root.
    pub fn calibrated_joint(&self) -> Result<ProbVector> {
        let mut tree = self.clone();
        tree.calibrate_distributions(self.config.root)?;
        tree.approx_joint()
    }

    /// Marginal over `vars`, read from the first clique holding all of them
    /// or else from the calibrated joint.
    pub fn marginal(&self, vars: &[VarId]) -> Result<ProbVector> {
        let pairs = vars
            .iter()
            .map(|&v| {
                self.variables
                    .get(v.0)
                    .copied()
                    .ok_or_else(|| Error::UnknownVariable(v.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let target = StateIndexer::sorted(pairs)?;
        if let Some(c) = self.cliques.iter().find(|c| c.scope.covers(&target)) {
            return ProbVector::from_weights(marginalize_onto(c.dist.as_slice(), &c.scope, &target)?);
        }
        let joint = self.calibrated_joint()?;
        let scope = StateIndexer::sorted(self.variables.clone())?;
        ProbVector::from_weights(marginalize_onto(joint.as_slice(), &scope, &target)?)
    }

    /// Runs forward through the evidence up to `t_query`, then folds in the
    /// likelihood of any later evidence clique by clique.
    pub fn run_sequence(&self, evidence: &Evidence, t_query: f64) -> Result<CliqueTree> {
        let mut tree = self.clone();
        let (before, after) = evidence.split_at(t_query);
        for (time, group) in before.groups() {
            if time < tree.time {
                return Err(Error::InvalidTime(format!("evidence at t={time} precedes the tree time {}", tree.time)));
            }
            tree.advance_to(time)?;
            tree.incorporate(&group)?;
        }
        tree.advance_to(t_query)?;
        if !after.is_empty() {
            tree.apply_later_evidence(&after)?;
        }
        Ok(tree)
    }

    fn apply_later_evidence(&mut self, later: &Evidence) -> Result<()> {
        let mut by_home: BTreeMap<usize, Vec<Observation>> = BTreeMap::new();
        for &o in later.observations() {
            by_home.entry(self.home_of(o.var)?).or_default().push(o);
        }
        let mut last = None;
        for (&h, obs) in &by_home {
            self.calibrate_distributions(h)?;
            let beta = self.backward_likelihood(h, obs)?;
            let clique = &self.cliques[h];
            let w: Vec<f64> = clique.dist.as_slice().iter().zip(beta.iter()).map(|(p, b)| p * b).collect();
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(self.zero_probability(&obs[0]));
            }
            self.cliques[h].dist = ProbVector::from_weights(w)?;
            last = Some(h);
        }
        if let Some(h) = last {
            self.calibrate_distributions(h)?;
        }
        Ok(())
    }

    /// Likelihood over clique `h`'s states now of observations (all later,
    /// all on variables of `h`) under `h`'s local dynamics.
    fn backward_likelihood(&self, h: usize, obs: &[Observation]) -> Result<DVector<f64>> {
        let clique = &self.cliques[h];
        let q = clique.dynamics.as_ref().expect("dynamics calibrated");
        let mut beta = DVector::from_element(clique.scope.size(), 1.0);
        let mut next: Option<f64> = None;
        for o in obs.iter().rev() {
            if let Some(nt) = next {
                if nt > o.time {
                    beta = q.transition_matrix(nt - o.time)? * beta;
                }
            }
            let pos = clique.scope.position(o.var).expect("home clique holds the variable");
            for s in 0..clique.scope.size() {
                if clique.scope.value_at(s, pos) != o.value {
                    beta[s] = 0.0;
                }
            }
            next = Some(o.time);
        }
        if let Some(nt) = next {
            beta = q.transition_matrix(nt - self.time)? * beta;
        }
        Ok(beta)
    }
}
