//! The network itself: variables, per-variable CIMs over a possibly cyclic
//! graph, and the Bayesian network giving the initial distribution.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use petgraph::algo::toposort;
use petgraph::graph::DiGraph;

use crate::cim::{amalgamate_all, ConditionalIntensityMatrix};
use crate::error::{Error, Result};
use crate::indexer::{marginalize_onto, StateIndexer, VarId};
use crate::linalg::{Matrix, ProbVector};
use crate::markov::IntensityMatrix;

/// Default bound on the number of joint states any exact computation may enumerate.
pub const DEFAULT_CAP: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub values: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        Self { name: name.into(), values: values.iter().map(|v| v.to_string()).collect() }
    }

    pub fn card(&self) -> usize {
        self.values.len()
    }
}

/// Initial distribution as a Bayesian network: one CPT per variable with
/// rows keyed by the canonical index of the parent instantiation.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBn {
    parents: Vec<StateIndexer>,
    cpts: Vec<Vec<ProbVector>>,
}

impl InitialBn {
    /// `families[i]` gives variable i's parents and CPT rows, the rows listed in
    /// the mixed-radix order of the parents as given.
    pub fn new(cards: &[usize], families: Vec<(Vec<VarId>, Vec<Vec<f64>>)>) -> Result<Self> {
        if families.len() != cards.len() {
            return Err(Error::DimensionMismatch {
                what: "initial network families",
                expected: cards.len(),
                found: families.len(),
            });
        }
        let mut parents = Vec::with_capacity(cards.len());
        let mut cpts = Vec::with_capacity(cards.len());
        for (i, (pars, rows)) in families.into_iter().enumerate() {
            let x = VarId(i);
            let given = StateIndexer::new(parent_pairs(cards, &pars, x)?)?;
            let canonical = StateIndexer::sorted(given.pairs())?;
            if rows.len() != given.size() {
                return Err(Error::InvalidNetwork(format!(
                    "initial CPT of {x} has {} rows, expected {}",
                    rows.len(),
                    given.size()
                )));
            }
            let proj = canonical.projection(&given)?;
            let table = proj
                .iter()
                .map(|&g| {
                    let row = &rows[g];
                    if row.len() != cards[i] {
                        return Err(Error::InvalidNetwork(format!(
                            "initial CPT row of {x} has {} entries, expected {}",
                            row.len(),
                            cards[i]
                        )));
                    }
                    ProbVector::new(row.clone())
                        .map_err(|e| e.context(format!("initial CPT of {x}, parent row {g}")))
                })
                .collect::<Result<Vec<_>>>()?;
            parents.push(canonical);
            cpts.push(table);
        }
        let bn = Self { parents, cpts };
        bn.check_acyclic()?;
        Ok(bn)
    }

    pub fn parents(&self, x: VarId) -> &StateIndexer {
        &self.parents[x.0]
    }

    pub fn cpt(&self, x: VarId) -> &[ProbVector] {
        &self.cpts[x.0]
    }

    pub fn len(&self) -> usize {
        self.cpts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cpts.is_empty()
    }

    fn check_acyclic(&self) -> Result<()> {
        self.topological_order().map(|_| ())
    }

    /// Variables ordered so that parents precede children.
    pub fn topological_order(&self) -> Result<Vec<VarId>> {
        let mut g = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..self.len()).map(|_| g.add_node(())).collect();
        for (i, pars) in self.parents.iter().enumerate() {
            for p in pars.vars() {
                g.add_edge(nodes[p.0], nodes[i], ());
            }
        }
        toposort(&g, None)
            .map(|order| order.into_iter().map(|n| VarId(n.index())).collect())
            .map_err(|cycle| {
                Error::InvalidNetwork(format!(
                    "initial network has a cycle through {}",
                    VarId(cycle.node_id().index())
                ))
            })
    }

    /// Probability of a full assignment (values indexed by variable id).
    pub fn probability(&self, full: &[usize]) -> f64 {
        self.cpts
            .iter()
            .zip(&self.parents)
            .enumerate()
            .map(|(i, (cpt, pars))| cpt[pars.index_of_full(full)][full[i]])
            .product()
    }

    /// Ancestral closure of `vars` in the initial network, sorted.
    fn ancestral_set(&self, vars: &[VarId]) -> BTreeSet<VarId> {
        let mut seen: BTreeSet<VarId> = vars.iter().copied().collect();
        let mut queue: VecDeque<VarId> = vars.iter().copied().collect();
        while let Some(x) = queue.pop_front() {
            for &p in self.parents[x.0].vars() {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }
}

fn parent_pairs(cards: &[usize], parents: &[VarId], child: VarId) -> Result<Vec<(VarId, usize)>> {
    parents
        .iter()
        .map(|&p| {
            if p == child {
                return Err(Error::InvalidNetwork(format!("{child} lists itself as a parent")));
            }
            cards
                .get(p.0)
                .map(|&c| (p, c))
                .ok_or_else(|| Error::UnknownVariable(p.to_string()))
        })
        .collect()
}

fn check_cap(size: u128, cap: usize) -> Result<()> {
    if size > cap as u128 {
        Err(Error::CapExceeded { size, cap })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ctbn {
    variables: Vec<Variable>,
    parents: Vec<Vec<VarId>>,
    cims: Vec<ConditionalIntensityMatrix>,
    initial: InitialBn,
}

impl Ctbn {
    /// Validates and assembles a network. `parents[i]` is the graph parent set
    /// of variable i and must match the conditioning set of `cims[i]`.
    pub fn new(
        variables: Vec<Variable>,
        parents: Vec<Vec<VarId>>,
        cims: Vec<ConditionalIntensityMatrix>,
        initial: InitialBn,
    ) -> Result<Self> {
        let n = variables.len();
        let mut names = HashSet::new();
        for v in &variables {
            if v.values.is_empty() {
                return Err(Error::InvalidNetwork(format!("variable '{}' has no values", v.name)));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidNetwork(format!("duplicate variable name '{}'", v.name)));
            }
            let distinct: HashSet<_> = v.values.iter().collect();
            if distinct.len() != v.values.len() {
                return Err(Error::InvalidNetwork(format!("variable '{}' repeats a value name", v.name)));
            }
        }
        if parents.len() != n || cims.len() != n || initial.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "{n} variables but {} parent sets, {} CIMs and {} initial CPTs",
                parents.len(),
                cims.len(),
                initial.len()
            )));
        }
        let cards: Vec<usize> = variables.iter().map(Variable::card).collect();
        let mut sorted_parents = Vec::with_capacity(n);
        for (i, (pars, cim)) in parents.into_iter().zip(&cims).enumerate() {
            let x = VarId(i);
            let name = &variables[i].name;
            let expected_subject = StateIndexer::single(x, cards[i])?;
            if cim.subject() != &expected_subject {
                return Err(Error::InvalidNetwork(format!(
                    "the CIM of '{name}' must have exactly '{name}' as its subject"
                )));
            }
            let mut pars = pars;
            pars.sort();
            let pairs = parent_pairs(&cards, &pars, x).map_err(|e| e.context(format!("parents of '{name}'")))?;
            let graph_parents = StateIndexer::new(pairs)?;
            if cim.conditioning().vars() != graph_parents.vars() {
                return Err(Error::InvalidNetwork(format!(
                    "the CIM of '{name}' is conditioned on {:?} but its graph parents are {:?}",
                    cim.conditioning().vars().iter().map(|v| v.0).collect::<Vec<_>>(),
                    graph_parents.vars().iter().map(|v| v.0).collect::<Vec<_>>()
                )));
            }
            if cim.conditioning() != &graph_parents {
                return Err(Error::InvalidNetwork(format!("the CIM of '{name}' disagrees on a parent's domain")));
            }
            let initial_pars = initial.parents(x);
            for (p, c) in initial_pars.pairs() {
                if cards.get(p.0) != Some(&c) {
                    return Err(Error::InvalidNetwork(format!(
                        "initial CPT of '{name}' disagrees on the domain of {p}"
                    )));
                }
            }
            if initial.cpt(x).iter().any(|row| row.len() != cards[i]) {
                return Err(Error::InvalidNetwork(format!("initial CPT rows of '{name}' have the wrong width")));
            }
            sorted_parents.push(pars);
        }
        Ok(Self { variables, parents: sorted_parents, cims, initial })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn variable(&self, x: VarId) -> &Variable {
        &self.variables[x.0]
    }

    pub fn card(&self, x: VarId) -> usize {
        self.variables[x.0].card()
    }

    pub fn cards(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::card).collect()
    }

    pub fn var_by_name(&self, name: &str) -> Result<VarId> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn value_index(&self, x: VarId, value: &str) -> Result<usize> {
        let var = &self.variables[x.0];
        var.values.iter().position(|v| v == value).ok_or_else(|| Error::UnknownValue {
            var: var.name.clone(),
            value: value.to_string(),
        })
    }

    pub fn parents(&self, x: VarId) -> &[VarId] {
        &self.parents[x.0]
    }

    /// Variables having `x` as a parent, in id order.
    pub fn children(&self, x: VarId) -> Vec<VarId> {
        self.var_ids().filter(|&y| self.parents[y.0].contains(&x)).collect()
    }

    pub fn cim(&self, x: VarId) -> &ConditionalIntensityMatrix {
        &self.cims[x.0]
    }

    pub fn cims(&self) -> &[ConditionalIntensityMatrix] {
        &self.cims
    }

    pub fn initial(&self) -> &InitialBn {
        &self.initial
    }

    /// Sorted scope of the given variables.
    pub fn scope(&self, vars: &[VarId]) -> Result<StateIndexer> {
        let pairs = vars
            .iter()
            .map(|&v| {
                self.variables
                    .get(v.0)
                    .map(|var| (v, var.card()))
                    .ok_or_else(|| Error::UnknownVariable(v.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        StateIndexer::sorted(pairs)
    }

    /// Number of joint states, without overflow.
    pub fn joint_size(&self) -> u128 {
        self.variables.iter().map(|v| v.card() as u128).product()
    }

    /// The joint scope in declaration order, checked against `cap`.
    pub fn joint_scope(&self, cap: usize) -> Result<StateIndexer> {
        check_cap(self.joint_size(), cap)?;
        self.scope(&self.var_ids().collect::<Vec<_>>())
    }

    /// Variables reachable from `x` along one or more graph edges; `x` itself
    /// is included when it lies on a cycle.
    pub fn descendants(&self, x: VarId) -> Result<BTreeSet<VarId>> {
        if x.0 >= self.len() {
            return Err(Error::UnknownVariable(x.to_string()));
        }
        let children: Vec<Vec<VarId>> = self.var_ids().map(|v| self.children(v)).collect();
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<VarId> = children[x.0].iter().copied().collect();
        while let Some(y) = queue.pop_front() {
            if seen.insert(y) {
                queue.extend(children[y.0].iter().copied());
            }
        }
        Ok(seen)
    }

    /// Joint intensity matrix of the whole network, the amalgamation of all CIMs.
    pub fn joint_intensity(&self, cap: usize) -> Result<IntensityMatrix> {
        check_cap(self.joint_size(), cap)?;
        let joint = amalgamate_all(&self.cims)?;
        debug_assert!(joint.conditioning().is_empty());
        Ok(joint.components()[0].clone())
    }

    /// Amalgamation of the CIMs of `vars` only.
    pub fn family_product(&self, vars: &[VarId]) -> Result<ConditionalIntensityMatrix> {
        amalgamate_all(vars.iter().map(|v| &self.cims[v.0]))
    }

    /// Initial distribution over the full joint space.
    pub fn initial_joint(&self, cap: usize) -> Result<ProbVector> {
        let scope = self.joint_scope(cap)?;
        let weights = (0..scope.size()).map(|s| self.initial.probability(&scope.assignment(s))).collect();
        ProbVector::from_weights(weights)
    }

    /// Exact initial marginal over `vars`, enumerating only their ancestral set.
    pub fn initial_marginal(&self, vars: &[VarId], cap: usize) -> Result<ProbVector> {
        if vars.is_empty() {
            return Err(Error::InvalidConfig("initial marginal over no variables".into()));
        }
        let target = self.scope(vars)?;
        let ancestors: Vec<VarId> = self.initial.ancestral_set(vars).into_iter().collect();
        let scope = self.scope(&ancestors)?;
        check_cap(scope.size() as u128, cap)?;
        let mut full = vec![0; self.len()];
        let mut weights = Vec::with_capacity(scope.size());
        for s in 0..scope.size() {
            for (k, &v) in ancestors.iter().enumerate() {
                full[v.0] = scope.value_at(s, k);
            }
            let p: f64 = ancestors
                .iter()
                .map(|&v| {
                    let pars = self.initial.parents(v);
                    self.initial.cpt(v)[pars.index_of_full(&full)][full[v.0]]
                })
                .product();
            weights.push(p);
        }
        ProbVector::from_weights(marginalize_onto(&weights, &scope, &target)?)
    }

    /// The same network with the initial CPTs of the given variables replaced
    /// by point masses on the given values (parents dropped).
    pub fn with_initial_overrides(&self, overrides: &[(VarId, usize)]) -> Result<Ctbn> {
        let mut seen = HashMap::new();
        for &(x, value) in overrides {
            if x.0 >= self.len() {
                return Err(Error::UnknownVariable(x.to_string()));
            }
            if value >= self.card(x) {
                return Err(Error::ValueOutOfDomain { var: x.0, value, card: self.card(x) });
            }
            if let Some(prev) = seen.insert(x, value) {
                if prev != value {
                    return Err(Error::InvalidConfig(format!(
                        "conflicting initial overrides for '{}'",
                        self.variables[x.0].name
                    )));
                }
            }
        }
        let mut initial = self.initial.clone();
        for (&x, &value) in &seen {
            initial.parents[x.0] = StateIndexer::empty();
            initial.cpts[x.0] = vec![ProbVector::point_mass(self.card(x), value)?];
        }
        Ok(Ctbn { initial, ..self.clone() })
    }
}

/// Incremental construction of a [`Ctbn`] by variable name.
#[derive(Debug, Default)]
pub struct CtbnBuilder {
    variables: Vec<Variable>,
    dynamics: Vec<Option<(Vec<VarId>, Vec<Matrix>)>>,
    initial: Vec<Option<(Vec<VarId>, Vec<Vec<f64>>)>>,
}

impl CtbnBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variable(&mut self, name: &str, values: &[&str]) -> VarId {
        self.variables.push(Variable::new(name, values));
        self.dynamics.push(None);
        self.initial.push(None);
        VarId(self.variables.len() - 1)
    }

    /// CIM components listed in the mixed-radix order of `parents` as given.
    pub fn dynamics(&mut self, x: VarId, parents: &[VarId], components: Vec<Matrix>) -> &mut Self {
        self.dynamics[x.0] = Some((parents.to_vec(), components));
        self
    }

    /// CPT rows listed in the mixed-radix order of `parents` as given.
    pub fn initial(&mut self, x: VarId, parents: &[VarId], rows: Vec<Vec<f64>>) -> &mut Self {
        self.initial[x.0] = Some((parents.to_vec(), rows));
        self
    }

    pub fn build(&self) -> Result<Ctbn> {
        let cards: Vec<usize> = self.variables.iter().map(Variable::card).collect();
        let mut parents = Vec::new();
        let mut cims = Vec::new();
        for (i, d) in self.dynamics.iter().enumerate() {
            let x = VarId(i);
            let name = &self.variables[i].name;
            let (pars, components) =
                d.clone().ok_or_else(|| Error::InvalidNetwork(format!("variable '{name}' has no dynamics")))?;
            let subject = StateIndexer::single(x, cards[i])?;
            let pairs = parent_pairs(&cards, &pars, x)?;
            let cim = ConditionalIntensityMatrix::from_parent_order(subject, pairs, components)
                .map_err(|e| e.context(format!("dynamics of '{name}'")))?;
            parents.push(pars);
            cims.push(cim);
        }
        let families = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.clone().ok_or_else(|| {
                    Error::InvalidNetwork(format!("variable '{}' has no initial distribution", self.variables[i].name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = InitialBn::new(&cards, families)?;
        Ctbn::new(self.variables.clone(), parents, cims, initial)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cim::tests::{q_yz, q_z_given_w, q_w_given_z};
    use crate::linalg::{from_rows, rows_of};

    fn m(rows: &[&[f64]]) -> Matrix {
        from_rows(rows).unwrap()
    }

    pub(crate) fn wz_model() -> Ctbn {
        let mut b = CtbnBuilder::new();
        let z = b.variable("Z", &["z1", "z2"]);
        let w = b.variable("W", &["w1", "w2"]);
        b.dynamics(w, &[z], vec![m(&[&[-1.0, 1.0], &[2.0, -2.0]]), m(&[&[-3.0, 3.0], &[4.0, -4.0]])])
            .dynamics(z, &[w], vec![m(&[&[-5.0, 5.0], &[6.0, -6.0]]), m(&[&[-7.0, 7.0], &[8.0, -8.0]])])
            .initial(z, &[], vec![vec![0.5, 0.5]])
            .initial(w, &[], vec![vec![0.5, 0.5]]);
        b.build().unwrap()
    }

    pub(crate) fn yz_model(y_scale: f64) -> Ctbn {
        let mut b = CtbnBuilder::new();
        let z = b.variable("Z", &["z1", "z2"]);
        let y = b.variable("Y", &["y1", "y2"]);
        b.dynamics(y, &[], vec![m(&[&[-1.0, 1.0], &[2.0, -2.0]]) * y_scale])
            .dynamics(z, &[y], vec![m(&[&[-3.0, 3.0], &[15.0, -15.0]]), m(&[&[-5.0, 5.0], &[4.0, -4.0]])])
            .initial(y, &[], vec![vec![0.3, 0.7]])
            .initial(z, &[y], vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
        b.build().unwrap()
    }

    /// X -> Y -> Z with three-valued X.
    pub(crate) fn chain_model() -> Ctbn {
        let mut b = CtbnBuilder::new();
        let x = b.variable("X", &["a", "b", "c"]);
        let y = b.variable("Y", &["y1", "y2"]);
        let z = b.variable("Z", &["z1", "z2"]);
        b.dynamics(x, &[], vec![m(&[&[-2.0, 1.5, 0.5], &[1.0, -3.0, 2.0], &[0.5, 0.5, -1.0]])])
            .dynamics(
                y,
                &[x],
                vec![
                    m(&[&[-4.0, 4.0], &[0.5, -0.5]]),
                    m(&[&[-1.0, 1.0], &[1.0, -1.0]]),
                    m(&[&[-0.2, 0.2], &[3.0, -3.0]]),
                ],
            )
            .dynamics(z, &[y], vec![m(&[&[-3.0, 3.0], &[15.0, -15.0]]), m(&[&[-5.0, 5.0], &[4.0, -4.0]])])
            .initial(x, &[], vec![vec![0.6, 0.3, 0.1]])
            .initial(y, &[x], vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]])
            .initial(z, &[y], vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
        b.build().unwrap()
    }

    #[test]
    fn cyclic_pair_joint_intensity() {
        let q = wz_model().joint_intensity(DEFAULT_CAP).unwrap();
        assert_eq!(
            rows_of(q.entries()),
            vec![
                vec![-6.0, 1.0, 5.0, 0.0],
                vec![2.0, -9.0, 0.0, 7.0],
                vec![6.0, 0.0, -9.0, 3.0],
                vec![0.0, 8.0, 4.0, -12.0]
            ]
        );
        let direct = crate::cim::amalgamate(&q_w_given_z(), &q_z_given_w()).unwrap();
        assert_eq!(&q, &direct.components()[0]);
    }

    #[test]
    fn chain_joint_intensity() {
        let q = yz_model(1.0).joint_intensity(DEFAULT_CAP).unwrap();
        assert_eq!(q, q_yz());
        assert_eq!(
            rows_of(q.entries()),
            vec![
                vec![-4.0, 1.0, 3.0, 0.0],
                vec![2.0, -7.0, 0.0, 5.0],
                vec![15.0, 0.0, -16.0, 1.0],
                vec![0.0, 4.0, 2.0, -6.0]
            ]
        );
    }

    #[test]
    fn single_variable_joint_is_its_matrix() {
        let mut b = CtbnBuilder::new();
        let x = b.variable("X", &["a", "b"]);
        b.dynamics(x, &[], vec![m(&[&[-1.0, 1.0], &[2.0, -2.0]])]).initial(x, &[], vec![vec![1.0, 0.0]]);
        let net = b.build().unwrap();
        assert_eq!(net.joint_intensity(DEFAULT_CAP).unwrap().entries(), net.cim(x).components()[0].entries());
    }

    /// Builds the joint matrix directly from each variable's CIM under the
    /// source state's parent values.
    fn direct_joint(net: &Ctbn) -> Matrix {
        let scope = net.joint_scope(DEFAULT_CAP).unwrap();
        let n = scope.size();
        let mut q = Matrix::zeros(n, n);
        for s in 0..n {
            let a = scope.assignment(s);
            for x in net.var_ids() {
                let cim = net.cim(x);
                let ctx = cim.conditioning().index_of_full(&a);
                for v in (0..net.card(x)).filter(|&v| v != a[x.0]) {
                    let t = scope.with_value(s, x.0, v);
                    q[(s, t)] = cim.rate(a[x.0], v, ctx);
                }
            }
            let row: f64 = q.row(s).sum();
            q[(s, s)] = -row;
        }
        q
    }

    #[test]
    fn joint_matches_direct_construction() {
        for net in [wz_model(), yz_model(1.0), chain_model()] {
            let q = net.joint_intensity(DEFAULT_CAP).unwrap();
            assert!((q.entries() - direct_joint(&net)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn stationary_z_marginals() {
        for (scale, expected) in [(1.0, 0.7150), (10.0, 0.7418)] {
            let net = yz_model(scale);
            let pi = net.joint_intensity(DEFAULT_CAP).unwrap().stationary_distribution().unwrap();
            let scope = net.joint_scope(DEFAULT_CAP).unwrap();
            let z = marginalize_onto(pi.as_slice(), &scope, &net.scope(&[VarId(0)]).unwrap()).unwrap();
            assert!((z[0] - expected).abs() < 5e-4, "scale {scale}: {}", z[0]);
        }
        let y1 = yz_model(1.0).cim(VarId(1)).components()[0].stationary_distribution().unwrap();
        let y10 = yz_model(10.0).cim(VarId(1)).components()[0].stationary_distribution().unwrap();
        assert!(y1.total_variation(&y10) < 1e-9);
        assert!((y1[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn descendants_follow_edges() {
        let chain = chain_model();
        let d: Vec<_> = chain.descendants(VarId(0)).unwrap().into_iter().collect();
        assert_eq!(d, vec![VarId(1), VarId(2)]);
        assert!(chain.descendants(VarId(2)).unwrap().is_empty());
        let cyc = wz_model();
        let d: Vec<_> = cyc.descendants(VarId(1)).unwrap().into_iter().collect();
        assert_eq!(d, vec![VarId(0), VarId(1)]);
        assert!(cyc.descendants(VarId(9)).is_err());
    }

    #[test]
    fn initial_distributions() {
        let net = yz_model(1.0);
        // ordering [Z, Y]
        let joint = net.initial_joint(DEFAULT_CAP).unwrap();
        let expected = [0.21, 0.21, 0.09, 0.49];
        for (a, b) in joint.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = net.initial_marginal(&[VarId(0)], DEFAULT_CAP).unwrap();
        assert!((z[0] - 0.42).abs() < 1e-12 && (z[1] - 0.58).abs() < 1e-12);
        let y = net.initial_marginal(&[VarId(1)], DEFAULT_CAP).unwrap();
        assert_eq!(y.as_slice(), &[0.3, 0.7]);
        let all = net.initial_marginal(&[VarId(1), VarId(0)], DEFAULT_CAP).unwrap();
        assert!(all.total_variation(&joint) < 1e-12);
        let uniform = wz_model().initial_joint(DEFAULT_CAP).unwrap();
        assert!(uniform.as_slice().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn cap_is_enforced() {
        let net = chain_model();
        assert!(matches!(net.joint_intensity(4), Err(Error::CapExceeded { size: 12, cap: 4 })));
        assert!(matches!(net.initial_joint(11), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn validation_errors() {
        // CIM conditioned on a non-parent
        let net = wz_model();
        let mut parents: Vec<Vec<VarId>> = net.var_ids().map(|x| net.parents(x).to_vec()).collect();
        parents[0].clear();
        let err = Ctbn::new(net.variables().to_vec(), parents, net.cims().to_vec(), net.initial().clone());
        assert!(matches!(err, Err(Error::InvalidNetwork(_))));

        // cyclic initial network
        let err = InitialBn::new(&[2, 2], vec![(vec![VarId(1)], vec![vec![1.0, 0.0]; 2]), (vec![VarId(0)], vec![vec![1.0, 0.0]; 2])]);
        assert!(matches!(err, Err(Error::InvalidNetwork(_))));

        // missing dynamics
        let mut b = CtbnBuilder::new();
        let x = b.variable("X", &["a", "b"]);
        b.initial(x, &[], vec![vec![0.5, 0.5]]);
        assert!(b.build().is_err());

        // invalid component
        b.dynamics(x, &[], vec![m(&[&[-1.0, 2.0], &[2.0, -2.0]])]);
        assert!(b.build().is_err());

        // bad CPT row
        let mut b = CtbnBuilder::new();
        let x = b.variable("X", &["a", "b"]);
        b.dynamics(x, &[], vec![m(&[&[-1.0, 1.0], &[2.0, -2.0]])]).initial(x, &[], vec![vec![0.5, 0.6]]);
        assert!(b.build().is_err());
    }

    #[test]
    fn initial_overrides_replace_cpts() {
        let net = yz_model(1.0).with_initial_overrides(&[(VarId(0), 1)]).unwrap();
        let z = net.initial_marginal(&[VarId(0)], DEFAULT_CAP).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 1.0]);
        let y = net.initial_marginal(&[VarId(1)], DEFAULT_CAP).unwrap();
        assert_eq!(y.as_slice(), &[0.3, 0.7]);
        assert!(yz_model(1.0).with_initial_overrides(&[(VarId(0), 2)]).is_err());
    }
}
