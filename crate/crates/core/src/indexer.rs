//! Mixed-radix indexing of joint assignments.
//!
//! A [`StateIndexer`] fixes an ordered list of variables with their domain
//! sizes. The first variable is the most significant digit, so for ordering
//! `[Z, W]` over binary domains the states run `(z1,w1), (z1,w2), (z2,w1),
//! (z2,w2)`.

use std::fmt;

use crate::error::{Error, Result};

/// Index of a variable in its model's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateIndexer {
    vars: Vec<VarId>,
    cards: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl StateIndexer {
    /// Builds an indexer in the given variable order.
    pub fn new(vars: Vec<(VarId, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(v, card) in &vars {
            if !seen.insert(v) {
                return Err(Error::DuplicateVariable(v.0));
            }
            if card == 0 {
                return Err(Error::InvalidNetwork(format!("variable {v} has an empty domain")));
            }
        }
        let cards: Vec<usize> = vars.iter().map(|&(_, c)| c).collect();
        let mut strides = vec![1; cards.len()];
        let mut size: usize = 1;
        for i in (0..cards.len()).rev() {
            strides[i] = size;
            size = size
                .checked_mul(cards[i])
                .ok_or(Error::CapExceeded { size: u128::MAX, cap: usize::MAX })?;
        }
        Ok(Self {
            vars: vars.into_iter().map(|(v, _)| v).collect(),
            cards,
            strides,
            size,
        })
    }

    /// Builds an indexer with variables sorted by id (the canonical order).
    pub fn sorted(mut vars: Vec<(VarId, usize)>) -> Result<Self> {
        vars.sort_by_key(|&(v, _)| v);
        Self::new(vars)
    }

    /// The scope with no variables; it has exactly one (empty) state.
    pub fn empty() -> Self {
        Self { vars: Vec::new(), cards: Vec::new(), strides: Vec::new(), size: 1 }
    }

    pub fn single(var: VarId, card: usize) -> Result<Self> {
        Self::new(vec![(var, card)])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn pairs(&self) -> Vec<(VarId, usize)> {
        self.vars.iter().copied().zip(self.cards.iter().copied()).collect()
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.position(var).is_some()
    }

    pub fn card_of(&self, var: VarId) -> Option<usize> {
        self.position(var).map(|p| self.cards[p])
    }

    /// True if every variable of `other` is in `self` with the same domain size.
    pub fn covers(&self, other: &StateIndexer) -> bool {
        other
            .vars
            .iter()
            .zip(&other.cards)
            .all(|(&v, &c)| self.card_of(v) == Some(c))
    }

    /// Mixed-radix index of an assignment given in this indexer's variable order.
    pub fn index(&self, assignment: &[usize]) -> Result<usize> {
        if assignment.len() != self.vars.len() {
            return Err(Error::IncompleteInstantiation {
                expected: self.vars.len(),
                found: assignment.len(),
            });
        }
        let mut idx = 0;
        for (i, &value) in assignment.iter().enumerate() {
            if value >= self.cards[i] {
                return Err(Error::ValueOutOfDomain {
                    var: self.vars[i].0,
                    value,
                    card: self.cards[i],
                });
            }
            idx += value * self.strides[i];
        }
        Ok(idx)
    }

    /// Inverse of [`StateIndexer::index`].
    pub fn assignment(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.size);
        (0..self.vars.len()).map(|i| self.value_at(index, i)).collect()
    }

    /// Value of the variable at `position` within the state `index`.
    #[inline]
    pub fn value_at(&self, index: usize, position: usize) -> usize {
        (index / self.strides[position]) % self.cards[position]
    }

    /// Index of the state reached by setting the variable at `position` to `value`.
    #[inline]
    pub fn with_value(&self, index: usize, position: usize, value: usize) -> usize {
        let old = self.value_at(index, position);
        index + value * self.strides[position] - old * self.strides[position]
    }

    /// Index of a state given a full model assignment (values indexed by `VarId.0`).
    pub fn index_of_full(&self, full: &[usize]) -> usize {
        self.vars
            .iter()
            .zip(&self.strides)
            .map(|(v, s)| full[v.0] * s)
            .sum()
    }

    /// For each state of `self`, the index of its projection onto `sub`.
    pub fn projection(&self, sub: &StateIndexer) -> Result<Vec<usize>> {
        let map = self.positions_of(sub)?;
        Ok((0..self.size)
            .map(|idx| {
                map.iter()
                    .zip(&sub.strides)
                    .map(|(&p, &s)| self.value_at(idx, p) * s)
                    .sum()
            })
            .collect())
    }

    /// Positions in `self` of each variable of `sub`, checking domain sizes.
    pub fn positions_of(&self, sub: &StateIndexer) -> Result<Vec<usize>> {
        sub.vars
            .iter()
            .zip(&sub.cards)
            .map(|(&v, &c)| match self.position(v) {
                Some(p) if self.cards[p] == c => Ok(p),
                Some(p) => Err(Error::DomainMismatch { var: v.0, a: self.cards[p], b: c }),
                None => Err(Error::UnknownVariable(v.to_string())),
            })
            .collect()
    }

    /// Sorted union of two scopes. Shared variables must agree on domain size.
    pub fn union(&self, other: &StateIndexer) -> Result<StateIndexer> {
        let mut pairs = self.pairs();
        for (v, c) in other.pairs() {
            match self.card_of(v) {
                Some(existing) if existing != c => {
                    return Err(Error::DomainMismatch { var: v.0, a: existing, b: c })
                }
                Some(_) => {}
                None => pairs.push((v, c)),
            }
        }
        StateIndexer::sorted(pairs)
    }

    /// Variables of `self` not in `other`, in canonical order.
    pub fn difference(&self, other: &StateIndexer) -> StateIndexer {
        let pairs = self.pairs().into_iter().filter(|&(v, _)| !other.contains(v)).collect();
        StateIndexer::sorted(pairs).expect("subset of a valid scope")
    }

    /// Variables shared by both scopes, in canonical order.
    pub fn intersection(&self, other: &StateIndexer) -> StateIndexer {
        let pairs = self.pairs().into_iter().filter(|&(v, _)| other.contains(v)).collect();
        StateIndexer::sorted(pairs).expect("subset of a valid scope")
    }

    pub fn restrict(&self, vars: &[VarId]) -> Result<StateIndexer> {
        let pairs = vars
            .iter()
            .map(|&v| {
                self.card_of(v)
                    .map(|c| (v, c))
                    .ok_or_else(|| Error::UnknownVariable(v.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        StateIndexer::sorted(pairs)
    }
}

/// Sums `dist` (indexed by `from`) onto the states of `onto`.
pub fn marginalize_onto(dist: &[f64], from: &StateIndexer, onto: &StateIndexer) -> Result<Vec<f64>> {
    if dist.len() != from.size() {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: from.size(),
            found: dist.len(),
        });
    }
    let proj = from.projection(onto)?;
    let mut out = vec![0.0; onto.size()];
    for (i, &p) in dist.iter().enumerate() {
        out[proj[i]] += p;
    }
    Ok(out)
}
