//! Configuration-space counting and enumeration under pair exclusions.
//!
//! A configuration picks one condition per dimension. Constraints are
//! unordered cross-dimension condition pairs that may not appear together.
//! Pinning a condition is expressed with the same pair mechanism: every
//! sibling of the pinned condition is excluded against all conditions of
//! another dimension, which makes the sibling unusable.
//!
//! Counting runs a dynamic program over dimensions whose state is the set of
//! earlier choices that still have exclusions reaching forward. Before that,
//! conditions that cannot appear in any configuration are removed (a
//! condition is dead when it is excluded against every live condition of some
//! other dimension), iterated to a fixpoint.

use std::collections::{BTreeSet, HashMap, HashSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::field::{Configuration, MorphologicalField};

/// Π |conditions_d|, exact.
pub fn count_configurations(field: &MorphologicalField) -> BigUint {
    field
        .sizes()
        .into_iter()
        .fold(BigUint::from(1u32), |acc, n| acc * BigUint::from(n))
}

/// Number of unordered condition pairs drawn from two distinct dimensions:
/// ((Σn)² − Σn²) / 2.
pub fn count_cross_dimension_pairs(field: &MorphologicalField) -> Result<u64> {
    if field.dimension_count() < 2 {
        return Err(Error::structural(
            "dimensions",
            "pairwise analysis needs at least two dimensions",
        ));
    }
    let sizes: Vec<u64> = field.sizes().into_iter().map(|n| n as u64).collect();
    let total: u64 = sizes.iter().sum();
    let squares: u64 = sizes.iter().map(|n| n * n).sum();
    Ok((total * total - squares) / 2)
}

/// A set of excluded cross-dimension condition pairs, stored as flat indices
/// with the smaller index first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from qualified id pairs, validating each against `field`.
    pub fn from_pairs<I, A, B>(field: &MorphologicalField, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut set = Self::new();
        for (a, b) in pairs {
            set.exclude(field, a.as_ref(), b.as_ref())?;
        }
        Ok(set)
    }

    pub fn exclude(&mut self, field: &MorphologicalField, a: &str, b: &str) -> Result<()> {
        let ia = field.resolve_or_err(a)?;
        let ib = field.resolve_or_err(b)?;
        self.exclude_indices(field, ia, ib)
    }

    pub fn exclude_indices(&mut self, field: &MorphologicalField, a: usize, b: usize) -> Result<()> {
        let n = field.condition_count();
        if a >= n || b >= n {
            return Err(Error::Constraint(format!(
                "condition index out of range ({a}, {b}) for {n} conditions"
            )));
        }
        if field.dimension_of(a) == field.dimension_of(b) {
            return Err(Error::Constraint(format!(
                "`{}` and `{}` belong to the same dimension",
                field.qualified_id(a),
                field.qualified_id(b)
            )));
        }
        self.pairs.insert((a.min(b), a.max(b)));
        Ok(())
    }

    /// Restricts the space to configurations containing `qualified` by
    /// excluding each of its siblings against every condition of another
    /// dimension.
    pub fn pin(&mut self, field: &MorphologicalField, qualified: &str) -> Result<()> {
        let x = field.resolve_or_err(qualified)?;
        self.pin_index(field, x)
    }

    pub fn pin_index(&mut self, field: &MorphologicalField, x: usize) -> Result<()> {
        let d = field.dimension_of(x);
        let siblings: Vec<usize> = field.dimension_range(d).filter(|&s| s != x).collect();
        if siblings.is_empty() {
            return Ok(());
        }
        let other = (0..field.dimension_count())
            .find(|&e| e != d)
            .ok_or_else(|| Error::Constraint("pinning needs at least two dimensions".into()))?;
        for s in siblings {
            for y in field.dimension_range(other) {
                self.exclude_indices(field, s, y)?;
            }
        }
        Ok(())
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn union(&self, other: &ConstraintSet) -> ConstraintSet {
        ConstraintSet {
            pairs: self.pairs.union(&other.pairs).copied().collect(),
        }
    }

    fn check(&self, field: &MorphologicalField) -> Result<()> {
        let n = field.condition_count();
        for &(a, b) in &self.pairs {
            if b >= n {
                return Err(Error::Constraint(format!(
                    "constraint ({a}, {b}) does not fit a field with {n} conditions"
                )));
            }
            if field.dimension_of(a) == field.dimension_of(b) {
                return Err(Error::Constraint(format!(
                    "`{}` and `{}` belong to the same dimension",
                    field.qualified_id(a),
                    field.qualified_id(b)
                )));
            }
        }
        Ok(())
    }
}

/// Field plus constraints after dead-condition removal.
struct Pruned {
    /// Live flat indices per dimension, ascending.
    live: Vec<Vec<usize>>,
    /// Exclusion partners per flat index, restricted to live conditions.
    partners: Vec<HashSet<usize>>,
    /// For each dimension, the furthest later dimension it still has an
    /// exclusion with (itself when none).
    reach: Vec<usize>,
}

impl Pruned {
    fn new(field: &MorphologicalField, constraints: &ConstraintSet) -> Result<Self> {
        constraints.check(field)?;
        let n = field.condition_count();
        let dims = field.dimension_count();
        let dim_of: Vec<usize> = (0..n).map(|i| field.dimension_of(i)).collect();
        let mut partners: Vec<HashSet<usize>> = vec![HashSet::new(); n];
        for (a, b) in constraints.iter() {
            partners[a].insert(b);
            partners[b].insert(a);
        }
        let mut alive = vec![true; n];
        let mut live_count: Vec<usize> = field.sizes();
        loop {
            let mut changed = false;
            for s in 0..n {
                if !alive[s] || partners[s].is_empty() {
                    continue;
                }
                let mut hits = vec![0usize; dims];
                for &p in &partners[s] {
                    if alive[p] {
                        hits[dim_of[p]] += 1;
                    }
                }
                let dead = (0..dims).any(|e| e != dim_of[s] && hits[e] == live_count[e] && live_count[e] > 0);
                if dead {
                    alive[s] = false;
                    live_count[dim_of[s]] -= 1;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let live: Vec<Vec<usize>> = (0..dims)
            .map(|d| field.dimension_range(d).filter(|&i| alive[i]).collect())
            .collect();
        for (i, set) in partners.iter_mut().enumerate() {
            if alive[i] {
                set.retain(|&p| alive[p]);
            } else {
                set.clear();
            }
        }
        let mut reach: Vec<usize> = (0..dims).collect();
        for i in 0..n {
            for &p in &partners[i] {
                let (di, dp) = (dim_of[i], dim_of[p]);
                if dp > di {
                    reach[di] = reach[di].max(dp);
                }
            }
        }
        Ok(Pruned { live, partners, reach })
    }

    fn compatible(&self, c: usize, chosen: &[usize]) -> bool {
        let p = &self.partners[c];
        p.is_empty() || chosen.iter().all(|x| !p.contains(x))
    }
}

struct Counter<'a> {
    pruned: &'a Pruned,
    field: &'a MorphologicalField,
    /// suffix_free[d]: no exclusion touches dimensions >= d from within.
    suffix_free: Vec<bool>,
    suffix_product: Vec<BigUint>,
    memo: HashMap<(usize, Vec<usize>), BigUint>,
}

impl<'a> Counter<'a> {
    fn new(pruned: &'a Pruned, field: &'a MorphologicalField) -> Self {
        let dims = pruned.live.len();
        let mut suffix_free = vec![true; dims + 1];
        let mut suffix_product = vec![BigUint::from(1u32); dims + 1];
        for d in (0..dims).rev() {
            suffix_free[d] = suffix_free[d + 1] && pruned.reach[d] == d;
            suffix_product[d] = &suffix_product[d + 1] * BigUint::from(pruned.live[d].len());
        }
        Counter {
            pruned,
            field,
            suffix_free,
            suffix_product,
            memo: HashMap::new(),
        }
    }

    fn count(&mut self, d: usize, active: Vec<usize>) -> BigUint {
        let dims = self.pruned.live.len();
        if d == dims {
            return BigUint::from(1u32);
        }
        if active.is_empty() && self.suffix_free[d] {
            return self.suffix_product[d].clone();
        }
        let key = (d, active);
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let active = key.1.clone();
        let mut total = BigUint::from(0u32);
        for &c in &self.pruned.live[d] {
            if !self.pruned.compatible(c, &active) {
                continue;
            }
            let next = self.next_state(d, &active, c);
            total += self.count(d + 1, next);
        }
        self.memo.insert(key, total.clone());
        total
    }

    /// Earlier choices (plus `c`) that still constrain dimension `d + 1` or later.
    fn next_state(&self, d: usize, active: &[usize], c: usize) -> Vec<usize> {
        let reach = &self.pruned.reach;
        let mut next: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&x| reach[self.field.dimension_of(x)] > d)
            .collect();
        if reach[d] > d {
            next.push(c);
        }
        next
    }
}

/// Exact number of configurations that contain no excluded pair.
pub fn count_consistent_configurations(
    field: &MorphologicalField,
    constraints: &ConstraintSet,
) -> Result<BigUint> {
    count_consistent_configurations_with(field, constraints, Execution::default())
}

pub fn count_consistent_configurations_with(
    field: &MorphologicalField,
    constraints: &ConstraintSet,
    exec: Execution,
) -> Result<BigUint> {
    let pruned = Pruned::new(field, constraints)?;
    if pruned.live.iter().any(Vec::is_empty) {
        return Ok(BigUint::from(0u32));
    }
    if constraints.is_empty() {
        return Ok(count_configurations(field));
    }
    let first = &pruned.live[0];
    let parts = exec.map(first, |&c| {
        let mut counter = Counter::new(&pruned, field);
        let state = counter.next_state(0, &[], c);
        counter.count(1, state)
    });
    Ok(parts.into_iter().sum())
}

/// For every condition, the number of consistent configurations that would
/// remain if it were additionally pinned.
pub fn remaining_per_condition(
    field: &MorphologicalField,
    constraints: &ConstraintSet,
    exec: Execution,
) -> Result<Vec<BigUint>> {
    constraints.check(field)?;
    let results = exec.map_range(field.condition_count(), |i| {
        let mut with_pin = constraints.clone();
        with_pin.pin_index(field, i)?;
        count_consistent_configurations_with(field, &with_pin, Execution::Sequential)
    });
    results.into_iter().collect()
}

/// Lazily yields consistent configurations in lexicographic dimension order.
pub struct ConfigurationIter {
    pruned: Pruned,
    offsets: Vec<usize>,
    pos: Vec<usize>,
    chosen: Vec<usize>,
    done: bool,
}

impl Iterator for ConfigurationIter {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        if self.done {
            return None;
        }
        let dims = self.pruned.live.len();
        let mut depth = self.chosen.len();
        if depth == dims {
            self.chosen.pop();
            depth -= 1;
        }
        loop {
            let live = &self.pruned.live[depth];
            if self.pos[depth] >= live.len() {
                if depth == 0 {
                    self.done = true;
                    return None;
                }
                self.pos[depth] = 0;
                depth -= 1;
                self.chosen.pop();
                continue;
            }
            let c = live[self.pos[depth]];
            self.pos[depth] += 1;
            if self.pruned.compatible(c, &self.chosen) {
                self.chosen.push(c);
                depth += 1;
                if depth == dims {
                    let choices = self
                        .chosen
                        .iter()
                        .zip(&self.offsets)
                        .map(|(&c, &o)| (c - o) as u32)
                        .collect();
                    return Some(Configuration { choices });
                }
            }
        }
    }
}

/// Stream of consistent configurations, skipping `offset` and yielding at most
/// `limit` (all when `None`).
pub fn enumerate_configurations(
    field: &MorphologicalField,
    constraints: &ConstraintSet,
    offset: usize,
    limit: Option<usize>,
) -> Result<impl Iterator<Item = Configuration>> {
    let pruned = Pruned::new(field, constraints)?;
    let dims = field.dimension_count();
    let offsets = (0..dims).map(|d| field.dimension_range(d).start).collect();
    let iter = ConfigurationIter {
        pruned,
        offsets,
        pos: vec![0; dims],
        chosen: Vec::with_capacity(dims),
        done: false,
    };
    Ok(iter.skip(offset).take(limit.unwrap_or(usize::MAX)))
}
