//! Finite meet-semilattices given extensionally by a meet table.
//!
//! Elements are opaque ids with integer dimension labels; the order is
//! derived from the table via `a <= b  <=>  meet(a,b) = a`. Every operation
//! is pure and the element list is kept sorted by id so reports are
//! reproducible.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// An element of a [`Semilattice`]: an opaque id plus a dimension label.
///
/// The dimension is used only for validation (monotonicity along the order)
/// and for relabeling quotients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubspaceId {
    pub id: String,
    pub dim: usize,
}

impl fmt::Display for SubspaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)
    }
}

/// A finite meet-semilattice with an explicit meet table.
///
/// A validated finite meet table always has a least element (the meet of
/// all elements), so unlike the general theory `least` is never absent
/// here.
#[derive(Clone, Debug)]
pub struct Semilattice {
    elems: Vec<SubspaceId>,
    /// `meet[i][j]` is the index of `elems[i] /\ elems[j]`.
    meet: Vec<Vec<usize>>,
    least: usize,
    index: BTreeMap<String, usize>,
}

impl Semilattice {
    /// Builds and validates a semilattice from elements `(id, dim)` and a
    /// meet table given in the same order as `elements`.
    ///
    /// The table is scanned exhaustively for commutativity, associativity,
    /// idempotence and dimension monotonicity; violations are reported with
    /// the offending ids so config diagnostics can point at table
    /// coordinates.
    pub fn new(elements: Vec<(String, usize)>, table: Vec<Vec<String>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("semilattice must have at least one element"));
        }
        let mut order: Vec<usize> = (0..elements.len()).collect();
        order.sort_by(|&a, &b| elements[a].0.cmp(&elements[b].0));

        let mut index = BTreeMap::new();
        let mut elems = Vec::with_capacity(elements.len());
        for (new_pos, &old) in order.iter().enumerate() {
            let (id, dim) = elements[old].clone();
            if index.insert(id.clone(), new_pos).is_some() {
                return Err(Error::invalid(format!("duplicate element id `{id}`")));
            }
            elems.push(SubspaceId { id, dim });
        }

        if table.len() != elements.len() {
            return Err(Error::invalid(format!(
                "meet table has {} rows, expected {}",
                table.len(),
                elements.len()
            )));
        }
        let mut meet = vec![vec![0usize; elems.len()]; elems.len()];
        for (i, row) in table.iter().enumerate() {
            if row.len() != elements.len() {
                return Err(Error::invalid(format!(
                    "meet table row for `{}` has {} entries, expected {}",
                    elements[i].0,
                    row.len(),
                    elements.len()
                )));
            }
            for (j, entry) in row.iter().enumerate() {
                let &k = index.get(entry).ok_or_else(|| {
                    Error::invalid(format!(
                        "meet({}, {}) = `{entry}` is not an element",
                        elements[i].0, elements[j].0
                    ))
                })?;
                meet[index[&elements[i].0]][index[&elements[j].0]] = k;
            }
        }

        let lat = Semilattice {
            elems,
            meet,
            least: 0,
            index,
        };
        lat.check_axioms()?;

        // The meet of all elements is below everything.
        let mut bottom = 0;
        for i in 1..lat.elems.len() {
            bottom = lat.meet[bottom][i];
        }
        Ok(Semilattice {
            least: bottom,
            ..lat
        })
    }

    /// Builds the semilattice from a meet function on indices of `elements`
    /// (in the given order). Convenience for programmatic construction; the
    /// result is validated exactly as in [`Semilattice::new`].
    pub fn from_meet_fn(
        elements: Vec<(String, usize)>,
        meet_of: impl Fn(usize, usize) -> usize,
    ) -> Result<Self> {
        let table = (0..elements.len())
            .map(|i| {
                (0..elements.len())
                    .map(|j| elements[meet_of(i, j)].0.clone())
                    .collect()
            })
            .collect();
        Self::new(elements, table)
    }

    fn check_axioms(&self) -> Result<()> {
        let n = self.elems.len();
        let id = |i: usize| &self.elems[i].id;
        for a in 0..n {
            if self.meet[a][a] != a {
                return Err(Error::invalid(format!(
                    "meet not idempotent: meet({0}, {0}) = {1}",
                    id(a),
                    id(self.meet[a][a])
                )));
            }
            for b in 0..n {
                if self.meet[a][b] != self.meet[b][a] {
                    return Err(Error::invalid(format!(
                        "meet not commutative at ({}, {})",
                        id(a),
                        id(b)
                    )));
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.meet[a][self.meet[b][c]] != self.meet[self.meet[a][b]][c] {
                        return Err(Error::invalid(format!(
                            "meet not associative at ({}, {}, {})",
                            id(a),
                            id(b),
                            id(c)
                        )));
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                if self.meet[a][b] == a && self.elems[a].dim > self.elems[b].dim {
                    return Err(Error::invalid(format!(
                        "dimension not monotone: {} <= {} but dim {} > dim {}",
                        id(a),
                        id(b),
                        self.elems[a].dim,
                        self.elems[b].dim
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    /// Elements in deterministic (lexicographic id) order.
    pub fn elements(&self) -> &[SubspaceId] {
        &self.elems
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn idx(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn element(&self, id: &str) -> Result<&SubspaceId> {
        Ok(&self.elems[self.idx(id)?])
    }

    pub fn meet(&self, a: &str, b: &str) -> Result<&SubspaceId> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        Ok(&self.elems[self.meet[i][j]])
    }

    /// `a <= b` in the derived order.
    pub fn leq(&self, a: &str, b: &str) -> Result<bool> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        Ok(self.meet[i][j] == i)
    }

    pub fn least(&self) -> &SubspaceId {
        &self.elems[self.least]
    }

    /// The largest element, when one exists (every element below it).
    pub fn top(&self) -> Option<&SubspaceId> {
        'outer: for i in 0..self.elems.len() {
            for j in 0..self.elems.len() {
                if self.meet[i][j] != j {
                    continue 'outer;
                }
            }
            return Some(&self.elems[i]);
        }
        None
    }

    /// Minimal elements strictly above the least element, in id order.
    pub fn atoms(&self) -> Vec<&SubspaceId> {
        let mut out = Vec::new();
        'cand: for a in 0..self.elems.len() {
            if a == self.least {
                continue;
            }
            for b in 0..self.elems.len() {
                if b != a && b != self.least && self.meet[b][a] == b {
                    // least < b < a
                    continue 'cand;
                }
            }
            out.push(&self.elems[a]);
        }
        out
    }

    /// Minimal elements strictly above `x`; equals the atoms of the
    /// quotient by `x` pulled back.
    pub fn covers(&self, x: &str) -> Result<Vec<&SubspaceId>> {
        let xi = self.idx(x)?;
        let above: Vec<usize> = (0..self.elems.len())
            .filter(|&i| i != xi && self.meet[xi][i] == xi)
            .collect();
        let mut out = Vec::new();
        'cand: for &a in &above {
            for &b in &above {
                if b != a && self.meet[b][a] == b {
                    continue 'cand;
                }
            }
            out.push(&self.elems[a]);
        }
        Ok(out)
    }

    fn restriction(&self, keep: Vec<usize>) -> Result<Semilattice> {
        let elements: Vec<(String, usize)> = keep
            .iter()
            .map(|&i| (self.elems[i].id.clone(), self.elems[i].dim))
            .collect();
        let table: Vec<Vec<String>> = keep
            .iter()
            .map(|&i| {
                keep.iter()
                    .map(|&j| self.elems[self.meet[i][j]].id.clone())
                    .collect()
            })
            .collect();
        Semilattice::new(elements, table)
    }

    /// The sub-semilattice `{ t | t >= x }`, with `x` as its least element.
    pub fn filter_geq(&self, x: &str) -> Result<Semilattice> {
        let xi = self.idx(x)?;
        let keep: Vec<usize> = (0..self.elems.len())
            .filter(|&i| self.meet[xi][i] == xi)
            .collect();
        self.restriction(keep)
    }

    /// The ideal `{ t | t <= x }`.
    pub fn ideal_leq(&self, x: &str) -> Result<Semilattice> {
        let xi = self.idx(x)?;
        let keep: Vec<usize> = (0..self.elems.len())
            .filter(|&i| self.meet[xi][i] == i)
            .collect();
        self.restriction(keep)
    }

    /// The quotient semilattice `{ E/x | E >= x }` with subtracted
    /// dimensions. Order-isomorphic to [`Semilattice::filter_geq`]; the
    /// class of `x` is relabeled `O`, the others `E/x`.
    pub fn quotient(&self, x: &str) -> Result<Semilattice> {
        let xi = self.idx(x)?;
        let xdim = self.elems[xi].dim;
        let keep: Vec<usize> = (0..self.elems.len())
            .filter(|&i| self.meet[xi][i] == xi)
            .collect();
        let label = |i: usize| {
            if i == xi {
                "O".to_string()
            } else {
                format!("{}/{}", self.elems[i].id, self.elems[xi].id)
            }
        };
        let elements: Vec<(String, usize)> = keep
            .iter()
            .map(|&i| (label(i), self.elems[i].dim - xdim))
            .collect();
        let table: Vec<Vec<String>> = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| label(self.meet[i][j])).collect())
            .collect();
        Semilattice::new(elements, table)
    }

    /// Restriction keeping the same ids but with dimensions reduced by
    /// `dim_drop`. Used for quotient models where the original labels must
    /// survive (the quotient is order-isomorphic to the filter).
    pub(crate) fn filter_geq_reduced(&self, x: &str) -> Result<Semilattice> {
        let xi = self.idx(x)?;
        let xdim = self.elems[xi].dim;
        let keep: Vec<usize> = (0..self.elems.len())
            .filter(|&i| self.meet[xi][i] == xi)
            .collect();
        let elements: Vec<(String, usize)> = keep
            .iter()
            .map(|&i| (self.elems[i].id.clone(), self.elems[i].dim - xdim))
            .collect();
        let table: Vec<Vec<String>> = keep
            .iter()
            .map(|&i| {
                keep.iter()
                    .map(|&j| self.elems[self.meet[i][j]].id.clone())
                    .collect()
            })
            .collect();
        Semilattice::new(elements, table)
    }

    /// Elements strictly above the least element, in id order.
    pub fn strictly_positive(&self) -> Vec<&SubspaceId> {
        (0..self.elems.len())
            .filter(|&i| i != self.least)
            .map(|i| &self.elems[i])
            .collect()
    }
}
