use std::collections::VecDeque;

use super::FingerprintError;
use crate::chem::BondOrder;

/// Largest pattern the matcher accepts.
pub const MAX_PATTERN_ATOMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomPrimitive {
    Any,
    AtomicNumber(u8),
    Aromatic,
    Aliphatic,
    InRing,
    /// Member of a basis ring of exactly this size.
    RingSize(u8),
    /// Exact number of heavy-atom neighbors.
    Degree(u8),
    MinDegree(u8),
    /// Implicit plus explicit hydrogens.
    TotalH(u8),
    Charge(i8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtomQuery {
    Prim(AtomPrimitive),
    Not(Box<AtomQuery>),
    And(Vec<AtomQuery>),
    Or(Vec<AtomQuery>),
}

impl AtomQuery {
    pub fn any() -> Self {
        AtomQuery::Prim(AtomPrimitive::Any)
    }

    pub fn element(z: u8) -> Self {
        AtomQuery::Prim(AtomPrimitive::AtomicNumber(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondPrimitive {
    Any,
    Order(BondOrder),
    Ring,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BondQuery {
    Prim(BondPrimitive),
    Not(Box<BondQuery>),
    And(Vec<BondQuery>),
    Or(Vec<BondQuery>),
}

impl BondQuery {
    /// Unmarked bond: single or aromatic.
    pub fn implicit() -> Self {
        BondQuery::Or(vec![
            BondQuery::Prim(BondPrimitive::Order(BondOrder::Single)),
            BondQuery::Prim(BondPrimitive::Order(BondOrder::Aromatic)),
        ])
    }

    pub fn any() -> Self {
        BondQuery::Prim(BondPrimitive::Any)
    }

    pub fn order(order: BondOrder) -> Self {
        BondQuery::Prim(BondPrimitive::Order(order))
    }

    pub(crate) fn matches(&self, order: BondOrder, in_ring: bool) -> bool {
        match self {
            BondQuery::Prim(BondPrimitive::Any) => true,
            BondQuery::Prim(BondPrimitive::Order(o)) => *o == order,
            BondQuery::Prim(BondPrimitive::Ring) => in_ring,
            BondQuery::Not(q) => !q.matches(order, in_ring),
            BondQuery::And(qs) => qs.iter().all(|q| q.matches(order, in_ring)),
            BondQuery::Or(qs) => qs.iter().any(|q| q.matches(order, in_ring)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternBond {
    pub i: usize,
    pub j: usize,
    pub query: BondQuery,
}

/// A small connected query graph plus the number of distinct matches needed
/// for its key to fire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentPattern {
    atoms: Vec<AtomQuery>,
    bonds: Vec<PatternBond>,
    count_threshold: usize,
    /// Pattern atoms in search order; each entry after the first is bonded
    /// to an earlier one.
    pub(crate) order: Vec<usize>,
    /// For each position in `order` past the first: index into `order` of a
    /// bonded predecessor.
    pub(crate) parent: Vec<usize>,
    pub(crate) adjacency: Vec<Vec<(usize, usize)>>,
}

impl FragmentPattern {
    pub fn new(
        atoms: Vec<AtomQuery>,
        bonds: Vec<PatternBond>,
        count_threshold: usize,
    ) -> Result<Self, FingerprintError> {
        let n = atoms.len();
        if n == 0 {
            return Err(FingerprintError::InvalidPattern("pattern has no atoms".into()));
        }
        if n > MAX_PATTERN_ATOMS {
            return Err(FingerprintError::PatternTooLarge {
                atoms: n,
                max: MAX_PATTERN_ATOMS,
            });
        }
        let mut adjacency = vec![Vec::new(); n];
        for (bi, b) in bonds.iter().enumerate() {
            if b.i >= n || b.j >= n || b.i == b.j {
                return Err(FingerprintError::InvalidPattern(format!(
                    "bad bond endpoints ({}, {})",
                    b.i, b.j
                )));
            }
            if adjacency[b.i].iter().any(|&(o, _)| o == b.j) {
                return Err(FingerprintError::InvalidPattern(format!(
                    "duplicate bond ({}, {})",
                    b.i, b.j
                )));
            }
            adjacency[b.i].push((b.j, bi));
            adjacency[b.j].push((b.i, bi));
        }

        let mut pos = vec![usize::MAX; n];
        let mut order = vec![0];
        let mut parent = vec![0];
        pos[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &adjacency[v] {
                if pos[w] == usize::MAX {
                    pos[w] = order.len();
                    order.push(w);
                    parent.push(pos[v]);
                    queue.push_back(w);
                }
            }
        }
        if order.len() != n {
            return Err(FingerprintError::InvalidPattern("pattern graph is disconnected".into()));
        }
        Ok(Self {
            atoms,
            bonds,
            count_threshold,
            order,
            parent,
            adjacency,
        })
    }

    pub fn atoms(&self) -> &[AtomQuery] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[PatternBond] {
        &self.bonds
    }

    /// Minimum number of distinct matches for the key to fire.
    pub fn count_threshold(&self) -> usize {
        self.count_threshold
    }

    pub fn with_threshold(mut self, count_threshold: usize) -> Self {
        self.count_threshold = count_threshold;
        self
    }

    pub(crate) fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(i: usize, j: usize) -> PatternBond {
        PatternBond { i, j, query: BondQuery::implicit() }
    }

    #[test]
    fn rejects_bad_shapes() {
        let nine = vec![AtomQuery::any(); 9];
        let chain: Vec<_> = (0..8).map(|i| single(i, i + 1)).collect();
        assert!(matches!(
            FragmentPattern::new(nine, chain, 1),
            Err(FingerprintError::PatternTooLarge { atoms: 9, max: 8 })
        ));
        assert!(FragmentPattern::new(vec![AtomQuery::any(); 2], vec![], 1).is_err());
        assert!(FragmentPattern::new(vec![], vec![], 1).is_err());
        assert!(FragmentPattern::new(vec![AtomQuery::any(); 2], vec![single(0, 1), single(1, 0)], 1).is_err());
    }

    #[test]
    fn search_order_is_connected() {
        let p = FragmentPattern::new(vec![AtomQuery::any(); 4], vec![single(2, 3), single(0, 2), single(1, 3)], 1).unwrap();
        assert_eq!(p.order, vec![0, 2, 3, 1]);
        assert_eq!(p.parent, vec![0, 0, 1, 2]);
    }
}
