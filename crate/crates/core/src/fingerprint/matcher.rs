use std::collections::HashSet;

use super::pattern::{AtomPrimitive, AtomQuery, FragmentPattern};
use crate::chem::{BondOrder, Element, Molecule};

#[derive(Debug, Clone)]
pub(crate) struct TargetAtom {
    pub atomic_number: u8,
    pub aromatic: bool,
    pub in_ring: bool,
    pub ring_sizes: Vec<usize>,
    pub total_h: u8,
    pub charge: i8,
}

#[derive(Debug, Clone)]
pub(crate) struct TargetBond {
    pub order: BondOrder,
    pub in_ring: bool,
}

/// Hydrogen-suppressed view of a molecule prepared for substructure search.
///
/// Explicit `[H]` atoms attached to a heavy atom are folded into that atom's
/// hydrogen count, so `[H]OC` and `OC` look identical to the matcher.
#[derive(Debug, Clone)]
pub struct MatchTarget {
    pub(crate) atoms: Vec<TargetAtom>,
    pub(crate) bonds: Vec<TargetBond>,
    pub(crate) adjacency: Vec<Vec<(usize, usize)>>,
    pub(crate) ring_bonds: Vec<Vec<usize>>,
    pub(crate) component_count: usize,
}

impl MatchTarget {
    pub fn new(mol: &Molecule) -> Self {
        let src = mol.atoms();
        let foldable = |i: usize| {
            let a = &src[i];
            a.element == Element::H
                && a.isotope.is_none()
                && a.formal_charge == 0
                && mol.degree(i) == 1
                && src[mol.neighbors(i)[0].0].element != Element::H
        };
        let mut map = vec![usize::MAX; src.len()];
        let mut atoms = Vec::new();
        for (i, a) in src.iter().enumerate() {
            if foldable(i) {
                continue;
            }
            map[i] = atoms.len();
            let folded = mol.neighbors(i).iter().filter(|&&(n, _)| foldable(n)).count() as u8;
            atoms.push(TargetAtom {
                atomic_number: a.element.atomic_number(),
                aromatic: a.aromatic,
                in_ring: a.in_ring,
                ring_sizes: Vec::new(),
                total_h: a.total_h_count() + folded,
                charge: a.formal_charge,
            });
        }
        let mut bonds = Vec::new();
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for b in mol.bonds() {
            let (x, y) = (map[b.a], map[b.b]);
            if x == usize::MAX || y == usize::MAX {
                continue;
            }
            adjacency[x].push((y, bonds.len()));
            adjacency[y].push((x, bonds.len()));
            bonds.push(TargetBond { order: b.order, in_ring: b.in_ring });
        }
        let rings: Vec<Vec<usize>> = mol.rings().iter().map(|r| r.iter().map(|&a| map[a]).collect()).collect();
        let ring_bonds = rings
            .iter()
            .map(|r| {
                (0..r.len())
                    .map(|k| {
                        let (a, b) = (r[k], r[(k + 1) % r.len()]);
                        adjacency[a].iter().find(|(n, _)| *n == b).map(|(_, bi)| *bi).expect("ring edge")
                    })
                    .collect()
            })
            .collect();
        for r in &rings {
            for &a in r {
                atoms[a].ring_sizes.push(r.len());
            }
        }
        for a in &mut atoms {
            a.ring_sizes.sort_unstable();
            a.ring_sizes.dedup();
        }
        Self {
            atoms,
            bonds,
            adjacency,
            ring_bonds,
            component_count: mol.component_count(),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Whether atom `i` satisfies `q`.
    pub fn atom_matches(&self, q: &AtomQuery, i: usize) -> bool {
        let a = &self.atoms[i];
        match q {
            AtomQuery::Prim(p) => match *p {
                AtomPrimitive::Any => true,
                AtomPrimitive::AtomicNumber(z) => a.atomic_number == z,
                AtomPrimitive::Aromatic => a.aromatic,
                AtomPrimitive::Aliphatic => !a.aromatic,
                AtomPrimitive::InRing => a.in_ring,
                AtomPrimitive::RingSize(s) => a.ring_sizes.contains(&(s as usize)),
                AtomPrimitive::Degree(d) => self.adjacency[i].len() == d as usize,
                AtomPrimitive::MinDegree(d) => self.adjacency[i].len() >= d as usize,
                AtomPrimitive::TotalH(h) => a.total_h == h,
                AtomPrimitive::Charge(c) => a.charge == c,
            },
            AtomQuery::Not(q) => !self.atom_matches(q, i),
            AtomQuery::And(qs) => qs.iter().all(|q| self.atom_matches(q, i)),
            AtomQuery::Or(qs) => qs.iter().any(|q| self.atom_matches(q, i)),
        }
    }

    fn bond_between(&self, a: usize, b: usize) -> Option<&TargetBond> {
        self.adjacency[a].iter().find(|(n, _)| *n == b).map(|(_, bi)| &self.bonds[*bi])
    }
}

/// Number of distinct target atom sets onto which `pat` embeds.
pub fn match_fragment(mol: &Molecule, pat: &FragmentPattern) -> usize {
    count_matches(&MatchTarget::new(mol), pat, None)
}

/// Count distinct embedded atom sets, stopping early once `limit` is reached.
pub(crate) fn count_matches(target: &MatchTarget, pat: &FragmentPattern, limit: Option<usize>) -> usize {
    let mut search = Search::new(target, pat);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for root in 0..target.atoms.len() {
        search.run_from(root, &mut |mapping| {
            let mut set = mapping.to_vec();
            set.sort_unstable();
            seen.insert(set);
            limit.is_some_and(|l| seen.len() >= l)
        });
        if limit.is_some_and(|l| seen.len() >= l) {
            break;
        }
    }
    seen.len()
}

/// Whether some embedding of `pat` puts its first atom on `root`.
pub(crate) fn matches_at(target: &MatchTarget, pat: &FragmentPattern, root: usize) -> bool {
    let mut found = false;
    Search::new(target, pat).run_from(root, &mut |_| {
        found = true;
        true
    });
    found
}

struct Search<'a> {
    target: &'a MatchTarget,
    pat: &'a FragmentPattern,
    /// Target atom per search position.
    mapped: Vec<usize>,
    used: Vec<bool>,
}

impl<'a> Search<'a> {
    fn new(target: &'a MatchTarget, pat: &'a FragmentPattern) -> Self {
        Self {
            target,
            pat,
            mapped: Vec::with_capacity(pat.atoms().len()),
            used: vec![false; target.atoms.len()],
        }
    }

    /// Enumerate embeddings with search position 0 on `root`. `visit` gets
    /// the target atoms indexed by pattern atom and returns true to stop.
    fn run_from(&mut self, root: usize, visit: &mut dyn FnMut(&[usize]) -> bool) {
        if self.feasible(0, root) {
            self.push(root);
            self.extend(visit);
            self.pop();
        }
    }

    fn push(&mut self, t: usize) {
        self.used[t] = true;
        self.mapped.push(t);
    }

    fn pop(&mut self) {
        if let Some(t) = self.mapped.pop() {
            self.used[t] = false;
        }
    }

    fn feasible(&self, pos: usize, t: usize) -> bool {
        let p = self.pat.order[pos];
        if self.used[t] || self.target.adjacency[t].len() < self.pat.degree(p) {
            return false;
        }
        if !self.target.atom_matches(&self.pat.atoms()[p], t) {
            return false;
        }
        // every pattern bond back to an already-placed atom must exist
        for &(q, bi) in &self.pat.adjacency[p] {
            let Some(qpos) = self.pat.order[..pos].iter().position(|&x| x == q) else {
                continue;
            };
            match self.target.bond_between(t, self.mapped[qpos]) {
                Some(b) if self.pat.bonds()[bi].query.matches(b.order, b.in_ring) => {}
                _ => return false,
            }
        }
        true
    }

    fn extend(&mut self, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        let pos = self.mapped.len();
        if pos == self.pat.order.len() {
            let mut by_atom = vec![0; pos];
            for (k, &p) in self.pat.order.iter().enumerate() {
                by_atom[p] = self.mapped[k];
            }
            return visit(&by_atom);
        }
        let anchor = self.mapped[self.pat.parent[pos]];
        for i in 0..self.target.adjacency[anchor].len() {
            let t = self.target.adjacency[anchor][i].0;
            if self.feasible(pos, t) {
                self.push(t);
                let stop = self.extend(visit);
                self.pop();
                if stop {
                    return true;
                }
            }
        }
        false
    }
}
