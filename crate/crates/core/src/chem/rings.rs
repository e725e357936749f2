//! Ring perception: minimum cycle basis (SSSR) via Horton candidates and
//! GF(2) elimination.

use std::collections::{HashSet, VecDeque};

use super::Molecule;

/// Recompute the ring basis and ring-membership flags of `mol`.
pub fn perceive_rings(mut mol: Molecule) -> Molecule {
    assign_rings(&mut mol);
    mol
}

pub(crate) fn assign_rings(mol: &mut Molecule) {
    for atom in &mut mol.atoms {
        atom.in_ring = false;
    }
    for bond in &mut mol.bonds {
        bond.in_ring = false;
    }
    mol.rings = smallest_rings(mol);
    for ring in &mol.rings {
        for (i, &a) in ring.iter().enumerate() {
            let b = ring[(i + 1) % ring.len()];
            mol.atoms[a].in_ring = true;
            let bi = mol.adjacency[a]
                .iter()
                .find(|(n, _)| *n == b)
                .map(|(_, bi)| *bi)
                .expect("ring edge must be a bond");
            mol.bonds[bi].in_ring = true;
        }
    }
}

struct Candidate {
    atoms_sorted: Vec<usize>,
    cycle: Vec<usize>,
    edges: Vec<u64>,
}

fn smallest_rings(mol: &Molecule) -> Vec<Vec<usize>> {
    let n = mol.atoms.len();
    let e = mol.bonds.len();
    let rank = (e + mol.component_count).saturating_sub(n);
    if rank == 0 {
        return Vec::new();
    }
    let words = e.div_ceil(64);
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut candidates: Vec<Candidate> = Vec::new();

    for root in 0..n {
        let (parent, depth) = bfs_tree(mol, root);
        for (bi, bond) in mol.bonds.iter().enumerate() {
            let (x, y) = (bond.a, bond.b);
            if depth[x] == usize::MAX || depth[y] == usize::MAX {
                continue;
            }
            if parent[x].map(|(p, _)| p) == Some(y) || parent[y].map(|(p, _)| p) == Some(x) {
                continue;
            }
            let px = path_to_root(&parent, x);
            let py = path_to_root(&parent, y);
            // paths must share only the root
            let set_x: HashSet<usize> = px.iter().copied().collect();
            if py.iter().filter(|v| set_x.contains(v)).count() != 1 {
                continue;
            }
            let mut edges = vec![0u64; words];
            edges[bi / 64] |= 1 << (bi % 64);
            for path in [&px, &py] {
                for &v in path.iter() {
                    if let Some((_, pb)) = parent[v] {
                        edges[pb / 64] |= 1 << (pb % 64);
                    }
                }
            }
            if !seen.insert(edges.clone()) {
                continue;
            }
            // cycle: root .. x, y .. root
            let mut cycle: Vec<usize> = px.iter().rev().copied().collect();
            cycle.extend(py.iter().copied().take(py.len() - 1));
            let mut atoms_sorted = cycle.clone();
            atoms_sorted.sort_unstable();
            candidates.push(Candidate { atoms_sorted, cycle, edges });
        }
    }

    candidates.sort_by(|a, b| {
        a.cycle
            .len()
            .cmp(&b.cycle.len())
            .then_with(|| a.atoms_sorted.cmp(&b.atoms_sorted))
    });

    // incremental GF(2) elimination keyed by pivot bit
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut rings = Vec::new();
    for cand in candidates {
        let mut v = cand.edges.clone();
        for (pivot, row) in &basis {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (a, b) in v.iter_mut().zip(row) {
                    *a ^= b;
                }
            }
        }
        let Some(pivot) = lowest_bit(&v) else {
            continue;
        };
        // keep rows reduced so later candidates see consistent pivots
        for (_, row) in basis.iter_mut() {
            if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (a, b) in row.iter_mut().zip(&v) {
                    *a ^= b;
                }
            }
        }
        basis.push((pivot, v));
        rings.push(normalize_cycle(cand.cycle));
        if rings.len() == rank {
            break;
        }
    }
    rings
}

fn lowest_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

fn bfs_tree(mol: &Molecule, root: usize) -> (Vec<Option<(usize, usize)>>, Vec<usize>) {
    let n = mol.atoms.len();
    let mut parent = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &(w, bi) in &mol.adjacency[v] {
            if depth[w] == usize::MAX {
                depth[w] = depth[v] + 1;
                parent[w] = Some((v, bi));
                queue.push_back(w);
            }
        }
    }
    (parent, depth)
}

/// Vertices from `v` up to and including the BFS root.
fn path_to_root(parent: &[Option<(usize, usize)>], mut v: usize) -> Vec<usize> {
    let mut path = vec![v];
    while let Some((p, _)) = parent[v] {
        path.push(p);
        v = p;
    }
    path
}

/// Rotate so the lowest atom comes first, then walk toward its lower neighbor.
fn normalize_cycle(cycle: Vec<usize>) -> Vec<usize> {
    let len = cycle.len();
    let start = (0..len).min_by_key(|&i| cycle[i]).unwrap_or(0);
    let next = cycle[(start + 1) % len];
    let prev = cycle[(start + len - 1) % len];
    if next <= prev {
        (0..len).map(|k| cycle[(start + k) % len]).collect()
    } else {
        (0..len).map(|k| cycle[(start + len - k) % len]).collect()
    }
}

#[cfg(test)]
mod tests {
    use crate::chem::parse_smiles;

    #[test]
    fn acyclic_has_no_rings() {
        let m = parse_smiles("CCO").unwrap();
        assert!(m.rings().is_empty());
        assert!(m.bonds().iter().all(|b| !b.in_ring));
    }

    #[test]
    fn cyclopropane() {
        let m = parse_smiles("C1CC1").unwrap();
        assert_eq!(m.rings(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn bicyclo_octane() {
        let m = parse_smiles("C1CC2CCC1CC2").unwrap();
        assert_eq!(m.rings().len(), 2);
        assert_eq!(m.bonds().iter().filter(|b| b.in_ring).count(), 9);
        assert!(m.rings().iter().all(|r| r.len() == 6));
        // lowest-index tie-break: both rings through atom 0 win over the 2..7 ring
        assert_eq!(m.rings()[0], vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(m.rings()[1], vec![0, 1, 2, 7, 6, 5]);
    }

    #[test]
    fn naphthalene_two_six_rings() {
        let m = parse_smiles("c1ccc2ccccc2c1").unwrap();
        let mut sizes: Vec<usize> = m.rings().iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![6, 6]);
        assert_eq!(m.atom_ring_sizes(3), vec![6, 6]);
        assert_eq!(m.atom_ring_sizes(0), vec![6]);
    }

    #[test]
    fn spiro_and_chain_substituent() {
        let m = parse_smiles("C1CCC2(CC1)CCC2CCO").unwrap();
        let mut sizes: Vec<usize> = m.rings().iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![4, 6]);
        let ring_bonds = m.bonds().iter().filter(|b| b.in_ring).count();
        assert_eq!(ring_bonds, 10);
        assert!(!m.atoms()[m.atoms().len() - 1].in_ring);
    }

    #[test]
    fn cubane_has_five_basis_rings() {
        let m = parse_smiles("C12C3C4C1C5C2C3C45").unwrap();
        assert_eq!(m.rings().len(), 5);
        assert!(m.rings().iter().all(|r| r.len() == 4));
        assert!(m.bonds().iter().all(|b| b.in_ring));
    }
}
