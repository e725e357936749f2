use std::fmt::Write as _;

use super::{Atom, BondOrder, Molecule};

/// Serialize `mol` by depth-first traversal from the lowest atom index of each
/// component, visiting neighbors in ascending index order.
pub fn write_smiles(mol: &Molecule) -> String {
    write_smiles_with_order(mol).0
}

/// Like [`write_smiles`], also returning the output order: entry `k` is the
/// original index of the `k`-th atom written.
pub fn write_smiles_with_order(mol: &Molecule) -> (String, Vec<usize>) {
    let n = mol.atoms.len();
    let mut visited = vec![false; n];
    let mut tree_bond = vec![false; mol.bonds.len()];
    let mut order = Vec::with_capacity(n);

    // first pass fixes the spanning forest so ring closures are known up front
    let mut roots = Vec::new();
    for root in 0..n {
        if visited[root] {
            continue;
        }
        roots.push(root);
        mark_tree(mol, root, &mut visited, &mut tree_bond);
    }

    let mut out = String::new();
    let mut emitted = vec![false; n];
    let mut open: Vec<Option<usize>> = vec![None; mol.bonds.len()];
    let mut digits_in_use = [false; 100];
    for (i, &root) in roots.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        let mut ctx = Ctx {
            mol,
            tree_bond: &tree_bond,
            emitted: &mut emitted,
            open: &mut open,
            digits_in_use: &mut digits_in_use,
            out: &mut out,
            order: &mut order,
        };
        ctx.emit(root, None);
    }
    (out, order)
}

fn mark_tree(mol: &Molecule, v: usize, visited: &mut [bool], tree_bond: &mut [bool]) {
    visited[v] = true;
    for &(w, bi) in &mol.adjacency[v] {
        if !visited[w] {
            tree_bond[bi] = true;
            mark_tree(mol, w, visited, tree_bond);
        }
    }
}

struct Ctx<'a> {
    mol: &'a Molecule,
    tree_bond: &'a [bool],
    emitted: &'a mut [bool],
    open: &'a mut [Option<usize>],
    digits_in_use: &'a mut [bool; 100],
    out: &'a mut String,
    order: &'a mut Vec<usize>,
}

impl Ctx<'_> {
    fn emit(&mut self, v: usize, via: Option<usize>) {
        if let Some(bi) = via {
            self.out.push_str(bond_symbol(self.mol, bi));
        }
        self.emitted[v] = true;
        self.order.push(v);
        write_atom(self.out, &self.mol.atoms[v]);

        for &(w, bi) in &self.mol.adjacency[v] {
            if self.tree_bond[bi] {
                continue;
            }
            if let Some(d) = self.open[bi].take() {
                self.digits_in_use[d] = false;
                write_digit(self.out, d);
            } else if !self.emitted[w] {
                let d = (1..100).find(|&d| !self.digits_in_use[d]).expect("ring label space exhausted");
                self.digits_in_use[d] = true;
                self.open[bi] = Some(d);
                self.out.push_str(bond_symbol(self.mol, bi));
                write_digit(self.out, d);
            }
        }

        let children: Vec<(usize, usize)> = self.mol.adjacency[v]
            .iter()
            .copied()
            .filter(|&(w, bi)| self.tree_bond[bi] && !self.emitted[w] && Some(bi) != via)
            .collect();
        for (k, &(w, bi)) in children.iter().enumerate() {
            if k + 1 < children.len() {
                self.out.push('(');
                self.emit(w, Some(bi));
                self.out.push(')');
            } else {
                self.emit(w, Some(bi));
            }
        }
    }
}

fn write_digit(out: &mut String, d: usize) {
    if d < 10 {
        let _ = write!(out, "{d}");
    } else {
        let _ = write!(out, "%{d:02}");
    }
}

fn bond_symbol(mol: &Molecule, bi: usize) -> &'static str {
    let bond = &mol.bonds[bi];
    let both_aromatic = mol.atoms[bond.a].aromatic && mol.atoms[bond.b].aromatic;
    match bond.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic && bond.in_ring => "",
        BondOrder::Aromatic => ":",
    }
}

fn write_atom(out: &mut String, atom: &Atom) {
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    let bare = atom.element.is_organic_subset()
        && atom.explicit_h_count.is_none()
        && atom.formal_charge == 0
        && atom.isotope.is_none();
    if bare {
        out.push_str(&symbol);
        return;
    }
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    out.push_str(&symbol);
    match atom.explicit_h_count.unwrap_or(0) {
        0 => {}
        1 => out.push('H'),
        h => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
}
