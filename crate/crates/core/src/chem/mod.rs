//! Molecular graphs parsed from SMILES.
//!
//! A [`Molecule`] is immutable once built: the parser fills atoms and bonds,
//! then ring perception marks ring membership and stores a smallest set of
//! smallest rings. Multi-component inputs (salts, `.`-separated SMILES) stay
//! in a single molecule with a component index per atom.

mod element;
mod rings;
mod smiles;
mod writer;

pub use element::Element;
pub use rings::perceive_rings;
pub use smiles::{parse_smiles, SmilesError};
pub use writer::{write_smiles, write_smiles_with_order};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer contribution to an atom's valence; aromatic bonds count as one.
    pub(crate) fn valence_units(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub index: usize,
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    pub explicit_h_count: Option<u8>,
    /// Hydrogens added from standard valences (organic-subset atoms only).
    pub implicit_h_count: u8,
    pub isotope: Option<u16>,
    pub in_ring: bool,
    pub component: usize,
}

impl Atom {
    pub fn total_h_count(&self) -> u8 {
        self.explicit_h_count.unwrap_or(0) + self.implicit_h_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    /// Lower atom index.
    pub a: usize,
    /// Higher atom index.
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone)]
pub struct Molecule {
    pub(crate) atoms: Vec<Atom>,
    pub(crate) bonds: Vec<Bond>,
    pub(crate) rings: Vec<Vec<usize>>,
    pub(crate) source: String,
    pub(crate) component_count: usize,
    pub(crate) warnings: Vec<String>,
    /// Per atom: (neighbor, bond index), sorted by neighbor.
    pub(crate) adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Smallest set of smallest rings; each ring is a cyclic atom sequence
    /// starting at its lowest atom index.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn is_multi_component(&self) -> bool {
        self.component_count > 1
    }

    /// Non-fatal notes from parsing, e.g. ignored stereo markers.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, bi)| &self.bonds[*bi])
    }

    /// Sizes of the basis rings containing `atom`, ascending.
    pub fn atom_ring_sizes(&self, atom: usize) -> Vec<usize> {
        let mut sizes: Vec<usize> = self
            .rings
            .iter()
            .filter(|r| r.contains(&atom))
            .map(Vec::len)
            .collect();
        sizes.sort_unstable();
        sizes
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.element != Element::H).count()
    }

    pub(crate) fn build_adjacency(atom_count: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
        let mut adjacency = vec![Vec::new(); atom_count];
        for (i, bond) in bonds.iter().enumerate() {
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        adjacency
    }
}

/// Structural equality ignoring the source text and warnings.
impl PartialEq for Molecule {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms
            && self.bonds == other.bonds
            && self.rings == other.rings
            && self.component_count == other.component_count
    }
}
