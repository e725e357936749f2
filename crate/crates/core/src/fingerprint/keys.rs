use std::sync::OnceLock;

use super::matcher::{count_matches, matches_at, MatchTarget};
use super::pattern::FragmentPattern;
use super::smarts::compile_smarts;
use super::{Fingerprint, FINGERPRINT_BITS};
use crate::chem::{BondOrder, Molecule};

/// Whole-molecule tests that are awkward or impossible as small fragments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalPredicate {
    /// Some simple cycle has a length in `min..=max`.
    CycleLengthInRange { min: usize, max: usize },
    /// More than `min` basis rings consist only of aromatic bonds.
    AromaticRingsAbove { min: usize },
    /// More than one disconnected fragment.
    MultipleComponents,
}

#[derive(Debug, Clone)]
pub enum KeyDef {
    Fragment(FragmentPattern),
    /// Counts atoms that anchor the first atom of any alternative; fires at
    /// `count_threshold` such atoms.
    Rooted {
        alternatives: Vec<FragmentPattern>,
        count_threshold: usize,
    },
    Global(GlobalPredicate),
    Unimplemented,
}

/// The 166 structural key definitions; entry `i` drives bit `i`.
#[derive(Debug, Clone)]
pub struct KeyTable {
    entries: Vec<KeyDef>,
}

enum Src {
    Smarts(&'static str, usize),
    Rooted(&'static [&'static str], usize),
    Global(GlobalPredicate),
    Unimplemented,
}

use Src::{Global, Rooted, Smarts, Unimplemented};

// Key n (1-based) is entry n-1. The count is how many matches must be
// exceeded, so a key fires at count + 1 distinct matches.
const TABLE: [Src; 166] = [
    // 1: isotope flag, never set by the reference implementation either
    Unimplemented,
    Smarts("[#104]", 0),
    Smarts("[#32,#33,#34,#50,#51,#52,#82,#83,#84]", 0),
    Smarts("[Ac,Th,Pa,U,Np,Pu,Am,Cm,Bk,Cf,Es,Fm,Md,No,Lr]", 0),
    Smarts("[Sc,Ti,Y,Zr,Hf]", 0),
    Smarts("[La,Ce,Pr,Nd,Pm,Sm,Eu,Gd,Tb,Dy,Ho,Er,Tm,Yb,Lu]", 0),
    Smarts("[V,Cr,Mn,Nb,Mo,Tc,Ta,W,Re]", 0),
    Smarts("[!#6;!#1]1~*~*~*~1", 0),
    Smarts("[Fe,Co,Ni,Ru,Rh,Pd,Os,Ir,Pt]", 0),
    Smarts("[Be,Mg,Ca,Sr,Ba,Ra]", 0),
    Smarts("*1~*~*~*~1", 0),
    Smarts("[Cu,Zn,Ag,Cd,Au,Hg]", 0),
    Smarts("[#8]~[#7](~[#6])~[#6]", 0),
    Smarts("[#16]-[#16]", 0),
    Smarts("[#8]~[#6](~[#8])~[#8]", 0),
    Smarts("[!#6;!#1]1~*~*~1", 0),
    Smarts("[#6]#[#6]", 0),
    Smarts("[#5,#13,#31,#49,#81]", 0),
    Smarts("*1~*~*~*~*~*~*~1", 0),
    Smarts("[#14]", 0),
    Smarts("[#6]=[#6](~[!#6;!#1])~[!#6;!#1]", 0),
    Smarts("*1~*~*~1", 0),
    Smarts("[#7]~[#6](~[#8])~[#8]", 0),
    Smarts("[#7]-[#8]", 0),
    Smarts("[#7]~[#6](~[#7])~[#7]", 0),
    Smarts("[#6]=;@[#6](@*)@*", 0),
    Smarts("[I]", 0),
    Smarts("[!#6;!#1]~[CH2]~[!#6;!#1]", 0),
    Smarts("[#15]", 0),
    Smarts("[#6]~[!#6;!#1](~[#6])(~[#6])~*", 0),
    Smarts("[!#6;!#1]~[F,Cl,Br,I]", 0),
    Smarts("[#6]~[#16]~[#7]", 0),
    Smarts("[#7]~[#16]", 0),
    Smarts("[CH2]=*", 0),
    Smarts("[Li,Na,K,Rb,Cs,Fr]", 0),
    Smarts("[#16R]", 0),
    Smarts("[#7]~[#6](~[#8])~[#7]", 0),
    Smarts("[#7]~[#6](~[#6])~[#7]", 0),
    Smarts("[#8]~[#16](~[#8])~[#8]", 0),
    Smarts("[#16]-[#8]", 0),
    Smarts("[#6]#[#7]", 0),
    Smarts("F", 0),
    Smarts("[!#6;!#1;!H0]~*~[!#6;!#1;!H0]", 0),
    Smarts("[!#1;!#6;!#7;!#8;!#9;!#14;!#15;!#16;!#17;!#35;!#53]", 0),
    Smarts("[#6]=[#6]~[#7]", 0),
    Smarts("Br", 0),
    Smarts("[#16]~*~[#7]", 0),
    Smarts("[#8]~[!#6;!#1](~[#8])(~[#8])", 0),
    Smarts("[!+0]", 0),
    Smarts("[#6]=[#6](~[#6])~[#6]", 0),
    Smarts("[#6]~[#16]~[#8]", 0),
    Smarts("[#7]~[#7]", 0),
    Smarts("[!#6;!#1;!H0]~*~*~*~[!#6;!#1;!H0]", 0),
    Smarts("[!#6;!#1;!H0]~*~*~[!#6;!#1;!H0]", 0),
    Smarts("[#8]~[#16]~[#8]", 0),
    Smarts("[#8]~[#7](~[#8])~[#6]", 0),
    Smarts("[#8R]", 0),
    Smarts("[!#6;!#1]~[#16]~[!#6;!#1]", 0),
    Smarts("[#16]!:*:*", 0),
    Smarts("[#16]=[#8]", 0),
    Smarts("*~[#16](~*)~*", 0),
    Smarts("*@*!@*@*", 0),
    Smarts("[#7]=[#8]", 0),
    Smarts("*@*!@[#16]", 0),
    Smarts("c:n", 0),
    Smarts("[#6]~[#6](~[#6])(~[#6])~*", 0),
    Smarts("[!#6;!#1]~[#16]", 0),
    Smarts("[!#6;!#1;!H0]~[!#6;!#1;!H0]", 0),
    Smarts("[!#6;!#1]~[!#6;!#1;!H0]", 0),
    Smarts("[!#6;!#1]~[#7]~[!#6;!#1]", 0),
    Smarts("[#7]~[#8]", 0),
    Smarts("[#8]~*~*~[#8]", 0),
    Smarts("[#16]=*", 0),
    Smarts("[CH3]~*~[CH3]", 0),
    Smarts("*!@[#7]@*", 0),
    Smarts("[#6]=[#6](~*)~*", 0),
    Smarts("[#7]~*~[#7]", 0),
    Smarts("[#6]=[#7]", 0),
    Smarts("[#7]~*~*~[#7]", 0),
    Smarts("[#7]~*~*~*~[#7]", 0),
    Smarts("[#16]~*(~*)~*", 0),
    Smarts("*~[CH2]~[!#6;!#1;!H0]", 0),
    Smarts("[!#6;!#1]1~*~*~*~*~1", 0),
    Smarts("[NH2]", 0),
    Smarts("[#6]~[#7](~[#6])~[#6]", 0),
    Smarts("[C;H2,H3][!#6;!#1][C;H2,H3]", 0),
    Smarts("[F,Cl,Br,I]!@*@*", 0),
    Smarts("[#16]", 0),
    Smarts("[#8]~*~*~*~[#8]", 0),
    Rooted(
        &[
            "[!#6;!#1;!H0]~*~*~[CH2]~*",
            "[!#6;!#1;!H0;R]1@[R]@[R]@[CH2;R]1",
            "[!#6;!#1;!H0]~[R]1@[R]@[CH2;R]1",
        ],
        0,
    ),
    Rooted(
        &[
            "[!#6;!#1;!H0]~*~*~*~[CH2]~*",
            "[!#6;!#1;!H0;R]1@[R]@[R]@[R]@[CH2;R]1",
            "[!#6;!#1;!H0]~[R]1@[R]@[R]@[CH2;R]1",
            "[!#6;!#1;!H0]~*~[R]1@[R]@[CH2;R]1",
        ],
        0,
    ),
    Smarts("[#8]~[#6](~[#7])~[#6]", 0),
    Smarts("[!#6;!#1]~[CH3]", 0),
    Smarts("[!#6;!#1]~[#7]", 0),
    Smarts("[#7]~*~*~[#8]", 0),
    Smarts("*1~*~*~*~*~1", 0),
    Smarts("[#7]~*~*~*~[#8]", 0),
    Smarts("[!#6;!#1]1~*~*~*~*~*~1", 0),
    Smarts("[#6]=[#6]", 0),
    Smarts("*~[CH2]~[#7]", 0),
    // 101: ring atoms closing a cycle of 8 to 14 members
    Global(GlobalPredicate::CycleLengthInRange { min: 8, max: 14 }),
    Smarts("[!#6;!#1]~[#8]", 0),
    Smarts("Cl", 0),
    Smarts("[!#6;!#1;!H0]~*~[CH2]~*", 0),
    Smarts("*@*(@*)@*", 0),
    Smarts("[!#6;!#1]~*(~[!#6;!#1])~[!#6;!#1]", 0),
    Smarts("[F,Cl,Br,I]~*(~*)~*", 0),
    Smarts("[CH3]~*~*~*~[CH2]~*", 0),
    Smarts("*~[CH2]~[#8]", 0),
    Smarts("[#7]~[#6]~[#8]", 0),
    Smarts("[#7]~*~[CH2]~*", 0),
    Smarts("*~*(~*)(~*)~*", 0),
    Smarts("[#8]!:*:*", 0),
    Smarts("[CH3]~[CH2]~*", 0),
    Smarts("[CH3]~*~[CH2]~*", 0),
    Rooted(&["[CH3]~*~*~[CH2]~*", "[CH3]~*1~*~[CH2]1"], 0),
    Smarts("[#7]~*~[#8]", 0),
    Rooted(&["*~[CH2]~[CH2]~*", "*1~[CH2]~[CH2]1"], 1),
    Smarts("[#7]=*", 0),
    Smarts("[!#6;R]", 1),
    Smarts("[#7;R]", 0),
    Smarts("*~[#7](~*)~*", 0),
    Smarts("[#8]~[#6]~[#8]", 0),
    Smarts("[!#6;!#1]~[!#6;!#1]", 0),
    // 125: more than one aromatic ring
    Global(GlobalPredicate::AromaticRingsAbove { min: 1 }),
    Smarts("*!@[#8]!@*", 0),
    Smarts("*@*!@[#8]", 1),
    Rooted(
        &[
            "*~[CH2]~*~*~*~[CH2]~*",
            "[R]1@[CH2;R]@[R]@[R]@[R]@[CH2;R]1",
            "*~[CH2]~[R]1@[R]@[R]@[CH2;R]1",
            "*~[CH2]~*~[R]1@[R]@[CH2;R]1",
        ],
        0,
    ),
    Rooted(
        &[
            "*~[CH2]~*~*~[CH2]~*",
            "[R]1@[CH2]@[R]@[R]@[CH2;R]1",
            "*~[CH2]~[R]1@[R]@[CH2;R]1",
        ],
        0,
    ),
    Smarts("[!#6;!#1]~[!#6;!#1]", 1),
    Smarts("[!#6;!#1;!H0]", 1),
    Smarts("[#8]~*~[CH2]~*", 0),
    Smarts("*@*!@[#7]", 0),
    Smarts("[F,Cl,Br,I]", 0),
    Smarts("[#7]!:*:*", 0),
    Smarts("[#8]=*", 1),
    Smarts("[!C;!c;R]", 0),
    Smarts("[!#6;!#1]~[CH2]~*", 1),
    Smarts("[O;!H0]", 0),
    Smarts("[#8]", 3),
    Smarts("[CH3]", 2),
    Smarts("[#7]", 1),
    Smarts("*@*!@[#8]", 0),
    Smarts("*!:*:*!:*", 0),
    Smarts("*1~*~*~*~*~*~1", 1),
    Smarts("[#8]", 2),
    Rooted(&["*~[CH2]~[CH2]~*", "[R]1@[CH2;R]@[CH2;R]1"], 0),
    Smarts("*~[!#6;!#1](~*)~*", 0),
    Smarts("[C;H3,H4]", 1),
    Smarts("*!@*@*!@*", 0),
    Smarts("[#7;!H0]", 0),
    Smarts("[#8]~[#6](~[#6])~[#6]", 0),
    Smarts("[!#6;!#1]~[CH2]~*", 0),
    Smarts("[#6]=[#8]", 0),
    Smarts("*!@[CH2]!@*", 0),
    Smarts("[#7]~*(~*)~*", 0),
    Smarts("[#6]-[#8]", 0),
    Smarts("[#6]-[#7]", 0),
    Smarts("[#8]", 1),
    Smarts("[C;H3,H4]", 0),
    Smarts("[#7]", 0),
    Smarts("a", 0),
    Smarts("*1~*~*~*~*~*~1", 0),
    Smarts("[#8]", 0),
    Smarts("[R]", 0),
    // 166: more than one fragment
    Global(GlobalPredicate::MultipleComponents),
];

impl KeyTable {
    /// The built-in MACCS-style table, compiled once.
    pub fn maccs() -> &'static KeyTable {
        static TABLE_CELL: OnceLock<KeyTable> = OnceLock::new();
        TABLE_CELL.get_or_init(|| {
            let entries = TABLE
                .iter()
                .map(|src| match src {
                    Smarts(s, c) => KeyDef::Fragment(compile_smarts(s, c + 1).expect("built-in key compiles")),
                    Rooted(alts, c) => KeyDef::Rooted {
                        alternatives: alts
                            .iter()
                            .map(|s| compile_smarts(s, 1).expect("built-in key compiles"))
                            .collect(),
                        count_threshold: c + 1,
                    },
                    Global(g) => KeyDef::Global(*g),
                    Unimplemented => KeyDef::Unimplemented,
                })
                .collect();
            KeyTable { entries }
        })
    }

    pub fn entries(&self) -> &[KeyDef] {
        &self.entries
    }

    /// Zero-based bit indices that are never set.
    pub fn unimplemented_bits(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, KeyDef::Unimplemented))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn evaluate(&self, target: &MatchTarget) -> Fingerprint {
        let mut fp = Fingerprint::empty();
        for (bit, entry) in self.entries.iter().enumerate() {
            if fires(entry, target) {
                fp.set(bit).expect("bit within table");
            }
        }
        fp
    }
}

fn fires(entry: &KeyDef, target: &MatchTarget) -> bool {
    match entry {
        KeyDef::Fragment(p) => count_matches(target, p, Some(p.count_threshold())) >= p.count_threshold(),
        KeyDef::Rooted {
            alternatives,
            count_threshold,
        } => {
            let mut roots = 0;
            for atom in 0..target.atom_count() {
                if alternatives.iter().any(|p| matches_at(target, p, atom)) {
                    roots += 1;
                    if roots >= *count_threshold {
                        return true;
                    }
                }
            }
            false
        }
        KeyDef::Global(g) => global_fires(*g, target),
        KeyDef::Unimplemented => false,
    }
}

fn global_fires(g: GlobalPredicate, target: &MatchTarget) -> bool {
    match g {
        GlobalPredicate::MultipleComponents => target.component_count > 1,
        GlobalPredicate::AromaticRingsAbove { min } => {
            target
                .ring_bonds
                .iter()
                .filter(|r| r.iter().all(|&b| target.bonds[b].order == BondOrder::Aromatic))
                .count()
                > min
        }
        GlobalPredicate::CycleLengthInRange { min, max } => has_cycle_in_range(target, min, max),
    }
}

/// Depth-bounded search for a simple cycle through ring bonds whose length
/// lies in `min..=max`. Each cycle is rooted at its lowest atom.
fn has_cycle_in_range(target: &MatchTarget, min: usize, max: usize) -> bool {
    fn walk(t: &MatchTarget, start: usize, v: usize, len: usize, on_path: &mut [bool], min: usize, max: usize) -> bool {
        for &(w, bi) in &t.adjacency[v] {
            if !t.bonds[bi].in_ring {
                continue;
            }
            if w == start && len >= min && len >= 3 {
                return true;
            }
            if w > start && !on_path[w] && len < max {
                on_path[w] = true;
                let found = walk(t, start, w, len + 1, on_path, min, max);
                on_path[w] = false;
                if found {
                    return true;
                }
            }
        }
        false
    }
    let n = target.atom_count();
    let mut on_path = vec![false; n];
    (0..n).any(|s| {
        target.atoms[s].in_ring && {
            on_path[s] = true;
            let found = walk(target, s, s, 1, &mut on_path, min, max);
            on_path[s] = false;
            found
        }
    })
}

/// Structural key fingerprint of `mol`.
pub fn compute_keys(mol: &Molecule) -> Fingerprint {
    let fp = KeyTable::maccs().evaluate(&MatchTarget::new(mol));
    debug_assert!(fp.ones().all(|b| b < FINGERPRINT_BITS));
    fp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn keys(s: &str) -> Vec<usize> {
        compute_keys(&parse_smiles(s).unwrap()).ones().map(|b| b + 1).collect()
    }

    #[test]
    fn table_compiles_with_one_gap() {
        let t = KeyTable::maccs();
        assert_eq!(t.entries().len(), 166);
        assert_eq!(t.unimplemented_bits(), vec![0]);
    }

    #[test]
    fn ethanol() {
        let k = keys("CCO");
        assert!(k.contains(&164), "oxygen key");
        assert!(!k.contains(&165), "ring key");
        assert!(!k.contains(&1));
    }

    #[test]
    fn spelling_does_not_matter() {
        assert_eq!(keys("OCC"), keys("CCO"));
        assert_eq!(keys("c1ccccc1O"), keys("Oc1ccccc1"));
    }

    #[test]
    fn large_ring_and_fragments() {
        assert!(keys("C1CCCCCCC1").contains(&101));
        assert!(!keys("C1CCCCCC1").contains(&101));
        assert!(keys("CC.O").contains(&166));
        assert!(keys("c1ccc2ccccc2c1").contains(&125));
        assert!(!keys("c1ccccc1").contains(&125));
    }
}
