use std::collections::BTreeMap;

use thiserror::Error;

use super::rings::assign_rings;
use super::{Atom, Bond, BondOrder, Element, Molecule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("ring closure {label} opened but never closed")]
    UnclosedRing { label: u16 },
    #[error("unbalanced branch at position {pos}")]
    UnbalancedBranch { pos: usize },
    #[error("unknown element '{symbol}' at position {pos}")]
    UnknownElement { symbol: String, pos: usize },
    #[error("bad charge at position {pos}")]
    BadCharge { pos: usize },
    #[error("unexpected character '{ch}' at position {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("bond at position {pos} has no atom to attach to")]
    DanglingBond { pos: usize },
    #[error("ring closure {label} conflicts with an existing bond or itself")]
    InvalidRingBond { label: u16 },
    #[error("conflicting bond orders on ring closure {label}")]
    RingBondConflict { label: u16 },
    #[error("unterminated bracket atom starting at position {pos}")]
    UnterminatedBracket { pos: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondToken {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `/` or `\`: a single bond with stereo information we drop.
    Directional,
}

impl BondToken {
    fn order(self) -> BondOrder {
        match self {
            BondToken::Single | BondToken::Directional => BondOrder::Single,
            BondToken::Double => BondOrder::Double,
            BondToken::Triple => BondOrder::Triple,
            BondToken::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct PendingBond {
    a: usize,
    b: usize,
    token: Option<BondToken>,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<PendingBond>,
    branch_stack: Vec<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<(BondToken, usize)>,
    open_rings: BTreeMap<u16, (usize, Option<BondToken>)>,
    stereo_seen: bool,
}

/// Parse a SMILES string into a ring-perceived [`Molecule`].
///
/// Stereo markers (`@`, `/`, `\`) are accepted and dropped; a warning is
/// recorded on the molecule. Aromaticity is taken from the notation as-is.
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let mut parser = Parser {
        text: trimmed,
        bytes: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        branch_stack: Vec::new(),
        prev: None,
        pending: None,
        open_rings: BTreeMap::new(),
        stereo_seen: false,
    };
    parser.run()?;
    parser.finish(text)
}

impl<'a> Parser<'a> {
    fn run(&mut self) -> Result<(), SmilesError> {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(SmilesError::UnbalancedBranch { pos: self.pos });
                    };
                    if self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { pos: self.pos });
                    }
                    self.branch_stack.push((prev, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    let Some((anchor, _)) = self.branch_stack.pop() else {
                        return Err(SmilesError::UnbalancedBranch { pos: self.pos });
                    };
                    if let Some((_, p)) = self.pending {
                        return Err(SmilesError::DanglingBond { pos: p });
                    }
                    self.prev = Some(anchor);
                    self.pos += 1;
                }
                b'.' => {
                    if let Some((_, p)) = self.pending {
                        return Err(SmilesError::DanglingBond { pos: p });
                    }
                    if !self.branch_stack.is_empty() {
                        let (_, p) = self.branch_stack[self.branch_stack.len() - 1];
                        return Err(SmilesError::UnbalancedBranch { pos: p });
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { pos: self.pos });
                    }
                    let token = match c {
                        b'-' => BondToken::Single,
                        b'=' => BondToken::Double,
                        b'#' => BondToken::Triple,
                        b':' => BondToken::Aromatic,
                        _ => {
                            self.stereo_seen = true;
                            BondToken::Directional
                        }
                    };
                    self.pending = Some((token, self.pos));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom);
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom);
                }
            }
        }
        if let Some((_, p)) = self.branch_stack.last() {
            return Err(SmilesError::UnbalancedBranch { pos: *p });
        }
        if let Some((_, p)) = self.pending {
            return Err(SmilesError::DanglingBond { pos: p });
        }
        if let Some((label, _)) = self.open_rings.iter().next() {
            return Err(SmilesError::UnclosedRing { label: *label });
        }
        Ok(())
    }

    fn new_atom(&self, element: Element, aromatic: bool) -> Atom {
        Atom {
            index: self.atoms.len(),
            element,
            aromatic,
            formal_charge: 0,
            explicit_h_count: None,
            implicit_h_count: 0,
            isotope: None,
            in_ring: false,
            component: 0,
        }
    }

    fn add_atom(&mut self, atom: Atom) {
        let idx = atom.index;
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let token = self.pending.take().map(|(t, _)| t);
            self.bonds.push(PendingBond { a: prev, b: idx, token });
        }
        self.prev = Some(idx);
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.bytes[self.pos] as char;
        let next = self.bytes.get(self.pos + 1).map(|b| *b as char);
        let (element, aromatic, len) = match (c, next) {
            ('C', Some('l')) => (Element::CL, false, 2),
            ('B', Some('r')) => (Element::BR, false, 2),
            ('B', _) => (Element::B, false, 1),
            ('C', _) => (Element::C, false, 1),
            ('N', _) => (Element::N, false, 1),
            ('O', _) => (Element::O, false, 1),
            ('P', _) => (Element::P, false, 1),
            ('S', _) => (Element::S, false, 1),
            ('F', _) => (Element::F, false, 1),
            ('I', _) => (Element::I, false, 1),
            ('b', _) => (Element::B, true, 1),
            ('c', _) => (Element::C, true, 1),
            ('n', _) => (Element::N, true, 1),
            ('o', _) => (Element::O, true, 1),
            ('p', _) => (Element::P, true, 1),
            ('s', _) => (Element::S, true, 1),
            _ if c.is_ascii_alphabetic() || c == '*' => {
                return Err(SmilesError::UnknownElement { symbol: c.to_string(), pos: start });
            }
            _ => {
                let ch = self.text[start..].chars().next().unwrap_or(c);
                return Err(SmilesError::UnexpectedChar { ch, pos: start });
            }
        };
        self.pos += len;
        Ok(self.new_atom(element, aromatic))
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        let Some(rel_close) = self.text[open..].find(']') else {
            return Err(SmilesError::UnterminatedBracket { pos: open });
        };
        let close = open + rel_close;
        let body = &self.bytes[open + 1..close];
        let mut i = 0;

        let mut isotope: Option<u16> = None;
        let digits_start = i;
        while i < body.len() && body[i].is_ascii_digit() {
            i += 1;
        }
        if i > digits_start {
            let v: u16 = self.text[open + 1 + digits_start..open + 1 + i]
                .parse()
                .map_err(|_| SmilesError::UnexpectedChar { ch: '[', pos: open })?;
            isotope = Some(v);
        }

        let sym_pos = open + 1 + i;
        let (element, aromatic, sym_len) = read_bracket_symbol(&body[i..])
            .ok_or_else(|| SmilesError::UnknownElement {
                symbol: body_symbol_hint(&body[i..]),
                pos: sym_pos,
            })?;
        i += sym_len;

        // chirality: @, @@, @TH1, @AL2, @SP3, @TB12, @OH30
        if i < body.len() && body[i] == b'@' {
            self.stereo_seen = true;
            i += 1;
            if i < body.len() && body[i] == b'@' {
                i += 1;
            } else if i + 1 < body.len() && body[i].is_ascii_uppercase() && body[i + 1].is_ascii_uppercase() {
                i += 2;
                while i < body.len() && body[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }

        let mut h_count = 0u8;
        if i < body.len() && body[i] == b'H' {
            i += 1;
            h_count = 1;
            if i < body.len() && body[i].is_ascii_digit() {
                h_count = body[i] - b'0';
                i += 1;
            }
        }

        let mut charge: i32 = 0;
        if i < body.len() && (body[i] == b'+' || body[i] == b'-') {
            let sign = if body[i] == b'+' { 1 } else { -1 };
            let sign_byte = body[i];
            let charge_pos = open + 1 + i;
            i += 1;
            if i < body.len() && body[i].is_ascii_digit() {
                let s = i;
                while i < body.len() && body[i].is_ascii_digit() {
                    i += 1;
                }
                let mag: i32 = self.text[open + 1 + s..open + 1 + i]
                    .parse()
                    .map_err(|_| SmilesError::BadCharge { pos: charge_pos })?;
                charge = sign * mag;
            } else {
                charge = sign;
                while i < body.len() && body[i] == sign_byte {
                    charge += sign;
                    i += 1;
                }
            }
            if !(-4..=4).contains(&charge) {
                return Err(SmilesError::BadCharge { pos: charge_pos });
            }
        }

        // atom class, parsed and discarded
        if i < body.len() && body[i] == b':' {
            i += 1;
            let s = i;
            while i < body.len() && body[i].is_ascii_digit() {
                i += 1;
            }
            if i == s {
                return Err(SmilesError::UnexpectedChar { ch: ':', pos: open + 1 + s - 1 });
            }
        }

        if i != body.len() {
            let pos = open + 1 + i;
            let ch = self.text[pos..].chars().next().unwrap_or(']');
            return Err(if ch == '+' || ch == '-' {
                SmilesError::BadCharge { pos }
            } else {
                SmilesError::UnexpectedChar { ch, pos }
            });
        }

        self.pos = close + 1;
        let mut atom = self.new_atom(element, aromatic);
        atom.isotope = isotope;
        atom.explicit_h_count = Some(h_count);
        atom.formal_charge = charge as i8;
        Ok(atom)
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let label: u16 = if self.bytes[self.pos] == b'%' {
            let d = self.bytes.get(self.pos + 1..self.pos + 3);
            match d {
                Some([a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                    self.pos += 3;
                    ((a - b'0') as u16) * 10 + (b - b'0') as u16
                }
                _ => return Err(SmilesError::UnexpectedChar { ch: '%', pos: start }),
            }
        } else {
            let v = (self.bytes[self.pos] - b'0') as u16;
            self.pos += 1;
            v
        };
        let Some(current) = self.prev else {
            return Err(SmilesError::UnexpectedChar { ch: self.bytes[start] as char, pos: start });
        };
        let token = self.pending.take().map(|(t, _)| t);
        match self.open_rings.remove(&label) {
            None => {
                self.open_rings.insert(label, (current, token));
            }
            Some((opener, open_token)) => {
                if opener == current
                    || self
                        .bonds
                        .iter()
                        .any(|b| (b.a == opener && b.b == current) || (b.a == current && b.b == opener))
                {
                    return Err(SmilesError::InvalidRingBond { label });
                }
                let merged = match (open_token, token) {
                    (Some(a), Some(b)) if a.order() != b.order() => {
                        return Err(SmilesError::RingBondConflict { label });
                    }
                    (Some(a), _) => Some(a),
                    (None, b) => b,
                };
                self.bonds.push(PendingBond { a: opener, b: current, token: merged });
            }
        }
        Ok(())
    }

    fn finish(self, source: &str) -> Result<Molecule, SmilesError> {
        let Parser { mut atoms, bonds: pending, stereo_seen, .. } = self;
        let mut bonds = Vec::with_capacity(pending.len());
        let mut implicit_aromatic = Vec::with_capacity(pending.len());
        for p in pending {
            let (a, b) = if p.a < p.b { (p.a, p.b) } else { (p.b, p.a) };
            let (order, implicit) = match p.token {
                Some(t) => (t.order(), false),
                None if atoms[a].aromatic && atoms[b].aromatic => (BondOrder::Aromatic, true),
                None => (BondOrder::Single, false),
            };
            bonds.push(Bond { a, b, order, in_ring: false });
            implicit_aromatic.push(implicit);
        }

        let adjacency = Molecule::build_adjacency(atoms.len(), &bonds);
        let mut warnings = Vec::new();
        if stereo_seen {
            warnings.push("stereo markers ignored".to_string());
        }
        let mut mol = Molecule {
            atoms: std::mem::take(&mut atoms),
            bonds,
            rings: Vec::new(),
            source: source.to_string(),
            component_count: 0,
            warnings,
            adjacency,
        };
        label_components(&mut mol);
        assign_rings(&mut mol);

        // an unmarked bond between two aromatic atoms outside any ring is single
        for (bond, implicit) in mol.bonds.iter_mut().zip(implicit_aromatic) {
            if implicit && !bond.in_ring {
                bond.order = BondOrder::Single;
            }
        }
        fill_implicit_hydrogens(&mut mol);
        Ok(mol)
    }
}

fn label_components(mol: &mut Molecule) {
    let n = mol.atoms.len();
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = count;
        while let Some(v) = stack.pop() {
            for &(w, _) in &mol.adjacency[v] {
                if label[w] == usize::MAX {
                    label[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    for (atom, c) in mol.atoms.iter_mut().zip(label) {
        atom.component = c;
    }
    mol.component_count = count;
}

fn fill_implicit_hydrogens(mol: &mut Molecule) {
    for i in 0..mol.atoms.len() {
        if mol.atoms[i].explicit_h_count.is_some() {
            continue;
        }
        let valences = mol.atoms[i].element.default_valences();
        if valences.is_empty() {
            continue;
        }
        let mut plain = 0u32;
        let mut aromatic = 0u32;
        for &(_, bi) in &mol.adjacency[i] {
            match mol.bonds[bi].order {
                BondOrder::Aromatic => aromatic += 1,
                o => plain += o.valence_units() as u32,
            }
        }
        let h = if mol.atoms[i].aromatic {
            // one extra valence unit is taken by the delocalized pi system
            let used = plain + aromatic + u32::from(aromatic > 0);
            (valences[0] as u32).saturating_sub(used)
        } else {
            let used = plain + aromatic;
            valences
                .iter()
                .map(|&v| v as u32)
                .find(|&v| v >= used)
                .map_or(0, |v| v - used)
        };
        mol.atoms[i].implicit_h_count = h as u8;
    }
}

fn read_bracket_symbol(body: &[u8]) -> Option<(Element, bool, usize)> {
    let first = *body.first()?;
    if first.is_ascii_lowercase() {
        let two = body.get(..2).and_then(|s| std::str::from_utf8(s).ok());
        match two {
            Some("se") => return Some((Element::SE, true, 2)),
            Some("as") => return Some((Element::AS, true, 2)),
            _ => {}
        }
        let e = match first {
            b'b' => Element::B,
            b'c' => Element::C,
            b'n' => Element::N,
            b'o' => Element::O,
            b'p' => Element::P,
            b's' => Element::S,
            _ => return None,
        };
        return Some((e, true, 1));
    }
    if !first.is_ascii_uppercase() {
        return None;
    }
    if let Some(&second) = body.get(1) {
        if second.is_ascii_lowercase() {
            let sym = std::str::from_utf8(&body[..2]).ok()?;
            if let Some(e) = Element::from_symbol(sym) {
                return Some((e, false, 2));
            }
        }
    }
    let sym = std::str::from_utf8(&body[..1]).ok()?;
    Element::from_symbol(sym).map(|e| (e, false, 1))
}

fn body_symbol_hint(body: &[u8]) -> String {
    body.iter()
        .take_while(|b| b.is_ascii_alphabetic() || **b == b'*')
        .take(2)
        .map(|b| *b as char)
        .collect()
}
