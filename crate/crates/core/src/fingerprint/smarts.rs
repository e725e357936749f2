//! Compiler for the SMARTS subset used by the structural key table.
//!
//! Supported: `*`, `a`, `A`, organic-subset symbols, bracket expressions
//! with `#n`, element symbols, `H<n>`, `D<n>`, `R`/`R0`, `r<n>`, charges and
//! the `! & , ;` operators; bonds `- = # : ~ @` with the same operators;
//! branches and ring closures. Recursive `$()` queries are not handled here.

use super::pattern::{AtomPrimitive, AtomQuery, BondPrimitive, BondQuery, FragmentPattern, PatternBond};
use super::FingerprintError;
use crate::chem::{BondOrder, Element};

/// Compile `smarts` into a pattern that fires at `count_threshold` matches.
pub fn compile_smarts(smarts: &str, count_threshold: usize) -> Result<FragmentPattern, FingerprintError> {
    let mut p = Parser {
        src: smarts.as_bytes(),
        pos: 0,
        text: smarts,
    };
    let (atoms, bonds) = p.parse()?;
    FragmentPattern::new(atoms, bonds, count_threshold)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    text: &'a str,
}

fn prim(p: AtomPrimitive) -> AtomQuery {
    AtomQuery::Prim(p)
}

fn element_query(z: u8, aromatic: Option<bool>) -> AtomQuery {
    match aromatic {
        None => prim(AtomPrimitive::AtomicNumber(z)),
        Some(true) => AtomQuery::And(vec![prim(AtomPrimitive::AtomicNumber(z)), prim(AtomPrimitive::Aromatic)]),
        Some(false) => AtomQuery::And(vec![prim(AtomPrimitive::AtomicNumber(z)), prim(AtomPrimitive::Aliphatic)]),
    }
}

fn aromatic_symbol(s: &str) -> Option<u8> {
    match s {
        "b" => Some(5),
        "c" => Some(6),
        "n" => Some(7),
        "o" => Some(8),
        "p" => Some(15),
        "s" => Some(16),
        "se" => Some(34),
        "as" => Some(33),
        _ => None,
    }
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> FingerprintError {
        FingerprintError::InvalidPattern(format!("{msg} at {} in {:?}", self.pos, self.text))
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.src.get(self.pos + k).copied()
    }

    fn parse(&mut self) -> Result<(Vec<AtomQuery>, Vec<PatternBond>), FingerprintError> {
        let mut atoms: Vec<AtomQuery> = Vec::new();
        let mut bonds: Vec<PatternBond> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut stack: Vec<Option<usize>> = Vec::new();
        let mut pending: Option<BondQuery> = None;
        let mut rings: Vec<Option<(usize, Option<BondQuery>)>> = vec![None; 100];

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() {
                        return Err(self.err("branch without atom"));
                    }
                    stack.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    prev = stack.pop().ok_or_else(|| self.err("unbalanced ')'"))?;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!' => {
                    if pending.is_some() {
                        return Err(self.err("two bond expressions in a row"));
                    }
                    pending = Some(self.bond_expr()?);
                }
                b'0'..=b'9' | b'%' => {
                    let label = self.ring_label()?;
                    let cur = prev.ok_or_else(|| self.err("ring closure without atom"))?;
                    match rings[label].take() {
                        None => rings[label] = Some((cur, pending.take())),
                        Some((other, open_bond)) => {
                            let query = match (open_bond, pending.take()) {
                                (Some(a), Some(b)) if a != b => return Err(self.err("conflicting ring bond")),
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => BondQuery::implicit(),
                            };
                            bonds.push(PatternBond { i: other, j: cur, query });
                        }
                    }
                }
                _ => {
                    let q = self.atom()?;
                    let idx = atoms.len();
                    atoms.push(q);
                    if let Some(p) = prev {
                        let query = pending.take().unwrap_or_else(BondQuery::implicit);
                        bonds.push(PatternBond { i: p, j: idx, query });
                    } else if pending.is_some() {
                        return Err(self.err("bond without preceding atom"));
                    }
                    prev = Some(idx);
                }
            }
        }
        if !stack.is_empty() {
            return Err(self.err("unclosed branch"));
        }
        if pending.is_some() {
            return Err(self.err("dangling bond"));
        }
        if rings.iter().any(Option::is_some) {
            return Err(self.err("unclosed ring"));
        }
        Ok((atoms, bonds))
    }

    fn ring_label(&mut self) -> Result<usize, FingerprintError> {
        if self.peek() == Some(b'%') {
            let (a, b) = (self.peek_at(1), self.peek_at(2));
            match (a, b) {
                (Some(a @ b'0'..=b'9'), Some(b @ b'0'..=b'9')) => {
                    self.pos += 3;
                    Ok(((a - b'0') * 10 + (b - b'0')) as usize)
                }
                _ => Err(self.err("bad %nn ring label")),
            }
        } else {
            let d = self.peek().unwrap() - b'0';
            self.pos += 1;
            Ok(d as usize)
        }
    }

    fn atom(&mut self) -> Result<AtomQuery, FingerprintError> {
        let c = self.peek().unwrap();
        if self.src[self.pos..].starts_with(b"[H]") {
            // a lone `[H]` is hydrogen itself, not a hydrogen count
            self.pos += 3;
            return Ok(element_query(1, None));
        }
        if c == b'[' {
            self.pos += 1;
            let q = self.atom_low()?;
            if self.peek() != Some(b']') {
                return Err(self.err("expected ']'"));
            }
            self.pos += 1;
            return Ok(q);
        }
        self.pos += 1;
        match c {
            b'*' => Ok(AtomQuery::any()),
            b'a' => Ok(prim(AtomPrimitive::Aromatic)),
            b'A' => Ok(prim(AtomPrimitive::Aliphatic)),
            b'C' if self.peek() == Some(b'l') => {
                self.pos += 1;
                Ok(element_query(17, Some(false)))
            }
            b'B' if self.peek() == Some(b'r') => {
                self.pos += 1;
                Ok(element_query(35, Some(false)))
            }
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => {
                let e = Element::from_symbol(&(c as char).to_string()).expect("organic symbol");
                Ok(element_query(e.atomic_number(), Some(false)))
            }
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                let z = aromatic_symbol(&(c as char).to_string()).expect("aromatic symbol");
                Ok(element_query(z, Some(true)))
            }
            _ => {
                self.pos -= 1;
                Err(self.err("unexpected character"))
            }
        }
    }

    // bracket precedence, loosest first: ';'  ','  '&'/juxtaposition  '!'
    fn atom_low(&mut self) -> Result<AtomQuery, FingerprintError> {
        let mut parts = vec![self.atom_or()?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            parts.push(self.atom_or()?);
        }
        Ok(collapse_and(parts))
    }

    fn atom_or(&mut self) -> Result<AtomQuery, FingerprintError> {
        let mut parts = vec![self.atom_and()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            parts.push(self.atom_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { AtomQuery::Or(parts) })
    }

    fn atom_and(&mut self) -> Result<AtomQuery, FingerprintError> {
        let mut parts = vec![self.atom_not()?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    parts.push(self.atom_not()?);
                }
                Some(b';') | Some(b',') | Some(b']') | None => break,
                Some(_) => parts.push(self.atom_not()?),
            }
        }
        Ok(collapse_and(parts))
    }

    fn atom_not(&mut self) -> Result<AtomQuery, FingerprintError> {
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(AtomQuery::Not(Box::new(self.atom_not()?)));
        }
        self.atom_primitive()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].parse().expect("digits"))
    }

    fn small(&mut self, default: u32) -> Result<u8, FingerprintError> {
        let n = self.number().unwrap_or(default);
        u8::try_from(n).map_err(|_| self.err("count out of range"))
    }

    fn atom_primitive(&mut self) -> Result<AtomQuery, FingerprintError> {
        let c = self.peek().ok_or_else(|| self.err("unterminated bracket"))?;
        let next = self.peek_at(1);
        // two-letter element symbols win over one-letter primitives
        if c.is_ascii_uppercase() {
            if let Some(l @ b'a'..=b'z') = next {
                let sym = format!("{}{}", c as char, l as char);
                if let Some(e) = Element::from_symbol(&sym) {
                    self.pos += 2;
                    return Ok(element_query(e.atomic_number(), Some(false)));
                }
            }
        }
        if c.is_ascii_lowercase() {
            if let Some(l @ b'a'..=b'z') = next {
                let sym = format!("{}{}", c as char, l as char);
                if let Some(z) = aromatic_symbol(&sym) {
                    self.pos += 2;
                    return Ok(element_query(z, Some(true)));
                }
            }
        }
        self.pos += 1;
        match c {
            b'*' => Ok(AtomQuery::any()),
            b'a' => Ok(prim(AtomPrimitive::Aromatic)),
            b'A' => Ok(prim(AtomPrimitive::Aliphatic)),
            b'#' => {
                let z = self.number().ok_or_else(|| self.err("expected atomic number"))?;
                let z = u8::try_from(z).ok().filter(|z| (1..=118).contains(z)).ok_or_else(|| self.err("bad atomic number"))?;
                Ok(prim(AtomPrimitive::AtomicNumber(z)))
            }
            b'H' => Ok(prim(AtomPrimitive::TotalH(self.small(1)?))),
            b'D' => Ok(prim(AtomPrimitive::Degree(self.small(1)?))),
            b'R' => match self.number() {
                None => Ok(prim(AtomPrimitive::InRing)),
                Some(0) => Ok(AtomQuery::Not(Box::new(prim(AtomPrimitive::InRing)))),
                Some(_) => Err(self.err("ring-count queries are not supported")),
            },
            b'r' => match self.number() {
                None => Ok(prim(AtomPrimitive::InRing)),
                Some(0) => Ok(AtomQuery::Not(Box::new(prim(AtomPrimitive::InRing)))),
                Some(n) => Ok(prim(AtomPrimitive::RingSize(u8::try_from(n).map_err(|_| self.err("ring size"))?))),
            },
            b'+' | b'-' => {
                let sign: i32 = if c == b'+' { 1 } else { -1 };
                let mut mag = 1;
                if let Some(n) = self.number() {
                    mag = n as i32;
                } else {
                    while self.peek() == Some(c) {
                        self.pos += 1;
                        mag += 1;
                    }
                }
                let v = i8::try_from(sign * mag).map_err(|_| self.err("charge out of range"))?;
                Ok(prim(AtomPrimitive::Charge(v)))
            }
            b'A'..=b'Z' => {
                let e = Element::from_symbol(&(c as char).to_string()).ok_or_else(|| self.err("unknown element"))?;
                Ok(element_query(e.atomic_number(), Some(false)))
            }
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                let z = aromatic_symbol(&(c as char).to_string()).expect("aromatic symbol");
                Ok(element_query(z, Some(true)))
            }
            _ => {
                self.pos -= 1;
                Err(self.err("unsupported atom primitive"))
            }
        }
    }

    fn bond_expr(&mut self) -> Result<BondQuery, FingerprintError> {
        let mut parts = vec![self.bond_or()?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            parts.push(self.bond_or()?);
        }
        Ok(collapse_bond_and(parts))
    }

    fn bond_or(&mut self) -> Result<BondQuery, FingerprintError> {
        let mut parts = vec![self.bond_and()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            parts.push(self.bond_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { BondQuery::Or(parts) })
    }

    fn bond_and(&mut self) -> Result<BondQuery, FingerprintError> {
        let mut parts = vec![self.bond_not()?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    parts.push(self.bond_not()?);
                }
                Some(b'-' | b'=' | b'#' | b':' | b'~' | b'@' | b'!') => parts.push(self.bond_not()?),
                _ => break,
            }
        }
        Ok(collapse_bond_and(parts))
    }

    fn bond_not(&mut self) -> Result<BondQuery, FingerprintError> {
        let c = self.peek().ok_or_else(|| self.err("expected bond"))?;
        self.pos += 1;
        Ok(match c {
            b'!' => BondQuery::Not(Box::new(self.bond_not()?)),
            b'-' => BondQuery::order(BondOrder::Single),
            b'=' => BondQuery::order(BondOrder::Double),
            b'#' => BondQuery::order(BondOrder::Triple),
            b':' => BondQuery::order(BondOrder::Aromatic),
            b'~' => BondQuery::any(),
            b'@' => BondQuery::Prim(BondPrimitive::Ring),
            _ => {
                self.pos -= 1;
                return Err(self.err("unsupported bond primitive"));
            }
        })
    }
}

fn collapse_and(mut parts: Vec<AtomQuery>) -> AtomQuery {
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        AtomQuery::And(parts)
    }
}

fn collapse_bond_and(mut parts: Vec<BondQuery>) -> BondQuery {
    if parts.len() == 1 {
        parts.pop().unwrap()
    } else {
        BondQuery::And(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        // [C;H2,H3] = C and (H2 or H3)
        let p = compile_smarts("[C;H2,H3]", 1).unwrap();
        match &p.atoms()[0] {
            AtomQuery::And(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(matches!(&parts[1], AtomQuery::Or(v) if v.len() == 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_letter_symbols() {
        for (s, z) in [("[Hg]", 80), ("[Hf]", 72), ("[Re]", 75), ("[Sc]", 21), ("[Co]", 27), ("[Cl]", 17)] {
            let p = compile_smarts(s, 1).unwrap();
            assert_eq!(p.atoms()[0], element_query(z, Some(false)), "{s}");
        }
        assert_eq!(compile_smarts("[#16R]", 1).unwrap().atoms()[0], AtomQuery::And(vec![
            prim(AtomPrimitive::AtomicNumber(16)),
            prim(AtomPrimitive::InRing),
        ]));
        assert_eq!(compile_smarts("[CH2]", 1).unwrap().atoms()[0], AtomQuery::And(vec![
            element_query(6, Some(false)),
            prim(AtomPrimitive::TotalH(2)),
        ]));
    }

    #[test]
    fn ring_closures_and_branches() {
        let p = compile_smarts("[!#6;!#1]1~*~*~*~1", 1).unwrap();
        assert_eq!(p.atoms().len(), 4);
        assert_eq!(p.bonds().len(), 4);
        assert_eq!(p.bonds()[3].query, BondQuery::any());
        let p = compile_smarts("*~*(~*)(~*)~*", 1).unwrap();
        assert_eq!(p.bonds().iter().filter(|b| b.i == 1 || b.j == 1).count(), 4);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["C(", "C)", "C1CC", "[C", "C=", "[$(CC)]", "[X2]", "=C"] {
            assert!(compile_smarts(s, 1).is_err(), "{s}");
        }
    }
}
