use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    A,
    B,
}

impl Symbol {
    pub fn index(self) -> usize {
        match self {
            Symbol::A => 0,
            Symbol::B => 1,
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'a' => Ok(Symbol::A),
            'b' => Ok(Symbol::B),
            other => Err(Error::Parse(format!("unknown symbol {other:?}; expected 'a' or 'b'"))),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Symbol::A => Symbol::B,
            Symbol::B => Symbol::A,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Symbol::A => "a",
            Symbol::B => "b",
        })
    }
}

/// Parses a word like `"abba"`.
pub fn parse_word(s: &str) -> Result<Vec<Symbol>> {
    s.chars().filter(|c| !c.is_whitespace()).map(Symbol::from_char).collect()
}

fn word_string(w: &[Symbol]) -> String {
    w.iter().map(|s| s.to_string()).collect()
}

/// A bi-infinite code: a finite core starting at index `start`, preceded by a
/// periodic left tail and followed by a periodic right tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    left: Vec<Symbol>,
    core: Vec<Symbol>,
    right: Vec<Symbol>,
    start: i64,
}

impl Code {
    pub fn new(left: Vec<Symbol>, core: Vec<Symbol>, right: Vec<Symbol>, start: i64) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::Parameter("code tails must be nonempty".into()));
        }
        Ok(Code { left, core, right, start })
    }

    /// `c^∞`.
    pub fn pure(c: Symbol) -> Self {
        Code { left: vec![c], core: vec![c], right: vec![c], start: 0 }
    }

    /// `w^∞` with `w` starting at index 0.
    pub fn periodic(word: &[Symbol]) -> Result<Self> {
        Code::new(word.to_vec(), word.to_vec(), word.to_vec(), 0)
    }

    pub fn left(&self) -> &[Symbol] {
        &self.left
    }

    pub fn core(&self) -> &[Symbol] {
        &self.core
    }

    pub fn right(&self) -> &[Symbol] {
        &self.right
    }

    /// Index of the first core symbol.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// One past the last core index.
    pub fn core_end(&self) -> i64 {
        self.start + self.core.len() as i64
    }

    /// `ξ_i`.
    pub fn symbol(&self, i: i64) -> Symbol {
        if i < self.start {
            self.left[(i - self.start).rem_euclid(self.left.len() as i64) as usize]
        } else if i < self.core_end() {
            self.core[(i - self.start) as usize]
        } else {
            self.right[(i - self.core_end()).rem_euclid(self.right.len() as i64) as usize]
        }
    }

    /// The pair `(ξ_i, ξ_{i+1})`.
    pub fn pair(&self, i: i64) -> (Symbol, Symbol) {
        (self.symbol(i), self.symbol(i + 1))
    }

    /// The repeating word when the whole code is `w^∞`, phased so that
    /// `ξ_i = w[i mod |w|]`.
    pub fn periodic_word(&self) -> Option<Vec<Symbol>> {
        let l = self.left.len();
        if self.left != self.right || self.core.len() % l != 0 {
            return None;
        }
        if self.core.chunks(l).any(|c| c != self.left.as_slice()) {
            return None;
        }
        let shift = self.start.rem_euclid(l as i64) as usize;
        // ξ_i = left[(i - start) mod l]; rotate so index 0 lines up
        Some((0..l).map(|j| self.left[(j + l - shift) % l]).collect())
    }

    /// The tail word covering index `i` outside the core, with the phase of `i`
    /// inside it.
    pub(crate) fn tail_at(&self, i: i64) -> Option<(&[Symbol], usize)> {
        if i < self.start {
            Some((&self.left, (i - self.start).rem_euclid(self.left.len() as i64) as usize))
        } else if i >= self.core_end() {
            Some((&self.right, (i - self.core_end()).rem_euclid(self.right.len() as i64) as usize))
        } else {
            None
        }
    }

    /// Whether `ξ_i` agrees with `other` for `|i| <= n`.
    pub fn agrees_with(&self, other: &Code, n: i64) -> bool {
        (-n..=n).all(|i| self.symbol(i) == other.symbol(i))
    }

    /// The window `[lo, hi]` reaching `margin` indices beyond both the core and
    /// the origin.
    pub fn window(&self, margin: i64) -> (i64, i64) {
        (self.start.min(0) - margin, (self.core_end() - 1).max(0) + margin)
    }
}

/// `left|core|right`, optionally followed by `@start`.
impl FromStr for Code {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, start) = match s.split_once('@') {
            Some((b, st)) => {
                (b, st.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad code start in {s:?}")))?)
            }
            None => (s, 0),
        };
        let parts: Vec<&str> = body.split('|').collect();
        match parts.as_slice() {
            [w] => Code::periodic(&parse_word(w)?),
            [l, c, r] => Code::new(parse_word(l)?, parse_word(c)?, parse_word(r)?, start),
            _ => Err(Error::Parse(format!("code {s:?} must be a word or left|core|right"))),
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", word_string(&self.left), word_string(&self.core), word_string(&self.right))?;
        if self.start != 0 {
            write!(f, "@{}", self.start)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_follow_tails_and_core() {
        let c: Code = "ab|bba|a".parse().unwrap();
        let s: String = (-4..6).map(|i| c.symbol(i).to_string()).collect();
        assert_eq!(s, "ababbbaaaa");
        assert_eq!(c.to_string().parse::<Code>().unwrap(), c);
    }

    #[test]
    fn periodic_word_detects_phase() {
        let c =
            Code::new(vec![Symbol::A, Symbol::B], vec![Symbol::A, Symbol::B], vec![Symbol::A, Symbol::B], 1).unwrap();
        assert_eq!(c.symbol(0), Symbol::B);
        let w = c.periodic_word().unwrap();
        for i in -5..5 {
            assert_eq!(c.symbol(i), w[i.rem_euclid(2) as usize]);
        }
        assert!("a|b|a".parse::<Code>().unwrap().periodic_word().is_none());
    }

    #[test]
    fn tails_must_be_nonempty() {
        assert!(Code::new(vec![], vec![Symbol::A], vec![Symbol::A], 0).is_err());
        assert!("a|b".parse::<Code>().is_err());
        assert!("abc".parse::<Code>().is_err());
    }
}
