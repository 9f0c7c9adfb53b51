use std::fmt::Write as _;
use std::io::Write;

use super::floor_ratio;
use crate::error::{Error, Result};
use crate::horseshoe::{Code, Symbol};
use crate::slowdrive::AccessiblePath;

/// What the code does after the planned prefix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Continuation {
    /// Repeat the word of the last block forever.
    #[default]
    RepeatLast,
    /// Repeat the given word forever.
    Word(Vec<Symbol>),
}

/// `copies` repetitions of `word` starting at code index `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    pub segment: usize,
    pub generator: usize,
    /// `c_k` padded by repetition to length `ℓ₀`.
    pub word: Vec<Symbol>,
    /// Length `ℓ_k` of the unpadded orbit code.
    pub code_len: usize,
    /// `N_i(eps)`.
    pub copies: usize,
    pub start: usize,
    /// `j_i`, one past the last index of the block.
    pub end: usize,
}

/// The code prefix `ω_1 ω_2 ... ω_N` that follows an accessible path.
#[derive(Debug, Clone, PartialEq)]
pub struct CodePlan {
    pub eps: f64,
    /// `ℓ₀`, the longest orbit code used by the path.
    pub ell0: usize,
    pub blocks: Vec<CodeBlock>,
    /// Length of the planned prefix, `j_N`.
    pub total_len: usize,
    /// The full code: the first block's word to the left of 0, the blocks,
    /// then the continuation.
    pub code: Code,
}

impl CodePlan {
    /// `j_i` for every block.
    pub fn offsets(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.end).collect()
    }

    /// Block containing code index `i` of the prefix.
    pub fn block_at(&self, i: usize) -> Option<&CodeBlock> {
        self.blocks.iter().find(|b| (b.start..b.end).contains(&i))
    }

    /// Rows `block, segment, k, word, copies, start, end`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# slowdrift-plan v1")?;
        writeln!(out, "# eps: {}", super::fmt_f64(self.eps))?;
        writeln!(out, "# ell0: {}", self.ell0)?;
        writeln!(out, "# code: {}", self.code)?;
        writeln!(out, "block,segment,k,word,copies,start,end")?;
        for (i, b) in self.blocks.iter().enumerate() {
            let mut word = String::new();
            for s in &b.word {
                write!(word, "{s}").expect("writing to a string");
            }
            writeln!(out, "{i},{},{},{word},{},{},{}", b.segment, b.generator, b.copies, b.start, b.end)?;
        }
        Ok(())
    }
}

/// Turns an accessible path into a code: segment `i`, following generator
/// `k_i` for `Δ_i`, becomes `N_i = ⌊Δ_i / (eps ℓ₀)⌋` copies of the orbit
/// code `c_{k_i}` padded to length `ℓ₀`.
///
/// `codes[k]` is the periodic code of the orbit family behind generator `k`.
/// Every code length must divide `ℓ₀`, so that a padded block is a power of
/// its orbit code.
pub fn plan_code(
    path: &AccessiblePath,
    codes: &[Vec<Symbol>],
    eps: f64,
    continuation: &Continuation,
) -> Result<CodePlan> {
    if !path.is_validated() {
        return Err(Error::Precondition("path must be validated before planning a code".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if codes.iter().any(|c| c.is_empty()) {
        return Err(Error::Parameter("orbit codes must be nonempty".into()));
    }
    if let Some(&k) = path.generators.iter().find(|&&k| k >= codes.len()) {
        return Err(Error::OutOfRange(format!("generator {k} has no orbit code ({} given)", codes.len())));
    }
    if codes.is_empty() {
        return Err(Error::Parameter("at least one orbit code is needed".into()));
    }
    let used: Vec<usize> = if path.generators.is_empty() { vec![0] } else { path.generators.clone() };
    let ell0 = used.iter().map(|&k| codes[k].len()).max().expect("at least one code is used");
    if let Some(&k) = used.iter().find(|&&k| ell0 % codes[k].len() != 0) {
        return Err(Error::Parameter(format!(
            "orbit code of generator {k} has length {}, which does not divide ℓ₀ = {ell0}",
            codes[k].len()
        )));
    }
    let pad = |k: usize| -> Vec<Symbol> { codes[k].iter().cycle().take(ell0).copied().collect() };
    let mut blocks = Vec::with_capacity(path.segments());
    let mut pos = 0;
    for (i, &k) in path.generators.iter().enumerate() {
        let delta = path.breakpoints[i + 1] - path.breakpoints[i];
        let copies = floor_ratio(delta, eps * ell0 as f64);
        if copies == 0 {
            return Err(Error::EmptyBlock { segment: i });
        }
        let end = pos + copies * ell0;
        blocks.push(CodeBlock {
            segment: i,
            generator: k,
            word: pad(k),
            code_len: codes[k].len(),
            copies,
            start: pos,
            end,
        });
        pos = end;
    }
    let first = blocks.first().map_or_else(|| pad(used[0]), |b| b.word.clone());
    let right = match continuation {
        Continuation::RepeatLast => blocks.last().map_or_else(|| first.clone(), |b| b.word.clone()),
        Continuation::Word(w) if w.is_empty() => {
            return Err(Error::Parameter("continuation word must be nonempty".into()));
        }
        Continuation::Word(w) => w.clone(),
    };
    let core: Vec<Symbol> = blocks.iter().flat_map(|b| b.word.iter().cycle().take(b.end - b.start).copied()).collect();
    let code = Code::new(first, core, right, 0)?;
    Ok(CodePlan { eps, ell0, blocks, total_len: pos, code })
}
