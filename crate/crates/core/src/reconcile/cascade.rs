use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::BitString;

/// A parity request: positions `start..end` of the key as reordered by `pass`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub pass: u8,
    pub start: u32,
    pub end: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub passes: u8,
    /// Block size of the first pass; doubled every pass.
    pub initial_block: usize,
    /// Exchange rounds before giving up.
    pub max_rounds: usize,
}

impl CascadeConfig {
    /// Four passes with first block size `ceil(0.73 / e)`, or the whole key when `e = 0`.
    pub fn for_error_rate(e: f64, n: usize) -> Self {
        let k1 = if e > 0.0 { (0.73 / e).ceil() as usize } else { n };
        CascadeConfig {
            passes: 4,
            initial_block: k1.clamp(1, n.max(1)),
            max_rounds: 10_000,
        }
    }

    fn block(&self, pass: u8, n: usize) -> usize {
        self.initial_block.saturating_mul(1 << pass).clamp(1, n.max(1))
    }
}

/// Position order used by a pass: identity for pass 0, then a shuffle seeded
/// by the public session seed and the pass number.
pub fn pass_permutation(n: usize, seed: u64, pass: u8) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..n as u32).collect();
    if pass > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (pass as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        perm.shuffle(&mut rng);
    }
    perm
}

fn range_parity(key: &BitString, perm: &[u32], start: u32, end: u32) -> bool {
    perm[start as usize..end as usize]
        .iter()
        .fold(false, |acc, &i| acc ^ key.get(i as usize))
}

/// The side holding the reference key: answers parity queries.
#[derive(Clone, Debug)]
pub struct CascadeResponder {
    key: BitString,
    seed: u64,
    perms: Vec<Vec<u32>>,
}

impl CascadeResponder {
    pub fn new(key: BitString, seed: u64) -> Self {
        CascadeResponder {
            key,
            seed,
            perms: Vec::new(),
        }
    }

    pub fn answer(&mut self, queries: &[Query]) -> Result<BitString> {
        let n = self.key.len();
        let mut out = BitString::with_capacity(queries.len());
        for q in queries {
            if q.start >= q.end || q.end as usize > n || q.pass >= 64 {
                return Err(Error::Protocol(format!("malformed parity query {q:?}")));
            }
            while self.perms.len() <= q.pass as usize {
                let p = self.perms.len() as u8;
                self.perms.push(pass_permutation(n, self.seed, p));
            }
            out.push(range_parity(&self.key, &self.perms[q.pass as usize], q.start, q.end));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Search {
    pass: u8,
    start: u32,
    end: u32,
}

/// The correcting side: drives the exchange and flips its own bits.
#[derive(Clone, Debug)]
pub struct CascadeCorrector {
    key: BitString,
    config: CascadeConfig,
    seed: u64,
    perms: Vec<Vec<u32>>,
    /// position of each key index within each pass order
    inverse: Vec<Vec<u32>>,
    /// reference parities learned so far
    known: HashMap<(u8, u32, u32), bool>,
    searches: Vec<Search>,
    /// passes opened so far
    opened: u8,
    outstanding: Vec<Query>,
    pending_round: Vec<Query>,
    pending_opening: bool,
    flips: u64,
    rounds: usize,
    done: bool,
    converged: bool,
}

impl CascadeCorrector {
    pub fn new(key: BitString, config: CascadeConfig, seed: u64) -> Self {
        CascadeCorrector {
            key,
            config,
            seed,
            perms: Vec::new(),
            inverse: Vec::new(),
            known: HashMap::new(),
            searches: Vec::new(),
            opened: 0,
            outstanding: Vec::new(),
            pending_round: Vec::new(),
            pending_opening: false,
            flips: 0,
            rounds: 0,
            done: false,
            converged: false,
        }
    }

    pub fn key(&self) -> &BitString {
        &self.key
    }

    pub fn into_key(self) -> BitString {
        self.key
    }

    /// Bits corrected so far.
    pub fn flips(&self) -> u64 {
        self.flips
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Finished all passes with no open mismatch (as opposed to hitting the round limit).
    pub fn converged(&self) -> bool {
        self.converged
    }

    fn n(&self) -> usize {
        self.key.len()
    }

    fn open_pass(&mut self) -> Vec<Query> {
        let p = self.opened;
        self.opened += 1;
        let n = self.n();
        self.perms.push(pass_permutation(n, self.seed, p));
        let mut inv = vec![0u32; n];
        for (pos, &i) in self.perms[p as usize].iter().enumerate() {
            inv[i as usize] = pos as u32;
        }
        self.inverse.push(inv);
        let k = self.config.block(p, n);
        (0..n)
            .step_by(k)
            .map(|s| Query {
                pass: p,
                start: s as u32,
                end: (s + k).min(n) as u32,
            })
            .collect()
    }

    fn own_parity(&self, pass: u8, start: u32, end: u32) -> bool {
        range_parity(&self.key, &self.perms[pass as usize], start, end)
    }

    fn top_block(&self, pass: u8, key_index: usize) -> (u32, u32) {
        let k = self.config.block(pass, self.n()) as u32;
        let pos = self.inverse[pass as usize][key_index];
        let start = pos / k * k;
        (start, (start + k).min(self.n() as u32))
    }

    /// Next batch of parity requests, or `None` once finished.
    pub fn next_queries(&mut self) -> Option<Vec<Query>> {
        if self.done {
            return None;
        }
        if self.n() == 0 {
            self.done = true;
            self.converged = true;
            return None;
        }
        loop {
            if self.rounds >= self.config.max_rounds {
                self.done = true;
                return None;
            }
            let opening = self.searches.is_empty();
            let queries: Vec<Query> = if opening {
                if self.opened >= self.config.passes {
                    self.done = true;
                    self.converged = true;
                    return None;
                }
                self.open_pass()
            } else {
                self.searches
                    .iter()
                    .map(|s| Query {
                        pass: s.pass,
                        start: s.start,
                        end: s.start + (s.end - s.start) / 2,
                    })
                    .collect()
            };
            let unknown: Vec<Query> = queries
                .iter()
                .copied()
                .filter(|q| !self.known.contains_key(&(q.pass, q.start, q.end)))
                .collect();
            self.rounds += 1;
            if unknown.is_empty() {
                // everything needed is already known; advance without traffic
                self.outstanding = Vec::new();
                self.step(opening, &queries);
                continue;
            }
            self.outstanding = unknown.clone();
            self.pending_round = queries;
            self.pending_opening = opening;
            return Some(unknown);
        }
    }

    /// Takes the reference parities for the last batch of queries.
    pub fn absorb(&mut self, parities: &BitString) -> Result<()> {
        if parities.len() != self.outstanding.len() {
            return Err(Error::LengthMismatch {
                expected: self.outstanding.len(),
                actual: parities.len(),
            });
        }
        for (q, bit) in self.outstanding.iter().zip(parities.iter()) {
            self.known.insert((q.pass, q.start, q.end), bit);
        }
        self.outstanding.clear();
        let round = std::mem::take(&mut self.pending_round);
        self.step(self.pending_opening, &round);
        Ok(())
    }

    fn reference(&self, pass: u8, start: u32, end: u32) -> bool {
        self.known[&(pass, start, end)]
    }

    fn mismatched(&self, s: &Search) -> bool {
        self.reference(s.pass, s.start, s.end) != self.own_parity(s.pass, s.start, s.end)
    }

    fn step(&mut self, opening: bool, round: &[Query]) {
        if opening {
            for q in round {
                let s = Search {
                    pass: q.pass,
                    start: q.start,
                    end: q.end,
                };
                if self.mismatched(&s) {
                    self.searches.push(s);
                }
            }
        } else {
            let searches = std::mem::take(&mut self.searches);
            let mut next = Vec::with_capacity(searches.len());
            for (s, q) in searches.iter().zip(round) {
                // an earlier flip in this round may have fixed the range already
                if !self.mismatched(s) {
                    continue;
                }
                let parent = self.reference(s.pass, s.start, s.end);
                let left = self.reference(q.pass, q.start, q.end);
                self.known.insert((s.pass, q.end, s.end), parent ^ left);
                let narrowed = if left != self.own_parity(s.pass, s.start, q.end) {
                    Search { end: q.end, ..*s }
                } else {
                    Search { start: q.end, ..*s }
                };
                next.push(narrowed);
            }
            self.searches = next;
        }
        self.settle();
    }

    /// Flips bits located by finished searches and reopens every earlier
    /// block whose parity the flips disturbed.
    fn settle(&mut self) {
        loop {
            let mut flipped = Vec::new();
            let mut keep = Vec::new();
            for s in std::mem::take(&mut self.searches) {
                if !self.mismatched(&s) {
                    continue;
                }
                if s.end - s.start == 1 {
                    let j = self.perms[s.pass as usize][s.start as usize] as usize;
                    self.key.flip(j);
                    self.flips += 1;
                    flipped.push(j);
                } else {
                    keep.push(s);
                }
            }
            keep.retain(|s| self.mismatched(s));
            self.searches = keep;
            if flipped.is_empty() {
                return;
            }
            for j in flipped {
                for p in 0..self.opened {
                    let (start, end) = self.top_block(p, j);
                    let covered = self
                        .searches
                        .iter()
                        .any(|s| s.pass == p && s.start >= start && s.end <= end);
                    let block = Search { pass: p, start, end };
                    if !covered && self.mismatched(&block) {
                        self.searches.push(block);
                    }
                }
            }
        }
    }
}

/// Runs a full exchange locally; returns the corrected key, the number of
/// reference parities revealed and the number of flips.
pub fn run_cascade(reference: &BitString, noisy: &BitString, config: CascadeConfig, seed: u64) -> Result<(BitString, u64, u64, bool)> {
    if reference.len() != noisy.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: noisy.len(),
        });
    }
    let mut responder = CascadeResponder::new(reference.clone(), seed);
    let mut corrector = CascadeCorrector::new(noisy.clone(), config, seed);
    let mut revealed = 0u64;
    while let Some(q) = corrector.next_queries() {
        let answers = responder.answer(&q)?;
        revealed += answers.len() as u64;
        corrector.absorb(&answers)?;
    }
    let flips = corrector.flips();
    let converged = corrector.converged();
    Ok((corrector.into_key(), revealed, flips, converged))
}
