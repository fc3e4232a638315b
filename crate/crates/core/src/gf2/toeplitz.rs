use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::lfsr::{lfsr_stream, LfsrSpec};
use crate::gf2::BitString;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToeplitzSource {
    ExplicitRandom,
    LfsrGenerated,
}

/// A `rows x cols` Toeplitz matrix over GF(2), stored as its `rows + cols - 1`
/// diagonal bits. Entry `(i, j)` is `diagonal[i - j + cols - 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSpec {
    rows: usize,
    cols: usize,
    diagonal: BitString,
    source: ToeplitzSource,
}

impl ToeplitzSpec {
    pub fn new(rows: usize, cols: usize, diagonal: BitString, source: ToeplitzSource) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "Toeplitz matrix must be nonempty, got {rows}x{cols}"
            )));
        }
        if diagonal.len() != rows + cols - 1 {
            return Err(Error::LengthMismatch {
                expected: rows + cols - 1,
                actual: diagonal.len(),
            });
        }
        Ok(ToeplitzSpec {
            rows,
            cols,
            diagonal,
            source,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn diagonal(&self) -> &BitString {
        &self.diagonal
    }

    pub fn source(&self) -> ToeplitzSource {
        self.source
    }

    pub fn entry(&self, i: usize, j: usize) -> bool {
        assert!(i < self.rows && j < self.cols);
        self.diagonal.get(i + self.cols - 1 - j)
    }
}

/// Product `T v` over GF(2).
///
/// Row `i` of `T` read right to left is the diagonal window starting at bit
/// `i`, so each output bit is the parity of `window(i) AND reverse(v)`,
/// computed a word at a time.
pub fn toeplitz_multiply(spec: &ToeplitzSpec, v: &BitString) -> Result<BitString> {
    if v.len() != spec.cols {
        return Err(Error::LengthMismatch {
            expected: spec.cols,
            actual: v.len(),
        });
    }
    let rev = v.reversed();
    let w = rev.words();
    let diag = &spec.diagonal;
    let row_bit = |i: usize| -> bool {
        let mut acc = 0u64;
        for (k, &wk) in w.iter().enumerate() {
            acc ^= diag.window_word(i + 64 * k) & wk;
        }
        acc.count_ones() & 1 == 1
    };

    // Below this much work the thread pool costs more than it saves.
    const PAR_THRESHOLD: usize = 1 << 22;
    let bits: Vec<bool> = if spec.rows.saturating_mul(w.len()) >= PAR_THRESHOLD {
        (0..spec.rows).into_par_iter().map(row_bit).collect()
    } else {
        (0..spec.rows).map(row_bit).collect()
    };
    Ok(bits.into_iter().collect())
}

/// Builds a `rows x cols` Toeplitz matrix whose diagonal is the LFSR stream
/// seeded from `key2k` (length `2 * rows`), see [`LfsrSpec::from_key`].
pub fn toeplitz_from_lfsr(key2k: &BitString, rows: usize, cols: usize) -> Result<ToeplitzSpec> {
    if key2k.len() != 2 * rows {
        return Err(Error::LengthMismatch {
            expected: 2 * rows,
            actual: key2k.len(),
        });
    }
    let lfsr = LfsrSpec::from_key(key2k)?;
    let diagonal = lfsr_stream(&lfsr, rows + cols - 1)?;
    ToeplitzSpec::new(rows, cols, diagonal, ToeplitzSource::LfsrGenerated)
}
