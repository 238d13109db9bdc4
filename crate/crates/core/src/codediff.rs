//! Line-level code difference between a parent and a child program.
//!
//! Sources are normalized (trailing whitespace stripped, blank lines
//! dropped) and compared by the longest common subsequence of exact lines.
//! The delivered mutation rate is
//! `100 * (1 - lcs / max(|parent|, |child|))`.

use thiserror::Error;

/// Identifier written to run metadata so logs record how diffs were measured.
pub const NORMALIZATION_TAG: &str = "lines:trim-trailing-ws,drop-blank;lcs-exact;denominator=max";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("code difference is undefined when both sources are empty")]
    BothEmpty,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SourceText {
    raw: String,
    lines: Vec<String>,
}

impl SourceText {
    pub fn normalize(raw: &str) -> Self {
        let lines = raw
            .split('\n')
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        Self {
            raw: raw.to_owned(),
            lines,
        }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Normalized lines joined with `\n`.
    pub fn joined(&self) -> String {
        self.lines.join("\n")
    }
}

impl From<&str> for SourceText {
    fn from(raw: &str) -> Self {
        SourceText::normalize(raw)
    }
}

pub fn normalize(raw: &str) -> SourceText {
    SourceText::normalize(raw)
}

pub fn line_count(src: &SourceText) -> usize {
    src.line_count()
}

pub fn diff_percent(parent: &SourceText, child: &SourceText) -> Result<f64, DiffError> {
    diff_percent_seq(parent.lines(), child.lines())
}

/// Same measure over arbitrary element sequences.
pub fn diff_percent_seq<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, DiffError> {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return Err(DiffError::BothEmpty);
    }
    let common = lcs_len(a, b);
    // (max - lcs) / max rather than 1 - lcs / max: exact for k of n lines
    Ok(100.0 * (longest - common) as f64 / longest as f64)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    if a.is_empty() || b.is_empty() {
        return prefix + suffix;
    }
    // keep the row over the shorter side
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0u32; inner.len() + 1];
    for x in outer {
        let mut diag = 0u32;
        for (j, y) in inner.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    prefix + suffix + row[inner.len()] as usize
}
