//! Offline stand-ins for the language model.
//!
//! [`mock_mutate`] follows the requested rate to the nearest whole line;
//! [`sloppy_mock_mutate`] ignores it and rewrites 40-90% of the program.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendKind, ChatExchange, ChatRequest, LlmError, RequestIntent, TokenUsage};
use crate::codediff::SourceText;

/// Seed program returned for generation requests.
pub const REFERENCE_PROGRAM: &str = include_str!("../../assets/reference_random_search.py");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockStyle {
    Exact,
    Sloppy,
}

/// Lines replaced by [`mock_mutate`]: `max(1, round(n * rate / 100))`, at most `n`.
pub fn exact_line_budget(n: usize, rate_percent: f64) -> usize {
    ((n as f64 * rate_percent / 100.0).round() as usize).clamp(1, n.max(1))
}

pub fn mock_mutate<R: Rng + ?Sized>(parent: &SourceText, rate_percent: f64, rng: &mut R) -> String {
    let n = parent.line_count();
    let k = exact_line_budget(n, rate_percent);
    fenced(&replace_lines(parent, k, rng), "Refined the selected lines.")
}

pub fn sloppy_mock_mutate<R: Rng + ?Sized>(parent: &SourceText, _rate_percent: f64, rng: &mut R) -> String {
    let n = parent.line_count();
    let lo = ((n as f64 * 0.4).ceil() as usize).max(1);
    let hi = ((n as f64 * 0.9).floor() as usize).max(lo);
    let k = rng.gen_range(lo..=hi).min(n);
    fenced(&replace_lines(parent, k, rng), "Reworked the algorithm.")
}

fn fenced(code: &str, preface: &str) -> String {
    format!("{preface}\n```python\n{code}\n```\n")
}

/// Parent lines with `k` rng-chosen positions overwritten by marker lines
/// that occur nowhere in the parent.
fn replace_lines<R: Rng + ?Sized>(parent: &SourceText, k: usize, rng: &mut R) -> String {
    let mut lines: Vec<String> = parent.lines().to_vec();
    if lines.is_empty() {
        return String::new();
    }
    let existing: HashSet<&str> = parent.lines().iter().map(String::as_str).collect();
    let token = loop {
        let t: u64 = rng.gen();
        let probe = format!("# mutated {t:016x}-");
        if !existing.iter().any(|l| l.contains(&probe)) {
            break t;
        }
    };
    let mut positions = index::sample(rng, lines.len(), k).into_vec();
    positions.sort_unstable();
    for (i, pos) in positions.into_iter().enumerate() {
        let indent: String = lines[pos].chars().take_while(|c| c.is_whitespace()).collect();
        lines[pos] = format!("{indent}# mutated {token:016x}-{i}");
    }
    lines.join("\n")
}

pub struct MockBackend {
    style: MockStyle,
    rng: ChaCha8Rng,
    seed_program: String,
}

impl MockBackend {
    pub fn new(style: MockStyle, seed: u64) -> Self {
        Self {
            style,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed_program: REFERENCE_PROGRAM.to_owned(),
        }
    }

    pub fn with_seed_program(mut self, program: impl Into<String>) -> Self {
        self.seed_program = program.into();
        self
    }

    pub fn style(&self) -> MockStyle {
        self.style
    }
}

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<ChatExchange, LlmError> {
        let started = Instant::now();
        let response_text = match &request.intent {
            RequestIntent::Generation => fenced(
                self.seed_program.trim_end(),
                "Random search with a shrinking local phase.",
            ),
            RequestIntent::Mutation {
                parent,
                rate_percent,
            } => match self.style {
                MockStyle::Exact => mock_mutate(parent, *rate_percent, &mut self.rng),
                MockStyle::Sloppy => sloppy_mock_mutate(parent, *rate_percent, &mut self.rng),
            },
            RequestIntent::Other => "The offline mock backend does not author prompts.".to_owned(),
        };
        Ok(ChatExchange {
            request_messages: request.messages.clone(),
            response_text,
            token_usage: TokenUsage::default(),
            latency_s: started.elapsed().as_secs_f64(),
            backend: BackendKind::Mock,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codediff::diff_percent;
    use crate::llm::extract_code;

    fn parent(n: usize) -> SourceText {
        let text: String = (0..n).map(|i| format!("x{i} = {i}\n")).collect();
        SourceText::normalize(&text)
    }

    fn child(resp: &str) -> SourceText {
        extract_code(resp).unwrap()
    }

    #[test]
    fn exact_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = parent(10);
        for (rate, expected) in [(10.0, 10.0), (2.0, 10.0), (50.0, 50.0)] {
            let c = child(&mock_mutate(&p, rate, &mut rng));
            assert_eq!(c.line_count(), 10);
            assert_eq!(diff_percent(&p, &c).unwrap(), expected);
        }
    }

    #[test]
    fn sloppy_stays_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = parent(20);
        for _ in 0..200 {
            let d = diff_percent(&p, &child(&sloppy_mock_mutate(&p, 2.0, &mut rng))).unwrap();
            assert!((40.0..=90.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn markers_keep_indentation_and_are_new() {
        let p = SourceText::normalize("def f():\n    a = 1\n    b = 2\n    return a + b\n");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = child(&mock_mutate(&p, 50.0, &mut rng));
        for (old, new) in p.lines().iter().zip(c.lines()) {
            if old != new {
                assert!(new.trim_start().starts_with("# mutated "));
                assert_eq!(
                    old.len() - old.trim_start().len(),
                    new.len() - new.trim_start().len()
                );
            }
        }
    }

    #[test]
    fn backend_answers_each_intent() {
        let mut b = MockBackend::new(MockStyle::Exact, 7);
        let gen = b
            .complete(&ChatRequest {
                messages: vec![],
                intent: RequestIntent::Generation,
            })
            .unwrap();
        let seed = child(&gen.response_text);
        assert!(seed.line_count() >= 20);
        assert_eq!(seed.lines(), SourceText::normalize(REFERENCE_PROGRAM).lines());
        let other = b
            .complete(&ChatRequest {
                messages: vec![],
                intent: RequestIntent::Other,
            })
            .unwrap();
        assert!(!other.response_text.is_empty());
    }
}
