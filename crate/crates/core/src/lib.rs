//! Controlled-mutation harness for evolving black-box optimization
//! algorithms with a language model.
//!
//! Mutation rates are drawn from a discrete power law ([`powerlaw`]),
//! rendered into mutation prompts ([`promptbank`]), sent to a chat backend
//! ([`llm`]), and the delivered line-level difference ([`codediff`]) is
//! scored against the request ([`metrics`]). Candidates are evaluated on a
//! small shifted benchmark suite over an ask/tell stdio protocol
//! ([`bench`]) and selected by a (1+1) elitist loop ([`evolution`]).
//! [`experiment`] runs whole plans and writes CSV/SVG reports.

pub mod bench;
pub mod codediff;
pub mod evolution;
pub mod experiment;
pub mod llm;
pub mod metrics;
pub mod powerlaw;
pub mod promptbank;
pub mod seed;

pub use codediff::SourceText;
pub use metrics::{AoccBounds, EvalTrace};
pub use powerlaw::PowerLawConfig;
