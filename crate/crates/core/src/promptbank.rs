//! Prompt templates and placeholder rendering.
//!
//! Templates are stored in TOML files holding an array of `[[prompt]]`
//! tables with `id`, `kind` and a multi-line `body`. The built-in bank and
//! task prompt ship under `prompts/` at the repository root.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codediff::SourceText;

const BUILTIN_BANK: &str = include_str!("../../../prompts/bank.toml");
const BUILTIN_TASK: &str = include_str!("../../../prompts/task.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("prompt file: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("template {id}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { id: String, name: String },
    #[error("template {id}: unterminated placeholder")]
    Unterminated { id: String },
    #[error("duplicate template id {0}")]
    DuplicateId(String),
    #[error("no template with id {0}")]
    NotFound(String),
    #[error("template {id} needs line counts but the source is empty")]
    EmptySource { id: String },
    #[error("rate {0} outside (0, 100)")]
    InvalidRate(f64),
    #[error("template {id}: unresolved placeholder after rendering")]
    Unresolved { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Generation,
    Mutation,
    Meta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placeholder {
    RatePercent,
    TotalLines,
    MutateLines,
    KeepLines,
    ModelName,
}

impl Placeholder {
    pub const ALL: [Placeholder; 5] = [
        Placeholder::RatePercent,
        Placeholder::TotalLines,
        Placeholder::MutateLines,
        Placeholder::KeepLines,
        Placeholder::ModelName,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::RatePercent => "rate_percent",
            Placeholder::TotalLines => "total_lines",
            Placeholder::MutateLines => "mutate_lines",
            Placeholder::KeepLines => "keep_lines",
            Placeholder::ModelName => "model_name",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn needs_lines(self) -> bool {
        matches!(
            self,
            Placeholder::TotalLines | Placeholder::MutateLines | Placeholder::KeepLines
        )
    }

    fn needs_rate(self) -> bool {
        matches!(
            self,
            Placeholder::RatePercent | Placeholder::MutateLines | Placeholder::KeepLines
        )
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub kind: PromptKind,
    pub body: String,
}

enum Segment<'a> {
    Text(&'a str),
    Slot(Placeholder),
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, kind: PromptKind, body: impl Into<String>) -> Result<Self, PromptError> {
        let t = Self {
            id: id.into(),
            kind,
            body: body.into(),
        };
        t.placeholders()?;
        Ok(t)
    }

    /// Placeholders in order of appearance.
    pub fn placeholders(&self) -> Result<Vec<Placeholder>, PromptError> {
        Ok(self
            .segments()?
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(p) => Some(p),
                Segment::Text(_) => None,
            })
            .collect())
    }

    fn segments(&self) -> Result<Vec<Segment<'_>>, PromptError> {
        let mut out = Vec::new();
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            if open > 0 {
                out.push(Segment::Text(&rest[..open]));
            }
            let after = &rest[open + 1..];
            let close = after.find('}').ok_or_else(|| PromptError::Unterminated {
                id: self.id.clone(),
            })?;
            let name = &after[..close];
            let p = Placeholder::from_name(name).ok_or_else(|| PromptError::UnknownPlaceholder {
                id: self.id.clone(),
                name: name.to_owned(),
            })?;
            out.push(Segment::Slot(p));
            rest = &after[close + 1..];
        }
        if !rest.is_empty() {
            out.push(Segment::Text(rest));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub text: String,
    pub requested_rate: f64,
    pub source_lines: usize,
}

/// Formats a rate with at most two decimals, dropping trailing zeros
/// (`2` not `2.00`, `3.03` for 3.0303).
pub fn format_rate(rate: f64) -> String {
    let s = format!("{rate:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_owned()
}

/// Lines the model may change: `floor(n * x / 100)`.
pub fn mutate_lines(total_lines: usize, rate_percent: f64) -> usize {
    ((total_lines as f64 * rate_percent / 100.0).floor() as usize).min(total_lines)
}

pub fn render(
    template: &PromptTemplate,
    rate_percent: f64,
    source: &SourceText,
    model_name: &str,
) -> Result<RenderedPrompt, PromptError> {
    let segments = template.segments()?;
    let slots: Vec<Placeholder> = segments
        .iter()
        .filter_map(|s| match s {
            Segment::Slot(p) => Some(*p),
            _ => None,
        })
        .collect();
    if slots.iter().any(|p| p.needs_rate())
        && !(rate_percent.is_finite() && rate_percent > 0.0 && rate_percent < 100.0)
    {
        return Err(PromptError::InvalidRate(rate_percent));
    }
    let n = source.line_count();
    if n == 0 && slots.iter().any(|p| p.needs_lines()) {
        return Err(PromptError::EmptySource {
            id: template.id.clone(),
        });
    }
    let change = mutate_lines(n, rate_percent);
    let mut text = String::with_capacity(template.body.len() + 32);
    for seg in segments {
        match seg {
            Segment::Text(t) => text.push_str(t),
            Segment::Slot(Placeholder::RatePercent) => text.push_str(&format_rate(rate_percent)),
            Segment::Slot(Placeholder::TotalLines) => text.push_str(&n.to_string()),
            Segment::Slot(Placeholder::MutateLines) => text.push_str(&change.to_string()),
            Segment::Slot(Placeholder::KeepLines) => text.push_str(&(n - change).to_string()),
            Segment::Slot(Placeholder::ModelName) => text.push_str(model_name),
        }
    }
    if Placeholder::ALL
        .iter()
        .any(|p| text.contains(&p.to_string()))
    {
        return Err(PromptError::Unresolved {
            id: template.id.clone(),
        });
    }
    Ok(RenderedPrompt {
        text,
        requested_rate: rate_percent,
        source_lines: n,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct PromptFile {
    prompt: Vec<PromptTemplate>,
}

/// An ordered, id-unique collection of templates.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    templates: Vec<PromptTemplate>,
}

impl PromptBank {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        let mut seen = HashSet::new();
        for t in &templates {
            if !seen.insert(t.id.as_str()) {
                return Err(PromptError::DuplicateId(t.id.clone()));
            }
            t.placeholders()?;
        }
        Ok(Self { templates })
    }

    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let file: PromptFile = toml::from_str(text)?;
        Self::new(file.prompt)
    }

    pub fn to_toml(&self) -> Result<String, PromptError> {
        Ok(toml::to_string(&PromptFile {
            prompt: self.templates.clone(),
        })?)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| PromptError::NotFound(id.to_owned()))
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// First template of the given kind, if any.
    pub fn first_of(&self, kind: PromptKind) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.kind == kind)
    }
}

/// Mutation prompts 1-11, `baseline` and `meta`.
pub fn builtin_bank() -> PromptBank {
    PromptBank::from_toml(BUILTIN_BANK).expect("built-in prompt bank is valid")
}

/// The system prompt describing the optimizer contract.
pub fn builtin_task_prompt() -> PromptTemplate {
    PromptBank::from_toml(BUILTIN_TASK)
        .expect("built-in task prompt is valid")
        .first_of(PromptKind::Generation)
        .cloned()
        .expect("task file holds a generation prompt")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(n: usize) -> SourceText {
        let text: String = (0..n).map(|i| format!("l{i}\n")).collect();
        SourceText::normalize(&text)
    }

    #[test]
    fn bank_contents() {
        let bank = builtin_bank();
        assert_eq!(bank.len(), 13);
        assert!(bank
            .get("prompt2")
            .unwrap()
            .body
            .ends_with("is the mandatory requirement."));
        assert!(bank
            .get("prompt9")
            .unwrap()
            .body
            .contains("strictly within the specified"));
        for i in 1..=11 {
            assert_eq!(bank.get(&format!("prompt{i}")).unwrap().kind, PromptKind::Mutation);
        }
        assert_eq!(bank.get("meta").unwrap().kind, PromptKind::Meta);
        assert_eq!(
            bank.get("baseline").unwrap().body,
            "Either refine or redesign to improve the algorithm."
        );
    }

    #[test]
    fn task_prompt_states_the_contract() {
        let t = builtin_task_prompt();
        assert_eq!(t.kind, PromptKind::Generation);
        assert!(t.body.contains("def optimize(objective, dim, budget, lower, upper, seed)"));
        assert!(t.placeholders().unwrap().is_empty());
    }

    #[test]
    fn rate_formatting() {
        assert_eq!(format_rate(2.0), "2");
        assert_eq!(format_rate(40.0), "40");
        assert_eq!(format_rate(2.5), "2.5");
        assert_eq!(format_rate(100.0 / 33.0), "3.03");
        assert_eq!(format_rate(100.0 / 87.0), "1.15");
    }

    #[test]
    fn prompt5_line_arithmetic() {
        let bank = builtin_bank();
        let r = render(bank.get("prompt5").unwrap(), 10.0, &source(87), "m").unwrap();
        assert!(r.text.contains("it has 87 lines"));
        assert!(r.text.contains("only change 8 lines"));
        assert!(r.text.contains("the rest 79 lines"));
        assert_eq!(r.source_lines, 87);
    }

    #[test]
    fn prompt1_substitution() {
        let bank = builtin_bank();
        let r = render(bank.get("prompt1").unwrap(), 20.0, &source(3), "m").unwrap();
        assert!(r.text.contains("20%"));
        assert!(!r.text.contains('{'));
    }

    #[test]
    fn baseline_ignores_rate() {
        let bank = builtin_bank();
        let t = bank.get("baseline").unwrap();
        let a = render(t, 2.0, &source(5), "m").unwrap();
        let b = render(t, 40.0, &source(5), "m").unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn meta_names_the_model() {
        let bank = builtin_bank();
        let r = render(bank.get("meta").unwrap(), 10.0, &SourceText::default(), "gpt-4o").unwrap();
        assert!(r.text.contains("you give gpt-4o a piece"));
        assert!(r.text.contains("x%"));
    }

    #[test]
    fn line_placeholders_need_source() {
        let bank = builtin_bank();
        let err = render(bank.get("prompt5").unwrap(), 10.0, &SourceText::default(), "m");
        assert!(matches!(err, Err(PromptError::EmptySource { .. })));
        // prompt1 has no line placeholders
        assert!(render(bank.get("prompt1").unwrap(), 10.0, &SourceText::default(), "m").is_ok());
    }

    #[test]
    fn rate_must_be_a_percentage() {
        let bank = builtin_bank();
        let t = bank.get("prompt1").unwrap();
        assert!(matches!(render(t, 0.0, &source(2), "m"), Err(PromptError::InvalidRate(_))));
        assert!(matches!(render(t, 100.0, &source(2), "m"), Err(PromptError::InvalidRate(_))));
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplate::new("x", PromptKind::Mutation, "change {rate}%"),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
        assert!(matches!(
            PromptTemplate::new("x", PromptKind::Mutation, "change {rate_percent"),
            Err(PromptError::Unterminated { .. })
        ));
        let t = PromptTemplate::new("x", PromptKind::Mutation, "a").unwrap();
        assert!(matches!(
            PromptBank::new(vec![t.clone(), t]),
            Err(PromptError::DuplicateId(_))
        ));
    }

    #[test]
    fn bank_round_trips_through_file_format() {
        let bank = builtin_bank();
        let text = bank.to_toml().unwrap();
        assert_eq!(PromptBank::from_toml(&text).unwrap(), bank);
    }
}
