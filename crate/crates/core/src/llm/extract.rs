use thiserror::Error;

use crate::codediff::SourceText;

const FENCE: &str = "```";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("response contains no fenced code block")]
    NoBlock,
    #[error("last fenced code block is empty")]
    EmptyBlock,
}

/// Contents of the last complete fenced block. Text between an opening
/// fence and the end of its line is a language tag and is discarded.
pub fn extract_code(response_text: &str) -> Result<SourceText, ExtractError> {
    let mut last: Option<&str> = None;
    let mut rest = response_text;
    while let Some(open) = rest.find(FENCE) {
        let after_open = &rest[open + FENCE.len()..];
        let Some(nl) = after_open.find('\n') else {
            break;
        };
        let body = &after_open[nl + 1..];
        let Some(close) = body.find(FENCE) else {
            break;
        };
        last = Some(&body[..close]);
        rest = &body[close + FENCE.len()..];
    }
    let code = last.ok_or(ExtractError::NoBlock)?;
    let src = SourceText::normalize(code);
    if src.is_empty() {
        return Err(ExtractError::EmptyBlock);
    }
    Ok(src)
}
