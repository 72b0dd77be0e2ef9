//! Grading prompt assembly and score-line parsing.
//!
//! The instruction template is shipped as a committed fixture and emitted
//! byte-for-byte as the system message. Request-specific content (task,
//! action history, image attachments) rides in a single user message whose
//! parts appear in this order:
//!
//! 1. `USER_TASK: <instruction>`
//! 2. per history step, oldest first: `PRIOR_ACTION[i]: <action>`, followed
//!    by that step's annotated screenshot when it falls inside the window
//! 3. `PROPOSED_NEXT_ASSISTANT_ACTION: <action>`
//! 4. the latest annotated screenshot
//! 5. the zoomed-in crop

use thiserror::Error;

use super::GradeRequest;

/// The grading instruction template, verbatim.
pub const GRADING_PROMPT_TEMPLATE: &str = include_str!("../../resources/grading_prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

/// One content part: text, or a PNG image referenced by file path. Image
/// bytes are resolved (and base64-encoded) by the transport at send time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessagePart {
    Text(String),
    ImageFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<MessagePart>,
}

impl Message {
    pub fn image_part_count(&self) -> usize {
        self.parts.iter().filter(|p| matches!(p, MessagePart::ImageFile(_))).count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing image for prompt: {0}")]
    MissingImage(&'static str),
}

/// Assemble the grading message sequence for one request.
pub fn build_grading_prompt(req: &GradeRequest) -> Result<Vec<Message>, PromptError> {
    let current = req
        .current_annotated
        .as_deref()
        .ok_or(PromptError::MissingImage("current annotated screenshot"))?;
    let zoom = req.zoom.as_deref().ok_or(PromptError::MissingImage("zoomed-in crop"))?;

    let mut parts = vec![MessagePart::Text(format!("USER_TASK: {}", req.instruction))];
    for (i, step) in req.history.iter().enumerate() {
        parts.push(MessagePart::Text(format!("PRIOR_ACTION[{i}]: {}", step.action)));
        if let Some(path) = &step.annotated {
            parts.push(MessagePart::ImageFile(path.clone()));
        }
    }
    parts.push(MessagePart::Text(format!(
        "PROPOSED_NEXT_ASSISTANT_ACTION: {}",
        req.proposed_action
    )));
    parts.push(MessagePart::Text("Latest annotated screenshot:".to_string()));
    parts.push(MessagePart::ImageFile(current.to_string()));
    parts.push(MessagePart::Text("Zoomed-in crop of the action target:".to_string()));
    parts.push(MessagePart::ImageFile(zoom.to_string()));

    Ok(vec![
        Message { role: Role::System, parts: vec![MessagePart::Text(GRADING_PROMPT_TEMPLATE.to_string())] },
        Message { role: Role::User, parts },
    ])
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseGradeError {
    #[error("no `Expected value: <int>` line found")]
    NoScoreLine,
    #[error("score {0} outside 0..=10")]
    OutOfRange(i64),
    #[error("conflicting score lines: {0} vs {1}")]
    MultipleConflicting(i64, i64),
}

/// Extract the integer from the `Expected value: <int>` line of a grader
/// response. Leading/trailing whitespace on the line is tolerated; repeated
/// lines are fine as long as they agree.
pub fn parse_grade(raw: &str) -> Result<u8, ParseGradeError> {
    let mut found: Option<i64> = None;
    for line in raw.lines() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix("Expected value:") else {
            continue;
        };
        let Ok(value) = rest.trim().parse::<i64>() else {
            continue;
        };
        match found {
            None => found = Some(value),
            Some(prev) if prev != value => {
                return Err(ParseGradeError::MultipleConflicting(prev, value))
            }
            Some(_) => {}
        }
    }
    let value = found.ok_or(ParseGradeError::NoScoreLine)?;
    if !(0..=10).contains(&value) {
        return Err(ParseGradeError::OutOfRange(value));
    }
    Ok(value as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_score_from_analysis() {
        assert_eq!(parse_grade("step 1: looks fine\nstep 7: ok\nExpected value: 7"), Ok(7));
    }

    #[test]
    fn boundary_scores() {
        assert_eq!(parse_grade("Expected value: 0"), Ok(0));
        assert_eq!(parse_grade("Expected value: 10"), Ok(10));
        assert_eq!(parse_grade("  Expected value:  3  "), Ok(3));
    }

    #[test]
    fn out_of_range() {
        assert_eq!(parse_grade("Expected value: 11"), Err(ParseGradeError::OutOfRange(11)));
        assert_eq!(parse_grade("Expected value: -1"), Err(ParseGradeError::OutOfRange(-1)));
    }

    #[test]
    fn missing_score_line() {
        assert_eq!(parse_grade("I think this is great."), Err(ParseGradeError::NoScoreLine));
        // The template's own placeholder line is not numeric.
        assert_eq!(parse_grade("Expected value: <int>"), Err(ParseGradeError::NoScoreLine));
    }

    #[test]
    fn conflicting_lines() {
        assert_eq!(
            parse_grade("Expected value: 7\n...\nExpected value: 4"),
            Err(ParseGradeError::MultipleConflicting(7, 4))
        );
        // Agreeing duplicates collapse.
        assert_eq!(parse_grade("Expected value: 7\nExpected value: 7"), Ok(7));
    }
}
