//! Post-hoc thought augmentation: build the thought prompt, generate a
//! paragraph through a pluggable backend, and split it into the three
//! components (situation, reasoning, actionable instruction).
//!
//! The raw paragraph is always authoritative; the split is best-effort and
//! absent components are flags, not errors.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::exec;
use crate::grading::remote::ChatBackend;
use crate::grading::{BackendError, Message, MessagePart, PromptError, Role};
use crate::retry::{splitmix64, with_retry, RetryPolicy};
use crate::trajectory::{make_context, ContextWindow, ObservationRef, Thought, Trajectory};
use crate::Action;

/// The thought-augmentation instruction template, verbatim.
pub const THOUGHT_PROMPT_TEMPLATE: &str = include_str!("../resources/thought_prompt.txt");

/// Assemble the thought-augmentation message sequence for one step.
///
/// User parts, in order: the task, the prior thought/action pairs, any
/// prior screenshots available as files, the current screenshot annotated
/// with the action, the action dictionary, then step-specific notes
/// (first step, final answer).
pub fn build_thought_prompt(
    ctx: &ContextWindow,
    action: &Action,
    annotated_image: Option<&str>,
) -> Result<Vec<Message>, PromptError> {
    let annotated = annotated_image.ok_or(PromptError::MissingImage("annotated current screenshot"))?;

    let mut parts = vec![MessagePart::Text(format!("TASK: {}", ctx.instruction))];
    if ctx.history.is_empty() {
        parts.push(MessagePart::Text("PREVIOUS_STEPS: (none)".to_string()));
    } else {
        let mut block = String::from("PREVIOUS_STEPS:");
        for (i, pair) in ctx.history.iter().enumerate() {
            let thought = pair
                .thought
                .as_ref()
                .map(|t| t.raw.as_str())
                .filter(|t| !t.is_empty())
                .unwrap_or("(none)");
            block.push_str(&format!("\n[{i}] thought: {thought} | action: {}", pair.action));
        }
        parts.push(MessagePart::Text(block));
    }
    // Previous screenshots are optional; attach the ones that exist as
    // files (the last window entry is the current observation).
    for obs in ctx.images.iter().rev().skip(1).rev() {
        if let ObservationRef::Image { path } = obs {
            parts.push(MessagePart::ImageFile(path.clone()));
        }
    }
    parts.push(MessagePart::ImageFile(annotated.to_string()));
    parts.push(MessagePart::Text(format!("CURRENT_ACTION: {}", action_dictionary(action))));
    if ctx.target_index == 0 {
        parts.push(MessagePart::Text("NOTE: This is the first step.".to_string()));
    }
    if let Action::Finished(answer) = action {
        parts.push(MessagePart::Text(format!("FINAL_ANSWER: {answer}")));
    }

    Ok(vec![
        Message { role: Role::System, parts: vec![MessagePart::Text(THOUGHT_PROMPT_TEMPLATE.to_string())] },
        Message { role: Role::User, parts },
    ])
}

/// JSON dictionary spelling out the action parameters.
pub fn action_dictionary(action: &Action) -> String {
    let value = match action {
        Action::Click(p) => json!({"kind": "click", "x": p.x, "y": p.y}),
        Action::LeftDouble(p) => json!({"kind": "left_double", "x": p.x, "y": p.y}),
        Action::RightSingle(p) => json!({"kind": "right_single", "x": p.x, "y": p.y}),
        Action::Drag { from, to } => {
            json!({"kind": "drag", "x1": from.x, "y1": from.y, "x2": to.x, "y2": to.y})
        }
        Action::Scroll { at, direction, amount } => {
            json!({"kind": "scroll", "x": at.x, "y": at.y, "direction": direction.as_str(), "amount": amount})
        }
        Action::Type(text) => json!({"kind": "type", "text": text}),
        Action::Hotkey(keys) => json!({"kind": "hotkey", "keys": keys}),
        Action::Wait => json!({"kind": "wait"}),
        Action::Finished(answer) => json!({"kind": "finished", "answer": answer}),
    };
    value.to_string()
}

/// Generates the raw thought paragraph for one step.
pub trait ThoughtBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(
        &self,
        ctx: &ContextWindow,
        action: &Action,
        annotated_image: Option<&str>,
    ) -> Result<String, BackendError>;
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

/// Thought backend that sends the committed prompt through a chat model.
pub struct PromptThoughtBackend<C: ChatBackend> {
    chat: C,
    id: String,
}

impl<C: ChatBackend> PromptThoughtBackend<C> {
    pub fn new(chat: C) -> Self {
        let id = format!("remote:{}", chat.id());
        PromptThoughtBackend { chat, id }
    }
}

impl<C: ChatBackend> ThoughtBackend for PromptThoughtBackend<C> {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        ctx: &ContextWindow,
        action: &Action,
        annotated_image: Option<&str>,
    ) -> Result<String, BackendError> {
        let messages = build_thought_prompt(ctx, action, annotated_image)
            .map_err(|e| BackendError::MissingImage(e.to_string()))?;
        self.chat.complete(&messages)
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.chat.max_concurrency()
    }
}

/// Offline deterministic backend: composes a three-sentence paragraph from
/// the context alone. Useful for desk-scale pipelines and dry runs.
pub struct TemplateThoughtBackend;

impl ThoughtBackend for TemplateThoughtBackend {
    fn id(&self) -> &str {
        "template"
    }

    fn generate(
        &self,
        ctx: &ContextWindow,
        action: &Action,
        _annotated_image: Option<&str>,
    ) -> Result<String, BackendError> {
        let situation = if ctx.target_index == 0 {
            format!(
                "I am starting the task \"{}\" and the first screen is in front of me.",
                ctx.instruction
            )
        } else {
            format!(
                "After {} earlier step(s) the screen now shows the state I reached while working on \"{}\".",
                ctx.history.len(),
                ctx.instruction
            )
        };
        let reasoning = match action {
            Action::Finished(_) => {
                "The information I needed is in view, so reporting the answer moves the task to completion.".to_string()
            }
            Action::Scroll { .. } => {
                "The content I am after is not in the visible region, so adjusting the viewport should reveal it.".to_string()
            }
            _ => format!(
                "Interacting with this part of the page via a {} should bring me closer to the goal.",
                action.kind()
            ),
        };
        let instruction = describe_action(action);
        Ok(format!("{situation} {reasoning} {instruction}"))
    }
}

fn describe_action(action: &Action) -> String {
    match action {
        Action::Click(p) => format!("Click at ({}, {}).", p.x, p.y),
        Action::LeftDouble(p) => format!("Double-click at ({}, {}).", p.x, p.y),
        Action::RightSingle(p) => format!("Right-click at ({}, {}).", p.x, p.y),
        Action::Drag { from, to } => {
            format!("Drag from ({}, {}) to ({}, {}).", from.x, from.y, to.x, to.y)
        }
        Action::Scroll { at, direction, .. } => {
            format!("Scroll {} at ({}, {}).", direction, at.x, at.y)
        }
        Action::Type(text) => format!("Type \"{text}\"."),
        Action::Hotkey(keys) => format!("Press {}.", keys.join("+")),
        Action::Wait => "Wait for the page to update.".to_string(),
        Action::Finished(answer) => format!("Finish the task with the answer \"{answer}\"."),
    }
}

/// Fixed-paragraph backend for tests and fixtures.
pub struct FixtureThoughtBackend(pub String);

impl ThoughtBackend for FixtureThoughtBackend {
    fn id(&self) -> &str {
        "fixture"
    }

    fn generate(
        &self,
        _ctx: &ContextWindow,
        _action: &Action,
        _annotated_image: Option<&str>,
    ) -> Result<String, BackendError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("backend produced an empty generation")]
    EmptyGeneration,
    #[error("backend unavailable: all {failed} step(s) failed with transport errors")]
    BackendUnavailable { failed: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Generate the thought for one step.
pub fn augment_step(
    ctx: &ContextWindow,
    action: &Action,
    annotated_image: Option<&str>,
    backend: &dyn ThoughtBackend,
) -> Result<Thought, AugmentError> {
    let raw = backend.generate(ctx, action, annotated_image)?;
    if raw.trim().is_empty() {
        return Err(AugmentError::EmptyGeneration);
    }
    Ok(split_thought(&raw))
}

/// Sentence-boundary split: the first sentence is the situation
/// description, the final imperative sentence the actionable instruction,
/// everything between the reasoning. Degenerate paragraphs leave parts
/// empty rather than failing.
pub fn split_thought(raw: &str) -> Thought {
    let sentences = split_sentences(raw.trim());
    let mut thought = Thought { raw: raw.to_string(), ..Thought::default() };
    match sentences.len() {
        0 => {}
        1 => thought.instruction = sentences[0].clone(),
        2 => {
            thought.situation = sentences[0].clone();
            thought.instruction = sentences[1].clone();
        }
        n => {
            thought.situation = sentences[0].clone();
            thought.reasoning = sentences[1..n - 1].join(" ");
            thought.instruction = sentences[n - 1].clone();
        }
    }
    thought
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            // Closing quotes stay attached to the sentence they end.
            while matches!(chars.peek(), Some('"' | '\'' | ')' | ']')) {
                current.push(chars.next().expect("peeked"));
            }
            if chars.peek().is_none() || chars.peek().is_some_and(|n| n.is_whitespace()) {
                let sentence = current.trim().to_string();
                if !sentence.is_empty() {
                    sentences.push(sentence);
                }
                current.clear();
            }
        }
    }
    let tail = current.trim().to_string();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentOptions {
    pub window: usize,
    pub parallelism: usize,
    pub force: bool,
    pub retry: RetryPolicy,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions { window: 1, parallelism: 1, force: false, retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentFailure {
    pub step_index: usize,
    pub error: String,
    pub transport: bool,
}

#[derive(Debug, Clone)]
pub struct AugmentReport {
    pub trajectory: Trajectory,
    pub failed_steps: Vec<AugmentFailure>,
    pub skipped_steps: Vec<usize>,
}

impl AugmentReport {
    pub fn is_complete(&self) -> bool {
        self.failed_steps.is_empty()
    }
}

/// Fill thoughts for every step of `traj`. Steps already bearing a thought
/// are skipped unless `force`; actions, observations, and grades are never
/// altered. Failure isolation and ordering determinism mirror grading.
pub fn augment_trajectory(
    traj: &Trajectory,
    backend: &dyn ThoughtBackend,
    opts: &AugmentOptions,
) -> Result<AugmentReport, AugmentError> {
    enum StepOutcome {
        Generated(Thought),
        Skipped,
        Failed(BackendError),
    }

    let indices: Vec<usize> = (0..traj.steps.len()).collect();
    let parallelism = match backend.max_concurrency() {
        Some(cap) => opts.parallelism.max(1).min(cap.max(1)),
        None => opts.parallelism.max(1),
    };
    let outcomes = exec::map_indexed(&indices, parallelism, |_, &n| {
        let step = &traj.steps[n];
        if step.thought.is_some() && !opts.force {
            return StepOutcome::Skipped;
        }
        let ctx = make_context(traj, n, opts.window).expect("index in range");
        let salt = splitmix64(n as u64 ^ 0x74686f74);
        let annotated = step.annotated_observation.as_deref();
        match with_retry(&opts.retry, salt, |_| {
            let raw = backend.generate(&ctx, &step.action, annotated)?;
            Ok(raw)
        }) {
            Ok(raw) if raw.trim().is_empty() => {
                StepOutcome::Failed(BackendError::Rejected("empty generation".into()))
            }
            Ok(raw) => StepOutcome::Generated(split_thought(&raw)),
            Err(err) => StepOutcome::Failed(err),
        }
    });

    let mut augmented = traj.clone();
    let mut failed_steps = Vec::new();
    let mut skipped_steps = Vec::new();
    for (n, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            StepOutcome::Generated(thought) => augmented.steps[n].thought = Some(thought),
            StepOutcome::Skipped => skipped_steps.push(n),
            StepOutcome::Failed(err) => failed_steps.push(AugmentFailure {
                step_index: n,
                error: err.to_string(),
                transport: matches!(err, BackendError::Transport(_)),
            }),
        }
    }
    if !traj.steps.is_empty()
        && failed_steps.len() == traj.steps.len()
        && failed_steps.iter().all(|f| f.transport)
    {
        return Err(AugmentError::BackendUnavailable { failed: failed_steps.len() });
    }
    Ok(AugmentReport { trajectory: augmented, failed_steps, skipped_steps })
}
