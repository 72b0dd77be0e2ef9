//! Toolkit for turning noisy GUI-agent rollouts into step-level-filtered,
//! reasoning-augmented training data.
//!
//! The pipeline stages map onto the modules below:
//!
//! - [`action`] — the GUI action language: parse, validate, serialize.
//! - [`trajectory`] — trajectory data model, JSONL persistence, windowed
//!   context assembly.
//! - [`annotate`] — action-annotation overlays and zoom crops for grader
//!   and thought prompts.
//! - [`grading`] — step grading: prompt assembly, pluggable backends,
//!   score parsing, consistency and agreement audits.
//! - [`thought`] — post-hoc three-part thought augmentation.
//! - [`filter`] — trajectory- and step-level filtering, mask computation,
//!   SFT export (`webstar-sft/1`) and balanced reward export (`webscore/1`).
//! - [`sim`] — a deterministic simulated website with a scripted noisy
//!   teacher and oracle graders.
//! - [`policy`] — a count-based imitation policy plus pass@k evaluation.
//! - [`manifest`] — reproducibility manifests (input hashes, seeds,
//!   versions) attached to every produced artifact.
//!
//! Batch operations accept a `parallelism` knob. With the default
//! `parallel` feature they fan out over a rayon pool of exactly that many
//! threads; without it every parallelism value degrades to sequential
//! execution. Outputs are byte-identical either way.

pub mod action;
pub mod annotate;
pub mod exec;
pub mod filter;
pub(crate) mod font;
pub mod grading;
pub mod manifest;
pub mod policy;
pub mod retry;
pub mod sim;
pub mod thought;
pub mod trajectory;

pub use action::{parse_action, serialize_action, validate_action, Action, Direction, Viewport};
pub use trajectory::{make_context, read_jsonl, write_jsonl, ContextWindow, Step, Trajectory};
