//! Golden-file conformance: emitted prompt templates are byte-identical
//! to the committed fixtures, and the request-specific parts follow the
//! documented structure.

use webstar_core::action::Action;
use webstar_core::grading::{build_grading_prompt, GradeRequest, MessagePart, Role, GRADING_PROMPT_TEMPLATE};
use webstar_core::thought::{build_thought_prompt, THOUGHT_PROMPT_TEMPLATE};
use webstar_core::trajectory::{make_context, ObservationRef, Source, Terminal, Trajectory, TrajectoryBuilder};

fn fixture(name: &str) -> String {
    let path = format!("{}/resources/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("fixture exists")
}

fn annotated_trajectory(steps: usize) -> Trajectory {
    let mut builder = TrajectoryBuilder::new("t", "compare two laptops", Source::Ingested, 100);
    for i in 0..steps {
        let action = if i + 1 == steps { Action::finished("the cheaper one") } else { Action::click(9, 9 + i as u32) };
        builder.push_step(ObservationRef::image(format!("o{i}.png")), action, Default::default()).unwrap();
    }
    let mut traj = builder.finish(Terminal::Finished, None);
    for step in &mut traj.steps {
        step.annotated_observation = Some(format!("o{}.png.annotated.png", step.index));
    }
    traj
}

fn system_text(messages: &[webstar_core::grading::Message]) -> &str {
    assert_eq!(messages[0].role, Role::System);
    match &messages[0].parts[..] {
        [MessagePart::Text(text)] => text,
        other => panic!("system message should be a single text part, got {other:?}"),
    }
}

#[test]
fn grading_template_matches_committed_fixture_byte_for_byte() {
    let golden = fixture("grading_prompt.txt");
    assert_eq!(GRADING_PROMPT_TEMPLATE.as_bytes(), golden.as_bytes());

    let traj = annotated_trajectory(3);
    let request = GradeRequest::from_trajectory(&traj, 2, 1).unwrap();
    let messages = build_grading_prompt(&request).unwrap();
    assert_eq!(system_text(&messages).as_bytes(), golden.as_bytes());
}

#[test]
fn grading_template_contains_the_protocol() {
    // The placeholder score line appears exactly once as a standalone line.
    let standalone = GRADING_PROMPT_TEMPLATE
        .lines()
        .filter(|l| l.trim() == "Expected value: <int>")
        .count();
    assert_eq!(standalone, 1);
    // All 8 numbered protocol steps are present, unmodified in order.
    for (number, heading) in [
        (1, "**Latest Screenshot Analysis**"),
        (2, "**Success and Rejection Criteria**"),
        (3, "**Progress Analysis**"),
        (4, "**Proposed Action Review**"),
        (5, "**Simulation of Outcomes**"),
        (6, "**Alternatives Analysis**"),
        (7, "**Evaluation**"),
        (8, "**Expected Value**"),
    ] {
        let line = format!("{number}. {heading}");
        assert!(GRADING_PROMPT_TEMPLATE.contains(&line), "missing: {line}");
    }
    let positions: Vec<usize> = (1..=8)
        .map(|n| GRADING_PROMPT_TEMPLATE.find(&format!("\n{n}. **")).expect("step present"))
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn grading_prompt_windowing_and_attachments() {
    let traj = annotated_trajectory(4);

    // Step 0: no history, two image parts (current annotated + zoom).
    let request = GradeRequest::from_trajectory(&traj, 0, 1).unwrap();
    let messages = build_grading_prompt(&request).unwrap();
    assert_eq!(messages[1].image_part_count(), 2);
    let texts: Vec<&str> = messages[1]
        .parts
        .iter()
        .filter_map(|p| match p {
            MessagePart::Text(t) => Some(t.as_str()),
            MessagePart::ImageFile(_) => None,
        })
        .collect();
    assert!(!texts.iter().any(|t| t.starts_with("PRIOR_ACTION")));

    // Three history steps at w=1: still exactly two image parts.
    let request = GradeRequest::from_trajectory(&traj, 3, 1).unwrap();
    let messages = build_grading_prompt(&request).unwrap();
    assert_eq!(messages[1].image_part_count(), 2);

    // w=3 adds the two in-window history screenshots.
    let request = GradeRequest::from_trajectory(&traj, 3, 3).unwrap();
    let messages = build_grading_prompt(&request).unwrap();
    assert_eq!(messages[1].image_part_count(), 4);

    // Byte-identical emission for identical requests.
    let again = build_grading_prompt(&GradeRequest::from_trajectory(&traj, 3, 3).unwrap()).unwrap();
    assert_eq!(again, messages);
}

#[test]
fn grading_prompt_requires_images() {
    let mut traj = annotated_trajectory(2);
    traj.steps[1].annotated_observation = None;
    let request = GradeRequest::from_trajectory(&traj, 1, 1).unwrap();
    assert!(build_grading_prompt(&request).is_err());
}

#[test]
fn thought_template_matches_committed_fixture_byte_for_byte() {
    let golden = fixture("thought_prompt.txt");
    assert_eq!(THOUGHT_PROMPT_TEMPLATE.as_bytes(), golden.as_bytes());

    let traj = annotated_trajectory(2);
    let ctx = make_context(&traj, 1, 1).unwrap();
    let messages = build_thought_prompt(&ctx, &traj.steps[1].action, Some("o1.png.annotated.png")).unwrap();
    assert_eq!(system_text(&messages).as_bytes(), golden.as_bytes());
    // Key guidance lines survive verbatim.
    assert!(golden.contains("STICK TO THE GIVEN CURRENT ACTION"));
    assert!(golden.contains("provide a brief overview of the task and decompose it into smaller steps"));
    assert!(golden.contains("the action is \"finished\""));
}
