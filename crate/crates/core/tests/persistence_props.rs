//! Persistence round-trip property: randomized trajectories survive a
//! write/read cycle exactly, including unicode thought text, grades,
//! metadata, and mixed observation kinds.

use proptest::prelude::*;

use webstar_core::action::Action;
use webstar_core::trajectory::{
    read_jsonl, write_jsonl, Grade, ObservationRef, Source, Terminal, Thought, Trajectory,
    TrajectoryBuilder,
};

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            proptest::char::range('a', 'z'),
            Just(' '),
            Just('→'),
            Just('"'),
            Just('\\'),
            Just('é'),
            Just('。'),
        ],
        0..24,
    )
    .prop_map(|chars| chars.into_iter().collect())
}

fn action_strategy() -> impl Strategy<Value = Action> {
    prop_oneof![
        (0u32..1280, 0u32..720).prop_map(|(x, y)| Action::click(x, y)),
        (0u32..1280, 0u32..720).prop_map(|(x, y)| Action::scroll(x, y, webstar_core::action::Direction::Down)),
        text_strategy().prop_map(Action::type_text),
        Just(Action::Wait),
    ]
}

fn observation_strategy() -> impl Strategy<Value = ObservationRef> {
    prop_oneof![
        "[a-z]{1,8}\\.png".prop_map(ObservationRef::image),
        "\\{\"page\":\"p[0-9]{3}\"\\}".prop_map(ObservationRef::sim),
    ]
}

fn trajectory_strategy() -> impl Strategy<Value = Trajectory> {
    (
        "[a-z0-9-]{1,12}",
        text_strategy(),
        proptest::collection::vec(
            (observation_strategy(), action_strategy(), proptest::option::of(0u8..=10), proptest::option::of(text_strategy())),
            0..8,
        ),
        proptest::option::of(text_strategy()),
        any::<bool>(),
    )
        .prop_map(|(id, instruction, steps, final_answer, success)| {
            let n = steps.len();
            let mut builder = TrajectoryBuilder::new(id, instruction, Source::Ingested, 100);
            for (i, (obs, action, _, _)) in steps.iter().enumerate() {
                // The finished action, if any, must be last.
                let action = if i + 1 == n {
                    match final_answer.clone() {
                        Some(answer) => Action::finished(answer),
                        None => action.clone(),
                    }
                } else {
                    action.clone()
                };
                builder.push_step(obs.clone(), action, Default::default()).unwrap();
            }
            let mut traj = builder.finish(Terminal::StepCapReached, Some(success));
            for (step, (_, _, score, thought)) in traj.steps.iter_mut().zip(&steps) {
                if let Some(score) = score {
                    step.grade = Some(Grade { score: *score, rationale: "r".into(), grader_id: "g".into() });
                }
                if let Some(raw) = thought {
                    step.thought = Some(Thought {
                        situation: String::new(),
                        reasoning: String::new(),
                        instruction: String::new(),
                        raw: raw.clone(),
                    });
                }
                step.metadata.insert("k".into(), serde_json::json!({"nested": [1, 2, 3]}));
            }
            traj
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn jsonl_round_trip_is_identity(trajs in proptest::collection::vec(trajectory_strategy(), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajs.jsonl");
        let written = write_jsonl(&trajs, &path).unwrap();
        prop_assert_eq!(written, trajs.len());
        let back = read_jsonl(&path).unwrap();
        prop_assert_eq!(back, trajs);
    }
}
