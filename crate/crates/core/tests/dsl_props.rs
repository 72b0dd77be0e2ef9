//! Property tests for the action language: structural and textual
//! round-trips, parser totality on arbitrary input, and bounds checking
//! against the half-open viewport convention.

use proptest::prelude::*;

use webstar_core::action::{
    parse_action, serialize_action, validate_action, Action, Direction, Viewport,
};

fn direction_strategy() -> impl Strategy<Value = Direction> {
    prop_oneof![
        Just(Direction::Up),
        Just(Direction::Down),
        Just(Direction::Left),
        Just(Direction::Right),
    ]
}

fn key_strategy() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9]{0,7}"
}

fn payload_strategy() -> impl Strategy<Value = String> {
    // Texts heavy on the characters the escaper must handle.
    proptest::collection::vec(
        prop_oneof![
            Just(')'),
            Just('('),
            Just('\\'),
            Just('\n'),
            Just('\r'),
            Just(' '),
            Just('→'),
            proptest::char::range('a', 'z'),
            proptest::char::range('0', '9'),
        ],
        0..40,
    )
    .prop_map(|chars| chars.into_iter().collect())
}

fn action_strategy() -> impl Strategy<Value = Action> {
    let coord = 0u32..4000;
    prop_oneof![
        (coord.clone(), coord.clone()).prop_map(|(x, y)| Action::click(x, y)),
        (coord.clone(), coord.clone()).prop_map(|(x, y)| Action::left_double(x, y)),
        (coord.clone(), coord.clone()).prop_map(|(x, y)| Action::right_single(x, y)),
        (coord.clone(), coord.clone(), coord.clone(), coord.clone())
            .prop_map(|(a, b, c, d)| Action::drag(a, b, c, d)),
        (coord.clone(), coord.clone(), direction_strategy(), proptest::option::of(0u32..5000)).prop_map(
            |(x, y, direction, amount)| Action::Scroll {
                at: webstar_core::action::Point::new(x, y),
                direction,
                amount,
            }
        ),
        payload_strategy().prop_map(Action::type_text),
        payload_strategy().prop_map(Action::finished),
        proptest::collection::vec(key_strategy(), 1..4)
            .prop_map(|keys| Action::hotkey(keys).expect("valid keys")),
        Just(Action::Wait),
    ]
}

proptest! {
    #[test]
    fn structural_round_trip(action in action_strategy()) {
        let serialized = serialize_action(&action);
        let parsed = parse_action(&serialized).expect("canonical form parses");
        prop_assert_eq!(parsed, action);
    }

    #[test]
    fn canonical_strings_are_fixed_points(action in action_strategy()) {
        let serialized = serialize_action(&action);
        let reserialized = serialize_action(&parse_action(&serialized).unwrap());
        prop_assert_eq!(reserialized, serialized);
    }

    #[test]
    fn parser_is_total_on_arbitrary_strings(input in "\\PC*") {
        // Any outcome is fine as long as it is a value, not a panic.
        let _ = parse_action(&input);
    }

    #[test]
    fn parser_is_total_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let text = String::from_utf8_lossy(&bytes);
        let _ = parse_action(&text);
    }

    #[test]
    fn ingest_dialect_canonicalizes_and_round_trips(
        x in 0u32..2000, y in 0u32..2000,
        sx in -3000i64..3000, sy in -3000i64..3000,
    ) {
        let raw = format!("scroll({x},{y},{sx},{sy})");
        match parse_action(&raw) {
            Ok(action) => {
                prop_assert!(sx != 0 || sy != 0);
                let canonical = serialize_action(&action);
                prop_assert_eq!(parse_action(&canonical).unwrap(), action.clone());
                // Dominant component decides the direction.
                if let Action::Scroll { direction, amount, .. } = action {
                    let expected = if sy.abs() >= sx.abs() {
                        if sy > 0 { Direction::Down } else { Direction::Up }
                    } else if sx > 0 { Direction::Right } else { Direction::Left };
                    prop_assert_eq!(direction, expected);
                    prop_assert_eq!(u64::from(amount.unwrap()), sx.abs().max(sy.abs()) as u64);
                } else {
                    prop_assert!(false, "scroll parsed to non-scroll");
                }
            }
            Err(_) => prop_assert!(sx == 0 && sy == 0),
        }
    }

    #[test]
    fn violations_agree_with_pointwise_bounds(
        action in action_strategy(),
        width in 1u32..3000,
        height in 1u32..3000,
    ) {
        let viewport = Viewport::new(width, height);
        let violations = validate_action(&action, viewport);
        let expect_clean = action.points().iter().all(|(_, p)| p.x < width && p.y < height);
        prop_assert_eq!(violations.is_empty(), expect_clean);
    }
}
