//! The GUI action language: parsing, validation, and canonical
//! serialization.
//!
//! Every action is a single expression `kind(args)`. The canonical grammar:
//!
//! ```text
//! action            = kind , "(" , args , ")" ;
//! kind              = "click" | "left_double" | "right_single" | "drag"
//!                   | "scroll" | "type" | "hotkey" | "wait" | "finished" ;
//! point             = integer , "," , integer ;
//! click args        = point ;
//! left_double args  = point ;
//! right_single args = point ;
//! drag args         = point , "," , point ;
//! scroll args       = point , "," , direction , [ "," , integer ]
//!                   | point , "," , signed , "," , signed ;   (* ingest dialect *)
//! type args         = text ;
//! hotkey args       = key , { "+" , key } ;
//! wait args         = "" ;
//! finished args     = text ;
//! direction         = "up" | "down" | "left" | "right" ;
//! integer           = digit , { digit } ;
//! signed            = [ "-" ] , integer ;
//! text              = { text-char } ;   (* "\" escapes ")" "\" n r *)
//! key               = key-char , { key-char } ;  (* no "+" "," "(" ")" *)
//! ```
//!
//! Whitespace between tokens is ignored on parse; canonical output carries
//! none. `type`/`finished` payloads are raw text with a backslash escape
//! for `)`, `\`, newline and carriage return. The four-argument scroll
//! dialect `scroll(x,y,scroll_x,scroll_y)` is accepted on ingest and
//! canonicalized to a direction (sign of the dominant component) plus a
//! pixel magnitude, serialized as `scroll(x,y,dir,amount)`.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A pixel position. Coordinates are non-negative by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Point { x, y }
    }
}

/// Scroll direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One member of the action space.
///
/// Hotkey key names are stored canonicalized (Title-case); build them via
/// [`Action::hotkey`] rather than assembling the variant by hand.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Click(Point),
    LeftDouble(Point),
    RightSingle(Point),
    Drag { from: Point, to: Point },
    Scroll { at: Point, direction: Direction, amount: Option<u32> },
    Type(String),
    Hotkey(Vec<String>),
    Wait,
    Finished(String),
}

impl Action {
    pub fn click(x: u32, y: u32) -> Self {
        Action::Click(Point::new(x, y))
    }

    pub fn left_double(x: u32, y: u32) -> Self {
        Action::LeftDouble(Point::new(x, y))
    }

    pub fn right_single(x: u32, y: u32) -> Self {
        Action::RightSingle(Point::new(x, y))
    }

    pub fn drag(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Action::Drag { from: Point::new(x1, y1), to: Point::new(x2, y2) }
    }

    pub fn scroll(x: u32, y: u32, direction: Direction) -> Self {
        Action::Scroll { at: Point::new(x, y), direction, amount: None }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Action::Type(text.into())
    }

    pub fn finished(text: impl Into<String>) -> Self {
        Action::Finished(text.into())
    }

    /// Build a hotkey chord, canonicalizing key names. Fails on an empty
    /// chord or a key containing reserved characters.
    pub fn hotkey<I, S>(keys: I) -> Result<Self, ParseActionError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut canon = Vec::new();
        for key in keys {
            canon.push(canonicalize_key(key.as_ref())?);
        }
        if canon.is_empty() {
            return Err(ParseActionError::Arity { kind: "hotkey", expected: "at least one key", got: 0 });
        }
        Ok(Action::Hotkey(canon))
    }

    /// Canonical name of the action kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Click(_) => "click",
            Action::LeftDouble(_) => "left_double",
            Action::RightSingle(_) => "right_single",
            Action::Drag { .. } => "drag",
            Action::Scroll { .. } => "scroll",
            Action::Type(_) => "type",
            Action::Hotkey(_) => "hotkey",
            Action::Wait => "wait",
            Action::Finished(_) => "finished",
        }
    }

    /// Coordinate points carried by the action, with their roles.
    pub fn points(&self) -> Vec<(PointRole, Point)> {
        match self {
            Action::Click(p) | Action::LeftDouble(p) | Action::RightSingle(p) => {
                vec![(PointRole::Target, *p)]
            }
            Action::Scroll { at, .. } => vec![(PointRole::Target, *at)],
            Action::Drag { from, to } => {
                vec![(PointRole::DragStart, *from), (PointRole::DragEnd, *to)]
            }
            _ => Vec::new(),
        }
    }

    /// True for `finished(..)`.
    pub fn is_finished(&self) -> bool {
        matches!(self, Action::Finished(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click(p) => write!(f, "click({},{})", p.x, p.y),
            Action::LeftDouble(p) => write!(f, "left_double({},{})", p.x, p.y),
            Action::RightSingle(p) => write!(f, "right_single({},{})", p.x, p.y),
            Action::Drag { from, to } => {
                write!(f, "drag({},{},{},{})", from.x, from.y, to.x, to.y)
            }
            Action::Scroll { at, direction, amount: None } => {
                write!(f, "scroll({},{},{})", at.x, at.y, direction)
            }
            Action::Scroll { at, direction, amount: Some(px) } => {
                write!(f, "scroll({},{},{},{})", at.x, at.y, direction, px)
            }
            Action::Type(text) => write!(f, "type({})", escape_payload(text)),
            Action::Hotkey(keys) => write!(f, "hotkey({})", keys.join("+")),
            Action::Wait => f.write_str("wait()"),
            Action::Finished(text) => write!(f, "finished({})", escape_payload(text)),
        }
    }
}

impl FromStr for Action {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_action(s)
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_action(&raw).map_err(de::Error::custom)
    }
}

/// Typed parse failures. Every input yields either an [`Action`] or one of
/// these; the parser never panics.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseActionError {
    #[error("unknown action kind `{0}`")]
    UnknownKind(String),
    #[error("{kind} expects {expected}, got {got} argument(s)")]
    Arity { kind: &'static str, expected: &'static str, got: usize },
    #[error("bad coordinate: {0}")]
    Coord(String),
    #[error("bad scroll direction: {0}")]
    BadDirection(String),
    #[error("malformed action expression: {0}")]
    Malformed(String),
}

/// Parse a single action expression in either the canonical grammar or the
/// four-argument scroll ingest dialect.
pub fn parse_action(text: &str) -> Result<Action, ParseActionError> {
    let s = text.trim();
    let open = s
        .find('(')
        .ok_or_else(|| ParseActionError::Malformed("missing `(`".into()))?;
    let kind = s[..open].trim();
    let body = &s[open + 1..];
    match kind {
        "click" => {
            let p = parse_one_point("click", body)?;
            Ok(Action::Click(p))
        }
        "left_double" => {
            let p = parse_one_point("left_double", body)?;
            Ok(Action::LeftDouble(p))
        }
        "right_single" => {
            let p = parse_one_point("right_single", body)?;
            Ok(Action::RightSingle(p))
        }
        "drag" => {
            let args = split_args("drag", body)?;
            if args.len() != 4 {
                return Err(ParseActionError::Arity { kind: "drag", expected: "4 coordinates", got: args.len() });
            }
            Ok(Action::Drag {
                from: Point::new(parse_coord(&args[0])?, parse_coord(&args[1])?),
                to: Point::new(parse_coord(&args[2])?, parse_coord(&args[3])?),
            })
        }
        "scroll" => parse_scroll(body),
        "type" => Ok(Action::Type(parse_payload(body)?)),
        "finished" => Ok(Action::Finished(parse_payload(body)?)),
        "hotkey" => parse_hotkey(body),
        "wait" => {
            let inner = close_args(body)?;
            if !inner.trim().is_empty() {
                return Err(ParseActionError::Arity { kind: "wait", expected: "no arguments", got: 1 });
            }
            Ok(Action::Wait)
        }
        other => Err(ParseActionError::UnknownKind(other.to_string())),
    }
}

/// Canonical textual form; inverse of [`parse_action`] on canonical strings.
pub fn serialize_action(action: &Action) -> String {
    action.to_string()
}

fn close_args(body: &str) -> Result<&str, ParseActionError> {
    let close = body
        .rfind(')')
        .ok_or_else(|| ParseActionError::Malformed("missing `)`".into()))?;
    if !body[close + 1..].trim().is_empty() {
        return Err(ParseActionError::Malformed("trailing input after `)`".into()));
    }
    Ok(&body[..close])
}

fn split_args(kind: &'static str, body: &str) -> Result<Vec<String>, ParseActionError> {
    let inner = close_args(body)?;
    if inner.trim().is_empty() {
        return Err(ParseActionError::Arity { kind, expected: "arguments", got: 0 });
    }
    Ok(inner.split(',').map(|a| a.trim().to_string()).collect())
}

fn parse_one_point(kind: &'static str, body: &str) -> Result<Point, ParseActionError> {
    let args = split_args(kind, body)?;
    if args.len() != 2 {
        return Err(ParseActionError::Arity { kind, expected: "2 coordinates", got: args.len() });
    }
    Ok(Point::new(parse_coord(&args[0])?, parse_coord(&args[1])?))
}

fn parse_coord(raw: &str) -> Result<u32, ParseActionError> {
    raw.parse::<u32>()
        .map_err(|_| ParseActionError::Coord(format!("`{raw}` is not a non-negative integer")))
}

fn parse_signed(raw: &str) -> Result<i64, ParseActionError> {
    raw.parse::<i64>()
        .map_err(|_| ParseActionError::Coord(format!("`{raw}` is not an integer")))
}

fn parse_direction(raw: &str) -> Result<Direction, ParseActionError> {
    match raw.to_ascii_lowercase().as_str() {
        "up" => Ok(Direction::Up),
        "down" => Ok(Direction::Down),
        "left" => Ok(Direction::Left),
        "right" => Ok(Direction::Right),
        other => Err(ParseActionError::BadDirection(format!("`{other}`"))),
    }
}

fn parse_scroll(body: &str) -> Result<Action, ParseActionError> {
    let args = split_args("scroll", body)?;
    let at = match args.len() {
        3 | 4 => Point::new(parse_coord(&args[0])?, parse_coord(&args[1])?),
        n => {
            return Err(ParseActionError::Arity { kind: "scroll", expected: "3 or 4 arguments", got: n })
        }
    };
    if args.len() == 3 {
        return Ok(Action::Scroll { at, direction: parse_direction(&args[2])?, amount: None });
    }
    // Canonical 4-arg form: direction name plus magnitude.
    if args[2].parse::<i64>().is_err() {
        let direction = parse_direction(&args[2])?;
        let amount = parse_coord(&args[3])?;
        return Ok(Action::Scroll { at, direction, amount: Some(amount) });
    }
    // Ingest dialect: signed pixel deltas; the dominant component gives the
    // direction (ties go vertical), its magnitude is retained.
    let sx = parse_signed(&args[2])?;
    let sy = parse_signed(&args[3])?;
    if sx == 0 && sy == 0 {
        return Err(ParseActionError::BadDirection("scroll amounts are both zero".into()));
    }
    let (direction, magnitude) = if sy.unsigned_abs() >= sx.unsigned_abs() {
        (if sy > 0 { Direction::Down } else { Direction::Up }, sy.unsigned_abs())
    } else {
        (if sx > 0 { Direction::Right } else { Direction::Left }, sx.unsigned_abs())
    };
    let amount = u32::try_from(magnitude)
        .map_err(|_| ParseActionError::Coord(format!("scroll magnitude {magnitude} out of range")))?;
    Ok(Action::Scroll { at, direction, amount: Some(amount) })
}

fn parse_hotkey(body: &str) -> Result<Action, ParseActionError> {
    let inner = close_args(body)?;
    if inner.trim().is_empty() {
        return Err(ParseActionError::Arity { kind: "hotkey", expected: "at least one key", got: 0 });
    }
    let mut keys = Vec::new();
    for part in inner.split('+') {
        keys.push(canonicalize_key(part.trim())?);
    }
    Ok(Action::Hotkey(keys))
}

fn canonicalize_key(key: &str) -> Result<String, ParseActionError> {
    if key.is_empty() {
        return Err(ParseActionError::Malformed("empty key name".into()));
    }
    if key.contains(['+', ',', '(', ')']) || key.chars().any(char::is_whitespace) {
        return Err(ParseActionError::Malformed(format!("invalid key name `{key}`")));
    }
    let mut chars = key.chars();
    let first = chars.next().expect("non-empty");
    let mut canon: String = first.to_uppercase().collect();
    canon.extend(chars.flat_map(char::to_lowercase));
    Ok(canon)
}

/// Payload scanner for `type`/`finished`: a backslash escapes the next
/// character (`\n`/`\r` decode to the control characters); payload ends at
/// the first unescaped `)`.
fn parse_payload(body: &str) -> Result<String, ParseActionError> {
    let mut out = String::new();
    let mut chars = body.chars();
    loop {
        match chars.next() {
            None => return Err(ParseActionError::Malformed("unterminated payload".into())),
            Some('\\') => match chars.next() {
                None => return Err(ParseActionError::Malformed("dangling escape".into())),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(other) => out.push(other),
            },
            Some(')') => {
                if !chars.as_str().trim().is_empty() {
                    return Err(ParseActionError::Malformed("trailing input after `)`".into()));
                }
                return Ok(out);
            }
            Some(c) => out.push(c),
        }
    }
}

fn escape_payload(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ')' => out.push_str("\\)"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

/// Pixel bounds for coordinate validation, half-open on both axes:
/// a point is in bounds iff `x < width && y < height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub fn new(width: u32, height: u32) -> Self {
        Viewport { width, height }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x < self.width && p.y < self.height
    }
}

/// Which coordinate of an action a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointRole {
    Target,
    DragStart,
    DragEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// One out-of-bounds finding. Violations are data, not failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub role: PointRole,
    pub axis: Axis,
    pub value: u32,
    pub limit: u32,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "out of bounds: {:?} {:?}={} (limit {})",
            self.role, self.axis, self.value, self.limit
        )
    }
}

/// Check every coordinate point of `action` against `viewport`. Empty
/// result means all points lie within the half-open bounds.
pub fn validate_action(action: &Action, viewport: Viewport) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (role, p) in action.points() {
        if p.x >= viewport.width {
            violations.push(Violation { role, axis: Axis::X, value: p.x, limit: viewport.width });
        }
        if p.y >= viewport.height {
            violations.push(Violation { role, axis: Axis::Y, value: p.y, limit: viewport.height });
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_click() {
        assert_eq!(parse_action("click(320,240)").unwrap(), Action::click(320, 240));
    }

    #[test]
    fn parses_nullary_wait() {
        assert_eq!(parse_action("wait()").unwrap(), Action::Wait);
    }

    #[test]
    fn drag_round_trips_to_identical_string() {
        let s = "drag(10,10,200,200)";
        let a = parse_action(s).unwrap();
        assert_eq!(a, Action::drag(10, 10, 200, 200));
        assert_eq!(serialize_action(&a), s);
    }

    #[test]
    fn serializes_finished_payload() {
        assert_eq!(serialize_action(&Action::finished("42 USD")), "finished(42 USD)");
    }

    #[test]
    fn serializes_hotkey_chord() {
        let a = Action::hotkey(["Ctrl", "A"]).unwrap();
        assert_eq!(serialize_action(&a), "hotkey(Ctrl+A)");
    }

    #[test]
    fn serializes_scroll() {
        assert_eq!(
            serialize_action(&Action::scroll(50, 60, Direction::Down)),
            "scroll(50,60,down)"
        );
    }

    #[test]
    fn whitespace_between_tokens_is_ignored() {
        let a = parse_action("  click ( 320 , 240 ) ").unwrap();
        assert_eq!(serialize_action(&a), "click(320,240)");
    }

    #[test]
    fn hotkey_keys_canonicalize_title_case() {
        let a = parse_action("hotkey( ctrl + a )").unwrap();
        assert_eq!(serialize_action(&a), "hotkey(Ctrl+A)");
        assert_eq!(parse_action("hotkey(CTRL+SHIFT+f1)").unwrap(), Action::hotkey(["ctrl", "shift", "F1"]).unwrap());
    }

    #[test]
    fn scroll_ingest_dialect_canonicalizes() {
        // Vertical dominant, positive = down.
        let a = parse_action("scroll(10,20,0,240)").unwrap();
        assert_eq!(a, Action::Scroll { at: Point::new(10, 20), direction: Direction::Down, amount: Some(240) });
        assert_eq!(serialize_action(&a), "scroll(10,20,down,240)");
        // Horizontal dominant, negative = left.
        let b = parse_action("scroll(10,20,-300,100)").unwrap();
        assert_eq!(serialize_action(&b), "scroll(10,20,left,300)");
        // Tie goes vertical.
        let c = parse_action("scroll(1,2,-5,-5)").unwrap();
        assert_eq!(serialize_action(&c), "scroll(1,2,up,5)");
    }

    #[test]
    fn scroll_zero_deltas_is_bad_direction() {
        assert!(matches!(parse_action("scroll(1,2,0,0)"), Err(ParseActionError::BadDirection(_))));
    }

    #[test]
    fn typed_errors() {
        assert!(matches!(parse_action("fly(1,2)"), Err(ParseActionError::UnknownKind(k)) if k == "fly"));
        assert!(matches!(parse_action("click(1)"), Err(ParseActionError::Arity { kind: "click", .. })));
        assert!(matches!(parse_action("click(-5,1)"), Err(ParseActionError::Coord(_))));
        assert!(matches!(parse_action("click(3.5,1)"), Err(ParseActionError::Coord(_))));
        assert!(matches!(parse_action("scroll(1,2,diagonal)"), Err(ParseActionError::BadDirection(_))));
        assert!(matches!(parse_action("wait"), Err(ParseActionError::Malformed(_))));
        assert!(matches!(parse_action("click(1,2) junk"), Err(ParseActionError::Malformed(_))));
        assert!(matches!(parse_action("hotkey()"), Err(ParseActionError::Arity { kind: "hotkey", .. })));
        assert!(matches!(parse_action("hotkey(Ctrl++A)"), Err(ParseActionError::Malformed(_))));
        assert!(matches!(parse_action("wait(1)"), Err(ParseActionError::Arity { kind: "wait", .. })));
    }

    #[test]
    fn payload_escaping_round_trips() {
        let gnarly = "a)b\\c\nd\re(f";
        let a = Action::type_text(gnarly);
        let s = serialize_action(&a);
        assert_eq!(s, "type(a\\)b\\\\c\\nd\\re(f)");
        assert_eq!(parse_action(&s).unwrap(), a);
    }

    #[test]
    fn empty_payloads_allowed() {
        assert_eq!(parse_action("type()").unwrap(), Action::type_text(""));
        assert_eq!(parse_action("finished()").unwrap(), Action::finished(""));
    }

    #[test]
    fn validate_in_and_out_of_bounds() {
        let vp = Viewport::new(1280, 720);
        assert!(validate_action(&Action::click(320, 240), vp).is_empty());

        let v = validate_action(&Action::click(2000, 240), vp);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].axis, Axis::X);
        assert_eq!(v[0].role, PointRole::Target);

        // Half-open bounds: the far corner is out on both axes.
        let v = validate_action(&Action::drag(0, 0, 1280, 720), vp);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|x| x.role == PointRole::DragEnd));
        assert!(validate_action(&Action::drag(0, 0, 1279, 719), vp).is_empty());
    }

    #[test]
    fn boundary_sweep_matches_half_open_convention() {
        let vp = Viewport::new(4, 3);
        for x in 0..6 {
            for y in 0..5 {
                let violations = validate_action(&Action::click(x, y), vp);
                let expect_ok = x < 4 && y < 3;
                assert_eq!(violations.is_empty(), expect_ok, "({x},{y})");
            }
        }
    }

    #[test]
    fn serde_uses_canonical_string_form() {
        let a = Action::scroll(5, 6, Direction::Up);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "\"scroll(5,6,up)\"");
        let back: Action = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        // The ingest dialect is accepted when deserializing.
        let ingested: Action = serde_json::from_str("\"scroll(5,6,0,120)\"").unwrap();
        assert_eq!(serialize_action(&ingested), "scroll(5,6,down,120)");
    }
}
