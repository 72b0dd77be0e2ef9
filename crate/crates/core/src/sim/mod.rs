//! Deterministic simulated website: page graph, task generator, state
//! transitions, and schematic rendering.
//!
//! Pages form a tree rooted at the home page; every non-home page carries
//! Home and Back links, so any detour is recoverable. Each task buries a
//! fact (`label: value` text element) on its own leaf page, possibly below
//! the fold, and is solved by navigating to that page, scrolling the fact
//! into view, and issuing `finished(<value>)`.
//!
//! Everything is a pure function of `(seed, params)`: the same inputs
//! produce byte-identical site bundles, observations, and rollouts.

mod oracle;
mod teacher;

pub use oracle::{oracle_grade, oracle_judge, page_distances, OracleGraderBackend, OracleJudge};
pub use teacher::{collect_rollouts, derive_seed, teacher_rollout, TeacherConfig};

use std::collections::BTreeMap;

use image::{Rgba, RgbaImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Direction, Point, Viewport};
use crate::font;

pub type PageId = String;

pub const SITE_SCHEMA: &str = "websim/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2, self.y + self.h / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Link,
    Button,
    Textbox,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub bbox: Rect,
    pub label: String,
    #[serde(default)]
    pub value: Option<String>,
    #[serde(default)]
    pub link_to: Option<PageId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub label: String,
    pub scroll_height: u32,
    #[serde(default)]
    pub parent: Option<PageId>,
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteGraph {
    pub viewport: Viewport,
    pub home: PageId,
    pub pages: BTreeMap<PageId, Page>,
}

impl SiteGraph {
    pub fn page(&self, id: &str) -> Result<&Page, SimError> {
        self.pages.get(id).ok_or_else(|| SimError::UnknownPage(id.to_string()))
    }

    /// Links to child pages (excludes Home/Back navigation).
    pub fn child_links<'a>(&'a self, id: &str) -> Vec<(usize, &'a Element)> {
        let Ok(page) = self.page(id) else { return Vec::new() };
        page.elements
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.link_to
                    .as_deref()
                    .and_then(|t| self.pages.get(t))
                    .is_some_and(|t| t.parent.as_deref() == Some(id))
            })
            .collect()
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        self.child_links(id).is_empty()
    }

    /// Structural invariants: home exists, link targets exist, bboxes fit.
    pub fn validate(&self) -> Result<(), SimError> {
        self.page(&self.home)?;
        for (id, page) in &self.pages {
            for element in &page.elements {
                if let Some(target) = &element.link_to {
                    self.page(target)?;
                }
                let b = &element.bbox;
                if b.x + b.w > self.viewport.width || b.y + b.h > page.scroll_height {
                    return Err(SimError::ElementOutOfBounds { page: id.clone(), label: element.label.clone() });
                }
            }
            if page.scroll_height < self.viewport.height {
                return Err(SimError::PageTooShort { page: id.clone() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub page: PageId,
    pub fact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTask {
    pub id: String,
    pub instruction: String,
    pub goal: Goal,
    pub optimal_path: Vec<Action>,
    pub seed: u64,
}

/// What `gen-site` writes: the graph plus its task set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteBundle {
    pub schema_version: String,
    pub seed: u64,
    pub site: SiteGraph,
    pub tasks: Vec<SimTask>,
}

impl SiteBundle {
    pub fn task_by_instruction(&self, instruction: &str) -> Option<&SimTask> {
        self.tasks.iter().find(|t| t.instruction == instruction)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown page `{0}`")]
    UnknownPage(String),
    #[error("element `{label}` on page `{page}` exceeds page bounds")]
    ElementOutOfBounds { page: String, label: String },
    #[error("page `{page}` is shorter than the viewport")]
    PageTooShort { page: String },
    #[error("undecodable sim state id: {0}")]
    BadStateId(String),
    #[error("unknown task instruction: {0}")]
    UnknownTask(String),
}

/// A point-in-time simulator state. Encodes to a compact JSON state id so
/// observations can be stored by reference and decoded later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub page: PageId,
    pub scroll: u32,
    #[serde(default)]
    pub focused: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<usize, String>,
    #[serde(default)]
    pub finished: Option<String>,
}

impl SimState {
    pub fn initial(site: &SiteGraph) -> Self {
        SimState {
            page: site.home.clone(),
            scroll: 0,
            focused: None,
            inputs: BTreeMap::new(),
            finished: None,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn decode(id: &str) -> Result<Self, SimError> {
        serde_json::from_str(id).map_err(|e| SimError::BadStateId(format!("{id}: {e}")))
    }

    pub fn is_terminal(&self) -> bool {
        self.finished.is_some()
    }
}

/// Is `element` fully inside the visible window of `state`?
pub fn element_visible(site: &SiteGraph, state: &SimState, element: &Element) -> bool {
    let vh = site.viewport.height;
    element.bbox.y >= state.scroll && element.bbox.y + element.bbox.h <= state.scroll + vh
}

/// Apply one action to a state. Total: actions that hit nothing are legal
/// no-op transitions — that is how teacher noise manifests. Scrolling
/// moves by one viewport height regardless of any pixel amount.
pub fn apply(site: &SiteGraph, state: &SimState, action: &Action) -> SimState {
    let mut next = state.clone();
    if state.is_terminal() {
        return next;
    }
    let Ok(page) = site.page(&state.page) else { return next };
    match action {
        Action::Finished(answer) => next.finished = Some(answer.clone()),
        Action::Click(p) | Action::LeftDouble(p) => {
            let doc_y = p.y.saturating_add(state.scroll);
            let hit = page
                .elements
                .iter()
                .enumerate()
                .find(|(_, e)| e.bbox.contains(p.x, doc_y));
            match hit {
                Some((_, element)) if element.link_to.is_some() => {
                    next.page = element.link_to.clone().expect("checked");
                    next.scroll = 0;
                    next.focused = None;
                    next.inputs.clear();
                }
                Some((idx, element)) if element.kind == ElementKind::Textbox => {
                    next.focused = Some(idx);
                }
                _ => {}
            }
        }
        Action::Scroll { direction, .. } => {
            let vh = site.viewport.height;
            let max_scroll = page.scroll_height.saturating_sub(vh);
            match direction {
                Direction::Down => next.scroll = (state.scroll + vh).min(max_scroll),
                Direction::Up => next.scroll = state.scroll.saturating_sub(vh),
                Direction::Left | Direction::Right => {}
            }
        }
        Action::Type(text) => {
            if let Some(idx) = state.focused {
                if page.elements.get(idx).is_some_and(|e| e.kind == ElementKind::Textbox) {
                    next.inputs.insert(idx, text.clone());
                }
            }
        }
        Action::RightSingle(_) | Action::Drag { .. } | Action::Hotkey(_) | Action::Wait => {}
    }
    next
}

/// Schematic raster of the visible window: filled boxes plus labels.
pub fn render(site: &SiteGraph, state: &SimState) -> Result<RgbaImage, SimError> {
    let page = site.page(&state.page)?;
    let (vw, vh) = (site.viewport.width, site.viewport.height);
    let mut img = RgbaImage::from_pixel(vw, vh, Rgba([255, 255, 255, 255]));

    for (idx, element) in page.elements.iter().enumerate() {
        let top = element.bbox.y as i64 - state.scroll as i64;
        let bottom = top + element.bbox.h as i64;
        if bottom <= 36 || top >= vh as i64 {
            continue;
        }
        let fill = match element.kind {
            ElementKind::Link => Rgba([70, 110, 200, 255]),
            ElementKind::Button => Rgba([150, 150, 150, 255]),
            ElementKind::Textbox => Rgba([250, 250, 250, 255]),
            ElementKind::Text => Rgba([235, 225, 180, 255]),
        };
        fill_rect(&mut img, element.bbox.x as i64, top, element.bbox.w, element.bbox.h, fill);
        if element.kind == ElementKind::Textbox {
            outline_rect(&mut img, element.bbox.x as i64, top, element.bbox.w, element.bbox.h, Rgba([90, 90, 90, 255]));
        }
        let text_color = match element.kind {
            ElementKind::Link => Rgba([255, 255, 255, 255]),
            _ => Rgba([30, 30, 30, 255]),
        };
        let label = match (&element.kind, &element.value, state.inputs.get(&idx)) {
            (ElementKind::Textbox, _, Some(typed)) => format!("{}: {}", element.label, typed),
            (_, Some(value), _) => format!("{}: {}", element.label, value),
            _ => element.label.clone(),
        };
        let text_y = top + (element.bbox.h as i64 - font::GLYPH_HEIGHT as i64) / 2;
        font::draw_text(&mut img, element.bbox.x as i64 + 6, text_y, &label, 1, text_color);
    }

    // Browser-chrome style header band drawn over everything.
    fill_rect(&mut img, 0, 0, vw, 36, Rgba([60, 60, 60, 255]));
    font::draw_text(&mut img, 8, 8, &page.label, 2, Rgba([230, 230, 230, 255]));
    Ok(img)
}

fn fill_rect(img: &mut RgbaImage, x: i64, y: i64, w: u32, h: u32, color: Rgba<u8>) {
    for dy in 0..h as i64 {
        for dx in 0..w as i64 {
            font::put_pixel_clipped(img, x + dx, y + dy, color);
        }
    }
}

fn outline_rect(img: &mut RgbaImage, x: i64, y: i64, w: u32, h: u32, color: Rgba<u8>) {
    for dx in 0..w as i64 {
        font::put_pixel_clipped(img, x + dx, y, color);
        font::put_pixel_clipped(img, x + dx, y + h as i64 - 1, color);
    }
    for dy in 0..h as i64 {
        font::put_pixel_clipped(img, x, y + dy, color);
        font::put_pixel_clipped(img, x + w as i64 - 1, y + dy, color);
    }
}

/// Site generation knobs. `pages` is a lower bound: the generator grows
/// extra leaves until every task can live on its own leaf page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenParams {
    pub pages: usize,
    pub depth: usize,
    pub tasks: usize,
    /// Page height of leaf pages in viewport multiples; 1 = nothing below
    /// the fold (flat site).
    pub scroll_pages: u32,
    pub viewport: Viewport,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { pages: 24, depth: 3, tasks: 8, scroll_pages: 3, viewport: Viewport::new(1280, 720) }
    }
}

const MAX_CHILDREN: usize = 10;
const NOUNS: [&str; 16] = [
    "atlas", "baker", "cedar", "delta", "ember", "fjord", "grove", "harbor", "iris", "juniper",
    "kiln", "lumen", "maple", "nectar", "onyx", "pylon",
];

/// Deterministically generate a site graph and its solvable task set.
pub fn generate_site(seed: u64, params: &GenParams) -> SiteBundle {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let params = normalize(params);
    let vh = params.viewport.height;

    // Tree skeleton: depth-bounded internal backbone, then leaves.
    let internal_budget = params.pages.saturating_sub(params.tasks).max(1);
    let mut depth_of: Vec<usize> = vec![0];
    let mut parent_of: Vec<Option<usize>> = vec![None];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let add_page = |rng: &mut ChaCha12Rng,
                        depth_of: &mut Vec<usize>,
                        parent_of: &mut Vec<Option<usize>>,
                        children: &mut Vec<Vec<usize>>,
                        max_parent_depth: usize|
     -> Option<usize> {
        let candidates: Vec<usize> = (0..depth_of.len())
            .filter(|&i| depth_of[i] < max_parent_depth && children[i].len() < MAX_CHILDREN)
            .collect();
        let &parent = candidates.as_slice().choose(rng)?;
        let idx = depth_of.len();
        depth_of.push(depth_of[parent] + 1);
        parent_of.push(Some(parent));
        children.push(Vec::new());
        children[parent].push(idx);
        Some(idx)
    };
    for _ in 1..internal_budget {
        if add_page(&mut rng, &mut depth_of, &mut parent_of, &mut children, params.depth - 1).is_none() {
            break;
        }
    }
    let mut leaves: Vec<usize> = Vec::new();
    while leaves.len() < params.tasks.max(params.pages.saturating_sub(depth_of.len())) {
        match add_page(&mut rng, &mut depth_of, &mut parent_of, &mut children, params.depth) {
            Some(idx) => leaves.push(idx),
            None => break,
        }
    }
    // Only childless pages can host facts.
    let leaves: Vec<usize> = (0..depth_of.len()).filter(|&i| children[i].is_empty()).collect();
    assert!(leaves.len() >= params.tasks, "generator must grow enough leaf pages");

    let page_id = |i: usize| format!("p{i:03}");
    let page_label = |i: usize| {
        if i == 0 {
            "home".to_string()
        } else {
            format!("{}-{i:03}", NOUNS[i % NOUNS.len()])
        }
    };

    // Pick goal leaves and bury one fact per task.
    let mut goal_leaves = leaves.clone();
    goal_leaves.shuffle(&mut rng);
    goal_leaves.truncate(params.tasks);
    let mut facts: BTreeMap<usize, (String, String, u32)> = BTreeMap::new();
    for (t, &leaf) in goal_leaves.iter().enumerate() {
        let key = format!("entry-{t:03}-{}", NOUNS[rng.gen_range(0..NOUNS.len())]);
        let value = format!(
            "{}{}-{}",
            char::from(b'A' + rng.gen_range(0..26u8)),
            char::from(b'A' + rng.gen_range(0..26u8)),
            rng.gen_range(1000..10000)
        );
        let bucket = if params.scroll_pages <= 1 { 0 } else { rng.gen_range(1..params.scroll_pages) };
        facts.insert(leaf, (key, value, bucket));
    }

    // Materialize pages.
    let mut pages = BTreeMap::new();
    for i in 0..depth_of.len() {
        let is_goal_leaf = facts.contains_key(&i);
        let scroll_height = if children[i].is_empty() && is_goal_leaf {
            vh * params.scroll_pages.max(1)
        } else {
            vh
        };
        let mut elements = Vec::new();
        for (k, &child) in children[i].iter().enumerate() {
            elements.push(Element {
                kind: ElementKind::Link,
                bbox: Rect { x: 20, y: 90 + k as u32 * 50, w: 240, h: 36 },
                label: format!("go {}", page_label(child)),
                value: None,
                link_to: Some(page_id(child)),
            });
        }
        if let Some(parent) = parent_of[i] {
            elements.push(Element {
                kind: ElementKind::Link,
                bbox: Rect { x: 300, y: 90, w: 160, h: 36 },
                label: "home".to_string(),
                value: None,
                link_to: Some(page_id(0)),
            });
            elements.push(Element {
                kind: ElementKind::Link,
                bbox: Rect { x: 300, y: 140, w: 160, h: 36 },
                label: "back".to_string(),
                value: None,
                link_to: Some(page_id(parent)),
            });
        }
        elements.push(Element {
            kind: ElementKind::Button,
            bbox: Rect { x: 300, y: 200, w: 160, h: 36 },
            label: "refresh".to_string(),
            value: None,
            link_to: None,
        });
        if rng.gen_bool(0.3) {
            elements.push(Element {
                kind: ElementKind::Textbox,
                bbox: Rect { x: 300, y: 260, w: 240, h: 36 },
                label: "search".to_string(),
                value: None,
                link_to: None,
            });
        }
        elements.push(Element {
            kind: ElementKind::Text,
            bbox: Rect { x: 620, y: 90, w: 440, h: 30 },
            label: format!("note-{i:03}"),
            value: Some(format!("lorem-{}", rng.gen_range(100..1000))),
            link_to: None,
        });
        if let Some((key, value, bucket)) = facts.get(&i) {
            elements.push(Element {
                kind: ElementKind::Text,
                bbox: Rect { x: 620, y: bucket * vh + 300, w: 440, h: 30 },
                label: key.clone(),
                value: Some(value.clone()),
                link_to: None,
            });
        }
        pages.insert(
            page_id(i),
            Page {
                label: page_label(i),
                scroll_height,
                parent: parent_of[i].map(page_id),
                elements,
            },
        );
    }

    let site = SiteGraph { viewport: params.viewport, home: page_id(0), pages };
    site.validate().expect("generated site is structurally valid");

    // Tasks with precomputed optimal paths.
    let mut tasks = Vec::new();
    for (t, &leaf) in goal_leaves.iter().enumerate() {
        let (key, value, bucket) = facts[&leaf].clone();
        let goal_page = page_id(leaf);
        let optimal_path = optimal_path(&site, &goal_page, bucket, &value);
        tasks.push(SimTask {
            id: format!("task-{t:03}"),
            instruction: format!("Find the value of \"{key}\" and submit it with finished."),
            goal: Goal { page: goal_page, fact: value },
            optimal_path,
            seed: rng.gen(),
        });
    }

    SiteBundle { schema_version: SITE_SCHEMA.to_string(), seed, site, tasks }
}

fn normalize(params: &GenParams) -> GenParams {
    GenParams {
        pages: params.pages.max(2),
        depth: params.depth.max(1),
        tasks: params.tasks.max(1),
        scroll_pages: params.scroll_pages.max(1),
        viewport: params.viewport,
    }
}

/// Clicks along the tree path, scrolls down to the fact bucket, then
/// `finished(value)`. Length is bounded by depth + (scroll_pages - 1) + 1.
fn optimal_path(site: &SiteGraph, goal_page: &str, bucket: u32, value: &str) -> Vec<Action> {
    let mut chain = vec![goal_page.to_string()];
    while let Some(parent) = site.pages[chain.last().expect("non-empty")].parent.clone() {
        chain.push(parent);
    }
    chain.reverse();
    let center = Point::new(site.viewport.width / 2, site.viewport.height / 2);
    let mut path = Vec::new();
    for hop in chain.windows(2) {
        let page = &site.pages[&hop[0]];
        let link = page
            .elements
            .iter()
            .find(|e| e.link_to.as_deref() == Some(hop[1].as_str()))
            .expect("tree link exists");
        let p = link.bbox.center();
        path.push(Action::click(p.x, p.y));
    }
    for _ in 0..bucket {
        path.push(Action::Scroll { at: center, direction: Direction::Down, amount: None });
    }
    path.push(Action::finished(value));
    path
}
