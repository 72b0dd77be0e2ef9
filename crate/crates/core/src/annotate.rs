//! Action-annotation overlays and zoom crops consumed by the grading and
//! thought prompts.
//!
//! Conventions: a green action-kind label at the top-left for every kind;
//! a filled red disk at the target point for click/double/right/scroll; a
//! red arrow in the scroll direction; for drag, a red arrow from start to
//! end with a green label at the start. Nullary/text actions get the label
//! only. Sidecars: `<obs>.annotated.png` and `<obs>.zoom.png`.

use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use thiserror::Error;

use crate::action::{Action, Direction, Point, Viewport};
use crate::font;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationStyle {
    pub dot_radius: u32,
    pub dot_color: Rgba<u8>,
    pub label_color: Rgba<u8>,
    pub arrow_length: u32,
    pub font_size: u32,
}

impl Default for AnnotationStyle {
    fn default() -> Self {
        AnnotationStyle {
            dot_radius: 8,
            dot_color: Rgba([255, 0, 0, 255]),
            label_color: Rgba([0, 200, 0, 255]),
            arrow_length: 60,
            font_size: 14,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("action point outside image: {0}")]
    OutOfBounds(String),
    #[error("image io failed for {path}: {message}")]
    Io { path: String, message: String },
}

/// Render the overlay for `action` onto a copy of `image`. The input is
/// never mutated and the output has identical dimensions.
pub fn annotate(
    image: &RgbaImage,
    action: &Action,
    style: &AnnotationStyle,
) -> Result<RgbaImage, AnnotateError> {
    let bounds = Viewport::new(image.width(), image.height());
    let violations = crate::action::validate_action(action, bounds);
    if !violations.is_empty() {
        return Err(AnnotateError::OutOfBounds(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }

    let mut out = image.clone();
    let scale = (style.font_size / font::GLYPH_HEIGHT).max(1);
    font::draw_text(&mut out, 4, 4, action.kind(), scale, style.label_color);

    match action {
        Action::Click(p) | Action::LeftDouble(p) | Action::RightSingle(p) => {
            fill_disk(&mut out, *p, style.dot_radius, style.dot_color);
        }
        Action::Scroll { at, direction, .. } => {
            fill_disk(&mut out, *at, style.dot_radius, style.dot_color);
            let (dx, dy) = match direction {
                Direction::Up => (0i64, -1i64),
                Direction::Down => (0, 1),
                Direction::Left => (-1, 0),
                Direction::Right => (1, 0),
            };
            let tip = (
                at.x as i64 + dx * style.arrow_length as i64,
                at.y as i64 + dy * style.arrow_length as i64,
            );
            draw_arrow(&mut out, (at.x as i64, at.y as i64), tip, style.dot_color);
        }
        Action::Drag { from, to } => {
            draw_arrow(
                &mut out,
                (from.x as i64, from.y as i64),
                (to.x as i64, to.y as i64),
                style.dot_color,
            );
            fill_disk(&mut out, *from, style.dot_radius, style.dot_color);
            // Green start label, offset so it does not cover the start dot.
            let label_y = from.y as i64 - (font::GLYPH_HEIGHT * scale + style.dot_radius + 2) as i64;
            font::draw_text(&mut out, from.x as i64 + style.dot_radius as i64 + 2, label_y, "start", scale, style.label_color);
        }
        Action::Type(_) | Action::Hotkey(_) | Action::Wait | Action::Finished(_) => {}
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum ZoomError {
    #[error("crop center ({x},{y}) outside image {w}x{h}")]
    OutOfBounds { x: u32, y: u32, w: u32, h: u32 },
    #[error("zoom factor must be positive and finite, got {0}")]
    BadFactor(f64),
    #[error("output size must be positive")]
    ZeroOutput,
}

/// Nearest-neighbor zoom crop: a window of side `out_size / factor`
/// centered on `center` (clamped at the borders), scaled to
/// `out_size` x `out_size`. Output pixel `(i,j)` samples source pixel
/// `floor(window_origin + (i,j)/factor)`.
pub fn zoom_crop(
    image: &RgbaImage,
    center: Point,
    factor: f64,
    out_size: u32,
) -> Result<RgbaImage, ZoomError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(ZoomError::BadFactor(factor));
    }
    if out_size == 0 {
        return Err(ZoomError::ZeroOutput);
    }
    let (w, h) = (image.width(), image.height());
    if center.x >= w || center.y >= h {
        return Err(ZoomError::OutOfBounds { x: center.x, y: center.y, w, h });
    }
    let side = out_size as f64 / factor;
    let origin_x = clamp_origin(center.x as f64 - side / 2.0, side, w as f64);
    let origin_y = clamp_origin(center.y as f64 - side / 2.0, side, h as f64);

    let mut out = RgbaImage::new(out_size, out_size);
    for j in 0..out_size {
        for i in 0..out_size {
            let sx = (origin_x + i as f64 / factor).floor().clamp(0.0, (w - 1) as f64) as u32;
            let sy = (origin_y + j as f64 / factor).floor().clamp(0.0, (h - 1) as f64) as u32;
            out.put_pixel(i, j, *image.get_pixel(sx, sy));
        }
    }
    Ok(out)
}

fn clamp_origin(desired: f64, side: f64, dim: f64) -> f64 {
    if side >= dim {
        0.0
    } else {
        desired.clamp(0.0, dim - side)
    }
}

/// `<obs>.annotated.png` sidecar path.
pub fn annotated_path(observation: impl AsRef<Path>) -> PathBuf {
    sidecar(observation, "annotated")
}

/// `<obs>.zoom.png` sidecar path.
pub fn zoom_path(observation: impl AsRef<Path>) -> PathBuf {
    sidecar(observation, "zoom")
}

fn sidecar(path: impl AsRef<Path>, tag: &str) -> PathBuf {
    let path = path.as_ref();
    let mut name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.push('.');
    name.push_str(tag);
    name.push_str(".png");
    path.with_file_name(name)
}

pub fn save_png(image: &RgbaImage, path: impl AsRef<Path>) -> Result<(), AnnotateError> {
    let path = path.as_ref();
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| AnnotateError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_png(path: impl AsRef<Path>) -> Result<RgbaImage, AnnotateError> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| AnnotateError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Ok(img.to_rgba8())
}

fn fill_disk(img: &mut RgbaImage, center: Point, radius: u32, color: Rgba<u8>) {
    let (cx, cy, r) = (center.x as i64, center.y as i64, radius as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                font::put_pixel_clipped(img, cx + dx, cy + dy, color);
            }
        }
    }
}

/// Bresenham line plus a small V head at the tip.
fn draw_arrow(img: &mut RgbaImage, from: (i64, i64), to: (i64, i64), color: Rgba<u8>) {
    draw_line(img, from, to, color);
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = ((dx * dx + dy * dy) as f64).sqrt();
    if len < 1.0 {
        return;
    }
    let (ux, uy) = (dx as f64 / len, dy as f64 / len);
    let head = 10.0f64.min(len);
    for sign in [-1.0f64, 1.0] {
        // Rotate the reversed direction by ~30 degrees to fan the head out.
        let (c, s) = (0.866f64, 0.5 * sign);
        let bx = -ux * c - -uy * s;
        let by = -ux * s + -uy * c;
        let end = ((to.0 as f64 + bx * head).round() as i64, (to.1 as f64 + by * head).round() as i64);
        draw_line(img, to, end, color);
    }
}

fn draw_line(img: &mut RgbaImage, from: (i64, i64), to: (i64, i64), color: Rgba<u8>) {
    let (mut x, mut y) = from;
    let (dx, dy) = ((to.0 - from.0).abs(), -(to.1 - from.1).abs());
    let sx = if from.0 < to.0 { 1 } else { -1 };
    let sy = if from.1 < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        font::put_pixel_clipped(img, x, y, color);
        if x == to.0 && y == to.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgba;

    fn blank(w: u32, h: u32) -> RgbaImage {
        RgbaImage::from_pixel(w, h, Rgba([240, 240, 240, 255]))
    }

    #[test]
    fn click_draws_dot_and_label() {
        let img = blank(1280, 720);
        let style = AnnotationStyle::default();
        let out = annotate(&img, &Action::click(100, 100), &style).unwrap();
        assert_eq!(*out.get_pixel(100, 100), style.dot_color);
        assert_eq!((out.width(), out.height()), (1280, 720));
        // Label band at the top-left contains label-colored pixels.
        let band_hit = (0..40).any(|y| (0..200).any(|x| *out.get_pixel(x, y) == style.label_color));
        assert!(band_hit);
        // Input untouched.
        assert_eq!(*img.get_pixel(100, 100), Rgba([240, 240, 240, 255]));
    }

    #[test]
    fn wait_changes_only_the_label_region() {
        let img = blank(320, 200);
        let out = annotate(&img, &Action::Wait, &AnnotationStyle::default()).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            if *p != *img.get_pixel(x, y) {
                assert!(x < 160 && y < 40, "unexpected change at ({x},{y})");
            }
        }
    }

    #[test]
    fn scroll_arrow_points_in_direction() {
        let img = blank(1280, 720);
        let style = AnnotationStyle::default();
        let out = annotate(&img, &Action::scroll(400, 300, Direction::Down), &style).unwrap();
        // Ray-sample along the vertical below the dot.
        for dy in (style.dot_radius + 2)..style.arrow_length {
            assert_eq!(*out.get_pixel(400, 300 + dy), style.dot_color, "dy={dy}");
        }
        // Nothing drawn on the opposite ray beyond the disk.
        assert_ne!(*out.get_pixel(400, 300 - style.arrow_length / 2), style.dot_color);
    }

    #[test]
    fn drag_draws_dot_color_at_start() {
        let img = blank(640, 480);
        let style = AnnotationStyle::default();
        let out = annotate(&img, &Action::drag(50, 400, 300, 100), &style).unwrap();
        assert_eq!(*out.get_pixel(50, 400), style.dot_color);
        assert!(out.pixels().any(|p| *p == style.label_color));
    }

    #[test]
    fn every_drawable_kind_marks_its_target() {
        let style = AnnotationStyle::default();
        let img = blank(800, 600);
        let actions = [
            Action::click(321, 200),
            Action::left_double(321, 200),
            Action::right_single(321, 200),
            Action::scroll(321, 200, Direction::Up),
            Action::drag(321, 200, 500, 300),
        ];
        for action in &actions {
            let out = annotate(&img, action, &style).unwrap();
            assert_eq!(*out.get_pixel(321, 200), style.dot_color, "{action}");
        }
    }

    #[test]
    fn annotate_is_deterministic() {
        let img = blank(400, 300);
        let style = AnnotationStyle::default();
        let a = annotate(&img, &Action::scroll(200, 150, Direction::Left), &style).unwrap();
        let b = annotate(&img, &Action::scroll(200, 150, Direction::Left), &style).unwrap();
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn out_of_bounds_action_is_an_error() {
        let img = blank(100, 100);
        let err = annotate(&img, &Action::click(100, 50), &AnnotationStyle::default());
        assert!(matches!(err, Err(AnnotateError::OutOfBounds(_))));
    }

    #[test]
    fn zoom_identity() {
        let mut img = blank(64, 64);
        img.put_pixel(10, 20, Rgba([1, 2, 3, 255]));
        img.put_pixel(63, 63, Rgba([9, 9, 9, 255]));
        let out = zoom_crop(&img, Point::new(32, 32), 1.0, 64).unwrap();
        assert_eq!(out.as_raw(), img.as_raw());
    }

    #[test]
    fn zoom_factor_two_matches_index_oracle() {
        let mut img = RgbaImage::new(64, 64);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgba([x as u8, y as u8, 0, 255]);
        }
        let center = Point::new(32, 32);
        let out = 32u32;
        let crop = zoom_crop(&img, center, 2.0, out).unwrap();
        for j in 0..out {
            for i in 0..out {
                // Source index oracle: center + (i - out/2) / 2.
                let sx = (center.x as f64 + (i as f64 - out as f64 / 2.0) / 2.0).floor() as u32;
                let sy = (center.y as f64 + (j as f64 - out as f64 / 2.0) / 2.0).floor() as u32;
                assert_eq!(crop.get_pixel(i, j), img.get_pixel(sx, sy), "({i},{j})");
            }
        }
    }

    #[test]
    fn zoom_clamps_at_corner() {
        let mut img = RgbaImage::new(32, 32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgba([x as u8, y as u8, 7, 255]);
        }
        // Window would extend past the top-left; it must anchor at (0,0).
        let crop = zoom_crop(&img, Point::new(0, 0), 2.0, 16).unwrap();
        for j in 0..16 {
            for i in 0..16 {
                let sx = (i as f64 / 2.0).floor() as u32;
                let sy = (j as f64 / 2.0).floor() as u32;
                assert_eq!(crop.get_pixel(i, j), img.get_pixel(sx, sy));
            }
        }
        // And out-of-image centers are rejected.
        assert!(matches!(
            zoom_crop(&img, Point::new(32, 0), 2.0, 16),
            Err(ZoomError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(annotated_path("obs/shot_004.png"), PathBuf::from("obs/shot_004.png.annotated.png"));
        assert_eq!(zoom_path("shot.png"), PathBuf::from("shot.png.zoom.png"));
    }
}
