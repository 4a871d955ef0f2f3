//! Deterministic screenshot rasterizer.
//!
//! White canvas at the device dimensions, visible elements drawn in fixture
//! order as bordered rectangles with bitmap-glyph text, plus a status bar
//! showing the foreground screen and the frozen clock. Identical states
//! produce byte-identical PNG bytes.

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::font::{glyph, GLYPH_H, GLYPH_W};
use super::{DeviceState, ElementRole, Rect};
use crate::actions::Point;

const STATUS_BAR_H: u32 = 64;
const TEXT_SCALE: u32 = 3;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([20, 20, 20]);
const BORDER: Rgb<u8> = Rgb([40, 40, 40]);
const BAR_BG: Rgb<u8> = Rgb([30, 40, 60]);
const BAR_INK: Rgb<u8> = Rgb([235, 240, 245]);
const BUTTON_FILL: Rgb<u8> = Rgb([214, 228, 247]);
const FIELD_FILL: Rgb<u8> = Rgb([248, 248, 248]);
const LIST_FILL: Rgb<u8> = Rgb([240, 240, 240]);

/// One rendered observation: the pixels, their digest, and the structured
/// view of what is on screen (the simulator's accessibility tree).
#[derive(Debug, Clone)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub png: Vec<u8>,
    pub digest: String,
    pub elements: Vec<VisibleElement>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibleElement {
    pub id: String,
    /// Static label text from the fixture.
    pub text: String,
    /// Current typed/toggled buffer, empty if none.
    pub content: String,
    pub role: ElementRole,
    pub bbox: Rect,
    pub center: Point,
}

impl DeviceState {
    /// Rasterizes the foreground screen. Pure function of the state.
    pub fn render_frame(&self) -> Frame {
        let (width, height) = self.screen_dims;
        let mut img = RgbImage::from_pixel(width, height, BG);

        // Status bar: screen path on the left, frozen clock on the right.
        fill_rect(&mut img, 0, 0, width, STATUS_BAR_H, BAR_BG);
        let title = format!("{}/{}", self.foreground.app, self.foreground.screen);
        draw_text(&mut img, 12, 20, &title, BAR_INK, width.saturating_sub(24));
        let clock = format!("{} {}", self.clock.date, self.clock.weekday);
        let clock_w = text_width(&clock);
        draw_text(&mut img, width.saturating_sub(clock_w + 12), 20, &clock, BAR_INK, clock_w + 4);

        let mut elements = Vec::new();
        for el in self.visible_elements() {
            let content = self.field_content(&self.foreground.screen, &el.id).to_string();
            draw_element(&mut img, el, &content, self.focused_field.as_deref() == Some(el.id.as_str()));
            elements.push(VisibleElement {
                id: el.id.clone(),
                text: el.text.clone(),
                content,
                role: el.role,
                bbox: el.bbox,
                center: el.bbox.center(),
            });
        }

        let mut png = Vec::new();
        PngEncoder::new(&mut png)
            .write_image(&img, width, height, ExtendedColorType::Rgb8)
            .expect("png encoding into a Vec cannot fail");
        let digest = hex::encode(Sha256::digest(&png));
        Frame { width, height, png, digest, elements }
    }
}

fn draw_element(img: &mut RgbImage, el: &super::UiElement, content: &str, focused: bool) {
    let Rect { x, y, w, h } = el.bbox;
    match el.role {
        ElementRole::Button => {
            fill_rect(img, x, y, w, h, BUTTON_FILL);
            stroke_rect(img, x, y, w, h, BORDER, 2);
        }
        ElementRole::TextField => {
            fill_rect(img, x, y, w, h, FIELD_FILL);
            stroke_rect(img, x, y, w, h, BORDER, if focused { 4 } else { 2 });
        }
        ElementRole::ListItem => {
            fill_rect(img, x, y, w, h, LIST_FILL);
            stroke_rect(img, x, y, w, h, BORDER, 1);
        }
        ElementRole::Label => {}
    }

    let line = match (el.text.is_empty(), content.is_empty()) {
        (_, true) => el.text.clone(),
        (true, false) => content.to_string(),
        (false, false) => format!("{}: {}", el.text, content),
    };
    let glyph_h = GLYPH_H * TEXT_SCALE;
    let ty = y + h.saturating_sub(glyph_h) / 2;
    draw_text(img, x + 10, ty, &line, INK, w.saturating_sub(20));
}

fn text_width(s: &str) -> u32 {
    s.chars().count() as u32 * (GLYPH_W + 1) * TEXT_SCALE
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: Rgb<u8>, max_w: u32) {
    let advance = (GLYPH_W + 1) * TEXT_SCALE;
    let mut cx = x;
    for c in text.chars() {
        if cx + advance > x + max_w {
            break;
        }
        let cols = glyph(c);
        for (col, bits) in cols.iter().enumerate() {
            for row in 0..GLYPH_H {
                if bits & (1 << row) != 0 {
                    fill_rect(
                        img,
                        cx + col as u32 * TEXT_SCALE,
                        y + row * TEXT_SCALE,
                        TEXT_SCALE,
                        TEXT_SCALE,
                        color,
                    );
                }
            }
        }
        cx += advance;
    }
}

fn fill_rect(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>) {
    let (iw, ih) = img.dimensions();
    for py in y..(y + h).min(ih) {
        for px in x..(x + w).min(iw) {
            img.put_pixel(px, py, color);
        }
    }
}

fn stroke_rect(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>, thickness: u32) {
    let t = thickness.min(w / 2).min(h / 2).max(1);
    fill_rect(img, x, y, w, t, color);
    fill_rect(img, x, y + h - t, w, t, color);
    fill_rect(img, x, y, t, h, color);
    fill_rect(img, x + w - t, y, t, h, color);
}
