//! Bitmap rendering of hypothesis text for the text-only condition.
//!
//! Hypotheses are drawn into grayscale PNGs at HIT-build time so the
//! client never receives them as selectable text.

use std::sync::Arc;

use font8x8::{UnicodeFonts, BASIC_FONTS, LATIN_FONTS};

use crate::assets::{content_hash, AssetStore, IndexEntry, MediaFormat};
use crate::hitgen::{Condition, Hit};

pub const LINE_CHARS: usize = 60;
const SCALE: usize = 2;
const MARGIN: usize = 8;
const GLYPH: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("HIT {0} is not a text-only HIT")]
    NotTextOnly(String),
    #[error("png encoding: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("asset store: {0}")]
    Io(#[from] std::io::Error),
}

pub fn raster_id(text: &str) -> String {
    content_hash(&["mmda-raster-v1", text])
}

/// Greedy word wrap at `width` characters; over-long words are hard-split.
pub fn wrap(text: &str, width: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut cur = String::new();
    for word in text.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        while word.len() > width {
            if !cur.is_empty() {
                lines.push(std::mem::take(&mut cur));
            }
            lines.push(word.drain(..width).collect());
        }
        let word: String = word.into_iter().collect();
        let needed = if cur.is_empty() { word.chars().count() } else { cur.chars().count() + 1 + word.chars().count() };
        if needed > width && !cur.is_empty() {
            lines.push(std::mem::take(&mut cur));
        }
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.push_str(&word);
    }
    if !cur.is_empty() || lines.is_empty() {
        lines.push(cur);
    }
    lines
}

fn glyph(c: char) -> [u8; 8] {
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .or_else(|| BASIC_FONTS.get('?'))
        .unwrap_or([0; 8])
}

/// Renders `text` as a black-on-white 8-bit grayscale PNG.
pub fn render_png(text: &str) -> Result<(Vec<u8>, u32, u32), RasterError> {
    let lines = wrap(text, LINE_CHARS);
    let cols = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0).max(1);
    let width = 2 * MARGIN + cols * GLYPH * SCALE;
    let line_h = (GLYPH + 4) * SCALE;
    let height = 2 * MARGIN + lines.len() * line_h;
    let mut pixels = vec![255u8; width * height];
    for (li, line) in lines.iter().enumerate() {
        for (ci, ch) in line.chars().enumerate() {
            let g = glyph(ch);
            for (row, bits) in g.iter().enumerate() {
                for col in 0..GLYPH {
                    if bits & (1 << col) == 0 {
                        continue;
                    }
                    for dy in 0..SCALE {
                        for dx in 0..SCALE {
                            let x = MARGIN + (ci * GLYPH + col) * SCALE + dx;
                            let y = MARGIN + li * line_h + row * SCALE + dy;
                            pixels[y * width + x] = 0;
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&pixels)?;
        writer.finish()?;
    }
    Ok((out, width as u32, height as u32))
}

/// Stores the raster for `text` unless already present; returns its id.
pub fn store_raster(store: &AssetStore, text: &str) -> Result<String, RasterError> {
    let id = raster_id(text);
    if store.contains(&id) {
        return Ok(id);
    }
    let lock = store.writer_lock(&id);
    let _guard = lock.lock().expect("asset lock poisoned");
    if !store.contains(&id) {
        let (png, _, _) = render_png(text)?;
        let entry = IndexEntry { format: MediaFormat::Png, duration_ms: 0, bytes: png.len() as u64, text: text.to_string() };
        store.put(&id, entry, &png)?;
    }
    Ok(id)
}

/// Fills `image_ref` on every item of a text-only HIT.
pub fn render_hit_rasters(store: &Arc<AssetStore>, hit: &Hit) -> Result<Hit, RasterError> {
    if hit.condition != Condition::TextOnly {
        return Err(RasterError::NotTextOnly(hit.hit_id.clone()));
    }
    let mut out = hit.clone();
    for item in &mut out.items {
        item.image_ref = Some(store_raster(store, &item.shown_text)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_respects_width() {
        let text = "aa bbb cccc dd eeeeeeee f";
        let lines = wrap(text, 8);
        assert_eq!(lines, vec!["aa bbb", "cccc dd", "eeeeeeee", "f"]);
        assert_eq!(wrap("abcdefghij", 4), vec!["abcd", "efgh", "ij"]);
        assert_eq!(wrap("", 4), vec![""]);
    }

    #[test]
    fn png_decodes_with_expected_size() {
        let (bytes, w, h) = render_png("Hallo Welt").unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(&bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (w, h));
        assert_eq!(w as usize, 2 * MARGIN + 10 * GLYPH * SCALE);
        let dark = buf[..info.buffer_size()].iter().filter(|p| **p == 0).count();
        assert!(dark > 0);
    }

    #[test]
    fn store_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path()).unwrap();
        let a = store_raster(&store, "ein Satz").unwrap();
        let b = store_raster(&store, "ein Satz").unwrap();
        assert_eq!(a, b);
        assert_eq!(store.len(), 1);
        assert_eq!(store.entry(&a).unwrap().format, MediaFormat::Png);
    }
}
