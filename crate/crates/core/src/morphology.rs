//! Binary opening/closing with square structuring elements.
//!
//! Borders replicate the nearest in-bounds pixel, so a region touching the
//! image edge is not eroded by the edge itself.

use crate::raster::Mask;

/// Opening radius, then closing radius. `(0, 0)` leaves masks untouched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MorphRadii {
    pub opening: usize,
    pub closing: usize,
}

impl MorphRadii {
    pub fn new(opening: usize, closing: usize) -> Self {
        Self { opening, closing }
    }

    pub fn is_identity(&self) -> bool {
        self.opening == 0 && self.closing == 0
    }
}

/// Opening (erode then dilate) followed by closing (dilate then erode).
pub fn morph_clean(mask: &Mask, opening_radius: usize, closing_radius: usize) -> Mask {
    let mut out = mask.clone();
    if opening_radius > 0 {
        out = dilate(&erode(&out, opening_radius), opening_radius);
    }
    if closing_radius > 0 {
        out = erode(&dilate(&out, closing_radius), closing_radius);
    }
    out
}

pub fn erode(mask: &Mask, radius: usize) -> Mask {
    // min over the window; separable for square elements
    sweep(&sweep_rows(mask, radius, Reduce::All), radius, Reduce::All)
}

pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    sweep(&sweep_rows(mask, radius, Reduce::Any), radius, Reduce::Any)
}

#[derive(Clone, Copy)]
enum Reduce {
    Any,
    All,
}

fn sweep_rows(mask: &Mask, radius: usize, reduce: Reduce) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.values();
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            out[y * w + x] = fold(&row[lo..=hi], reduce);
        }
    }
    Mask::from_raw(w, h, out)
}

fn sweep(mask: &Mask, radius: usize, reduce: Reduce) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.values();
    let mut out = vec![0u8; w * h];
    let mut column = Vec::with_capacity(2 * radius + 1);
    for x in 0..w {
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            column.clear();
            column.extend((lo..=hi).map(|yy| src[yy * w + x]));
            out[y * w + x] = fold(&column, reduce);
        }
    }
    Mask::from_raw(w, h, out)
}

// Clamping the window to the image is equivalent to replicate padding for
// min/max filters: the replicated values are already inside the window.
fn fold(window: &[u8], reduce: Reduce) -> u8 {
    match reduce {
        Reduce::Any => u8::from(window.contains(&1)),
        Reduce::All => u8::from(window.iter().all(|v| *v == 1)),
    }
}
