//! Sobel gradients, the Tenengrad focus measure and chronological
//! best-focus frame selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::image::{Grayscale, Rect};
use crate::par;

pub const SOBEL_X: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
pub const SOBEL_Y: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

pub const DEFAULT_REGION_SIZE: usize = 64;
pub const DEFAULT_GROUP_SIZE: usize = 5;

/// Sobel responses over the interior of an image (valid convolution, the
/// one-pixel border is dropped), so `width`/`height` are two less than the
/// source image's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<i32>,
    pub gy: Vec<i32>,
}

impl GradientField {
    /// Gradient at source-image pixel `(x, y)`, which must be interior.
    pub fn at(&self, x: usize, y: usize) -> (i32, i32) {
        let i = (y - 1) * self.width + (x - 1);
        (self.gx[i], self.gy[i])
    }
}

/// Sum of squared gradient magnitudes over a region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FocusScore(pub u64);

impl FocusScore {
    pub fn value(self) -> u64 {
        self.0
    }
}

#[inline]
fn sobel_at(img: &Grayscale, x: usize, y: usize) -> (i32, i32) {
    let w = img.width();
    let d = img.data();
    let p = |dx: usize, dy: usize| d[(y + dy - 1) * w + (x + dx - 1)] as i32;
    let (tl, tc, tr) = (p(0, 0), p(1, 0), p(2, 0));
    let (ml, mr) = (p(0, 1), p(2, 1));
    let (bl, bc, br) = (p(0, 2), p(1, 2), p(2, 2));
    let gx = (tr - tl) + 2 * (mr - ml) + (br - bl);
    let gy = (bl - tl) + 2 * (bc - tc) + (br - tr);
    (gx, gy)
}

fn require_min(width: usize, height: usize, min_w: usize, min_h: usize) -> Result<()> {
    if width < min_w || height < min_h {
        return Err(Error::DimensionTooSmall {
            width,
            height,
            min_width: min_w,
            min_height: min_h,
        });
    }
    Ok(())
}

pub fn sobel_gradients(img: &Grayscale) -> Result<GradientField> {
    require_min(img.width(), img.height(), 3, 3)?;
    let (w, h) = (img.width() - 2, img.height() - 2);
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 1..=h {
        for x in 1..=w {
            let (a, b) = sobel_at(img, x, y);
            gx.push(a);
            gy.push(b);
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        gx,
        gy,
    })
}

/// Tenengrad score of `region`: the sum of `gx² + gy²` over the region's
/// interior pixels, using only pixels inside the region.
pub fn tenengrad_region(img: &Grayscale, region: &Rect) -> Result<FocusScore> {
    img.check_region(region)?;
    require_min(region.w, region.h, 3, 3)?;
    let mut sum = 0u64;
    for y in region.y + 1..region.bottom() - 1 {
        for x in region.x + 1..region.right() - 1 {
            let (gx, gy) = sobel_at(img, x, y);
            sum += (gx * gx + gy * gy) as u64;
        }
    }
    Ok(FocusScore(sum))
}

/// Non-overlapping `size`×`size` tiles covering `img`; partial strips at
/// the right and bottom are dropped.
pub fn focus_tiles(width: usize, height: usize, size: usize) -> Vec<Rect> {
    let mut tiles = Vec::new();
    if size == 0 {
        return tiles;
    }
    for ty in 0..height / size {
        for tx in 0..width / size {
            tiles.push(Rect::new(tx * size, ty * size, size, size));
        }
    }
    tiles
}

/// Focus value of a whole frame: the best Tenengrad score over its tiles,
/// so that low-texture areas (the corneal rim) do not drag it down.
pub fn image_focus_value(img: &Grayscale, region_size: usize) -> Result<FocusScore> {
    if region_size < 3 {
        return Err(Error::InvalidParameter(format!("region size {region_size} is below 3")));
    }
    require_min(img.width(), img.height(), region_size, region_size)?;
    let tiles = focus_tiles(img.width(), img.height(), region_size);
    let scores = par::map(&tiles, |t| tenengrad_region(img, t));
    let mut best = FocusScore(0);
    for s in scores {
        best = best.max(s?);
    }
    Ok(best)
}

/// A frame picked by [`select_focused_frames`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    /// Position of the frame in the input slice.
    pub position: usize,
    pub id: String,
    pub index: u64,
    pub score: FocusScore,
    /// Zero-based window number.
    pub window: usize,
}

/// Splits `frames` into consecutive windows of `group_size` (the last may be
/// short) and keeps the best-focused frame of each; ties go to the earliest
/// frame. The result is in chronological order.
pub fn select_focused_frames(frames: &[FrameRecord], group_size: usize, region_size: usize) -> Result<Vec<Selection>> {
    if group_size == 0 {
        return Err(Error::InvalidParameter("group size must be at least 1".into()));
    }
    if let Some(w) = frames.windows(2).find(|w| w[1].index <= w[0].index) {
        return Err(Error::InvalidParameter(format!(
            "frames are not in chronological order at {}",
            w[1].id
        )));
    }
    let scores = par::map(frames, |f| image_focus_value(&f.image, region_size));
    let scores = scores.into_iter().collect::<Result<Vec<_>>>()?;

    let selected = scores
        .chunks(group_size)
        .enumerate()
        .map(|(window, chunk)| {
            let mut best = 0;
            for (k, s) in chunk.iter().enumerate() {
                if *s > chunk[best] {
                    best = k;
                }
            }
            let position = window * group_size + best;
            Selection {
                position,
                id: frames[position].id.clone(),
                index: frames[position].index,
                score: chunk[best],
                window,
            }
        })
        .collect();
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns(cols: [u8; 3]) -> Grayscale {
        Grayscale::from_fn(3, 3, |x, _| cols[x])
    }

    /// Direct 3×3 kernel application, independent of `sobel_at`.
    fn convolve(img: &Grayscale, k: &[[i32; 3]; 3], x: usize, y: usize) -> i32 {
        let mut acc = 0;
        for (ky, row) in k.iter().enumerate() {
            for (kx, &kv) in row.iter().enumerate() {
                acc += kv * img.get(x + kx - 1, y + ky - 1) as i32;
            }
        }
        acc
    }

    #[test]
    fn kernels_match_definitions() {
        let img = Grayscale::from_fn(9, 7, |x, y| ((x * 37 + y * 91) % 251) as u8);
        let g = sobel_gradients(&img).unwrap();
        assert_eq!((g.width, g.height), (7, 5));
        for y in 1..6 {
            for x in 1..8 {
                assert_eq!(
                    g.at(x, y),
                    (convolve(&img, &SOBEL_X, x, y), convolve(&img, &SOBEL_Y, x, y))
                );
            }
        }
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let g = sobel_gradients(&Grayscale::filled(10, 10, 128)).unwrap();
        assert!(g.gx.iter().chain(&g.gy).all(|&v| v == 0));
    }

    #[test]
    fn step_column_gradient() {
        let g = sobel_gradients(&columns([0, 0, 255])).unwrap();
        assert_eq!(g.gx, vec![1020]);
        assert_eq!(g.gy, vec![0]);
        let s = tenengrad_region(&columns([0, 0, 255]), &Rect::new(0, 0, 3, 3)).unwrap();
        assert_eq!(s, FocusScore(1_040_400));
    }

    #[test]
    fn gradients_respect_kernel_mass_bound() {
        let img = Grayscale::from_fn(12, 12, |x, y| if (x + y) % 2 == 0 { 255 } else { 0 });
        let g = sobel_gradients(&img).unwrap();
        assert!(g.gx.iter().chain(&g.gy).all(|v| v.abs() <= 4 * 255));
    }

    #[test]
    fn small_images_are_rejected() {
        assert!(matches!(
            sobel_gradients(&Grayscale::filled(2, 5, 0)),
            Err(Error::DimensionTooSmall { .. })
        ));
        let img = Grayscale::filled(10, 10, 0);
        assert!(matches!(
            tenengrad_region(&img, &Rect::new(8, 8, 3, 3)),
            Err(Error::RegionOutOfBounds { .. })
        ));
        assert!(matches!(
            tenengrad_region(&img, &Rect::new(0, 0, 2, 3)),
            Err(Error::DimensionTooSmall { .. })
        ));
        assert!(image_focus_value(&img, 16).is_err());
        assert!(image_focus_value(&img, 2).is_err());
    }

    #[test]
    fn focus_value_of_uniform_image_is_zero() {
        let img = Grayscale::filled(130, 70, 200);
        assert_eq!(image_focus_value(&img, 64).unwrap(), FocusScore(0));
    }

    #[test]
    fn focus_value_is_the_single_textured_tile() {
        let tile = Rect::new(64, 64, 64, 64);
        let img = Grayscale::from_fn(192, 192, |x, y| {
            if tile.contains(x, y) {
                ((x * 13 + y * 7) % 200) as u8
            } else {
                90
            }
        });
        let expected = tenengrad_region(&img, &tile).unwrap();
        assert!(expected.0 > 0);
        assert_eq!(image_focus_value(&img, 64).unwrap(), expected);
    }

    #[test]
    fn partial_strips_are_dropped() {
        assert_eq!(focus_tiles(130, 70, 64).len(), 2);
        // texture lives only in the dropped strip
        let img = Grayscale::from_fn(100, 64, |x, y| if x >= 64 { ((x * y) % 256) as u8 } else { 5 });
        assert_eq!(image_focus_value(&img, 64).unwrap(), FocusScore(0));
    }

    fn frame(i: u64, img: Grayscale) -> FrameRecord {
        FrameRecord::new(crate::frame::frame_id(i), i, img)
    }

    #[test]
    fn selection_windows_and_ties() {
        let img = Grayscale::from_fn(64, 64, |x, y| ((x ^ y) * 3) as u8);
        let frames: Vec<_> = (0..10).map(|i| frame(i, img.clone())).collect();
        let sel = select_focused_frames(&frames, 5, 64).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].position, 0);
        assert_eq!(sel[1].position, 5);

        let sel = select_focused_frames(&frames[..7], 3, 64).unwrap();
        assert_eq!(sel.iter().map(|s| s.position).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert!(select_focused_frames(&[], 5, 64).unwrap().is_empty());
        assert!(select_focused_frames(&frames, 0, 64).is_err());
    }

    #[test]
    fn selection_picks_sharpest_in_each_window() {
        let sharp = Grayscale::from_fn(64, 64, |x, y| if (x / 4 + y / 4) % 2 == 0 { 200 } else { 40 });
        let soft = sharp.gaussian_blur(2.0);
        let frames: Vec<_> = (0..6)
            .map(|i| frame(i, if i == 2 || i == 3 { sharp.clone() } else { soft.clone() }))
            .collect();
        let sel = select_focused_frames(&frames, 3, 32).unwrap();
        assert_eq!(sel.iter().map(|s| s.position).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn unordered_frames_are_rejected() {
        let img = Grayscale::filled(8, 8, 0);
        let frames = vec![frame(3, img.clone()), frame(2, img)];
        assert!(select_focused_frames(&frames, 2, 4).is_err());
    }
}
