//! Shifted-grid tile export for segmentation training.
//!
//! Each `cell`×`cell` grid cell is sampled at `shifts_per_axis`² offsets
//! (multiples of `shift` right and down), multiplying the number of
//! training tiles without resizing. Tiles that leave the image or carry no
//! guttae are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grayscale, Rect};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileConfig {
    pub cell: usize,
    pub shift: usize,
    pub shifts_per_axis: usize,
    /// Minimum guttae pixels for a tile to be kept.
    pub min_guttae_pixels: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            cell: 64,
            shift: 16,
            shifts_per_axis: 4,
            min_guttae_pixels: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub source_id: String,
    pub cell_x: usize,
    pub cell_y: usize,
    pub shift_x: usize,
    pub shift_y: usize,
    pub image_tile: Grayscale,
    pub mask_tile: Grayscale,
    pub guttae_pixels: usize,
}

impl TileRecord {
    /// Tile rectangle in the source image.
    pub fn rect(&self, cell: usize) -> Rect {
        Rect::new(
            self.cell_x * cell + self.shift_x,
            self.cell_y * cell + self.shift_y,
            cell,
            cell,
        )
    }
}

/// Tiles in row-major cell order, then row-major shift order.
pub fn export_tiles(source_id: &str, image: &Grayscale, mask: &Grayscale, cfg: &TileConfig) -> Result<Vec<TileRecord>> {
    if image.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, mask is {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    if let Some(&v) = mask.data().iter().find(|&&v| v != 0 && v != 255) {
        return Err(Error::NonBinaryMask(v));
    }
    if cfg.cell == 0 || cfg.shifts_per_axis == 0 {
        return Err(Error::InvalidParameter(
            "cell and shifts_per_axis must be positive".into(),
        ));
    }
    let (w, h) = image.dims();
    let (nx, ny) = (w.div_ceil(cfg.cell), h.div_ceil(cfg.cell));
    let bounds = image.bounds();

    let per_cell = par::map_range(nx * ny, |k| -> Result<Vec<TileRecord>> {
        let (cx, cy) = (k % nx, k / nx);
        let mut out = Vec::new();
        for sy in 0..cfg.shifts_per_axis {
            for sx in 0..cfg.shifts_per_axis {
                let (shift_x, shift_y) = (sx * cfg.shift, sy * cfg.shift);
                let r = Rect::new(cx * cfg.cell + shift_x, cy * cfg.cell + shift_y, cfg.cell, cfg.cell);
                if !bounds.contains_rect(&r) {
                    continue;
                }
                let mask_tile = mask.crop(&r)?;
                let guttae_pixels = mask_tile.data().iter().filter(|&&v| v != 0).count();
                if guttae_pixels < cfg.min_guttae_pixels.max(1) {
                    continue;
                }
                out.push(TileRecord {
                    source_id: source_id.to_string(),
                    cell_x: cx,
                    cell_y: cy,
                    shift_x,
                    shift_y,
                    image_tile: image.crop(&r)?,
                    mask_tile,
                    guttae_pixels,
                });
            }
        }
        Ok(out)
    });
    let mut tiles = Vec::new();
    for cell in per_cell {
        tiles.extend(cell?);
    }
    Ok(tiles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_shift_grid_fits_112() {
        let img = Grayscale::from_fn(112, 112, |x, y| (x + y) as u8);
        let mask = Grayscale::filled(112, 112, 255);
        let t = export_tiles("s", &img, &mask, &TileConfig::default()).unwrap();
        assert_eq!(t.len(), 16);
        let shifts: Vec<_> = t.iter().map(|r| (r.shift_x, r.shift_y)).collect();
        assert_eq!(shifts[0], (0, 0));
        assert_eq!(shifts[1], (16, 0));
        assert_eq!(shifts[4], (0, 16));
        assert_eq!(shifts[15], (48, 48));
        assert!(t.iter().all(|r| r.guttae_pixels == 64 * 64));
    }

    #[test]
    fn single_cell_only_unshifted() {
        let img = Grayscale::filled(64, 64, 3);
        let mask = Grayscale::filled(64, 64, 255);
        let t = export_tiles("s", &img, &mask, &TileConfig::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].shift_x, t[0].shift_y), (0, 0));
    }

    #[test]
    fn empty_mask_gives_no_tiles() {
        let img = Grayscale::filled(200, 150, 3);
        let mask = Grayscale::filled(200, 150, 0);
        assert!(export_tiles("s", &img, &mask, &TileConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn threshold_and_input_checks() {
        let img = Grayscale::filled(64, 64, 3);
        let mut mask = Grayscale::filled(64, 64, 0);
        mask.set(10, 10, 255);
        let strict = TileConfig {
            min_guttae_pixels: 2,
            ..TileConfig::default()
        };
        assert_eq!(export_tiles("s", &img, &mask, &TileConfig::default()).unwrap().len(), 1);
        assert!(export_tiles("s", &img, &mask, &strict).unwrap().is_empty());
        mask.set(0, 0, 7);
        assert!(matches!(
            export_tiles("s", &img, &mask, &TileConfig::default()),
            Err(Error::NonBinaryMask(7))
        ));
        let small = Grayscale::filled(32, 64, 0);
        assert!(matches!(
            export_tiles("s", &img, &small, &TileConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
