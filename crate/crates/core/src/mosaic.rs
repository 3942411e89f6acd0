//! Deformation-free compositing, provenance lookup and best-focus grid
//! sharpening.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focus::{tenengrad_region, FocusScore};
use crate::frame::FrameRecord;
use crate::image::{Grayscale, Rect};
use crate::par;
use crate::registration::MosaicLayout;

pub const DEFAULT_CELL: usize = 64;
pub const BACKGROUND: u8 = 0;
/// Bucket edge of the provenance lookup grid.
const PROVENANCE_BUCKET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeMode {
    /// The chronologically latest covering frame wins each pixel.
    #[default]
    Overwrite,
    /// Rounded mean of all covering frames.
    Average,
}

impl std::fmt::Display for CompositeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompositeMode::Overwrite => "overwrite",
            CompositeMode::Average => "average",
        })
    }
}

impl std::str::FromStr for CompositeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overwrite" => Ok(CompositeMode::Overwrite),
            "average" => Ok(CompositeMode::Average),
            other => Err(Error::InvalidParameter(format!("unknown composite mode {other:?}"))),
        }
    }
}

/// Canvas image plus a mask of the pixels any frame wrote (255) so that
/// background never gets confused with dark tissue.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub image: Grayscale,
    pub coverage: Grayscale,
    pub background: u8,
}

/// Paste rectangle of one frame on the canvas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRect {
    pub id: String,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl SourceRect {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.width, self.height)
    }
}

/// Maps canvas pixels back to the frames covering them.
///
/// Stored as the frames' paste rectangles in chronological order plus a
/// coarse bucket grid, which answers per-pixel queries exactly without a
/// per-pixel table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceIndex {
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub sources: Vec<SourceRect>,
    #[serde(skip)]
    buckets: Vec<Vec<u32>>,
}

/// One source frame covering a canvas pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceHit {
    pub id: String,
    pub local_x: usize,
    pub local_y: usize,
}

impl ProvenanceIndex {
    pub fn new(canvas_w: usize, canvas_h: usize, sources: Vec<SourceRect>) -> Self {
        let mut index = ProvenanceIndex {
            canvas_w,
            canvas_h,
            sources,
            buckets: Vec::new(),
        };
        index.rebuild();
        index
    }

    pub fn from_layout(layout: &MosaicLayout) -> Self {
        let sources = layout
            .placements
            .iter()
            .map(|p| SourceRect {
                id: p.id.clone(),
                x: p.x,
                y: p.y,
                width: p.width,
                height: p.height,
            })
            .collect();
        Self::new(layout.canvas_w, layout.canvas_h, sources)
    }

    fn bucket_dims(&self) -> (usize, usize) {
        (
            self.canvas_w.div_ceil(PROVENANCE_BUCKET),
            self.canvas_h.div_ceil(PROVENANCE_BUCKET),
        )
    }

    /// Recomputes the lookup grid; needed after deserialization.
    pub fn rebuild(&mut self) {
        let (bw, bh) = self.bucket_dims();
        let mut buckets = vec![Vec::new(); bw * bh];
        let canvas = Rect::new(0, 0, self.canvas_w, self.canvas_h);
        for (i, s) in self.sources.iter().enumerate() {
            let Some(r) = s.rect().intersect(&canvas) else { continue };
            for by in r.y / PROVENANCE_BUCKET..=(r.bottom() - 1) / PROVENANCE_BUCKET {
                for bx in r.x / PROVENANCE_BUCKET..=(r.right() - 1) / PROVENANCE_BUCKET {
                    buckets[by * bw + bx].push(i as u32);
                }
            }
        }
        self.buckets = buckets;
    }

    fn check(&self, x: i64, y: i64) -> Result<(usize, usize)> {
        if x < 0 || y < 0 || x as usize >= self.canvas_w || y as usize >= self.canvas_h {
            return Err(Error::OutOfCanvas {
                x,
                y,
                canvas_w: self.canvas_w,
                canvas_h: self.canvas_h,
            });
        }
        Ok((x as usize, y as usize))
    }

    /// Indices (into `sources`) of frames covering `(x, y)`, chronological.
    fn covering_indices(&self, x: usize, y: usize) -> impl Iterator<Item = usize> + '_ {
        let (bw, _) = self.bucket_dims();
        let bucket = &self.buckets[(y / PROVENANCE_BUCKET) * bw + x / PROVENANCE_BUCKET];
        bucket
            .iter()
            .map(|&i| i as usize)
            .filter(move |&i| self.sources[i].rect().contains(x, y))
    }

    /// Sources whose rectangle intersects `region`, chronological.
    pub fn intersecting(&self, region: &Rect) -> Vec<usize> {
        let (bw, bh) = self.bucket_dims();
        if region.area() == 0 || bw == 0 {
            return Vec::new();
        }
        let mut hits = Vec::new();
        let by1 = ((region.bottom() - 1) / PROVENANCE_BUCKET).min(bh - 1);
        let bx1 = ((region.right() - 1) / PROVENANCE_BUCKET).min(bw - 1);
        for by in region.y / PROVENANCE_BUCKET..=by1 {
            for bx in region.x / PROVENANCE_BUCKET..=bx1 {
                hits.extend(self.buckets[by * bw + bx].iter().map(|&i| i as usize));
            }
        }
        hits.sort_unstable();
        hits.dedup();
        hits.retain(|&i| self.sources[i].rect().intersect(region).is_some());
        hits
    }

    pub fn coverage_count(&self, x: usize, y: usize) -> usize {
        if x >= self.canvas_w || y >= self.canvas_h {
            return 0;
        }
        self.covering_indices(x, y).count()
    }

    /// Every frame covering canvas pixel `(x, y)`, in chronological order,
    /// with the pixel's coordinates inside that frame. Background pixels
    /// give an empty list.
    pub fn query(&self, x: i64, y: i64) -> Result<Vec<SourceHit>> {
        let (x, y) = self.check(x, y)?;
        Ok(self
            .covering_indices(x, y)
            .map(|i| {
                let s = &self.sources[i];
                SourceHit {
                    id: s.id.clone(),
                    local_x: x - s.x,
                    local_y: y - s.y,
                }
            })
            .collect())
    }
}

/// See [`ProvenanceIndex::query`].
pub fn query_source(x: i64, y: i64, provenance: &ProvenanceIndex) -> Result<Vec<SourceHit>> {
    provenance.query(x, y)
}

/// Frames of `layout` in placement order, validated against the canvas.
fn placed_frames<'a>(frames: &'a [FrameRecord], layout: &MosaicLayout) -> Result<Vec<(&'a FrameRecord, Rect)>> {
    let by_id: HashMap<&str, &FrameRecord> = frames.iter().map(|f| (f.id.as_str(), f)).collect();
    let canvas = Rect::new(0, 0, layout.canvas_w, layout.canvas_h);
    layout
        .placements
        .iter()
        .map(|p| {
            let frame = *by_id
                .get(p.id.as_str())
                .ok_or_else(|| Error::UnknownFrame(p.id.clone()))?;
            if frame.dims() != (p.width, p.height) {
                return Err(Error::DimensionMismatch(format!(
                    "frame {} is {}x{}, layout says {}x{}",
                    p.id,
                    frame.image.width(),
                    frame.image.height(),
                    p.width,
                    p.height
                )));
            }
            if !canvas.contains_rect(&p.rect()) {
                return Err(Error::PlacementOutsideCanvas {
                    id: p.id.clone(),
                    x: p.x as i64,
                    y: p.y as i64,
                    canvas_w: layout.canvas_w,
                    canvas_h: layout.canvas_h,
                });
            }
            Ok((frame, p.rect()))
        })
        .collect()
}

/// Pastes every placed frame at its integer offset. Pixels are copied, never
/// resampled. The provenance index lists all covering frames whatever the
/// mode.
pub fn composite(
    frames: &[FrameRecord],
    layout: &MosaicLayout,
    mode: CompositeMode,
) -> Result<(Panorama, ProvenanceIndex)> {
    let placed = placed_frames(frames, layout)?;
    let (w, h) = (layout.canvas_w, layout.canvas_h);
    let mut image = vec![BACKGROUND; w * h];
    let mut coverage = vec![0u8; w * h];

    match mode {
        CompositeMode::Overwrite => {
            par::for_each_row(&mut image, w.max(1), |y, row| {
                for (frame, r) in &placed {
                    if y >= r.y && y < r.bottom() {
                        row[r.x..r.right()].copy_from_slice(frame.image.row(y - r.y));
                    }
                }
            });
        }
        CompositeMode::Average => {
            par::for_each_row(&mut image, w.max(1), |y, row| {
                let mut sum = vec![0u32; w];
                let mut count = vec![0u32; w];
                for (frame, r) in &placed {
                    if y >= r.y && y < r.bottom() {
                        let src = frame.image.row(y - r.y);
                        for (i, &v) in src.iter().enumerate() {
                            sum[r.x + i] += v as u32;
                            count[r.x + i] += 1;
                        }
                    }
                }
                for ((out, s), c) in row.iter_mut().zip(sum).zip(count) {
                    if let Some(mean) = (s + c / 2).checked_div(c) {
                        *out = mean as u8;
                    }
                }
            });
        }
    }
    par::for_each_row(&mut coverage, w.max(1), |y, row| {
        for (_, r) in &placed {
            if y >= r.y && y < r.bottom() {
                row[r.x..r.right()].fill(255);
            }
        }
    });

    let panorama = Panorama {
        image: Grayscale::new(w, h, image)?,
        coverage: Grayscale::new(w, h, coverage)?,
        background: BACKGROUND,
    };
    Ok((panorama, ProvenanceIndex::from_layout(layout)))
}

/// Source picked for one grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChoice {
    pub cell_x: usize,
    pub cell_y: usize,
    /// Cell rectangle on the canvas (clipped at the right/bottom edges).
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub chosen_frame: String,
    pub score: FocusScore,
    /// Number of frames competing for the cell.
    pub candidates: usize,
    /// Whether the chosen frame covers the whole cell.
    pub full_cover: bool,
}

impl CellChoice {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

fn region_score(img: &Grayscale, r: &Rect) -> Result<FocusScore> {
    if r.w < 3 || r.h < 3 {
        return Ok(FocusScore(0));
    }
    tenengrad_region(img, r)
}

fn local(r: &Rect, origin: &Rect) -> Rect {
    Rect::new(r.x - origin.x, r.y - origin.y, r.w, r.h)
}

struct CellPlan {
    choice: CellChoice,
    /// (placed frame, canvas rectangle) pastes, applied in order.
    pastes: Vec<(usize, Rect)>,
}

fn plan_cell(
    placed: &[(&FrameRecord, Rect)],
    provenance: &ProvenanceIndex,
    cell: Rect,
    cell_x: usize,
    cell_y: usize,
) -> Result<Option<CellPlan>> {
    let hits = provenance.intersecting(&cell);
    if hits.is_empty() {
        return Ok(None);
    }
    let full: Vec<usize> = hits
        .iter()
        .copied()
        .filter(|&i| placed[i].1.contains_rect(&cell))
        .collect();

    let choice = |frame: usize, score, candidates, full_cover| CellChoice {
        cell_x,
        cell_y,
        x: cell.x,
        y: cell.y,
        w: cell.w,
        h: cell.h,
        chosen_frame: placed[frame].0.id.clone(),
        score,
        candidates,
        full_cover,
    };

    if !full.is_empty() {
        let mut best = (full[0], FocusScore(0));
        for (k, &i) in full.iter().enumerate() {
            let (frame, rect) = &placed[i];
            let score = region_score(&frame.image, &local(&cell, rect))?;
            if k == 0 || score > best.1 {
                best = (i, score);
            }
        }
        return Ok(Some(CellPlan {
            choice: choice(best.0, best.1, full.len(), true),
            pastes: vec![(best.0, cell)],
        }));
    }

    // No frame covers the whole cell: the frame with the largest overlap
    // wins (earliest on ties), pasted last over the other partial sources.
    let mut ranked: Vec<(usize, Rect)> = hits
        .iter()
        .map(|&i| (i, placed[i].1.intersect(&cell).expect("intersecting")))
        .collect();
    ranked.sort_by(|a, b| a.1.area().cmp(&b.1.area()).then(b.0.cmp(&a.0)));
    let &(winner, overlap) = ranked.last().expect("non-empty");
    let score = region_score(&placed[winner].0.image, &local(&overlap, &placed[winner].1))?;
    Ok(Some(CellPlan {
        choice: choice(winner, score, ranked.len(), false),
        pastes: ranked,
    }))
}

/// Rebuilds the canvas from a `cell`×`cell` grid anchored at the origin:
/// each cell is copied from whichever fully covering frame has the highest
/// Tenengrad score over that cell, read from the original frame pixels.
/// Cells that no frame covers completely (including clipped cells at the
/// right and bottom edges) take the frame with the largest overlap.
pub fn sharpen_grid(
    frames: &[FrameRecord],
    layout: &MosaicLayout,
    provenance: &ProvenanceIndex,
    cell: usize,
) -> Result<(Panorama, Vec<CellChoice>)> {
    if cell < 3 {
        return Err(Error::InvalidParameter(format!("cell size {cell} is below 3")));
    }
    let placed = placed_frames(frames, layout)?;
    if provenance.sources.len() != placed.len()
        || provenance.sources.iter().zip(&placed).any(|(s, (_, r))| s.rect() != *r)
    {
        return Err(Error::DimensionMismatch(
            "provenance index does not match the layout".into(),
        ));
    }
    let (w, h) = (layout.canvas_w, layout.canvas_h);
    let (nx, ny) = (w.div_ceil(cell), h.div_ceil(cell));

    let plans = par::map_range(nx * ny, |k| {
        let (cx, cy) = (k % nx, k / nx);
        let (x, y) = (cx * cell, cy * cell);
        let rect = Rect::new(x, y, cell.min(w - x), cell.min(h - y));
        plan_cell(&placed, provenance, rect, cx, cy)
    });

    let mut image = Grayscale::filled(w, h, BACKGROUND);
    let mut coverage = Grayscale::filled(w, h, 0);
    let mut choices = Vec::new();
    for plan in plans {
        let Some(plan) = plan? else { continue };
        for (i, canvas_rect) in &plan.pastes {
            let (frame, rect) = &placed[*i];
            let Some(r) = canvas_rect.intersect(rect) else { continue };
            let crop = frame.image.crop(&local(&r, rect))?;
            image.paste(&crop, r.x, r.y)?;
            coverage.paste(&Grayscale::filled(r.w, r.h, 255), r.x, r.y)?;
        }
        choices.push(plan.choice);
    }
    Ok((
        Panorama {
            image,
            coverage,
            background: BACKGROUND,
        },
        choices,
    ))
}
