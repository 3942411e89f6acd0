//! On-disk formats: frame-sequence manifests, layout files, provenance and
//! sharpening records, tile tables, and grayscale image files.
//!
//! Structured files are pretty-printed JSON (the tile table is CSV so the
//! trainer can read it with any dataframe library). Every JSON artifact
//! carries a [`CreatedBy`] block with the command and configuration that
//! produced it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::image::Grayscale;
use crate::mosaic::{CellChoice, ProvenanceIndex};
use crate::par;
use crate::registration::{MosaicLayout, Placement, RegistrationResult, TranslationLink};
use crate::tiles::TileRecord;

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "pbm", "ppm", "tif", "tiff", "bmp", "jpg", "jpeg"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes any supported image file to 8-bit grayscale; colour input is
/// reduced with integer BT.601 luma.
pub fn load_grayscale(path: &Path) -> Result<Grayscale> {
    let decode = |source| Error::Decode {
        path: path.to_path_buf(),
        source,
    };
    let img = ::image::open(path).map_err(decode)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        ::image::DynamicImage::ImageLuma8(buf) => Grayscale::new(w, h, buf.into_raw()),
        other => Grayscale::from_rgb8(w, h, other.to_rgb8().as_raw()),
    }
}

pub fn save_png(path: &Path, img: &Grayscale) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    ::image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        ::image::ExtendedColorType::L8,
        ::image::ImageFormat::Png,
    )
    .map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Command line and configuration snapshot that produced an artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreatedBy {
    pub command: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    pub index: u64,
    pub path: PathBuf,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub sequence_id: String,
    /// Directory relative frame paths resolve against; the manifest's own
    /// directory when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub frames: Vec<FrameEntry>,
    /// Ground-truth crop origins, synthetic sweeps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_offsets: Option<BTreeMap<String, (usize, usize)>>,
    /// Scene size the truth offsets refer to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_size: Option<(usize, usize)>,
    /// Focus values of the frames, present after selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_scores: Option<BTreeMap<String, u64>>,
    #[serde(default)]
    pub created_by: CreatedBy,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::NonMonotonicNumbering(w[1].path.clone()));
            }
        }
        let mut ids: Vec<&str> = self.frames.iter().map(|f| f.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(d) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate frame id {}", d[0])));
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &FrameEntry, manifest_dir: &Path) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.as_deref().unwrap_or(manifest_dir).join(&entry.path)
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.frames.iter().map(|f| f.id.clone()).collect()
    }
}

/// Loads a manifest and resolves nothing yet; see [`load_frames`].
pub fn read_manifest(path: &Path) -> Result<SequenceManifest> {
    let m: SequenceManifest = read_json(path)?;
    m.validate()?;
    Ok(m)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Decodes every frame of a manifest, checking the recorded dimensions.
pub fn load_frames(manifest: &SequenceManifest, manifest_dir: &Path) -> Result<Vec<FrameRecord>> {
    let loaded = par::map(&manifest.frames, |entry| -> Result<FrameRecord> {
        let path = manifest.resolve(entry, manifest_dir);
        let image = load_grayscale(&path)?;
        if image.dims() != (entry.width, entry.height) {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{}, manifest says {}x{}",
                path.display(),
                image.width(),
                image.height(),
                entry.width,
                entry.height
            )));
        }
        Ok(FrameRecord::new(entry.id.clone(), entry.index, image).with_path(path))
    });
    loaded.into_iter().collect()
}

/// Trailing run of digits in a file stem, e.g. `frame_0012` → 12.
fn trailing_number(stem: &str) -> Option<u64> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Result of scanning a frame directory.
#[derive(Debug)]
pub struct Ingested {
    pub manifest: SequenceManifest,
    pub warnings: Vec<String>,
}

/// Builds a manifest from a directory of numbered image files, ordered by
/// the number at the end of each file name. Every frame is decoded once to
/// validate it and record its size.
pub fn ingest(frames_dir: &Path) -> Result<Ingested> {
    let mut warnings = Vec::new();
    let mut numbered = Vec::new();
    for entry in fs::read_dir(frames_dir).map_err(io_err(frames_dir))? {
        let path = entry.map_err(io_err(frames_dir))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !path.is_file() || !is_image {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        match trailing_number(&stem) {
            Some(n) => numbered.push((n, stem, path)),
            None => warnings.push(format!("skipping {}: no frame number in its name", path.display())),
        }
    }
    numbered.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));
    if let Some(w) = numbered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::NonMonotonicNumbering(w[1].2.clone()));
    }
    if numbered.is_empty() {
        warnings.push(format!("no numbered frames found in {}", frames_dir.display()));
    }

    let dims = par::map(&numbered, |(_, _, path)| load_grayscale(path).map(|g| g.dims()));
    let mut frames = Vec::with_capacity(numbered.len());
    for ((index, id, path), d) in numbered.into_iter().zip(dims) {
        let (width, height) = d?;
        let rel = path.file_name().map(PathBuf::from).unwrap_or(path);
        frames.push(FrameEntry {
            id,
            index,
            path: rel,
            width,
            height,
        });
    }
    let root = fs::canonicalize(frames_dir).unwrap_or_else(|_| frames_dir.to_path_buf());
    let sequence_id = root
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("sequence")
        .to_string();
    Ok(Ingested {
        manifest: SequenceManifest {
            sequence_id,
            root: Some(root),
            frames,
            ..SequenceManifest::default()
        },
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub id: String,
    pub used: bool,
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub width: usize,
    pub height: usize,
}

/// Serialized registration outcome: canvas size, one record per submitted
/// frame and the pairwise links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub placements: Vec<PlacementRecord>,
    pub links: Vec<TranslationLink>,
    #[serde(default)]
    pub created_by: CreatedBy,
}

impl LayoutFile {
    /// `frames` lists every frame submitted to registration in order.
    pub fn new(
        layout: &MosaicLayout,
        result: &RegistrationResult,
        frames: &[(String, (usize, usize))],
        created_by: CreatedBy,
    ) -> Self {
        let placements = frames
            .iter()
            .map(|(id, (w, h))| match layout.get(id) {
                Some(p) => PlacementRecord {
                    id: id.clone(),
                    used: true,
                    x: Some(p.x),
                    y: Some(p.y),
                    width: p.width,
                    height: p.height,
                },
                None => PlacementRecord {
                    id: id.clone(),
                    used: false,
                    x: None,
                    y: None,
                    width: *w,
                    height: *h,
                },
            })
            .collect();
        LayoutFile {
            canvas_w: layout.canvas_w,
            canvas_h: layout.canvas_h,
            placements,
            links: result.links.clone(),
            created_by,
        }
    }

    pub fn layout(&self) -> Result<MosaicLayout> {
        let placements: Vec<Placement> = self
            .placements
            .iter()
            .filter(|p| p.used)
            .map(|p| match (p.x, p.y) {
                (Some(x), Some(y)) => Ok(Placement {
                    id: p.id.clone(),
                    x,
                    y,
                    width: p.width,
                    height: p.height,
                }),
                _ => Err(Error::InvalidParameter(format!("used frame {} has no position", p.id))),
            })
            .collect::<Result<_>>()?;
        if placements.is_empty() {
            return Err(Error::EmptyLayout);
        }
        Ok(MosaicLayout {
            placements,
            canvas_w: self.canvas_w,
            canvas_h: self.canvas_h,
        })
    }

    pub fn used_ids(&self) -> Vec<String> {
        self.placements
            .iter()
            .filter(|p| p.used)
            .map(|p| p.id.clone())
            .collect()
    }

    pub fn submitted_ids(&self) -> Vec<String> {
        self.placements.iter().map(|p| p.id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceFile {
    pub provenance: ProvenanceIndex,
    #[serde(default)]
    pub created_by: CreatedBy,
}

impl ProvenanceFile {
    pub fn read(path: &Path) -> Result<ProvenanceIndex> {
        let mut f: ProvenanceFile = read_json(path)?;
        f.provenance.rebuild();
        Ok(f.provenance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoicesFile {
    pub cell: usize,
    pub choices: Vec<CellChoice>,
    #[serde(default)]
    pub created_by: CreatedBy,
}

/// One row of the tile table consumed by the segmentation trainer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRow {
    pub source_id: String,
    pub cell_x: usize,
    pub cell_y: usize,
    pub shift_x: usize,
    pub shift_y: usize,
    pub image_path: String,
    pub mask_path: String,
    pub guttae_pixels: usize,
}

pub const TILE_TABLE: &str = "tiles.csv";

/// Writes tile images under `out_dir/images` and `out_dir/masks` plus the
/// `tiles.csv` table (paths relative to `out_dir`).
pub fn write_tiles(out_dir: &Path, tiles: &[TileRecord]) -> Result<Vec<TileRow>> {
    let rows: Vec<TileRow> = tiles
        .iter()
        .map(|t| {
            let name = format!(
                "{}_c{:03}_{:03}_s{:02}_{:02}.png",
                t.source_id, t.cell_x, t.cell_y, t.shift_x, t.shift_y
            );
            TileRow {
                source_id: t.source_id.clone(),
                cell_x: t.cell_x,
                cell_y: t.cell_y,
                shift_x: t.shift_x,
                shift_y: t.shift_y,
                image_path: format!("images/{name}"),
                mask_path: format!("masks/{name}"),
                guttae_pixels: t.guttae_pixels,
            }
        })
        .collect();
    for (t, row) in tiles.iter().zip(&rows) {
        save_png(&out_dir.join(&row.image_path), &t.image_tile)?;
        save_png(&out_dir.join(&row.mask_path), &t.mask_tile)?;
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let table = out_dir.join(TILE_TABLE);
    let csv_err = |source| Error::Csv {
        path: table.clone(),
        source,
    };
    let mut writer = csv::Writer::from_path(&table).map_err(csv_err)?;
    for row in &rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(&table))?;
    Ok(rows)
}

pub fn read_tile_table(path: &Path) -> Result<Vec<TileRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().map(|r| r.map_err(csv_err)).collect()
}
