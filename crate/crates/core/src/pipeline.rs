//! Stage-by-stage orchestration: select → register → globalize →
//! composite → sharpen.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focus::{select_focused_frames, Selection, DEFAULT_GROUP_SIZE, DEFAULT_REGION_SIZE};
use crate::frame::FrameRecord;
use crate::mosaic::{composite, sharpen_grid, CellChoice, CompositeMode, Panorama, ProvenanceIndex, DEFAULT_CELL};
use crate::registration::{globalize, register, MosaicLayout, RegistrationConfig, RegistrationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub group_size: usize,
    pub region_size: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            group_size: DEFAULT_GROUP_SIZE,
            region_size: DEFAULT_REGION_SIZE,
        }
    }
}

/// Every knob of the pipeline; embedded verbatim in each artifact so runs
/// can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub select: SelectConfig,
    pub registration: RegistrationConfig,
    pub composite_mode: CompositeMode,
    pub cell: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            select: SelectConfig::default(),
            registration: RegistrationConfig::default(),
            composite_mode: CompositeMode::Overwrite,
            cell: DEFAULT_CELL,
        }
    }
}

pub struct PipelineOutput {
    pub selection: Vec<Selection>,
    pub registration: RegistrationResult,
    pub layout: MosaicLayout,
    pub panorama: Panorama,
    pub provenance: ProvenanceIndex,
    pub sharpened: Panorama,
    pub choices: Vec<CellChoice>,
}

impl PipelineOutput {
    pub fn selected_ids(&self) -> Vec<String> {
        self.selection.iter().map(|s| s.id.clone()).collect()
    }
}

pub fn frame_dims(frames: &[FrameRecord]) -> HashMap<String, (usize, usize)> {
    frames.iter().map(|f| (f.id.clone(), f.dims())).collect()
}

/// Runs every stage in memory. Errors carry the name of the failing stage.
pub fn run_pipeline(frames: &[FrameRecord], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let selection = select_focused_frames(frames, cfg.select.group_size, cfg.select.region_size)
        .map_err(|e| e.in_stage("select"))?;
    let selected: Vec<FrameRecord> = selection.iter().map(|s| frames[s.position].clone()).collect();

    let registration = register(&selected, &cfg.registration).map_err(|e| e.in_stage("stitch"))?;
    let layout = globalize(&registration, &frame_dims(&selected)).map_err(|e| e.in_stage("stitch"))?;
    let (panorama, provenance) =
        composite(&selected, &layout, cfg.composite_mode).map_err(|e| e.in_stage("composite"))?;
    let (sharpened, choices) =
        sharpen_grid(&selected, &layout, &provenance, cfg.cell).map_err(|e| e.in_stage("sharpen"))?;
    Ok(PipelineOutput {
        selection,
        registration,
        layout,
        panorama,
        provenance,
        sharpened,
        choices,
    })
}

/// Keeps only `frames` whose ids appear in `ids`, preserving order.
pub fn subset(frames: &[FrameRecord], ids: &[String]) -> Result<Vec<FrameRecord>> {
    let by_id: HashMap<&str, &FrameRecord> = frames.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut out: Vec<FrameRecord> = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|f| (*f).clone())
                .ok_or_else(|| Error::UnknownFrame(id.clone()))
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|f| f.index);
    Ok(out)
}
