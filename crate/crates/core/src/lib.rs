//! Panoramic mosaicking of sweeping-microscope frame sequences.
//!
//! The pipeline picks the sharpest frame out of each chronological window
//! (Tenengrad focus measure), registers the selected frames with integer
//! translations estimated from local feature matches, pastes them onto a
//! canvas without any resampling, and finally rebuilds the canvas cell by
//! cell from the best-focused source crop. Every canvas pixel can be traced
//! back to the source frames covering it.
//!
//! Synthetic endothelium scenes and simulated camera sweeps with ground
//! truth make registration accuracy measurable, and [`tiles`] exports the
//! shifted-grid training tiles used by the segmentation trainer.
//!
//! Pixel loops run on rayon when the default `parallel` feature is on and
//! fall back to plain iterators otherwise; results are identical either way.

pub mod error;
pub mod features;
pub mod focus;
pub mod frame;
pub mod image;
pub mod io;
pub mod mosaic;
mod par;
pub mod pipeline;
pub mod registration;
pub mod synth;
pub mod tiles;

pub use crate::error::{Error, Result};
pub use crate::features::{extract_features, match_features, FeatureConfig, FeatureSet, MatchPair};
pub use crate::focus::{
    image_focus_value, select_focused_frames, sobel_gradients, tenengrad_region, FocusScore, GradientField,
};
pub use crate::frame::FrameRecord;
pub use crate::image::{Grayscale, Rect};
pub use crate::mosaic::{
    composite, query_source, sharpen_grid, CellChoice, CompositeMode, Panorama, ProvenanceIndex, SourceHit,
};
pub use crate::registration::{
    chain_register, estimate_translation, globalize, reference_stitch_register, MosaicLayout, RegistrationConfig,
    RegistrationResult, TranslationLink,
};
