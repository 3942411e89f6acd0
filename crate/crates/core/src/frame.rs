use std::path::PathBuf;

use crate::image::Grayscale;

/// One grayscale source frame of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Stable identifier, unique within a sequence.
    pub id: String,
    /// Chronological frame number; strictly increasing along a sequence.
    pub index: u64,
    pub image: Grayscale,
    pub path: Option<PathBuf>,
}

impl FrameRecord {
    pub fn new(id: impl Into<String>, index: u64, image: Grayscale) -> Self {
        FrameRecord {
            id: id.into(),
            index,
            image,
            path: None,
        }
    }

    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Conventional id for the frame with chronological number `index`.
pub fn frame_id(index: u64) -> String {
    format!("frame_{index:04}")
}
