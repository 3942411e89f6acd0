#![allow(dead_code)]

use endomosaic::frame::frame_id;
use endomosaic::synth::{generate_scene, SceneSpec, SceneTruth};
use endomosaic::{FrameRecord, Grayscale, Rect};

pub fn scene(seed: u64) -> SceneTruth {
    generate_scene(&SceneSpec {
        canvas_w: 720,
        canvas_h: 560,
        cornea_radius: 270.0,
        guttae_count: 12,
        rng_seed: seed,
        ..SceneSpec::default()
    })
    .unwrap()
}

/// Frames cropped from `img` at the given origins, numbered from 0.
pub fn crops(img: &Grayscale, origins: &[(usize, usize)], size: usize) -> Vec<FrameRecord> {
    origins
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            FrameRecord::new(
                frame_id(i as u64),
                i as u64,
                img.crop(&Rect::new(x, y, size, size)).unwrap(),
            )
        })
        .collect()
}

pub fn noise(size: usize, seed: u64) -> Grayscale {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    Grayscale::from_fn(size, size, |_, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 24) as u8
    })
}
