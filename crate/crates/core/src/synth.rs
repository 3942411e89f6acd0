//! Synthetic corneal-endothelium scenes and simulated camera sweeps with
//! ground truth, used to measure registration error quantitatively.
//!
//! A scene is a nearest-seed tessellation of a jittered hexagonal lattice
//! (endothelial cells) clipped to a disc (the cornea), with dark membranes
//! along cell boundaries and black elliptical guttae. A sweep crops the
//! scene along a piecewise-linear path of crop origins and optionally
//! degrades individual frames.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{frame_id, FrameRecord};
use crate::image::{clamp_u8, Grayscale, Rect};
use crate::par;
use crate::registration::MosaicLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub canvas_w: usize,
    pub canvas_h: usize,
    /// Mean cell diameter in pixels (lattice pitch).
    pub cell_pitch: f64,
    /// Seed displacement as a fraction of the pitch, per axis.
    pub pitch_jitter: f64,
    pub membrane_width: f64,
    pub membrane_intensity: u8,
    pub cell_base_intensity: u8,
    /// Cell interiors vary uniformly by up to this much around the base.
    pub cell_intensity_jitter: u8,
    pub guttae_count: usize,
    /// Semi-axis range of the guttae ellipses, pixels.
    pub guttae_radius_range: (f64, f64),
    pub cornea_radius: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            canvas_w: 1870,
            canvas_h: 1080,
            cell_pitch: 22.0,
            pitch_jitter: 0.3,
            membrane_width: 2.0,
            membrane_intensity: 60,
            cell_base_intensity: 170,
            cell_intensity_jitter: 25,
            guttae_count: 40,
            guttae_radius_range: (4.0, 10.0),
            cornea_radius: 520.0,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn center(&self) -> (f64, f64) {
        (self.canvas_w as f64 / 2.0, self.canvas_h as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.cornea_radius <= 0.0 || 2.0 * self.cornea_radius > self.canvas_w.min(self.canvas_h) as f64 {
            return bad(format!(
                "cornea radius {} does not fit a {}x{} canvas",
                self.cornea_radius, self.canvas_w, self.canvas_h
            ));
        }
        if self.cell_pitch < 4.0 {
            return bad(format!("cell pitch {} is below 4 px", self.cell_pitch));
        }
        if !(0.0..0.5).contains(&self.pitch_jitter) {
            return bad(format!("pitch jitter {} not in [0, 0.5)", self.pitch_jitter));
        }
        if self.membrane_width <= 0.0 {
            return bad("membrane width must be positive".into());
        }
        let (lo, hi) = self.guttae_radius_range;
        if lo <= 0.0 || hi < lo {
            return bad(format!("guttae radius range ({lo}, {hi}) is invalid"));
        }
        Ok(())
    }
}

/// An elliptical gutta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gutta {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

impl Gutta {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.a * self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub image: Grayscale,
    /// 255 on guttae, 0 elsewhere.
    pub guttae_mask: Grayscale,
    pub guttae: Vec<Gutta>,
    pub spec: SceneSpec,
}

struct SeedGrid {
    cell: f64,
    bins: HashMap<(i64, i64), Vec<usize>>,
    seeds: Vec<(f64, f64)>,
}

impl SeedGrid {
    fn new(seeds: Vec<(f64, f64)>, cell: f64) -> Self {
        let mut bins: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in seeds.iter().enumerate() {
            bins.entry(((x / cell).floor() as i64, (y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        SeedGrid { cell, bins, seeds }
    }

    /// Nearest seed and the distance from `(x, y)` to the closest bisector
    /// between that seed and any neighbour.
    fn nearest_with_boundary(&self, x: f64, y: f64) -> Option<(usize, f64)> {
        let (bx, by) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let mut near: Vec<(usize, f64)> = Vec::with_capacity(16);
        for gx in bx - 2..=bx + 2 {
            for gy in by - 2..=by + 2 {
                for &i in self.bins.get(&(gx, gy)).into_iter().flatten() {
                    let (sx, sy) = self.seeds[i];
                    near.push((i, (sx - x).powi(2) + (sy - y).powi(2)));
                }
            }
        }
        let &(best, d1) = near.iter().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
        let (s1x, s1y) = self.seeds[best];
        let boundary = near
            .iter()
            .filter(|(i, _)| *i != best)
            .map(|&(i, dk)| {
                let (skx, sky) = self.seeds[i];
                let sep = ((skx - s1x).powi(2) + (sky - s1y).powi(2)).sqrt();
                (dk - d1) / (2.0 * sep.max(1e-9))
            })
            .fold(f64::INFINITY, f64::min);
        Some((best, boundary))
    }
}

fn lattice_seeds(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let pitch = spec.cell_pitch;
    let row_h = pitch * 3f64.sqrt() / 2.0;
    let jitter = spec.pitch_jitter * pitch;
    let rows = (spec.canvas_h as f64 / row_h).ceil() as i64 + 2;
    let cols = (spec.canvas_w as f64 / pitch).ceil() as i64 + 2;
    let mut seeds = Vec::new();
    for r in -1..rows {
        let offset = if r.rem_euclid(2) == 1 { pitch / 2.0 } else { 0.0 };
        for c in -1..cols {
            let jx = if jitter > 0.0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            let jy = if jitter > 0.0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            seeds.push((c as f64 * pitch + offset + jx, r as f64 * row_h + jy));
        }
    }
    seeds
}

fn place_guttae(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Gutta>> {
    let (lo, hi) = spec.guttae_radius_range;
    let (cx, cy) = spec.center();
    let mut out: Vec<Gutta> = Vec::with_capacity(spec.guttae_count);
    for n in 0..spec.guttae_count {
        let mut placed = false;
        for _ in 0..10_000 {
            let a = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let b = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let reach = spec.cornea_radius - a.max(b) - 1.0;
            if reach <= 0.0 {
                break;
            }
            let r = reach * rng.random::<f64>().sqrt();
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let g = Gutta {
                cx: cx + r * t.cos(),
                cy: cy + r * t.sin(),
                a,
                b,
                angle,
            };
            let clear = out.iter().all(|o| {
                let d = ((o.cx - g.cx).powi(2) + (o.cy - g.cy).powi(2)).sqrt();
                d >= o.a.max(o.b) + g.a.max(g.b) + 2.0
            });
            if clear {
                out.push(g);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidParameter(format!(
                "could not place gutta {} of {} without overlap",
                n + 1,
                spec.guttae_count
            )));
        }
    }
    Ok(out)
}

/// Renders a scene. Identical specs (including the seed) give bit-identical
/// output.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let seeds = lattice_seeds(spec, &mut rng);
    let jitter = spec.cell_intensity_jitter as i32;
    let shades: Vec<u8> = seeds
        .iter()
        .map(|_| {
            let delta = if jitter > 0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0
            };
            (spec.cell_base_intensity as i32 + delta).clamp(0, 255) as u8
        })
        .collect();
    let guttae = place_guttae(spec, &mut rng)?;
    let grid = SeedGrid::new(seeds, spec.cell_pitch);

    let (w, h) = (spec.canvas_w, spec.canvas_h);
    let (cx, cy) = spec.center();
    let r2 = spec.cornea_radius * spec.cornea_radius;
    let half_membrane = spec.membrane_width / 2.0;

    let mut data = vec![0u8; w * h];
    par::for_each_row(&mut data, w, |y, row| {
        let py = y as f64 + 0.5;
        for (x, out) in row.iter_mut().enumerate() {
            let px = x as f64 + 0.5;
            if (px - cx).powi(2) + (py - cy).powi(2) > r2 {
                continue;
            }
            if let Some((seed, boundary)) = grid.nearest_with_boundary(px, py) {
                *out = if boundary < half_membrane {
                    spec.membrane_intensity
                } else {
                    shades[seed]
                };
            }
        }
    });

    let mut image = Grayscale::new(w, h, data)?;
    let mut mask = Grayscale::filled(w, h, 0);
    for g in &guttae {
        let reach = g.a.max(g.b).ceil() as i64 + 1;
        let x0 = (g.cx as i64 - reach).max(0) as usize;
        let y0 = (g.cy as i64 - reach).max(0) as usize;
        let x1 = ((g.cx as i64 + reach) as usize).min(w - 1);
        let y1 = ((g.cy as i64 + reach) as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if g.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    image.set(x, y, 0);
                    mask.set(x, y, 255);
                }
            }
        }
    }
    Ok(SceneTruth {
        image,
        guttae_mask: mask,
        guttae,
        spec: spec.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SweepPath {
    /// Centre to top, a counterclockwise loop along the rim back to the top,
    /// then straight down through the centre to the bottom.
    Cornea,
    /// Archimedean spiral outward from the centre.
    Spiral { turns: f64 },
    /// Explicit crop-origin waypoints.
    Waypoints { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Degradations {
    /// Fraction of frames blurred, picked by a seeded shuffle. Ignored when
    /// `blur_frames` is set.
    pub blur_fraction: f64,
    /// Explicit frame positions to blur.
    pub blur_frames: Option<Vec<usize>>,
    pub blur_sigma: (f64, f64),
    /// Inclusive range of an intensity offset added to every frame.
    pub brightness_offset: (i32, i32),
    /// Standard deviation of additive Gaussian pixel noise, every frame.
    pub noise_sigma: f64,
    /// Probability that a frame is replaced by uniform noise.
    pub dropout_probability: f64,
}

impl Default for Degradations {
    fn default() -> Self {
        Degradations {
            blur_fraction: 0.0,
            blur_frames: None,
            blur_sigma: (1.0, 2.0),
            brightness_offset: (0, 0),
            noise_sigma: 0.0,
            dropout_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub crop_w: usize,
    pub crop_h: usize,
    /// Path distance between consecutive frames, pixels.
    pub step: f64,
    pub path: SweepPath,
    /// Stop after this many frames.
    pub max_frames: Option<usize>,
    pub degradations: Degradations,
    pub rng_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            crop_w: 512,
            crop_h: 512,
            step: 10.0,
            path: SweepPath::Cornea,
            max_frames: None,
            degradations: Degradations::default(),
            rng_seed: 0,
        }
    }
}

/// What was done to one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDegradation {
    pub id: String,
    pub blur_sigma: Option<f64>,
    pub brightness_offset: i32,
    pub noise_sigma: f64,
    pub dropped: bool,
}

impl FrameDegradation {
    pub fn is_clean(&self) -> bool {
        self.blur_sigma.is_none() && self.brightness_offset == 0 && self.noise_sigma == 0.0 && !self.dropped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTruth {
    pub frames: Vec<FrameRecord>,
    /// Crop origin of every frame in scene coordinates.
    pub truth_offsets: BTreeMap<String, (usize, usize)>,
    pub degradation_log: Vec<FrameDegradation>,
    /// Scene dimensions the offsets refer to.
    pub scene_w: usize,
    pub scene_h: usize,
}

impl SweepTruth {
    pub fn blurred_ids(&self) -> Vec<&str> {
        self.degradation_log
            .iter()
            .filter(|d| d.blur_sigma.is_some())
            .map(|d| d.id.as_str())
            .collect()
    }
}

fn path_waypoints(scene: &SceneSpec, sweep: &SweepSpec) -> Vec<(f64, f64)> {
    let (cx, cy) = scene.center();
    let (ox, oy) = (cx - sweep.crop_w as f64 / 2.0, cy - sweep.crop_h as f64 / 2.0);
    let max_ox = (scene.canvas_w - sweep.crop_w.min(scene.canvas_w)) as f64;
    let max_oy = (scene.canvas_h - sweep.crop_h.min(scene.canvas_h)) as f64;
    let radius = (scene.cornea_radius - sweep.crop_w.max(sweep.crop_h) as f64 / 2.0)
        .min(ox)
        .min(oy)
        .min(max_ox - ox)
        .min(max_oy - oy)
        .max(0.0);

    match &sweep.path {
        SweepPath::Waypoints { points } => points.clone(),
        SweepPath::Cornea => {
            const SEGMENTS: usize = 64;
            let mut pts = vec![(ox, oy), (ox, oy - radius)];
            for k in 1..=SEGMENTS {
                // screen coordinates, y down: decreasing angle from the top
                // runs left first, i.e. counterclockwise on screen
                let t = -std::f64::consts::FRAC_PI_2 - std::f64::consts::TAU * k as f64 / SEGMENTS as f64;
                pts.push((ox + radius * t.cos(), oy + radius * t.sin()));
            }
            pts.push((ox, oy + radius));
            pts
        }
        SweepPath::Spiral { turns } => {
            let turns = turns.max(0.1);
            let total = std::f64::consts::TAU * turns;
            let n = (turns * 128.0).ceil() as usize;
            (0..=n)
                .map(|k| {
                    let t = total * k as f64 / n as f64;
                    let r = radius * t / total;
                    (ox + r * t.cos(), oy + r * t.sin())
                })
                .collect()
        }
    }
}

/// Points every `step` of arc length along a polyline, starting at its
/// first vertex.
fn sample_polyline(points: &[(f64, f64)], step: f64, limit: Option<usize>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let Some(&first) = points.first() else { return out };
    out.push(first);
    let mut carry = 0.0;
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let mut t = step - carry;
        while t <= len + 1e-9 {
            if limit.is_some_and(|l| out.len() >= l) {
                return out;
            }
            let f = t / len;
            out.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
            t += step;
        }
        carry = len - (t - step);
    }
    if let Some(l) = limit {
        out.truncate(l);
    }
    out
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Crops `scene` along the sweep path and applies the configured per-frame
/// degradations. Offsets are recorded before degradation; frames without
/// degradation equal their scene crop exactly.
pub fn generate_sweep(scene: &SceneTruth, sweep: &SweepSpec) -> Result<SweepTruth> {
    if sweep.step < 1.0 {
        return Err(Error::InvalidParameter(format!("step {} is below 1 px", sweep.step)));
    }
    let (sw, sh) = scene.image.dims();
    let origins: Vec<(i64, i64)> = sample_polyline(&path_waypoints(&scene.spec, sweep), sweep.step, sweep.max_frames)
        .into_iter()
        .map(|(x, y)| (x.round() as i64, y.round() as i64))
        .collect();
    for &(x, y) in &origins {
        if x < 0 || y < 0 || x as usize + sweep.crop_w > sw || y as usize + sweep.crop_h > sh {
            return Err(Error::CropOutOfBounds {
                x,
                y,
                w: sweep.crop_w,
                h: sweep.crop_h,
                width: sw,
                height: sh,
            });
        }
    }

    let d = &sweep.degradations;
    let n = origins.len();
    let blur_set: Vec<bool> = {
        let mut set = vec![false; n];
        match &d.blur_frames {
            Some(list) => list.iter().filter(|&&i| i < n).for_each(|&i| set[i] = true),
            None => {
                let count = ((d.blur_fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut frame_rng(sweep.rng_seed, 0));
                order[..count].iter().for_each(|&i| set[i] = true);
            }
        }
        set
    };

    let rendered = par::map_range(n, |k| -> Result<(FrameRecord, FrameDegradation)> {
        let (x, y) = origins[k];
        let id = frame_id(k as u64);
        let mut img = scene
            .image
            .crop(&Rect::new(x as usize, y as usize, sweep.crop_w, sweep.crop_h))?;
        let mut rng = frame_rng(sweep.rng_seed, k as u64 + 1);
        let mut log = FrameDegradation {
            id: id.clone(),
            blur_sigma: None,
            brightness_offset: 0,
            noise_sigma: 0.0,
            dropped: false,
        };

        if blur_set[k] {
            let (lo, hi) = d.blur_sigma;
            let sigma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            img = img.gaussian_blur(sigma);
            log.blur_sigma = Some(sigma);
        }
        let (blo, bhi) = d.brightness_offset;
        let offset = if bhi > blo { rng.random_range(blo..=bhi) } else { blo };
        if offset != 0 || d.noise_sigma > 0.0 {
            let noise = (d.noise_sigma > 0.0).then(|| Normal::new(0.0, d.noise_sigma).expect("positive sigma"));
            for v in img.data_mut() {
                let n = noise.as_ref().map_or(0.0, |dist| dist.sample(&mut rng));
                *v = clamp_u8(*v as f32 + offset as f32 + n as f32);
            }
            log.brightness_offset = offset;
            log.noise_sigma = d.noise_sigma;
        }
        if d.dropout_probability > 0.0 && rng.random::<f64>() < d.dropout_probability {
            img.data_mut().iter_mut().for_each(|v| *v = rng.random());
            log.dropped = true;
        }
        Ok((FrameRecord::new(id, k as u64, img), log))
    });

    let mut frames = Vec::with_capacity(n);
    let mut degradation_log = Vec::with_capacity(n);
    let mut truth_offsets = BTreeMap::new();
    for (k, r) in rendered.into_iter().enumerate() {
        let (frame, log) = r?;
        truth_offsets.insert(frame.id.clone(), (origins[k].0 as usize, origins[k].1 as usize));
        frames.push(frame);
        degradation_log.push(log);
    }
    Ok(SweepTruth {
        frames,
        truth_offsets,
        degradation_log,
        scene_w: sw,
        scene_h: sh,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub id: String,
    pub ex: i64,
    pub ey: i64,
}

impl FrameError {
    pub fn l1(&self) -> i64 {
        self.ex.abs() + self.ey.abs()
    }
}

/// Registration error against ground truth.
///
/// Errors are signed per-axis residuals after aligning the layout to the
/// truth at the first used frame; `mean_abs_err` and `max_err` aggregate
/// their L1 norm `|ex| + |ey|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub errors: Vec<FrameError>,
    pub mean_abs_err: f64,
    pub mean_abs_err_x: f64,
    pub mean_abs_err_y: f64,
    pub max_err: i64,
    /// Placed frames ÷ frames submitted to registration.
    pub used_fraction: f64,
    /// Area swept by the placed frames ÷ area swept by every frame.
    pub coverage_fraction: f64,
}

/// Compares `layout` with the sweep ground truth. `submitted` names the
/// frames that were handed to registration (e.g. the focus-selected ones);
/// `None` means all frames of the sweep.
pub fn evaluate_registration(
    layout: &MosaicLayout,
    truth: &SweepTruth,
    submitted: Option<&[String]>,
) -> Result<RegistrationReport> {
    let frames: Vec<(String, (usize, usize))> = truth.frames.iter().map(|f| (f.id.clone(), f.dims())).collect();
    evaluate_layout(
        layout,
        &frames,
        &truth.truth_offsets,
        (truth.scene_w, truth.scene_h),
        submitted,
    )
}

/// [`evaluate_registration`] from frame ids and sizes alone, in
/// chronological order, so nothing has to be decoded.
pub fn evaluate_layout(
    layout: &MosaicLayout,
    frames: &[(String, (usize, usize))],
    truth_offsets: &BTreeMap<String, (usize, usize)>,
    scene_size: (usize, usize),
    submitted: Option<&[String]>,
) -> Result<RegistrationReport> {
    if layout.placements.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let order: HashMap<&str, usize> = frames.iter().enumerate().map(|(i, f)| (f.0.as_str(), i)).collect();
    if let Some((id, _)) = frames.iter().find(|f| !truth_offsets.contains_key(&f.0)) {
        return Err(Error::UnknownFrame(id.clone()));
    }
    for p in &layout.placements {
        if !order.contains_key(p.id.as_str()) {
            return Err(Error::UnknownFrame(p.id.clone()));
        }
    }
    let reference = layout
        .placements
        .iter()
        .min_by_key(|p| order[p.id.as_str()])
        .expect("non-empty");
    let (tx, ty) = truth_offsets[&reference.id];
    let shift = (tx as i64 - reference.x as i64, ty as i64 - reference.y as i64);

    let errors: Vec<FrameError> = layout
        .placements
        .iter()
        .map(|p| {
            let (tx, ty) = truth_offsets[&p.id];
            FrameError {
                id: p.id.clone(),
                ex: p.x as i64 + shift.0 - tx as i64,
                ey: p.y as i64 + shift.1 - ty as i64,
            }
        })
        .collect();
    let n = errors.len() as f64;
    let mean = |f: &dyn Fn(&FrameError) -> i64| errors.iter().map(|e| f(e) as f64).sum::<f64>() / n;

    let denominator = submitted.map_or(frames.len(), |s| s.len()).max(1);
    let used_fraction = (layout.placements.len() as f64 / denominator as f64).min(1.0);

    let rect_of = |id: &str| {
        let (w, h) = frames[order[id]].1;
        let (x, y) = truth_offsets[id];
        Rect::new(x, y, w, h)
    };
    let all: Vec<Rect> = frames.iter().map(|f| rect_of(&f.0)).collect();
    let placed: Vec<Rect> = layout.placements.iter().map(|p| rect_of(&p.id)).collect();
    let (sw, sh) = scene_size;
    let swept = union_area(&all, sw, sh);
    let covered = union_area(&placed, sw, sh);

    Ok(RegistrationReport {
        mean_abs_err: mean(&|e| e.l1()),
        mean_abs_err_x: mean(&|e| e.ex.abs()),
        mean_abs_err_y: mean(&|e| e.ey.abs()),
        max_err: errors.iter().map(FrameError::l1).max().unwrap_or(0),
        errors,
        used_fraction,
        coverage_fraction: if swept == 0 { 0.0 } else { covered as f64 / swept as f64 },
    })
}

fn union_area(rects: &[Rect], w: usize, h: usize) -> usize {
    let mut hit = vec![false; w * h];
    for r in rects {
        for y in r.y..r.bottom().min(h) {
            hit[y * w + r.x.min(w)..y * w + r.right().min(w)].fill(true);
        }
    }
    hit.iter().filter(|&&b| b).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::Placement;

    fn small_spec(seed: u64) -> SceneSpec {
        SceneSpec {
            canvas_w: 320,
            canvas_h: 240,
            cornea_radius: 110.0,
            guttae_count: 6,
            rng_seed: seed,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn scene_is_deterministic() {
        let a = generate_scene(&small_spec(5)).unwrap();
        let b = generate_scene(&small_spec(5)).unwrap();
        let c = generate_scene(&small_spec(6)).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.guttae_mask, b.guttae_mask);
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn scene_layout() {
        let spec = small_spec(1);
        let s = generate_scene(&spec).unwrap();
        assert_eq!(s.image.dims(), (320, 240));
        // outside the cornea
        assert_eq!(s.image.get(0, 0), 0);
        // guttae are black and masked
        for (p, m) in s.image.data().iter().zip(s.guttae_mask.data()) {
            assert!(*m == 0 || *m == 255);
            if *m == 255 {
                assert_eq!(*p, 0);
            }
        }
        let membrane = s.image.data().iter().filter(|&&v| v == spec.membrane_intensity).count();
        assert!(membrane > 1000);
    }

    #[test]
    fn no_guttae_means_empty_mask() {
        let spec = SceneSpec {
            guttae_count: 0,
            ..small_spec(2)
        };
        let s = generate_scene(&spec).unwrap();
        assert!(s.guttae_mask.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate_scene(&SceneSpec {
            cornea_radius: 200.0,
            ..small_spec(0)
        })
        .is_err());
        assert!(generate_scene(&SceneSpec {
            guttae_radius_range: (0.0, 3.0),
            ..small_spec(0)
        })
        .is_err());
        assert!(generate_scene(&SceneSpec {
            guttae_radius_range: (5.0, 3.0),
            ..small_spec(0)
        })
        .is_err());
    }

    #[test]
    fn polyline_sampling_spacing() {
        let pts = sample_polyline(&[(0.0, 0.0), (25.0, 0.0), (25.0, 25.0)], 10.0, None);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[2], (20.0, 0.0));
        assert!((pts[3].0 - 25.0).abs() < 1e-9 && (pts[3].1 - 5.0).abs() < 1e-9);
        assert_eq!(sample_polyline(&[(0.0, 0.0), (100.0, 0.0)], 10.0, Some(4)).len(), 4);
    }

    fn tiny_sweep(scene: &SceneTruth, degradations: Degradations) -> SweepTruth {
        let sweep = SweepSpec {
            crop_w: 96,
            crop_h: 96,
            max_frames: Some(12),
            degradations,
            ..SweepSpec::default()
        };
        generate_sweep(scene, &sweep).unwrap()
    }

    #[test]
    fn clean_sweep_frames_are_exact_crops() {
        let scene = generate_scene(&small_spec(3)).unwrap();
        let t = tiny_sweep(&scene, Degradations::default());
        assert_eq!(t.frames.len(), 12);
        for f in &t.frames {
            let (x, y) = t.truth_offsets[&f.id];
            assert_eq!(f.image, scene.image.crop(&Rect::new(x, y, 96, 96)).unwrap());
        }
        for w in t.frames.windows(2) {
            let (a, b) = (t.truth_offsets[&w[0].id], t.truth_offsets[&w[1].id]);
            let cheb = (a.0 as i64 - b.0 as i64).abs().max((a.1 as i64 - b.1 as i64).abs());
            assert!(cheb <= 10);
        }
        assert!(t.degradation_log.iter().all(FrameDegradation::is_clean));
    }

    #[test]
    fn explicit_blur_frames_are_logged() {
        let scene = generate_scene(&small_spec(3)).unwrap();
        let t = tiny_sweep(
            &scene,
            Degradations {
                blur_frames: Some(vec![2, 7]),
                ..Degradations::default()
            },
        );
        assert_eq!(t.blurred_ids(), vec!["frame_0002", "frame_0007"]);
    }

    #[test]
    fn crops_outside_the_scene_fail() {
        let scene = generate_scene(&small_spec(3)).unwrap();
        let sweep = SweepSpec {
            crop_w: 96,
            crop_h: 96,
            path: SweepPath::Waypoints {
                points: vec![(200.0, 100.0), (260.0, 100.0)],
            },
            ..SweepSpec::default()
        };
        assert!(matches!(
            generate_sweep(&scene, &sweep),
            Err(Error::CropOutOfBounds { .. })
        ));
    }

    fn layout_from_truth(t: &SweepTruth, ids: &[&str]) -> MosaicLayout {
        MosaicLayout::from_positions(
            ids.iter()
                .map(|id| {
                    let (x, y) = t.truth_offsets[*id];
                    (id.to_string(), (x as i64, y as i64), (96, 96))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn evaluation_of_perfect_and_displaced_layouts() {
        let scene = generate_scene(&small_spec(3)).unwrap();
        let t = tiny_sweep(&scene, Degradations::default());
        let ids: Vec<&str> = t.frames.iter().map(|f| f.id.as_str()).collect();
        let layout = layout_from_truth(&t, &ids);
        let r = evaluate_registration(&layout, &t, None).unwrap();
        assert_eq!(r.mean_abs_err, 0.0);
        assert_eq!(r.used_fraction, 1.0);
        assert_eq!(r.coverage_fraction, 1.0);

        let mut moved = layout.clone();
        let p: &mut Placement = moved.placements.iter_mut().find(|p| p.id == "frame_0005").unwrap();
        p.x += 3;
        p.y += 4;
        let r = evaluate_registration(&moved, &t, None).unwrap();
        assert_eq!(r.max_err, 7);
        let e = r.errors.iter().find(|e| e.id == "frame_0005").unwrap();
        assert_eq!((e.ex, e.ey), (3, 4));

        let half = layout_from_truth(&t, &ids[..6]);
        let r = evaluate_registration(&half, &t, None).unwrap();
        assert_eq!(r.used_fraction, 0.5);
        assert!(r.coverage_fraction < 1.0 && r.coverage_fraction > 0.0);
    }
}
