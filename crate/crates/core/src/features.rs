//! Local features for frame-to-frame matching.
//!
//! Keypoints are scale-space extrema of a difference-of-Gaussians pyramid,
//! refined to sub-pixel accuracy, each with a dominant gradient orientation
//! and a 4×4×8 orientation-histogram descriptor (128 values). This is a
//! clean-room detector/descriptor in the SIFT family: tolerant to rotation
//! and to moderate scale change, which is more than translation-only
//! registration needs.

use std::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::image::{blur_plane, Grayscale};
use crate::par;

pub const DESCRIPTOR_LEN: usize = 128;
/// Name recorded in configuration snapshots.
pub const DESCRIPTOR_NAME: &str = "dog-orientation-histogram-128";

const HIST_GRID: usize = 4;
const HIST_BINS: usize = 8;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESCRIPTOR_CLIP: f32 = 0.2;
const REFINE_STEPS: usize = 5;

pub type Descriptor = [f32; DESCRIPTOR_LEN];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub descriptor: String,
    /// Upper bound on pyramid octaves; fewer are used for small images.
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f32,
    /// Blur already present in the input.
    pub assumed_blur: f32,
    /// Minimum |DoG| response on intensities scaled to [0, 1], divided by
    /// `scales_per_octave` before use.
    pub contrast_threshold: f32,
    /// Principal-curvature ratio above which edge responses are dropped.
    pub edge_ratio: f32,
    /// Keypoints closer than this to the octave border are discarded.
    pub border: usize,
    /// Strongest keypoints kept per image.
    pub max_features: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            descriptor: DESCRIPTOR_NAME.to_string(),
            octaves: 3,
            scales_per_octave: 3,
            base_sigma: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            border: 8,
            max_features: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    /// Blur scale in image pixels.
    pub scale: f32,
    /// Dominant gradient direction in radians, `[0, 2π)`.
    pub orientation: f32,
    pub response: f32,
}

/// Keypoints and their descriptors, index-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn push(&mut self, kp: Keypoint, desc: Descriptor) {
        self.keypoints.push(kp);
        self.descriptors.push(desc);
    }

    /// Copy with every keypoint moved by `(dx, dy)`.
    pub fn translated(&self, dx: f32, dy: f32) -> FeatureSet {
        FeatureSet {
            keypoints: self
                .keypoints
                .iter()
                .map(|k| Keypoint {
                    x: k.x + dx,
                    y: k.y + dy,
                    ..*k
                })
                .collect(),
            descriptors: self.descriptors.clone(),
        }
    }
}

/// A float image plane.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn blurred(&self, sigma: f32) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: blur_plane(&self.data, self.w, self.h, sigma),
        }
    }

    fn downsampled(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane { w, h, data }
    }

    fn minus(&self, other: &Plane) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Central-difference gradient, `None` on the outermost ring.
    #[inline]
    fn gradient(&self, x: isize, y: isize) -> Option<(f32, f32)> {
        if x < 1 || y < 1 || x >= self.w as isize - 1 || y >= self.h as isize - 1 {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        Some((
            self.at(x + 1, y) - self.at(x - 1, y),
            self.at(x, y + 1) - self.at(x, y - 1),
        ))
    }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn build_pyramid(img: &Grayscale, cfg: &FeatureConfig) -> Vec<Octave> {
    let s = cfg.scales_per_octave;
    let min_dim = img.width().min(img.height()) as f32;
    let max_octaves = ((min_dim / 16.0).log2().floor() as isize + 1).max(1) as usize;
    let n_oct = cfg.octaves.clamp(1, max_octaves);

    let k = 2f32.powf(1.0 / s as f32);
    // Incremental blurs between consecutive layers of one octave.
    let increments: Vec<f32> = (1..s + 3)
        .map(|i| {
            let prev = cfg.base_sigma * k.powi(i as i32 - 1);
            let total = prev * k;
            (total * total - prev * prev).sqrt()
        })
        .collect();

    let input = Plane {
        w: img.width(),
        h: img.height(),
        data: img.to_plane(1.0 / 255.0),
    };
    let initial = (cfg.base_sigma.powi(2) - cfg.assumed_blur.powi(2)).max(0.01).sqrt();
    let mut base = input.blurred(initial);

    let mut octaves = Vec::with_capacity(n_oct);
    for o in 0..n_oct {
        let mut gauss = vec![base];
        for inc in &increments {
            let next = gauss.last().expect("non-empty").blurred(*inc);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|p| p[1].minus(&p[0])).collect();
        if o + 1 < n_oct {
            base = gauss[s].downsampled();
        } else {
            base = Plane {
                w: 0,
                h: 0,
                data: Vec::new(),
            };
        }
        octaves.push(Octave { gauss, dog });
    }
    octaves
}

/// Solves the 3×3 system `h · x = b` by Cramer's rule.
fn solve3(h: [[f32; 3]; 3], b: [f32; 3]) -> Option<[f32; 3]> {
    let det = |m: [[f32; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(h);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det(m) / d;
    }
    Some(out)
}

struct Extremum {
    layer: usize,
    x: usize,
    y: usize,
    offset: [f32; 3],
    response: f32,
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let mut greater = true;
    let mut smaller = true;
    for plane in &dog[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dog[layer]) && xx == x && yy == y {
                    continue;
                }
                let n = plane.at(xx, yy);
                greater &= v > n;
                smaller &= v < n;
                if !greater && !smaller {
                    return false;
                }
            }
        }
    }
    greater || smaller
}

fn refine(
    dog: &[Plane],
    s: usize,
    border: usize,
    mut layer: usize,
    mut x: usize,
    mut y: usize,
    cfg: &FeatureConfig,
) -> Option<Extremum> {
    let (w, h) = (dog[0].w, dog[0].h);
    for step in 0..REFINE_STEPS {
        let (c, p, n) = (&dog[layer], &dog[layer - 1], &dog[layer + 1]);
        let v = c.at(x, y);
        let dx = (c.at(x + 1, y) - c.at(x - 1, y)) * 0.5;
        let dy = (c.at(x, y + 1) - c.at(x, y - 1)) * 0.5;
        let ds = (n.at(x, y) - p.at(x, y)) * 0.5;
        let dxx = c.at(x + 1, y) + c.at(x - 1, y) - 2.0 * v;
        let dyy = c.at(x, y + 1) + c.at(x, y - 1) - 2.0 * v;
        let dss = n.at(x, y) + p.at(x, y) - 2.0 * v;
        let dxy = (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1)) * 0.25;
        let dxs = (n.at(x + 1, y) - n.at(x - 1, y) - p.at(x + 1, y) + p.at(x - 1, y)) * 0.25;
        let dys = (n.at(x, y + 1) - n.at(x, y - 1) - p.at(x, y + 1) + p.at(x, y - 1)) * 0.25;
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let off = solve3(hess, [-dx, -dy, -ds])?;

        if off.iter().all(|o| o.abs() < 0.5) {
            let response = v + 0.5 * (dx * off[0] + dy * off[1] + ds * off[2]);
            if response.abs() < cfg.contrast_threshold / s as f32 {
                return None;
            }
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = cfg.edge_ratio;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            return Some(Extremum {
                layer,
                x,
                y,
                offset: off,
                response,
            });
        }
        if step + 1 == REFINE_STEPS || off.iter().any(|o| o.abs() > 1e3) {
            return None;
        }
        let nx = x as isize + off[0].round() as isize;
        let ny = y as isize + off[1].round() as isize;
        let nl = layer as isize + off[2].round() as isize;
        if nl < 1
            || nl > s as isize
            || nx < border as isize
            || ny < border as isize
            || nx >= (w - border) as isize
            || ny >= (h - border) as isize
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

fn orientations(gauss: &Plane, x: usize, y: usize, scale: f32) -> Vec<f32> {
    let sigma = 1.5 * scale;
    let radius = (3.0 * sigma).round() as isize;
    let mut hist = [0f32; ORI_BINS];
    for j in -radius..=radius {
        for i in -radius..=radius {
            let Some((gx, gy)) = gauss.gradient(x as isize + i, y as isize + j) else {
                continue;
            };
            let w = (-((i * i + j * j) as f32) / (2.0 * sigma * sigma)).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle * ORI_BINS as f32 / (2.0 * PI)).round() as usize) % ORI_BINS;
            hist[bin] += w * (gx * gx + gy * gy).sqrt();
        }
    }
    for _ in 0..2 {
        let prev = hist;
        for b in 0..ORI_BINS {
            hist[b] = 0.25 * prev[(b + ORI_BINS - 1) % ORI_BINS] + 0.5 * prev[b] + 0.25 * prev[(b + 1) % ORI_BINS];
        }
    }
    let max = hist.iter().cloned().fold(0.0, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for b in 0..ORI_BINS {
        let l = hist[(b + ORI_BINS - 1) % ORI_BINS];
        let r = hist[(b + 1) % ORI_BINS];
        let c = hist[b];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let interp = 0.5 * (l - r) / (l - 2.0 * c + r);
            let angle = (b as f32 + interp) * 2.0 * PI / ORI_BINS as f32;
            out.push(angle.rem_euclid(2.0 * PI));
        }
    }
    out
}

fn describe(gauss: &Plane, x: usize, y: usize, scale: f32, orientation: f32) -> Descriptor {
    let d = HIST_GRID as f32;
    let n = HIST_BINS as f32;
    let hist_width = 3.0 * scale;
    let diag = ((gauss.w * gauss.w + gauss.h * gauss.h) as f32).sqrt();
    let radius = ((hist_width * std::f32::consts::SQRT_2 * (d + 1.0) * 0.5).round()).min(diag) as isize;
    let (sin_t, cos_t) = orientation.sin_cos();
    let (sin_t, cos_t) = (sin_t / hist_width, cos_t / hist_width);
    let exp_scale = -1.0 / (d * d * 0.5);

    let stride = HIST_GRID + 2;
    let mut hist = vec![0f32; stride * stride * (HIST_BINS + 2)];
    for i in -radius..=radius {
        for j in -radius..=radius {
            let c_rot = j as f32 * cos_t - i as f32 * sin_t;
            let r_rot = j as f32 * sin_t + i as f32 * cos_t;
            let rbin = r_rot + d / 2.0 - 0.5;
            let cbin = c_rot + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let Some((gx, gy)) = gauss.gradient(x as isize + j, y as isize + i) else {
                continue;
            };
            let mag = (gx * gx + gy * gy).sqrt() * ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
            let mut obin = (gy.atan2(gx) - orientation).rem_euclid(2.0 * PI) * n / (2.0 * PI);
            if obin >= n {
                obin -= n;
            }

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (dr, dc, dob) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0, o0) = (r0 as isize, c0 as isize, o0 as usize);
            for (ri, rw) in [(0, 1.0 - dr), (1, dr)] {
                for (ci, cw) in [(0, 1.0 - dc), (1, dc)] {
                    for (oi, ow) in [(0, 1.0 - dob), (1, dob)] {
                        let rr = (r0 + ri + 1) as usize;
                        let cc = (c0 + ci + 1) as usize;
                        let oo = (o0 + oi) % HIST_BINS;
                        hist[(rr * stride + cc) * (HIST_BINS + 2) + oo] += mag * rw * cw * ow;
                    }
                }
            }
        }
    }

    let mut desc = [0f32; DESCRIPTOR_LEN];
    for r in 0..HIST_GRID {
        for c in 0..HIST_GRID {
            for o in 0..HIST_BINS {
                desc[(r * HIST_GRID + c) * HIST_BINS + o] = hist[((r + 1) * stride + c + 1) * (HIST_BINS + 2) + o];
            }
        }
    }
    normalize(&mut desc);
    desc.iter_mut().for_each(|v| *v = v.min(DESCRIPTOR_CLIP));
    normalize(&mut desc);
    desc
}

fn normalize(v: &mut Descriptor) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Detects and describes keypoints. Deterministic for a given image and
/// configuration; an image without local structure yields an empty set.
pub fn extract_features(img: &Grayscale, cfg: &FeatureConfig) -> FeatureSet {
    let s = cfg.scales_per_octave.max(1);
    if img.width() < 2 * cfg.border + 3 || img.height() < 2 * cfg.border + 3 {
        return FeatureSet::default();
    }
    let pyramid = build_pyramid(img, cfg);
    let prefilter = 0.5 * cfg.contrast_threshold / s as f32;

    let mut found: Vec<(Keypoint, Descriptor)> = Vec::new();
    for (o, octave) in pyramid.iter().enumerate() {
        let (w, h) = (octave.dog[0].w, octave.dog[0].h);
        if w < 2 * cfg.border + 3 || h < 2 * cfg.border + 3 {
            break;
        }
        let octave_scale = (1u32 << o) as f32;
        let rows: Vec<usize> = (cfg.border..h - cfg.border).collect();
        let per_row = par::map(&rows, |&y| {
            let mut out = Vec::new();
            for layer in 1..=s {
                for x in cfg.border..w - cfg.border {
                    let v = octave.dog[layer].at(x, y);
                    if v.abs() <= prefilter || !is_extremum(&octave.dog, layer, x, y) {
                        continue;
                    }
                    let Some(ext) = refine(&octave.dog, s, cfg.border, layer, x, y, cfg) else {
                        continue;
                    };
                    let layer_pos = ext.layer as f32 + ext.offset[2];
                    let scale_oct = cfg.base_sigma * 2f32.powf(layer_pos / s as f32);
                    let gauss = &octave.gauss[ext.layer];
                    for angle in orientations(gauss, ext.x, ext.y, scale_oct) {
                        let desc = describe(gauss, ext.x, ext.y, scale_oct, angle);
                        let kp = Keypoint {
                            x: (ext.x as f32 + ext.offset[0]) * octave_scale,
                            y: (ext.y as f32 + ext.offset[1]) * octave_scale,
                            scale: scale_oct * octave_scale,
                            orientation: angle,
                            response: ext.response.abs(),
                        };
                        out.push((kp, desc));
                    }
                }
            }
            out
        });
        found.extend(per_row.into_iter().flatten());
    }

    // Strongest first; position breaks ties so the order never depends on
    // scheduling.
    found.sort_by(|a, b| {
        b.0.response
            .total_cmp(&a.0.response)
            .then(a.0.y.total_cmp(&b.0.y))
            .then(a.0.x.total_cmp(&b.0.x))
            .then(a.0.orientation.total_cmp(&b.0.orientation))
    });
    found.truncate(cfg.max_features);
    let (keypoints, descriptors) = found.into_iter().unzip();
    FeatureSet { keypoints, descriptors }
}

/// A putative correspondence between a keypoint of the anchor set (`from`)
/// and one of the candidate set (`to`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub from: (f32, f32),
    pub to: (f32, f32),
    pub distance: f32,
    pub from_index: usize,
    pub to_index: usize,
}

#[inline]
fn distance_sq(a: &Descriptor, b: &Descriptor) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best and second-best squared distance and the best index.
fn two_nearest(d: &Descriptor, set: &[Descriptor]) -> (usize, f32, f32) {
    let (mut bi, mut b1, mut b2) = (usize::MAX, f32::INFINITY, f32::INFINITY);
    for (i, e) in set.iter().enumerate() {
        let dist = distance_sq(d, e);
        if dist < b1 {
            b2 = b1;
            b1 = dist;
            bi = i;
        } else if dist < b2 {
            b2 = dist;
        }
    }
    (bi, b1, b2)
}

/// Mutual nearest neighbours of `a` and `b` that pass the ratio test
/// (best distance < `ratio` × second best, checked in both directions).
pub fn match_features(a: &FeatureSet, b: &FeatureSet, ratio: f32) -> Vec<MatchPair> {
    debug_assert!(ratio > 0.0 && ratio < 1.0, "ratio must be in (0, 1)");
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let r2 = ratio * ratio;
    let forward = par::map(&a.descriptors, |d| two_nearest(d, &b.descriptors));
    let backward = par::map(&b.descriptors, |d| two_nearest(d, &a.descriptors));

    forward
        .iter()
        .enumerate()
        .filter_map(|(i, &(j, d1, d2))| {
            let (back, e1, e2) = backward[j];
            let passes = |best: f32, second: f32| second.is_infinite() || best < r2 * second;
            (back == i && passes(d1, d2) && passes(e1, e2)).then(|| MatchPair {
                from: (a.keypoints[i].x, a.keypoints[i].y),
                to: (b.keypoints[j].x, b.keypoints[j].y),
                distance: d1.sqrt(),
                from_index: i,
                to_index: j,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(w: usize, h: usize, seed: u64) -> Grayscale {
        // deterministic pseudo-random blob field
        let mut centers = Vec::new();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as f32 / (1u64 << 31) as f32
        };
        for _ in 0..(w * h / 300) {
            centers.push((
                next() * w as f32,
                next() * h as f32,
                2.0 + 4.0 * next(),
                60.0 + 150.0 * next(),
            ));
        }
        Grayscale::from_fn(w, h, |x, y| {
            let mut v = 30.0;
            for &(cx, cy, r, a) in &centers {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                v += a * (-d2 / (2.0 * r * r)).exp();
            }
            v.min(255.0) as u8
        })
    }

    #[test]
    fn constant_image_has_no_features() {
        let f = extract_features(&Grayscale::filled(64, 64, 100), &FeatureConfig::default());
        assert!(f.is_empty());
        assert_eq!(f.keypoints.len(), f.descriptors.len());
    }

    #[test]
    fn extraction_is_deterministic_and_in_bounds() {
        let img = blobs(128, 96, 3);
        let cfg = FeatureConfig::default();
        let a = extract_features(&img, &cfg);
        let b = extract_features(&img, &cfg);
        assert!(a.len() > 10, "only {} keypoints", a.len());
        assert_eq!(a, b);
        for k in &a.keypoints {
            assert!(k.x >= 0.0 && k.x < 128.0 && k.y >= 0.0 && k.y < 96.0);
        }
        for d in &a.descriptors {
            let n: f32 = d.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn matching_empty_sets_yields_nothing() {
        let img = blobs(96, 96, 1);
        let f = extract_features(&img, &FeatureConfig::default());
        assert!(match_features(&f, &FeatureSet::default(), 0.75).is_empty());
        assert!(match_features(&FeatureSet::default(), &f, 0.75).is_empty());
    }

    #[test]
    fn identical_sets_match_themselves() {
        let img = blobs(128, 128, 7);
        let f = extract_features(&img, &FeatureConfig::default());
        let m = match_features(&f, &f, 0.75);
        assert!(!m.is_empty());
        for p in &m {
            assert_eq!(p.from_index, p.to_index);
            assert_eq!(p.distance, 0.0);
        }
    }

    #[test]
    fn shifted_crop_keeps_keypoint_geometry() {
        let img = blobs(200, 160, 11);
        let a = img.crop(&crate::Rect::new(0, 0, 160, 128)).unwrap();
        let b = img.crop(&crate::Rect::new(12, 7, 160, 128)).unwrap();
        let cfg = FeatureConfig::default();
        let m = match_features(&extract_features(&a, &cfg), &extract_features(&b, &cfg), 0.75);
        let consistent = m
            .iter()
            .filter(|p| ((p.from.0 - p.to.0) - 12.0).abs() < 0.5 && ((p.from.1 - p.to.1) - 7.0).abs() < 0.5)
            .count();
        assert!(consistent >= 10, "{consistent} of {} consistent", m.len());
    }

    #[test]
    fn solve3_recovers_known_solution() {
        let h = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x = [0.3, -0.7, 1.1];
        let b = [
            h[0][0] * x[0] + h[0][1] * x[1] + h[0][2] * x[2],
            h[1][0] * x[0] + h[1][1] * x[1] + h[1][2] * x[2],
            h[2][0] * x[0] + h[2][1] * x[1] + h[2][2] * x[2],
        ];
        let got = solve3(h, b).unwrap();
        for k in 0..3 {
            assert!((got[k] - x[k]).abs() < 1e-5);
        }
    }
}
