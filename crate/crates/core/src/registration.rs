//! Translation-only registration of a chronological frame sequence.
//!
//! Two chaining strategies are provided:
//!
//! * [`chain_register`] scans candidates forward from an anchor frame and
//!   links each accepted candidate to the anchor that matched it.
//! * [`reference_stitch_register`] matches every candidate against the
//!   content of the growing mosaic, approximated by the merged feature sets
//!   of the most recently placed frames.
//!
//! Both produce integer offsets only. Frames are never scaled, rotated or
//! resampled, so [`globalize`] can turn the links into canvas positions by
//! propagating offsets from the first placed frame.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, match_features, FeatureConfig, FeatureSet, MatchPair};
use crate::frame::FrameRecord;
use crate::image::Rect;
use crate::par;

/// Union feature sets drop keypoints closer than this (in mosaic pixels) to
/// one already contributed by a more recent frame.
const UNION_DEDUP_RADIUS: f32 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Anchor/candidate forward scan.
    #[default]
    Chain,
    /// Matching against recent mosaic content.
    Reference,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Chain => "chain",
            Algorithm::Reference => "reference",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Algorithm::Chain),
            "reference" => Ok(Algorithm::Reference),
            other => Err(Error::InvalidParameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub algorithm: Algorithm,
    /// Lowe ratio-test threshold.
    pub ratio: f32,
    pub min_inliers: usize,
    /// Chebyshev tolerance, in pixels, for a match to support an offset.
    pub inlier_tol: u32,
    /// Consecutive failed candidates tolerated before the scan changes course.
    pub max_failures: usize,
    /// Number of recently placed frames whose features stand in for the
    /// mosaic in reference stitching.
    pub recent_frames: usize,
    pub features: FeatureConfig,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            algorithm: Algorithm::Chain,
            ratio: 0.75,
            min_inliers: 10,
            inlier_tol: 2,
            max_failures: 10,
            recent_frames: 3,
            features: FeatureConfig::default(),
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidParameter(format!("ratio {} not in (0, 1)", self.ratio)));
        }
        if self.max_failures == 0 {
            return Err(Error::InvalidParameter("max_failures must be at least 1".into()));
        }
        if self.recent_frames == 0 {
            return Err(Error::InvalidParameter("recent_frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Measured offset of a candidate frame relative to an anchor frame:
/// `candidate origin = anchor origin + (dx, dy)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationLink {
    pub anchor_id: String,
    pub candidate_id: String,
    pub dx: i64,
    pub dy: i64,
    pub inliers: usize,
    pub total_matches: usize,
}

/// Offset agreed on by a set of matches, before it is tied to frame ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranslationEstimate {
    pub dx: i64,
    pub dy: i64,
    pub inliers: usize,
    pub total_matches: usize,
}

impl TranslationEstimate {
    pub fn into_link(self, anchor_id: &str, candidate_id: &str) -> TranslationLink {
        TranslationLink {
            anchor_id: anchor_id.to_string(),
            candidate_id: candidate_id.to_string(),
            dx: self.dx,
            dy: self.dy,
            inliers: self.inliers,
            total_matches: self.total_matches,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Offset implied by one match: where the candidate's origin sits relative
/// to the anchor's if the two keypoints are the same scene point.
#[inline]
fn pair_offset(p: &MatchPair) -> (f64, f64) {
    (p.from.0 as f64 - p.to.0 as f64, p.from.1 as f64 - p.to.1 as f64)
}

/// Median offset, rounded, and the inlier mask around it.
fn consensus(pairs: &[MatchPair], inlier_tol: u32) -> Option<((i64, i64), Vec<bool>)> {
    if pairs.is_empty() {
        return None;
    }
    let (mut xs, mut ys): (Vec<f64>, Vec<f64>) = pairs.iter().map(pair_offset).unzip();
    let cx = median(&mut xs).round();
    let cy = median(&mut ys).round();
    let tol = inlier_tol as f64;
    let mask: Vec<bool> = pairs
        .iter()
        .map(|p| {
            let (ox, oy) = pair_offset(p);
            (ox - cx).abs().max((oy - cy).abs()) <= tol
        })
        .collect();
    Some(((cx as i64, cy as i64), mask))
}

fn refit(pairs: &[MatchPair], mask: &[bool]) -> (i64, i64, usize) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (p, _) in pairs.iter().zip(mask).filter(|(_, &m)| m) {
        let (ox, oy) = pair_offset(p);
        sx += ox;
        sy += oy;
        n += 1;
    }
    if n == 0 {
        return (0, 0, 0);
    }
    ((sx / n as f64).round() as i64, (sy / n as f64).round() as i64, n)
}

/// Robust integer translation from matched keypoints.
///
/// Each pair votes for the offset `from - to`. The component-wise median of
/// the votes, rounded, is the initial guess; votes within `inlier_tol`
/// (Chebyshev) of it are inliers, and the final offset is their rounded
/// mean. Returns `None` when fewer than `min_inliers` votes agree.
pub fn estimate_translation(pairs: &[MatchPair], inlier_tol: u32, min_inliers: usize) -> Option<TranslationEstimate> {
    let (_, mask) = consensus(pairs, inlier_tol)?;
    let (dx, dy, inliers) = refit(pairs, &mask);
    (inliers >= min_inliers.max(1)).then_some(TranslationEstimate {
        dx,
        dy,
        inliers,
        total_matches: pairs.len(),
    })
}

/// Links between frames plus which frames ended up in the mosaic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub links: Vec<TranslationLink>,
    /// Placed frames, first placed (the root) first, without duplicates.
    pub used_ids: Vec<String>,
    pub skipped_ids: Vec<String>,
}

fn require_frames(frames: &[FrameRecord], cfg: &RegistrationConfig) -> Result<()> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "registration needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    Ok(())
}

fn extract_all(frames: &[FrameRecord], cfg: &FeatureConfig) -> Vec<FeatureSet> {
    par::map(frames, |f| extract_features(&f.image, cfg))
}

fn finish(frames: &[FrameRecord], placed: &[usize], links: Vec<TranslationLink>) -> Result<RegistrationResult> {
    if links.is_empty() {
        return Err(Error::ChainEmpty);
    }
    let used: HashSet<usize> = placed.iter().copied().collect();
    Ok(RegistrationResult {
        links,
        used_ids: placed.iter().map(|&p| frames[p].id.clone()).collect(),
        skipped_ids: (0..frames.len())
            .filter(|p| !used.contains(p))
            .map(|p| frames[p].id.clone())
            .collect(),
    })
}

/// Forward anchor/candidate scan over the selected frames.
///
/// The scan is commonly written as:
///
/// ```text
/// while j <= N:
///     j = i; error = 0; flag = True
///     while flag:
///         if Image[j] and Image[i+1] match:
///             coord.append(diff); usedImages.append(Image[j], Image[i+1])
///             i += 1; flag = False
///         else:
///             error += 1
///             if error >= 10: j += 1 else: i += 1
/// return coord, list(set(usedImages))
/// ```
///
/// Taken literally the outer guard reads `j` before it is set and an anchor
/// advanced past a failure would start a second, disconnected chain. The
/// implemented reconstruction keeps one connected chain:
///
/// * the anchor is the latest placed frame and candidates after it are tried
///   in order; an accepted candidate becomes the new anchor and the failure
///   count resets;
/// * after `max_failures` consecutive failures the anchor moves: while
///   nothing has been placed yet the root itself advances to the next frame
///   (the literal `j += 1`); otherwise earlier placed frames take turns as
///   anchor for the same candidates, and once every placed frame has failed
///   the unmatched run is skipped and the scan resumes after it;
/// * the scan ends when the candidate index passes the last frame.
pub fn chain_register(frames: &[FrameRecord], cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    require_frames(frames, cfg)?;
    let feats = extract_all(frames, &cfg.features);
    let n = frames.len();

    let try_link = |anchor: usize, cand: usize| -> Option<TranslationLink> {
        let pairs = match_features(&feats[anchor], &feats[cand], cfg.ratio);
        estimate_translation(&pairs, cfg.inlier_tol, cfg.min_inliers)
            .map(|e| e.into_link(&frames[anchor].id, &frames[cand].id))
    };

    let mut placed = vec![0usize];
    let mut links = Vec::new();
    let mut anchor = 0usize;
    // How many placed frames, counted back from the latest, have already
    // served as anchor for the current run of candidates.
    let mut fallback = 0usize;
    let mut cand = 1usize;
    let mut errors = 0usize;

    while cand < n {
        if let Some(link) = try_link(anchor, cand) {
            links.push(link);
            placed.push(cand);
            anchor = cand;
            cand += 1;
            errors = 0;
            fallback = 0;
            continue;
        }
        errors += 1;
        if errors < cfg.max_failures {
            cand += 1;
            continue;
        }
        errors = 0;
        let latest = *placed.last().expect("root is always placed");
        if links.is_empty() {
            // nothing chained yet: the root moves on
            placed = vec![latest + 1];
            anchor = latest + 1;
            cand = anchor + 1;
        } else if fallback + 1 < placed.len() {
            fallback += 1;
            anchor = placed[placed.len() - 1 - fallback];
            cand = latest + 1;
        } else {
            fallback = 0;
            anchor = latest;
            cand = latest + cfg.max_failures + 1;
        }
    }
    finish(frames, &placed, links)
}

/// Features of the most recently placed frames merged in mosaic
/// coordinates; a keypoint is dropped if a more recent frame already
/// contributed one within [`UNION_DEDUP_RADIUS`].
fn union_features(recent: &[(usize, (i64, i64))], feats: &[FeatureSet]) -> (FeatureSet, Vec<usize>) {
    let mut union = FeatureSet::default();
    let mut owner = Vec::new();
    let cell = UNION_DEDUP_RADIUS;
    let key = |x: f32, y: f32| ((x / cell).floor() as i64, (y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for &(frame, (ox, oy)) in recent.iter().rev() {
        let fs = &feats[frame];
        for (kp, desc) in fs.keypoints.iter().zip(&fs.descriptors) {
            let (gx, gy) = (kp.x + ox as f32, kp.y + oy as f32);
            let (kx, ky) = key(gx, gy);
            let mut duplicate = false;
            'search: for cx in kx - 1..=kx + 1 {
                for cy in ky - 1..=ky + 1 {
                    for &i in grid.get(&(cx, cy)).into_iter().flatten() {
                        let other = &union.keypoints[i];
                        // only keypoints of other frames count as duplicates
                        if owner[i] != frame && (other.x - gx).powi(2) + (other.y - gy).powi(2) <= cell * cell {
                            duplicate = true;
                            break 'search;
                        }
                    }
                }
            }
            if duplicate {
                continue;
            }
            grid.entry((kx, ky)).or_default().push(union.len());
            let mut moved = *kp;
            moved.x = gx;
            moved.y = gy;
            union.push(moved, *desc);
            owner.push(frame);
        }
    }
    (union, owner)
}

/// Mosaic-anchored registration.
///
/// The textbook flow keeps a reference image A (initially the first
/// frame), tries candidates B = Images[i+j+1] against it, stitches B onto A
/// on success and resets the failure count, and stops once ten consecutive
/// candidates fail (`while j <= 10`). Its outer-loop reassignment
/// `A = Images[i]` would discard the mosaic, so here every candidate is
/// matched against the union of the `recent_frames` latest placed frames'
/// features, positioned in mosaic coordinates. The link is recorded against
/// the placed frame that supplied the most inliers. If nothing has been
/// placed beyond the first frame when the failure budget runs out, the first
/// frame is abandoned and the next one becomes the root.
pub fn reference_stitch_register(frames: &[FrameRecord], cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    require_frames(frames, cfg)?;
    let feats = extract_all(frames, &cfg.features);
    let n = frames.len();

    let mut placed: Vec<(usize, (i64, i64))> = vec![(0, (0, 0))];
    let mut links: Vec<TranslationLink> = Vec::new();
    let mut failures = 0usize;
    let mut cand = 1usize;

    while cand < n {
        let start = placed.len().saturating_sub(cfg.recent_frames);
        let recent = &placed[start..];
        let (union, owner) = union_features(recent, &feats);
        let pairs = match_features(&union, &feats[cand], cfg.ratio);
        let accepted = consensus(&pairs, cfg.inlier_tol).and_then(|(_, mask)| {
            let (gx, gy, inliers) = refit(&pairs, &mask);
            (inliers >= cfg.min_inliers.max(1)).then_some((gx, gy, inliers, mask))
        });

        match accepted {
            Some((gx, gy, inliers, mask)) => {
                let mut support: BTreeMap<usize, usize> = BTreeMap::new();
                for (p, _) in pairs.iter().zip(&mask).filter(|(_, &m)| m) {
                    *support.entry(owner[p.from_index]).or_default() += 1;
                }
                // most inliers; on a tie the most recent frame
                let (&anchor, _) = support
                    .iter()
                    .max_by_key(|(&frame, &count)| (count, frame))
                    .expect("accepted match has inliers");
                let (ax, ay) = placed.iter().find(|(f, _)| *f == anchor).expect("anchor is placed").1;
                links.push(TranslationLink {
                    anchor_id: frames[anchor].id.clone(),
                    candidate_id: frames[cand].id.clone(),
                    dx: gx - ax,
                    dy: gy - ay,
                    inliers,
                    total_matches: pairs.len(),
                });
                placed.push((cand, (gx, gy)));
                failures = 0;
                cand += 1;
            }
            None => {
                failures += 1;
                cand += 1;
                if failures >= cfg.max_failures {
                    if !links.is_empty() {
                        break;
                    }
                    let root = placed[0].0 + 1;
                    placed = vec![(root, (0, 0))];
                    cand = root + 1;
                    failures = 0;
                }
            }
        }
    }
    let order: Vec<usize> = placed.iter().map(|(f, _)| *f).collect();
    finish(frames, &order, links)
}

/// Runs the configured algorithm.
pub fn register(frames: &[FrameRecord], cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    match cfg.algorithm {
        Algorithm::Chain => chain_register(frames, cfg),
        Algorithm::Reference => reference_stitch_register(frames, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub id: String,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Placement {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.width, self.height)
    }
}

/// Frame id, raw origin and frame size.
pub type PositionEntry = (String, (i64, i64), (usize, usize));

/// Global canvas positions of the placed frames.
///
/// Placements are kept in chronological order; the smallest x and the
/// smallest y over all placements are both 0 and the canvas is the tight
/// bounding box of every frame rectangle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosaicLayout {
    pub placements: Vec<Placement>,
    pub canvas_w: usize,
    pub canvas_h: usize,
}

impl MosaicLayout {
    pub fn get(&self, id: &str) -> Option<&Placement> {
        self.placements.iter().find(|p| p.id == id)
    }

    pub fn position(&self, id: &str) -> Option<(usize, usize)> {
        self.get(id).map(|p| (p.x, p.y))
    }

    /// Builds a layout from raw (possibly negative) positions, shifting them
    /// so the minimum x and y are zero.
    pub fn from_positions(entries: Vec<PositionEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyLayout);
        }
        let min_x = entries.iter().map(|e| e.1 .0).min().expect("non-empty");
        let min_y = entries.iter().map(|e| e.1 .1).min().expect("non-empty");
        let placements: Vec<Placement> = entries
            .into_iter()
            .map(|(id, (x, y), (w, h))| Placement {
                id,
                x: (x - min_x) as usize,
                y: (y - min_y) as usize,
                width: w,
                height: h,
            })
            .collect();
        let canvas_w = placements.iter().map(|p| p.x + p.width).max().unwrap_or(0);
        let canvas_h = placements.iter().map(|p| p.y + p.height).max().unwrap_or(0);
        Ok(MosaicLayout {
            placements,
            canvas_w,
            canvas_h,
        })
    }
}

/// Converts pairwise links into canvas positions: the first used frame sits
/// at the origin, every candidate at its anchor's position plus the link
/// offset, and the result is shifted so no coordinate is negative. For a
/// plain chain this is the running sum of the offsets.
pub fn globalize(result: &RegistrationResult, frame_dims: &HashMap<String, (usize, usize)>) -> Result<MosaicLayout> {
    let root = result.used_ids.first().ok_or(Error::EmptyLayout)?;
    let mut adjacency: HashMap<&str, Vec<(&str, i64, i64)>> = HashMap::new();
    for l in &result.links {
        adjacency
            .entry(l.anchor_id.as_str())
            .or_default()
            .push((l.candidate_id.as_str(), l.dx, l.dy));
        adjacency
            .entry(l.candidate_id.as_str())
            .or_default()
            .push((l.anchor_id.as_str(), -l.dx, -l.dy));
    }

    let mut positions: HashMap<&str, (i64, i64)> = HashMap::new();
    positions.insert(root.as_str(), (0, 0));
    let mut queue = VecDeque::from([root.as_str()]);
    while let Some(id) = queue.pop_front() {
        let (x, y) = positions[id];
        for &(next, dx, dy) in adjacency.get(id).into_iter().flatten() {
            if !positions.contains_key(next) {
                positions.insert(next, (x + dx, y + dy));
                queue.push_back(next);
            }
        }
    }

    let mut entries = Vec::with_capacity(result.used_ids.len());
    for id in &result.used_ids {
        let pos = *positions
            .get(id.as_str())
            .ok_or_else(|| Error::DisconnectedChain(id.clone()))?;
        let dims = *frame_dims.get(id).ok_or_else(|| Error::UnknownFrame(id.clone()))?;
        entries.push((id.clone(), pos, dims));
    }
    MosaicLayout::from_positions(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(from: (f32, f32), offset: (f32, f32)) -> MatchPair {
        MatchPair {
            from,
            to: (from.0 - offset.0, from.1 - offset.1),
            distance: 0.0,
            from_index: 0,
            to_index: 0,
        }
    }

    #[test]
    fn exact_consensus() {
        let pairs: Vec<_> = (0..20)
            .map(|i| pair((i as f32 * 7.0, 30.0 + i as f32), (10.0, -3.0)))
            .collect();
        let e = estimate_translation(&pairs, 2, 10).unwrap();
        assert_eq!((e.dx, e.dy, e.inliers, e.total_matches), (10, -3, 20, 20));
    }

    #[test]
    fn outlier_is_rejected() {
        let mut pairs: Vec<_> = (0..19)
            .map(|i| pair((i as f32, 2.0 * i as f32), (10.0, -3.0)))
            .collect();
        pairs.push(pair((5.0, 5.0), (200.0, 50.0)));
        let e = estimate_translation(&pairs, 2, 10).unwrap();
        assert_eq!((e.dx, e.dy, e.inliers, e.total_matches), (10, -3, 19, 20));
    }

    #[test]
    fn too_few_inliers_is_no_match() {
        let pairs: Vec<_> = (0..5).map(|i| pair((i as f32, 0.0), (1.0, 1.0))).collect();
        assert!(estimate_translation(&pairs, 2, 10).is_none());
        assert!(estimate_translation(&[], 2, 0).is_none());
    }

    #[test]
    fn inliers_refit_with_rounded_mean() {
        // median 4, tolerance 1 keeps {3.6, 4.0, 4.4, 4.9}; mean 4.225
        let pairs: Vec<_> = [3.6, 4.0, 4.4, 4.9, 9.0]
            .iter()
            .map(|&d| pair((50.0, 50.0), (d, 0.0)))
            .collect();
        let e = estimate_translation(&pairs, 1, 1).unwrap();
        assert_eq!((e.dx, e.dy, e.inliers), (4, 0, 4));
    }

    fn result(ids: &[&str], links: &[(&str, &str, i64, i64)]) -> RegistrationResult {
        RegistrationResult {
            links: links
                .iter()
                .map(|&(a, c, dx, dy)| TranslationLink {
                    anchor_id: a.into(),
                    candidate_id: c.into(),
                    dx,
                    dy,
                    inliers: 10,
                    total_matches: 10,
                })
                .collect(),
            used_ids: ids.iter().map(|s| s.to_string()).collect(),
            skipped_ids: vec![],
        }
    }

    fn dims(ids: &[&str], w: usize, h: usize) -> HashMap<String, (usize, usize)> {
        ids.iter().map(|s| (s.to_string(), (w, h))).collect()
    }

    #[test]
    fn globalize_cumulative_offsets() {
        let r = result(&["a", "b", "c"], &[("a", "b", -5, 2), ("b", "c", 3, -4)]);
        let l = globalize(&r, &dims(&["a", "b", "c"], 10, 10)).unwrap();
        assert_eq!(l.position("a"), Some((5, 2)));
        assert_eq!(l.position("b"), Some((0, 4)));
        assert_eq!(l.position("c"), Some((3, 0)));
        assert_eq!((l.canvas_w, l.canvas_h), (15, 14));
    }

    #[test]
    fn globalize_single_frame() {
        let r = result(&["a"], &[]);
        let l = globalize(&r, &dims(&["a"], 30, 20)).unwrap();
        assert_eq!(l.position("a"), Some((0, 0)));
        assert_eq!((l.canvas_w, l.canvas_h), (30, 20));
    }

    #[test]
    fn globalize_rejects_disconnected_frames() {
        let r = result(&["a", "b", "c"], &[("a", "b", 1, 1)]);
        assert!(matches!(
            globalize(&r, &dims(&["a", "b", "c"], 5, 5)),
            Err(Error::DisconnectedChain(id)) if id == "c"
        ));
        let r = result(&["a", "b"], &[("a", "b", 1, 1)]);
        assert!(matches!(
            globalize(&r, &dims(&["a"], 5, 5)),
            Err(Error::UnknownFrame(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = RegistrationConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.ratio = 1.0;
        assert!(cfg.validate().is_err());
        assert_eq!("reference".parse::<Algorithm>().unwrap(), Algorithm::Reference);
        assert!("sift".parse::<Algorithm>().is_err());
    }
}
