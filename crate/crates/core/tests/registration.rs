mod common;

use std::collections::HashMap;

use endomosaic::pipeline::frame_dims;
use endomosaic::registration::Algorithm;
use endomosaic::synth::{evaluate_registration, generate_sweep, SweepPath, SweepSpec};
use endomosaic::{
    chain_register, globalize, reference_stitch_register, Error, FrameRecord, Grayscale, MosaicLayout,
    RegistrationConfig,
};

use common::{crops, noise, scene};

fn positions(layout: &MosaicLayout) -> HashMap<String, (usize, usize)> {
    layout.placements.iter().map(|p| (p.id.clone(), (p.x, p.y))).collect()
}

#[test]
fn chain_recovers_exact_shifts() {
    let s = scene(1);
    let frames = crops(&s.image, &[(200, 160), (210, 160), (218, 158)], 256);
    let r = chain_register(&frames, &RegistrationConfig::default()).unwrap();
    let shifts: Vec<_> = r.links.iter().map(|l| (l.dx, l.dy)).collect();
    assert_eq!(shifts, vec![(10, 0), (8, -2)]);
    assert_eq!(r.used_ids.len(), 3);
    assert!(r.skipped_ids.is_empty());
    assert!(r.links.iter().all(|l| l.inliers <= l.total_matches && l.inliers >= 10));
}

#[test]
fn chain_skips_a_noise_frame() {
    let s = scene(2);
    let mut frames = crops(&s.image, &[(200, 160), (210, 160), (218, 158), (230, 150)], 256);
    frames[1].image = noise(256, 9);
    let r = chain_register(&frames, &RegistrationConfig::default()).unwrap();
    assert_eq!(r.skipped_ids, vec!["frame_0001"]);
    assert_eq!(r.links[0].anchor_id, "frame_0000");
    assert_eq!(r.links[0].candidate_id, "frame_0002");
    assert_eq!((r.links[0].dx, r.links[0].dy), (18, -2));
    assert_eq!(r.links.len(), r.used_ids.len() - 1);
}

#[test]
fn constant_frames_give_chain_empty() {
    let frames: Vec<_> = (0..4)
        .map(|i| FrameRecord::new(format!("f{i}"), i, Grayscale::filled(64, 64, 90)))
        .collect();
    let cfg = RegistrationConfig::default();
    assert!(matches!(chain_register(&frames, &cfg), Err(Error::ChainEmpty)));
    assert!(matches!(
        reference_stitch_register(&frames, &cfg),
        Err(Error::ChainEmpty)
    ));
    assert!(chain_register(&frames[..1], &cfg).is_err());
}

#[test]
fn reference_matches_chain_on_easy_crops() {
    let s = scene(1);
    let frames = crops(&s.image, &[(200, 160), (210, 160), (218, 158)], 256);
    let cfg = RegistrationConfig::default();
    let dims = frame_dims(&frames);
    let a = globalize(&chain_register(&frames, &cfg).unwrap(), &dims).unwrap();
    let b = globalize(&reference_stitch_register(&frames, &cfg).unwrap(), &dims).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reference_places_a_frame_that_only_overlaps_older_content() {
    let s = scene(3);
    // frame 2 overlaps frame 0 but not frame 1
    let frames = crops(&s.image, &[(240, 150), (400, 150), (90, 170)], 256);
    let cfg = RegistrationConfig::default();
    let r = reference_stitch_register(&frames, &cfg).unwrap();
    assert!(r.skipped_ids.is_empty(), "{r:?}");
    let last = r.links.last().unwrap();
    assert_eq!(last.anchor_id, "frame_0000");
    assert_eq!((last.dx, last.dy), (-150, 20));
    let l = globalize(&r, &frame_dims(&frames)).unwrap();
    let p = positions(&l);
    assert_eq!(p["frame_0000"].0 - p["frame_0002"].0, 150);
}

#[test]
fn reference_stops_after_failure_budget() {
    let s = scene(4);
    let mut frames = crops(&s.image, &[(200, 160), (210, 160)], 256);
    for k in 0..11 {
        frames.push(FrameRecord::new(format!("garbage_{k:02}"), 2 + k, noise(256, 100 + k)));
    }
    let tail = crops(&s.image, &[(220, 160)], 256).remove(0);
    frames.push(FrameRecord::new("late", 20, tail.image));
    let r = reference_stitch_register(&frames, &RegistrationConfig::default()).unwrap();
    assert_eq!(r.used_ids, vec!["frame_0000", "frame_0001"]);
    assert!(r.skipped_ids.contains(&"late".to_string()));
}

#[test]
fn chain_scan_continues_past_an_unmatched_run() {
    let s = scene(4);
    let mut frames = crops(&s.image, &[(200, 160), (210, 160)], 256);
    for k in 0..11 {
        frames.push(FrameRecord::new(format!("garbage_{k:02}"), 2 + k, noise(256, 200 + k)));
    }
    let tail = crops(&s.image, &[(220, 160)], 256).remove(0);
    frames.push(FrameRecord::new("late", 20, tail.image));
    let r = chain_register(&frames, &RegistrationConfig::default()).unwrap();
    assert_eq!(r.used_ids, vec!["frame_0000", "frame_0001", "late"]);
    assert_eq!((r.links[1].dx, r.links[1].dy), (10, 0));
}

#[test]
fn root_advances_when_the_first_frame_is_unusable() {
    let s = scene(5);
    let mut frames = crops(&s.image, &[(0, 0), (200, 160), (210, 160), (220, 165)], 256);
    frames[0].image = noise(256, 1);
    let cfg = RegistrationConfig {
        max_failures: 2,
        ..RegistrationConfig::default()
    };
    let r = chain_register(&frames, &cfg).unwrap();
    assert_eq!(r.used_ids, vec!["frame_0001", "frame_0002", "frame_0003"]);
    let r = reference_stitch_register(&frames, &cfg).unwrap();
    assert_eq!(r.used_ids, vec!["frame_0001", "frame_0002", "frame_0003"]);
}

#[test]
fn spiral_sweep_globalizes_to_truth() {
    let s = scene(6);
    let sweep = SweepSpec {
        crop_w: 256,
        crop_h: 256,
        path: SweepPath::Spiral { turns: 1.5 },
        max_frames: Some(20),
        ..SweepSpec::default()
    };
    let truth = generate_sweep(&s, &sweep).unwrap();
    for algorithm in [Algorithm::Chain, Algorithm::Reference] {
        let cfg = RegistrationConfig {
            algorithm,
            ..RegistrationConfig::default()
        };
        let r = endomosaic::registration::register(&truth.frames, &cfg).unwrap();
        let layout = globalize(&r, &frame_dims(&truth.frames)).unwrap();
        assert_eq!(layout.placements.len(), 20);
        let report = evaluate_registration(&layout, &truth, None).unwrap();
        assert_eq!(report.max_err, 0, "{algorithm:?}: {report:?}");
        assert_eq!(report.used_fraction, 1.0);
    }
}
