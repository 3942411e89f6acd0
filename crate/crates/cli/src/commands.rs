use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use endomosaic::focus::select_focused_frames;
use endomosaic::io::{
    ingest, load_frames, load_grayscale, manifest_dir, read_json, read_manifest, save_png, write_json, write_tiles,
    ChoicesFile, CreatedBy, FrameEntry, LayoutFile, ProvenanceFile, SequenceManifest, TILE_TABLE,
};
use endomosaic::pipeline::{run_pipeline, PipelineConfig, SelectConfig};
use endomosaic::registration::register;
use endomosaic::synth::{
    evaluate_layout, generate_scene, generate_sweep, Degradations, RegistrationReport, SceneTruth, SweepPath, SweepSpec,
};
use endomosaic::tiles::{export_tiles, TileConfig};
use endomosaic::{
    composite, globalize, sharpen_grid, CellChoice, FrameRecord, MosaicLayout, Panorama, ProvenanceIndex,
    RegistrationResult,
};
use serde::{Deserialize, Serialize};

use crate::{
    Command, CompositeArgs, EvalArgs, IngestArgs, PathKind, QueryArgs, RunArgs, SceneArgs, SelectArgs, SharpenArgs,
    StitchArgs, SweepArgs, SynthCommand, TilesArgs, UsageError,
};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Stitch(a) => cmd_stitch(&a),
        Command::Composite(a) => cmd_composite(&a),
        Command::Sharpen(a) => cmd_sharpen(&a),
        Command::Query(a) => cmd_query(&a),
        Command::Synth(SynthCommand::Scene(a)) => cmd_scene(&a),
        Command::Synth(SynthCommand::Sweep(a)) => cmd_sweep(&a),
        Command::Tiles(a) => cmd_tiles(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Run(a) => cmd_run(&a),
    }
}

fn created_by(command: &str, args: &impl Serialize) -> CreatedBy {
    CreatedBy {
        command: command.to_string(),
        config: serde_json::to_value(args).expect("arguments serialize"),
    }
}

fn usage(err: endomosaic::Error) -> anyhow::Error {
    UsageError(err.to_string()).into()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes to stdout, ignoring a reader that went away early.
fn print_json(value: &impl Serialize) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Manifest plus the directory its relative paths resolve against.
struct Sequence {
    manifest: SequenceManifest,
    base: PathBuf,
}

impl Sequence {
    fn open(path: &Path) -> Result<Self> {
        let manifest = read_manifest(path)?;
        let dir = manifest_dir(path);
        let base = match &manifest.root {
            Some(root) if root.is_absolute() => root.clone(),
            Some(root) => dir.join(root),
            None => dir,
        };
        let base = fs::canonicalize(&base).unwrap_or(base);
        Ok(Sequence { manifest, base })
    }

    fn frames(&self) -> Result<Vec<FrameRecord>> {
        Ok(load_frames(&self.manifest, &self.base)?)
    }

    /// A manifest of `ids` only, rooted so it can live anywhere.
    fn subset(&self, ids: &[String], created_by: CreatedBy) -> SequenceManifest {
        SequenceManifest {
            sequence_id: self.manifest.sequence_id.clone(),
            root: Some(self.base.clone()),
            frames: self
                .manifest
                .frames
                .iter()
                .filter(|f| ids.contains(&f.id))
                .cloned()
                .collect(),
            truth_offsets: self.manifest.truth_offsets.clone(),
            scene_size: self.manifest.scene_size,
            focus_scores: self.manifest.focus_scores.clone(),
            created_by,
        }
    }

    fn dims(&self) -> Vec<(String, (usize, usize))> {
        self.manifest
            .frames
            .iter()
            .map(|f| (f.id.clone(), (f.width, f.height)))
            .collect()
    }
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let ingested = ingest(&args.frames_dir)?;
    for w in &ingested.warnings {
        eprintln!("warning: {w}");
    }
    let mut manifest = ingested.manifest;
    manifest.created_by = created_by("ingest", args);
    write_json(&args.output, &manifest)?;
    eprintln!("{} frames -> {}", manifest.frames.len(), args.output.display());
    Ok(())
}

fn select_config(opts: &crate::SelectOpts) -> Result<SelectConfig> {
    if opts.group_size == 0 || opts.region_size < 3 {
        bail!(UsageError(
            "group size must be at least 1 and region size at least 3".into()
        ));
    }
    Ok(SelectConfig {
        group_size: opts.group_size,
        region_size: opts.region_size,
    })
}

fn selected_manifest(
    seq: &Sequence,
    selection: &[endomosaic::focus::Selection],
    created_by: CreatedBy,
) -> SequenceManifest {
    let ids: Vec<String> = selection.iter().map(|s| s.id.clone()).collect();
    let mut out = seq.subset(&ids, created_by);
    out.focus_scores = Some(selection.iter().map(|s| (s.id.clone(), s.score.value())).collect());
    out
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let cfg = select_config(&args.opts)?;
    let seq = Sequence::open(&args.manifest)?;
    let frames = seq.frames()?;
    let selection = select_focused_frames(&frames, cfg.group_size, cfg.region_size)?;
    let out = selected_manifest(&seq, &selection, created_by("select", args));
    write_json(&args.output, &out)?;
    eprintln!("selected {} of {} frames", selection.len(), frames.len());
    Ok(())
}

fn layout_file(
    seq: &Sequence,
    result: &RegistrationResult,
    layout: &MosaicLayout,
    created_by: CreatedBy,
) -> LayoutFile {
    LayoutFile::new(layout, result, &seq.dims(), created_by)
}

fn report_stitch(result: &RegistrationResult) {
    eprintln!(
        "placed {} frames ({} skipped, {} links)",
        result.used_ids.len(),
        result.skipped_ids.len(),
        result.links.len()
    );
}

fn cmd_stitch(args: &StitchArgs) -> Result<()> {
    let cfg = args.opts.config();
    cfg.validate().map_err(usage)?;
    let seq = Sequence::open(&args.manifest)?;
    let frames = seq.frames()?;
    let result = register(&frames, &cfg).map_err(|e| e.in_stage("stitch"))?;
    let dims = seq.dims().into_iter().collect();
    let layout = globalize(&result, &dims).map_err(|e| e.in_stage("stitch"))?;
    report_stitch(&result);
    write_json(
        &args.output,
        &layout_file(&seq, &result, &layout, created_by("stitch", args)),
    )?;
    Ok(())
}

/// Frames of `seq` that the layout places, in manifest order.
fn placed_frames(seq: &Sequence, layout: &MosaicLayout) -> Result<Vec<FrameRecord>> {
    let ids: Vec<String> = layout.placements.iter().map(|p| p.id.clone()).collect();
    let sub = seq.subset(&ids, CreatedBy::default());
    if sub.frames.len() != ids.len() {
        bail!("layout names frames that are not in {}", seq.base.display());
    }
    Ok(load_frames(&sub, &seq.base)?)
}

fn write_panorama(dir: &Path, image: &str, coverage: &str, pano: &Panorama) -> Result<()> {
    save_png(&dir.join(image), &pano.image)?;
    save_png(&dir.join(coverage), &pano.coverage)?;
    Ok(())
}

fn write_composite(dir: &Path, pano: &Panorama, prov: &ProvenanceIndex, created_by: CreatedBy) -> Result<()> {
    ensure_dir(dir)?;
    write_panorama(dir, "panorama.png", "coverage.png", pano)?;
    write_json(
        &dir.join("provenance.json"),
        &ProvenanceFile {
            provenance: prov.clone(),
            created_by,
        },
    )?;
    Ok(())
}

fn write_sharpened(
    dir: &Path,
    pano: &Panorama,
    choices: Vec<CellChoice>,
    cell: usize,
    created_by: CreatedBy,
) -> Result<()> {
    ensure_dir(dir)?;
    write_panorama(dir, "sharpened.png", "sharpened_coverage.png", pano)?;
    write_json(
        &dir.join("choices.json"),
        &ChoicesFile {
            cell,
            choices,
            created_by,
        },
    )?;
    Ok(())
}

fn cmd_composite(args: &CompositeArgs) -> Result<()> {
    let seq = Sequence::open(&args.manifest)?;
    let layout = read_json::<LayoutFile>(&args.layout)?.layout()?;
    let frames = placed_frames(&seq, &layout)?;
    let (pano, prov) = composite(&frames, &layout, args.mode).map_err(|e| e.in_stage("composite"))?;
    write_composite(&args.out_dir, &pano, &prov, created_by("composite", args))
}

fn cmd_sharpen(args: &SharpenArgs) -> Result<()> {
    if args.cell < 3 {
        bail!(UsageError(format!("cell size {} is below 3", args.cell)));
    }
    let seq = Sequence::open(&args.manifest)?;
    let layout = read_json::<LayoutFile>(&args.layout)?.layout()?;
    let frames = placed_frames(&seq, &layout)?;
    let prov = match &args.provenance {
        Some(path) => ProvenanceFile::read(path)?,
        None => ProvenanceIndex::from_layout(&layout),
    };
    let (pano, choices) = sharpen_grid(&frames, &layout, &prov, args.cell).map_err(|e| e.in_stage("sharpen"))?;
    write_sharpened(&args.out_dir, &pano, choices, args.cell, created_by("sharpen", args))
}

fn cmd_query(args: &QueryArgs) -> Result<()> {
    let prov = ProvenanceFile::read(&args.provenance)?;
    let hits = prov.query(args.x, args.y)?;
    print_json(&hits);
    Ok(())
}

#[derive(Serialize)]
struct SceneFile<'a> {
    spec: &'a endomosaic::synth::SceneSpec,
    guttae: &'a [endomosaic::synth::Gutta],
    created_by: CreatedBy,
}

fn write_scene(dir: &Path, scene: &SceneTruth, created_by: CreatedBy) -> Result<()> {
    ensure_dir(dir)?;
    save_png(&dir.join("scene.png"), &scene.image)?;
    save_png(&dir.join("mask.png"), &scene.guttae_mask)?;
    write_json(
        &dir.join("scene.json"),
        &SceneFile {
            spec: &scene.spec,
            guttae: &scene.guttae,
            created_by,
        },
    )?;
    Ok(())
}

fn cmd_scene(args: &SceneArgs) -> Result<()> {
    let spec = args.scene.spec();
    spec.validate().map_err(usage)?;
    let scene = generate_scene(&spec)?;
    write_scene(&args.out_dir, &scene, created_by("synth scene", args))
}

fn parse_waypoints(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| UsageError(format!("waypoint {pair:?} is not \"x,y\"")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| UsageError(format!("waypoint {pair:?} is not numeric")))
            };
            Ok((num(x)?, num(y)?))
        })
        .collect()
}

fn sweep_spec(args: &SweepArgs) -> Result<SweepSpec> {
    let path = match args.path {
        PathKind::Cornea => SweepPath::Cornea,
        PathKind::Spiral => SweepPath::Spiral { turns: args.turns },
        PathKind::Waypoints => {
            let text = args
                .waypoints
                .as_deref()
                .ok_or_else(|| UsageError("--path waypoints needs --waypoints".into()))?;
            let points = parse_waypoints(text)?;
            if points.is_empty() {
                bail!(UsageError("no waypoints given".into()));
            }
            SweepPath::Waypoints { points }
        }
    };
    if args.crop_w == 0 || args.crop_h == 0 || args.step < 1.0 {
        bail!(UsageError("crop size must be positive and step at least 1".into()));
    }
    Ok(SweepSpec {
        crop_w: args.crop_w,
        crop_h: args.crop_h,
        step: args.step,
        path,
        max_frames: args.max_frames,
        degradations: Degradations {
            blur_fraction: args.blur_fraction,
            blur_frames: args.blur_frames.clone(),
            blur_sigma: (args.blur_sigma_min, args.blur_sigma_max),
            brightness_offset: (args.brightness_min, args.brightness_max),
            noise_sigma: args.noise_sigma,
            dropout_probability: args.dropout_probability,
        },
        rng_seed: args.scene.seed,
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let spec = args.scene.spec();
    spec.validate().map_err(usage)?;
    let sweep = sweep_spec(args)?;
    let scene = generate_scene(&spec)?;
    let truth = generate_sweep(&scene, &sweep)?;

    let snapshot = created_by("synth sweep", args);
    write_scene(&args.out_dir, &scene, snapshot.clone())?;
    let frames_dir = args.out_dir.join("frames");
    ensure_dir(&frames_dir)?;
    let mut entries = Vec::with_capacity(truth.frames.len());
    for f in &truth.frames {
        let rel = PathBuf::from("frames").join(format!("{}.png", f.id));
        save_png(&args.out_dir.join(&rel), &f.image)?;
        entries.push(FrameEntry {
            id: f.id.clone(),
            index: f.index,
            path: rel,
            width: f.image.width(),
            height: f.image.height(),
        });
    }
    let manifest = SequenceManifest {
        sequence_id: format!("synthetic-{}", args.scene.seed),
        root: None,
        frames: entries,
        truth_offsets: Some(truth.truth_offsets.clone()),
        scene_size: Some((truth.scene_w, truth.scene_h)),
        focus_scores: None,
        created_by: snapshot.clone(),
    };
    write_json(&args.out_dir.join("manifest.json"), &manifest)?;
    write_json(
        &args.out_dir.join("degradations.json"),
        &DegradationFile {
            frames: &truth.degradation_log,
            created_by: snapshot,
        },
    )?;
    eprintln!("{} frames -> {}", truth.frames.len(), args.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct DegradationFile<'a> {
    frames: &'a [endomosaic::synth::FrameDegradation],
    created_by: CreatedBy,
}

fn cmd_tiles(args: &TilesArgs) -> Result<()> {
    let cfg = TileConfig {
        cell: args.cell,
        shift: args.shift,
        shifts_per_axis: args.shifts_per_axis,
        min_guttae_pixels: args.min_guttae_pixels,
    };
    if cfg.cell == 0 || cfg.shifts_per_axis == 0 {
        bail!(UsageError("cell and shifts per axis must be positive".into()));
    }
    let image = load_grayscale(&args.image)?;
    let mask = load_grayscale(&args.mask)?;
    let source_id = match &args.source_id {
        Some(id) => id.clone(),
        None => args
            .image
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("source")
            .to_string(),
    };
    let tiles = export_tiles(&source_id, &image, &mask, &cfg)?;
    ensure_dir(&args.out_dir)?;
    let rows = write_tiles(&args.out_dir, &tiles)?;
    eprintln!("{} tiles -> {}", rows.len(), args.out_dir.join(TILE_TABLE).display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub report: RegistrationReport,
    pub created_by: CreatedBy,
}

fn evaluate(seq: &Sequence, layout: &MosaicLayout, submitted: &[String]) -> Result<Option<RegistrationReport>> {
    let m = &seq.manifest;
    let Some(offsets) = &m.truth_offsets else {
        return Ok(None);
    };
    let scene_size = m.scene_size.context("manifest has truth offsets but no scene size")?;
    // every frame of the sequence counts towards the swept area
    Ok(Some(evaluate_layout(
        layout,
        &seq.dims(),
        offsets,
        scene_size,
        Some(submitted),
    )?))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let seq = Sequence::open(&args.manifest)?;
    if seq.manifest.truth_offsets.is_none() {
        bail!("{} has no truth offsets", args.manifest.display());
    }
    let file: LayoutFile = read_json(&args.layout)?;
    let layout = file.layout()?;
    let report = evaluate(&seq, &layout, &file.submitted_ids())?.expect("checked above");
    let out = ReportFile {
        report,
        created_by: created_by("eval", args),
    };
    if let Some(path) = &args.output {
        write_json(path, &out)?;
    }
    print_json(&out.report);
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = PipelineConfig {
        select: select_config(&args.select)?,
        registration: args.stitch.config(),
        composite_mode: args.mode,
        cell: args.cell,
    };
    cfg.registration.validate().map_err(usage)?;
    if cfg.cell < 3 {
        bail!(UsageError(format!("cell size {} is below 3", cfg.cell)));
    }
    let seq = Sequence::open(&args.manifest)?;
    let frames = seq.frames()?;
    let out = run_pipeline(&frames, &cfg)?;
    report_stitch(&out.registration);

    let snapshot = created_by("run", args);
    let dir = &args.out_dir;
    ensure_dir(dir)?;
    let selected = Sequence {
        manifest: selected_manifest(&seq, &out.selection, snapshot.clone()),
        base: seq.base.clone(),
    };
    write_json(&dir.join("selected.json"), &selected.manifest)?;
    let layout = layout_file(&selected, &out.registration, &out.layout, snapshot.clone());
    write_json(&dir.join("layout.json"), &layout)?;
    write_composite(dir, &out.panorama, &out.provenance, snapshot.clone())?;
    write_sharpened(dir, &out.sharpened, out.choices, cfg.cell, snapshot.clone())?;

    if let Some(report) = evaluate(&seq, &out.layout, &layout.submitted_ids())? {
        eprintln!(
            "mean_abs_err {:.3} px, max {} px, used {:.3}, coverage {:.3}",
            report.mean_abs_err, report.max_err, report.used_fraction, report.coverage_fraction
        );
        write_json(
            &dir.join("report.json"),
            &ReportFile {
                report,
                created_by: snapshot,
            },
        )?;
    }
    Ok(())
}
