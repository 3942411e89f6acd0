use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use endomosaic::focus::{DEFAULT_GROUP_SIZE, DEFAULT_REGION_SIZE};
use endomosaic::mosaic::DEFAULT_CELL;
use endomosaic::registration::Algorithm;
use endomosaic::synth::{Degradations, SceneSpec, SweepSpec};
use endomosaic::tiles::TileConfig;
use endomosaic::{CompositeMode, RegistrationConfig};
use serde::Serialize;

mod commands;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_REGISTRATION: u8 = 3;

/// Panoramic mosaics from sweeping-microscope frame sequences.
#[derive(Parser, Debug)]
#[command(name = "endomosaic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a manifest from a directory of numbered frame images.
    Ingest(IngestArgs),
    /// Keep the best-focused frame of every window.
    Select(SelectArgs),
    /// Register frames by translation and write a layout.
    Stitch(StitchArgs),
    /// Paste frames onto the canvas; writes panorama, coverage and provenance.
    Composite(CompositeArgs),
    /// Rebuild the canvas cell by cell from the sharpest source.
    Sharpen(SharpenArgs),
    /// List the frames (and local coordinates) behind a canvas pixel.
    Query(QueryArgs),
    /// Generate synthetic scenes and sweeps with ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Cut an image and guttae mask into shifted training tiles.
    Tiles(TilesArgs),
    /// Score a layout against the truth offsets of a synthetic manifest.
    Eval(EvalArgs),
    /// Run select, stitch, composite and sharpen in one go.
    Run(RunArgs),
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Render a scene image and its guttae mask.
    Scene(SceneArgs),
    /// Render a scene and crop a frame sequence along a sweep path.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// Directory of frames named with a trailing number (frame_0001.png, ...).
    frames_dir: PathBuf,
    #[arg(short, long, default_value = "manifest.json")]
    output: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SelectOpts {
    /// Frames per selection window.
    #[arg(long, default_value_t = DEFAULT_GROUP_SIZE)]
    group_size: usize,
    /// Edge of the square focus regions.
    #[arg(long, default_value_t = DEFAULT_REGION_SIZE)]
    region_size: usize,
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[arg(short, long)]
    manifest: PathBuf,
    /// Manifest of the selected frames.
    #[arg(short, long, default_value = "selected.json")]
    output: PathBuf,
    #[command(flatten)]
    opts: SelectOpts,
}

#[derive(Args, Debug, Clone, Serialize)]
struct StitchOpts {
    #[arg(long, default_value_t = Algorithm::default())]
    algorithm: Algorithm,
    /// Ratio-test threshold for descriptor matches.
    #[arg(long, default_value_t = RegistrationConfig::default().ratio)]
    ratio: f32,
    #[arg(long, default_value_t = RegistrationConfig::default().min_inliers)]
    min_inliers: usize,
    /// Pixel tolerance for a match to agree with the offset.
    #[arg(long, default_value_t = RegistrationConfig::default().inlier_tol)]
    inlier_tol: u32,
    /// Consecutive failures before the scan changes course.
    #[arg(long, default_value_t = RegistrationConfig::default().max_failures)]
    max_failures: usize,
    /// Placed frames matched against in reference mode.
    #[arg(long, default_value_t = RegistrationConfig::default().recent_frames)]
    recent_frames: usize,
}

impl StitchOpts {
    fn config(&self) -> RegistrationConfig {
        RegistrationConfig {
            algorithm: self.algorithm,
            ratio: self.ratio,
            min_inliers: self.min_inliers,
            inlier_tol: self.inlier_tol,
            max_failures: self.max_failures,
            recent_frames: self.recent_frames,
            ..RegistrationConfig::default()
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct StitchArgs {
    /// Manifest of the frames to register, usually the output of `select`.
    #[arg(short, long)]
    manifest: PathBuf,
    #[arg(short, long, default_value = "layout.json")]
    output: PathBuf,
    #[command(flatten)]
    opts: StitchOpts,
}

#[derive(Args, Debug, Serialize)]
struct CompositeArgs {
    #[arg(short, long)]
    manifest: PathBuf,
    #[arg(short, long)]
    layout: PathBuf,
    #[arg(long, default_value_t = CompositeMode::default())]
    mode: CompositeMode,
    /// Receives panorama.png, coverage.png and provenance.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SharpenArgs {
    #[arg(short, long)]
    manifest: PathBuf,
    #[arg(short, long)]
    layout: PathBuf,
    /// Provenance written by `composite`; rebuilt from the layout if omitted.
    #[arg(long)]
    provenance: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CELL)]
    cell: usize,
    /// Receives sharpened.png, sharpened_coverage.png and choices.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct QueryArgs {
    #[arg(short, long)]
    provenance: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    x: i64,
    #[arg(long, allow_negative_numbers = true)]
    y: i64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SceneOpts {
    #[arg(long, default_value_t = SceneSpec::default().canvas_w)]
    canvas_w: usize,
    #[arg(long, default_value_t = SceneSpec::default().canvas_h)]
    canvas_h: usize,
    #[arg(long, default_value_t = SceneSpec::default().cell_pitch)]
    cell_pitch: f64,
    #[arg(long, default_value_t = SceneSpec::default().pitch_jitter)]
    pitch_jitter: f64,
    #[arg(long, default_value_t = SceneSpec::default().membrane_width)]
    membrane_width: f64,
    #[arg(long, default_value_t = SceneSpec::default().membrane_intensity)]
    membrane_intensity: u8,
    #[arg(long, default_value_t = SceneSpec::default().cell_base_intensity)]
    cell_base_intensity: u8,
    #[arg(long, default_value_t = SceneSpec::default().cell_intensity_jitter)]
    cell_intensity_jitter: u8,
    #[arg(long, default_value_t = SceneSpec::default().guttae_count)]
    guttae_count: usize,
    #[arg(long, default_value_t = SceneSpec::default().guttae_radius_range.0)]
    guttae_radius_min: f64,
    #[arg(long, default_value_t = SceneSpec::default().guttae_radius_range.1)]
    guttae_radius_max: f64,
    #[arg(long, default_value_t = SceneSpec::default().cornea_radius)]
    cornea_radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SceneOpts {
    fn spec(&self) -> SceneSpec {
        SceneSpec {
            canvas_w: self.canvas_w,
            canvas_h: self.canvas_h,
            cell_pitch: self.cell_pitch,
            pitch_jitter: self.pitch_jitter,
            membrane_width: self.membrane_width,
            membrane_intensity: self.membrane_intensity,
            cell_base_intensity: self.cell_base_intensity,
            cell_intensity_jitter: self.cell_intensity_jitter,
            guttae_count: self.guttae_count,
            guttae_radius_range: (self.guttae_radius_min, self.guttae_radius_max),
            cornea_radius: self.cornea_radius,
            rng_seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SceneArgs {
    #[command(flatten)]
    scene: SceneOpts,
    /// Receives scene.png, mask.png and scene.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum PathKind {
    Cornea,
    Spiral,
    Waypoints,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneOpts,
    #[arg(long, default_value_t = SweepSpec::default().crop_w)]
    crop_w: usize,
    #[arg(long, default_value_t = SweepSpec::default().crop_h)]
    crop_h: usize,
    /// Path distance between consecutive frames.
    #[arg(long, default_value_t = SweepSpec::default().step)]
    step: f64,
    #[arg(long, value_enum, default_value_t = PathKind::Cornea)]
    path: PathKind,
    /// Spiral turns.
    #[arg(long, default_value_t = 2.0)]
    turns: f64,
    /// Crop-origin waypoints as "x,y;x,y;...".
    #[arg(long)]
    waypoints: Option<String>,
    #[arg(long)]
    max_frames: Option<usize>,
    /// Fraction of frames to blur (ignored with --blur-frames).
    #[arg(long, default_value_t = Degradations::default().blur_fraction)]
    blur_fraction: f64,
    /// Frame positions to blur, comma separated.
    #[arg(long, value_delimiter = ',')]
    blur_frames: Option<Vec<usize>>,
    #[arg(long, default_value_t = Degradations::default().blur_sigma.0)]
    blur_sigma_min: f64,
    #[arg(long, default_value_t = Degradations::default().blur_sigma.1)]
    blur_sigma_max: f64,
    #[arg(long, default_value_t = Degradations::default().brightness_offset.0, allow_negative_numbers = true)]
    brightness_min: i32,
    #[arg(long, default_value_t = Degradations::default().brightness_offset.1, allow_negative_numbers = true)]
    brightness_max: i32,
    #[arg(long, default_value_t = Degradations::default().noise_sigma)]
    noise_sigma: f64,
    #[arg(long, default_value_t = Degradations::default().dropout_probability)]
    dropout_probability: f64,
    /// Receives frames/, manifest.json, scene.png and mask.png.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TilesArgs {
    #[arg(long)]
    image: PathBuf,
    /// Binary guttae mask (0 / 255) of the same size.
    #[arg(long)]
    mask: PathBuf,
    /// Source name used in the tile table; defaults to the image file stem.
    #[arg(long)]
    source_id: Option<String>,
    #[arg(long, default_value_t = TileConfig::default().cell)]
    cell: usize,
    #[arg(long, default_value_t = TileConfig::default().shift)]
    shift: usize,
    #[arg(long, default_value_t = TileConfig::default().shifts_per_axis)]
    shifts_per_axis: usize,
    #[arg(long, default_value_t = TileConfig::default().min_guttae_pixels)]
    min_guttae_pixels: usize,
    /// Receives images/, masks/ and tiles.csv.
    #[arg(long, default_value = "tiles")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Manifest carrying truth offsets, as written by `synth sweep`.
    #[arg(short, long)]
    manifest: PathBuf,
    #[arg(short, long)]
    layout: PathBuf,
    /// Also write the report here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RunArgs {
    #[arg(short, long)]
    manifest: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    select: SelectOpts,
    #[command(flatten)]
    stitch: StitchOpts,
    #[arg(long, default_value_t = CompositeMode::default())]
    mode: CompositeMode,
    #[arg(long, default_value_t = DEFAULT_CELL)]
    cell: usize,
}

/// Bad option values detected before any data is touched.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else if err
        .downcast_ref::<endomosaic::Error>()
        .is_some_and(endomosaic::Error::is_registration_failure)
    {
        EXIT_REGISTRATION
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
