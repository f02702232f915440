//! The `mufen` command line: argument parsing, file layout and JSON output.
//!
//! Results go to stdout as one JSON document; progress goes to stderr.
//! Failures print `{"error": tag, "message": text}` and exit with 2 for
//! usage errors, 3 for data errors and 4 for numeric failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::{prior_sample, PriorSample};
use crate::diffusion::{train_toy_with, write_loss_csv, TrainConfig};
use crate::error::{Error, ErrorKind, Result};
use crate::geometry::{load_obj, save_obj, CameraPose, Handedness, ViewId};
use crate::metrics::{frechet_distance, kid, paired_ttest, FeatureSet, GestureScores, KidOptions};
use crate::render::io::{write_pgm16, write_ppm};
use crate::render::{normalize_depth, rasterize_view, render_view};
use crate::tensor::io as muft;
use crate::viewselect::{emit_pair_renders, score_pairs, select_pair_with, BBox, PriorBundle, SelectionMode, ViewPair};

#[derive(Debug, Parser)]
#[command(
    name = "mufen",
    version,
    about = "Multi-view hand priors, fusion training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Hand {
    Left,
    Right,
}

impl From<Hand> for Handedness {
    fn from(h: Hand) -> Self {
        match h {
            Hand::Left => Handedness::Left,
            Hand::Right => Handedness::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    PairSum,
    SingleViewMax,
}

impl From<Mode> for SelectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PairSum => SelectionMode::PairSum,
            Mode::SingleViewMax => SelectionMode::SingleViewMax,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render one view of a mesh: shaded PPM, 16-bit depth PGM and metadata.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// front, rear, left, right, top or bottom
        #[arg(long)]
        view: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "right")]
        handedness: Hand,
    },
    /// Render all six views, score the complementary pairs and emit the
    /// selected pair's prior bundle.
    SelectViews {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "right")]
        handedness: Hand,
        #[arg(long, value_enum, default_value = "pair-sum")]
        mode: Mode,
    },
    /// Generate synthetic gesture hands with prior bundles and a JSONL manifest.
    SynthDataset {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
    },
    /// Train the fusion network and toy denoiser; writes loss.csv and a checkpoint.
    TrainToy {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Frechet and kernel distances between two rank-2 MUFT feature files.
    EvalStats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        subsets: usize,
        /// Defaults to min(1000, rows of either set).
        #[arg(long)]
        subset_size: Option<usize>,
    },
    /// Paired t-test on `{"a": [...], "b": [...]}` per-gesture scores.
    Ttest {
        #[arg(long)]
        scores: PathBuf,
    },
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            print_json(&json!({"error": "usage", "message": e.kind().to_string()}));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(v) => {
            print_json(&v);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            print_json(&json!({"error": e.tag(), "message": e.to_string()}));
            exit_code(e.kind())
        }
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn dispatch(cmd: Command) -> Result<Value> {
    match cmd {
        Command::Render {
            mesh,
            camera,
            view,
            out,
            resolution,
            handedness,
        } => render(&mesh, &camera, &view, &out, resolution, handedness.into()),
        Command::SelectViews {
            mesh,
            camera,
            out,
            resolution,
            handedness,
            mode,
        } => select_views(&mesh, &camera, &out, resolution, handedness.into(), mode.into()),
        Command::SynthDataset {
            n,
            seed,
            out,
            resolution,
        } => synth_dataset(n, seed, &out, resolution),
        Command::TrainToy { config, out, seed } => train_toy_cmd(&config, out, seed),
        Command::EvalStats {
            a,
            b,
            seed,
            subsets,
            subset_size,
        } => eval_stats(&a, &b, seed, subsets, subset_size),
        Command::Ttest { scores } => ttest(&scores),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn render(
    mesh: &Path,
    camera: &Path,
    view: &str,
    out: &Path,
    resolution: usize,
    handedness: Handedness,
) -> Result<Value> {
    let view: ViewId = view.parse()?;
    let res = (resolution, resolution);
    let camera = CameraPose::load_json(camera)?;
    let mesh = load_obj(mesh, handedness)?;
    let shaded = render_view(&mesh, &camera, view, res)?;
    let geom = rasterize_view(&mesh, &camera, view, res)?;
    let depth = normalize_depth(&geom);

    create_dir(out)?;
    let name = view.name();
    let rgb_path = out.join(format!("{name}.ppm"));
    let depth_path = out.join(format!("{name}_depth.pgm"));
    let meta_path = out.join(format!("{name}.json"));
    write_ppm(&rgb_path, res.0, res.1, &shaded.rgb)?;
    write_pgm16(&depth_path, depth.width, depth.height, &depth.data)?;
    let meta = json!({
        "view": name,
        "width": res.0,
        "height": res.1,
        "coverage": geom.covered_fraction(),
        "bbox": BBox::from_coverage(&geom).map(BBox::to_array),
        "handedness": handedness,
        "camera": serde_json::from_str::<Value>(&camera.to_json_string())?,
    });
    write_text(&meta_path, &serde_json::to_string_pretty(&meta)?)?;
    Ok(json!({
        "view": name,
        "files": [display(&rgb_path), display(&depth_path), display(&meta_path)],
        "coverage": meta["coverage"],
    }))
}

#[derive(Serialize)]
struct ScoreRecord {
    pair: &'static str,
    views: [&'static str; 2],
    areas: [f64; 2],
    score: f64,
}

impl From<&ViewPair> for ScoreRecord {
    fn from(p: &ViewPair) -> Self {
        Self {
            pair: p.pair_id.name(),
            views: [p.views.0.name(), p.views.1.name()],
            areas: [p.areas.0, p.areas.1],
            score: p.score,
        }
    }
}

#[derive(Serialize)]
struct PriorFiles {
    view_a: String,
    view_b: String,
    depth: String,
}

fn write_prior(dir: &Path, prior: &PriorBundle) -> Result<PriorFiles> {
    create_dir(dir)?;
    let (a, b) = prior.pair.views;
    let files = PriorFiles {
        view_a: format!("{}.ppm", a.name()),
        view_b: format!("{}.ppm", b.name()),
        depth: "depth_front.pgm".into(),
    };
    let d = &prior.depth_front;
    write_ppm(
        &dir.join(&files.view_a),
        prior.rgb_a.width,
        prior.rgb_a.height,
        &prior.rgb_a.rgb,
    )?;
    write_ppm(
        &dir.join(&files.view_b),
        prior.rgb_b.width,
        prior.rgb_b.height,
        &prior.rgb_b.rgb,
    )?;
    write_pgm16(&dir.join(&files.depth), d.width, d.height, &d.data)?;
    Ok(files)
}

fn jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn select_views(
    mesh: &Path,
    camera: &Path,
    out: &Path,
    resolution: usize,
    handedness: Handedness,
    mode: SelectionMode,
) -> Result<Value> {
    let res = (resolution, resolution);
    let camera = CameraPose::load_json(camera)?;
    let mesh = load_obj(mesh, handedness)?;

    let views_dir = out.join("views");
    create_dir(&views_dir)?;
    let renders = ViewId::ALL
        .par_iter()
        .map(|&v| render_view(&mesh, &camera, v, res).map(|fb| (v, fb)))
        .collect::<Result<Vec<_>>>()?;
    for (v, fb) in &renders {
        write_ppm(
            &views_dir.join(format!("{}.ppm", v.name())),
            fb.width,
            fb.height,
            &fb.rgb,
        )?;
    }

    let pairs = score_pairs(&mesh, &camera, res)?;
    let scores: Vec<ScoreRecord> = pairs.iter().map(ScoreRecord::from).collect();
    write_text(&out.join("scores.jsonl"), &jsonl(&scores)?)?;

    let pair = select_pair_with(&pairs, mode)?;
    let prior = emit_pair_renders(&mesh, &camera, &pair, res)?;
    let files = write_prior(&out.join("prior"), &prior)?;
    let manifest = json!({
        "pair": pair.pair_id.name(),
        "scores": scores,
        "bbox": prior.bbox.to_array(),
        "files": files,
    });
    write_text(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// One line of the dataset manifest.
#[derive(Serialize)]
struct SampleRecord {
    id: String,
    index: u64,
    label: &'static str,
    handedness: Handedness,
    curls: [f64; 5],
    pair: &'static str,
    scores: Vec<ScoreRecord>,
    bbox: [f64; 4],
    mesh: String,
    files: PriorFiles,
}

fn synth_dataset(n: usize, seed: u64, out: &Path, resolution: usize) -> Result<Value> {
    if n == 0 {
        return Err(Error::InvalidArgument("--n must be positive".into()));
    }
    let res = (resolution, resolution);
    let camera = CameraPose::default_weak();
    create_dir(out)?;
    let records = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s: PriorSample = prior_sample(seed, i, &camera, res, SelectionMode::PairSum)?;
            let id = format!("hand_{i:05}");
            let dir = out.join(&id);
            let files = write_prior(&dir, &s.prior)?;
            save_obj(&s.mesh, &dir.join("mesh.obj"))?;
            Ok(SampleRecord {
                files: PriorFiles {
                    view_a: format!("{id}/{}", files.view_a),
                    view_b: format!("{id}/{}", files.view_b),
                    depth: format!("{id}/{}", files.depth),
                },
                mesh: format!("{id}/mesh.obj"),
                id,
                index: i,
                label: s.spec.label,
                handedness: s.spec.handedness,
                curls: s.spec.curls,
                pair: s.prior.pair.pair_id.name(),
                scores: s.pairs.iter().map(ScoreRecord::from).collect(),
                bbox: s.prior.bbox.to_array(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = out.join("manifest.jsonl");
    write_text(&manifest, &jsonl(&records)?)?;
    Ok(json!({"samples": n, "seed": seed, "manifest": display(&manifest)}))
}

fn train_toy_cmd(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Value> {
    let mut cfg = TrainConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("train_toy_out"));
    create_dir(&out)?;
    eprintln!("generating {} samples at {}px", cfg.samples, cfg.image_size);
    let samples = crate::dataset::train_samples(cfg.seed, cfg.samples, cfg.image_size)?;
    let every = (cfg.steps / 10).max(1);
    let outcome = train_toy_with(&cfg, &samples, |r| {
        if r.step % every == 0 || r.step + 1 == cfg.steps {
            eprintln!("step {:>5}  total {:.6}", r.step, r.total);
        }
    })?;
    let csv = out.join("loss.csv");
    write_loss_csv(&csv, &outcome.curve)?;
    let ckpt = out.join("checkpoint");
    outcome.store.save(&ckpt)?;
    let summary = json!({
        "steps": cfg.steps,
        "samples": cfg.samples,
        "seed": cfg.seed,
        "parameters": outcome.store.num_scalars(),
        "initial_eval": outcome.initial_eval,
        "final_eval": outcome.final_eval,
        "eval_ratio": outcome.eval_ratio(),
        "loss_csv": display(&csv),
        "checkpoint": display(&ckpt),
    });
    write_text(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn eval_stats(a: &Path, b: &Path, seed: u64, subsets: usize, subset_size: Option<usize>) -> Result<Value> {
    let fa = FeatureSet::from_tensor(&muft::load(a)?)?;
    let fb = FeatureSet::from_tensor(&muft::load(b)?)?;
    let fid = frechet_distance(&fa, &fb)?;
    let mut opts = KidOptions::for_sizes(fa.n(), fb.n(), seed);
    opts.subsets = subsets;
    if let Some(m) = subset_size {
        opts.subset_size = m;
    }
    let (kid_mean, kid_std) = kid(&fa, &fb, opts)?;
    Ok(json!({
        "fid": fid,
        "kid_mean": kid_mean,
        "kid_std": kid_std,
        "n_a": fa.n(),
        "n_b": fb.n(),
        "dim": fa.d(),
        "kid_subsets": opts.subsets,
        "kid_subset_size": opts.subset_size,
    }))
}

fn ttest(scores: &Path) -> Result<Value> {
    let text = fs::read_to_string(scores).map_err(|e| Error::io(scores, e))?;
    let s: GestureScores = serde_json::from_str(&text)?;
    Ok(serde_json::to_value(paired_ttest(&s)?)?)
}
