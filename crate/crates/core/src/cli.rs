//! The `boxvis` command line.
//!
//! Stdout carries data (visibility rows, summary rows, benchmark CSV);
//! stderr carries diagnostics, the human-readable summary table and fitted
//! slopes. Exit codes: 0 success, 1 input error, 2 I/O failure, 3 too few
//! ray hits for a Monte-Carlo estimate.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::bench::{
    run_scaling_bench, write_bench_csv, BenchBackend, BenchOptions, SceneGenConfig,
};
use crate::ingest::{
    parse_kitti_labels, parse_prediction_visibilities, rows_from_records, write_visibility_rows,
    Diagnostic, FrameConfig, FrameConvention, VisibilityRow,
};
use crate::metrics::{
    expected_random_ae, format_summary_table, match_true_positives, random_baseline, summarize,
    write_summary_rows, EvalPair, IouKind, MatchConfig,
};
use crate::oracle::{sample_box, OracleConfig, OracleError, MIN_HITS};
use crate::visibility::{visibility_all, visibility_one, Backend, Execution, Scene};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_STATISTICS: i32 = 3;

const DEFAULT_MC_SAMPLES: u64 = 1_000_000;

#[derive(Debug)]
enum CliError {
    Input(String),
    Io(String),
    Statistics(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Io(_) => EXIT_IO,
            CliError::Statistics(_) => EXIT_STATISTICS,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Io(m) | CliError::Statistics(m) => m,
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Naive,
    Pruned,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FrameArg {
    KittiCamera,
    Ego,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IouArg {
    Bev,
    #[value(name = "3d")]
    Full3d,
}

#[derive(Debug, Parser)]
#[command(
    name = "boxvis",
    version,
    about = "Spherical-projection visibility of 3D boxes"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Seed for Monte-Carlo sampling, the random baseline and scene generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Pruned)]
    backend: BackendArg,
    /// Rays per box for the `mc` backend and the `oracle` command.
    #[arg(long, global = true)]
    mc_samples: Option<u64>,
    /// Coordinate convention of label files.
    #[arg(long, global = true, value_enum, default_value_t = FrameArg::KittiCamera)]
    frame: FrameArg,
    /// Write data here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute visibilities for a KITTI label file or a directory of them.
    Compute { input: PathBuf },
    /// Monte-Carlo estimate for one box of a label file.
    Oracle {
        input: PathBuf,
        /// Box id (0-based line index in the label file).
        #[arg(long)]
        box_id: Option<u64>,
    },
    /// Score predicted visibilities against ground-truth labels.
    Eval {
        /// Visibility rows (or KITTI predictions with --random-baseline).
        #[arg(long)]
        pred: PathBuf,
        /// KITTI label file or directory.
        #[arg(long)]
        gt: PathBuf,
        /// Replace predicted visibilities with seeded uniform draws.
        #[arg(long)]
        random_baseline: bool,
        #[arg(long, default_value_t = 0.25)]
        iou_threshold: f64,
        #[arg(long, value_enum, default_value_t = IouArg::Bev)]
        iou_kind: IouArg,
    },
    /// Runtime scaling benchmark on synthetic scenes.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 200, 400, 800, 1600])]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = [BackendArg::Naive, BackendArg::Pruned])]
        backends: Vec<BackendArg>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// CSV destination (defaults to --output, then stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Half extent of the placement square for the first box count.
        #[arg(long, default_value_t = 40.0)]
        half_extent: f64,
        /// Keep the placement square fixed instead of growing it with sqrt(n).
        #[arg(long)]
        fixed_extent: bool,
        /// Time the multi-threaded engine path (labels get a `-par` suffix).
        #[arg(long)]
        parallel: bool,
    },
}

impl GlobalArgs {
    fn frame_config(&self) -> FrameConfig {
        FrameConfig::new(match self.frame {
            FrameArg::KittiCamera => FrameConvention::KittiCamera,
            FrameArg::Ego => FrameConvention::EgoDirect,
        })
    }

    fn mc_samples(&self) -> u64 {
        self.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES)
    }

    fn backend_for(&self, arg: BackendArg) -> Backend {
        match arg {
            BackendArg::Naive => Backend::NaiveQuadratic,
            BackendArg::Pruned => Backend::CapPruned,
            BackendArg::Mc => Backend::MonteCarlo {
                sample_count: self.mc_samples(),
                seed: self.seed,
            },
        }
    }

    fn backend(&self) -> Backend {
        self.backend_for(self.backend)
    }
}

fn validate(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if g.jobs == Some(0) {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    if g.mc_samples == Some(0) {
        return Err(CliError::Input("--mc-samples must be at least 1".into()));
    }
    let uses_mc = match &cli.command {
        Command::Oracle { .. } => true,
        Command::Bench { backends, .. } => backends.contains(&BackendArg::Mc),
        _ => g.backend == BackendArg::Mc,
    };
    if g.mc_samples.is_some() && !uses_mc {
        return Err(CliError::Input(
            "--mc-samples only applies with --backend mc (or the oracle command)".into(),
        ));
    }
    match &cli.command {
        Command::Oracle { box_id: None, .. } => Err(CliError::Input(
            "missing --box-id\n\nUsage: boxvis oracle <INPUT> --box-id <BOX_ID>".into(),
        )),
        Command::Eval { iou_threshold, .. } if !(*iou_threshold > 0.0 && *iou_threshold <= 1.0) => {
            Err(CliError::Input(format!(
                "--iou-threshold {iou_threshold} outside (0, 1]"
            )))
        }
        Command::Bench { reps, n_list, .. } => {
            if *reps < crate::bench::MIN_REPETITIONS {
                return Err(CliError::Input(format!(
                    "--reps must be at least {} (got {reps})",
                    crate::bench::MIN_REPETITIONS
                )));
            }
            if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Input(
                    "--n-list must be strictly ascending".into(),
                ));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Runs the command line with explicit argument list and output streams.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    if let Err(e) = validate(&cli) {
        let _ = writeln!(stderr, "error: {}", e.message());
        return e.code();
    }

    let result = match cli.global.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, stdout, stderr)),
            Err(e) => Err(CliError::Io(format!("cannot start worker pool: {e}"))),
        },
        None => dispatch(&cli, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(
    cli: &Cli,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Compute { input } => cmd_compute(g, input, stdout, stderr),
        Command::Oracle { input, box_id } => {
            cmd_oracle(g, input, box_id.expect("validated"), stdout, stderr)
        }
        Command::Eval {
            pred,
            gt,
            random_baseline,
            iou_threshold,
            iou_kind,
        } => {
            let kind = match iou_kind {
                IouArg::Bev => IouKind::Bev,
                IouArg::Full3d => IouKind::Full3D,
            };
            let cfg = MatchConfig::new(*iou_threshold, kind).map_err(CliError::Input)?;
            cmd_eval(g, pred, gt, *random_baseline, &cfg, stdout, stderr)
        }
        Command::Bench {
            n_list,
            backends,
            reps,
            csv,
            half_extent,
            fixed_extent,
            parallel,
        } => {
            let execution = if *parallel {
                Execution::Parallel
            } else {
                Execution::Sequential
            };
            let backends: Vec<BenchBackend> = backends
                .iter()
                .map(|&b| BenchBackend {
                    backend: g.backend_for(b),
                    execution,
                })
                .collect();
            let template = SceneGenConfig {
                area_half_extent: *half_extent,
                seed: g.seed,
                ..Default::default()
            };
            let opts = BenchOptions {
                repetitions: *reps,
                constant_density_from: (!fixed_extent).then(|| n_list[0]),
            };
            cmd_bench(
                g,
                &backends,
                n_list,
                &template,
                &opts,
                csv.as_deref(),
                stdout,
                stderr,
            )
        }
    }
}

/// Opens the data sink: `path` if given, else stdout.
fn with_output<F>(
    path: Option<&Path>,
    stdout: &mut (dyn Write + Send),
    f: F,
) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| io_err(p, e))?;
            let mut w = io::BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(p, e))
        }
        None => f(stdout).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

/// Files to read: the path itself, or the `.txt` files of a directory in
/// name order.
fn input_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let meta = fs::metadata(path).map_err(|e| io_err(path, e))?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| io_err(path, e))? {
        let p = entry.map_err(|e| io_err(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn frame_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

struct LoadedFrame {
    path: PathBuf,
    scene: Scene,
    diagnostics: Vec<Diagnostic>,
}

fn load_kitti(path: &Path, cfg: FrameConfig) -> Result<LoadedFrame, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let parsed = parse_kitti_labels(&bytes, cfg);
    let mut scene = parsed.scene;
    scene.frame_id = Some(frame_id_of(path));
    Ok(LoadedFrame {
        path: path.to_path_buf(),
        scene,
        diagnostics: parsed.diagnostics,
    })
}

/// Prints diagnostics; returns true if any were errors.
fn report_diagnostics(frame: &LoadedFrame, stderr: &mut (dyn Write + Send)) -> bool {
    let mut errors = false;
    for d in &frame.diagnostics {
        let level = match d {
            Diagnostic::Error(_) => {
                errors = true;
                "error"
            }
            Diagnostic::Skipped { .. } => "note",
        };
        let _ = writeln!(stderr, "{level}: {}: {d}", frame.path.display());
    }
    errors
}

fn load_all_kitti(path: &Path, cfg: FrameConfig) -> Result<Vec<LoadedFrame>, CliError> {
    let files = input_files(path)?;
    let mut frames = files
        .par_iter()
        .map(|p| load_kitti(p, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    frames.sort_by(|a, b| a.scene.frame_id.cmp(&b.scene.frame_id));
    Ok(frames)
}

fn compute_rows(scene: &Scene, backend: Backend) -> Result<Vec<VisibilityRow>, CliError> {
    let records = visibility_all(scene, backend).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(rows_from_records(scene, &records))
}

fn cmd_compute(
    g: &GlobalArgs,
    input: &Path,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    let frames = load_all_kitti(input, g.frame_config())?;
    let mut had_errors = false;
    for f in &frames {
        had_errors |= report_diagnostics(f, stderr);
    }
    let backend = g.backend();
    let per_frame = frames
        .par_iter()
        .map(|f| {
            Scene::new(f.scene.boxes.clone(), f.scene.frame_id.clone())
                .map_err(|e| CliError::Input(format!("{}: {e}", f.path.display())))
                .and_then(|s| compute_rows(&s, backend))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<VisibilityRow> = per_frame.into_iter().flatten().collect();
    for r in rows.iter().filter(|r| r.degenerate) {
        let _ = writeln!(
            stderr,
            "warning: frame {} box {}: origin inside box, visibility undefined",
            r.frame_id, r.object.id
        );
    }
    with_output(g.output.as_deref(), stdout, |w| {
        write_visibility_rows(w, &rows, true)
    })?;
    Ok(if had_errors { EXIT_INPUT } else { EXIT_OK })
}

fn cmd_oracle(
    g: &GlobalArgs,
    input: &Path,
    box_id: u64,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    let frame = load_kitti(input, g.frame_config())?;
    let had_errors = report_diagnostics(&frame, stderr);
    let scene = Scene::new(frame.scene.boxes, frame.scene.frame_id)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let index = scene.index_of(box_id).ok_or_else(|| {
        CliError::Input(format!("no box with id {box_id} in {}", input.display()))
    })?;
    let cfg = OracleConfig {
        sample_count: g.mc_samples(),
        seed: g.seed,
    };
    let sample = sample_box(&scene, index, cfg).map_err(|e| match e {
        OracleError::OriginInsideBox(_) => CliError::Input(e.to_string()),
        other => CliError::Statistics(other.to_string()),
    })?;
    if sample.hits < MIN_HITS {
        return Err(CliError::Statistics(
            OracleError::InsufficientHits {
                box_id,
                hits: sample.hits,
            }
            .to_string(),
        ));
    }
    let vis = sample.visibility();
    let omega = sample.solid_angle();
    with_output(g.output.as_deref(), stdout, |w| {
        writeln!(
            w,
            "# boxvis-oracle v1 quantity,mean,std_error,samples_hit,samples_total"
        )?;
        writeln!(
            w,
            "visibility,{:.6},{:.6},{},{}",
            vis.mean, vis.std_error, vis.samples_hit, vis.samples_total
        )?;
        writeln!(
            w,
            "solid_angle_sr,{:.9},{:.9},{},{}",
            omega.mean, omega.std_error, omega.samples_hit, omega.samples_total
        )
    })?;
    if let Ok(exact) = visibility_one(&scene, index, Backend::CapPruned) {
        if let Some(v) = exact.visibility {
            let _ = writeln!(
                stderr,
                "exact visibility {v:.6}, solid angle {:.9} sr",
                exact.omega
            );
        }
    }
    Ok(if had_errors { EXIT_INPUT } else { EXIT_OK })
}

/// Rounds through the interchange text form so algorithmic values compare
/// with predictions at the precision predictions are stored.
fn quantize_visibility(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}

struct PredFrame {
    scene: Scene,
    /// Indexed like `scene.boxes`.
    visibilities: Vec<Option<f64>>,
}

fn load_predictions(
    path: &Path,
    g: &GlobalArgs,
    need_visibility: bool,
    stderr: &mut (dyn Write + Send),
) -> Result<(BTreeMap<String, PredFrame>, bool), CliError> {
    let mut frames: BTreeMap<String, (Vec<_>, Vec<Option<f64>>)> = BTreeMap::new();
    let mut had_errors = false;
    for file in input_files(path)? {
        let bytes = fs::read(&file).map_err(|e| io_err(&file, e))?;
        let is_interchange = bytes
            .split(|&b| b == b'\n')
            .find(|l| !l.iter().all(u8::is_ascii_whitespace))
            .is_some_and(|l| l.first() == Some(&b'#'));
        if is_interchange {
            let rows = parse_prediction_visibilities(&bytes)
                .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
            for r in rows.into_iter().filter(|r| !r.degenerate) {
                let entry = frames.entry(r.frame_id.clone()).or_default();
                entry.0.push(r.object);
                entry.1.push(r.visibility);
            }
        } else {
            if need_visibility {
                return Err(CliError::Input(format!(
                    "{}: KITTI prediction files carry no visibility; \
                     use visibility rows or --random-baseline",
                    file.display()
                )));
            }
            let frame = load_kitti(&file, g.frame_config())?;
            had_errors |= report_diagnostics(&frame, stderr);
            let n = frame.scene.len();
            let entry = frames.entry(frame_id_of(&file)).or_default();
            entry.0.extend(frame.scene.boxes);
            entry.1.extend(std::iter::repeat_n(None, n));
        }
    }
    let mut out = BTreeMap::new();
    for (id, (boxes, visibilities)) in frames {
        let scene = Scene::new(boxes, Some(id.clone()))
            .map_err(|e| CliError::Input(format!("predictions for frame {id}: {e}")))?;
        out.insert(
            id,
            PredFrame {
                scene,
                visibilities,
            },
        );
    }
    Ok((out, had_errors))
}

fn cmd_eval(
    g: &GlobalArgs,
    pred_path: &Path,
    gt_path: &Path,
    use_random: bool,
    cfg: &MatchConfig,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    let gt_frames = load_all_kitti(gt_path, g.frame_config())?;
    let mut had_errors = false;
    for f in &gt_frames {
        had_errors |= report_diagnostics(f, stderr);
    }
    let (preds, pred_errors) = load_predictions(pred_path, g, !use_random, stderr)?;
    had_errors |= pred_errors;

    let backend = g.backend();
    let per_frame: Vec<Vec<EvalPair>> = gt_frames
        .par_iter()
        .map(|f| -> Result<Vec<EvalPair>, CliError> {
            let id = f.scene.frame_id.clone().unwrap_or_default();
            let Some(pred) = preds.get(&id) else {
                return Ok(Vec::new());
            };
            let gt = Scene::new(f.scene.boxes.clone(), Some(id))
                .map_err(|e| CliError::Input(e.to_string()))?;
            let records =
                visibility_all(&gt, backend).map_err(|e| CliError::Input(e.to_string()))?;
            let matches = match_true_positives(&pred.scene, &gt, cfg);
            Ok(matches
                .into_iter()
                .filter_map(|m| {
                    let v_algo = records[m.gt_index].visibility?;
                    let v_pred = if use_random {
                        0.0
                    } else {
                        pred.visibilities[m.pred_index]?
                    };
                    Some(EvalPair {
                        pred_box_id: m.pred_box_id,
                        gt_box_id: m.gt_box_id,
                        class: m.class,
                        iou: m.iou,
                        v_pred,
                        v_algo: quantize_visibility(v_algo),
                    })
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let mut pairs: Vec<EvalPair> = per_frame.into_iter().flatten().collect();
    if use_random {
        pairs = random_baseline(&pairs, g.seed);
        if let Some(expected) = expected_random_ae(pairs.iter().map(|p| p.v_algo)) {
            let _ = writeln!(
                stderr,
                "expected AE for uniform predictions over these pairs: {expected:.6}"
            );
        }
    }
    let summary = summarize(&pairs);
    let _ = write!(stderr, "{}", format_summary_table(&summary));
    with_output(g.output.as_deref(), stdout, |w| {
        write_summary_rows(w, &summary)
    })?;
    Ok(if had_errors { EXIT_INPUT } else { EXIT_OK })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    g: &GlobalArgs,
    backends: &[BenchBackend],
    n_list: &[usize],
    template: &SceneGenConfig,
    opts: &BenchOptions,
    csv: Option<&Path>,
    stdout: &mut (dyn Write + Send),
    stderr: &mut (dyn Write + Send),
) -> Result<i32, CliError> {
    let report = run_scaling_bench(backends, n_list, template, opts)
        .map_err(|e| CliError::Input(e.to_string()))?;
    with_output(csv.or(g.output.as_deref()), stdout, |w| {
        write_bench_csv(w, &report.records)
    })?;
    for (label, slope) in &report.slopes {
        let _ = writeln!(stderr, "slope {label} {slope:.3}");
    }
    Ok(EXIT_OK)
}
