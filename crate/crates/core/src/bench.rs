//! Synthetic scenes and runtime scaling measurements.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{Dims, ObjectBox, ObjectClass, Vec3};
use crate::visibility::{visibility_all_with, Backend, Execution, Scene, SceneError};

pub const BENCH_HEADER: &str = "# boxvis-bench v1 backend,n_boxes,median_ns,repetitions";
pub const MIN_REPETITIONS: usize = 5;
/// Shortest wall time one timed repetition may cover.
pub const MIN_SAMPLE_TIME: Duration = Duration::from_millis(20);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scene generation gave up after {rejections} rejections with {placed} of {requested} boxes placed")]
    GenerationExhausted {
        rejections: usize,
        placed: usize,
        requested: usize,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Inclusive ranges, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRange {
    pub length: (f64, f64),
    pub width: (f64, f64),
    pub height: (f64, f64),
}

impl SizeRange {
    const fn new(length: (f64, f64), width: (f64, f64), height: (f64, f64)) -> Self {
        Self {
            length,
            width,
            height,
        }
    }

    fn is_valid(&self) -> bool {
        [self.length, self.width, self.height]
            .iter()
            .all(|&(lo, hi)| lo > 0.0 && hi >= lo && hi.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenConfig {
    pub n_boxes: usize,
    /// Centers are drawn from `[-e, e]²` in the ground plane.
    pub area_half_extent: f64,
    /// Indexed like [`ObjectClass::ALL`].
    pub size_ranges: [SizeRange; 4],
    pub min_center_spacing: f64,
    /// Minimum distance from the origin to any box surface.
    pub origin_clearance: f64,
    /// Height of the ground plane; boxes rest on it.
    pub ground_z: f64,
    pub seed: u64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            n_boxes: 20,
            area_half_extent: 40.0,
            size_ranges: [
                SizeRange::new((3.5, 5.0), (1.5, 2.0), (1.4, 1.9)),
                SizeRange::new((0.4, 1.0), (0.4, 0.9), (1.5, 1.95)),
                SizeRange::new((1.4, 2.0), (0.5, 0.8), (1.5, 1.9)),
                SizeRange::new((0.5, 8.0), (0.5, 2.6), (0.5, 3.5)),
            ],
            min_center_spacing: 1.0,
            origin_clearance: 1.5,
            ground_z: -1.73,
            seed: 0,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.to_string()));
        if !(self.area_half_extent > 0.0 && self.area_half_extent.is_finite()) {
            return bad("area half extent must be positive");
        }
        if !(self.min_center_spacing >= 0.0) {
            return bad("center spacing must be non-negative");
        }
        if !(self.origin_clearance >= 0.0) {
            return bad("origin clearance must be non-negative");
        }
        if !self.size_ranges.iter().all(SizeRange::is_valid) {
            return bad("size ranges must be positive with lo <= hi");
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Random scene, deterministic for a given config. Candidates too close to
/// an existing center or to the origin are rejected and redrawn.
pub fn generate_scene(cfg: &SceneGenConfig) -> Result<Scene, BenchError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut boxes: Vec<ObjectBox> = Vec::with_capacity(cfg.n_boxes);
    let max_rejections = 1000 * cfg.n_boxes;
    let mut rejections = 0;
    let e = cfg.area_half_extent;

    while boxes.len() < cfg.n_boxes {
        let class_idx = rng.gen_range(0..ObjectClass::ALL.len());
        let sizes = cfg.size_ranges[class_idx];
        let dims = Dims::new(
            uniform(&mut rng, sizes.length),
            uniform(&mut rng, sizes.width),
            uniform(&mut rng, sizes.height),
        );
        let yaw = rng.gen_range(-PI..PI);
        let x = rng.gen_range(-e..=e);
        let y = rng.gen_range(-e..=e);
        let center = Vec3::new(x, y, cfg.ground_z + 0.5 * dims.height);
        let candidate = ObjectBox::new(
            boxes.len() as u64,
            ObjectClass::ALL[class_idx],
            center,
            dims,
            yaw,
        )
        .expect("generated dimensions and yaw are in range");

        let crowded = boxes
            .iter()
            .any(|b| (b.center - center).norm() < cfg.min_center_spacing);
        if crowded || candidate.origin_clearance() < cfg.origin_clearance {
            rejections += 1;
            if rejections >= max_rejections {
                return Err(BenchError::GenerationExhausted {
                    rejections,
                    placed: boxes.len(),
                    requested: cfg.n_boxes,
                });
            }
            continue;
        }
        boxes.push(candidate);
    }
    Ok(Scene::new(boxes, None)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchBackend {
    pub backend: Backend,
    pub execution: Execution,
}

impl BenchBackend {
    pub fn sequential(backend: Backend) -> Self {
        Self {
            backend,
            execution: Execution::Sequential,
        }
    }

    pub fn label(&self) -> String {
        match self.execution {
            Execution::Sequential => self.backend.name().to_string(),
            Execution::Parallel => format!("{}-par", self.backend.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRecord {
    pub backend: String,
    pub n_boxes: usize,
    pub median_ns: u128,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub repetitions: usize,
    /// When set to `n0`, the area half extent is scaled by `sqrt(n / n0)` so
    /// box density stays constant as `n` grows.
    pub constant_density_from: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repetitions: MIN_REPETITIONS,
            constant_density_from: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Fitted log-log slope per backend label, in input order.
    pub slopes: Vec<(String, f64)>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn median(mut v: Vec<u128>) -> u128 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2
    }
}

/// Times `visibility_all` for every backend and scene size. Scene generation
/// is outside the timed region. Each (backend, n) pair gets one untimed
/// warm-up run; each repetition repeats the computation until at least
/// [`MIN_SAMPLE_TIME`] has passed and records the mean per run. The slope
/// for each backend is fitted over all of `n_values`.
pub fn run_scaling_bench(
    backends: &[BenchBackend],
    n_values: &[usize],
    template: &SceneGenConfig,
    opts: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if opts.repetitions < MIN_REPETITIONS {
        return Err(BenchError::InvalidConfig(format!(
            "at least {MIN_REPETITIONS} repetitions required, got {}",
            opts.repetitions
        )));
    }
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::InvalidConfig(
            "box counts must be non-empty and strictly ascending".into(),
        ));
    }
    if backends.is_empty() {
        return Err(BenchError::InvalidConfig("no backends selected".into()));
    }
    for b in backends {
        b.backend.validate()?;
    }

    let mut scenes = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let mut cfg = template.clone();
        cfg.n_boxes = n;
        if let Some(n0) = opts.constant_density_from {
            cfg.area_half_extent = template.area_half_extent * (n as f64 / n0.max(1) as f64).sqrt();
        }
        scenes.push(generate_scene(&cfg)?);
    }

    let mut records = Vec::new();
    let mut slopes = Vec::new();
    for b in backends {
        let label = b.label();
        let mut points = Vec::new();
        for (scene, &n) in scenes.iter().zip(n_values) {
            std::hint::black_box(visibility_all_with(scene, b.backend, b.execution)?);
            let mut times = Vec::with_capacity(opts.repetitions);
            for _ in 0..opts.repetitions {
                let start = Instant::now();
                let mut runs = 0u32;
                while runs == 0 || start.elapsed() < MIN_SAMPLE_TIME {
                    std::hint::black_box(visibility_all_with(scene, b.backend, b.execution)?);
                    runs += 1;
                }
                times.push((start.elapsed().as_nanos() / u128::from(runs)).max(1));
            }
            let median_ns = median(times);
            points.push((n as f64, median_ns as f64));
            records.push(BenchRecord {
                backend: label.clone(),
                n_boxes: n,
                median_ns,
                repetitions: opts.repetitions,
            });
        }
        let slope = if points.len() >= 2 {
            log_log_slope(&points)
        } else {
            f64::NAN
        };
        slopes.push((label, slope));
    }
    Ok(BenchReport { records, slopes })
}

pub fn write_bench_csv<W: Write>(mut w: W, records: &[BenchRecord]) -> io::Result<()> {
    writeln!(w, "{BENCH_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            r.backend, r.n_boxes, r.median_ns, r.repetitions
        )?;
    }
    Ok(())
}
