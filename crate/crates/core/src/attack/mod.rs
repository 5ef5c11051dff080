//! Black-box L-infinity evasion attacks against image detectors.
//!
//! An attack looks for `e` in `[-L, L]^t` such that the detector scores
//! `clamp(x + e, 0, 1)` below the decision threshold, spending at most `B` queries.

mod detector;
mod image;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::ReportHeader;
use crate::modifiers::LossWrapperConfig;
use crate::optim::{run_with, AlgorithmSpec, Objective, RunOptions};
use crate::space::SearchSpace;

pub use detector::{
    decode_response, encode_request, pooled_gray_features, Detector, DetectorSpec, SubprocessDetector, ToyDetector,
    DEFAULT_QUERY_TIMEOUT, FRAME_MAGIC, POOL_GRID,
};
pub use image::Image;

pub const DEFAULT_BUDGET: usize = 10_000;
pub const DEFAULT_LINF: f64 = 0.03;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub const SYNTHETIC_SIZE: usize = 64;
const SMOOTH_COMPONENTS: usize = 24;
const SMOOTH_BAND: (i32, i32) = (1, 3);
const SMOOTH_WEIGHT: f64 = 0.35;
const TEXTURE_COMPONENTS: usize = 48;
const TEXTURE_BAND: (i32, i32) = (12, 31);

/// Deterministic 64x64x3 images: a faint low-frequency Fourier field under a
/// stronger high-frequency texture, min-max rescaled to `[0, 1]`.
pub fn generate_synthetic_fakes(count: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synthetic_fake(&mut rng)).collect()
}

fn synthetic_fake(rng: &mut ChaCha8Rng) -> Image {
    let n = SYNTHETIC_SIZE;
    let mut field = vec![0.0; n * n * 3];
    for (count, band, weight) in
        [(SMOOTH_COMPONENTS, SMOOTH_BAND, SMOOTH_WEIGHT), (TEXTURE_COMPONENTS, TEXTURE_BAND, 1.0)]
    {
        for _ in 0..count {
            add_wave(&mut field, rng, band, weight);
        }
    }
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = field.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect();
    Image::new(n, n, 3, pixels).expect("rescaled field is a valid image")
}

/// Adds one tinted plane wave whose frequency (cycles per image, Chebyshev
/// norm) lies in `band`.
fn add_wave(field: &mut [f64], rng: &mut ChaCha8Rng, band: (i32, i32), weight: f64) {
    let n = SYNTHETIC_SIZE;
    let (kx, ky) = loop {
        let kx = rng.random_range(-band.1..=band.1);
        let ky = rng.random_range(0..=band.1);
        if kx.abs().max(ky) >= band.0 {
            break (f64::from(kx), f64::from(ky));
        }
    };
    let amp = weight * rng.sample::<f64, _>(StandardNormal);
    let phase = rng.random::<f64>() * 2.0 * PI;
    let tint: [f64; 3] = std::array::from_fn(|_| 0.7 + 0.6 * rng.random::<f64>());
    let step = 2.0 * PI / n as f64;
    for y in 0..n {
        for x in 0..n {
            let v = amp * (step * (kx * x as f64 + ky * y as f64) + phase).cos();
            for (p, t) in field[(y * n + x) * 3..(y * n + x + 1) * 3].iter_mut().zip(tint) {
                *p += t * v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub algo: AlgorithmSpec,
    pub budget: usize,
    pub linf: f64,
    pub threshold: f64,
    /// Stop at the first query scoring below the threshold.
    pub early_stop: bool,
    /// Blur width for SM/GSM; one eighth of the image width when absent.
    pub kernel_sigma: Option<f64>,
}

impl AttackConfig {
    pub fn new(algo: &str, budget: usize, linf: f64) -> Result<Self> {
        let config = Self {
            algo: AlgorithmSpec::parse(algo)?,
            budget,
            linf,
            threshold: DEFAULT_THRESHOLD,
            early_stop: true,
            kernel_sigma: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linf > 0.0 && self.linf.is_finite()) {
            return Err(Error::InvalidArgument(format!("linf must be positive, got {}", self.linf)));
        }
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidArgument(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub success: bool,
    pub queries_used: usize,
    pub initial_score: f64,
    pub final_score: f64,
    /// Perturbation of the best query; the attacked image is `clamp(x + e, 0, 1)`.
    pub perturbation: Vec<f64>,
}

/// Objective `e -> D(clamp(x + e, 0, 1))` over `[-L, L]^t`.
struct AttackObjective<'a> {
    image: &'a Image,
    detector: &'a mut dyn Detector,
    space: SearchSpace,
    linf: f64,
    scratch: Image,
    clamped: Vec<f64>,
}

impl Objective for AttackObjective<'_> {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, e: &[f64]) -> Result<f64> {
        // Guards against rounding in blurred perturbations.
        self.clamped.clear();
        self.clamped.extend(e.iter().map(|v| v.clamp(-self.linf, self.linf)));
        self.scratch.perturb_from(self.image, &self.clamped);
        self.detector.score(&self.scratch)
    }

    fn name(&self) -> &str {
        "attack"
    }
}

/// Attacks one image, starting from `e = 0`.
pub fn attack_one(
    image: &Image,
    detector: &mut dyn Detector,
    config: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    config.validate()?;
    let [h, w, c] = image.shape();
    let space = SearchSpace::real_box(-config.linf, config.linf, image.len())?.with_shape(vec![h, w, c])?;
    let options = RunOptions {
        initial: Some(vec![0.0; image.len()]),
        stop_below: config.early_stop.then_some(config.threshold),
        loss_wrapper: LossWrapperConfig { amplitude: config.linf, kernel_sigma: config.kernel_sigma },
    };
    let linf = config.linf;
    let mut objective = AttackObjective {
        image,
        detector,
        space,
        linf,
        scratch: image.clone(),
        clamped: Vec::with_capacity(image.len()),
    };
    let record = run_with(&config.algo, &mut objective, config.budget, seed, &options)?;
    let perturbation: Vec<f64> = record.best.iter().map(|v| v.clamp(-linf, linf)).collect();
    Ok(AttackResult {
        success: record.final_loss < config.threshold,
        queries_used: record.evaluations,
        initial_score: record.trace[0],
        final_score: record.final_loss,
        perturbation,
    })
}

/// Per-image seed derived from the attack seed and the image id.
pub fn image_seed(seed: u64, image_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackStatus {
    /// The clean image already scored below the threshold.
    Skipped {
        score: f64,
    },
    Attacked(AttackResult),
    /// Detector failure while screening or attacking.
    Errored {
        message: String,
        queries_used: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub image_id: String,
    pub status: AttackStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSummary {
    /// One row per input image, in input order.
    pub rows: Vec<AttackRow>,
    pub attacked: usize,
    pub successes: usize,
    pub skipped: usize,
    pub errored: usize,
}

impl AttackSummary {
    /// Successes over attacked images; `None` when nothing was attacked.
    pub fn success_rate(&self) -> Option<f64> {
        (self.attacked > 0).then(|| self.successes as f64 / self.attacked as f64)
    }
}

fn attack_entry(
    id: &str,
    image: &Image,
    detector: &mut dyn Detector,
    config: &AttackConfig,
    seed: u64,
) -> AttackStatus {
    let score = match detector.score(image) {
        Ok(s) => s,
        Err(e) => return AttackStatus::Errored { message: format!("screening: {e}"), queries_used: 0 },
    };
    if score < config.threshold {
        return AttackStatus::Skipped { score };
    }
    let before = detector.query_count();
    match attack_one(image, detector, config, image_seed(seed, id)) {
        Ok(r) => AttackStatus::Attacked(r),
        Err(e) => {
            AttackStatus::Errored { message: e.to_string(), queries_used: (detector.query_count() - before) as usize }
        }
    }
}

/// Screens every image, attacks those scored at or above the threshold, and
/// reports one row per image. Each worker owns one detector connection and
/// reconnects after a failure.
pub fn attack_dataset(
    images: &[(String, Image)],
    detector: &DetectorSpec,
    config: &AttackConfig,
    seed: u64,
    parallelism: usize,
) -> Result<AttackSummary> {
    config.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<AttackStatus>>> = Mutex::new(vec![None; images.len()]);
    let workers = parallelism.max(1).min(images.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut connection: Option<Box<dyn Detector>> = None;
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((id, image)) = images.get(i) else { break };
                    if connection.is_none() {
                        match detector.connect() {
                            Ok(d) => connection = Some(d),
                            Err(e) => {
                                let status = AttackStatus::Errored { message: e.to_string(), queries_used: 0 };
                                slots.lock().expect("no worker panics while holding the lock")[i] = Some(status);
                                continue;
                            }
                        }
                    }
                    let d = connection.as_mut().expect("connected above");
                    let status = attack_entry(id, image, d.as_mut(), config, seed);
                    if let AttackStatus::Errored { message, .. } = &status {
                        log::warn!("image {id}: {message}");
                        connection = None;
                    }
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(status);
                }
            });
        }
    });

    let statuses = slots.into_inner().expect("workers have finished");
    let mut summary =
        AttackSummary { rows: Vec::with_capacity(images.len()), attacked: 0, successes: 0, skipped: 0, errored: 0 };
    for ((id, _), status) in images.iter().zip(statuses) {
        let status = status.expect("every image is processed");
        match &status {
            AttackStatus::Skipped { .. } => summary.skipped += 1,
            AttackStatus::Attacked(r) => {
                summary.attacked += 1;
                summary.successes += usize::from(r.success);
            }
            AttackStatus::Errored { .. } => summary.errored += 1,
        }
        summary.rows.push(AttackRow { image_id: id.clone(), status });
    }
    Ok(summary)
}

/// Attack CSV. `success` is `true`, `false`, `skipped` or `error`; error rows
/// leave the scores empty.
pub fn write_attack_csv(
    path: &Path,
    header: &ReportHeader,
    summary: &AttackSummary,
    config: &AttackConfig,
    seed: u64,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {}", header.line())?;
    writeln!(out, "image_id,algo,budget,linf,seed,success,queries_used,initial_score,final_score")?;
    let algo = config.algo.id();
    for row in &summary.rows {
        let (success, queries, initial, fin) = match &row.status {
            AttackStatus::Skipped { score } => ("skipped".to_string(), 0, score.to_string(), score.to_string()),
            AttackStatus::Attacked(r) => {
                (r.success.to_string(), r.queries_used, r.initial_score.to_string(), r.final_score.to_string())
            }
            AttackStatus::Errored { queries_used, .. } => {
                ("error".to_string(), *queries_used, String::new(), String::new())
            }
        };
        writeln!(
            out,
            "{},{algo},{},{},{seed},{success},{queries},{initial},{fin}",
            row.image_id, config.budget, config.linf
        )?;
    }
    out.flush()?;
    Ok(())
}
