//! Synthetic inference tasks and the reliability/precision losses of
//! threshold-based prediction sets.
//!
//! A task stands in for one encoded image: a pixel grid with a ground-truth
//! object mask and a latent mean-confidence field (`0.5 + a` on the mask,
//! `0.5 - a` off it). A server of quality `q` observes the field through
//! Gaussian noise of scale `sigma_task / q`, so deeper (higher-quality)
//! servers separate object from background more sharply. An infinite-quality
//! server sees the mask exactly.
//!
//! Prediction sets threshold the observed confidence; reliability losses
//! (miscoverage, false-negative rate) are non-decreasing in the threshold and
//! vanish at `theta = 0`, precision losses (set size, false-positive rate,
//! relative false positives) are non-increasing and — for set size and FPR —
//! equal 1 at `theta = 0`.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Task-generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGenConfig {
    pub height: usize,
    pub width: usize,
    /// Mean-confidence contrast `a`: inside the mask the latent mean is
    /// `0.5 + a`, outside `0.5 - a`.
    pub contrast: f64,
    /// Observation noise scale at quality 1.
    pub noise_sigma: f64,
    /// Mask coverage range as a fraction of the grid.
    pub mask_min_frac: f64,
    pub mask_max_frac: f64,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        TaskGenConfig {
            height: 16,
            width: 16,
            contrast: 0.2,
            noise_sigma: 0.15,
            mask_min_frac: 0.05,
            mask_max_frac: 0.40,
        }
    }
}

/// One synthetic inference task (the payload of a data unit).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub height: usize,
    pub width: usize,
    /// Ground-truth object mask; always at least one pixel.
    pub mask: Vec<bool>,
    /// Base confidence map: one noisy observation at quality 1.
    pub base_confidence: Vec<f64>,
    pub contrast: f64,
    pub noise_sigma: f64,
    /// Seed from which every server's observation noise is derived.
    pub view_seed: u64,
    pub generated_slot: u64,
    pub owner: usize,
    pub du_id: u64,
}

/// A server's observation of a task: its own noisy confidence map.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerView {
    pub height: usize,
    pub width: usize,
    pub mask: Vec<bool>,
    pub confidence: Vec<f64>,
}

/// Reliability losses: non-decreasing in the threshold, zero at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReliabilityKind {
    /// 1 if any true pixel is missing from the prediction set.
    Miscoverage,
    /// Fraction of true pixels missing from the prediction set.
    Fnr,
}

/// Precision losses: non-increasing in the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionKind {
    /// Prediction-set size over the number of pixels; 1 at threshold 0.
    SetSize,
    /// False positives over the background size; 1 at threshold 0.
    Fpr,
    /// False positives over the object size, clamped to 1.
    RelativeFp,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("task has an empty ground-truth mask")]
    EmptyTruth,
    #[error("task has an empty background")]
    EmptyBackground,
}

/// Independent per-user Bernoulli arrivals for one slot.
pub fn sample_arrivals<R: Rng>(arrival_probs: &[f64], rng: &mut R) -> Vec<bool> {
    arrival_probs.iter().map(|&p| rng.random_bool(p.clamp(0.0, 1.0))).collect()
}

/// Generates a task with a random rectangular object mask covering the
/// configured fraction range, plus a base confidence observation.
pub fn generate_task<R: Rng>(
    rng: &mut R,
    cfg: &TaskGenConfig,
    owner: usize,
    generated_slot: u64,
    du_id: u64,
) -> SyntheticTask {
    assert!(cfg.height >= 4 && cfg.width >= 4, "grid must be at least 4x4");
    let pixels = cfg.height * cfg.width;
    let target_frac = rng.random_range(cfg.mask_min_frac..=cfg.mask_max_frac);
    let target = ((pixels as f64 * target_frac).round() as usize).max(1);

    // Rectangle with roughly the target area, clipped to the grid.
    let aspect: f64 = rng.random_range(0.5..2.0);
    let rect_h = (((target as f64) * aspect).sqrt().round() as usize)
        .clamp(1, cfg.height);
    let rect_w = ((target + rect_h - 1) / rect_h).clamp(1, cfg.width);
    let top = rng.random_range(0..=cfg.height - rect_h);
    let left = rng.random_range(0..=cfg.width - rect_w);

    let mut mask = vec![false; pixels];
    for r in top..top + rect_h {
        for c in left..left + rect_w {
            mask[r * cfg.width + c] = true;
        }
    }

    let view_seed: u64 = rng.random();
    let base_confidence = observe(&mask, cfg.contrast, cfg.noise_sigma, rng);

    SyntheticTask {
        height: cfg.height,
        width: cfg.width,
        mask,
        base_confidence,
        contrast: cfg.contrast,
        noise_sigma: cfg.noise_sigma,
        view_seed,
        generated_slot,
        owner,
        du_id,
    }
}

fn observe<R: Rng>(mask: &[bool], contrast: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    mask.iter()
        .map(|&inside| {
            let mean = if inside { 0.5 + contrast } else { 0.5 - contrast };
            let noise: f64 = if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            } else {
                0.0
            };
            (mean + noise).clamp(0.0, 1.0)
        })
        .collect()
}

/// The view a server of the given quality has of a task. Deterministic in
/// `(task.view_seed, server_node)`.
pub fn server_view(task: &SyntheticTask, quality: f64, server_node: usize) -> ServerView {
    let confidence = if quality.is_infinite() {
        task.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    } else {
        let sigma = task.noise_sigma / quality;
        let mut rng: ChaCha12Rng = crate::rng::derived_stream(task.view_seed, server_node as u64);
        observe(&task.mask, task.contrast, sigma, &mut rng)
    };
    ServerView {
        height: task.height,
        width: task.width,
        mask: task.mask.clone(),
        confidence,
    }
}

/// Pixels whose confidence reaches the threshold.
pub fn prediction_set(view: &ServerView, threshold: f64) -> Vec<usize> {
    view.confidence
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect()
}

struct SetCounts {
    truth: usize,
    covered_truth: usize,
    set_size: usize,
    false_positives: usize,
    pixels: usize,
}

fn count_set(view: &ServerView, threshold: f64) -> SetCounts {
    let mut truth = 0;
    let mut covered_truth = 0;
    let mut set_size = 0;
    let mut false_positives = 0;
    for (&inside, &p) in view.mask.iter().zip(&view.confidence) {
        let selected = p >= threshold;
        if inside {
            truth += 1;
            if selected {
                covered_truth += 1;
            }
        } else if selected {
            false_positives += 1;
        }
        if selected {
            set_size += 1;
        }
    }
    SetCounts {
        truth,
        covered_truth,
        set_size,
        false_positives,
        pixels: view.mask.len(),
    }
}

/// Reliability loss of deciding at `threshold`; in `[0, 1]`.
pub fn reliability_loss(
    view: &ServerView,
    threshold: f64,
    kind: ReliabilityKind,
) -> Result<f64, LossError> {
    let c = count_set(view, threshold);
    if c.truth == 0 {
        return Err(LossError::EmptyTruth);
    }
    Ok(match kind {
        ReliabilityKind::Miscoverage => {
            if c.covered_truth < c.truth {
                1.0
            } else {
                0.0
            }
        }
        ReliabilityKind::Fnr => (c.truth - c.covered_truth) as f64 / c.truth as f64,
    })
}

/// Precision loss of deciding at `threshold`; in `[0, 1]`.
pub fn precision_loss(
    view: &ServerView,
    threshold: f64,
    kind: PrecisionKind,
) -> Result<f64, LossError> {
    let c = count_set(view, threshold);
    Ok(match kind {
        PrecisionKind::SetSize => {
            if c.pixels == 0 {
                return Err(LossError::EmptyBackground);
            }
            c.set_size as f64 / c.pixels as f64
        }
        PrecisionKind::Fpr => {
            let background = c.pixels - c.truth;
            if background == 0 {
                return Err(LossError::EmptyBackground);
            }
            c.false_positives as f64 / background as f64
        }
        PrecisionKind::RelativeFp => {
            if c.truth == 0 {
                return Err(LossError::EmptyTruth);
            }
            (c.false_positives as f64 / c.truth as f64).min(1.0)
        }
    })
}
