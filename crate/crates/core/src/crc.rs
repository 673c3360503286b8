//! Frame bookkeeping, the online conformal threshold update with delayed
//! feedback, and per-realization reliability-bound certificates.
//!
//! At the end of frame `f` the per-user threshold moves by
//! `lr * (target - mean_loss)` using the feedback of frame `f - delay`
//! (skipped while `f < delay` and on frames without decisions). Telescoping
//! that update gives an exact identity between the running average loss over
//! active frames and the threshold displacement:
//!
//! ```text
//! avg_F = target - (theta_F - theta_0) / (lr * F)
//! ```
//!
//! so the average is bracketed by how far the threshold ever strays from its
//! start. Since the threshold *falls* when the loss exceeds the target, the
//! upper bound on the average is controlled by the lowest observed threshold
//! (the min-based constant) and the lower bound by the highest (the
//! max-based constant). Delayed feedback widens the bracket by exactly
//! `target*delay/F` below and `(1-target)*delay/F` above.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrcError {
    #[error("recorded loss {0} outside [0, 1]")]
    LossOutOfRange(f64),
}

/// Per-user decision statistics of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameStats {
    pub decisions: u32,
    /// Running mean loss; 0 when no decisions were recorded.
    pub mean_loss: f64,
}

/// Accumulates decisions within the current frame.
#[derive(Debug, Clone)]
pub struct FrameFeedback {
    stats: Vec<FrameStats>,
}

impl FrameFeedback {
    pub fn new(users: usize) -> Self {
        FrameFeedback {
            stats: vec![FrameStats::default(); users],
        }
    }

    /// Incremental mean: `mean <- mean * n/(n+1) + loss/(n+1)`.
    pub fn record_decision(&mut self, user: usize, loss: f64) -> Result<(), CrcError> {
        if !(0.0..=1.0).contains(&loss) {
            return Err(CrcError::LossOutOfRange(loss));
        }
        let s = &mut self.stats[user];
        let n = s.decisions as f64;
        s.mean_loss = s.mean_loss * (n / (n + 1.0)) + loss / (n + 1.0);
        s.decisions += 1;
        Ok(())
    }

    pub fn stats(&self, user: usize) -> FrameStats {
        self.stats[user]
    }

    pub fn all(&self) -> &[FrameStats] {
        &self.stats
    }

    pub fn reset(&mut self) {
        self.stats.fill(FrameStats::default());
    }
}

/// Per-user threshold state across frames, with observed-range trackers for
/// the a-posteriori certificate constants.
#[derive(Debug, Clone)]
pub struct ThresholdState {
    thresholds: Vec<f64>,
    initial: Vec<f64>,
    learning_rate: Vec<f64>,
    target: Vec<f64>,
    delay: Vec<usize>,
    observed_min: Vec<f64>,
    observed_max: Vec<f64>,
}

impl ThresholdState {
    pub fn new(
        initial: Vec<f64>,
        learning_rate: Vec<f64>,
        target: Vec<f64>,
        delay: Vec<usize>,
    ) -> Self {
        assert!(learning_rate.iter().all(|&g| g > 0.0));
        ThresholdState {
            thresholds: initial.clone(),
            observed_min: initial.clone(),
            observed_max: initial.clone(),
            initial,
            learning_rate,
            target,
            delay,
        }
    }

    pub fn users(&self) -> usize {
        self.thresholds.len()
    }

    pub fn threshold(&self, user: usize) -> f64 {
        self.thresholds[user]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn initial(&self, user: usize) -> f64 {
        self.initial[user]
    }

    pub fn learning_rate(&self, user: usize) -> f64 {
        self.learning_rate[user]
    }

    pub fn target(&self, user: usize) -> f64 {
        self.target[user]
    }

    pub fn delay(&self, user: usize) -> usize {
        self.delay[user]
    }

    /// Applies the end-of-frame update. `history[k]` lists the completed
    /// frames of user `k` including the one that just ended; the update for
    /// frame `f` consumes the stats of frame `f - delay`, and frames without
    /// decisions never move the threshold.
    pub fn update_frame_end(&mut self, history: &[Vec<FrameStats>]) {
        for k in 0..self.thresholds.len() {
            let frames = &history[k];
            let f = frames.len().checked_sub(1).expect("at least one frame");
            if f < self.delay[k] {
                continue;
            }
            let fb = frames[f - self.delay[k]];
            if fb.decisions == 0 {
                continue;
            }
            self.thresholds[k] +=
                self.learning_rate[k] * (self.target[k] - fb.mean_loss);
            self.observed_min[k] = self.observed_min[k].min(self.thresholds[k]);
            self.observed_max[k] = self.observed_max[k].max(self.thresholds[k]);
        }
    }

    /// A-posteriori min-based constant: `min_f threshold + lr`.
    pub fn min_based_const(&self, user: usize) -> f64 {
        self.observed_min[user] + self.learning_rate[user]
    }

    /// A-posteriori max-based constant: `max_f threshold - lr`.
    pub fn max_based_const(&self, user: usize) -> f64 {
        self.observed_max[user] - self.learning_rate[user]
    }
}

/// Certificate interval for the running average reliability loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Deterministic bounds on the average loss over `active_frames` frames.
///
/// `min_const` is the min-based constant (worst case 0), `max_const` the
/// max-based constant (worst case 1). Because the threshold moves *down*
/// when the loss exceeds the target, the upper bound is driven by
/// `min_const` and the lower bound by `max_const`; both collapse to the
/// target at rate 1/F.
pub fn reliability_bounds(
    active_frames: f64,
    learning_rate: f64,
    initial_threshold: f64,
    target: f64,
    delay_frames: f64,
    min_const: f64,
    max_const: f64,
) -> ReliabilityBounds {
    assert!(active_frames >= 1.0 && learning_rate > 0.0);
    let f = active_frames;
    let lower = target
        - target * delay_frames / f
        - (max_const + learning_rate - initial_threshold) / (learning_rate * f);
    let upper = target
        + (initial_threshold + learning_rate - min_const) / (learning_rate * f)
        + delay_frames * (1.0 - target) / f;
    ReliabilityBounds { lower, upper }
}

/// Worst-case bounds assuming the threshold stays within `[0, 1]`.
pub fn reliability_bounds_worst_case(
    active_frames: f64,
    learning_rate: f64,
    initial_threshold: f64,
    target: f64,
    delay_frames: f64,
) -> ReliabilityBounds {
    reliability_bounds(
        active_frames,
        learning_rate,
        initial_threshold,
        target,
        delay_frames,
        0.0,
        1.0,
    )
}
