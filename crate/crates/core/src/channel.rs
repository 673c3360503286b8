//! Per-slot channel sampling and the transmission model: Shannon capacity,
//! per-DU delay and energy, and the minimal power meeting the one-slot
//! delay bound.
//!
//! Links are interference-free AWGN with Rayleigh fading, so the linear
//! power gain of a link is `10^(-PL/10) * X` with `X` a unit-mean
//! exponential variate, resampled independently every slot.

use crate::net::Network;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

/// Per-edge linear power gains for one slot (path loss included).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    gains: Vec<f64>,
}

impl ChannelMatrix {
    pub fn gain(&self, edge: usize) -> f64 {
        self.gains[edge]
    }

    pub fn from_gains(gains: Vec<f64>) -> Self {
        ChannelMatrix { gains }
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("zero capacity: transmission would never complete")]
    ZeroCapacity,
}

/// Linear gain for a given average path loss and a fading realization `x`.
pub fn gain_from_fading(path_loss_db: f64, x: f64) -> f64 {
    10f64.powf(-path_loss_db / 10.0) * x
}

/// Converts a noise power spectral density from dBm/Hz to W/Hz.
pub fn noise_dbm_per_hz_to_w(dbm_per_hz: f64) -> f64 {
    10f64.powf((dbm_per_hz - 30.0) / 10.0)
}

/// Draws fresh i.i.d. channel gains for every edge.
pub fn sample_channels<R: Rng>(net: &Network, rng: &mut R) -> ChannelMatrix {
    let gains = net
        .edges()
        .iter()
        .map(|e| {
            let x: f64 = Exp1.sample(rng);
            gain_from_fading(e.path_loss_db, x)
        })
        .collect();
    ChannelMatrix { gains }
}

/// Shannon capacity `B * log2(1 + P*S/(B*N0))` in bits/s.
pub fn capacity(power_w: f64, gain: f64, bandwidth_hz: f64, noise_w_per_hz: f64) -> f64 {
    debug_assert!(bandwidth_hz > 0.0 && noise_w_per_hz > 0.0);
    let snr = power_w * gain / (bandwidth_hz * noise_w_per_hz);
    bandwidth_hz * (1.0 + snr).log2()
}

/// Smallest power transmitting `w_bits` within `slot_s` seconds, by
/// closed-form inversion of the capacity. Returns `None` when that power
/// exceeds `power_cap_w` or when the link is unusable (zero gain).
pub fn min_power_for_slot(
    w_bits: f64,
    gain: f64,
    bandwidth_hz: f64,
    noise_w_per_hz: f64,
    slot_s: f64,
    power_cap_w: f64,
) -> Option<f64> {
    debug_assert!(w_bits > 0.0 && slot_s > 0.0);
    if gain <= 0.0 {
        return None;
    }
    let required_snr = 2f64.powf(w_bits / (slot_s * bandwidth_hz)) - 1.0;
    let power = required_snr * bandwidth_hz * noise_w_per_hz / gain;
    if !power.is_finite() || power > power_cap_w {
        None
    } else {
        Some(power)
    }
}

/// Energy to push `w_bits` at power `power_w` over a link of capacity
/// `capacity_bps`: `E = P * W / C`.
pub fn link_energy(power_w: f64, w_bits: f64, capacity_bps: f64) -> Result<f64, ChannelError> {
    if capacity_bps <= 0.0 {
        return Err(ChannelError::ZeroCapacity);
    }
    Ok(power_w * w_bits / capacity_bps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{EdParams, NetworkBuilder, ServerParams};
    use crate::rng::{named_stream, Stream};

    const B: f64 = 20.0e6;
    const N0: f64 = 3.981071705534969e-21; // -174 dBm/Hz
    const DU_BITS: f64 = 6_291_456.0; // 768 KB
    const SLOT: f64 = 0.05;

    fn small_net() -> crate::net::Network {
        NetworkBuilder::new()
            .edge_device(
                "ed",
                3.5,
                EdParams {
                    arrival_prob: 0.5,
                    du_bits: DU_BITS,
                    reliability_target: 0.15,
                    learning_rate: 0.5,
                    feedback_delay_frames: 0,
                    initial_threshold: 0.5,
                },
            )
            .server(
                "s",
                3.5,
                ServerParams {
                    quality: 1.0,
                    max_decisions_per_slot: 1,
                },
            )
            .edge("ed", "s")
            .build()
            .unwrap()
    }

    #[test]
    fn noise_density_conversion() {
        let n0 = noise_dbm_per_hz_to_w(-174.0);
        assert!((n0 - 10f64.powf(-20.4)).abs() / n0 < 1e-12);
    }

    #[test]
    fn deterministic_fading_stub() {
        // PL = 90 dB with X = 1 gives a 1e-9 linear gain.
        assert!((gain_from_fading(90.0, 1.0) - 1e-9).abs() < 1e-24);
    }

    #[test]
    fn sampling_is_reproducible() {
        let net = small_net();
        let a = sample_channels(&net, &mut named_stream(3, Stream::Channels));
        let b = sample_channels(&net, &mut named_stream(3, Stream::Channels));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_matches_path_loss() {
        // Unit-mean fading: the mean gain over many slots approaches the
        // deterministic path-loss value.
        let net = small_net();
        let mut rng = named_stream(11, Stream::Channels);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_channels(&net, &mut rng).gain(0);
        }
        let mean = sum / n as f64;
        assert!(
            (mean - 1e-9).abs() / 1e-9 < 0.02,
            "mean gain {mean:e} deviates more than 2% from 1e-9"
        );
    }

    #[test]
    fn capacity_zero_power() {
        assert_eq!(capacity(0.0, 1e-9, B, N0), 0.0);
    }

    #[test]
    fn capacity_reference_point() {
        // P=1 W, S=1e-9: SNR ~ 1.256e4, C ~ 2.723e8 bits/s.
        let snr = 1.0 * 1e-9 / (B * N0);
        assert!((snr - 1.256e4).abs() / snr < 1e-3);
        let c = capacity(1.0, 1e-9, B, N0);
        assert!((c - 2.723e8).abs() / c < 1e-3, "capacity {c:e}");
    }

    #[test]
    fn capacity_monotone_in_power() {
        let mut rng = named_stream(5, Stream::Channels);
        for _ in 0..200 {
            let p: f64 = rng.random_range(0.0..4.0);
            let s: f64 = rng.random_range(1e-11..1e-7);
            let c1 = capacity(p, s, B, N0);
            let c2 = capacity(2.0 * p, s, B, N0);
            assert!(c2 >= c1);
        }
    }

    /// Independent route to the minimal power: bisection on the capacity
    /// until the transmission time hits the slot length.
    fn min_power_by_bisection(w_bits: f64, gain: f64, slot_s: f64) -> f64 {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while w_bits / capacity(hi, gain, B, N0) > slot_s {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if w_bits / capacity(mid, gain, B, N0) > slot_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    #[test]
    fn min_power_reference_point() {
        let p = min_power_for_slot(DU_BITS, 1e-9, B, N0, SLOT, 3.5).unwrap();
        assert!((p - 6.157e-3).abs() < 1e-5, "minimal power {p:e}");
        let p_bis = min_power_by_bisection(DU_BITS, 1e-9, SLOT);
        assert!((p - p_bis).abs() / p < 1e-9, "closed form {p:e} vs bisection {p_bis:e}");
    }

    #[test]
    fn min_power_infeasible_cases() {
        assert_eq!(min_power_for_slot(DU_BITS, 0.0, B, N0, SLOT, 3.5), None);
        // Requires ~4.0 W but the cap is 3.5 W.
        let gain_for_4w = {
            let snr = 2f64.powf(DU_BITS / (SLOT * B)) - 1.0;
            snr * B * N0 / 4.0
        };
        assert_eq!(min_power_for_slot(DU_BITS, gain_for_4w, B, N0, SLOT, 3.5), None);
        assert!(min_power_for_slot(DU_BITS, gain_for_4w, B, N0, SLOT, 4.5).is_some());
    }

    #[test]
    fn link_energy_cases() {
        let c = capacity(1.0, 1e-9, B, N0);
        let e = link_energy(1.0, DU_BITS, c).unwrap();
        assert!((e - 23.1e-3).abs() / e < 2e-3, "energy {e:e}");
        assert_eq!(link_energy(0.0, DU_BITS, c).unwrap(), 0.0);
        assert!(link_energy(1.0, DU_BITS, 0.0).is_err());
    }

    #[test]
    fn minimal_power_energy_sits_on_delay_boundary() {
        // At minimal power the delay equals the slot length, so E = P * slot.
        let p = min_power_for_slot(DU_BITS, 1e-9, B, N0, SLOT, 3.5).unwrap();
        let c = capacity(p, 1e-9, B, N0);
        let delay = DU_BITS / c;
        assert!((delay - SLOT).abs() / SLOT < 1e-9);
        let e = link_energy(p, DU_BITS, c).unwrap();
        assert!((e - 0.308e-3).abs() / e < 2e-3, "boundary energy {e:e}");
        assert!((e - p * SLOT).abs() / e < 1e-9);
    }

    #[test]
    fn delay_boundary_holds_over_random_links() {
        let mut rng = named_stream(17, Stream::Channels);
        for _ in 0..200 {
            let gain: f64 = rng.random_range(1e-11..1e-7);
            let w: f64 = rng.random_range(1e5..1e7);
            if let Some(p) = min_power_for_slot(w, gain, B, N0, SLOT, f64::INFINITY) {
                let delay = w / capacity(p, gain, B, N0);
                assert!((delay - SLOT).abs() / SLOT < 1e-9);
            }
        }
    }
}
