//! Scheduled sampling between gold and predicted entity mentions.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSchedule {
    /// Final probability of feeding predicted mentions downstream.
    pub p_max: f64,
    /// Epoch at which `p_max` is reached; the ramp from 0 is linear.
    pub ramp_epochs: usize,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        Self { p_max: 0.9, ramp_epochs: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MentionSource {
    Gold,
    Predicted,
}

impl SamplingSchedule {
    pub fn probability(&self, epoch: usize) -> f64 {
        if self.ramp_epochs == 0 {
            return self.p_max;
        }
        self.p_max * epoch.min(self.ramp_epochs) as f64 / self.ramp_epochs as f64
    }

    pub fn draw(&self, epoch: usize, rng: &mut impl Rng) -> MentionSource {
        // Always consume one draw so the random stream does not depend on the epoch.
        let u: f64 = rng.gen();
        if u < self.probability(epoch) {
            MentionSource::Predicted
        } else {
            MentionSource::Gold
        }
    }
}

/// Picks the mention set a training step should use.
pub fn scheduled_source<'a, T>(
    epoch: usize,
    schedule: &SamplingSchedule,
    gold: &'a [T],
    predicted: &'a [T],
    rng: &mut impl Rng,
) -> &'a [T] {
    match schedule.draw(epoch, rng) {
        MentionSource::Gold => gold,
        MentionSource::Predicted => predicted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ramp_endpoints_and_midpoint() {
        let s = SamplingSchedule::default();
        assert_eq!(s.probability(0), 0.0);
        assert!((s.probability(5) - 0.45).abs() < 1e-15);
        assert_eq!(s.probability(10), 0.9);
        assert_eq!(s.probability(400), 0.9);
    }

    #[test]
    fn epoch_zero_always_gold() {
        let s = SamplingSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gold = [1];
        let pred = [2];
        for _ in 0..1000 {
            assert_eq!(scheduled_source(0, &s, &gold, &pred, &mut rng), &gold);
        }
    }

    #[test]
    fn late_epochs_use_predictions_at_p_max() {
        let s = SamplingSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let hits = (0..n).filter(|_| s.draw(50, &mut rng) == MentionSource::Predicted).count();
        assert!((hits as f64 / n as f64 - 0.9).abs() < 0.01);
    }
}
