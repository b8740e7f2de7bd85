use serde::{Deserialize, Serialize};

use super::{PreprocessError, WindowSample};

/// Per-channel z-score parameters, index 0 = social, 1 = broadcast.
/// Targets share the social channel's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl NormalizationParams {
    pub fn normalize(&self, channel: usize, x: f64) -> f64 {
        (x - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, z: f64) -> f64 {
        z * self.std[channel] + self.mean[channel]
    }

    pub fn normalize_target(&self, y: f64) -> f64 {
        self.normalize(0, y)
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        self.denormalize(0, z)
    }
}

/// Pools every input value of the training samples per channel and takes the
/// mean and population standard deviation. A zero-variance channel gets std 1.
pub fn fit_normalization(samples: &[WindowSample]) -> Result<NormalizationParams, PreprocessError> {
    if samples.len() < 2 {
        return Err(PreprocessError::NotEnoughSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let moments = |values: &mut dyn Iterator<Item = f64>| {
        // Welford keeps the pooled variance stable for large counts.
        let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for v in values {
            n += 1.0;
            let delta = v - mean;
            mean += delta / n;
            m2 += delta * (v - mean);
        }
        let std = (m2 / n).sqrt();
        (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
    };
    let (ms, ss) = moments(&mut samples.iter().flat_map(|s| s.input_social.iter().copied()));
    let (mb, sb) = moments(&mut samples.iter().flat_map(|s| s.input_broadcast.iter().copied()));
    Ok(NormalizationParams {
        mean: [ms, mb],
        std: [ss, sb],
    })
}
