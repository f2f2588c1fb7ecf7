use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::DepthMap;

/// Depth at the top row of every synthetic scene.
pub const NEAR_DEPTH: f64 = 5.0;
/// Depth at the bottom row of the ramp scenes.
pub const FAR_DEPTH: f64 = 75.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Linear 5 m (top) to 75 m (bottom).
    Ramp,
    /// Ramp with a constant-depth disk in front of it.
    RampWithDisk,
    /// Piecewise-constant horizontal bands.
    Steps,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ramp" => Ok(SceneKind::Ramp),
            "disk" | "rampwithdisk" | "ramp_with_disk" => Ok(SceneKind::RampWithDisk),
            "steps" => Ok(SceneKind::Steps),
            _ => Err(Error::invalid(format!("unknown scene \"{s}\""))),
        }
    }
}

/// Deterministic stand-in for a teacher's depth output.
pub fn synth_scene(height: usize, width: usize, kind: SceneKind, seed: u64) -> Result<DepthMap> {
    if height < 16 || width < 16 {
        return Err(Error::invalid(format!(
            "synthetic scenes need at least 16x16 pixels, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ramp = |row: usize| NEAR_DEPTH + (FAR_DEPTH - NEAR_DEPTH) * row as f64 / (height - 1) as f64;
    let values = match kind {
        SceneKind::Ramp => Array2::from_shape_fn((height, width), |(r, _)| ramp(r)),
        SceneKind::RampWithDisk => {
            let (hf, wf) = (height as f64, width as f64);
            let cy = rng.random_range(0.35 * hf..0.65 * hf);
            let cx = rng.random_range(0.35 * wf..0.65 * wf);
            let short = hf.min(wf);
            let radius = rng.random_range(0.15 * short..0.25 * short);
            let depth = rng.random_range(10.0..30.0);
            Array2::from_shape_fn((height, width), |(r, c)| {
                let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= radius * radius {
                    depth
                } else {
                    ramp(r)
                }
            })
        }
        SceneKind::Steps => {
            let bands = rng.random_range(3..=6usize);
            let depths: Vec<f64> = (0..bands)
                .map(|_| rng.random_range(NEAR_DEPTH..FAR_DEPTH))
                .collect();
            Array2::from_shape_fn((height, width), |(r, _)| depths[r * bands / height])
        }
    };
    DepthMap::dense(values)
}
