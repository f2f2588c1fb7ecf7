//! Shared domain types: the uniform bin grid, depth maps, depth probability
//! maps and the loss hyperparameters.

use ndarray::{Array2, Array3, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Per-pixel tolerance on the bin-sum of an in-memory [`Dpm`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Uniform partition of `[min_depth, max_depth]` into `k` bins.
///
/// Bins are right-open `[e_i, e_{i+1})` except the last one, which is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPartition {
    k: usize,
    min_depth: f64,
    max_depth: f64,
    width: f64,
    edges: Vec<f64>,
    centers: Vec<f64>,
}

impl BinPartition {
    pub fn uniform(k: usize, min_depth: f64, max_depth: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("bin count must be >= 2, got {k}")));
        }
        if !min_depth.is_finite() || !max_depth.is_finite() {
            return Err(Error::invalid("partition bounds must be finite"));
        }
        if min_depth < 0.0 || max_depth <= min_depth {
            return Err(Error::invalid(format!(
                "partition requires 0 <= min < max, got [{min_depth}, {max_depth}]"
            )));
        }
        let span = max_depth - min_depth;
        let kf = k as f64;
        // Edges and centers as span * n / d keep integer-ratio points exact
        // (e.g. the center of bin 128 of 257 over [0, 80] is exactly 40).
        let mut edges: Vec<f64> = (0..=k)
            .map(|i| min_depth + span * i as f64 / kf)
            .collect();
        edges[0] = min_depth;
        edges[k] = max_depth;
        let centers = (0..k)
            .map(|i| min_depth + span * (2 * i + 1) as f64 / (2.0 * kf))
            .collect();
        Ok(BinPartition {
            k,
            min_depth,
            max_depth,
            width: span / kf,
            edges,
            centers,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn min_depth(&self) -> f64 {
        self.min_depth
    }

    pub fn max_depth(&self) -> f64 {
        self.max_depth
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.min_depth && d <= self.max_depth
    }

    /// Index `i` with `e_i <= d < e_{i+1}`; `max_depth` maps to the last bin.
    pub fn bin_index_of(&self, d: f64) -> Result<usize> {
        if !self.contains(d) {
            return Err(Error::OutOfRange {
                depth: d,
                min: self.min_depth,
                max: self.max_depth,
            });
        }
        let guess = ((d - self.min_depth) / self.width).floor() as usize;
        let mut i = guess.min(self.k - 1);
        // The stored edges are authoritative; nudge the arithmetic guess.
        while i > 0 && d < self.edges[i] {
            i -= 1;
        }
        while i < self.k - 1 && d >= self.edges[i + 1] {
            i += 1;
        }
        Ok(i)
    }
}

/// Metric depth field with a validity mask. Invalid pixels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Array2<f64>,
    valid: Array2<bool>,
}

impl DepthMap {
    /// A fully valid map. Every value must be finite and non-negative.
    pub fn dense(values: Array2<f64>) -> Result<Self> {
        let valid = Array2::from_elem(values.raw_dim(), true);
        Self::with_mask(values, valid)
    }

    /// Builds a map from values and an explicit mask; invalid entries are zeroed.
    pub fn with_mask(mut values: Array2<f64>, valid: Array2<bool>) -> Result<Self> {
        if values.dim() != valid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "values {:?} vs mask {:?}",
                values.dim(),
                valid.dim()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("depth map must be non-empty"));
        }
        for ((row, col), v) in values.indexed_iter_mut() {
            if valid[[row, col]] {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidDepth { value: *v, row, col });
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(DepthMap { values, valid })
    }

    /// Constant, fully valid map.
    pub fn constant(height: usize, width: usize, depth: f64) -> Result<Self> {
        Self::dense(Array2::from_elem((height, width), depth))
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[[row, col]]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[[row, col]]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }
}

/// Depth probability map: one distribution over the partition's bins per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Dpm {
    probs: Array3<f64>,
    partition: BinPartition,
    valid: Array2<bool>,
}

impl Dpm {
    /// Validates shape, range and the per-pixel simplex at [`SIMPLEX_TOLERANCE`].
    pub fn new(probs: Array3<f64>, partition: BinPartition) -> Result<Self> {
        let (h, w, _) = probs.dim();
        Self::with_mask(probs, partition, Array2::from_elem((h, w), true))
    }

    pub fn with_mask(
        probs: Array3<f64>,
        partition: BinPartition,
        valid: Array2<bool>,
    ) -> Result<Self> {
        Self::validated(probs, partition, valid, SIMPLEX_TOLERANCE)
    }

    pub(crate) fn validated(
        probs: Array3<f64>,
        partition: BinPartition,
        valid: Array2<bool>,
        tolerance: f64,
    ) -> Result<Self> {
        let (h, w, b) = probs.dim();
        if b != partition.k() {
            return Err(Error::ShapeMismatch(format!(
                "DPM has {b} bins, partition has {}",
                partition.k()
            )));
        }
        if valid.dim() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "DPM is {h}x{w}, mask is {:?}",
                valid.dim()
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::invalid("DPM must be non-empty"));
        }
        for row in 0..h {
            for col in 0..w {
                let lane = probs.slice(ndarray::s![row, col, ..]);
                let mut sum = 0.0;
                for &p in lane.iter() {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidProbability { value: p, row, col });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > tolerance {
                    return Err(Error::NotNormalized {
                        sum,
                        pixel: Some((row, col)),
                        tolerance,
                    });
                }
            }
        }
        Ok(Dpm {
            probs,
            partition,
            valid,
        })
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_parts(probs: Array3<f64>, partition: BinPartition, valid: Array2<bool>) -> Self {
        debug_assert_eq!(probs.dim().2, partition.k());
        Dpm {
            probs,
            partition,
            valid,
        }
    }

    pub fn height(&self) -> usize {
        self.probs.dim().0
    }

    pub fn width(&self) -> usize {
        self.probs.dim().1
    }

    pub fn bins(&self) -> usize {
        self.probs.dim().2
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    pub fn partition(&self) -> &BinPartition {
        &self.partition
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn pixel(&self, row: usize, col: usize) -> ArrayView1<'_, f64> {
        self.probs.slice(ndarray::s![row, col, ..])
    }

    /// Largest deviation of any pixel's bin-sum from 1.
    pub fn max_simplex_error(&self) -> f64 {
        self.probs
            .lanes(Axis(2))
            .into_iter()
            .map(|lane| (lane.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// How surviving bin masses are turned into a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// `exp(m_i) / sum_S exp(m_j)` over the bins that survive the cutoff.
    #[default]
    MaskedSoftmax,
    /// `m_i / sum_S m_j` over the bins that survive the cutoff.
    Renormalize,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maskedsoftmax" | "masked_softmax" | "softmax" => Ok(NormMode::MaskedSoftmax),
            "renormalize" | "renorm" => Ok(NormMode::Renormalize),
            _ => Err(Error::invalid(format!("unknown norm_mode \"{s}\""))),
        }
    }
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormMode::MaskedSoftmax => f.write_str("MaskedSoftmax"),
            NormMode::Renormalize => f.write_str("Renormalize"),
        }
    }
}

/// Gaussian-window SSIM configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub window_sigma: f64,
    pub data_range: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    /// 11x11 window, sigma 1.5, `c1 = (0.01 L)^2`, `c2 = (0.03 L)^2`.
    pub fn for_range(data_range: f64) -> Self {
        Self::with_window(11, 1.5, data_range)
    }

    pub fn with_window(window: usize, window_sigma: f64, data_range: f64) -> Self {
        SsimParams {
            window,
            window_sigma,
            data_range,
            c1: (0.01 * data_range).powi(2),
            c2: (0.03 * data_range).powi(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.window_sigma > 0.0 && self.window_sigma.is_finite()) {
            return Err(Error::invalid("SSIM window_sigma must be positive"));
        }
        if !(self.data_range > 0.0 && self.data_range.is_finite()) {
            return Err(Error::invalid("SSIM data_range must be positive"));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::invalid("SSIM constants must be positive"));
        }
        Ok(())
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::for_range(80.0)
    }
}

/// Hyperparameters of the encoding and of the composite loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Gaussian kernel standard deviation, meters.
    pub sigma: f64,
    /// Bins with raw mass below this are dropped before normalization.
    pub cutoff: f64,
    pub norm_mode: NormMode,
    /// Weight of the DPM divergence term.
    pub alpha: f64,
    /// Overall loss scale.
    pub beta: f64,
    pub ssim: SsimParams,
    /// Floor applied to probabilities inside logarithms.
    pub clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            sigma: 0.8,
            cutoff: 1e-16,
            norm_mode: NormMode::MaskedSoftmax,
            alpha: 0.1,
            beta: 10.0,
            ssim: SsimParams::default(),
            clamp_eps: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::invalid(format!(
                "cutoff must lie in (0, 1), got {}",
                self.cutoff
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 1.0) {
            return Err(Error::invalid("clamp_eps must lie in (0, 1)"));
        }
        self.ssim.validate()
    }
}
