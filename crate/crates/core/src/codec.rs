//! Depth map to depth probability map encoding, and the weighted-center decode.
//!
//! Each depth value is spread over the bin grid by integrating a Gaussian of
//! width `sigma` centered on it over every bin. Bins whose mass falls below
//! the cutoff are removed, and the survivors are normalized either by a
//! softmax over the raw masses or by dividing by their sum.

use std::f64::consts::SQRT_2;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::types::{BinPartition, DepthMap, Dpm, LossConfig, NormMode, SIMPLEX_TOLERANCE};

/// Beyond this many standard deviations `erfc` underflows to exactly zero,
/// so bins farther away carry no mass and are not evaluated.
const NEGLIGIBLE_SIGMAS: f64 = 40.0;

/// Probability that `X ~ N(gt, sigma^2)` lands in `[lo, hi]`.
///
/// Uses the tail on the side of `gt` the interval lies on, so masses deep in
/// the tails keep full relative precision instead of cancelling near 1.
pub fn gaussian_bin_mass(gt: f64, sigma: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(gt.is_finite() && sigma.is_finite() && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("gaussian_bin_mass requires finite inputs"));
    }
    if sigma <= 0.0 {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if lo >= hi {
        return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
    }
    Ok(mass_unchecked(gt, sigma, lo, hi))
}

#[inline]
fn mass_unchecked(gt: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let scale = sigma * SQRT_2;
    // P(X > x) and P(X < x)
    let upper = |x: f64| 0.5 * erfc((x - gt) / scale);
    let lower = |x: f64| 0.5 * erfc((gt - x) / scale);
    let m = if lo >= gt {
        upper(lo) - upper(hi)
    } else if hi <= gt {
        lower(hi) - lower(lo)
    } else {
        1.0 - upper(hi) - lower(lo)
    };
    m.clamp(0.0, 1.0)
}

/// Raw (unnormalized) Gaussian mass of every bin of `p` for a depth `gt`.
pub fn bin_masses(gt: f64, sigma: f64, p: &BinPartition) -> Vec<f64> {
    let edges = p.edges();
    let reach = NEGLIGIBLE_SIGMAS * sigma;
    (0..p.k())
        .map(|i| {
            let (lo, hi) = (edges[i], edges[i + 1]);
            if lo - gt > reach || gt - hi > reach {
                0.0
            } else {
                mass_unchecked(gt, sigma, lo, hi)
            }
        })
        .collect()
}

/// Soft label for a single depth value.
pub fn encode_pixel(gt: f64, p: &BinPartition, cfg: &LossConfig) -> Result<Vec<f64>> {
    if !gt.is_finite() || !p.contains(gt) {
        return Err(Error::OutOfRange {
            depth: gt,
            min: p.min_depth(),
            max: p.max_depth(),
        });
    }
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be > 0, got {}", cfg.sigma)));
    }
    let masses = bin_masses(gt, cfg.sigma, p);
    let mut keep: Vec<bool> = masses.iter().map(|&m| m >= cfg.cutoff).collect();
    if !keep.iter().any(|&k| k) {
        keep[p.bin_index_of(gt)?] = true;
    }
    Ok(normalize_survivors(&masses, &keep, cfg.norm_mode))
}

fn normalize_survivors(masses: &[f64], keep: &[bool], mode: NormMode) -> Vec<f64> {
    let weights: Vec<f64> = masses
        .iter()
        .zip(keep)
        .map(|(&m, &k)| match (k, mode) {
            (false, _) => 0.0,
            (true, NormMode::MaskedSoftmax) => m.exp(),
            (true, NormMode::Renormalize) => m,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        // Renormalize with every survivor at zero mass: only reachable through
        // the forced nearest bin, which then takes all the probability.
        let n = keep.iter().filter(|&&k| k).count() as f64;
        keep.iter().map(|&k| if k { 1.0 / n } else { 0.0 }).collect()
    }
}

/// Counters produced alongside an encoded map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeStats {
    pub pixels: usize,
    pub valid: usize,
    /// Valid pixels whose depth was clamped into the partition range.
    pub clamped: usize,
}

/// Encodes a whole map. Invalid pixels get the uniform distribution and stay
/// flagged invalid in the returned map's mask.
pub fn encode(dm: &DepthMap, p: &BinPartition, cfg: &LossConfig) -> Result<Dpm> {
    encode_with_stats(dm, p, cfg).map(|(dpm, _)| dpm)
}

pub fn encode_with_stats(
    dm: &DepthMap,
    p: &BinPartition,
    cfg: &LossConfig,
) -> Result<(Dpm, EncodeStats)> {
    cfg.validate()?;
    let (h, w) = dm.dim();
    let k = p.k();
    let uniform = 1.0 / k as f64;
    let mut probs = Array3::<f64>::zeros((h, w, k));
    let clamped: usize = probs
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .map(|(row, mut plane)| -> Result<usize> {
            let mut clamped = 0;
            for col in 0..w {
                let mut lane = plane.index_axis_mut(Axis(0), col);
                if !dm.is_valid(row, col) {
                    lane.fill(uniform);
                    continue;
                }
                let d = dm.get(row, col);
                let inside = d.clamp(p.min_depth(), p.max_depth());
                if inside != d {
                    clamped += 1;
                }
                let q = encode_pixel(inside, p, cfg)?;
                for (dst, src) in lane.iter_mut().zip(q) {
                    *dst = src;
                }
            }
            Ok(clamped)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    if clamped > 0 {
        log::warn!("{clamped} valid depth values outside [{}, {}] m were clamped", p.min_depth(), p.max_depth());
    }
    let stats = EncodeStats {
        pixels: h * w,
        valid: dm.valid_count(),
        clamped,
    };
    Ok((Dpm::from_parts(probs, p.clone(), dm.valid().clone()), stats))
}

/// Weighted sum of bin centers.
pub fn decode_pixel(q: &[f64], p: &BinPartition) -> Result<f64> {
    if q.len() != p.k() {
        return Err(Error::ShapeMismatch(format!(
            "probability vector has {} entries, partition has {} bins",
            q.len(),
            p.k()
        )));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::NotNormalized {
            sum,
            pixel: None,
            tolerance: SIMPLEX_TOLERANCE,
        });
    }
    Ok(weighted_centers(q.iter().copied(), p))
}

#[inline]
pub(crate) fn weighted_centers(q: impl Iterator<Item = f64>, p: &BinPartition) -> f64 {
    let d: f64 = q.zip(p.centers()).map(|(qi, c)| qi * c).sum();
    d.clamp(p.min_depth(), p.max_depth())
}

/// Decodes every pixel. The result is fully valid.
pub fn decode(dpm: &Dpm) -> DepthMap {
    let p = dpm.partition();
    let (h, w, _) = dpm.probs().dim();
    let mut values = Array2::<f64>::zeros((h, w));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(row, mut out)| {
            for col in 0..w {
                out[col] = weighted_centers(dpm.pixel(row, col).iter().copied(), p);
            }
        });
    DepthMap::dense(values).expect("decoded depths lie inside the partition range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> BinPartition {
        BinPartition::uniform(257, 0.0, 80.0).unwrap()
    }

    fn renorm_cfg() -> LossConfig {
        LossConfig {
            norm_mode: NormMode::Renormalize,
            ..LossConfig::default()
        }
    }

    #[test]
    fn far_tail_is_zero() {
        let m = gaussian_bin_mass(40.0, 0.8, 0.0, 0.31128).unwrap();
        assert!(m < 1e-300);
    }

    #[test]
    fn eight_sigma_holds_all_mass() {
        for gt in [0.0, 3.7, 40.0, 79.9] {
            let m = gaussian_bin_mass(gt, 0.8, gt - 6.4, gt + 6.4).unwrap();
            assert!((m - 1.0).abs() < 1e-14, "{m}");
        }
    }

    #[test]
    fn rejects_bad_mass_inputs() {
        assert!(gaussian_bin_mass(f64::NAN, 0.8, 0.0, 1.0).is_err());
        assert!(gaussian_bin_mass(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(gaussian_bin_mass(1.0, 0.8, 1.0, 1.0).is_err());
        assert!(gaussian_bin_mass(1.0, 0.8, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn tiny_sigma_is_one_hot() {
        let cfg = LossConfig {
            sigma: 0.01,
            ..renorm_cfg()
        };
        let q = encode_pixel(40.0, &default_grid(), &cfg).unwrap();
        assert!((q[128] - 1.0).abs() < 1e-12);
        let rest: f64 = q.iter().enumerate().filter(|(i, _)| *i != 128).map(|(_, v)| v).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn interior_gaussian_is_symmetric() {
        let q = encode_pixel(40.0, &default_grid(), &renorm_cfg()).unwrap();
        for j in 1..=128 {
            assert!((q[128 - j] - q[128 + j]).abs() < 1e-12, "j={j}");
        }
        assert!((q[128] - 0.154_256_730_962_462).abs() < 1e-12, "{}", q[128]);
    }

    #[test]
    fn cutoff_zeroes_excluded_bins_under_softmax() {
        let q = encode_pixel(40.0, &default_grid(), &LossConfig::default()).unwrap();
        let masses = bin_masses(40.0, 0.8, &default_grid());
        for (qi, mi) in q.iter().zip(&masses) {
            if *mi < 1e-16 {
                assert_eq!(*qi, 0.0);
            } else {
                assert!(*qi > 0.0);
            }
        }
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_bin_when_nothing_survives() {
        // Cutoff above every achievable mass.
        let cfg = LossConfig {
            cutoff: 0.9,
            sigma: 5.0,
            ..renorm_cfg()
        };
        let p = default_grid();
        let q = encode_pixel(12.34, &p, &cfg).unwrap();
        let idx = p.bin_index_of(12.34).unwrap();
        assert_eq!(q[idx], 1.0);
    }

    #[test]
    fn out_of_range_pixel_is_error() {
        assert!(encode_pixel(80.5, &default_grid(), &LossConfig::default()).is_err());
        assert!(encode_pixel(-0.1, &default_grid(), &LossConfig::default()).is_err());
    }

    #[test]
    fn single_pixel_map_matches_pixel_encode() {
        let dm = DepthMap::constant(1, 1, 40.0).unwrap();
        let cfg = LossConfig::default();
        let dpm = encode(&dm, &default_grid(), &cfg).unwrap();
        let q = encode_pixel(40.0, &default_grid(), &cfg).unwrap();
        assert_eq!(dpm.pixel(0, 0).to_vec(), q);
    }

    #[test]
    fn invalid_pixel_is_uniform_and_flagged() {
        let values = Array2::from_shape_vec((2, 2), vec![10.0, 20.0, 30.0, 0.0]).unwrap();
        let valid = Array2::from_shape_vec((2, 2), vec![true, true, true, false]).unwrap();
        let dm = DepthMap::with_mask(values, valid).unwrap();
        let dpm = encode(&dm, &default_grid(), &LossConfig::default()).unwrap();
        assert!(!dpm.valid()[[1, 1]]);
        assert!(dpm.valid()[[0, 0]]);
        for &v in dpm.pixel(1, 1).iter() {
            assert_eq!(v, 1.0 / 257.0);
        }
    }

    #[test]
    fn out_of_range_valid_pixels_are_clamped_and_counted() {
        let values = Array2::from_shape_vec((1, 3), vec![85.0, 40.0, 80.0]).unwrap();
        let dm = DepthMap::dense(values).unwrap();
        let cfg = renorm_cfg();
        let (dpm, stats) = encode_with_stats(&dm, &default_grid(), &cfg).unwrap();
        assert_eq!(stats.clamped, 1);
        assert_eq!(dpm.pixel(0, 0), dpm.pixel(0, 2));
    }

    #[test]
    fn decode_examples() {
        let p = default_grid();
        let mut onehot = vec![0.0; 257];
        onehot[128] = 1.0;
        assert_eq!(decode_pixel(&onehot, &p).unwrap(), 40.0);

        let p2 = BinPartition::uniform(2, 0.0, 2.0).unwrap();
        assert_eq!(decode_pixel(&[0.5, 0.5], &p2).unwrap(), 1.0);

        let q = encode_pixel(40.0, &p, &renorm_cfg()).unwrap();
        assert!((decode_pixel(&q, &p).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn decode_pixel_errors() {
        let p = BinPartition::uniform(2, 0.0, 2.0).unwrap();
        assert!(matches!(decode_pixel(&[1.0], &p), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            decode_pixel(&[0.5, 0.6], &p),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn uniform_dpm_decodes_to_midrange() {
        let p = default_grid();
        let probs = Array3::from_elem((3, 2, 257), 1.0 / 257.0);
        let dpm = Dpm::new(probs, p).unwrap();
        let dm = decode(&dpm);
        for &v in dm.values().iter() {
            assert!((v - 40.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn one_hot_dpm_decodes_to_centers() {
        let p = BinPartition::uniform(16, 0.0, 80.0).unwrap();
        let mut probs = Array3::zeros((2, 3, 16));
        for r in 0..2 {
            for c in 0..3 {
                probs[[r, c, r * 3 + c]] = 1.0;
            }
        }
        let dm = decode(&Dpm::new(probs, p.clone()).unwrap());
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(dm.get(r, c), p.centers()[r * 3 + c]);
            }
        }
    }

    #[test]
    fn decode_is_monotone_in_depth() {
        let p = default_grid();
        for mode in [NormMode::Renormalize, NormMode::MaskedSoftmax] {
            let cfg = LossConfig {
                norm_mode: mode,
                ..LossConfig::default()
            };
            // Softmax weights near a boundary favour the truncated edge bin.
            let margin = if mode == NormMode::MaskedSoftmax { 2.0 * cfg.sigma } else { 0.0 };
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let gt = 80.0 * i as f64 / 999.0;
                if gt < margin || gt > 80.0 - margin {
                    continue;
                }
                let d = decode_pixel(&encode_pixel(gt, &p, &cfg).unwrap(), &p).unwrap();
                assert!(d >= prev - 1e-12, "{mode}: gt={gt} d={d} prev={prev}");
                prev = d;
            }
        }
    }

    #[test]
    fn softmax_decode_dips_at_the_boundary() {
        let p = default_grid();
        let cfg = LossConfig::default();
        let d = |gt: f64| decode_pixel(&encode_pixel(gt, &p, &cfg).unwrap(), &p).unwrap();
        assert!(d(0.08) < d(0.0));
    }
}
