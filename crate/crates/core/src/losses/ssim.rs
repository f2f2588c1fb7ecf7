//! Gaussian-window SSIM with reflective borders, plus its gradient with
//! respect to the second image.
//!
//! Local statistics are separable Gaussian blurs of `a`, `b`, `a^2`, `b^2`
//! and `ab`. Borders use reflection without edge repetition
//! (`d c b | a b c d | c b a`), so the window radius must be smaller than
//! both image dimensions.

use ndarray::{s, Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::types::{DepthMap, SsimParams};

/// Normalized 1-D Gaussian taps of length `window`.
pub fn gaussian_window(window: usize, sigma: f64) -> Vec<f64> {
    let r = (window / 2) as f64;
    let taps: Vec<f64> = (0..window)
        .map(|i| {
            let x = i as f64 - r;
            (-0.5 * (x / sigma).powi(2)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

fn check_window(prm: &SsimParams, h: usize, w: usize) -> Result<()> {
    prm.validate()?;
    let r = prm.window / 2;
    if r >= h || r >= w {
        return Err(Error::invalid(format!(
            "SSIM window {} too large for a {h}x{w} image",
            prm.window
        )));
    }
    Ok(())
}

fn blur(img: ArrayView2<'_, f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let r = (taps.len() / 2) as isize;
    let mut horiz = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * img[[y, reflect(x as isize + k as isize - r, w)]];
            }
            horiz[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let src = reflect(y as isize + k as isize - r, h);
            for x in 0..w {
                out[[y, x]] += t * horiz[[src, x]];
            }
        }
    }
    out
}

/// Transpose of [`blur`]: scatters each output's sensitivity back onto the
/// input pixels that fed it, reflections included.
fn blur_adjoint(grad: ArrayView2<'_, f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = grad.dim();
    let r = (taps.len() / 2) as isize;
    let mut vert = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let dst = reflect(y as isize + k as isize - r, h);
            for x in 0..w {
                vert[[dst, x]] += t * grad[[y, x]];
            }
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let g = vert[[y, x]];
            for (k, t) in taps.iter().enumerate() {
                out[[y, reflect(x as isize + k as isize - r, w)]] += t * g;
            }
        }
    }
    out
}

struct LocalStats {
    mu_a: Array2<f64>,
    mu_b: Array2<f64>,
    e_aa: Array2<f64>,
    e_bb: Array2<f64>,
    e_ab: Array2<f64>,
}

impl LocalStats {
    fn new(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, taps: &[f64]) -> Self {
        LocalStats {
            mu_a: blur(a, taps),
            mu_b: blur(b, taps),
            e_aa: blur((&a * &a).view(), taps),
            e_bb: blur((&b * &b).view(), taps),
            e_ab: blur((&a * &b).view(), taps),
        }
    }
}

/// SSIM index map of two equally sized arrays.
pub fn ssim_map(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, prm: &SsimParams) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    check_window(prm, h, w)?;
    let taps = gaussian_window(prm.window, prm.window_sigma);
    let st = LocalStats::new(a, b, &taps);
    let mut map = Array2::<f64>::zeros((h, w));
    Zip::from(&mut map)
        .and(&st.mu_a)
        .and(&st.mu_b)
        .and(&st.e_aa)
        .and(&st.e_bb)
        .and(&st.e_ab)
        .for_each(|out, &ma, &mb, &eaa, &ebb, &eab| {
            *out = index(ma, mb, eaa, ebb, eab, prm.c1, prm.c2);
        });
    Ok(map)
}

#[inline]
fn index(ma: f64, mb: f64, eaa: f64, ebb: f64, eab: f64, c1: f64, c2: f64) -> f64 {
    let num = (2.0 * ma * mb + c1) * (2.0 * (eab - ma * mb) + c2);
    let den = (ma * ma + mb * mb + c1) * ((eaa - ma * ma) + (ebb - mb * mb) + c2);
    num / den
}

/// Mean SSIM of two arrays.
pub(crate) fn ssim_arrays(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, prm: &SsimParams) -> Result<f64> {
    let map = ssim_map(a, b, prm)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Mean SSIM of two fully valid depth maps.
pub fn ssim(a: &DepthMap, b: &DepthMap, prm: &SsimParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    require_valid_rows(a, 0..a.height())?;
    require_valid_rows(b, 0..b.height())?;
    ssim_arrays(a.values().view(), b.values().view(), prm)
}

pub(crate) fn require_valid_rows(dm: &DepthMap, rows: std::ops::Range<usize>) -> Result<()> {
    for row in rows {
        for col in 0..dm.width() {
            if !dm.is_valid(row, col) {
                return Err(Error::InvalidDepth {
                    value: dm.get(row, col),
                    row,
                    col,
                });
            }
        }
    }
    Ok(())
}

/// Mean SSIM and its gradient with respect to every pixel of `b`.
pub fn ssim_with_grad(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    prm: &SsimParams,
) -> Result<(f64, Array2<f64>)> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    check_window(prm, h, w)?;
    let taps = gaussian_window(prm.window, prm.window_sigma);
    let st = LocalStats::new(a, b, &taps);
    let n = (h * w) as f64;
    let (c1, c2) = (prm.c1, prm.c2);

    let mut total = 0.0;
    // Sensitivities of the mean index to mu_b, E[b^2] and E[ab] at every window.
    let mut g_mu = Array2::<f64>::zeros((h, w));
    let mut g_bb = Array2::<f64>::zeros((h, w));
    let mut g_ab = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let (ma, mb) = (st.mu_a[[y, x]], st.mu_b[[y, x]]);
            let a1 = 2.0 * ma * mb + c1;
            let a2 = 2.0 * (st.e_ab[[y, x]] - ma * mb) + c2;
            let b1 = ma * ma + mb * mb + c1;
            let b2 = (st.e_aa[[y, x]] - ma * ma) + (st.e_bb[[y, x]] - mb * mb) + c2;
            let den = b1 * b2;
            let s = a1 * a2 / den;
            total += s;
            g_mu[[y, x]] = ((2.0 * ma * a2 - 2.0 * ma * a1) - s * (2.0 * mb * b2 - 2.0 * mb * b1)) / (den * n);
            g_bb[[y, x]] = -s * b1 / (den * n);
            g_ab[[y, x]] = 2.0 * a1 / (den * n);
        }
    }
    let back_mu = blur_adjoint(g_mu.view(), &taps);
    let back_bb = blur_adjoint(g_bb.view(), &taps);
    let back_ab = blur_adjoint(g_ab.view(), &taps);
    let mut grad = Array2::<f64>::zeros((h, w));
    Zip::from(&mut grad)
        .and(&back_mu)
        .and(&back_bb)
        .and(&back_ab)
        .and(a)
        .and(b)
        .for_each(|g, &gm, &gbb, &gab, &av, &bv| {
            *g = gm + 2.0 * bv * gbb + av * gab;
        });
    Ok((total / n, grad))
}

/// First and one-past-last row holding any `true` entry.
pub(crate) fn mask_row_span(mask: &Array2<bool>) -> Option<(usize, usize)> {
    let rows: Vec<usize> = (0..mask.nrows())
        .filter(|&r| mask.slice(s![r, ..]).iter().any(|&v| v))
        .collect();
    Some((*rows.first()?, *rows.last()? + 1))
}
