//! Empirical Bergsma kernel, the U-statistic covariance `kappa~` and the
//! correlation `rho~`.
//!
//! For a sample `z_1..z_T` with absolute-difference row means `a_m` and
//! grand mean `b`, the centered kernel is
//!
//! ```text
//! h(m, n) = -1/2 * ( |z_m - z_n| - T/(T-1) * (a_m + a_n - b) )
//! ```
//!
//! and `kappa~(x, y)` averages `hx(m, n) * hy(m, n)` over the strict upper
//! triangle `m < n`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Self-covariances at or below this fraction of the squared mean
/// difference are treated as a constant series.
pub const DEGENERACY_TOL: f64 = 1e-14;

/// Above this length the upper-triangle sum switches to compensated summation.
const COMPENSATED_SUM_THRESHOLD: usize = 10_000;

/// Per-series matrix of empirical kernel values, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenteredKernelMatrix {
    len: usize,
    entries: Vec<f64>,
    mean_abs_difference: f64,
}

impl CenteredKernelMatrix {
    /// Length `T` of the series the matrix was built from.
    pub fn source_len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[m * self.len + n]
    }

    #[inline]
    pub fn row(&self, m: usize) -> &[f64] {
        &self.entries[m * self.len..(m + 1) * self.len]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Grand mean of `|z_k - z_l|` over all ordered pairs, including `k = l`.
    pub fn mean_abs_difference(&self) -> f64 {
        self.mean_abs_difference
    }

    pub fn zeros(len: usize) -> Self {
        CenteredKernelMatrix {
            len,
            entries: vec![0.0; len * len],
            mean_abs_difference: 0.0,
        }
    }

    /// `kappa~` of the series with itself.
    pub fn self_kappa(&self) -> f64 {
        upper_triangle_dot(self, self)
    }

    pub(crate) fn is_degenerate(&self, self_kappa: f64) -> bool {
        self.mean_abs_difference == 0.0
            || self_kappa <= DEGENERACY_TOL * self.mean_abs_difference * self.mean_abs_difference
    }
}

pub(crate) fn check_finite(z: &[f64]) -> Result<()> {
    match z.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Builds the centered kernel matrix of `z` in `O(T^2)`.
pub fn empirical_kernel_matrix(z: &[f64]) -> Result<CenteredKernelMatrix> {
    let t = z.len();
    if t < 2 {
        return Err(Error::Length { needed: 2, got: t });
    }
    check_finite(z)?;

    let mut entries = vec![0.0; t * t];
    let mut row_sums = vec![0.0; t];
    for m in 0..t {
        for n in (m + 1)..t {
            let d = (z[m] - z[n]).abs();
            entries[m * t + n] = d;
            entries[n * t + m] = d;
            row_sums[m] += d;
            row_sums[n] += d;
        }
    }
    let tf = t as f64;
    let row_means: Vec<f64> = row_sums.iter().map(|s| s / tf).collect();
    let grand_mean = row_means.iter().sum::<f64>() / tf;
    let c = tf / (tf - 1.0);

    for m in 0..t {
        for n in m..t {
            let h = -0.5 * (entries[m * t + n] - c * (row_means[m] + row_means[n] - grand_mean));
            entries[m * t + n] = h;
            entries[n * t + m] = h;
        }
    }
    Ok(CenteredKernelMatrix {
        len: t,
        entries,
        mean_abs_difference: grand_mean,
    })
}

/// `kappa~` from two kernel matrices of the same size.
pub fn kappa_tilde(hx: &CenteredKernelMatrix, hy: &CenteredKernelMatrix) -> Result<f64> {
    if hx.len != hy.len {
        return Err(Error::DimensionMismatch(format!(
            "kernel matrices are {0}x{0} and {1}x{1}",
            hx.len, hy.len
        )));
    }
    if hx.len < 2 {
        return Err(Error::Length { needed: 2, got: hx.len });
    }
    Ok(upper_triangle_dot(hx, hy))
}

/// Bergsma correlation estimate `rho~(x, y)`.
pub fn rho_tilde(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "series lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Length {
            needed: 3,
            got: x.len(),
        });
    }
    let hx = empirical_kernel_matrix(x)?;
    let hy = empirical_kernel_matrix(y)?;
    let kxx = hx.self_kappa();
    if hx.is_degenerate(kxx) {
        return Err(Error::DegenerateSeries("x"));
    }
    let kyy = hy.self_kappa();
    if hy.is_degenerate(kyy) {
        return Err(Error::DegenerateSeries("y"));
    }
    Ok(upper_triangle_dot(&hx, &hy) / (kxx * kyy).sqrt())
}

/// Like [`upper_triangle_dot`] but skipping pairs whose `source` indices match,
/// averaged over the pairs kept. Used on bootstrap resamples, where repeated
/// rows would otherwise contribute spurious exact ties.
pub(crate) fn distinct_pair_dot(hx: &CenteredKernelMatrix, hy: &CenteredKernelMatrix, source: &[usize]) -> f64 {
    let t = hx.len;
    let mut acc = NeumaierSum::default();
    let mut kept = 0usize;
    for m in 0..t {
        let (rx, ry) = (hx.row(m), hy.row(m));
        for n in (m + 1)..t {
            if source[m] != source[n] {
                acc.add(rx[n] * ry[n]);
                kept += 1;
            }
        }
    }
    if kept == 0 {
        0.0
    } else {
        acc.total() / kept as f64
    }
}

/// Row-major sum over `m < n` of `hx(m, n) * hy(m, n)`, divided by `T choose 2`.
pub(crate) fn upper_triangle_dot(hx: &CenteredKernelMatrix, hy: &CenteredKernelMatrix) -> f64 {
    let t = hx.len;
    let pairs = (t * (t - 1) / 2) as f64;
    let sum = if t > COMPENSATED_SUM_THRESHOLD {
        let mut acc = NeumaierSum::default();
        for m in 0..t {
            let (rx, ry) = (&hx.row(m)[m + 1..], &hy.row(m)[m + 1..]);
            for (a, b) in rx.iter().zip(ry) {
                acc.add(a * b);
            }
        }
        acc.total()
    } else {
        let mut acc = 0.0;
        for m in 0..t {
            let (rx, ry) = (&hx.row(m)[m + 1..], &hy.row(m)[m + 1..]);
            acc += rx.iter().zip(ry).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    };
    sum / pairs
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}
