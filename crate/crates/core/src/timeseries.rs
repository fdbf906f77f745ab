//! Temporal pre-whitening and diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::check_finite;
use crate::panel::SpatialPanel;

/// Relative size of a QR pivot below which the design is rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares AR(p) fit with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub order: usize,
    /// `beta_0` (intercept) followed by the lag coefficients `beta_1..beta_p`.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Residuals for time points `p+1..T`.
    pub residuals: Vec<f64>,
    pub region_label: Option<String>,
}

/// Fits `x_t = b0 + b1 x_{t-1} + ... + bp x_{t-p} + e_t` by QR least squares.
pub fn fit_ar(series: &[f64], order: usize) -> Result<ArFit> {
    let t = series.len();
    if t <= 2 * order + 2 {
        return Err(Error::ShortSeries { len: t, order });
    }
    check_finite(series)?;
    let n = t - order;
    let k = order + 1;
    let design = DMatrix::from_fn(n, k, |row, col| if col == 0 { 1.0 } else { series[order + row - col] });
    let y = DVector::from_iterator(n, series[order..].iter().copied());

    let qr = design.clone().qr();
    let r = qr.r();
    let col_norms: Vec<f64> = (0..k).map(|j| design.column(j).norm()).collect();
    for j in 0..k {
        if r[(j, j)].abs() <= RANK_TOL * col_norms[j].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient(format!(
                "AR({order}) design column {j} is collinear with earlier columns"
            )));
        }
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let residuals: Vec<f64> = (&y - &design * &beta).iter().copied().collect();

    let dof = (n - k) as f64;
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / dof;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let std_errors = (0..k)
        .map(|j| (sigma2 * r_inv.row(j).iter().map(|v| v * v).sum::<f64>()).sqrt())
        .collect();

    Ok(ArFit {
        order,
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals,
        region_label: None,
    })
}

/// Column-wise AR(p) residuals as a `(T - p) x R` panel.
pub fn residual_panel(panel: &SpatialPanel, order: usize) -> Result<SpatialPanel> {
    let fits = ar_fits(panel, order)?;
    let columns = fits.into_iter().map(|f| f.residuals).collect();
    SpatialPanel::from_columns(columns, Some(panel.labels().to_vec()))
}

/// Per-region AR(p) fits, labelled by region.
pub fn ar_fits(panel: &SpatialPanel, order: usize) -> Result<Vec<ArFit>> {
    (0..panel.regions())
        .into_par_iter()
        .map(|i| {
            let label = &panel.labels()[i];
            let mut fit = fit_ar(panel.column(i), order).map_err(|e| e.in_region(label))?;
            fit.region_label = Some(label.clone());
            Ok(fit)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    /// Autocorrelations at lags `0..=max_lag`.
    pub values: Vec<f64>,
    /// Two-sided 95% band `1.96 / sqrt(T)`.
    pub threshold: f64,
}

impl Acf {
    /// Lags `1..` whose autocorrelation lies inside the band.
    pub fn fraction_within(&self) -> f64 {
        let lags = &self.values[1..];
        if lags.is_empty() {
            return 1.0;
        }
        lags.iter().filter(|v| v.abs() < self.threshold).count() as f64 / lags.len() as f64
    }
}

/// Sample autocorrelation normalized by the lag-0 autocovariance.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Acf> {
    let t = series.len();
    if max_lag >= t {
        return Err(Error::Lag { max_lag, len: t });
    }
    check_finite(series)?;
    let mean = series.iter().sum::<f64>() / t as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if c0 == 0.0 {
        return Err(Error::Degenerate("constant series has no autocorrelation".into()));
    }
    let values = (0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centered[..t - k]
                    .iter()
                    .zip(&centered[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / c0
            }
        })
        .collect();
    Ok(Acf {
        values,
        threshold: 1.96 / (t as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` divisor).
    pub sd: f64,
    /// `m3 / m2^{3/2}` with central moments `m_k`.
    pub skewness: f64,
    /// `m4 / m2^2`; a normal sample gives about 3.
    pub kurtosis: f64,
    pub n: usize,
}

pub fn moments(samples: &[f64]) -> Result<Moments> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::SampleSize { needed: 4, got: n });
    }
    check_finite(samples)?;
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    if m2 == 0.0 {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let sd = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    Ok(Moments {
        mean,
        sd,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ReferenceDistribution;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        let d = ReferenceDistribution::standard_normal();
        let mut rng = stream_rng(seed, Stream::Panel, 0);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn exact_recursion_is_recovered() {
        let mut x = vec![1.0];
        for _ in 1..30 {
            let last = *x.last().unwrap();
            x.push(0.5 * last);
        }
        let fit = fit_ar(&x, 1).unwrap();
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-10);
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
        assert_eq!(fit.residuals.len(), 29);
    }

    #[test]
    fn constant_series_is_rank_deficient() {
        assert!(matches!(fit_ar(&[3.0; 20], 2), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn short_series() {
        assert!(matches!(
            fit_ar(&[1.0, 2.0, 4.0, 3.0, 5.0, 6.0, 2.0, 1.0], 3),
            Err(Error::ShortSeries { len: 8, order: 3 })
        ));
        assert!(fit_ar(&white_noise(9, 1), 3).is_ok());
    }

    #[test]
    fn ar3_coefficients_within_standard_errors() {
        let truth = [0.4, 0.2, 0.1];
        let e = white_noise(600, 31);
        let mut x = vec![0.0; 600];
        for t in 0..600 {
            let mut v = e[t];
            for (k, b) in truth.iter().enumerate() {
                if t > k {
                    v += b * x[t - k - 1];
                }
            }
            x[t] = v;
        }
        // Drop burn-in.
        let fit = fit_ar(&x[100..], 3).unwrap();
        for (k, b) in truth.iter().enumerate() {
            let est = fit.coefficients[k + 1];
            let se = fit.std_errors[k + 1];
            assert!((est - b).abs() < 3.0 * se, "lag {}: {est} vs {b} (se {se})", k + 1);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let x = white_noise(80, 2);
        let p = 3;
        let fit = fit_ar(&x, p).unwrap();
        let mean: f64 = fit.residuals.iter().sum::<f64>() / fit.residuals.len() as f64;
        assert!(mean.abs() < 1e-8);
        let scale: f64 = fit.residuals.iter().map(|e| e * e).sum::<f64>().sqrt();
        for lag in 1..=p {
            let dot: f64 = fit.residuals.iter().enumerate().map(|(i, e)| e * x[p + i - lag]).sum();
            let norm: f64 = (0..fit.residuals.len())
                .map(|i| x[p + i - lag].powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dot.abs() < 1e-8 * scale * norm, "lag {lag}: {dot}");
        }
    }

    #[test]
    fn residual_panel_shapes_and_errors() {
        let cols = vec![white_noise(20, 1), white_noise(20, 2), white_noise(20, 3)];
        let panel = SpatialPanel::from_columns(cols, None).unwrap();
        let res = residual_panel(&panel, 3).unwrap();
        assert_eq!(res.times(), 17);
        assert_eq!(res.regions(), 3);

        let short = SpatialPanel::from_columns(vec![white_noise(7, 1), white_noise(7, 2)], None).unwrap();
        match residual_panel(&short, 3) {
            Err(e @ Error::InRegion { .. }) => assert_eq!(e.category(), "short_series_error"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn acf_examples() {
        let x = white_noise(400, 12);
        let a = acf(&x, 20).unwrap();
        assert_eq!(a.values[0], 1.0);
        assert!((a.threshold - 0.098).abs() < 1e-3);
        assert!(a.fraction_within() >= 0.95, "{}", a.fraction_within());

        let alt: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = acf(&alt, 1).unwrap();
        assert!((a.values[1] + 1.0).abs() < 0.02);

        assert!(matches!(acf(&x[..5], 5), Err(Error::Lag { .. })));
    }

    #[test]
    fn moment_examples() {
        let m = moments(&[-1.0, 1.0, -1.0, 1.0]).unwrap();
        assert_eq!(m.skewness, 0.0);
        assert_eq!(m.kurtosis, 1.0);
        let m = moments(&white_noise(100_000, 4)).unwrap();
        assert!((2.9..=3.1).contains(&m.kurtosis), "{}", m.kurtosis);
        assert!(matches!(moments(&[2.0; 10]), Err(Error::Degenerate(_))));
        assert!(matches!(moments(&[1.0, 2.0, 3.0]), Err(Error::SampleSize { .. })));
    }

    proptest! {
        #[test]
        fn acf_is_bounded(x in prop::collection::vec(-50.0f64..50.0, 3..60)) {
            if let Ok(a) = acf(&x, x.len() - 1) {
                prop_assert!(a.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
            }
        }
    }
}
