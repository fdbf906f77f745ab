//! Null distributions of `T * S~_B` under spatial pairwise independence.
//!
//! Two routes are provided: direct Monte Carlo over i.i.d. panels, and the
//! weighted chi-square limit law driven by the eigenvalues of the population
//! kernel. Per draw and per region pair `(i, j)` the limit law contributes
//!
//! ```text
//! (w_ij + w_ji) * sum_{k,l} lam_k^(i) lam_l^(j) (Z_{ik,jl}^2 - 1)
//!     / sqrt( sum_k (lam_k^(i))^2 * sum_l (lam_l^(j))^2 )
//! ```
//!
//! and the pair contributions are summed and divided by `S0`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{kernel_unchecked, ReferenceDistribution};
use crate::error::{Error, Result};
use crate::models::noise_panel;
use crate::rng::{stream_rng, Stream};
use crate::statistic::sb_value;
use crate::weights::ProximityMatrix;

pub const DEFAULT_EIGENVALUES: usize = 100;
pub const DEFAULT_GRID_SIZE: usize = 2000;
pub const DEFAULT_REPS: usize = 10_000;

/// Relative tolerance of the trace and square-trace checks.
pub const TRACE_TOLERANCE: f64 = 0.02;
/// Monte Carlo sample size for `E[h_F(Z1, Z2)^2]`.
pub const KERNEL_MOMENT_SAMPLES: usize = 1_000_000;
const KERNEL_MOMENT_SEED: u64 = 0x6b65_726e_656c_5f32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Nystrom,
    /// Supplied directly by the caller.
    Explicit,
}

/// Leading eigenvalues of a population kernel operator, ordered by magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub distribution: Option<ReferenceDistribution>,
    pub method: SpectrumMethod,
    pub grid_size: usize,
}

impl EigenSpectrum {
    pub fn explicit(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter("spectrum needs at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite eigenvalue".into()));
        }
        let mut eigenvalues = eigenvalues;
        sort_by_magnitude(&mut eigenvalues);
        Ok(EigenSpectrum {
            eigenvalues,
            distribution: None,
            method: SpectrumMethod::Explicit,
            grid_size: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn square_trace(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l * l).sum()
    }
}

fn sort_by_magnitude(v: &mut [f64]) {
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
}

/// Every eigenvalue of the `m`-point Nystrom discretization, largest magnitude first.
///
/// Nodes sit at the quantiles `(a + 1/2) / m`, each carrying mass `1/m`.
pub fn nystrom_spectrum(dist: &ReferenceDistribution, grid_size: usize) -> Result<Vec<f64>> {
    dist.validate()?;
    if grid_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid size must be at least 2, got {grid_size}"
        )));
    }
    let m = grid_size as f64;
    let nodes: Vec<f64> = (0..grid_size).map(|a| dist.quantile((a as f64 + 0.5) / m)).collect();
    let g: Vec<f64> = nodes.iter().map(|&x| dist.mean_abs_deviation_at(x)).collect();
    let gf = dist.mean_difference();
    let matrix = DMatrix::from_fn(grid_size, grid_size, |a, b| {
        -0.5 * ((nodes[a] - nodes[b]).abs() - g[a] - g[b] + gf) / m
    });
    let mut eig: Vec<f64> = matrix.symmetric_eigenvalues().iter().copied().collect();
    sort_by_magnitude(&mut eig);
    Ok(eig)
}

/// Monte Carlo estimate of `E[h_F(Z1, Z2)^2]` for i.i.d. `Z1, Z2 ~ F`.
pub fn kernel_square_mean(dist: &ReferenceDistribution, samples: usize, seed: u64) -> Result<f64> {
    dist.validate()?;
    const CHUNK: usize = 50_000;
    let gf = dist.mean_difference();
    let chunks = samples.div_ceil(CHUNK);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, Stream::KernelMoments, c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            (0..n)
                .map(|_| {
                    let h = kernel_unchecked(dist, dist.sample(&mut rng), dist.sample(&mut rng), gf);
                    h * h
                })
                .sum::<f64>()
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / samples as f64)
}

/// Leading `k` eigenvalues of `h_F` on an `m`-point grid, with trace checks.
///
/// Fails with [`Error::Convergence`] when the retained eigenvalues miss
/// `g(F)/2` or `E[h_F^2]` by more than [`TRACE_TOLERANCE`].
pub fn nystrom_eigenvalues(dist: &ReferenceDistribution, k: usize, grid_size: usize) -> Result<EigenSpectrum> {
    if k == 0 || k > grid_size {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= K <= grid size, got K = {k}, grid = {grid_size}"
        )));
    }
    let mut eigenvalues = nystrom_spectrum(dist, grid_size)?;
    eigenvalues.truncate(k);
    let spectrum = EigenSpectrum {
        eigenvalues,
        distribution: Some(*dist),
        method: SpectrumMethod::Nystrom,
        grid_size,
    };

    let trace_target = 0.5 * dist.mean_difference();
    let trace = spectrum.trace();
    if ((trace - trace_target) / trace_target).abs() > TRACE_TOLERANCE {
        return Err(Error::Convergence(format!(
            "{dist}: sum of {k} eigenvalues {trace:.6} vs g(F)/2 = {trace_target:.6}"
        )));
    }
    let square_target = kernel_square_mean(dist, KERNEL_MOMENT_SAMPLES, KERNEL_MOMENT_SEED)?;
    let square = spectrum.square_trace();
    if ((square - square_target) / square_target).abs() > TRACE_TOLERANCE {
        return Err(Error::Convergence(format!(
            "{dist}: sum of squared eigenvalues {square:.6} vs E[h^2] = {square_target:.6}"
        )));
    }
    Ok(spectrum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMethod {
    MonteCarlo,
    AsymptoticEigen,
}

impl std::str::FromStr for NullMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" | "monte-carlo" | "monte_carlo" => Ok(NullMethod::MonteCarlo),
            "asym" | "asymptotic" | "asymptotic_eigen" => Ok(NullMethod::AsymptoticEigen),
            _ => Err(Error::InvalidParameter(format!("unknown null method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullMeta {
    pub regions: usize,
    /// Series length (Monte Carlo only).
    pub times: Option<usize>,
    /// Eigenvalues per region (asymptotic only).
    pub eigenvalues: Option<usize>,
    pub distribution: Option<ReferenceDistribution>,
    pub seed: u64,
}

/// Draws from the law of `T * S~_B` under the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub samples: Vec<f64>,
    pub method: NullMethod,
    pub meta: NullMeta,
}

impl NullDistribution {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Samples the eigenvalue-truncated limit law of `T * S~_B`.
///
/// Identical spectra use the common-normalizer form with precomputed
/// eigenvalue products; otherwise each pair is normalized separately.
pub fn asymptotic_null_sample(
    spectra: &[EigenSpectrum],
    w: &ProximityMatrix,
    draws: usize,
    seed: u64,
) -> Result<NullDistribution> {
    let common = spectra.windows(2).all(|p| p[0].eigenvalues == p[1].eigenvalues);
    asymptotic_sample_impl(spectra, w, draws, seed, common)
}

/// [`asymptotic_null_sample`] always taking the per-pair normalization route.
pub fn asymptotic_null_sample_general(
    spectra: &[EigenSpectrum],
    w: &ProximityMatrix,
    draws: usize,
    seed: u64,
) -> Result<NullDistribution> {
    asymptotic_sample_impl(spectra, w, draws, seed, false)
}

fn asymptotic_sample_impl(
    spectra: &[EigenSpectrum],
    w: &ProximityMatrix,
    draws: usize,
    seed: u64,
    common: bool,
) -> Result<NullDistribution> {
    if spectra.len() != w.len() {
        return Err(Error::SpectraMismatch {
            expected: w.len(),
            got: spectra.len(),
        });
    }
    if spectra.iter().any(EigenSpectrum::is_empty) {
        return Err(Error::InvalidParameter("empty eigen spectrum".into()));
    }
    let s0 = w.s0();
    if s0 <= 0.0 {
        return Err(Error::InvalidParameter("weight matrix has no positive weights".into()));
    }
    // Zero-weight pairs contribute nothing and draw nothing.
    let pairs = w.active_pairs();

    let samples: Vec<f64> = if common {
        let lambda = &spectra[0].eigenvalues;
        let norm = spectra[0].square_trace();
        let products: Vec<f64> = lambda.iter().flat_map(|a| lambda.iter().map(move |b| a * b)).collect();
        (0..draws)
            .into_par_iter()
            .map(|d| {
                let mut rng = stream_rng(seed, Stream::Asymptotic, d as u64);
                let mut total = 0.0;
                for &(_, _, wij) in &pairs {
                    total += wij * centered_chi_square_sum(&mut rng, &products);
                }
                total / (s0 * norm)
            })
            .collect()
    } else {
        let norms: Vec<f64> = spectra.iter().map(EigenSpectrum::square_trace).collect();
        (0..draws)
            .into_par_iter()
            .map(|d| {
                let mut rng = stream_rng(seed, Stream::Asymptotic, d as u64);
                let mut total = 0.0;
                for &(i, j, wij) in &pairs {
                    let (li, lj) = (&spectra[i].eigenvalues, &spectra[j].eigenvalues);
                    let mut pair = 0.0;
                    for &a in li {
                        pair += a * centered_chi_square_sum(&mut rng, lj);
                    }
                    total += wij * pair / (norms[i] * norms[j]).sqrt();
                }
                total / s0
            })
            .collect()
    };

    let k = spectra.iter().map(EigenSpectrum::len).max().unwrap_or(0);
    Ok(NullDistribution {
        samples,
        method: NullMethod::AsymptoticEigen,
        meta: NullMeta {
            regions: w.len(),
            times: None,
            eigenvalues: Some(k),
            distribution: spectra[0].distribution.filter(|_| common),
            seed,
        },
    })
}

/// `sum_c weight_c * (Z_c^2 - 1)` with fresh standard normals.
#[inline]
fn centered_chi_square_sum<R: Rng>(rng: &mut R, weights: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &c in weights {
        let z: f64 = StandardNormal.sample(rng);
        acc += c * (z * z - 1.0);
    }
    acc
}

/// Simulates `T * S~_B` over i.i.d. panels drawn from `dist`.
///
/// Replicate `r` uses panel stream `r` of `seed`, so results do not depend
/// on scheduling.
pub fn monte_carlo_null(
    dist: &ReferenceDistribution,
    regions: usize,
    times: usize,
    w: &ProximityMatrix,
    reps: usize,
    seed: u64,
) -> Result<NullDistribution> {
    dist.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if w.len() != regions {
        return Err(Error::DimensionMismatch(format!(
            "R = {regions} but weight matrix is {}x{}",
            w.len(),
            w.len()
        )));
    }
    let tf = times as f64;
    let samples = (0..reps)
        .into_par_iter()
        .map(|r| {
            let panel = noise_panel(dist, times, regions, seed, r as u64)?;
            Ok(tf * sb_value(&panel, w)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NullDistribution {
        samples,
        method: NullMethod::MonteCarlo,
        meta: NullMeta {
            regions,
            times: Some(times),
            eigenvalues: None,
            distribution: Some(*dist),
            seed,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Positive spatial association.
    #[default]
    Greater,
    TwoSided,
}

/// Upper-tail Monte Carlo p-value `(1 + #{s >= observed}) / (N + 1)`.
pub fn p_value(observed_scaled: f64, null: &NullDistribution) -> Result<f64> {
    p_value_with(observed_scaled, null, Alternative::Greater)
}

/// Two-sided values double the smaller add-one tail, capped at 1.
pub fn p_value_with(observed_scaled: f64, null: &NullDistribution, alternative: Alternative) -> Result<f64> {
    if null.is_empty() {
        return Err(Error::EmptyNull);
    }
    if observed_scaled.is_nan() {
        return Err(Error::InvalidParameter("observed statistic is NaN".into()));
    }
    let n = null.len() as f64;
    let upper = null.samples.iter().filter(|&&s| s >= observed_scaled).count() as f64;
    let p_upper = (1.0 + upper) / (n + 1.0);
    Ok(match alternative {
        Alternative::Greater => p_upper,
        Alternative::TwoSided => {
            let lower = null.samples.iter().filter(|&&s| s <= observed_scaled).count() as f64;
            let p_lower = (1.0 + lower) / (n + 1.0);
            (2.0 * p_upper.min(p_lower)).min(1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_distance, mean, sd};
    use crate::weights::linear_chain;

    fn null_of(samples: Vec<f64>) -> NullDistribution {
        NullDistribution {
            samples,
            method: NullMethod::MonteCarlo,
            meta: NullMeta {
                regions: 2,
                times: Some(3),
                eigenvalues: None,
                distribution: None,
                seed: 0,
            },
        }
    }

    #[test]
    fn p_value_add_one_rule() {
        let null = null_of((0..9999).map(|i| i as f64).collect());
        assert_eq!(p_value(1e9, &null).unwrap(), 1.0 / 10000.0);
        assert_eq!(p_value(-1e300, &null).unwrap(), 1.0);
        let median = p_value(4999.0, &null).unwrap();
        assert!((median - 0.5).abs() <= 1.0 / 9999.0, "{median}");
        assert!(matches!(p_value(0.0, &null_of(vec![])), Err(Error::EmptyNull)));
        let two = p_value_with(1e9, &null, Alternative::TwoSided).unwrap();
        assert_eq!(two, 2.0 / 10000.0);
    }

    #[test]
    fn single_eigenvalue_gives_centered_chi_square() {
        let w = linear_chain(2).unwrap();
        let spectra = vec![EigenSpectrum::explicit(vec![1.0]).unwrap(); 2];
        let null = asymptotic_null_sample(&spectra, &w, 20_000, 4).unwrap();
        let m = mean(&null.samples);
        let v = sd(&null.samples).powi(2);
        // chi-square(1) - 1: mean 0, variance 2
        assert!(m.abs() < 3.0 * (2.0f64 / 20_000.0).sqrt(), "{m}");
        assert!((v - 2.0).abs() < 0.15, "{v}");
        // Each draw is Z^2 - 1, so bounded below by -1.
        assert!(null.samples.iter().all(|&s| s >= -1.0));
    }

    #[test]
    fn common_and_general_forms_agree() {
        let w = linear_chain(5).unwrap().row_standardize().unwrap();
        let lam = EigenSpectrum::explicit(vec![0.3, 0.1, 0.05, 0.02]).unwrap();
        let spectra = vec![lam; 5];
        let a = asymptotic_null_sample(&spectra, &w, 10_000, 1).unwrap();
        let b = asymptotic_null_sample_general(&spectra, &w, 10_000, 2).unwrap();
        let d = ks_distance(&a.samples, &b.samples);
        assert!(d < 0.02, "KS {d}");
        // Same seed: the two forms agree draw by draw up to rounding.
        let c = asymptotic_null_sample_general(&spectra, &w, 1000, 1).unwrap();
        for (x, y) in a.samples.iter().zip(&c.samples) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn per_pair_summand_is_centered() {
        let w = linear_chain(2).unwrap();
        let spectra = vec![
            EigenSpectrum::explicit(vec![0.4, 0.2, 0.1]).unwrap(),
            EigenSpectrum::explicit(vec![0.5, -0.05]).unwrap(),
        ];
        let null = asymptotic_null_sample(&spectra, &w, 10_000, 9).unwrap();
        let m = mean(&null.samples);
        let se = sd(&null.samples) / 100.0;
        assert!(m.abs() < 3.0 * se, "{m} vs {se}");
    }

    #[test]
    fn spectra_count_must_match() {
        let w = linear_chain(3).unwrap();
        let spectra = vec![EigenSpectrum::explicit(vec![1.0]).unwrap(); 2];
        assert!(matches!(
            asymptotic_null_sample(&spectra, &w, 10, 0),
            Err(Error::SpectraMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let w = linear_chain(4).unwrap().row_standardize().unwrap();
        let d = ReferenceDistribution::standard_normal();
        let a = monte_carlo_null(&d, 4, 20, &w, 50, 17).unwrap();
        let b = monte_carlo_null(&d, 4, 20, &w, 50, 17).unwrap();
        assert_eq!(a, b);
        let one = monte_carlo_null(&d, 4, 20, &w, 1, 17).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.samples[0].is_finite());
        assert_eq!(one.samples[0], a.samples[0]);
    }

    #[test]
    fn small_grid_uniform_spectrum() {
        // The uniform kernel is the Brownian bridge covariance, eigenvalues 1/(pi k)^2.
        let eig = nystrom_spectrum(&ReferenceDistribution::standard_uniform(), 400).unwrap();
        for (k, &l) in eig.iter().take(5).enumerate() {
            let exact = 1.0 / (std::f64::consts::PI * (k + 1) as f64).powi(2);
            assert!((l - exact).abs() / exact < 0.01, "k={k}: {l} vs {exact}");
        }
        let total: f64 = eig.iter().sum();
        assert!((total - 1.0 / 6.0).abs() < 1e-5, "{total}");
    }

    #[test]
    fn explicit_spectrum_validation() {
        assert!(EigenSpectrum::explicit(vec![]).is_err());
        assert!(EigenSpectrum::explicit(vec![f64::NAN]).is_err());
        let s = EigenSpectrum::explicit(vec![0.1, -0.5, 0.3]).unwrap();
        assert_eq!(s.eigenvalues, vec![-0.5, 0.3, 0.1]);
    }

    #[test]
    fn truncation_argument_checks() {
        let d = ReferenceDistribution::standard_normal();
        assert!(matches!(
            nystrom_eigenvalues(&d, 0, 10),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            nystrom_eigenvalues(&d, 11, 10),
            Err(Error::InvalidParameter(_))
        ));
        // Too few eigenvalues cannot carry the trace.
        assert!(matches!(nystrom_eigenvalues(&d, 2, 200), Err(Error::Convergence(_))));
    }
}
