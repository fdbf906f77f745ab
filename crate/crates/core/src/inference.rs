//! Hypothesis test, bootstrap interval and pairwise screening.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{std_normal_quantile, ReferenceDistribution};
use crate::error::{Error, Result};
use crate::kernel::rho_tilde;
use crate::null::{
    asymptotic_null_sample, monte_carlo_null, nystrom_eigenvalues, p_value_with, Alternative, NullDistribution,
    NullMeta, NullMethod, DEFAULT_EIGENVALUES, DEFAULT_GRID_SIZE, DEFAULT_REPS,
};
use crate::panel::SpatialPanel;
use crate::rng::{stream_rng, Stream};
use crate::statistic::{sb_statistic, sb_value_resampled, SBResult};
use crate::stats::quantile_sorted;
use crate::weights::ProximityMatrix;

pub const MIN_BOOTSTRAP: usize = 200;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const DEFAULT_SCREEN_SIMS: usize = 10_000;
/// Quantile of the simulated `rho~` null used as the default screening cutoff.
pub const SCREEN_QUANTILE: f64 = 0.95;
/// Attempts allowed per requested bootstrap replicate.
const RESAMPLE_ATTEMPT_FACTOR: usize = 10;

/// Marginal transform applied to every region before testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// Average ranks mapped through the standard normal quantile.
    NormalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub null_method: NullMethod,
    pub reference: ReferenceDistribution,
    pub reps: usize,
    pub eigenvalues: usize,
    pub grid_size: usize,
    /// Bootstrap replicates; `0` skips the interval.
    pub bootstrap: usize,
    pub level: f64,
    pub alternative: Alternative,
    /// Fixed `rho~` cutoff; simulated at the panel's `T` when absent.
    pub screen_cutoff: Option<f64>,
    pub screen_sims: usize,
    pub transform: Transform,
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            null_method: NullMethod::MonteCarlo,
            reference: ReferenceDistribution::standard_normal(),
            reps: DEFAULT_REPS,
            eigenvalues: DEFAULT_EIGENVALUES,
            grid_size: DEFAULT_GRID_SIZE,
            bootstrap: DEFAULT_BOOTSTRAP,
            level: 0.95,
            alternative: Alternative::Greater,
            screen_cutoff: None,
            screen_sims: DEFAULT_SCREEN_SIMS,
            transform: Transform::None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    /// Resamples discarded because some region became constant.
    pub redraws: usize,
    pub method: String,
    pub resampling: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CutoffSource {
    Fixed,
    Simulated { quantile: f64, sims: usize, times: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseScreen {
    pub cutoff: f64,
    pub cutoff_source: CutoffSource,
    /// `flags[i][j]` is set when `i != j` and `rho~_ij > cutoff`.
    pub flags: Vec<Vec<bool>>,
    pub rho: Vec<Vec<f64>>,
}

impl PairwiseScreen {
    /// Flagged pairs `(i, j)` with `i < j`.
    pub fn flagged_pairs(&self) -> Vec<(usize, usize)> {
        let r = self.flags.len();
        (0..r)
            .flat_map(|i| ((i + 1)..r).map(move |j| (i, j)))
            .filter(|&(i, j)| self.flags[i][j])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: SBResult,
    pub p_value: f64,
    pub alternative: Alternative,
    pub null_method: NullMethod,
    pub null_reps: usize,
    pub null_meta: NullMeta,
    pub transform: Transform,
    pub ci: Option<ConfidenceInterval>,
    pub pairwise: Option<PairwiseScreen>,
}

impl TestReport {
    /// One-row table: model, `S~_B`, interval and p-value.
    pub fn table(&self, model: &str) -> String {
        render_table(&[(model, self)])
    }
}

/// Plain-text table with columns Model, S~_B, CI and p-value.
pub fn render_table(rows: &[(&str, &TestReport)]) -> String {
    let header = ["Model", "S~_B", "CI", "p-value"];
    let body: Vec<[String; 4]> = rows
        .iter()
        .map(|(model, r)| {
            let ci = match &r.ci {
                Some(ci) => format!("({:.4}, {:.4})", ci.lower, ci.upper),
                None => "-".to_string(),
            };
            [
                model.to_string(),
                format!("{:.4}", r.statistic.value),
                ci,
                format!("{:.4}", r.p_value),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Replaces each value by `Phi^{-1}((rank - 0.5) / T)`, averaging tied ranks.
pub fn normal_scores(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]));
    let mut scores = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && series[order[end]] == series[order[start]] {
            end += 1;
        }
        // 1-based average rank of the tie block
        let rank = (start + end + 1) as f64 / 2.0;
        let score = std_normal_quantile((rank - 0.5) / n as f64);
        for &k in &order[start..end] {
            scores[k] = score;
        }
        start = end;
    }
    scores
}

pub fn apply_transform(panel: &SpatialPanel, transform: Transform) -> Result<SpatialPanel> {
    match transform {
        Transform::None => Ok(panel.clone()),
        Transform::NormalScores => {
            let cols = panel.columns().map(normal_scores).collect();
            SpatialPanel::from_columns(cols, Some(panel.labels().to_vec()))
        }
    }
}

/// Null distribution of `T * S~_B` matching `options` for the given design.
pub fn build_null(
    options: &TestOptions,
    regions: usize,
    times: usize,
    w: &ProximityMatrix,
) -> Result<NullDistribution> {
    match options.null_method {
        NullMethod::MonteCarlo => monte_carlo_null(&options.reference, regions, times, w, options.reps, options.seed),
        NullMethod::AsymptoticEigen => {
            let spectrum = nystrom_eigenvalues(&options.reference, options.eigenvalues, options.grid_size)?;
            let spectra = vec![spectrum; regions];
            asymptotic_null_sample(&spectra, w, options.reps, options.seed)
        }
    }
}

/// Tests spatial pairwise independence with an upper-tail (or two-sided) p-value.
pub fn test_spatial_independence(
    panel: &SpatialPanel,
    w: &ProximityMatrix,
    options: &TestOptions,
) -> Result<TestReport> {
    validate_options(options)?;
    let null = build_null(options, panel.regions(), panel.times(), w)?;
    test_with_null(panel, w, &null, options)
}

/// [`test_spatial_independence`] against a precomputed null.
pub fn test_with_null(
    panel: &SpatialPanel,
    w: &ProximityMatrix,
    null: &NullDistribution,
    options: &TestOptions,
) -> Result<TestReport> {
    validate_options(options)?;
    let panel = apply_transform(panel, options.transform)?;
    let statistic = sb_statistic(&panel, w)?;
    let p_value = p_value_with(statistic.scaled_value, null, options.alternative)?;
    let ci = if options.bootstrap > 0 {
        Some(bootstrap_ci(&panel, w, options.bootstrap, options.level, options.seed)?)
    } else {
        None
    };
    let pairwise = if options.screen_sims > 0 || options.screen_cutoff.is_some() {
        let (cutoff, source) = match options.screen_cutoff {
            Some(c) => (c, CutoffSource::Fixed),
            None => (
                rho_null_quantile(panel.times(), SCREEN_QUANTILE, options.screen_sims, options.seed)?,
                CutoffSource::Simulated {
                    quantile: SCREEN_QUANTILE,
                    sims: options.screen_sims,
                    times: panel.times(),
                },
            ),
        };
        Some(screen_from_rho(statistic.pair_rho.clone(), cutoff, source))
    } else {
        None
    };
    Ok(TestReport {
        statistic,
        p_value,
        alternative: options.alternative,
        null_method: null.method,
        null_reps: null.len(),
        null_meta: null.meta.clone(),
        transform: options.transform,
        ci,
        pairwise,
    })
}

fn validate_options(options: &TestOptions) -> Result<()> {
    options.reference.validate()?;
    if options.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if options.bootstrap > 0 && options.bootstrap < MIN_BOOTSTRAP {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {}",
            options.bootstrap
        )));
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level must lie in (0, 1), got {}",
            options.level
        )));
    }
    Ok(())
}

/// Percentile bootstrap interval for `S~_B`, resampling time rows jointly.
///
/// Each replicate averages the kernel products over pairs of distinct source
/// rows only. Copies of one row are exact ties in every region and, left in,
/// push every resampled `rho~` upward.
///
/// Resamples that leave a region constant are redrawn; more than `10 * B`
/// draws in total is an error.
pub fn bootstrap_ci(
    panel: &SpatialPanel,
    w: &ProximityMatrix,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval> {
    if replicates < MIN_BOOTSTRAP {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {replicates}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    // Fail fast on inputs that are invalid before any resampling.
    sb_statistic(panel, w)?;

    let cap = RESAMPLE_ATTEMPT_FACTOR * replicates;
    let t = panel.times();
    let draws = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, Stream::Bootstrap, b as u64);
            let mut attempts = 0;
            loop {
                attempts += 1;
                if attempts > cap {
                    return Err(Error::TooManyDegenerateResamples { attempts });
                }
                let rows: Vec<usize> = (0..t).map(|_| rng.random_range(0..t)).collect();
                match sb_value_resampled(panel, w, &rows) {
                    Ok(value) => return Ok((value, attempts)),
                    Err(Error::DegenerateRegion { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<Vec<(f64, usize)>>>()?;

    let attempts: usize = draws.iter().map(|d| d.1).sum();
    if attempts > cap {
        return Err(Error::TooManyDegenerateResamples { attempts });
    }
    let mut values: Vec<f64> = draws.into_iter().map(|d| d.0).collect();
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(ConfidenceInterval {
        lower: quantile_sorted(&values, alpha / 2.0),
        upper: quantile_sorted(&values, 1.0 - alpha / 2.0),
        level,
        replicates,
        redraws: attempts - replicates,
        method: "percentile".into(),
        resampling: "time_rows".into(),
    })
}

/// Flags region pairs whose `rho~` exceeds `cutoff`.
pub fn pairwise_screen(panel: &SpatialPanel, cutoff: f64) -> Result<PairwiseScreen> {
    if cutoff.is_nan() {
        return Err(Error::InvalidParameter("cutoff is NaN".into()));
    }
    let w = crate::weights::linear_chain(panel.regions())?;
    let res = sb_statistic(panel, &w)?;
    Ok(screen_from_rho(res.pair_rho, cutoff, CutoffSource::Fixed))
}

/// [`pairwise_screen`] with the cutoff simulated at the panel's length.
pub fn pairwise_screen_simulated(panel: &SpatialPanel, sims: usize, seed: u64) -> Result<PairwiseScreen> {
    let cutoff = rho_null_quantile(panel.times(), SCREEN_QUANTILE, sims, seed)?;
    let mut screen = pairwise_screen(panel, cutoff)?;
    screen.cutoff_source = CutoffSource::Simulated {
        quantile: SCREEN_QUANTILE,
        sims,
        times: panel.times(),
    };
    Ok(screen)
}

fn screen_from_rho(rho: Vec<Vec<f64>>, cutoff: f64, cutoff_source: CutoffSource) -> PairwiseScreen {
    let flags = rho
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, &v)| i != j && v > cutoff).collect())
        .collect();
    PairwiseScreen {
        cutoff,
        cutoff_source,
        flags,
        rho,
    }
}

/// Simulated `rho~` values for independent standard normal pairs of length `times`.
pub fn rho_null_samples(times: usize, sims: usize, seed: u64) -> Result<Vec<f64>> {
    if times < 3 {
        return Err(Error::Length { needed: 3, got: times });
    }
    if sims == 0 {
        return Err(Error::InvalidParameter("sims must be at least 1".into()));
    }
    let normal = ReferenceDistribution::standard_normal();
    (0..sims)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, Stream::RhoNull, s as u64);
            let x: Vec<f64> = (0..times).map(|_| normal.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..times).map(|_| normal.sample(&mut rng)).collect();
            rho_tilde(&x, &y)
        })
        .collect()
}

/// Quantile `q` of [`rho_null_samples`].
pub fn rho_null_quantile(times: usize, q: f64, sims: usize, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("quantile must lie in [0, 1], got {q}")));
    }
    let mut samples = rho_null_samples(times, sims, seed)?;
    samples.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&samples, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::noise_panel;
    use crate::weights::linear_chain;

    fn quick_options(seed: u64) -> TestOptions {
        TestOptions {
            reps: 200,
            bootstrap: 200,
            screen_sims: 500,
            seed,
            ..TestOptions::default()
        }
    }

    #[test]
    fn identical_columns_interval_is_degenerate_at_one() {
        let x = vec![0.3, -1.0, 2.2, 0.7, 1.9, -0.4, 0.1, 1.1];
        let p = SpatialPanel::from_columns(vec![x; 3], None).unwrap();
        let w = linear_chain(3).unwrap().row_standardize().unwrap();
        let ci = bootstrap_ci(&p, &w, 200, 0.95, 5).unwrap();
        assert!((ci.lower - 1.0).abs() < 1e-12 && (ci.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let p = noise_panel(&ReferenceDistribution::standard_normal(), 30, 4, 9, 0).unwrap();
        let w = linear_chain(4).unwrap().row_standardize().unwrap();
        let a = bootstrap_ci(&p, &w, 300, 0.9, 11).unwrap();
        let b = bootstrap_ci(&p, &w, 300, 0.9, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.lower <= a.upper);
    }

    #[test]
    fn bootstrap_argument_checks() {
        let p = noise_panel(&ReferenceDistribution::standard_normal(), 10, 3, 1, 0).unwrap();
        let w = linear_chain(3).unwrap();
        assert!(matches!(
            bootstrap_ci(&p, &w, 199, 0.95, 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            bootstrap_ci(&p, &w, 200, 1.0, 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn bootstrap_gives_up_on_nearly_constant_regions() {
        // Region i is zero except at time i, so a resample is usable only if
        // it draws every one of those rows.
        let (t, r) = (30, 10);
        let cols = (0..r)
            .map(|i| (0..t).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect();
        let p = SpatialPanel::from_columns(cols, None).unwrap();
        let w = linear_chain(r).unwrap();
        match bootstrap_ci(&p, &w, 200, 0.95, 3) {
            Err(Error::TooManyDegenerateResamples { attempts }) => assert!(attempts > 2000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn screen_examples() {
        let x = vec![0.3, -1.0, 2.2, 0.7, 1.9];
        let p = SpatialPanel::from_columns(vec![x; 3], None).unwrap();
        let s = pairwise_screen(&p, 0.99).unwrap();
        assert_eq!(s.flagged_pairs(), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(s.flags.iter().enumerate().all(|(i, row)| !row[i]));
        let noise = noise_panel(&ReferenceDistribution::standard_normal(), 20, 5, 2, 0).unwrap();
        assert!(pairwise_screen(&noise, 1.5).unwrap().flagged_pairs().is_empty());
    }

    #[test]
    fn normal_scores_handle_ties() {
        let s = normal_scores(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(s[0], s[2]);
        assert!(s[1] < s[3] && s[3] < s[0]);
        let untied: f64 = normal_scores(&[0.4, -2.0, 7.0, 1.0, 3.0]).iter().sum();
        assert!(untied.abs() < 1e-12);
    }

    #[test]
    fn report_is_reproducible_and_tabulates() {
        let p = noise_panel(&ReferenceDistribution::standard_normal(), 25, 4, 4, 0).unwrap();
        let w = linear_chain(4).unwrap().row_standardize().unwrap();
        let a = test_spatial_independence(&p, &w, &quick_options(7)).unwrap();
        let b = test_spatial_independence(&p, &w, &quick_options(7)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        assert_eq!(a.null_reps, 200);
        let table = a.table("iid");
        assert!(table.starts_with("Model"));
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn strong_dependence_is_rejected() {
        let noise = noise_panel(&ReferenceDistribution::standard_normal(), 40, 6, 6, 0).unwrap();
        let common = noise.column(5).to_vec();
        let p = SpatialPanel::from_columns(
            (0..5)
                .map(|i| common.iter().zip(noise.column(i)).map(|(c, e)| c + 0.1 * e).collect())
                .collect(),
            None,
        )
        .unwrap();
        let w = linear_chain(5).unwrap().row_standardize().unwrap();
        let r = test_spatial_independence(&p, &w, &quick_options(1)).unwrap();
        assert!(r.p_value < 0.01, "{}", r.p_value);
        assert_eq!(r.pairwise.unwrap().flagged_pairs().len(), 10);
    }

    #[test]
    fn option_checks() {
        let p = noise_panel(&ReferenceDistribution::standard_normal(), 10, 3, 1, 0).unwrap();
        let w = linear_chain(3).unwrap();
        let bad = TestOptions {
            bootstrap: 50,
            ..quick_options(1)
        };
        assert!(test_spatial_independence(&p, &w, &bad).is_err());
        let bad = TestOptions {
            level: 0.0,
            ..quick_options(1)
        };
        assert!(test_spatial_independence(&p, &w, &bad).is_err());
    }
}
