//! The spatial Bergsma statistic
//!
//! ```text
//! S_B = sum_{i<j} (w_ij + w_ji) rho~(X_i, X_j) / S0
//! ```
//!
//! Each region's kernel matrix is built once and shared by all pairs it
//! takes part in.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{distinct_pair_dot, empirical_kernel_matrix, upper_triangle_dot, CenteredKernelMatrix};
use crate::panel::SpatialPanel;
use crate::weights::ProximityMatrix;

/// Kernel work (pairs x T^2) above which pairs are evaluated in parallel.
const PARALLEL_WORK_THRESHOLD: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SBResult {
    pub value: f64,
    pub scaled_value: f64,
    pub s0: f64,
    pub times: usize,
    pub regions: usize,
    pub labels: Vec<String>,
    /// Symmetric `R x R` matrix of `rho~` with unit diagonal.
    pub pair_rho: Vec<Vec<f64>>,
    /// Set when `S0` came from an unstandardized matrix, so `S0 != R` in general.
    pub unstandardized_weights: bool,
}

impl SBResult {
    /// Recomputes the statistic from `pair_rho` and the given weights.
    pub fn recompute(&self, w: &ProximityMatrix) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.regions {
            for j in (i + 1)..self.regions {
                acc += (w.get(i, j) + w.get(j, i)) * self.pair_rho[i][j];
            }
        }
        acc / self.s0
    }
}

/// Computes `S~_B` for a panel and a proximity matrix.
pub fn sb_statistic(panel: &SpatialPanel, w: &ProximityMatrix) -> Result<SBResult> {
    let work = panel.regions() * panel.regions() * panel.times() * panel.times() / 2;
    compute(panel, w, work >= PARALLEL_WORK_THRESHOLD)
}

/// Just the statistic value, skipping the `rho~` matrix.
pub(crate) fn sb_value(panel: &SpatialPanel, w: &ProximityMatrix) -> Result<f64> {
    check_dims(panel, w)?;
    let active = w.active_pairs();
    let mut needed = vec![false; panel.regions()];
    for &(i, j, _) in &active {
        needed[i] = true;
        needed[j] = true;
    }
    let mut kernels: Vec<Option<(CenteredKernelMatrix, f64)>> = Vec::with_capacity(panel.regions());
    for (i, col) in panel.columns().enumerate() {
        kernels.push(if needed[i] {
            Some(region_kernel(panel, i, col)?)
        } else {
            None
        });
    }
    let s0 = w.s0();
    let mut acc = 0.0;
    for &(i, j, wij) in &active {
        let (hi, ki) = kernels[i].as_ref().expect("kernel built for active region");
        let (hj, kj) = kernels[j].as_ref().expect("kernel built for active region");
        acc += wij * (upper_triangle_dot(hi, hj) / (ki * kj).sqrt());
    }
    Ok(acc / s0)
}

/// `S~_B` of the panel rows `rows`, counting only pairs of distinct source rows.
pub(crate) fn sb_value_resampled(panel: &SpatialPanel, w: &ProximityMatrix, rows: &[usize]) -> Result<f64> {
    check_dims(panel, w)?;
    let active = w.active_pairs();
    let mut kernels: Vec<Option<(CenteredKernelMatrix, f64)>> = vec![None; panel.regions()];
    for &(i, j, _) in &active {
        for r in [i, j] {
            if kernels[r].is_none() {
                let z: Vec<f64> = rows.iter().map(|&t| panel.value(t, r)).collect();
                let h = empirical_kernel_matrix(&z)?;
                let k = distinct_pair_dot(&h, &h, rows);
                if h.is_degenerate(k) {
                    return Err(Error::DegenerateRegion {
                        region: panel.labels()[r].clone(),
                    });
                }
                kernels[r] = Some((h, k));
            }
        }
    }
    let mut acc = 0.0;
    for &(i, j, wij) in &active {
        let (hi, ki) = kernels[i].as_ref().expect("kernel built for active region");
        let (hj, kj) = kernels[j].as_ref().expect("kernel built for active region");
        acc += wij * (distinct_pair_dot(hi, hj, rows) / (ki * kj).sqrt());
    }
    Ok(acc / w.s0())
}

fn check_dims(panel: &SpatialPanel, w: &ProximityMatrix) -> Result<()> {
    if w.len() != panel.regions() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} regions but weight matrix is {}x{}",
            panel.regions(),
            w.len(),
            w.len()
        )));
    }
    if w.s0() <= 0.0 {
        return Err(Error::InvalidParameter("weight matrix has no positive weights".into()));
    }
    Ok(())
}

fn region_kernel(panel: &SpatialPanel, i: usize, col: &[f64]) -> Result<(CenteredKernelMatrix, f64)> {
    let h = empirical_kernel_matrix(col)?;
    let k = h.self_kappa();
    if h.is_degenerate(k) {
        return Err(Error::DegenerateRegion {
            region: panel.labels()[i].clone(),
        });
    }
    Ok((h, k))
}

fn compute(panel: &SpatialPanel, w: &ProximityMatrix, parallel: bool) -> Result<SBResult> {
    check_dims(panel, w)?;
    let r = panel.regions();

    let kernels: Vec<(CenteredKernelMatrix, f64)> = if parallel {
        (0..r)
            .into_par_iter()
            .map(|i| region_kernel(panel, i, panel.column(i)))
            .collect::<Result<_>>()?
    } else {
        (0..r)
            .map(|i| region_kernel(panel, i, panel.column(i)))
            .collect::<Result<_>>()?
    };

    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| ((i + 1)..r).map(move |j| (i, j))).collect();
    let rho_of = |&(i, j): &(usize, usize)| {
        let (hi, ki) = &kernels[i];
        let (hj, kj) = &kernels[j];
        upper_triangle_dot(hi, hj) / (ki * kj).sqrt()
    };
    let rhos: Vec<f64> = if parallel {
        pairs.par_iter().map(rho_of).collect()
    } else {
        pairs.iter().map(rho_of).collect()
    };

    let mut pair_rho = vec![vec![0.0; r]; r];
    for (i, row) in pair_rho.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let s0 = w.s0();
    let mut acc = 0.0;
    for (&(i, j), &rho) in pairs.iter().zip(&rhos) {
        pair_rho[i][j] = rho;
        pair_rho[j][i] = rho;
        acc += (w.get(i, j) + w.get(j, i)) * rho;
    }
    let value = acc / s0;
    Ok(SBResult {
        value,
        scaled_value: panel.times() as f64 * value,
        s0,
        times: panel.times(),
        regions: r,
        labels: panel.labels().to_vec(),
        pair_rho,
        unstandardized_weights: !w.is_standardized(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::ReferenceDistribution;
    use crate::kernel::rho_tilde;
    use crate::rng::{stream_rng, Stream};
    use crate::weights::{linear_chain, ProximityMatrix};
    use proptest::prelude::*;

    fn random_panel(t: usize, r: usize, seed: u64) -> SpatialPanel {
        let mut rng = stream_rng(seed, Stream::Panel, 0);
        let d = ReferenceDistribution::standard_normal();
        let cols = (0..r).map(|_| (0..t).map(|_| d.sample(&mut rng)).collect()).collect();
        SpatialPanel::from_columns(cols, None).unwrap()
    }

    fn random_weights(r: usize, seed: u64) -> ProximityMatrix {
        use rand::Rng;
        let mut rng = stream_rng(seed, Stream::Panel, 1);
        let mut w: Vec<f64> = (0..r * r).map(|_| rng.random::<f64>()).collect();
        for i in 0..r {
            w[i * r + i] = 0.0;
        }
        ProximityMatrix::new(r, w, None).unwrap()
    }

    #[test]
    fn identical_columns_give_one() {
        let x = vec![0.3, -1.0, 2.2, 0.7, 1.9];
        let p = SpatialPanel::from_columns(vec![x.clone(); 4], None).unwrap();
        let w = linear_chain(4).unwrap().row_standardize().unwrap();
        let res = sb_statistic(&p, &w).unwrap();
        assert!((res.value - 1.0).abs() < 1e-14);
        assert_eq!(res.s0, 4.0);
        assert!(!res.unstandardized_weights);
    }

    #[test]
    fn two_regions_reduce_to_rho() {
        let p = random_panel(20, 2, 3);
        let w = linear_chain(2).unwrap();
        let res = sb_statistic(&p, &w).unwrap();
        let rho = rho_tilde(p.column(0), p.column(1)).unwrap();
        assert!((res.value - rho).abs() < 1e-15);
        assert_eq!(res.scaled_value, 20.0 * res.value);
        assert!(res.unstandardized_weights);
    }

    #[test]
    fn degenerate_column_is_named() {
        let p = SpatialPanel::from_columns(
            vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]],
            Some(vec!["north".into(), "south".into()]),
        )
        .unwrap();
        match sb_statistic(&p, &linear_chain(2).unwrap()) {
            Err(Error::DegenerateRegion { region }) => assert_eq!(region, "south"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = random_panel(10, 3, 1);
        assert!(matches!(
            sb_statistic(&p, &linear_chain(4).unwrap()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let p = random_panel(30, 6, 8);
        let w = random_weights(6, 8);
        assert_eq!(compute(&p, &w, true).unwrap(), compute(&p, &w, false).unwrap());
        assert_eq!(sb_value(&p, &w).unwrap(), compute(&p, &w, false).unwrap().value);
    }

    #[test]
    fn recompute_from_fields() {
        let p = random_panel(12, 5, 4);
        let w = random_weights(5, 4);
        let res = sb_statistic(&p, &w).unwrap();
        assert!((res.recompute(&w) - res.value).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_pairwise_rho(seed in any::<u64>()) {
            let p = random_panel(5, 6, seed);
            let w = random_weights(6, seed);
            let res = sb_statistic(&p, &w).unwrap();
            let mut acc = 0.0;
            for i in 0..6 {
                for j in (i + 1)..6 {
                    acc += (w.get(i, j) + w.get(j, i)) * rho_tilde(p.column(i), p.column(j)).unwrap();
                }
            }
            let naive = acc / w.s0();
            prop_assert!((res.value - naive).abs() <= 1e-12 * naive.abs().max(1.0));
        }

        #[test]
        fn joint_relabeling_invariance(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let r = 7;
            let p = random_panel(15, r, seed);
            let w = random_weights(r, seed);
            let mut perm: Vec<usize> = (0..r).collect();
            perm.shuffle(&mut stream_rng(seed, Stream::Panel, 9));
            let a = sb_statistic(&p, &w).unwrap().value;
            let b = sb_statistic(&p.permuted(&perm).unwrap(), &w.permuted(&perm).unwrap()).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn columnwise_affine_invariance(seed in any::<u64>()) {
            use rand::Rng;
            let r = 5;
            let p = random_panel(12, r, seed);
            let w = random_weights(r, seed).row_standardize().unwrap();
            let mut rng = stream_rng(seed, Stream::Panel, 3);
            let coef: Vec<(f64, f64)> = (0..r)
                .map(|_| {
                    let a: f64 = rng.random_range(0.2..5.0);
                    let sign = if rng.random::<bool>() { -1.0 } else { 1.0 };
                    (sign * a, rng.random_range(-10.0..10.0))
                })
                .collect();
            let moved = p.map_columns(|i, x| coef[i].0 * x + coef[i].1).unwrap();
            let a = sb_statistic(&p, &w).unwrap().value;
            let b = sb_statistic(&moved, &w).unwrap().value;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
