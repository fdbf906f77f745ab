use serde::Serialize;

use crate::error::{Error, Result};
use crate::weights::default_labels;

/// `T x R` observations: rows are time points, columns are regions.
///
/// Stored column-major so each region's series is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialPanel {
    times: usize,
    regions: usize,
    columns: Vec<f64>,
    labels: Vec<String>,
}

impl SpatialPanel {
    pub const MIN_TIMES: usize = 3;
    pub const MIN_REGIONS: usize = 2;

    /// Builds from per-region series of equal length.
    pub fn from_columns(columns: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        let regions = columns.len();
        let times = columns.first().map_or(0, Vec::len);
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != times) {
            return Err(Error::DimensionMismatch(format!(
                "region {} has {} observations, expected {times}",
                i + 1,
                c.len()
            )));
        }
        Self::from_column_major(times, regions, columns.concat(), labels)
    }

    /// Builds from time-ordered rows of `R` values each.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let times = rows.len();
        let regions = rows.first().map_or(0, Vec::len);
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != regions) {
            return Err(Error::DimensionMismatch(format!(
                "time point {} has {} values, expected {regions}",
                t + 1,
                r.len()
            )));
        }
        let mut columns = vec![0.0; times * regions];
        for (t, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                columns[i * times + t] = v;
            }
        }
        Self::from_column_major(times, regions, columns, labels)
    }

    pub(crate) fn from_column_major(
        times: usize,
        regions: usize,
        columns: Vec<f64>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if regions < Self::MIN_REGIONS {
            return Err(Error::Size(format!("panel needs at least 2 regions, got {regions}")));
        }
        if times < Self::MIN_TIMES {
            return Err(Error::Size(format!("panel needs at least 3 time points, got {times}")));
        }
        if let Some(pos) = columns.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: pos });
        }
        let labels = labels.unwrap_or_else(|| default_labels(regions));
        if labels.len() != regions {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {regions} regions",
                labels.len()
            )));
        }
        Ok(SpatialPanel {
            times,
            regions,
            columns,
            labels,
        })
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, region: usize) -> &[f64] {
        &self.columns[region * self.times..(region + 1) * self.times]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.columns.chunks(self.times)
    }

    #[inline]
    pub fn value(&self, time: usize, region: usize) -> f64 {
        self.columns[region * self.times + time]
    }

    pub fn row(&self, time: usize) -> Vec<f64> {
        (0..self.regions).map(|i| self.value(time, i)).collect()
    }

    /// Panel made of the given time rows, in order (rows may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut columns = Vec::with_capacity(rows.len() * self.regions);
        for col in self.columns() {
            columns.extend(rows.iter().map(|&t| col[t]));
        }
        Self::from_column_major(rows.len(), self.regions, columns, Some(self.labels.clone()))
    }

    /// Reorders regions: new region `k` is old region `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::weights::check_permutation(perm, self.regions)?;
        let columns = perm.iter().flat_map(|&p| self.column(p).iter().copied()).collect();
        Self::from_column_major(
            self.times,
            self.regions,
            columns,
            Some(perm.iter().map(|&p| self.labels[p].clone()).collect()),
        )
    }

    /// Applies `x -> f(region, x)` to every observation.
    pub fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let columns = self
            .columns()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |&v| (i, v)).collect::<Vec<_>>())
            .map(|(i, v)| f(i, v))
            .collect();
        Self::from_column_major(self.times, self.regions, columns, Some(self.labels.clone()))
    }
}
