//! Spatial proximity matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Nonnegative `R x R` weight matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityMatrix {
    size: usize,
    weights: Vec<f64>,
    labels: Vec<String>,
    standardized: bool,
}

/// Planar region coordinates, e.g. longitude/latitude treated as Euclidean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCoordinates {
    pub labels: Vec<String>,
    pub points: Vec<(f64, f64)>,
}

pub(crate) fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("R{i}")).collect()
}

impl ProximityMatrix {
    /// Builds from row-major weights, validating the matrix invariants.
    pub fn new(size: usize, weights: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {size}x{size} matrix",
                weights.len()
            )));
        }
        let labels = labels.unwrap_or_else(|| default_labels(size));
        if labels.len() != size {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {size} regions",
                labels.len()
            )));
        }
        for i in 0..size {
            let d = weights[i * size + i];
            if d != 0.0 {
                return Err(Error::NonzeroDiagonal { index: i + 1, value: d });
            }
        }
        if let Some(pos) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index: pos });
        }
        if let Some(pos) = weights.iter().position(|&w| w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "negative weight {} at ({}, {})",
                weights[pos],
                pos / size + 1,
                pos % size + 1
            )));
        }
        Ok(ProximityMatrix {
            size,
            weights,
            labels,
            standardized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let size = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != size {
                return Err(Error::NotSquare {
                    rows: size,
                    row: i + 1,
                    cols: r.len(),
                });
            }
        }
        Self::new(size, rows.concat(), labels)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.size..(i + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks(self.size.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} regions",
                labels.len(),
                self.size
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// `S0`, the sum of all weights.
    pub fn s0(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Fraction of entries (diagonal included) that are zero.
    pub fn sparsity(&self) -> f64 {
        let zeros = self.weights.iter().filter(|&&w| w == 0.0).count();
        zeros as f64 / self.weights.len() as f64
    }

    /// Region pairs `i < j` with `w_ij + w_ji > 0`, and that combined weight.
    pub fn active_pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.size {
            for j in (i + 1)..self.size {
                let w = self.get(i, j) + self.get(j, i);
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Relabels regions: new region `k` is old region `perm[k]`, i.e. `P W P^T`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.size)?;
        let n = self.size;
        let mut weights = vec![0.0; n * n];
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                weights[a * n + b] = self.get(pa, pb);
            }
        }
        Ok(ProximityMatrix {
            size: n,
            weights,
            labels: perm.iter().map(|&p| self.labels[p].clone()).collect(),
            standardized: self.standardized,
        })
    }

    /// Divides each row by its sum so that `S0 = R`.
    pub fn row_standardize(&self) -> Result<Self> {
        if self.standardized {
            return Ok(self.clone());
        }
        let isolated: Vec<String> = (0..self.size)
            .filter(|&i| self.row(i).iter().sum::<f64>() <= 0.0)
            .map(|i| self.labels[i].clone())
            .collect();
        if !isolated.is_empty() {
            return Err(Error::IsolatedRegion { regions: isolated });
        }
        let mut weights = self.weights.clone();
        for row in weights.chunks_mut(self.size) {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                row.iter_mut().for_each(|w| *w /= sum);
            }
        }
        Ok(ProximityMatrix {
            size: self.size,
            weights,
            labels: self.labels.clone(),
            standardized: true,
        })
    }

    /// Checks every row sums to one within tolerance.
    pub fn rows_sum_to_one(&self) -> bool {
        self.rows().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOL)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "permutation of length {} for {n} regions",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidParameter(format!("not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Symmetric 0/1 adjacency from unordered 1-based region pairs.
pub fn adjacency_from_edges(edges: &[(usize, usize)], regions: usize) -> Result<ProximityMatrix> {
    let mut weights = vec![0.0; regions * regions];
    for &(a, b) in edges {
        for idx in [a, b] {
            if idx == 0 || idx > regions {
                return Err(Error::Index {
                    index: idx,
                    size: regions,
                });
            }
        }
        if a == b {
            return Err(Error::SelfLoop { index: a });
        }
        weights[(a - 1) * regions + (b - 1)] = 1.0;
        weights[(b - 1) * regions + (a - 1)] = 1.0;
    }
    ProximityMatrix::new(regions, weights, None)
}

/// `w_ij = 1 / d_ij` with planar Euclidean distance.
pub fn inverse_distance(coords: &RegionCoordinates) -> Result<ProximityMatrix> {
    let n = coords.points.len();
    if coords.labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} points",
            coords.labels.len()
        )));
    }
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (xi, yi) = coords.points[i];
            let (xj, yj) = coords.points[j];
            let d = (xi - xj).hypot(yi - yj);
            if d == 0.0 {
                return Err(Error::DuplicatePoint {
                    first: coords.labels[i].clone(),
                    second: coords.labels[j].clone(),
                });
            }
            weights[i * n + j] = 1.0 / d;
            weights[j * n + i] = 1.0 / d;
        }
    }
    ProximityMatrix::new(n, weights, Some(coords.labels.clone()))
}

/// Lag-1 adjacency of regions arranged on a line.
pub fn linear_chain(regions: usize) -> Result<ProximityMatrix> {
    if regions < 2 {
        return Err(Error::Size(format!(
            "linear chain needs at least 2 regions, got {regions}"
        )));
    }
    let edges: Vec<(usize, usize)> = (1..regions).map(|i| (i, i + 1)).collect();
    adjacency_from_edges(&edges, regions)
}

pub fn row_standardize(w: &ProximityMatrix) -> Result<ProximityMatrix> {
    w.row_standardize()
}
