//! Built-in 14-region layouts modeled on the districts of Kerala, India,
//! ordered north to south.
//!
//! Coordinates are approximate district-headquarters positions in degrees
//! (longitude, latitude); the adjacency lists shared land borders. Both are
//! meant for simulation designs, not as authoritative geography.

use crate::error::Result;
use crate::weights::{adjacency_from_edges, inverse_distance, linear_chain, ProximityMatrix, RegionCoordinates};

pub const KERALA_DISTRICTS: [&str; 14] = [
    "Kasaragod",
    "Kannur",
    "Wayanad",
    "Kozhikode",
    "Malappuram",
    "Palakkad",
    "Thrissur",
    "Ernakulam",
    "Idukki",
    "Kottayam",
    "Alappuzha",
    "Pathanamthitta",
    "Kollam",
    "Thiruvananthapuram",
];

const KERALA_LON_LAT: [(f64, f64); 14] = [
    (74.99, 12.50),
    (75.37, 11.87),
    (76.08, 11.61),
    (75.78, 11.26),
    (76.07, 11.07),
    (76.65, 10.78),
    (76.21, 10.53),
    (76.34, 10.02),
    (76.94, 9.85),
    (76.52, 9.59),
    (76.34, 9.50),
    (76.79, 9.26),
    (76.61, 8.89),
    (76.94, 8.52),
];

const KERALA_BORDERS: [(usize, usize); 21] = [
    (1, 2),
    (2, 3),
    (2, 4),
    (3, 4),
    (3, 5),
    (4, 5),
    (5, 6),
    (5, 7),
    (6, 7),
    (7, 8),
    (8, 9),
    (8, 10),
    (8, 11),
    (9, 10),
    (9, 12),
    (10, 11),
    (10, 12),
    (11, 12),
    (11, 13),
    (12, 13),
    (13, 14),
];

fn labels() -> Vec<String> {
    KERALA_DISTRICTS.iter().map(|s| s.to_string()).collect()
}

pub fn kerala_coordinates() -> RegionCoordinates {
    RegionCoordinates {
        labels: labels(),
        points: KERALA_LON_LAT.to_vec(),
    }
}

/// Lag-1 (shared border) adjacency, unstandardized.
pub fn kerala_adjacency() -> ProximityMatrix {
    adjacency_from_edges(&KERALA_BORDERS, 14)
        .and_then(|w| w.with_labels(labels()))
        .expect("static adjacency is valid")
}

/// Inverse distance between headquarters, unstandardized.
pub fn kerala_inverse_distance() -> ProximityMatrix {
    inverse_distance(&kerala_coordinates()).expect("static coordinates are distinct")
}

/// Districts arranged on a line, unstandardized.
pub fn kerala_chain() -> ProximityMatrix {
    linear_chain(14)
        .and_then(|w| w.with_labels(labels()))
        .expect("static chain is valid")
}

/// Named built-in matrix: `kerala-adjacency`, `kerala-inverse-distance`,
/// `kerala-chain`, or `chain:<R>`.
pub fn named(name: &str) -> Result<ProximityMatrix> {
    match name {
        "kerala-adjacency" | "lag1" => Ok(kerala_adjacency()),
        "kerala-inverse-distance" | "inverse-distance" => Ok(kerala_inverse_distance()),
        "kerala-chain" => Ok(kerala_chain()),
        other => match other.strip_prefix("chain:").map(str::parse::<usize>) {
            Some(Ok(r)) => linear_chain(r),
            _ => Err(crate::Error::InvalidParameter(format!(
                "unknown built-in weights '{name}'"
            ))),
        },
    }
}

/// The three standardized designs used throughout the simulation studies.
pub fn simulation_designs() -> Vec<(&'static str, ProximityMatrix)> {
    vec![
        ("lag1-adjacency", kerala_adjacency()),
        ("inverse-distance", kerala_inverse_distance()),
        ("linear-chain", kerala_chain()),
    ]
    .into_iter()
    .map(|(n, w)| (n, w.row_standardize().expect("no isolated regions")))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_valid() {
        let adj = kerala_adjacency();
        assert!(adj.is_symmetric(0.0));
        assert_eq!(adj.len(), 14);
        // Sparse, in the neighbourhood of the lag-1 design's ~0.77.
        assert!((0.75..0.80).contains(&adj.sparsity()), "{}", adj.sparsity());
        assert!((kerala_chain().sparsity() - 0.87).abs() < 0.005);
        let inv = kerala_inverse_distance();
        assert!((inv.sparsity() - 1.0 / 14.0).abs() < 1e-12);
        for (_, w) in simulation_designs() {
            assert!(w.rows_sum_to_one());
        }
    }

    #[test]
    fn named_lookup() {
        assert_eq!(named("chain:5").unwrap().len(), 5);
        assert!(named("nowhere").is_err());
    }
}
