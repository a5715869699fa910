use serde::{Deserialize, Serialize};

use super::{ClusterError, Points};

pub const STD_FLOOR: f64 = 1e-12;

/// Per-column z-scoring with population std floored at [`STD_FLOOR`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(points: Points<'_>) -> Self {
        let (n, d) = (points.len(), points.dim);
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let first = points.row(0)[j];
            // Exactly constant columns get their value as mean so they map to 0.
            if (0..n).all(|i| points.row(i)[j] == first) {
                mean[j] = first;
                std[j] = STD_FLOOR;
                continue;
            }
            let m = (0..n).map(|i| points.row(i)[j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (points.row(i)[j] - m).powi(2)).sum::<f64>() / n as f64;
            mean[j] = m;
            std[j] = var.sqrt().max(STD_FLOOR);
        }
        Self { mean, std }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn transform(&self, points: Points<'_>) -> Vec<f64> {
        (0..points.len()).flat_map(|i| self.transform_row(points.row(i))).collect()
    }
}

/// Fits a scaler and returns it with the standardized row-major matrix.
pub fn standardize_fit(points: Points<'_>) -> Result<(Scaler, Vec<f64>), ClusterError> {
    if points.len() < 2 {
        return Err(ClusterError::TooFewRows { need: 2, got: points.len() });
    }
    let scaler = Scaler::fit(points);
    let z = scaler.transform(points);
    Ok((scaler, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let data = vec![0.1, 0.0, 0.1, 2.0, 0.1, 1.0];
        let pts = Points::new(&data, 2);
        let (scaler, z) = standardize_fit(pts).unwrap();
        assert_eq!(scaler.std[0], STD_FLOOR);
        assert_eq!(z[0], 0.0);
        assert_eq!(z[2], 0.0);
        assert_eq!(z[4], 0.0);
        let two = vec![0.0, 2.0];
        let (_, z) = standardize_fit(Points::new(&two, 1)).unwrap();
        assert_eq!(z, vec![-1.0, 1.0]);
        assert_eq!(scaler.transform(pts), standardize_fit(pts).unwrap().1);
        assert!(matches!(standardize_fit(Points::new(&[1.0], 1)), Err(ClusterError::TooFewRows { .. })));
    }
}
