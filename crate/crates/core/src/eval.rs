//! Match-quality metrics against ground-truth checkpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::SimilarityTransform;

/// Default RMSE above which a pair counts as a failure, in pixels.
pub const SUCCESS_THRESHOLD: f64 = 5.0;

/// Corresponding points in original reference and sensed pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointSet {
    pub pairs: Vec<((f64, f64), (f64, f64))>,
}

impl CheckpointSet {
    pub fn new(pairs: Vec<((f64, f64), (f64, f64))>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("checkpoints"));
        }
        Ok(Self { pairs })
    }

    /// Checks that every point lies inside its image (`(rows, cols)` dims).
    pub fn check_bounds(&self, ref_dims: (usize, usize), sen_dims: (usize, usize)) -> Result<()> {
        let inside = |(x, y): (f64, f64), (rows, cols): (usize, usize)| {
            x >= 0.0 && y >= 0.0 && x <= (cols - 1) as f64 && y <= (rows - 1) as f64
        };
        match self.pairs.iter().find(|(r, s)| !inside(*r, ref_dims) || !inside(*s, sen_dims)) {
            Some(p) => Err(Error::InvalidParameter(format!("checkpoint {p:?} lies outside its image"))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Root-mean-square distance, over checkpoints, between each true sensed point
/// and its reference point projected through `M^-1`.
pub fn compute_rmse(m: &SimilarityTransform, cps: &CheckpointSet) -> Result<f64> {
    if cps.is_empty() {
        return Err(Error::EmptyInput("checkpoints"));
    }
    let inv = m.inverse()?;
    let sum: f64 = cps
        .pairs
        .iter()
        .map(|&(r, s)| {
            let (x, y) = inv.apply(r);
            (x - s.0).powi(2) + (y - s.1).powi(2)
        })
        .sum();
    Ok((sum / cps.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nm: usize,
    /// `None` when no transform was estimated.
    pub rmse: Option<f64>,
    pub success: bool,
    pub threshold: f64,
}

impl EvalReport {
    /// Report for a pipeline outcome; `transform` is `None` when matching failed.
    pub fn new(nm: usize, transform: Option<&SimilarityTransform>, cps: &CheckpointSet, threshold: f64) -> Result<Self> {
        let rmse = match transform {
            Some(m) => Some(compute_rmse(m, cps)?),
            None => None,
        };
        Ok(Self {
            nm,
            rmse,
            success: rmse.is_some_and(|r| r <= threshold),
            threshold,
        })
    }
}

/// Percentage of successful reports.
pub fn success_rate(reports: &[EvalReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("evaluation reports"));
    }
    let ok = reports.iter().filter(|r| r.success).count();
    Ok(100.0 * ok as f64 / reports.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(success: bool) -> EvalReport {
        EvalReport {
            nm: 10,
            rmse: Some(1.0),
            success,
            threshold: SUCCESS_THRESHOLD,
        }
    }

    #[test]
    fn exact_transform_has_zero_rmse() {
        let m = SimilarityTransform::new(1.5, 0.4, 10.0, -3.0);
        let pairs = [(0.0, 0.0), (20.0, 5.0), (7.0, 30.0)]
            .iter()
            .map(|&s| (m.apply(s), s))
            .collect();
        let cps = CheckpointSet::new(pairs).unwrap();
        assert!(compute_rmse(&m, &cps).unwrap() < 1e-12);
    }

    #[test]
    fn single_residual_is_pythagorean() {
        let cps = CheckpointSet::new(vec![((10.0, 10.0), (13.0, 14.0))]).unwrap();
        let r = compute_rmse(&SimilarityTransform::IDENTITY, &cps).unwrap();
        assert!((r - 5.0).abs() < 1e-12);
    }

    #[test]
    fn averages_over_checkpoints() {
        let cps = CheckpointSet::new(vec![((0.0, 0.0), (1.0, 0.0)), ((5.0, 5.0), (5.0, 6.0))]).unwrap();
        let r = compute_rmse(&SimilarityTransform::IDENTITY, &cps).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_is_order_invariant() {
        let m = SimilarityTransform::new(1.1, 0.2, 3.0, 1.0);
        let pairs = vec![((3.0, 4.0), (1.0, 2.0)), ((30.0, 4.0), (20.0, 9.0)), ((8.0, 40.0), (5.0, 33.0))];
        let mut rev = pairs.clone();
        rev.reverse();
        let a = compute_rmse(&m, &CheckpointSet::new(pairs).unwrap()).unwrap();
        let b = compute_rmse(&m, &CheckpointSet::new(rev).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(CheckpointSet::new(vec![]).is_err());
        assert!(compute_rmse(&SimilarityTransform::IDENTITY, &CheckpointSet::default()).is_err());
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn success_rate_examples() {
        let three_of_four = [report(true), report(true), report(true), report(false)];
        assert_eq!(success_rate(&three_of_four).unwrap(), 75.0);
        assert_eq!(success_rate(&[report(false), report(false)]).unwrap(), 0.0);
        let mut many = vec![report(true); 162];
        many.extend([report(false); 2]);
        let sr = success_rate(&many).unwrap();
        assert_eq!(format!("{sr:.1}"), "98.8");
    }

    #[test]
    fn report_success_follows_threshold_and_failure() {
        let cps = CheckpointSet::new(vec![((10.0, 10.0), (13.0, 14.0))]).unwrap();
        let m = SimilarityTransform::IDENTITY;
        assert!(EvalReport::new(5, Some(&m), &cps, 5.0).unwrap().success);
        assert!(!EvalReport::new(5, Some(&m), &cps, 4.9).unwrap().success);
        assert!(!EvalReport::new(0, None, &cps, 5.0).unwrap().success);
    }

    #[test]
    fn bounds_check() {
        let cps = CheckpointSet::new(vec![((10.0, 10.0), (60.0, 5.0))]).unwrap();
        assert!(cps.check_bounds((100, 100), (100, 100)).is_ok());
        assert!(cps.check_bounds((100, 100), (50, 50)).is_err());
    }
}
