//! One-pass evaluation metrics: precision and success curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tracker::TrackResult;
use crate::error::{Error, Result};
use crate::state::TargetState;

pub const PRECISION_MAX_THRESHOLD: usize = 50;
pub const PRECISION_HEADLINE: usize = 20;
pub const SUCCESS_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(tau, fraction)` for tau = 0..=50 px.
    pub precision_curve: Vec<(f64, f64)>,
    /// `(u, fraction)` for u = 0, 0.01, ..., 1.
    pub success_curve: Vec<(f64, f64)>,
    pub precision: f64,
    pub success_auc: f64,
}

pub fn success_thresholds() -> Vec<f64> {
    (0..=SUCCESS_STEPS).map(|i| i as f64 / SUCCESS_STEPS as f64).collect()
}

/// Metrics over paired estimate / truth boxes. A frame counts as a success
/// at threshold u when IoU > u, or when the boxes coincide (IoU = 1), so a
/// perfect track scores exactly 1.
pub fn metrics_from_boxes(estimates: &[TargetState], truth: &[TargetState]) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(Error::SequenceTooShort(0));
    }
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            frames: estimates.len(),
            truth: truth.len(),
        });
    }
    let n = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().zip(truth).map(|(e, g)| e.distance_to(g)).collect();
    let ious: Vec<f64> = estimates.iter().zip(truth).map(|(e, g)| e.iou(g)).collect();

    let precision_curve: Vec<(f64, f64)> = (0..=PRECISION_MAX_THRESHOLD)
        .map(|tau| {
            let tau = tau as f64;
            (tau, errors.iter().filter(|&&d| d <= tau).count() as f64 / n)
        })
        .collect();
    let success_curve: Vec<(f64, f64)> = success_thresholds()
        .into_iter()
        .map(|u| (u, ious.iter().filter(|&&v| v > u || v == 1.0).count() as f64 / n))
        .collect();
    let precision = precision_curve[PRECISION_HEADLINE].1;
    let success_auc = success_curve.iter().map(|p| p.1).sum::<f64>() / success_curve.len() as f64;
    let m = Metrics {
        precision_curve,
        success_curve,
        precision,
        success_auc,
    };
    debug_assert!(m.is_monotone());
    Ok(m)
}

pub fn compute_metrics(result: &TrackResult) -> Result<Metrics> {
    let est: Vec<TargetState> = result.frames.iter().map(|f| f.estimate).collect();
    let truth: Vec<TargetState> = result.frames.iter().map(|f| f.truth).collect();
    metrics_from_boxes(&est, &truth)
}

impl Metrics {
    /// Precision non-decreasing in tau, success non-increasing in u.
    pub fn is_monotone(&self) -> bool {
        self.precision_curve.windows(2).all(|w| w[0].1 <= w[1].1)
            && self.success_curve.windows(2).all(|w| w[0].1 >= w[1].1)
    }

    /// `curve,threshold,value` rows for both curves.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("curve,threshold,value\n");
        for (t, v) in &self.precision_curve {
            let _ = writeln!(s, "precision,{t},{v}");
        }
        for (u, v) in &self.success_curve {
            let _ = writeln!(s, "success,{u:.2},{v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64) -> TargetState {
        TargetState::new([x, y], [20.0, 20.0])
    }

    #[test]
    fn perfect_track_scores_one() {
        let t = vec![b(10.0, 10.0), b(30.5, 12.25), b(7.0, 99.0)];
        let m = metrics_from_boxes(&t, &t).unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.success_auc, 1.0);
        assert!(m.is_monotone());
    }

    #[test]
    fn far_track_scores_zero() {
        let t = vec![b(10.0, 10.0), b(100.0, 100.0)];
        let e = vec![b(70.0, 10.0), b(100.0, 160.0)];
        let m = metrics_from_boxes(&e, &t).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.success_auc, 0.0);
    }

    #[test]
    fn half_good_half_bad() {
        let t = vec![b(10.0, 10.0), b(100.0, 100.0)];
        let e = vec![b(10.0, 10.0), b(130.0, 100.0)];
        let m = metrics_from_boxes(&e, &t).unwrap();
        assert_eq!(m.precision, 0.5);
        let perfect = metrics_from_boxes(&t[..1], &t[..1]).unwrap();
        assert_eq!(m.success_auc, 0.5 * perfect.success_auc);
        // 30 px error stays out of the curve until tau reaches 30
        assert_eq!(m.precision_curve[29].1, 0.5);
        assert_eq!(m.precision_curve[30].1, 1.0);
    }

    #[test]
    fn curve_shapes() {
        let t = vec![b(0.0, 0.0)];
        let m = metrics_from_boxes(&t, &t).unwrap();
        assert_eq!(m.precision_curve.len(), 51);
        assert_eq!(m.success_curve.len(), 101);
        assert_eq!(m.success_curve[100].0, 1.0);
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 1 + 51 + 101);
        assert!(csv.contains("success,0.50,1"));
    }

    #[test]
    fn half_overlap_success_curve() {
        // shifted by half a width: IoU = 10*20 / (2*400 - 200) = 1/3
        let t = vec![b(0.0, 0.0)];
        let e = vec![b(10.0, 0.0)];
        let m = metrics_from_boxes(&e, &t).unwrap();
        let iou = 1.0 / 3.0;
        for (u, v) in &m.success_curve {
            assert_eq!(*v, if iou > *u { 1.0 } else { 0.0 }, "u={u}");
        }
        assert_eq!(m.success_auc, 34.0 / 101.0);
    }

    #[test]
    fn errors_on_bad_lengths() {
        assert!(metrics_from_boxes(&[], &[]).is_err());
        assert!(matches!(
            metrics_from_boxes(&[b(0.0, 0.0)], &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
