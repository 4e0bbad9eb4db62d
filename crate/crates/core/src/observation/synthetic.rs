use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{window_origin, AppearanceBackend, AppearanceModelHandle, BackendKind, Frame, ModelPayload};
use crate::error::{Error, Result};
use crate::rng::hashed_normal;
use crate::state::{ResponseMap, TargetState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterPeak {
    pub position: [f64; 2],
    pub amplitude: f64,
    pub width: f64,
}

/// Frames `start..end` (half-open) have the target amplitude scaled by
/// `1 - attenuation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub start: usize,
    pub end: usize,
    pub attenuation: f64,
}

/// Ground truth plus everything needed to evaluate the response field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub kind: String,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub noise_std: f64,
    pub target_amplitude: f64,
    pub target_width: f64,
    pub truth: Vec<TargetState>,
    /// Clutter peaks, one list per frame.
    pub clutter: Vec<Vec<ClutterPeak>>,
    pub occlusions: Vec<Occlusion>,
}

impl SyntheticScenario {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("scenario: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("frame dimensions must be positive");
        }
        if self.clutter.len() != self.truth.len() {
            return bad("clutter list must have one entry per frame");
        }
        if !(self.noise_std >= 0.0) || !(self.target_amplitude >= 0.0) || !(self.target_width > 0.0) {
            return bad("noise, amplitude must be >= 0 and width > 0");
        }
        if self.truth.iter().any(|t| !t.is_valid()) {
            return bad("ground-truth sizes must be positive and positions finite");
        }
        if self
            .clutter
            .iter()
            .flatten()
            .any(|c| !(c.amplitude >= 0.0) || !(c.width > 0.0) || !c.position.iter().all(|v| v.is_finite()))
        {
            return bad("clutter amplitudes must be >= 0 with positive width");
        }
        if self
            .occlusions
            .iter()
            .any(|o| !(0.0..=1.0).contains(&o.attenuation) || o.start > o.end)
        {
            return bad("occlusion attenuation must lie in [0, 1]");
        }
        Ok(())
    }

    /// Multiplier on the target amplitude at frame `t`.
    pub fn visibility(&self, t: usize) -> f64 {
        self.occlusions
            .iter()
            .filter(|o| (o.start..o.end).contains(&t))
            .map(|o| 1.0 - o.attenuation)
            .product()
    }

    /// Noise-free field at pixel `(x, y)` of frame `t`.
    pub fn clean_value(&self, t: usize, x: f64, y: f64) -> f64 {
        let gauss = |c: [f64; 2], w: f64| {
            let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
            (-d2 / (2.0 * w * w)).exp()
        };
        let mut v = self.target_amplitude * self.visibility(t) * gauss(self.truth[t].position, self.target_width);
        for c in &self.clutter[t] {
            v += c.amplitude * gauss(c.position, c.width);
        }
        v
    }

    /// Full-frame field for frame `t`, noise included and clipped at zero.
    pub fn field(&self, t: usize) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let axis = |n: usize, c: f64, width: f64| -> Vec<f64> {
            (0..n)
                .map(|i| (-(i as f64 - c).powi(2) / (2.0 * width * width)).exp())
                .collect()
        };
        let mut peaks: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(1 + self.clutter[t].len());
        let tp = self.truth[t].position;
        peaks.push((
            self.target_amplitude * self.visibility(t),
            axis(w, tp[0], self.target_width),
            axis(h, tp[1], self.target_width),
        ));
        for c in &self.clutter[t] {
            peaks.push((c.amplitude, axis(w, c.position[0], c.width), axis(h, c.position[1], c.width)));
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.0;
                for (amp, gx, gy) in &peaks {
                    v += amp * (gx[x] * gy[y]);
                }
                if self.noise_std > 0.0 {
                    v += self.noise_std * hashed_normal(self.seed, t as u64, x as i64, y as i64);
                }
                out[y * w + x] = v.max(0.0);
            }
        }
        out
    }

    /// Grayscale rendering: textured boxes for the target and each clutter
    /// peak over a flat background, with light pixel noise.
    pub fn render_frame(&self, t: usize) -> Frame {
        let (w, h) = (self.width, self.height);
        let mut px = vec![0.15; w * h];
        let vis = self.visibility(t);
        let size = self.truth[t].size;
        let mut paint = |center: [f64; 2], size: [f64; 2], gain: f64, occluded: f64| {
            let x0 = (center[0] - size[0] / 2.0).floor().max(0.0) as usize;
            let y0 = (center[1] - size[1] / 2.0).floor().max(0.0) as usize;
            let x1 = ((center[0] + size[0] / 2.0).ceil() as usize).min(w);
            let y1 = ((center[1] + size[1] / 2.0).ceil() as usize).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let u = (x as f64 - (center[0] - size[0] / 2.0)) / size[0];
                    let v = (y as f64 - (center[1] - size[1] / 2.0)) / size[1];
                    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                        continue;
                    }
                    let tex = 0.5
                        + 0.25 * (std::f64::consts::TAU * 2.0 * u).sin() * (std::f64::consts::TAU * 1.5 * v).cos()
                        + 0.25 * (u - 0.5);
                    let p = &mut px[y * w + x];
                    *p = (1.0 - occluded) * (0.15 + 0.8 * gain * tex) + occluded * 0.45;
                }
            }
        };
        for c in &self.clutter[t] {
            paint(c.position, size, c.amplitude / self.target_amplitude.max(1e-9), 0.0);
        }
        paint(self.truth[t].position, size, 1.0, 1.0 - vis);
        for (i, p) in px.iter_mut().enumerate() {
            let n = 0.01 * hashed_normal(self.seed ^ 0x5eed, t as u64, i as i64, -1);
            *p = (*p + n).clamp(0.0, 1.0);
        }
        Frame {
            width: w,
            height: h,
            index: t,
            pixels: px,
        }
    }

    pub fn render_all(&self) -> Vec<Frame> {
        (0..self.len()).map(|t| self.render_frame(t)).collect()
    }
}

/// Backend that reads response maps straight off the scenario's field.
/// Noise is keyed by (frame, pixel), so overlapping windows agree cell for
/// cell. Fields are built lazily, once per frame.
#[derive(Debug)]
pub struct SyntheticObserver {
    scenario: Arc<SyntheticScenario>,
    fields: Vec<OnceLock<Vec<f64>>>,
}

impl SyntheticObserver {
    pub fn new(scenario: Arc<SyntheticScenario>) -> Result<Self> {
        scenario.validate()?;
        let fields = (0..scenario.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { scenario, fields })
    }

    pub fn scenario(&self) -> &SyntheticScenario {
        &self.scenario
    }

    fn field(&self, t: usize) -> &[f64] {
        self.fields[t].get_or_init(|| self.scenario.field(t))
    }
}

impl AppearanceBackend for SyntheticObserver {
    fn kind(&self) -> BackendKind {
        BackendKind::Synthetic
    }

    fn create_model(&self, _frame: &Frame, _state: &TargetState) -> Result<ModelPayload> {
        Ok(ModelPayload::Synthetic)
    }

    fn respond(
        &self,
        model: &AppearanceModelHandle,
        frame: &Frame,
        candidate: &TargetState,
        grid_radius: usize,
    ) -> Result<ResponseMap> {
        if model.payload != ModelPayload::Synthetic {
            return Err(Error::InvalidConfig("synthetic backend given a non-synthetic model".into()));
        }
        let sc = &self.scenario;
        if frame.width != sc.width || frame.height != sc.height || frame.index >= sc.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame {} ({}x{}) does not belong to a {}x{} scenario of {} frames",
                frame.index,
                frame.width,
                frame.height,
                sc.width,
                sc.height,
                sc.len()
            )));
        }
        let ([ox, oy], _) = window_origin(frame.width, frame.height, candidate, grid_radius)?;
        let side = 2 * grid_radius + 1;
        let field = self.field(frame.index);
        let mut scores = Vec::with_capacity(side * side);
        for r in 0..side {
            let row = (oy as usize + r) * sc.width + ox as usize;
            scores.extend_from_slice(&field[row..row + side]);
        }
        Ok(ResponseMap::new(side, side, [ox as f64, oy as f64], scores))
    }

    fn blend(&self, model: &ModelPayload, _frame: &Frame, _peak: &TargetState, _eta: f64) -> Result<ModelPayload> {
        Ok(model.clone())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::observation::likelihood_of;
    use crate::state::ModelId;

    pub(crate) fn single_peak(noise: f64) -> SyntheticScenario {
        SyntheticScenario {
            kind: "test".into(),
            width: 120,
            height: 100,
            seed: 9,
            noise_std: noise,
            target_amplitude: 1.0,
            target_width: 6.0,
            truth: vec![TargetState::new([60.0, 50.0], [20.0, 20.0]); 3],
            clutter: vec![vec![]; 3],
            occlusions: vec![Occlusion {
                start: 2,
                end: 3,
                attenuation: 0.9,
            }],
        }
    }

    fn handle() -> AppearanceModelHandle {
        AppearanceModelHandle {
            id: ModelId(0),
            payload: ModelPayload::Synthetic,
        }
    }

    #[test]
    fn centered_candidate_peaks_at_center() {
        let sc = single_peak(0.0);
        let frame = sc.render_frame(0);
        let obs = SyntheticObserver::new(Arc::new(sc)).unwrap();
        let map = obs.respond(&handle(), &frame, &obs.scenario().truth[0], 15).unwrap();
        assert_eq!(map.peak().0, map.center());
        assert_eq!(map.center(), [60.0, 50.0]);
    }

    #[test]
    fn offset_candidate_sees_peak_at_negative_offset() {
        let sc = single_peak(0.0);
        let frame = sc.render_frame(0);
        let obs = SyntheticObserver::new(Arc::new(sc)).unwrap();
        let cand = obs.scenario().truth[0].with_position([68.0, 50.0]);
        let map = obs.respond(&handle(), &frame, &cand, 15).unwrap();
        let (peak, _) = map.peak();
        let c = map.center();
        assert_eq!([peak[0] - c[0], peak[1] - c[1]], [-8.0, 0.0]);
    }

    #[test]
    fn cells_agree_across_overlapping_windows() {
        let sc = single_peak(0.05);
        let frame = sc.render_frame(1);
        let obs = SyntheticObserver::new(Arc::new(sc)).unwrap();
        let t = obs.scenario().truth[1];
        let a = obs.respond(&handle(), &frame, &t, 10).unwrap();
        let b = obs.respond(&handle(), &frame, &t.with_position([63.0, 52.0]), 10).unwrap();
        // cell (60+3, 50+2) seen from both
        assert_eq!(a.get(12, 13), b.get(10, 10));
        assert_eq!(a, obs.respond(&handle(), &frame, &t, 10).unwrap());
    }

    #[test]
    fn occlusion_scales_target_amplitude() {
        let sc = single_peak(0.0);
        assert_eq!(sc.visibility(1), 1.0);
        assert!((sc.visibility(2) - 0.1).abs() < 1e-12);
        assert!((sc.clean_value(2, 60.0, 50.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn likelihood_falls_off_with_distance_beyond_coverage() {
        let sc = single_peak(0.0);
        let frame = sc.render_frame(0);
        let obs = SyntheticObserver::new(Arc::new(sc)).unwrap();
        let start = 15 + 3 * 6;
        let mut last = f64::INFINITY;
        for dx in start..start + 10 {
            let cand = obs.scenario().truth[0].with_position([60.0 + dx as f64, 50.0]);
            let l = likelihood_of(&obs.respond(&handle(), &frame, &cand, 15).unwrap());
            assert!(l <= last);
            last = l;
        }
    }

    #[test]
    fn wrong_frame_size_is_rejected() {
        let obs = SyntheticObserver::new(Arc::new(single_peak(0.0))).unwrap();
        let frame = Frame::filled(50, 50, 0, 0.0);
        let r = obs.respond(&handle(), &frame, &TargetState::new([25.0, 25.0], [5.0, 5.0]), 5);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rendered_frames_are_valid() {
        let sc = single_peak(0.02);
        for f in sc.render_all() {
            assert!(Frame::new(f.width, f.height, f.index, f.pixels.clone()).is_ok());
        }
    }
}
