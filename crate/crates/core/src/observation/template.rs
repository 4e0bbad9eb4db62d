use serde::{Deserialize, Serialize};

use super::{window_origin, AppearanceBackend, AppearanceModelHandle, BackendKind, Frame, ModelPayload};
use crate::error::{Error, Result};
use crate::state::{ResponseMap, TargetState};

/// Side of the internal template resolution.
pub const TEMPLATE_SIDE: usize = 32;

/// Grayscale target patch at `TEMPLATE_SIDE x TEMPLATE_SIDE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateModel {
    pub patch: Vec<f64>,
}

/// Normalized cross-correlation against a template, mapped to `[0, 1]`.
#[derive(Debug, Clone, Default)]
pub struct TemplateObserver;

impl TemplateObserver {
    pub fn new() -> Self {
        Self
    }
}

/// Nearest-neighbor sample offsets for a box of `extent` pixels.
fn offsets(extent: f64) -> [i64; TEMPLATE_SIDE] {
    let mut out = [0; TEMPLATE_SIDE];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (-extent / 2.0 + (i as f64 + 0.5) * extent / TEMPLATE_SIDE as f64).floor() as i64;
    }
    out
}

fn sample_patch(frame: &Frame, center: [i64; 2], dx: &[i64; TEMPLATE_SIDE], dy: &[i64; TEMPLATE_SIDE]) -> Vec<f64> {
    let mut out = Vec::with_capacity(TEMPLATE_SIDE * TEMPLATE_SIDE);
    for oy in dy {
        for ox in dx {
            out.push(frame.at_clamped(center[0] + ox, center[1] + oy));
        }
    }
    out
}

/// Patch of `frame` under `state`, with the center snapped to the pixel grid.
pub(crate) fn extract_patch(frame: &Frame, state: &TargetState) -> Vec<f64> {
    let center = [state.position[0].round() as i64, state.position[1].round() as i64];
    sample_patch(frame, center, &offsets(state.size[0]), &offsets(state.size[1]))
}

/// Zero-mean copy and its norm.
fn centered(patch: &[f64]) -> (Vec<f64>, f64) {
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    let c: Vec<f64> = patch.iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (c, norm)
}

/// Normalized cross-correlation of two equal-length patches; 0 when either is flat.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let (ca, na) = centered(a);
    let (cb, nb) = centered(b);
    ncc_centered(&ca, na, &cb, nb)
}

fn ncc_centered(ca: &[f64], na: f64, cb: &[f64], nb: f64) -> f64 {
    if na <= 1e-12 || nb <= 1e-12 {
        return 0.0;
    }
    let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

impl AppearanceBackend for TemplateObserver {
    fn kind(&self) -> BackendKind {
        BackendKind::Template
    }

    fn create_model(&self, frame: &Frame, state: &TargetState) -> Result<ModelPayload> {
        if !state.is_valid() {
            return Err(Error::DimensionMismatch("template box must have positive size".into()));
        }
        Ok(ModelPayload::Template(TemplateModel {
            patch: extract_patch(frame, state),
        }))
    }

    fn respond(
        &self,
        model: &AppearanceModelHandle,
        frame: &Frame,
        candidate: &TargetState,
        grid_radius: usize,
    ) -> Result<ResponseMap> {
        let ModelPayload::Template(tm) = &model.payload else {
            return Err(Error::InvalidConfig("template backend given a non-template model".into()));
        };
        if tm.patch.len() != TEMPLATE_SIDE * TEMPLATE_SIDE {
            return Err(Error::DimensionMismatch("template patch has the wrong size".into()));
        }
        let ([ox, oy], _) = window_origin(frame.width, frame.height, candidate, grid_radius)?;
        let side = 2 * grid_radius + 1;
        let (cm, nm) = centered(&tm.patch);
        let (dx, dy) = (offsets(candidate.size[0]), offsets(candidate.size[1]));
        let mut scores = Vec::with_capacity(side * side);
        for r in 0..side as i64 {
            for c in 0..side as i64 {
                let patch = sample_patch(frame, [ox + c, oy + r], &dx, &dy);
                let (cp, np) = centered(&patch);
                scores.push((ncc_centered(&cm, nm, &cp, np) + 1.0) / 2.0);
            }
        }
        Ok(ResponseMap::new(side, side, [ox as f64, oy as f64], scores))
    }

    /// `patch <- (1 - eta) * patch + eta * frame_patch(peak)`.
    fn blend(&self, model: &ModelPayload, frame: &Frame, peak: &TargetState, eta: f64) -> Result<ModelPayload> {
        let ModelPayload::Template(tm) = model else {
            return Err(Error::InvalidConfig("template backend given a non-template model".into()));
        };
        let fresh = extract_patch(frame, peak);
        let patch = tm
            .patch
            .iter()
            .zip(&fresh)
            .map(|(old, new)| (1.0 - eta) * old + eta * new)
            .collect();
        Ok(ModelPayload::Template(TemplateModel { patch }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::{ModelRegistry, ModelUpdate, SyntheticObserver};
    use crate::rng::hashed_normal;
    use crate::state::ModelId;

    fn textured(width: usize, height: usize) -> Frame {
        let pixels = (0..width * height)
            .map(|i| (0.5 + 0.2 * hashed_normal(4, 0, i as i64, 0)).clamp(0.0, 1.0))
            .collect();
        Frame::new(width, height, 0, pixels).unwrap()
    }

    #[test]
    fn self_correlation_is_one_at_center() {
        let frame = textured(96, 80);
        let obs = TemplateObserver::new();
        let state = TargetState::new([40.0, 35.0], [24.0, 18.0]);
        let payload = obs.create_model(&frame, &state).unwrap();
        let handle = AppearanceModelHandle { id: ModelId(0), payload };
        let map = obs.respond(&handle, &frame, &state, 6).unwrap();
        let center = map.get(6, 6);
        assert!((center - 1.0).abs() < 1e-12, "center {center}");
        assert_eq!(map.peak().0, map.center());
    }

    #[test]
    fn ncc_is_invariant_to_gain_and_offset() {
        let a: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.3 * v + 0.1).collect();
        assert!((ncc(&a, &b) - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((ncc(&a, &c) + 1.0).abs() < 1e-12);
        assert_eq!(ncc(&a, &[0.5; 64]), 0.0);
    }

    fn template_registry(frame: &Frame, state: &TargetState) -> (ModelRegistry, ModelId) {
        let mut reg = ModelRegistry::new();
        let id = reg.insert(TemplateObserver.create_model(frame, state).unwrap());
        (reg, id)
    }

    #[test]
    fn zero_rate_leaves_model_unchanged() {
        let frame = textured(64, 64);
        let state = TargetState::new([30.0, 30.0], [16.0, 16.0]);
        let (mut reg, id) = template_registry(&frame, &state);
        let before = reg.get(id).unwrap().clone();
        let other = Frame::filled(64, 64, 1, 0.9);
        let up = ModelUpdate { parent: id, peak: state, likelihood: 1e9 };
        let ids = reg.update_models(&TemplateObserver, &other, &[up], 0.0, 0.0).unwrap();
        assert_eq!(reg.get(ids[0]).unwrap(), &before);
    }

    #[test]
    fn unit_rate_copies_frame_patch() {
        let frame = textured(64, 64);
        let state = TargetState::new([30.0, 30.0], [16.0, 16.0]);
        let (mut reg, id) = template_registry(&frame, &state);
        let flat = Frame::filled(64, 64, 1, 0.5);
        let up = ModelUpdate { parent: id, peak: state, likelihood: 1.0 };
        let ids = reg.update_models(&TemplateObserver, &flat, &[up], 1.0, 0.0).unwrap();
        let ModelPayload::Template(tm) = &reg.get(ids[0]).unwrap().payload else { panic!() };
        assert!(tm.patch.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn update_is_gated_by_likelihood() {
        let frame = textured(64, 64);
        let state = TargetState::new([30.0, 30.0], [16.0, 16.0]);
        let (mut reg, id) = template_registry(&frame, &state);
        let before = reg.get(id).unwrap().payload.clone();
        let flat = Frame::filled(64, 64, 1, 0.5);
        let up = ModelUpdate { parent: id, peak: state, likelihood: 1.0 };
        let ids = reg.update_models(&TemplateObserver, &flat, &[up], 1.0, 2.0).unwrap();
        assert_eq!(reg.get(ids[0]).unwrap().payload, before);
    }

    #[test]
    fn forks_and_retires_to_match_mode_count() {
        let frame = textured(64, 64);
        let s = TargetState::new([30.0, 30.0], [16.0, 16.0]);
        let mut reg = ModelRegistry::new();
        let a = reg.insert(TemplateObserver.create_model(&frame, &s).unwrap());
        let b = reg.insert(TemplateObserver.create_model(&frame, &s.with_position([20.0, 20.0])).unwrap());
        let ups = [
            ModelUpdate { parent: a, peak: s, likelihood: 1.0 },
            ModelUpdate { parent: a, peak: s.with_position([40.0, 30.0]), likelihood: 1.0 },
            ModelUpdate { parent: a, peak: s.with_position([25.0, 30.0]), likelihood: 1.0 },
        ];
        let ids = reg.update_models(&TemplateObserver, &frame, &ups, 0.01, 0.0).unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[0], a);
        assert_eq!(reg.len(), 3);
        assert!(reg.get(b).is_err());
        assert_eq!(reg.ids(), ids.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn synthetic_models_pass_through() {
        let sc = crate::observation::synthetic::tests::single_peak(0.0);
        let frame = sc.render_frame(0);
        let obs = SyntheticObserver::new(std::sync::Arc::new(sc)).unwrap();
        let mut reg = ModelRegistry::new();
        let id = reg.insert(ModelPayload::Synthetic);
        let up = ModelUpdate { parent: id, peak: TargetState::new([1.0, 1.0], [2.0, 2.0]), likelihood: 5.0 };
        let ids = reg.update_models(&obs, &frame, &[up], 0.01, 0.0).unwrap();
        assert_eq!(ids, vec![id]);
        assert_eq!(reg.get(id).unwrap().payload, ModelPayload::Synthetic);
    }

    #[test]
    fn missing_parent_is_reported() {
        let mut reg = ModelRegistry::new();
        let up = ModelUpdate { parent: ModelId(7), peak: TargetState::new([1.0, 1.0], [2.0, 2.0]), likelihood: 0.0 };
        let r = reg.update_models(&TemplateObserver, &Frame::filled(4, 4, 0, 0.0), &[up], 0.0, 0.0);
        assert!(matches!(r, Err(Error::ModelNotFound(7))));
    }
}
