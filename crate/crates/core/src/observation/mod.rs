//! Appearance models and correlation response maps.
//!
//! A backend turns (model, frame, candidate box) into a response map centered
//! on the candidate. Two backends ship: an analytic synthetic field driven by
//! a scenario description, and normalized cross-correlation against a
//! grayscale template.

mod synthetic;
mod template;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{ModelId, ResponseMap, TargetState};

pub use synthetic::{ClutterPeak, Occlusion, SyntheticObserver, SyntheticScenario};
pub use template::{ncc, TemplateModel, TemplateObserver, TEMPLATE_SIDE};

/// Grayscale frame, intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub index: usize,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, index: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} frame with {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::InvalidConfig("frame intensities must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            index,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, index: usize, value: f64) -> Self {
        Self {
            width,
            height,
            index,
            pixels: vec![value; width * height],
        }
    }

    /// Pixel lookup with edge replication.
    pub fn at_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.pixels[y * self.width + x]
    }

    pub fn dims(&self) -> [f64; 2] {
        [self.width as f64, self.height as f64]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Synthetic,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelPayload {
    /// The synthetic field needs no state.
    Synthetic,
    Template(TemplateModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceModelHandle {
    pub id: ModelId,
    pub payload: ModelPayload,
}

/// Source of correlation response maps.
pub trait AppearanceBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Model describing the target at `state` in `frame`.
    fn create_model(&self, frame: &Frame, state: &TargetState) -> Result<ModelPayload>;

    /// `(2r+1)^2` map centered at the candidate position (snapped to the
    /// pixel grid and clamped so the window stays inside the frame).
    fn respond(
        &self,
        model: &AppearanceModelHandle,
        frame: &Frame,
        candidate: &TargetState,
        grid_radius: usize,
    ) -> Result<ResponseMap>;

    /// Blend the appearance at `peak` into the model with rate `eta`.
    fn blend(&self, model: &ModelPayload, frame: &Frame, peak: &TargetState, eta: f64) -> Result<ModelPayload>;
}

/// Sum of scores with negatives clipped to zero.
pub fn likelihood_of(map: &ResponseMap) -> f64 {
    map.scores.iter().map(|s| s.max(0.0)).sum()
}

/// Top-left pixel of the response window and whether clamping moved it.
pub(crate) fn window_origin(
    width: usize,
    height: usize,
    candidate: &TargetState,
    grid_radius: usize,
) -> Result<([i64; 2], bool)> {
    if grid_radius == 0 {
        return Err(Error::InvalidConfig("grid radius must be >= 1".into()));
    }
    if !candidate.position.iter().all(|v| v.is_finite()) {
        return Err(Error::DimensionMismatch("candidate position is not finite".into()));
    }
    let side = 2 * grid_radius + 1;
    if width < side || height < side {
        return Err(Error::DimensionMismatch(format!(
            "{width}x{height} frame cannot hold a {side}x{side} response window"
        )));
    }
    let r = grid_radius as i64;
    let clamp = |v: f64, extent: usize| {
        let c = v.round() as i64;
        let cc = c.clamp(r, extent as i64 - 1 - r);
        (cc - r, cc != c)
    };
    let (ox, bx) = clamp(candidate.position[0], width);
    let (oy, by) = clamp(candidate.position[1], height);
    Ok(([ox, oy], bx || by))
}

/// Request to carry a model forward for one surviving mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelUpdate {
    /// Model the mode inherits from (its highest-weight parent's model).
    pub parent: ModelId,
    pub peak: TargetState,
    pub likelihood: f64,
}

/// Live appearance models keyed by id.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<ModelId, AppearanceModelHandle>,
    next_id: u32,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, payload: ModelPayload) -> ModelId {
        let id = ModelId(self.next_id);
        self.next_id += 1;
        self.models.insert(id, AppearanceModelHandle { id, payload });
        id
    }

    pub fn get(&self, id: ModelId) -> Result<&AppearanceModelHandle> {
        self.models.get(&id).ok_or(Error::ModelNotFound(id.0))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> Vec<ModelId> {
        self.models.keys().copied().collect()
    }

    /// Produces exactly one model per update request, in request order
    /// (callers pass modes sorted by descending weight). The first request
    /// naming a parent keeps the parent's id; later ones fork a copy. Blending
    /// is skipped when the mode's likelihood is below `l_update`. Models no
    /// request refers to are retired.
    pub fn update_models(
        &mut self,
        backend: &dyn AppearanceBackend,
        frame: &Frame,
        updates: &[ModelUpdate],
        eta: f64,
        l_update: f64,
    ) -> Result<Vec<ModelId>> {
        let mut next = BTreeMap::new();
        let mut claimed = BTreeSet::new();
        let mut ids = Vec::with_capacity(updates.len());
        for up in updates {
            self.get(up.parent)?;
            let id = if claimed.insert(up.parent) {
                up.parent
            } else {
                let id = ModelId(self.next_id);
                self.next_id += 1;
                id
            };
            let parent = self.get(up.parent)?;
            let payload = if up.likelihood >= l_update && eta > 0.0 {
                backend.blend(&parent.payload, frame, &up.peak, eta)?
            } else {
                parent.payload.clone()
            };
            next.insert(id, AppearanceModelHandle { id, payload });
            ids.push(id);
        }
        self.models = next;
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn likelihood_of_zero_map() {
        assert_eq!(likelihood_of(&ResponseMap::new(3, 3, [0.0, 0.0], vec![0.0; 9])), 0.0);
    }

    #[test]
    fn likelihood_of_ones() {
        assert_eq!(likelihood_of(&ResponseMap::new(3, 3, [0.0, 0.0], vec![1.0; 9])), 9.0);
    }

    #[test]
    fn likelihood_clips_negatives() {
        let m = ResponseMap::new(1, 3, [0.0, 0.0], vec![-5.0, 1.0, 2.0]);
        assert_eq!(likelihood_of(&m), 3.0);
    }

    #[test]
    fn likelihood_matches_double_loop() {
        let mut rng = RandomSource::new(31);
        let scores: Vec<f64> = (0..31 * 31).map(|_| rng.uniform()).collect();
        let m = ResponseMap::new(31, 31, [0.0, 0.0], scores.clone());
        let mut oracle = 0.0;
        for r in 0..31 {
            for c in 0..31 {
                oracle += scores[r * 31 + c];
            }
        }
        assert!((likelihood_of(&m) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn window_is_clamped_inside_frame() {
        let s = TargetState::new([2.0, 99.0], [10.0, 10.0]);
        let (o, border) = window_origin(100, 100, &s, 5).unwrap();
        assert_eq!(o, [0, 89]);
        assert!(border);
        let (o, border) = window_origin(100, 100, &s.with_position([50.4, 49.6]), 5).unwrap();
        assert_eq!(o, [45, 45]);
        assert!(!border);
    }

    #[test]
    fn window_larger_than_frame_is_rejected() {
        let s = TargetState::new([5.0, 5.0], [4.0, 4.0]);
        assert!(matches!(window_origin(10, 40, &s, 15), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn frame_rejects_out_of_range_pixels() {
        assert!(Frame::new(2, 1, 0, vec![0.5, 1.5]).is_err());
        assert!(Frame::new(2, 2, 0, vec![0.5, 0.5]).is_err());
        assert!(Frame::new(2, 1, 0, vec![0.0, 1.0]).is_ok());
    }
}
