#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use d2cip::observation::{ClutterPeak, SyntheticObserver, SyntheticScenario};
use d2cip::state::{ModelId, PosteriorMode};
use d2cip::{AppearanceModelHandle, Frame, ModelPayload, Particle, TargetState};

pub const SIZE: [f64; 2] = [20.0, 20.0];

/// Static scene: target at `target`, optional extra peaks, `frames` frames.
pub fn scene(target: [f64; 2], extra: &[([f64; 2], f64)], noise: f64, frames: usize) -> SyntheticScenario {
    SyntheticScenario {
        kind: "static".into(),
        width: 160,
        height: 120,
        seed: 77,
        noise_std: noise,
        target_amplitude: 1.0,
        target_width: 6.0,
        truth: vec![TargetState::new(target, SIZE); frames],
        clutter: vec![
            extra
                .iter()
                .map(|&(position, amplitude)| ClutterPeak {
                    position,
                    amplitude,
                    width: 6.0,
                })
                .collect();
            frames
        ],
        occlusions: vec![],
    }
}

pub fn observer(sc: SyntheticScenario) -> (SyntheticObserver, Vec<Frame>) {
    let frames = sc.render_all();
    (SyntheticObserver::new(Arc::new(sc)).unwrap(), frames)
}

pub fn handle() -> AppearanceModelHandle {
    AppearanceModelHandle {
        id: ModelId(0),
        payload: ModelPayload::Synthetic,
    }
}

pub fn particle(x: f64, y: f64, component: usize) -> Particle {
    Particle::sampled(TargetState::new([x, y], SIZE), component)
}

pub fn mode(position: [f64; 2], weight: f64, count: usize) -> PosteriorMode {
    PosteriorMode {
        peak: TargetState::new(position, SIZE),
        weight,
        converged_count: count,
        source_counts: BTreeMap::from([(0, count)]),
        likelihood: 1.0,
        model_id: ModelId(0),
    }
}
