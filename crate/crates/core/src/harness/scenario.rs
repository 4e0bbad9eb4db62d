//! Deterministic synthetic tracking scenarios.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{ClutterPeak, Occlusion, SyntheticScenario};
use crate::rng::RandomSource;
use crate::state::{distance, TargetState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Linear,
    FastMotion,
    Occlusion,
    Distractor,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Linear,
        ScenarioKind::FastMotion,
        ScenarioKind::Occlusion,
        ScenarioKind::Distractor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Linear => "linear",
            ScenarioKind::FastMotion => "fast-motion",
            ScenarioKind::Occlusion => "occlusion",
            ScenarioKind::Distractor => "distractor",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "linear" => Ok(ScenarioKind::Linear),
            "fast-motion" | "fast" => Ok(ScenarioKind::FastMotion),
            "occlusion" => Ok(ScenarioKind::Occlusion),
            "distractor" => Ok(ScenarioKind::Distractor),
            other => Err(Error::UnknownScenarioKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub target_size: [f64; 2],
    /// Base speed in pixels/frame when `velocity` is not given.
    pub speed: f64,
    pub velocity: Option<[f64; 2]>,
    /// First-frame center; `None` centers the whole path in the frame.
    pub start: Option<[f64; 2]>,
    pub noise_std: f64,
    pub target_width: f64,
    pub background_clutter: usize,
    pub clutter_amplitude: f64,
    pub spike_start: usize,
    pub spike_frames: usize,
    /// Extra speed along the motion direction during the spike.
    pub spike_speed: f64,
    pub occlusion_start: usize,
    pub occlusion_frames: usize,
    pub attenuation: f64,
    pub distractor_amplitude: f64,
    /// Closest approach of the distractor, in target widths.
    pub distractor_gap: f64,
    /// Lateral sweep of the distractor, pixels either side of the path.
    pub distractor_sweep: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            frames: 50,
            width: 400,
            height: 300,
            target_size: [32.0, 32.0],
            speed: 2.0,
            velocity: None,
            start: None,
            noise_std: 0.03,
            target_width: 8.0,
            background_clutter: 2,
            clutter_amplitude: 0.4,
            spike_start: 15,
            spike_frames: 5,
            spike_speed: 20.0,
            occlusion_start: 20,
            occlusion_frames: 10,
            attenuation: 0.9,
            distractor_amplitude: 0.8,
            distractor_gap: 3.0,
            distractor_sweep: 60.0,
        }
    }
}

impl ScenarioParams {
    fn validate(&self) -> Result<()> {
        let ok = self.frames >= 2
            && self.width > 0
            && self.height > 0
            && self.target_size.iter().all(|s| *s > 0.0)
            && self.noise_std >= 0.0
            && self.target_width > 0.0
            && self.clutter_amplitude >= 0.0
            && self.distractor_amplitude >= 0.0
            && (0.0..=1.0).contains(&self.attenuation);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("scenario parameters out of range".into()))
        }
    }
}

/// Builds a scenario of the given kind. Same `(kind, params, seed)` gives the
/// same scenario.
pub fn generate_scenario(kind: ScenarioKind, params: &ScenarioParams, seed: u64) -> Result<SyntheticScenario> {
    params.validate()?;
    let mut rng = RandomSource::new(seed ^ 0x5ce0_a210);
    let n = params.frames;
    let velocity = params.velocity.unwrap_or_else(|| {
        let angle = rng.uniform() * std::f64::consts::TAU;
        [params.speed * angle.cos(), params.speed * angle.sin()]
    });
    let speed = (velocity[0].powi(2) + velocity[1].powi(2)).sqrt();
    let dir = if speed > 0.0 {
        [velocity[0] / speed, velocity[1] / speed]
    } else {
        [1.0, 0.0]
    };

    let spike = kind == ScenarioKind::FastMotion;
    let mut rel = Vec::with_capacity(n);
    let mut p = [0.0, 0.0];
    for t in 0..n {
        rel.push(p);
        let mut v = velocity;
        if spike && (params.spike_start..params.spike_start + params.spike_frames).contains(&t) {
            v[0] += dir[0] * params.spike_speed;
            v[1] += dir[1] * params.spike_speed;
        }
        p = [p[0] + v[0], p[1] + v[1]];
    }
    let offset = params.start.unwrap_or_else(|| {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for q in &rel {
            for d in 0..2 {
                lo[d] = lo[d].min(q[d]);
                hi[d] = hi[d].max(q[d]);
            }
        }
        [
            (params.width as f64 - (lo[0] + hi[0])) / 2.0,
            (params.height as f64 - (lo[1] + hi[1])) / 2.0,
        ]
    });
    let truth: Vec<TargetState> = rel
        .iter()
        .map(|q| TargetState::new([q[0] + offset[0], q[1] + offset[1]], params.target_size))
        .collect();

    let mut distractor: Vec<Option<ClutterPeak>> = vec![None; n];
    if kind == ScenarioKind::Distractor {
        let perp = [-dir[1], dir[0]];
        let gap = params.distractor_gap * params.target_width;
        for (t, slot) in distractor.iter_mut().enumerate() {
            let lateral = params.distractor_sweep * (1.0 - 2.0 * t as f64 / (n - 1) as f64);
            let c = truth[t].position;
            *slot = Some(ClutterPeak {
                position: [
                    c[0] + perp[0] * lateral + dir[0] * gap,
                    c[1] + perp[1] * lateral + dir[1] * gap,
                ],
                amplitude: params.distractor_amplitude,
                width: params.target_width,
            });
        }
    }

    // Background peaks keep clear of the target and distractor paths.
    let clearance = 0.75 * (params.target_size[0] + params.target_size[1]) + 3.0 * params.target_width;
    let occupied: Vec<[f64; 2]> = truth
        .iter()
        .map(|s| s.position)
        .chain(distractor.iter().flatten().map(|c| c.position))
        .collect();
    let mut background = Vec::with_capacity(params.background_clutter);
    for _ in 0..params.background_clutter {
        let mut pos = [0.0, 0.0];
        for _ in 0..200 {
            pos = [
                rng.uniform() * params.width as f64,
                rng.uniform() * params.height as f64,
            ];
            if occupied.iter().all(|&q| distance(pos, q) >= clearance) {
                break;
            }
        }
        background.push(ClutterPeak {
            position: pos,
            amplitude: params.clutter_amplitude,
            width: params.target_width,
        });
    }

    let clutter: Vec<Vec<ClutterPeak>> = distractor
        .iter()
        .map(|d| background.iter().copied().chain(*d).collect())
        .collect();

    let occlusions = if kind == ScenarioKind::Occlusion {
        vec![Occlusion {
            start: params.occlusion_start,
            end: params.occlusion_start + params.occlusion_frames,
            attenuation: params.attenuation,
        }]
    } else {
        vec![]
    };

    let sc = SyntheticScenario {
        kind: kind.name().to_string(),
        width: params.width,
        height: params.height,
        seed,
        noise_std: params.noise_std,
        target_amplitude: 1.0,
        target_width: params.target_width,
        truth,
        clutter,
        occlusions,
    };
    sc.validate()?;
    Ok(sc)
}

/// Fixed benchmark suite: `per_kind` scenarios of every kind.
pub fn builtin_suite(per_kind: usize, params: &ScenarioParams) -> Result<Vec<SyntheticScenario>> {
    let mut out = Vec::with_capacity(per_kind * 4);
    for (k, kind) in ScenarioKind::ALL.iter().enumerate() {
        for i in 0..per_kind {
            out.push(generate_scenario(*kind, params, 1000 * k as u64 + i as u64)?);
        }
    }
    Ok(out)
}
