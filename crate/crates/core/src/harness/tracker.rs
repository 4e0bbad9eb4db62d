//! Per-frame tracking loop: predict, sample, refine, weight, cluster,
//! estimate, resample, hand off, update models.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant, L_MIN_FRACTION};
use crate::error::{Error, Result};
use crate::estimation::{
    build_posterior, cap_modes, cluster_modes, effective_sample_size, handoff_modes, heaviest_parent,
    maybe_resample, resample, select_mode, ClusterAssignment, Posterior,
};
use crate::motion::{build_mixture, default_sigma, particles_per_component, sample_stratified, PriorMode, TransitionMixture};
use crate::observation::{
    likelihood_of, AppearanceBackend, AppearanceModelHandle, BackendKind, Frame, ModelRegistry, ModelUpdate,
    SyntheticObserver, SyntheticScenario, TemplateObserver,
};
use crate::refinement::{refine_all, RefinementReport};
use crate::rng::RandomSource;
use crate::state::{distance, normalize, ModelId, Particle, PosteriorMode, StateMean, TargetState};

/// Frames plus per-frame ground truth.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Frame>,
    pub truth: Vec<TargetState>,
    /// Present for synthetic sequences.
    pub scenario: Option<Arc<SyntheticScenario>>,
}

impl Sequence {
    pub fn from_scenario(name: impl Into<String>, scenario: SyntheticScenario) -> Self {
        let frames = scenario.render_all();
        Self {
            name: name.into(),
            truth: scenario.truth.clone(),
            frames,
            scenario: Some(Arc::new(scenario)),
        }
    }
}

pub fn make_backend(kind: BackendKind, seq: &Sequence) -> Result<Arc<dyn AppearanceBackend>> {
    match kind {
        BackendKind::Synthetic => {
            let sc = seq
                .scenario
                .clone()
                .ok_or_else(|| Error::InvalidConfig("synthetic backend needs a scenario.json".into()))?;
            Ok(Arc::new(SyntheticObserver::new(sc)?))
        }
        BackendKind::Template => Ok(Arc::new(TemplateObserver::new())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub ess: f64,
    pub modes: usize,
    pub clusters: usize,
    pub discarded: usize,
    pub mean_iterations: f64,
    pub resampled: bool,
    pub lost: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub estimate: TargetState,
    pub truth: TargetState,
    pub diagnostics: FrameDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub sequence: String,
    pub variant: Variant,
    pub seed: u64,
    pub l_min: f64,
    pub frames: Vec<FrameRecord>,
}

/// Everything one step produced, for inspection and tracing.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub estimate: TargetState,
    /// Posterior before resampling; `None` when the track was lost.
    pub posterior: Option<Posterior>,
    pub clusters: Option<ClusterAssignment>,
    pub selected: Option<usize>,
    pub report: Option<RefinementReport>,
    /// Models as they were when this frame was scored.
    pub scoring_models: BTreeMap<ModelId, AppearanceModelHandle>,
    pub diagnostics: FrameDiagnostics,
}

/// Stateful single-target tracker.
pub struct Tracker<'a> {
    cfg: RunConfig,
    backend: &'a dyn AppearanceBackend,
    registry: ModelRegistry,
    prior: Vec<PriorMode>,
    rng: RandomSource,
    sigma: [f64; 8],
    l_min: f64,
    last_estimate: TargetState,
}

impl<'a> Tracker<'a> {
    /// Initializes on the first frame at the given box.
    pub fn new(cfg: &RunConfig, backend: &'a dyn AppearanceBackend, first: &Frame, init: TargetState) -> Result<Self> {
        cfg.validate()?;
        if backend.kind() != cfg.backend {
            return Err(Error::InvalidConfig("backend does not match the run configuration".into()));
        }
        if !init.is_valid() {
            return Err(Error::InvalidConfig("initial box must have positive size".into()));
        }
        let mut registry = ModelRegistry::new();
        let id = registry.insert(backend.create_model(first, &init)?);
        let l_min = match cfg.l_min {
            Some(l) => l,
            None => {
                let map = backend.respond(registry.get(id)?, first, &init, cfg.grid_radius)?;
                L_MIN_FRACTION * likelihood_of(&map)
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            backend,
            registry,
            prior: vec![PriorMode {
                mean: StateMean::at_rest(init),
                weight: 1.0,
                model_id: id,
            }],
            rng: RandomSource::new(cfg.seed),
            sigma: cfg.sigma.unwrap_or_else(|| default_sigma(&init)),
            l_min,
            last_estimate: init,
        })
    }

    pub fn l_min(&self) -> f64 {
        self.l_min
    }

    pub fn prior(&self) -> &[PriorMode] {
        &self.prior
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn step(&mut self, frame: &Frame) -> Result<FrameOutput> {
        let mixture = build_mixture(&self.prior, self.sigma, self.cfg.m_max)?;
        let n_per = particles_per_component(self.cfg.n_total, mixture.components.len());
        let particles = sample_stratified(&mixture, n_per, Some(frame.dims()), &mut self.rng);
        let scoring_models: BTreeMap<ModelId, AppearanceModelHandle> = mixture
            .components
            .iter()
            .map(|c| Ok((c.model_id, self.registry.get(c.model_id)?.clone())))
            .collect::<Result<_>>()?;
        let models: Vec<&AppearanceModelHandle> =
            mixture.components.iter().map(|c| &scoring_models[&c.model_id]).collect();
        let refine_cfg = self.cfg.refinement(self.l_min);

        let stepped = if self.cfg.variant == Variant::Pf {
            single_shift(&particles, &models, &mixture, self.backend, frame, &self.cfg, self.l_min)
                .map(|(post, best, discarded)| (post, Some(best), None, discarded, 1.0))
        } else {
            refine_all(&particles, &models, self.backend, frame, &refine_cfg).and_then(|report| {
                let post = build_posterior(&report.peaks, &mixture, frame.index)?;
                let (d, it) = (report.discarded(), report.mean_iterations());
                Ok((post, None, Some(report), d, it))
            })
        };
        let (posterior, pf_choice, report, discarded, mean_iterations) = match stepped {
            Ok(v) => v,
            Err(Error::AllParticlesDiscarded) => return Ok(self.coast(mixture, scoring_models, particles.len())),
            Err(e) => return Err(e),
        };

        let clusters = if self.cfg.variant.clusters() {
            cluster_modes(&posterior, &self.cfg.estimator(), &mut self.rng)
        } else {
            ClusterAssignment::single(&posterior.modes.iter().map(|m| m.peak.position).collect::<Vec<_>>())
        };
        let selected = match pf_choice {
            Some(i) => i,
            None => select_mode(&posterior, &clusters)?,
        };
        let estimate = posterior.modes[selected].peak;
        let ess = effective_sample_size(&posterior);

        let (carried, resampled) = if self.cfg.variant.gated_resampling() {
            maybe_resample(&posterior, self.cfg.gamma, &mut self.rng)
        } else {
            (resample(&posterior, &mut self.rng), true)
        };
        let carried = cap_modes(&carried, self.cfg.m_max);
        let mut next = handoff_modes(&carried, &mixture, self.cfg.m_max);

        if self.cfg.variant.per_mode_models() {
            let updates: Vec<ModelUpdate> = carried
                .modes
                .iter()
                .map(|m| ModelUpdate {
                    parent: heaviest_parent(m, &mixture)
                        .map(|j| mixture.components[j].model_id)
                        .unwrap_or(m.model_id),
                    peak: m.peak,
                    likelihood: m.likelihood,
                })
                .collect();
            let ids = self
                .registry
                .update_models(self.backend, frame, &updates, self.cfg.eta, self.l_min)?;
            next.iter_mut().zip(ids).for_each(|(p, id)| p.model_id = id);
        } else {
            let shared = self.prior[0].model_id;
            let up = ModelUpdate {
                parent: shared,
                peak: estimate,
                likelihood: posterior.modes[selected].likelihood,
            };
            let ids = self
                .registry
                .update_models(self.backend, frame, &[up], self.cfg.eta, self.l_min)?;
            next.iter_mut().for_each(|p| p.model_id = ids[0]);
        }

        self.prior = next;
        self.last_estimate = estimate;
        Ok(FrameOutput {
            estimate,
            diagnostics: FrameDiagnostics {
                ess,
                modes: posterior.len(),
                clusters: clusters.k,
                discarded,
                mean_iterations,
                resampled,
                lost: false,
            },
            posterior: Some(posterior),
            clusters: Some(clusters),
            selected: Some(selected),
            report,
            scoring_models,
        })
    }

    /// Every particle was discarded: hold the last estimate and let the
    /// predicted means carry the prior forward.
    fn coast(
        &mut self,
        mixture: TransitionMixture,
        scoring_models: BTreeMap<ModelId, AppearanceModelHandle>,
        n: usize,
    ) -> FrameOutput {
        self.prior = mixture
            .components
            .iter()
            .map(|c| PriorMode {
                mean: c.mean,
                weight: c.prior_weight,
                model_id: c.model_id,
            })
            .collect();
        FrameOutput {
            estimate: self.last_estimate,
            posterior: None,
            clusters: None,
            selected: None,
            report: None,
            scoring_models,
            diagnostics: FrameDiagnostics {
                discarded: n,
                lost: true,
                ..FrameDiagnostics::default()
            },
        }
    }
}

/// Baseline step: each particle is scored by the map at its sampled position
/// and moved once to that map's peak. Coinciding shifted positions are pooled
/// with summed weights. Returns the posterior, the mode holding the single
/// heaviest particle, and the discard count.
fn single_shift(
    particles: &[Particle],
    models: &[&AppearanceModelHandle],
    mixture: &TransitionMixture,
    backend: &dyn AppearanceBackend,
    frame: &Frame,
    cfg: &RunConfig,
    l_min: f64,
) -> Result<(Posterior, usize, usize)> {
    struct Shifted {
        to: TargetState,
        weight: f64,
        likelihood: f64,
        component: usize,
    }
    let mut shifted = Vec::with_capacity(particles.len());
    for p in particles {
        let at = p.state.with_position([p.state.position[0].round(), p.state.position[1].round()]);
        let map = backend.respond(models[p.source_component], frame, &at, cfg.grid_radius)?;
        let lik = likelihood_of(&map);
        if lik < l_min {
            continue;
        }
        let comp = &mixture.components[p.source_component];
        shifted.push(Shifted {
            to: at.with_position(map.peak().0),
            weight: lik * comp.prior_weight,
            likelihood: lik,
            component: p.source_component,
        });
    }
    if shifted.is_empty() {
        return Err(Error::AllParticlesDiscarded);
    }
    let discarded = particles.len() - shifted.len();
    let mut modes: Vec<PosteriorMode> = Vec::new();
    let mut heaviest: Vec<f64> = Vec::new();
    let mut best = (0usize, f64::NEG_INFINITY);
    for s in &shifted {
        let slot = modes
            .iter()
            .position(|m| distance(m.peak.position, s.to.position) < cfg.epsilon);
        let i = match slot {
            Some(i) => i,
            None => {
                modes.push(PosteriorMode {
                    peak: s.to,
                    weight: 0.0,
                    converged_count: 0,
                    source_counts: BTreeMap::new(),
                    likelihood: 0.0,
                    model_id: mixture.components[s.component].model_id,
                });
                heaviest.push(f64::NEG_INFINITY);
                modes.len() - 1
            }
        };
        let m = &mut modes[i];
        m.weight += s.weight;
        m.converged_count += 1;
        *m.source_counts.entry(s.component).or_insert(0) += 1;
        if s.weight > heaviest[i] {
            heaviest[i] = s.weight;
            m.likelihood = s.likelihood;
            m.peak = s.to;
        }
        if s.weight > best.1 {
            best = (i, s.weight);
        }
    }
    let mut w: Vec<f64> = modes.iter().map(|m| m.weight).collect();
    normalize(&mut w);
    modes.iter_mut().zip(w).for_each(|(m, w)| m.weight = w);
    Ok((
        Posterior {
            frame_index: frame.index,
            modes,
        },
        best.0,
        discarded,
    ))
}

/// Runs the tracker over a sequence with a backend built from the config.
pub fn run_sequence(cfg: &RunConfig, seq: &Sequence) -> Result<TrackResult> {
    let backend = make_backend(cfg.backend, seq)?;
    run_sequence_with(cfg, seq, backend.as_ref())
}

/// One-pass evaluation: initialized from the first ground-truth box, never
/// re-initialized. Frame 0 reports the initial box.
pub fn run_sequence_with(cfg: &RunConfig, seq: &Sequence, backend: &dyn AppearanceBackend) -> Result<TrackResult> {
    run_sequence_observed(cfg, seq, backend, |_, _| Ok(()))
}

/// Like [`run_sequence_with`], handing every step's output to `on_frame`.
pub fn run_sequence_observed<F>(
    cfg: &RunConfig,
    seq: &Sequence,
    backend: &dyn AppearanceBackend,
    mut on_frame: F,
) -> Result<TrackResult>
where
    F: FnMut(usize, &FrameOutput) -> Result<()>,
{
    if seq.frames.len() < 2 {
        return Err(Error::SequenceTooShort(seq.frames.len()));
    }
    if seq.truth.len() != seq.frames.len() {
        return Err(Error::LengthMismatch {
            frames: seq.frames.len(),
            truth: seq.truth.len(),
        });
    }
    let mut tracker = Tracker::new(cfg, backend, &seq.frames[0], seq.truth[0])?;
    let mut frames = Vec::with_capacity(seq.frames.len());
    frames.push(FrameRecord {
        index: 0,
        estimate: seq.truth[0],
        truth: seq.truth[0],
        diagnostics: FrameDiagnostics {
            ess: 1.0,
            modes: 1,
            clusters: 1,
            ..FrameDiagnostics::default()
        },
    });
    for (t, frame) in seq.frames.iter().enumerate().skip(1) {
        let out = tracker.step(frame)?;
        on_frame(t, &out)?;
        frames.push(FrameRecord {
            index: t,
            estimate: out.estimate,
            truth: seq.truth[t],
            diagnostics: out.diagnostics,
        });
    }
    Ok(TrackResult {
        sequence: seq.name.clone(),
        variant: cfg.variant,
        seed: cfg.seed,
        l_min: tracker.l_min(),
        frames,
    })
}
