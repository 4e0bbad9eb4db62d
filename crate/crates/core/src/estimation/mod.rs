//! Posterior over converged peaks, mode clustering, target selection,
//! ESS-gated resampling and the handoff of modes to the next frame.

mod cluster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{top_by_weight, HasWeight, PriorMode, TransitionMixture};
use crate::refinement::ConvergedPeak;
use crate::rng::RandomSource;
use crate::state::{normalize, PosteriorMode, StateMean, TargetState};

pub use cluster::{cluster_modes, kmeans, simplified_silhouette, ClusterAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Resample when ESS < gamma * (number of modes).
    pub gamma: f64,
    pub k_max: usize,
    /// Peaks spread less than this many mean target sizes form one cluster.
    pub cluster_scale: f64,
    pub kmeans_iterations: usize,
    pub kmeans_restarts: usize,
    /// Up to this many peaks, every K-means fixed point is examined.
    pub exhaustive_max_modes: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            k_max: 4,
            cluster_scale: 1.0,
            kmeans_iterations: 50,
            kmeans_restarts: 8,
            exhaustive_max_modes: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub frame_index: usize,
    pub modes: Vec<PosteriorMode>,
}

impl Posterior {
    pub fn weights(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.weight).collect()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    fn renormalize(&mut self) {
        let mut w = self.weights();
        normalize(&mut w);
        for (m, w) in self.modes.iter_mut().zip(w) {
            m.weight = w;
        }
    }
}

/// Weight of each peak: likelihood of the map generated at the peak times the
/// largest prior weight among the components that converged there.
pub fn build_posterior(peaks: &[ConvergedPeak], mixture: &TransitionMixture, frame_index: usize) -> Result<Posterior> {
    if peaks.is_empty() {
        return Err(Error::AllParticlesDiscarded);
    }
    let component = |j: usize| {
        mixture
            .components
            .get(j)
            .ok_or_else(|| Error::InvalidConfig(format!("peak refers to missing component {j}")))
    };
    let mut modes = Vec::with_capacity(peaks.len());
    for p in peaks {
        let mut prior = 0.0f64;
        for &j in p.source_counts.keys() {
            prior = prior.max(component(j)?.prior_weight);
        }
        modes.push(PosteriorMode {
            peak: p.peak,
            weight: p.likelihood * prior,
            converged_count: p.count(),
            source_counts: p.source_counts.clone(),
            likelihood: p.likelihood,
            model_id: component(p.scoring_component)?.model_id,
        });
    }
    let mut post = Posterior { frame_index, modes };
    post.renormalize();
    Ok(post)
}

fn count_then_weight(a: &PosteriorMode, b: &PosteriorMode) -> std::cmp::Ordering {
    a.converged_count
        .cmp(&b.converged_count)
        .then(a.weight.total_cmp(&b.weight))
}

/// Index of the selected mode: within each cluster the mode with the most
/// converged particles (ties: higher weight, then lower index); across
/// clusters the candidate with the highest weight (ties: lower index).
pub fn select_mode(posterior: &Posterior, clusters: &ClusterAssignment) -> Result<usize> {
    if posterior.is_empty() || clusters.labels.len() != posterior.len() {
        return Err(Error::InvalidConfig("cluster labels do not match posterior modes".into()));
    }
    let mut candidates: Vec<Option<usize>> = vec![None; clusters.k];
    for (i, mode) in posterior.modes.iter().enumerate() {
        let slot = candidates
            .get_mut(clusters.labels[i])
            .ok_or_else(|| Error::InvalidConfig("cluster label out of range".into()))?;
        match slot {
            Some(best) if count_then_weight(mode, &posterior.modes[*best]).is_le() => {}
            _ => *slot = Some(i),
        }
    }
    let mut winner: Option<usize> = None;
    for c in candidates.into_iter().flatten() {
        match winner {
            Some(w) if posterior.modes[c].weight > posterior.modes[w].weight => winner = Some(c),
            Some(w) if posterior.modes[c].weight == posterior.modes[w].weight && c < w => winner = Some(c),
            None => winner = Some(c),
            _ => {}
        }
    }
    winner.ok_or_else(|| Error::InvalidConfig("empty cluster assignment".into()))
}

pub fn estimate_state(posterior: &Posterior, clusters: &ClusterAssignment) -> Result<TargetState> {
    Ok(posterior.modes[select_mode(posterior, clusters)?].peak)
}

/// `1 / sum(w^2)`.
pub fn effective_sample_size(posterior: &Posterior) -> f64 {
    ess_of(&posterior.weights())
}

pub fn ess_of(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// Systematic resampling over modes. Selected modes are kept once each, in
/// their original order, with equal weights.
pub fn resample(posterior: &Posterior, rng: &mut RandomSource) -> Posterior {
    let n = posterior.len();
    if n == 0 {
        return posterior.clone();
    }
    let u0 = rng.uniform() / n as f64;
    let mut picked = vec![false; n];
    let mut cumulative = posterior.modes[0].weight;
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cumulative && j + 1 < n {
            j += 1;
            cumulative += posterior.modes[j].weight;
        }
        picked[j] = true;
    }
    let mut modes: Vec<PosteriorMode> = posterior
        .modes
        .iter()
        .zip(&picked)
        .filter(|(_, &p)| p)
        .map(|(m, _)| m.clone())
        .collect();
    let w = 1.0 / modes.len() as f64;
    modes.iter_mut().for_each(|m| m.weight = w);
    Posterior {
        frame_index: posterior.frame_index,
        modes,
    }
}

/// Resamples only when ESS < gamma * n. Returns the posterior and whether
/// resampling happened.
pub fn maybe_resample(posterior: &Posterior, gamma: f64, rng: &mut RandomSource) -> (Posterior, bool) {
    if effective_sample_size(posterior) < gamma * posterior.len() as f64 {
        (resample(posterior, rng), true)
    } else {
        (posterior.clone(), false)
    }
}

impl HasWeight for &PosteriorMode {
    fn weight(&self) -> f64 {
        self.weight
    }
}

/// Keeps the `m_max` heaviest modes with renormalized weights.
pub fn cap_modes(posterior: &Posterior, m_max: usize) -> Posterior {
    let refs: Vec<&PosteriorMode> = posterior.modes.iter().collect();
    let kept = top_by_weight(&refs, m_max.max(1));
    let mut out = Posterior {
        frame_index: posterior.frame_index,
        modes: kept.into_iter().cloned().collect(),
    };
    out.renormalize();
    out
}

/// Prior component whose weight was highest among those feeding `mode`.
pub fn heaviest_parent(mode: &PosteriorMode, mixture: &TransitionMixture) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in mode.source_counts.keys() {
        let w = mixture.components.get(j)?.prior_weight;
        if best.map_or(true, |b| w > mixture.components[b].prior_weight) {
            best = Some(j);
        }
    }
    best
}

/// Turns the posterior into next frame's prior modes. Velocity is the shift
/// from the previous position of the component that contributed most
/// members (zero size velocity; zero when no such component exists).
pub fn handoff_modes(posterior: &Posterior, mixture: &TransitionMixture, m_max: usize) -> Vec<PriorMode> {
    let capped = cap_modes(posterior, m_max);
    capped
        .modes
        .iter()
        .map(|m| {
            let velocity = m
                .plurality_source()
                .and_then(|j| mixture.components.get(j))
                .map(|c| {
                    [
                        m.peak.position[0] - c.previous_position[0],
                        m.peak.position[1] - c.previous_position[1],
                        0.0,
                        0.0,
                    ]
                })
                .unwrap_or([0.0; 4]);
            PriorMode {
                mean: StateMean {
                    state: m.peak,
                    velocity,
                },
                weight: m.weight,
                model_id: m.model_id,
            }
        })
        .collect()
}
