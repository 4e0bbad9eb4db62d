//! Constant-velocity prediction of mixture means and stratified sampling
//! from the resulting transition mixture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::state::{normalize, ModelId, Particle, StateMean, TargetState};

/// A mode carried over from the previous frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorMode {
    pub mean: StateMean,
    /// Normalized posterior weight from the previous frame.
    pub weight: f64,
    pub model_id: ModelId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    /// Predicted mean.
    pub mean: StateMean,
    /// Mixture coefficient, 1/J for every component.
    pub coefficient: f64,
    /// Previous-frame weight of the mode this component came from.
    pub prior_weight: f64,
    /// Position of that mode before prediction.
    pub previous_position: [f64; 2],
    pub model_id: ModelId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMixture {
    pub components: Vec<MixtureComponent>,
    /// Per-dimension standard deviation in `[p, s, v_p, v_s]` order.
    pub sigma: [f64; 8],
}

/// `z -> A z` with `A = [[I4, I4], [0, I4]]`.
pub fn predict_mean(z: &StateMean) -> StateMean {
    let v = z.velocity;
    StateMean {
        state: TargetState {
            position: [z.state.position[0] + v[0], z.state.position[1] + v[1]],
            size: [z.state.size[0] + v[2], z.state.size[1] + v[3]],
        },
        velocity: v,
    }
}

/// Default spread: position std 5% of the mean target size, size std 2% of
/// each size component, deterministic velocity.
pub fn default_sigma(target: &TargetState) -> [f64; 8] {
    let pos = 0.05 * target.mean_size();
    [
        pos,
        pos,
        0.02 * target.size[0],
        0.02 * target.size[1],
        0.0,
        0.0,
        0.0,
        0.0,
    ]
}

/// Keeps the `m_max` highest-weight modes (stable on ties), renormalizes
/// their weights and predicts each mean one frame ahead.
pub fn build_mixture(prior: &[PriorMode], sigma: [f64; 8], m_max: usize) -> Result<TransitionMixture> {
    if prior.is_empty() {
        return Err(Error::EmptyPrior);
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidConfig("sigma components must be >= 0".into()));
    }
    let kept = top_by_weight(prior, m_max.max(1));
    let mut weights: Vec<f64> = kept.iter().map(|m| m.weight).collect();
    normalize(&mut weights);
    let coefficient = 1.0 / kept.len() as f64;
    let components = kept
        .iter()
        .zip(weights)
        .map(|(mode, w)| MixtureComponent {
            mean: predict_mean(&mode.mean),
            coefficient,
            prior_weight: w,
            previous_position: mode.mean.state.position,
            model_id: mode.model_id,
        })
        .collect();
    Ok(TransitionMixture { components, sigma })
}

pub(crate) fn top_by_weight<T: Copy + HasWeight>(items: &[T], cap: usize) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .weight()
            .partial_cmp(&items[a].weight())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(cap);
    order.into_iter().map(|i| items[i]).collect()
}

pub(crate) trait HasWeight {
    fn weight(&self) -> f64;
}

impl HasWeight for PriorMode {
    fn weight(&self) -> f64 {
        self.weight
    }
}

/// Per-component quota for a total particle budget: `ceil(n_total / J)`.
pub fn particles_per_component(n_total: usize, components: usize) -> usize {
    n_total.max(1).div_ceil(components.max(1))
}

/// Draws `n_per_component` particles from every component. Velocity draws
/// are discarded; sizes are clamped to `[1, max_size]`.
pub fn sample_stratified(
    mix: &TransitionMixture,
    n_per_component: usize,
    max_size: Option<[f64; 2]>,
    rng: &mut RandomSource,
) -> Vec<Particle> {
    let n = n_per_component.max(1);
    let mut out = Vec::with_capacity(n * mix.components.len());
    for (j, comp) in mix.components.iter().enumerate() {
        let z = comp.mean.flatten();
        for _ in 0..n {
            let mut draw = [0.0; 8];
            for d in 0..8 {
                draw[d] = rng.normal(z[d], mix.sigma[d]);
            }
            let mut size = [draw[2].max(1.0), draw[3].max(1.0)];
            if let Some(limit) = max_size {
                size[0] = size[0].min(limit[0].max(1.0));
                size[1] = size[1].min(limit[1].max(1.0));
            }
            out.push(Particle::sampled(TargetState::new([draw[0], draw[1]], size), j));
        }
    }
    out
}
