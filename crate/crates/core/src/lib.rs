//! Single-target visual tracking with an iterative correlation particle
//! filter.
//!
//! Each frame, particles drawn from a mixture of constant-velocity
//! predictions climb their correlation response maps until they settle on a
//! peak. Settled peaks become the posterior support, so weights are always
//! evaluated where the particles actually ended up. Posterior modes are
//! clustered with K-means, the estimate is taken from the strongest cluster,
//! and modes carry their own appearance models into the next frame.
//!
//! The [`harness`] module adds synthetic scenarios, sequence I/O, metrics and
//! the variant ablation used by the `d2cip` binary.

pub mod error;
pub mod estimation;
pub mod harness;
pub mod motion;
pub mod observation;
pub mod refinement;
pub mod rng;
pub mod state;

pub use error::{Error, Result};
pub use estimation::{
    build_posterior, cluster_modes, effective_sample_size, estimate_state, maybe_resample, resample, select_mode,
    ClusterAssignment, EstimatorConfig, Posterior,
};
pub use motion::{build_mixture, predict_mean, sample_stratified, MixtureComponent, PriorMode, TransitionMixture};
pub use observation::{
    likelihood_of, AppearanceBackend, AppearanceModelHandle, BackendKind, Frame, ModelPayload, ModelRegistry,
    SyntheticObserver, SyntheticScenario, TemplateObserver,
};
pub use refinement::{refine_all, refine_particle, ConvergedPeak, RefinementConfig, RefinementReport};
pub use rng::RandomSource;
pub use state::{peak_of, ModelId, Particle, PosteriorMode, ResponseMap, StateMean, TargetState};
