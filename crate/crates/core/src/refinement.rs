//! Iterative particle refinement: each particle re-centers its response
//! window on the window's own peak until the shift is below `epsilon`.
//! Particles ending on a common cell are merged into one converged peak.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{likelihood_of, AppearanceBackend, AppearanceModelHandle, Frame};
use crate::state::{distance, Particle, TargetState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Convergence tolerance on the per-iteration shift, pixels.
    pub epsilon: f64,
    /// Maps whose likelihood falls below this discard the particle.
    pub l_min: f64,
    pub max_iterations: usize,
    pub grid_radius: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            l_min: 0.0,
            max_iterations: 10,
            grid_radius: 15,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_iterations == 0 || self.grid_radius == 0 || !(self.l_min >= 0.0) {
            return Err(Error::InvalidConfig(
                "refinement needs epsilon > 0, l_min >= 0, max_iterations >= 1, grid_radius >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Positions visited by one particle. `start + sum(displacements)` is the
/// final position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub start: [f64; 2],
    pub displacements: Vec<[f64; 2]>,
    /// Likelihood of every map evaluated, in order.
    pub likelihoods: Vec<f64>,
}

impl RefinementTrace {
    pub fn end(&self) -> [f64; 2] {
        self.displacements
            .iter()
            .fold(self.start, |p, d| [p[0] + d[0], p[1] + d[1]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Last shift was below epsilon.
    Converged,
    /// Hit `max_iterations`; kept the best position visited.
    Capped,
    /// A map fell below `l_min`.
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    /// Final particle; `alive == false` when discarded.
    pub particle: Particle,
    pub trace: RefinementTrace,
    pub termination: Termination,
}

impl RefinementOutcome {
    pub fn survived(&self) -> bool {
        self.particle.alive
    }
}

/// Runs the refinement loop for one particle. Size stays at the sampled
/// value; positions move on the integer pixel grid.
pub fn refine_particle(
    particle: &Particle,
    model: &AppearanceModelHandle,
    backend: &dyn AppearanceBackend,
    frame: &Frame,
    cfg: &RefinementConfig,
) -> Result<RefinementOutcome> {
    let size = particle.state.size;
    let start = [particle.state.position[0].round(), particle.state.position[1].round()];
    let mut pos = start;
    let mut trace = RefinementTrace {
        start,
        displacements: Vec::new(),
        likelihoods: Vec::new(),
    };
    let mut out = particle.clone();
    for k in 0..cfg.max_iterations {
        let map = backend.respond(model, frame, &TargetState::new(pos, size), cfg.grid_radius)?;
        let lik = likelihood_of(&map);
        trace.likelihoods.push(lik);
        out.iteration_count = k + 1;
        if lik < cfg.l_min {
            out.state = TargetState::new(pos, size);
            out.likelihood = lik;
            out.alive = false;
            return Ok(RefinementOutcome {
                particle: out,
                trace,
                termination: Termination::Discarded,
            });
        }
        let (peak, _) = map.peak();
        if distance(peak, pos) < cfg.epsilon {
            out.state = TargetState::new(pos, size);
            out.likelihood = lik;
            return Ok(RefinementOutcome {
                particle: out,
                trace,
                termination: Termination::Converged,
            });
        }
        trace.displacements.push([peak[0] - pos[0], peak[1] - pos[1]]);
        pos = peak;
    }
    // Best visited position; position i is reached after i displacements.
    let mut best = 0;
    for (i, &l) in trace.likelihoods.iter().enumerate() {
        if l > trace.likelihoods[best] {
            best = i;
        }
    }
    trace.displacements.truncate(best);
    out.state = TargetState::new(trace.end(), size);
    out.likelihood = trace.likelihoods[best];
    Ok(RefinementOutcome {
        particle: out,
        trace,
        termination: Termination::Capped,
    })
}

/// Particles that finished on a common cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergedPeak {
    /// Final state of the member with the highest final-map likelihood
    /// (ties: size nearest the members' mean size).
    pub peak: TargetState,
    /// Indices into the particle list passed to `refine_all`, ascending.
    pub members: Vec<usize>,
    /// Likelihood of the response map generated at `peak`.
    pub likelihood: f64,
    /// Member count per source component.
    pub source_counts: BTreeMap<usize, usize>,
    /// Iteration count of each member, aligned with `members`.
    pub iterations: Vec<usize>,
    /// Source component of the representative member; its model scored `peak`.
    pub scoring_component: usize,
    /// Whether the response window at the peak had to be clamped to the frame.
    pub at_border: bool,
}

impl ConvergedPeak {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub outcomes: Vec<RefinementOutcome>,
    pub peaks: Vec<ConvergedPeak>,
}

impl RefinementReport {
    pub fn discarded(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.survived()).count()
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().map(|o| o.particle.iteration_count as f64).sum::<f64>() / self.outcomes.len() as f64
    }

    /// One JSON object per particle.
    pub fn write_jsonl<W: Write>(&self, frame_index: usize, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            frame: usize,
            particle: usize,
            source_component: usize,
            iterations: usize,
            termination: Termination,
            start: [f64; 2],
            displacements: &'a [[f64; 2]],
            likelihoods: &'a [f64],
        }
        for (i, o) in self.outcomes.iter().enumerate() {
            let line = Line {
                frame: frame_index,
                particle: i,
                source_component: o.particle.source_component,
                iterations: o.particle.iteration_count,
                termination: o.termination,
                start: o.trace.start,
                displacements: &o.trace.displacements,
                likelihoods: &o.trace.likelihoods,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Refines every alive particle with its source component's model and merges
/// final positions closer than `epsilon`. Peaks come out sorted by position.
pub fn refine_all(
    particles: &[Particle],
    models: &[&AppearanceModelHandle],
    backend: &dyn AppearanceBackend,
    frame: &Frame,
    cfg: &RefinementConfig,
) -> Result<RefinementReport> {
    cfg.validate()?;
    let outcomes = particles
        .par_iter()
        .map(|p| {
            let model = models.get(p.source_component).ok_or_else(|| {
                Error::InvalidConfig(format!("no model for component {}", p.source_component))
            })?;
            if p.alive {
                refine_particle(p, model, backend, frame, cfg)
            } else {
                Ok(RefinementOutcome {
                    particle: p.clone(),
                    trace: RefinementTrace {
                        start: p.state.position,
                        displacements: vec![],
                        likelihoods: vec![],
                    },
                    termination: Termination::Discarded,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let peaks = merge_outcomes(&outcomes, cfg.epsilon, frame, cfg.grid_radius);
    if peaks.is_empty() {
        return Err(Error::AllParticlesDiscarded);
    }
    Ok(RefinementReport { outcomes, peaks })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Highest likelihood first; ties go to the size nearest `mean_size`, then
/// to position and component order.
fn representative_order(a: &Particle, b: &Particle, mean_size: [f64; 2]) -> std::cmp::Ordering {
    let size_gap = |p: &Particle| distance(p.state.size, mean_size);
    let key = |p: &Particle| [p.state.position[1], p.state.position[0], p.state.size[0], p.state.size[1]];
    b.likelihood
        .total_cmp(&a.likelihood)
        .then_with(|| size_gap(a).total_cmp(&size_gap(b)))
        .then_with(|| {
            let (ka, kb) = (key(a), key(b));
            ka.iter()
                .zip(kb.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .then(a.source_component.cmp(&b.source_component))
}

/// Single-linkage grouping of surviving final positions.
pub(crate) fn merge_outcomes(
    outcomes: &[RefinementOutcome],
    merge_radius: f64,
    frame: &Frame,
    grid_radius: usize,
) -> Vec<ConvergedPeak> {
    let alive: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i].survived()).collect();
    let mut parent: Vec<usize> = (0..alive.len()).collect();
    for a in 0..alive.len() {
        for b in a + 1..alive.len() {
            let pa = outcomes[alive[a]].particle.state.position;
            let pb = outcomes[alive[b]].particle.state.position;
            if distance(pa, pb) < merge_radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..alive.len() {
        let root = find(&mut parent, a);
        groups.entry(root).or_default().push(alive[a]);
    }
    let mut peaks: Vec<ConvergedPeak> = groups
        .into_values()
        .map(|members| {
            let n = members.len() as f64;
            let mean_size = members.iter().fold([0.0, 0.0], |acc, &m| {
                let s = outcomes[m].particle.state.size;
                [acc[0] + s[0] / n, acc[1] + s[1] / n]
            });
            let rep = *members
                .iter()
                .min_by(|&&a, &&b| representative_order(&outcomes[a].particle, &outcomes[b].particle, mean_size))
                .expect("groups are non-empty");
            let rp = &outcomes[rep].particle;
            let mut source_counts = BTreeMap::new();
            for &m in &members {
                *source_counts.entry(outcomes[m].particle.source_component).or_insert(0) += 1;
            }
            let at_border = crate::observation::window_origin(frame.width, frame.height, &rp.state, grid_radius)
                .map(|(_, b)| b)
                .unwrap_or(false);
            ConvergedPeak {
                peak: rp.state,
                iterations: members.iter().map(|&m| outcomes[m].particle.iteration_count).collect(),
                members,
                likelihood: rp.likelihood,
                source_counts,
                scoring_component: rp.source_component,
                at_border,
            }
        })
        .collect();
    peaks.sort_by(|a, b| {
        a.peak.position[1]
            .total_cmp(&b.peak.position[1])
            .then(a.peak.position[0].total_cmp(&b.peak.position[0]))
    });
    peaks
}
