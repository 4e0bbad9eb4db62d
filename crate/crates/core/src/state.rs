//! Domain types shared across the filter: target boxes, mixture means,
//! particles, response maps and posterior modes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Identifier of an appearance model held by an observer's registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId(pub u32);

/// Axis-aligned target box: center position and (width, height), in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: [f64; 2],
    pub size: [f64; 2],
}

impl TargetState {
    pub fn new(position: [f64; 2], size: [f64; 2]) -> Self {
        Self { position, size }
    }

    /// Build from a top-left `x,y,w,h` box.
    pub fn from_corner_box(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            position: [x + w / 2.0, y + h / 2.0],
            size: [w, h],
        }
    }

    /// `[x1, y1, x2, y2]`.
    pub fn corners(&self) -> [f64; 4] {
        let [cx, cy] = self.position;
        let [w, h] = self.size;
        [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
    }

    pub fn is_valid(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.size.iter().all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn mean_size(&self) -> f64 {
        (self.size[0] + self.size[1]) / 2.0
    }

    pub fn distance_to(&self, other: &TargetState) -> f64 {
        distance(self.position, other.position)
    }

    pub fn with_position(&self, position: [f64; 2]) -> Self {
        Self {
            position,
            size: self.size,
        }
    }

    /// Intersection over union, with areas taken from the corner form so that
    /// identical boxes give exactly 1.
    pub fn iou(&self, other: &TargetState) -> f64 {
        let a = self.corners();
        let b = other.corners();
        let area = |c: &[f64; 4]| (c[2] - c[0]).max(0.0) * (c[3] - c[1]).max(0.0);
        let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
        let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
        let inter = iw * ih;
        let union = area(&a) + area(&b) - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mixture mean: a target state plus its velocity `[vpx, vpy, vsw, vsh]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMean {
    pub state: TargetState,
    pub velocity: [f64; 4],
}

impl StateMean {
    pub fn at_rest(state: TargetState) -> Self {
        Self {
            state,
            velocity: [0.0; 4],
        }
    }

    /// `[px, py, sw, sh, vpx, vpy, vsw, vsh]`.
    pub fn flatten(&self) -> [f64; 8] {
        let p = self.state.position;
        let s = self.state.size;
        let v = self.velocity;
        [p[0], p[1], s[0], s[1], v[0], v[1], v[2], v[3]]
    }

    pub fn unflatten(z: &[f64; 8]) -> Self {
        Self {
            state: TargetState {
                position: [z[0], z[1]],
                size: [z[2], z[3]],
            },
            velocity: [z[4], z[5], z[6], z[7]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// A sampled hypothesis and what refinement did to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: TargetState,
    pub initial_state: TargetState,
    pub source_component: usize,
    pub iteration_count: usize,
    pub likelihood: f64,
    pub alive: bool,
}

impl Particle {
    pub fn sampled(state: TargetState, source_component: usize) -> Self {
        Self {
            state,
            initial_state: state,
            source_component,
            iteration_count: 0,
            likelihood: 0.0,
            alive: true,
        }
    }
}

/// Row-major grid of correlation scores. Cell `(row, col)` sits at pixel
/// `origin + cell_size * (col, row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMap {
    pub rows: usize,
    pub cols: usize,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub scores: Vec<f64>,
}

impl ResponseMap {
    pub fn new(rows: usize, cols: usize, origin: [f64; 2], scores: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "response map must be non-empty");
        assert_eq!(scores.len(), rows * cols, "score count must be rows*cols");
        Self {
            rows,
            cols,
            origin,
            cell_size: 1.0,
            scores,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    pub fn cell_position(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + self.cell_size * col as f64,
            self.origin[1] + self.cell_size * row as f64,
        ]
    }

    /// Pixel position of the center cell.
    pub fn center(&self) -> [f64; 2] {
        self.cell_position(self.rows / 2, self.cols / 2)
    }

    /// Position and score of the maximum cell; ties go to the lowest
    /// row-major index.
    pub fn peak(&self) -> ([f64; 2], f64) {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        (
            self.cell_position(best / self.cols, best % self.cols),
            self.scores[best],
        )
    }
}

pub fn peak_of(map: &ResponseMap) -> ([f64; 2], f64) {
    map.peak()
}

/// One support point of the filtering posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMode {
    pub peak: TargetState,
    pub weight: f64,
    /// Number of particles that ended on this peak.
    pub converged_count: usize,
    /// Member count per prior mixture component.
    pub source_counts: BTreeMap<usize, usize>,
    /// Likelihood of the response map generated at `peak` with `model_id`.
    pub likelihood: f64,
    pub model_id: ModelId,
}

impl PosteriorMode {
    pub fn source_components(&self) -> BTreeSet<usize> {
        self.source_counts.keys().copied().collect()
    }

    /// Component contributing the most members; ties go to the lowest index.
    pub fn plurality_source(&self) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (&j, &n) in &self.source_counts {
            if best.map_or(true, |(_, bn)| n > bn) {
                best = Some((j, n));
            }
        }
        best.map(|(j, _)| j)
    }
}

/// Scale weights to sum to one. All-zero input becomes uniform.
pub fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() {
        return;
    }
    if total > 0.0 && total.is_finite() {
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn flatten_zero_layout() {
        let z = StateMean::at_rest(TargetState::new([0.0, 0.0], [1.0, 1.0]));
        assert_eq!(z.flatten(), [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn flatten_order() {
        let z = StateMean {
            state: TargetState::new([10.0, 20.0], [30.0, 40.0]),
            velocity: [1.0, 2.0, 3.0, 4.0],
        };
        assert_eq!(z.flatten(), [10.0, 20.0, 30.0, 40.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn flatten_round_trip_seeded() {
        let mut rng = RandomSource::new(2024);
        for _ in 0..100 {
            let mut v = [0.0; 8];
            v.iter_mut().for_each(|x| *x = rng.normal(0.0, 100.0));
            let z = StateMean::unflatten(&v);
            assert_eq!(StateMean::unflatten(&z.flatten()), z);
            assert_eq!(z.flatten(), v);
        }
    }

    #[test]
    fn peak_center_spike() {
        let mut s = vec![0.0; 9];
        s[4] = 1.0;
        let m = ResponseMap::new(3, 3, [10.0, 20.0], s);
        assert_eq!(peak_of(&m), ([11.0, 21.0], 1.0));
        assert_eq!(m.center(), [11.0, 21.0]);
    }

    #[test]
    fn peak_tie_goes_to_first_cell() {
        let m = ResponseMap::new(3, 3, [5.0, 6.0], vec![0.25; 9]);
        assert_eq!(peak_of(&m), ([5.0, 6.0], 0.25));
    }

    #[test]
    fn peak_matches_exhaustive_scan() {
        let mut rng = RandomSource::new(99);
        let scores: Vec<f64> = (0..64 * 64).map(|_| rng.uniform()).collect();
        let m = ResponseMap::new(64, 64, [-3.0, 7.0], scores.clone());
        let (mut br, mut bc, mut bs) = (0, 0, f64::NEG_INFINITY);
        for r in 0..64 {
            for c in 0..64 {
                if scores[r * 64 + c] > bs {
                    bs = scores[r * 64 + c];
                    br = r;
                    bc = c;
                }
            }
        }
        assert_eq!(m.peak(), ([-3.0 + bc as f64, 7.0 + br as f64], bs));
        // repeated calls agree
        assert_eq!(m.peak(), m.peak());
    }

    #[test]
    fn iou_identical_is_exactly_one() {
        let a = TargetState::from_corner_box(0.1, 0.7, 0.2, 13.3);
        assert_eq!(a.iou(&a), 1.0);
        let b = a.with_position([a.position[0] + 100.0, a.position[1]]);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn plurality_tie_picks_lowest_component() {
        let mode = PosteriorMode {
            peak: TargetState::new([0.0, 0.0], [1.0, 1.0]),
            weight: 1.0,
            converged_count: 4,
            source_counts: [(3, 2), (1, 2)].into_iter().collect(),
            likelihood: 1.0,
            model_id: ModelId(0),
        };
        assert_eq!(mode.plurality_source(), Some(1));
    }
}
