//! Growing graph sequences `t -> G_t` and their monotonicity check.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GraphSnapshot, VertexId};
use crate::isoperimetry::IsoperimetricProfile;
use crate::rng::WalkRng;

/// A time-indexed family of finite multigraph snapshots.
///
/// Implementations must be safe for concurrent `snapshot_at` calls. Snapshots
/// returned for a frozen interval should be the same `Arc`.
pub trait GraphSequence: Send + Sync {
    /// Registry name of the family.
    fn name(&self) -> &str;

    /// Declared horizon; snapshots are guaranteed for `t <= horizon`.
    fn horizon(&self) -> usize;

    fn snapshot_at(&self, t: usize) -> Result<Arc<GraphSnapshot>>;

    /// Default starting vertex `x0`.
    fn origin(&self) -> VertexId;

    /// Declared laziness floor.
    fn gamma(&self) -> Option<f64> {
        None
    }

    /// Declared uniform degree bound.
    fn delta_cap(&self) -> Option<u64> {
        None
    }

    /// Stage start times when the sequence is piecewise constant.
    fn frozen_schedule(&self) -> Option<Vec<usize>> {
        None
    }

    fn volume(&self, t: usize) -> Result<u64> {
        Ok(self.snapshot_at(t)?.volume())
    }

    /// Certified lower bound on the isoperimetric profile at time `t`.
    fn analytic_profile(&self, _t: usize) -> Option<IsoperimetricProfile> {
        None
    }

    /// Radius `r(t)` of the complete limiting-graph ball contained in `G_t`.
    fn radius_at(&self, _t: usize) -> Option<u64> {
        None
    }

    /// `(v(t) - v(B(x0, r(t)))) / v(t)` with the ball volume measured in the
    /// limiting graph.
    fn ball_like_gap(&self, _t: usize) -> Option<f64> {
        None
    }

    /// Draws `X_{t+1}` given `X_t = x` from `pi_t(x, .) / pi_t(x)`.
    fn sample_step(&self, t: usize, x: VertexId, rng: &mut WalkRng) -> Result<VertexId> {
        let g = self.snapshot_at(t)?;
        let i = g.try_index(x)?;
        sample_row(&g, i, rng).map(|j| g.id(j))
    }

    /// Family parameters for run metadata.
    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({ "family": self.name() })
    }
}

/// A single snapshot viewed as a constant sequence.
pub struct FrozenSnapshot {
    snapshot: Arc<GraphSnapshot>,
    origin: VertexId,
    horizon: usize,
}

impl FrozenSnapshot {
    pub fn new(snapshot: GraphSnapshot, origin: VertexId, horizon: usize) -> Result<Self> {
        snapshot.try_index(origin)?;
        Ok(Self { snapshot: Arc::new(snapshot), origin, horizon })
    }

    pub fn from_arc(snapshot: Arc<GraphSnapshot>, origin: VertexId, horizon: usize) -> Result<Self> {
        snapshot.try_index(origin)?;
        Ok(Self { snapshot, origin, horizon })
    }
}

impl GraphSequence for FrozenSnapshot {
    fn name(&self) -> &str {
        "frozen_snapshot"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn snapshot_at(&self, _t: usize) -> Result<Arc<GraphSnapshot>> {
        Ok(Arc::clone(&self.snapshot))
    }

    fn origin(&self) -> VertexId {
        self.origin
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.snapshot.laziness_floor())
    }

    fn delta_cap(&self) -> Option<u64> {
        Some(self.snapshot.max_degree())
    }
}

/// Samples a neighbour index of `i` proportionally to multiplicity.
pub fn sample_row(g: &GraphSnapshot, i: usize, rng: &mut WalkRng) -> Result<usize> {
    let deg = g.degree_at(i);
    if deg == 0 {
        return Err(Error::Isolated(g.id(i)));
    }
    let mut u = rng.gen_range(0..deg);
    for &(j, m) in g.neighbors(i) {
        if u < m {
            return Ok(j);
        }
        u -= m;
    }
    unreachable!("row multiplicities sum to the degree")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotoneViolation {
    /// First time at which the smaller multiplicity appears.
    pub t: usize,
    pub x: VertexId,
    pub y: VertexId,
    pub before: u64,
    pub after: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub horizon: usize,
    pub violation: Option<MonotoneViolation>,
    /// `min_{t, x} pi_t(x, x) / pi_t(x)` over `t <= horizon`.
    pub laziness_floor: f64,
    pub max_degree: u64,
    pub declared_gamma: Option<f64>,
    pub gamma_respected: bool,
    pub max_vertices: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none() && self.gamma_respected
    }
}

/// Scans `t = 0..=horizon` for edge-wise monotonicity and records the realized
/// laziness floor and maximal degree.
pub fn validate_monotone(seq: &dyn GraphSequence, horizon: usize) -> Result<ValidationReport> {
    if horizon < 1 {
        return Err(crate::error::invalid("horizon", "must be at least 1"));
    }
    let mut prev = seq.snapshot_at(0)?;
    let mut floor = prev.laziness_floor();
    let mut max_degree = prev.max_degree();
    let mut max_vertices = prev.len();
    let mut violation = None;
    for t in 1..=horizon {
        let next = seq.snapshot_at(t)?;
        if !Arc::ptr_eq(&prev, &next) {
            floor = floor.min(next.laziness_floor());
            max_degree = max_degree.max(next.max_degree());
            max_vertices = max_vertices.max(next.len());
            if violation.is_none() {
                violation = prev.edges().find_map(|(x, y, m)| {
                    let after = next.multiplicity(x, y);
                    (after < m).then_some(MonotoneViolation { t, x, y, before: m, after })
                });
            }
        }
        prev = next;
    }
    let declared_gamma = seq.gamma();
    Ok(ValidationReport {
        horizon,
        gamma_respected: declared_gamma.map_or(true, |g| floor >= g - 1e-12),
        violation,
        laziness_floor: floor,
        max_degree,
        declared_gamma,
        max_vertices,
    })
}
