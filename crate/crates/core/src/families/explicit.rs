//! Sequences given stage by stage as edge lists, plus small presets used by
//! the oracle tests.

use std::sync::Arc;

use serde::Deserialize;

use crate::error::{invalid, Result};
use crate::graph::{GraphSnapshot, VertexId};
use crate::isoperimetry::IsoperimetricProfile;
use crate::sequence::GraphSequence;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    /// First time at which this stage is in force.
    pub start: usize,
    /// `[x, y, multiplicity]`; `x == y` adds self-loops.
    pub edges: Vec<[u64; 3]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    pub stages: Vec<Stage>,
    pub horizon: usize,
    #[serde(default)]
    pub origin: u64,
    /// A user-certified uniform Cheeger floor, served as a flat analytic profile.
    #[serde(default)]
    pub cheeger_floor: Option<f64>,
}

pub struct ExplicitFamily {
    name: String,
    params: ExplicitParams,
    snapshots: Vec<Arc<GraphSnapshot>>,
}

impl ExplicitFamily {
    pub fn new(name: &str, params: ExplicitParams) -> Result<Self> {
        if params.stages.first().map(|s| s.start) != Some(0) {
            return Err(invalid("stages", "first stage must start at t = 0"));
        }
        if params.stages.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(invalid("stages", "start times must be increasing"));
        }
        let snapshots: Vec<Arc<GraphSnapshot>> = params
            .stages
            .iter()
            .map(|s| Arc::new(GraphSnapshot::from_edges(s.edges.iter().map(|e| (e[0], e[1], e[2])))))
            .collect();
        if !snapshots[0].contains(VertexId(params.origin)) {
            return Err(invalid("origin", "not a vertex of the first stage"));
        }
        Ok(Self { name: name.to_string(), params, snapshots })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
        let params: ExplicitParams = serde_json::from_value(value.clone())?;
        Ok(Arc::new(Self::new("explicit", params)?))
    }

    fn stage_of(&self, t: usize) -> usize {
        self.params.stages.partition_point(|s| s.start <= t) - 1
    }
}

impl GraphSequence for ExplicitFamily {
    fn name(&self) -> &str {
        &self.name
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn snapshot_at(&self, t: usize) -> Result<Arc<GraphSnapshot>> {
        Ok(Arc::clone(&self.snapshots[self.stage_of(t)]))
    }

    fn origin(&self) -> VertexId {
        VertexId(self.params.origin)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.snapshots.iter().map(|g| g.laziness_floor()).fold(1.0, f64::min))
    }

    fn delta_cap(&self) -> Option<u64> {
        self.snapshots.iter().map(|g| g.max_degree()).max()
    }

    fn frozen_schedule(&self) -> Option<Vec<usize>> {
        Some(self.params.stages.iter().map(|s| s.start).collect())
    }

    fn analytic_profile(&self, t: usize) -> Option<IsoperimetricProfile> {
        let delta = self.params.cheeger_floor?;
        Some(IsoperimetricProfile::constant(delta, self.volume(t).ok()?))
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "family": self.name,
            "stages": self.params.stages.iter().map(|s| s.start).collect::<Vec<_>>(),
            "origin": self.params.origin,
        })
    }
}

fn default_two_vertex_horizon() -> usize {
    50
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoVertexParams {
    #[serde(default = "default_two_vertex_horizon")]
    pub horizon: usize,
}

/// Vertices `a = 0`, `b = 1`, one edge and one self-loop each, frozen forever.
pub fn two_vertex(horizon: usize) -> ExplicitFamily {
    let params = ExplicitParams {
        stages: vec![Stage { start: 0, edges: vec![[0, 1, 1], [0, 0, 1], [1, 1, 1]] }],
        horizon,
        origin: 0,
        cheeger_floor: None,
    };
    ExplicitFamily::new("two_vertex", params).expect("static preset")
}

pub fn two_vertex_from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
    let p: TwoVertexParams = serde_json::from_value(value.clone())?;
    Ok(Arc::new(two_vertex(p.horizon)))
}

fn default_path_schedule() -> Vec<[usize; 2]> {
    vec![[0, 4], [3, 6], [6, 8]]
}
fn default_path_horizon() -> usize {
    10
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathParams {
    /// `[start, n]`: from `start` on the graph is the path on `n` vertices.
    #[serde(default = "default_path_schedule")]
    pub schedule: Vec<[usize; 2]>,
    #[serde(default = "default_path_horizon")]
    pub horizon: usize,
}

/// Growing path `0 - 1 - ... - (n-1)` with one self-loop per vertex.
pub fn growing_path(schedule: &[[usize; 2]], horizon: usize) -> Result<ExplicitFamily> {
    if schedule.windows(2).any(|w| w[1][1] < w[0][1]) {
        return Err(invalid("schedule", "path lengths must be non-decreasing"));
    }
    if schedule.iter().any(|s| s[1] == 0) {
        return Err(invalid("schedule", "paths need at least one vertex"));
    }
    let stages = schedule
        .iter()
        .map(|&[start, n]| {
            let n = n as u64;
            let mut edges: Vec<[u64; 3]> = (0..n).map(|x| [x, x, 1]).collect();
            edges.extend((1..n).map(|x| [x - 1, x, 1]));
            Stage { start, edges }
        })
        .collect();
    ExplicitFamily::new("path", ExplicitParams { stages, horizon, origin: 0, cheeger_floor: None })
}

pub fn path_from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
    let p: PathParams = serde_json::from_value(value.clone())?;
    Ok(Arc::new(growing_path(&p.schedule, p.horizon)?))
}
