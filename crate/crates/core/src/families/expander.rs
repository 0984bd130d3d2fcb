//! Growing complete graphs with self-loops, a family with a uniform Cheeger floor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use crate::error::{invalid, Result};
use crate::graph::{GraphSnapshot, SnapshotBuilder, VertexId};
use crate::isoperimetry::IsoperimetricProfile;
use crate::sequence::GraphSequence;

fn default_gamma() -> f64 {
    0.5
}
fn default_grow_every() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpanderParams {
    pub n0: usize,
    pub n_max: usize,
    /// A vertex is added every `grow_every` steps until `n_max`.
    #[serde(default = "default_grow_every")]
    pub grow_every: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub horizon: usize,
}

/// `G_t = K_{n(t)}` with `ceil(gamma (n-1) / (1-gamma))` loops per vertex.
///
/// A set of `k <= n/2` vertices has cut `k(n-k)` and weight `k(n-1+m)`, so
/// `Phi_t >= (1 - gamma) / 2` at every `t`.
pub struct ExpanderFamily {
    params: ExpanderParams,
    memo: Mutex<HashMap<usize, Arc<GraphSnapshot>>>,
}

pub fn complete_with_loops(n: usize, loops: u64) -> GraphSnapshot {
    let mut b = SnapshotBuilder::new();
    for x in 0..n as u64 {
        b.add_loops(x, loops);
        for y in (x + 1)..n as u64 {
            b.add_edge(x, y, 1);
        }
    }
    b.build()
}

impl ExpanderFamily {
    pub fn new(params: ExpanderParams) -> Result<Self> {
        if params.n0 < 2 || params.n_max < params.n0 {
            return Err(invalid("n0", "need 2 <= n0 <= n_max"));
        }
        if params.grow_every == 0 {
            return Err(invalid("grow_every", "must be positive"));
        }
        if !(params.gamma > 0.0 && params.gamma < 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1)"));
        }
        Ok(Self { params, memo: Mutex::new(HashMap::new()) })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
        let params: ExpanderParams = serde_json::from_value(value.clone())?;
        Ok(Arc::new(Self::new(params)?))
    }

    pub fn size_at(&self, t: usize) -> usize {
        (self.params.n0 + t / self.params.grow_every).min(self.params.n_max)
    }

    pub fn loops_for(&self, n: usize) -> u64 {
        let g = self.params.gamma;
        ((g * (n - 1) as f64 / (1.0 - g)) - 1e-9).ceil().max(1.0) as u64
    }

    pub fn certified_floor(&self) -> f64 {
        (1.0 - self.params.gamma) / 2.0
    }
}

impl GraphSequence for ExpanderFamily {
    fn name(&self) -> &str {
        "expander"
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn snapshot_at(&self, t: usize) -> Result<Arc<GraphSnapshot>> {
        let n = self.size_at(t);
        let mut memo = self.memo.lock().unwrap();
        Ok(Arc::clone(
            memo.entry(n).or_insert_with(|| Arc::new(complete_with_loops(n, self.loops_for(n)))),
        ))
    }

    fn origin(&self) -> VertexId {
        VertexId(0)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.params.gamma)
    }

    fn delta_cap(&self) -> Option<u64> {
        let n = self.size_at(self.params.horizon);
        Some(n as u64 - 1 + self.loops_for(n))
    }

    fn volume(&self, t: usize) -> Result<u64> {
        let n = self.size_at(t) as u64;
        Ok(n * (n - 1 + self.loops_for(n as usize)))
    }

    fn analytic_profile(&self, t: usize) -> Option<IsoperimetricProfile> {
        Some(IsoperimetricProfile::constant(self.certified_floor(), self.volume(t).ok()?))
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "family": "expander",
            "n0": self.params.n0,
            "n_max": self.params.n_max,
            "grow_every": self.params.grow_every,
            "gamma": self.params.gamma,
            "delta": self.certified_floor(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isoperimetry::exact_profile;
    use crate::sequence::validate_monotone;

    fn family(gamma: f64) -> ExpanderFamily {
        ExpanderFamily::new(ExpanderParams { n0: 2, n_max: 14, grow_every: 3, gamma, horizon: 60 }).unwrap()
    }

    #[test]
    fn monotone_and_lazy() {
        for gamma in [0.2, 0.5, 0.7] {
            let f = family(gamma);
            let report = validate_monotone(&f, 60).unwrap();
            assert!(report.passed(), "{report:?}");
            assert!(report.laziness_floor >= gamma - 1e-12);
        }
    }

    #[test]
    fn exact_cheeger_respects_certified_floor() {
        for gamma in [0.2, 0.5, 0.7] {
            let f = family(gamma);
            for t in (0..=36).step_by(3) {
                let g = f.snapshot_at(t).unwrap();
                let exact = exact_profile(&g, 20).unwrap();
                let phi = exact.cheeger().unwrap();
                assert!(phi >= f.certified_floor() - 1e-12, "t={t} gamma={gamma} phi={phi}");
                assert!(exact.dominates(&f.analytic_profile(t).unwrap()));
            }
        }
    }

    #[test]
    fn analytic_profile_is_flat() {
        let f = family(0.5);
        let p = f.analytic_profile(30).unwrap();
        assert_eq!(p.cheeger(), Some(0.25));
        assert_eq!(p.value(1.0), Some(0.25));
        assert_eq!(f.volume(30).unwrap(), f.snapshot_at(30).unwrap().volume());
    }
}
