//! Frozen nested lattice balls: constant on stages `[t_l, t_{l+1})`,
//! sandwiched as `K_l ⊆ G_{t_l} ⊆ K^l` with `K_l = B(0, r_l)` and
//! `K^l = B(0, r'_l)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lattice::{ball_size, ball_snapshot, ball_volume, loops_for_gamma, origin, LatticeStepper, MAX_DIM, MAX_RADIUS};
use crate::error::{invalid, Error, Result};
use crate::graph::{GraphSnapshot, VertexId};
use crate::isoperimetry::{calibrated_lattice_constant, IsoperimetricProfile};
use crate::rng::WalkRng;
use crate::sequence::GraphSequence;

fn default_gamma() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenNestedParams {
    pub d: usize,
    /// Inner radii `r_l`.
    pub inner: Vec<f64>,
    /// Envelope radii `r'_l`.
    pub outer: Vec<f64>,
    /// Stage boundaries `t_0 = 0 < t_1 < ... < t_L`; stage `l` is `[t_l, t_{l+1})`.
    pub times: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Separation `r_{l+1} >= (1 + delta) r'_l`.
    pub delta: f64,
    #[serde(default)]
    pub c_d: Option<f64>,
    #[serde(default)]
    pub max_states: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageInfo {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub inner_radius: u32,
    pub outer_radius: u32,
    /// `v(t_l)` of the frozen snapshot.
    pub volume: u64,
}

pub struct FrozenNestedFamily {
    params: FrozenNestedParams,
    loops: u64,
    c_d: f64,
    stages: Vec<StageInfo>,
    snapshots: Vec<std::sync::OnceLock<Arc<GraphSnapshot>>>,
}

impl FrozenNestedFamily {
    pub fn new(params: FrozenNestedParams) -> Result<Self> {
        let l = params.inner.len();
        if !(2..=MAX_DIM).contains(&params.d) {
            return Err(invalid("d", format!("must be in 2..={MAX_DIM}")));
        }
        if l == 0 || params.outer.len() != l || params.times.len() != l + 1 {
            return Err(invalid("times", "need L inner radii, L outer radii and L + 1 stage boundaries"));
        }
        if params.times[0] != 0 || params.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("times", "must start at 0 and be non-decreasing"));
        }
        if !(params.delta > 0.0) {
            return Err(invalid("delta", "must be positive"));
        }
        if !(params.gamma > 0.0 && params.gamma <= 0.5) {
            return Err(invalid("gamma", "must lie in (0, 1/2]"));
        }
        for k in 0..l {
            if params.outer[k] < params.inner[k] {
                return Err(Error::Nesting {
                    stage: k,
                    detail: format!("envelope radius {} below inner radius {}", params.outer[k], params.inner[k]),
                });
            }
            if k > 0 && params.inner[k] < (1.0 + params.delta) * params.outer[k - 1] - 1e-9 {
                return Err(Error::Nesting {
                    stage: k,
                    detail: format!(
                        "r_{k} = {} < (1 + delta) r'_{} = {}",
                        params.inner[k],
                        k - 1,
                        (1.0 + params.delta) * params.outer[k - 1]
                    ),
                });
            }
        }
        let radius = |r: f64| -> Result<u32> {
            if r < 0.0 || r.floor() > MAX_RADIUS as f64 {
                return Err(invalid("inner", format!("radius {r} out of range")));
            }
            Ok(r.floor() as u32)
        };
        let loops = loops_for_gamma(params.d, params.gamma);
        let mut stages = Vec::with_capacity(l);
        for k in 0..l {
            let inner_radius = radius(params.inner[k])?;
            stages.push(StageInfo {
                index: k,
                start: params.times[k],
                end: params.times[k + 1],
                inner_radius,
                outer_radius: radius(params.outer[k])?,
                volume: ball_volume(params.d, inner_radius, loops),
            });
        }
        if let Some(cap) = params.max_states {
            let top = ball_size(params.d, stages[l - 1].inner_radius);
            if top > cap {
                return Err(Error::Budget { what: "lattice states", used: top, cap, t: params.times[l - 1] });
            }
        }
        let c_d = params.c_d.unwrap_or_else(|| calibrated_lattice_constant(params.d, loops));
        Ok(Self {
            snapshots: (0..l).map(|_| std::sync::OnceLock::new()).collect(),
            params,
            loops,
            c_d,
            stages,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
        let params: FrozenNestedParams = serde_json::from_value(value.clone())?;
        Ok(Arc::new(Self::new(params)?))
    }

    pub fn stages(&self) -> &[StageInfo] {
        &self.stages
    }

    pub fn dimension(&self) -> usize {
        self.params.d
    }

    pub fn loops(&self) -> u64 {
        self.loops
    }

    pub fn stepper(&self) -> LatticeStepper {
        LatticeStepper { d: self.params.d, loops: self.loops }
    }

    pub fn stage_of(&self, t: usize) -> usize {
        self.stages.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    /// `l^{-1} log v(K_l)` for every stage `l >= 1`.
    pub fn growth_rates(&self) -> Vec<f64> {
        self.stages
            .iter()
            .skip(1)
            .map(|s| (s.volume as f64).ln() / s.index as f64)
            .collect()
    }

    /// Stage boundaries derived from stage lengths proportional to `factor * v(K_l)`.
    pub fn times_from_volumes(d: usize, inner: &[f64], gamma: f64, factor: f64) -> Vec<usize> {
        let loops = loops_for_gamma(d, gamma);
        let mut times = vec![0usize];
        for &r in inner {
            let v = ball_volume(d, r.floor() as u32, loops) as f64;
            let last = *times.last().unwrap();
            times.push(last + (factor * v).ceil() as usize);
        }
        times
    }
}

impl GraphSequence for FrozenNestedFamily {
    fn name(&self) -> &str {
        "frozen_nested"
    }

    fn horizon(&self) -> usize {
        self.params.times.last().copied().unwrap_or(0).saturating_sub(1)
    }

    fn snapshot_at(&self, t: usize) -> Result<Arc<GraphSnapshot>> {
        let l = self.stage_of(t);
        let stage = &self.stages[l];
        Ok(Arc::clone(self.snapshots[l].get_or_init(|| {
            Arc::new(ball_snapshot(self.params.d, stage.inner_radius, self.loops))
        })))
    }

    fn origin(&self) -> VertexId {
        origin(self.params.d)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.loops as f64 / (self.loops + 2 * self.params.d as u64) as f64)
    }

    fn delta_cap(&self) -> Option<u64> {
        Some(self.loops + 2 * self.params.d as u64)
    }

    fn frozen_schedule(&self) -> Option<Vec<usize>> {
        Some(self.stages.iter().map(|s| s.start).collect())
    }

    fn volume(&self, t: usize) -> Result<u64> {
        Ok(self.stages[self.stage_of(t)].volume)
    }

    fn analytic_profile(&self, t: usize) -> Option<IsoperimetricProfile> {
        Some(IsoperimetricProfile::lattice_bound(self.c_d, self.params.d, self.volume(t).ok()?))
    }

    fn radius_at(&self, t: usize) -> Option<u64> {
        Some(self.stages[self.stage_of(t)].inner_radius as u64)
    }

    fn sample_step(&self, t: usize, x: VertexId, rng: &mut WalkRng) -> Result<VertexId> {
        let r = self.stages[self.stage_of(t)].inner_radius;
        Ok(self.stepper().step(x, Some(r), rng))
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "family": "frozen_nested",
            "d": self.params.d,
            "delta": self.params.delta,
            "loops": self.loops,
            "c_d": self.c_d,
            "stages": self.stages,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::validate_monotone;

    fn geometric(d: usize, levels: usize) -> FrozenNestedParams {
        let inner: Vec<f64> = (0..levels).map(|l| 2f64.powi(l as i32)).collect();
        let outer: Vec<f64> = inner.iter().map(|r| 1.5 * r).collect();
        FrozenNestedParams {
            d,
            times: (0..=levels).map(|l| 10 * l).collect(),
            inner,
            outer,
            gamma: 0.5,
            delta: 1.0 / 3.0,
            c_d: Some(0.3),
            max_states: None,
        }
    }

    #[test]
    fn doubling_radii_nest_with_one_third() {
        let f = FrozenNestedFamily::new(geometric(3, 6)).unwrap();
        assert_eq!(f.stages().len(), 6);
        assert!(validate_monotone(&f, f.horizon()).unwrap().passed());
    }

    #[test]
    fn frozen_within_stage() {
        let f = FrozenNestedFamily::new(geometric(2, 4)).unwrap();
        let a = f.snapshot_at(20).unwrap();
        let b = f.snapshot_at(25).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(!Arc::ptr_eq(&a, &f.snapshot_at(30).unwrap()));
        assert_eq!(f.volume(25).unwrap(), a.volume());
    }

    #[test]
    fn nesting_violation_is_reported() {
        let mut p = geometric(3, 3);
        p.inner[2] = 3.0;
        p.outer[2] = 3.0;
        assert!(matches!(FrozenNestedFamily::new(p), Err(Error::Nesting { stage: 2, .. })));
    }

    #[test]
    fn exponential_volume_growth() {
        let f = FrozenNestedFamily::new(geometric(3, 9)).unwrap();
        let rates = f.growth_rates();
        let last = *rates.last().unwrap();
        // log v(K_l) / l approaches d log 2 from above
        assert!(last > 0.0 && last < rates[0]);
        assert!((last - 3.0 * 2f64.ln()).abs() < 1.0, "{rates:?}");
    }
}
