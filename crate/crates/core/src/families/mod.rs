//! Concrete growing-graph families and the name-keyed registry that builds
//! them from JSON blocks such as `{"family": "lattice_ball", "d": 2, ...}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sequence::GraphSequence;

pub mod expander;
pub mod explicit;
pub mod frozen;
pub mod lattice;
pub mod merging;

pub use expander::{ExpanderFamily, ExpanderParams};
pub use explicit::{growing_path, two_vertex, ExplicitFamily, ExplicitParams, Stage};
pub use frozen::{FrozenNestedFamily, FrozenNestedParams, StageInfo};
pub use lattice::{LatticeBallFamily, LatticeBallParams};
pub use merging::{MergingChainSchedule, MergingParams};

pub type FamilyBuilder = fn(&serde_json::Value) -> Result<Arc<dyn GraphSequence>>;

struct Entry {
    description: &'static str,
    build: FamilyBuilder,
}

#[derive(Default)]
pub struct FamilyRegistry {
    entries: BTreeMap<String, Entry>,
}

impl FamilyRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("lattice_ball", "induced L1 balls of Z^d with radius ceil(a t^(beta/d))", LatticeBallFamily::from_json);
        r.register("frozen_nested", "lattice balls frozen on separated stages", FrozenNestedFamily::from_json);
        r.register("expander", "growing complete graphs with self-loops", ExpanderFamily::from_json);
        r.register("merging", "two-periodic drifting conductances on {0..N}", MergingChainSchedule::from_json);
        r.register("explicit", "stage-wise edge lists", ExplicitFamily::from_json);
        r.register("two_vertex", "one edge and one self-loop at each end, frozen", explicit::two_vertex_from_json);
        r.register("path", "growing path with one self-loop per vertex", explicit::path_from_json);
        r
    }

    pub fn register(&mut self, name: &str, description: &'static str, build: FamilyBuilder) {
        self.entries.insert(name.to_string(), Entry { description, build });
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, &'static str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.description))
    }

    /// Builds from a block whose `family` key selects the constructor; the
    /// remaining keys are that family's parameters.
    pub fn build(&self, block: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
        let mut params = block
            .as_object()
            .cloned()
            .ok_or_else(|| crate::error::invalid("family", "family block must be a JSON object"))?;
        let name = match params.remove("family") {
            Some(serde_json::Value::String(s)) => s,
            _ => return Err(crate::error::invalid("family", "missing string key `family`")),
        };
        let entry = self.entries.get(&name).ok_or_else(|| Error::UnknownFamily(name.clone()))?;
        (entry.build)(&serde_json::Value::Object(params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builds_by_name() {
        let r = FamilyRegistry::builtin();
        let f = r.build(&json!({"family": "lattice_ball", "d": 2, "beta": 1.0, "horizon": 20, "c_d": 0.3})).unwrap();
        assert_eq!(f.name(), "lattice_ball");
        let f = r.build(&json!({"family": "two_vertex"})).unwrap();
        assert_eq!(f.snapshot_at(0).unwrap().len(), 2);
        let f = r.build(&json!({"family": "merging", "N": 8, "theta": 0.1, "eta": 0.1})).unwrap();
        assert_eq!(f.snapshot_at(0).unwrap().len(), 9);
    }

    #[test]
    fn rejects_unknown_names_and_keys() {
        let r = FamilyRegistry::builtin();
        assert!(matches!(r.build(&json!({"family": "torus"})), Err(Error::UnknownFamily(_))));
        assert!(matches!(
            r.build(&json!({"family": "two_vertex", "radius": 3})),
            Err(Error::FamilyParams(_))
        ));
        assert!(r.build(&json!({"d": 2})).is_err());
    }

    #[test]
    fn every_builtin_passes_validation() {
        let r = FamilyRegistry::builtin();
        let blocks = [
            json!({"family": "lattice_ball", "d": 3, "beta": 1.2, "horizon": 300, "c_d": 0.3}),
            json!({"family": "frozen_nested", "d": 2, "inner": [1.0, 2.0, 4.0], "outer": [1.5, 3.0, 6.0],
                   "times": [0, 5, 10, 20], "delta": 0.3333, "c_d": 0.3}),
            json!({"family": "expander", "n0": 3, "n_max": 9, "horizon": 30}),
            json!({"family": "path"}),
            json!({"family": "two_vertex", "horizon": 5}),
        ];
        for b in blocks {
            let f = r.build(&b).unwrap();
            let h = f.horizon();
            let report = crate::sequence::validate_monotone(f.as_ref(), h).unwrap();
            assert!(report.violation.is_none(), "{b}");
        }
    }

    #[test]
    fn merging_schedule_is_not_monotone() {
        // alternating conductances: a time-inhomogeneous chain, not a growing graph
        let f = FamilyRegistry::builtin()
            .build(&json!({"family": "merging", "N": 10, "theta": 0.05, "eta": 0.05, "horizon": 20}))
            .unwrap();
        let report = crate::sequence::validate_monotone(f.as_ref(), 20).unwrap();
        assert_eq!(report.violation.unwrap().t, 1);
    }
}
