//! Induced L1 balls of `Z^d` with per-vertex self-loops.
//!
//! Vertex ids pack up to four coordinates into 16-bit biased fields, so a
//! lattice step is an integer add on the id.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::Deserialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphSnapshot, SnapshotBuilder, VertexId};
use crate::isoperimetry::{calibrated_lattice_constant, IsoperimetricProfile};
use crate::rng::WalkRng;
use crate::sequence::GraphSequence;

pub const MAX_DIM: usize = 4;
pub const MAX_RADIUS: u32 = 30_000;
const BIAS: i64 = 1 << 15;
const FIELD: u32 = 16;

pub fn encode(c: &[i32]) -> VertexId {
    let mut v = 0u64;
    for (k, &x) in c.iter().enumerate() {
        v |= ((x as i64 + BIAS) as u64) << (FIELD * k as u32);
    }
    VertexId(v)
}

pub fn decode(v: VertexId, d: usize) -> [i32; MAX_DIM] {
    let mut c = [0i32; MAX_DIM];
    for (k, slot) in c.iter_mut().enumerate().take(d) {
        *slot = (((v.0 >> (FIELD * k as u32)) & 0xffff) as i64 - BIAS) as i32;
    }
    c
}

pub fn origin(d: usize) -> VertexId {
    encode(&vec![0; d])
}

pub fn l1(c: &[i32]) -> u32 {
    c.iter().map(|x| x.unsigned_abs()).sum()
}

/// Number of lattice points with `|x|_1 <= r` in `Z^d`.
pub fn ball_size(d: usize, r: u32) -> u64 {
    // counts[k] = points of Z^j with norm exactly k, built up dimension by dimension
    let r = r as usize;
    let mut counts = vec![0u64; r + 1];
    counts[0] = 1;
    for _ in 0..d {
        let mut next = vec![0u64; r + 1];
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            next[k] += c;
            for step in 1..=(r - k) {
                next[k + step] += 2 * c;
            }
        }
        counts = next;
    }
    counts.iter().sum()
}

pub fn ball_points(d: usize, r: u32) -> Vec<[i32; MAX_DIM]> {
    fn fill(d: usize, k: usize, budget: i32, cur: &mut [i32; MAX_DIM], out: &mut Vec<[i32; MAX_DIM]>) {
        if k == d {
            out.push(*cur);
            return;
        }
        for x in -budget..=budget {
            cur[k] = x;
            fill(d, k + 1, budget - x.abs(), cur, out);
        }
        cur[k] = 0;
    }
    let mut out = Vec::with_capacity(ball_size(d, r) as usize);
    fill(d, 0, r as i32, &mut [0; MAX_DIM], &mut out);
    out
}

/// The ball `B(0, r)` with induced lattice edges and `loops` self-loops per vertex.
pub fn ball_snapshot(d: usize, r: u32, loops: u64) -> GraphSnapshot {
    let mut b = SnapshotBuilder::new();
    let points = ball_points(d, r);
    for p in &points {
        let id = encode(&p[..d]);
        b.add_loops(id, loops);
        b.set_coords(id, p[..d].to_vec());
        for k in 0..d {
            let mut q = *p;
            q[k] += 1;
            if l1(&q[..d]) <= r {
                b.add_edge(id, encode(&q[..d]), 1);
            }
        }
    }
    b.build()
}

/// Volume of `ball_snapshot(d, r, loops)` without building it.
pub fn ball_volume(d: usize, r: u32, loops: u64) -> u64 {
    ball_points(d, r)
        .iter()
        .map(|p| {
            // neighbours towards the origin always stay inside; the rest only off the sphere
            let nonzero = p[..d].iter().filter(|&&c| c != 0).count() as u64;
            let outward = if l1(&p[..d]) < r { 2 * d as u64 - nonzero } else { 0 };
            nonzero + outward + loops
        })
        .sum()
}

/// Self-loops per vertex making the holding probability exactly `gamma` at
/// full lattice degree `2d` (rounded up when not integral).
pub fn loops_for_gamma(d: usize, gamma: f64) -> u64 {
    let m = 2.0 * d as f64 * gamma / (1.0 - gamma);
    (m - 1e-9).ceil().max(1.0) as u64
}

/// Allocation-free lattice step inside the ball of the given radius.
#[derive(Clone, Copy, Debug)]
pub struct LatticeStepper {
    pub d: usize,
    pub loops: u64,
}

impl LatticeStepper {
    /// `radius = None` walks on all of `Z^d`.
    #[inline]
    pub fn step(&self, x: VertexId, radius: Option<u32>, rng: &mut WalkRng) -> VertexId {
        let c = decode(x, self.d);
        let norm = l1(&c[..self.d]) as i64;
        let mut moves = [0i64; 2 * MAX_DIM];
        let mut count = 0usize;
        for (k, &ck) in c.iter().enumerate().take(self.d) {
            for s in [-1i64, 1] {
                let grows = ck == 0 || (ck as i64).signum() == s;
                let next_norm = if grows { norm + 1 } else { norm - 1 };
                if radius.map_or(true, |r| next_norm <= r as i64) {
                    moves[count] = s << (FIELD * k as u32);
                    count += 1;
                }
            }
        }
        let u = rng.gen_range(0..self.loops + count as u64);
        if u < self.loops {
            x
        } else {
            VertexId((x.0 as i64 + moves[(u - self.loops) as usize]) as u64)
        }
    }
}

fn default_a() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.5
}
fn default_max_states() -> u64 {
    500_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBallParams {
    pub d: usize,
    pub beta: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub horizon: usize,
    /// Isoperimetric constant for the analytic profile; calibrated when absent.
    #[serde(default)]
    pub c_d: Option<f64>,
    #[serde(default = "default_max_states")]
    pub max_states: u64,
}

/// `G_t = B(0, r(t))` with `r(t) = ceil(a t^(beta/d))`, so that `v(t) ≍ t^beta`.
pub struct LatticeBallFamily {
    params: LatticeBallParams,
    loops: u64,
    c_d: f64,
    c_d_calibrated: bool,
    stepper: LatticeStepper,
    memo: Mutex<HashMap<u32, Arc<GraphSnapshot>>>,
    volumes: Mutex<HashMap<u32, u64>>,
}

impl LatticeBallFamily {
    pub fn new(params: LatticeBallParams) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&params.d) {
            return Err(invalid("d", format!("must be in 2..={MAX_DIM}")));
        }
        if !(params.beta > 0.0) {
            return Err(invalid("beta", "must be positive"));
        }
        if !(params.a > 0.0) {
            return Err(invalid("a", "must be positive"));
        }
        if !(params.gamma > 0.0 && params.gamma <= 0.5) {
            return Err(invalid("gamma", "must lie in (0, 1/2]"));
        }
        let loops = loops_for_gamma(params.d, params.gamma);
        let stepper = LatticeStepper { d: params.d, loops };
        let mut family = Self {
            loops,
            c_d: 0.0,
            c_d_calibrated: params.c_d.is_none(),
            stepper,
            memo: Mutex::new(HashMap::new()),
            volumes: Mutex::new(HashMap::new()),
            params,
        };
        let r_max = family.radius(family.params.horizon);
        if r_max > MAX_RADIUS {
            return Err(invalid("horizon", format!("radius {r_max} exceeds coordinate range")));
        }
        let states = ball_size(family.params.d, r_max);
        if states > family.params.max_states {
            return Err(Error::Budget {
                what: "lattice states",
                used: states,
                cap: family.params.max_states,
                t: family.params.horizon,
            });
        }
        family.c_d = match family.params.c_d {
            Some(c) => c,
            None => calibrated_lattice_constant(family.params.d, loops),
        };
        Ok(family)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Arc<dyn GraphSequence>> {
        let params: LatticeBallParams = serde_json::from_value(value.clone())?;
        Ok(Arc::new(Self::new(params)?))
    }

    pub fn params(&self) -> &LatticeBallParams {
        &self.params
    }

    pub fn loops(&self) -> u64 {
        self.loops
    }

    pub fn c_d(&self) -> f64 {
        self.c_d
    }

    pub fn stepper(&self) -> LatticeStepper {
        self.stepper
    }

    pub fn radius(&self, t: usize) -> u32 {
        if t == 0 {
            return 0;
        }
        let exponent = self.params.beta / self.params.d as f64;
        let r = self.params.a * (t as f64).powf(exponent);
        (r - 1e-9).ceil().max(0.0) as u32
    }

    fn volume_for_radius(&self, r: u32) -> u64 {
        if let Some(&v) = self.volumes.lock().unwrap().get(&r) {
            return v;
        }
        let v = ball_volume(self.params.d, r, self.loops);
        self.volumes.lock().unwrap().insert(r, v);
        v
    }
}

impl GraphSequence for LatticeBallFamily {
    fn name(&self) -> &str {
        "lattice_ball"
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn snapshot_at(&self, t: usize) -> Result<Arc<GraphSnapshot>> {
        let r = self.radius(t);
        let mut memo = self.memo.lock().unwrap();
        let snap = memo
            .entry(r)
            .or_insert_with(|| Arc::new(ball_snapshot(self.params.d, r, self.loops)));
        Ok(Arc::clone(snap))
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

    fn volume(&self, t: usize) -> Result<u64> {
        Ok(self.volume_for_radius(self.radius(t)))
    }

    fn analytic_profile(&self, t: usize) -> Option<IsoperimetricProfile> {
        let v = self.volume(t).ok()?;
        Some(IsoperimetricProfile::lattice_bound(self.c_d, self.params.d, v))
    }

    fn radius_at(&self, t: usize) -> Option<u64> {
        Some(self.radius(t) as u64)
    }

    fn ball_like_gap(&self, t: usize) -> Option<f64> {
        let r = self.radius(t);
        let v = self.volume_for_radius(r) as f64;
        let full = ball_size(self.params.d, r) as f64 * (2 * self.params.d as u64 + self.loops) as f64;
        Some((v - full) / v)
    }

    fn sample_step(&self, t: usize, x: VertexId, rng: &mut WalkRng) -> Result<VertexId> {
        Ok(self.stepper.step(x, Some(self.radius(t)), rng))
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "family": "lattice_ball",
            "d": self.params.d,
            "beta": self.params.beta,
            "a": self.params.a,
            "gamma": self.gamma(),
            "loops": self.loops,
            "c_d": self.c_d,
            "c_d_source": if self.c_d_calibrated { "calibrated" } else { "configured" },
        })
    }
}
