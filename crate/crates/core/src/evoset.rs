//! Evolving sets on a growing graph: `S_{t+1} = {y : pi_t(S_t, y) / pi_{t+1}(y) > U_{t+1}}`
//! with one uniform per step, and the size-biased law realized through the
//! weights `W_t = pi_t(S_t) / pi_0(x0)`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphSnapshot, VertexId};
use crate::isoperimetry::IsoperimetricProfile;
use crate::rng::{stream, WalkRng};
use crate::sequence::GraphSequence;
use crate::stats::{binomial_se, Moments};
use crate::walk::Budgets;

/// Offset separating the size-biased stream family from the plain one.
const SIZE_BIASED_STREAM_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EvolvingSetState {
    pub t: usize,
    /// Sorted members of `S_t`.
    pub set: Vec<VertexId>,
    /// `pi_t(S_t)`.
    pub weight: u64,
}

impl EvolvingSetState {
    pub fn start(g: &GraphSnapshot, x0: VertexId) -> Result<Self> {
        Ok(Self { t: 0, set: vec![x0], weight: g.degree(x0)? })
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// `pi_t(S, y)` for every `y` adjacent to `S` in `G_t`, by snapshot index.
fn flows(set: &[VertexId], g: &GraphSnapshot) -> Result<HashMap<usize, u64>> {
    let mut out = HashMap::new();
    for &x in set {
        let i = g.try_index(x)?;
        for &(j, m) in g.neighbors(i) {
            *out.entry(j).or_insert(0) += m;
        }
    }
    Ok(out)
}

/// One update of the threshold rule with the shared uniform `u`.
///
/// Fails with a monotonicity error if some ratio exceeds one.
pub fn evolving_step(
    set: &[VertexId],
    g_t: &GraphSnapshot,
    g_next: &GraphSnapshot,
    u: f64,
    t: usize,
) -> Result<Vec<VertexId>> {
    let mut next = Vec::new();
    for (j, flow) in flows(set, g_t)? {
        let y = g_t.id(j);
        let den = g_next.degree(y).map_err(|_| Error::Monotonicity {
            t: t + 1,
            detail: format!("vertex {y} of G_{t} is missing from G_{}", t + 1),
        })?;
        if flow > den {
            return Err(Error::Monotonicity {
                t: t + 1,
                detail: format!("pi_{t}(S, {y}) = {flow} exceeds pi_{}({y}) = {den}", t + 1),
            });
        }
        if flow as f64 > u * den as f64 {
            next.push(y);
        }
    }
    next.sort_unstable();
    Ok(next)
}

fn advance(
    state: &EvolvingSetState,
    g_t: &Arc<GraphSnapshot>,
    g_next: &Arc<GraphSnapshot>,
    u: f64,
) -> Result<EvolvingSetState> {
    let set = evolving_step(&state.set, g_t, g_next, u, state.t)?;
    let weight = set.iter().map(|&y| g_next.degree(y)).sum::<Result<u64>>()?;
    Ok(EvolvingSetState { t: state.t + 1, set, weight })
}

/// One trajectory `S_0, ..., S_horizon`, optionally recording the uniforms.
pub fn sample_trajectory(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    rng: &mut WalkRng,
    mut uniforms: Option<&mut Vec<f64>>,
) -> Result<Vec<EvolvingSetState>> {
    let mut g = seq.snapshot_at(0)?;
    let mut state = EvolvingSetState::start(&g, x0)?;
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(state.clone());
    for t in 0..horizon {
        let next = seq.snapshot_at(t + 1)?;
        let u: f64 = rng.gen();
        if let Some(h) = uniforms.as_deref_mut() {
            h.push(u);
        }
        state = if state.is_empty() {
            EvolvingSetState { t: t + 1, set: Vec::new(), weight: 0 }
        } else {
            advance(&state, &g, &next, u)?
        };
        out.push(state.clone());
        g = next;
    }
    Ok(out)
}

/// Replays a trajectory from recorded uniforms.
pub fn replay(seq: &dyn GraphSequence, x0: VertexId, uniforms: &[f64]) -> Result<Vec<EvolvingSetState>> {
    let mut g = seq.snapshot_at(0)?;
    let mut state = EvolvingSetState::start(&g, x0)?;
    let mut out = vec![state.clone()];
    for (t, &u) in uniforms.iter().enumerate() {
        let next = seq.snapshot_at(t + 1)?;
        state = advance(&state, &g, &next, u)?;
        out.push(state.clone());
        g = next;
    }
    Ok(out)
}

/// Plain-process estimates.
#[derive(Clone, Debug, Serialize)]
pub struct PlainEstimates {
    pub replicates: u64,
    pub horizon: usize,
    /// `pi_0(x0)`.
    pub start_weight: u64,
    /// Counts of `y in S_t`, per `t`.
    pub membership: Vec<HashMap<VertexId, u64>>,
    /// `pi_t(S_t)` per `t`.
    pub weights: Vec<Moments>,
    /// Replicates with `S_t` empty, per `t`.
    pub extinct: Vec<u64>,
}

impl PlainEstimates {
    /// `P(y in S_t)` with its binomial standard error.
    pub fn membership_prob(&self, t: usize, y: VertexId) -> (f64, f64) {
        let p = self.membership[t].get(&y).copied().unwrap_or(0) as f64 / self.replicates as f64;
        (p, binomial_se(p, self.replicates))
    }

    /// `(pi_t(y) / pi_0(x0)) P(y in S_t)`, the set-walk estimate of
    /// `P(0, x0; t, y)`.
    pub fn walk_estimate(&self, degree_t_y: u64, t: usize, y: VertexId) -> (f64, f64) {
        let (p, se) = self.membership_prob(t, y);
        let f = degree_t_y as f64 / self.start_weight as f64;
        (f * p, f * se)
    }
}

fn run_paths<A: Send>(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    n: u64,
    seed: u64,
    budgets: Budgets,
    init: impl Fn() -> A + Sync + Send,
    visit: impl Fn(&mut A, &[EvolvingSetState]) -> Result<()> + Sync + Send,
    merge: impl Fn(A, A) -> A + Sync + Send,
) -> Result<A> {
    budgets.check_replicates(n, horizon)?;
    seq.snapshot_at(0)?.try_index(x0)?;
    (0..n)
        .into_par_iter()
        .try_fold(&init, |mut acc, r| -> Result<A> {
            let mut rng = stream(seed, r);
            let path = sample_trajectory(seq, x0, horizon, &mut rng, None)?;
            visit(&mut acc, &path)?;
            Ok(acc)
        })
        .try_reduce(&init, |a, b| Ok(merge(a, b)))
}

pub fn run_plain(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    n: u64,
    seed: u64,
    budgets: Budgets,
) -> Result<PlainEstimates> {
    type Acc = (Vec<HashMap<VertexId, u64>>, Vec<Moments>, Vec<u64>);
    let init = || -> Acc { (vec![HashMap::new(); horizon + 1], vec![Moments::default(); horizon + 1], vec![0; horizon + 1]) };
    let (membership, weights, extinct) = run_paths(
        seq,
        x0,
        horizon,
        n,
        seed,
        budgets,
        init,
        |acc, path| {
            for (t, s) in path.iter().enumerate() {
                for &y in &s.set {
                    *acc.0[t].entry(y).or_insert(0) += 1;
                }
                acc.1[t].push(s.weight as f64);
                if s.is_empty() {
                    acc.2[t] += 1;
                }
            }
            Ok(())
        },
        |mut a, b| {
            for t in 0..=horizon {
                for (y, c) in &b.0[t] {
                    *a.0[t].entry(*y).or_insert(0) += c;
                }
                a.1[t].merge(&b.1[t]);
                a.2[t] += b.2[t];
            }
            a
        },
    )?;
    Ok(PlainEstimates {
        replicates: n,
        horizon,
        start_weight: seq.snapshot_at(0)?.degree(x0)?,
        membership,
        weights,
        extinct,
    })
}

/// Constant of the one-step contraction `c_+ = 2 alpha (1 - alpha) gamma^2 / (1 - gamma)^2`.
pub fn c_plus(alpha: f64, gamma: f64) -> f64 {
    2.0 * alpha * (1.0 - alpha) * gamma * gamma / ((1.0 - gamma) * (1.0 - gamma))
}

#[derive(Clone, Debug)]
pub struct SizeBiasedParams {
    pub alpha: f64,
    /// Start of the stopped functional; `A_u` caps `sup_{i <= u} pi_i(S_i)` at `v(s) / 2`.
    pub s: usize,
    pub gamma: f64,
    /// Profiles `phi_u` for `u = s..horizon` (indexed by `u - s`); entries may be
    /// absent, in which case the contraction check skips that `u`.
    pub profiles: Vec<Option<IsoperimetricProfile>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionRow {
    pub u: usize,
    /// Size-biased mean of `Z_{u+1}`, i.e. `L_{u+1}`.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Size-biased mean of `Z_u (1 - c_+ phi_u(pi_u(S_u))^2)`.
    pub rhs: f64,
    pub rhs_se: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeBiasedEstimates {
    pub replicates: u64,
    pub horizon: usize,
    pub start_weight: u64,
    pub alpha: f64,
    pub s: usize,
    pub threshold: f64,
    /// `W_t` per `t`; its mean is one.
    pub weights: Vec<Moments>,
    /// Size-biased estimate of `P(0, x0; t, y)` per `t`, via
    /// `pi_t(y) E^[1{y in S_t} / pi_t(S_t)]`.
    pub walk: Vec<HashMap<VertexId, Moments>>,
    /// `L_u` for `u = s..=horizon`.
    pub l: Vec<Moments>,
    pub contraction: Vec<ContractionRow>,
}

impl SizeBiasedEstimates {
    pub fn walk_estimate(&self, t: usize, y: VertexId) -> (f64, f64) {
        let n = self.replicates as f64;
        self.walk[t].get(&y).map_or((0.0, 0.0), |m| {
            // absent replicates contributed zeros
            let mean = m.sum / n;
            let var = ((m.sum_sq - m.sum * m.sum / n) / (n - 1.0)).max(0.0);
            (mean, (var / n).sqrt())
        })
    }

    pub fn l_rows(&self) -> Vec<(usize, f64, f64)> {
        self.l.iter().enumerate().map(|(k, m)| (self.s + k, m.mean(), m.std_err())).collect()
    }
}

/// Importance-weighted size-biased estimates from an independent family of
/// streams.
pub fn run_size_biased(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    n: u64,
    seed: u64,
    params: &SizeBiasedParams,
    budgets: Budgets,
) -> Result<SizeBiasedEstimates> {
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    if params.s > horizon {
        return Err(invalid("s", "must not exceed the horizon"));
    }
    let start_weight = seq.snapshot_at(0)?.degree(x0)? as f64;
    let threshold = seq.volume(params.s)? as f64 / 2.0;
    let degrees: Vec<Arc<GraphSnapshot>> = (0..=horizon).map(|t| seq.snapshot_at(t)).collect::<Result<_>>()?;
    let cp = c_plus(params.alpha, params.gamma);
    let span = horizon - params.s + 1;
    struct Acc {
        weights: Vec<Moments>,
        walk: Vec<HashMap<VertexId, Moments>>,
        l: Vec<Moments>,
        rhs: Vec<Moments>,
    }
    let init = || Acc {
        weights: vec![Moments::default(); horizon + 1],
        walk: vec![HashMap::new(); horizon + 1],
        l: vec![Moments::default(); span],
        rhs: vec![Moments::default(); span],
    };
    let alpha = params.alpha;
    let acc = run_paths(
        seq,
        x0,
        horizon,
        n,
        seed ^ SIZE_BIASED_STREAM_KEY,
        budgets,
        init,
        |acc, path| {
            let mut running_max = 0.0f64;
            for (t, st) in path.iter().enumerate() {
                let pi = st.weight as f64;
                running_max = running_max.max(pi);
                let w = pi / start_weight;
                acc.weights[t].push(w);
                if st.weight > 0 {
                    for &y in &st.set {
                        let deg = degrees[t].degree(y)? as f64;
                        acc.walk[t].entry(y).or_default().push(w * deg / pi);
                    }
                }
                if t >= params.s {
                    let k = t - params.s;
                    let in_a = st.weight > 0 && running_max <= threshold;
                    // W_u Z_u = pi_u(S_u)^alpha 1_{A_u} / pi_0(x0)
                    let wz = if in_a { pi.powf(alpha) / start_weight } else { 0.0 };
                    acc.l[k].push(wz);
                    let phi = params.profiles.get(k).and_then(|p| p.as_ref()).and_then(|p| p.value(pi));
                    let factor = match (in_a, phi) {
                        (true, Some(phi)) => 1.0 - cp * phi * phi,
                        _ => 1.0,
                    };
                    acc.rhs[k].push(wz * factor);
                }
            }
            Ok(())
        },
        |mut a, b| {
            for t in 0..=horizon {
                a.weights[t].merge(&b.weights[t]);
                for (y, m) in &b.walk[t] {
                    a.walk[t].entry(*y).or_default().merge(m);
                }
            }
            for k in 0..span {
                a.l[k].merge(&b.l[k]);
                a.rhs[k].merge(&b.rhs[k]);
            }
            a
        },
    )?;
    let contraction = (0..span.saturating_sub(1))
        .filter(|&k| params.profiles.get(k).map_or(false, |p| p.is_some()))
        .map(|k| {
            let (lhs, lhs_se) = (acc.l[k + 1].mean(), acc.l[k + 1].std_err());
            let (rhs, rhs_se) = (acc.rhs[k].mean(), acc.rhs[k].std_err());
            ContractionRow { u: params.s + k, lhs, lhs_se, rhs, rhs_se, holds: lhs <= rhs + 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt() }
        })
        .collect();
    Ok(SizeBiasedEstimates {
        replicates: n,
        horizon,
        start_weight: start_weight as u64,
        alpha,
        s: params.s,
        threshold,
        weights: acc.weights,
        walk: acc.walk,
        l: acc.l,
        contraction,
    })
}
