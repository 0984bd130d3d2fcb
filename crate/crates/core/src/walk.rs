//! The time-inhomogeneous walk `P(t, x; t+1, y) = pi_t(x, y) / pi_t(x)`:
//! exact evolution by forward kernel products, Monte Carlo paths, return
//! counts and hitting times.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphSnapshot, VertexId};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::sequence::{sample_row, GraphSequence};
use crate::stats::{linear_fit, LinearFit, Moments};

/// Tolerated drift of total mass per float step before renormalizing.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Largest snapshot an exact evolution may hold.
    pub max_states: usize,
    /// Vector-kernel products per exact computation.
    pub max_steps: u64,
    pub max_replicates: u64,
    /// Total walker steps (replicates times horizon) per Monte Carlo run.
    pub max_walk_steps: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { max_states: 500_000, max_steps: 10_000_000, max_replicates: 1_000_000, max_walk_steps: 10_000_000_000 }
    }
}

impl Budgets {
    pub fn check_replicates(&self, n: u64, horizon: usize) -> Result<()> {
        if n > self.max_replicates {
            return Err(Error::Budget { what: "replicates", used: n, cap: self.max_replicates, t: 0 });
        }
        let walk = n.saturating_mul(horizon as u64);
        if walk > self.max_walk_steps {
            return Err(Error::Budget { what: "walker steps", used: walk, cap: self.max_walk_steps, t: horizon });
        }
        Ok(())
    }

    pub fn check_steps(&self, steps: u64, t: usize) -> Result<()> {
        if steps > self.max_steps {
            return Err(Error::Budget { what: "kernel-product steps", used: steps, cap: self.max_steps, t });
        }
        Ok(())
    }
}

pub type KernelRows<S> = Vec<Vec<(usize, S)>>;

pub fn kernel_rows<S: Scalar>(g: &GraphSnapshot) -> KernelRows<S> {
    (0..g.len())
        .map(|i| {
            let d = g.degree_at(i);
            g.neighbors(i).iter().map(|&(j, m)| (j, S::ratio(m, d))).collect()
        })
        .collect()
}

/// One-step transition row from `x`.
pub fn step_kernel<S: Scalar>(g: &GraphSnapshot, x: VertexId) -> Result<Vec<(VertexId, S)>> {
    let i = g.try_index(x)?;
    let d = g.degree_at(i);
    if d == 0 {
        return Err(Error::Isolated(x));
    }
    Ok(g.neighbors(i).iter().map(|&(j, m)| (g.id(j), S::ratio(m, d))).collect())
}

/// Kernel rows shared between evolutions over the same snapshots.
pub struct KernelCache<S> {
    rows: Mutex<HashMap<usize, (Arc<GraphSnapshot>, Arc<KernelRows<S>>)>>,
}

impl<S: Scalar> Default for KernelCache<S> {
    fn default() -> Self {
        Self { rows: Mutex::new(HashMap::new()) }
    }
}

impl<S: Scalar> KernelCache<S> {
    pub fn get(&self, g: &Arc<GraphSnapshot>) -> Arc<KernelRows<S>> {
        let key = Arc::as_ptr(g) as usize;
        let mut rows = self.rows.lock().unwrap();
        // holding the snapshot keeps its address from being reused
        let entry = rows.entry(key).or_insert_with(|| (Arc::clone(g), Arc::new(kernel_rows(g))));
        Arc::clone(&entry.1)
    }
}

/// `P(s, x; t, .)` on the vertices of `G_t`.
#[derive(Clone, Debug)]
pub struct Distribution<S> {
    t: usize,
    snapshot: Arc<GraphSnapshot>,
    probs: Vec<S>,
}

impl<S: Scalar> Distribution<S> {
    pub fn point_mass(t: usize, snapshot: Arc<GraphSnapshot>, x: VertexId) -> Result<Self> {
        let i = snapshot.try_index(x)?;
        let mut probs = vec![S::zero(); snapshot.len()];
        probs[i] = S::one();
        Ok(Self { t, snapshot, probs })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn snapshot(&self) -> &Arc<GraphSnapshot> {
        &self.snapshot
    }

    /// Probabilities indexed like the snapshot's vertices.
    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn get(&self, y: VertexId) -> S {
        self.snapshot.index_of(y).map_or_else(S::zero, |i| self.probs[i].clone())
    }

    pub fn get_f64(&self, y: VertexId) -> f64 {
        self.snapshot.index_of(y).map_or(0.0, |i| self.probs[i].to_f64())
    }

    pub fn total(&self) -> S {
        let mut s = S::zero();
        for p in &self.probs {
            s.add_assign(p);
        }
        s
    }

    /// Nonzero entries in vertex order.
    pub fn support(&self) -> impl Iterator<Item = (VertexId, &S)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(move |(i, p)| (self.snapshot.id(i), p))
    }

    pub fn to_f64(&self) -> Distribution<f64> {
        Distribution { t: self.t, snapshot: Arc::clone(&self.snapshot), probs: self.probs.iter().map(|p| p.to_f64()).collect() }
    }
}

/// Forward evolution `mu_{t+1} = mu_t K^{(t)}` of a single distribution.
pub struct Evolver<'a, S: Scalar> {
    seq: &'a dyn GraphSequence,
    dist: Distribution<S>,
    kernel: Arc<KernelRows<S>>,
    cache: Arc<KernelCache<S>>,
    budgets: Budgets,
    steps: u64,
    renormalizations: u64,
    max_drift: f64,
}

impl<'a, S: Scalar> Evolver<'a, S> {
    /// Starts from the point mass at `x` at time `s`.
    pub fn new(seq: &'a dyn GraphSequence, s: usize, x: VertexId, budgets: Budgets) -> Result<Self> {
        Self::with_cache(seq, s, x, budgets, Arc::new(KernelCache::default()))
    }

    pub fn with_cache(
        seq: &'a dyn GraphSequence,
        s: usize,
        x: VertexId,
        budgets: Budgets,
        cache: Arc<KernelCache<S>>,
    ) -> Result<Self> {
        let g = seq.snapshot_at(s)?;
        if g.len() > budgets.max_states {
            return Err(Error::Budget { what: "states", used: g.len() as u64, cap: budgets.max_states as u64, t: s });
        }
        let kernel = cache.get(&g);
        Ok(Self {
            seq,
            dist: Distribution::point_mass(s, g, x)?,
            kernel,
            cache,
            budgets,
            steps: 0,
            renormalizations: 0,
            max_drift: 0.0,
        })
    }

    pub fn current(&self) -> &Distribution<S> {
        &self.dist
    }

    pub fn into_current(self) -> Distribution<S> {
        self.dist
    }

    pub fn t(&self) -> usize {
        self.dist.t
    }

    pub fn renormalizations(&self) -> u64 {
        self.renormalizations
    }

    /// Largest per-step deviation of the total mass from one (float mode).
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.dist.t;
        self.steps += 1;
        self.budgets.check_steps(self.steps, t + 1)?;
        let g = Arc::clone(&self.dist.snapshot);
        let mut out = vec![S::zero(); g.len()];
        for (i, p) in self.dist.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            for (j, k) in &self.kernel[i] {
                out[*j].add_assign(&p.mul(k));
            }
        }
        let next = self.seq.snapshot_at(t + 1)?;
        let probs = if Arc::ptr_eq(&g, &next) {
            out
        } else {
            if next.len() > self.budgets.max_states {
                return Err(Error::Budget {
                    what: "states",
                    used: next.len() as u64,
                    cap: self.budgets.max_states as u64,
                    t: t + 1,
                });
            }
            let mut mapped = vec![S::zero(); next.len()];
            for (i, p) in out.into_iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let j = next.index_of(g.id(i)).ok_or_else(|| Error::Monotonicity {
                    t: t + 1,
                    detail: format!("vertex {} of G_{t} is missing from G_{}", g.id(i), t + 1),
                })?;
                mapped[j] = p;
            }
            self.kernel = self.cache.get(&next);
            mapped
        };
        self.dist = Distribution { t: t + 1, snapshot: next, probs };
        if !S::EXACT {
            let total = self.dist.total();
            let drift = (total.to_f64() - 1.0).abs();
            self.max_drift = self.max_drift.max(drift);
            if drift > MASS_TOLERANCE {
                log::warn!("mass drift {drift:.3e} at t = {}; renormalizing", t + 1);
                for p in self.dist.probs.iter_mut() {
                    *p = p.div(&total);
                }
                self.renormalizations += 1;
            }
        }
        Ok(())
    }

    pub fn advance_to(&mut self, t: usize) -> Result<()> {
        while self.dist.t < t {
            self.step()?;
        }
        Ok(())
    }
}

/// Calls `visit` with `P(0, x0; t, .)` for every `t <= horizon`.
pub fn evolve_each<S: Scalar>(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    budgets: Budgets,
    mut visit: impl FnMut(&Distribution<S>) -> Result<()>,
) -> Result<()> {
    budgets.check_steps(horizon as u64, horizon)?;
    let mut ev = Evolver::<S>::new(seq, 0, x0, budgets)?;
    visit(ev.current())?;
    for _ in 0..horizon {
        ev.step()?;
        visit(ev.current())?;
    }
    Ok(())
}

/// `P(0, x0; t, .)` for every `t <= horizon`.
pub fn evolve_exact<S: Scalar>(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    budgets: Budgets,
) -> Result<Vec<Distribution<S>>> {
    let mut out = Vec::with_capacity(horizon + 1);
    evolve_each(seq, x0, horizon, budgets, |d| {
        out.push(d.clone());
        Ok(())
    })?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WalkPath {
    pub seed: u64,
    pub replicate: u64,
    pub x0: VertexId,
    pub positions: Vec<VertexId>,
}

pub fn sample_path(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    seed: u64,
    replicate: u64,
) -> Result<WalkPath> {
    seq.snapshot_at(0)?.try_index(x0)?;
    let mut rng = stream(seed, replicate);
    let mut positions = Vec::with_capacity(horizon + 1);
    let mut x = x0;
    positions.push(x);
    for t in 0..horizon {
        x = seq.sample_step(t, x, &mut rng)?;
        positions.push(x);
    }
    Ok(WalkPath { seed, replicate, x0, positions })
}

/// Empirical one-point marginals at selected times.
#[derive(Clone, Debug, Serialize)]
pub struct Marginals {
    pub times: Vec<usize>,
    pub replicates: u64,
    pub counts: Vec<HashMap<VertexId, u64>>,
}

impl Marginals {
    pub fn prob(&self, k: usize, y: VertexId) -> f64 {
        self.counts[k].get(&y).copied().unwrap_or(0) as f64 / self.replicates as f64
    }

    pub fn std_err(&self, k: usize, y: VertexId) -> f64 {
        crate::stats::binomial_se(self.prob(k, y), self.replicates)
    }
}

/// Runs `n` independent walks to `max(times)` and histograms `X_t` at each
/// requested `t`.
pub fn simulate(
    seq: &dyn GraphSequence,
    x0: VertexId,
    times: &[usize],
    n: u64,
    seed: u64,
    budgets: Budgets,
) -> Result<Marginals> {
    let horizon = times.iter().copied().max().unwrap_or(0);
    budgets.check_replicates(n, horizon)?;
    seq.snapshot_at(0)?.try_index(x0)?;
    let empty = || vec![HashMap::<VertexId, u64>::new(); times.len()];
    let counts = (0..n)
        .into_par_iter()
        .try_fold(empty, |mut acc, r| -> Result<_> {
            let mut rng = stream(seed, r);
            let mut x = x0;
            let mut next_k = 0;
            for t in 0..=horizon {
                if t > 0 {
                    x = seq.sample_step(t - 1, x, &mut rng)?;
                }
                while next_k < times.len() && times[next_k] == t {
                    *acc[next_k].entry(x).or_default() += 1;
                    next_k += 1;
                }
            }
            Ok(acc)
        })
        .try_reduce(empty, |mut a, b| {
            for (ma, mb) in a.iter_mut().zip(b) {
                for (y, c) in mb {
                    *ma.entry(y).or_default() += c;
                }
            }
            Ok(a)
        })?;
    Ok(Marginals { times: times.to_vec(), replicates: n, counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// Moments of `N_0(k) = sum_{t <= k} 1{X_t = x0}`.
#[derive(Clone, Debug, Serialize)]
pub struct ReturnStats {
    pub k: usize,
    pub mean: f64,
    pub second_moment: f64,
    /// `E[N_0(k)]^2 / E[N_0(k)^2]`.
    pub pz_ratio: f64,
    /// Standard error of `mean` (zero when exact).
    pub mean_se: f64,
    pub method: Method,
}

impl ReturnStats {
    fn new(k: usize, mean: f64, second_moment: f64, mean_se: f64, method: Method) -> Self {
        Self { k, mean, second_moment, pz_ratio: mean * mean / second_moment, mean_se, method }
    }
}

/// Exact return moments for every `k <= horizon`, via
/// `E[N(k)^2] = sum_{t<=k} p(t) + 2 sum_{s<t<=k} P(0,x0;s,x0) P(s,x0;t,x0)`
/// with one restarted evolution per `s`.
pub fn return_stats_exact<S: Scalar>(
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    budgets: Budgets,
) -> Result<Vec<ReturnStats>> {
    let work = (horizon as u64 + 1) * (horizon as u64 + 2) / 2;
    budgets.check_steps(work, horizon)?;
    let cache = Arc::new(KernelCache::<S>::default());
    let unbounded = Budgets { max_steps: u64::MAX, ..budgets };
    let mut p0 = Vec::with_capacity(horizon + 1);
    let mut ev = Evolver::with_cache(seq, 0, x0, unbounded, Arc::clone(&cache))?;
    p0.push(ev.current().get(x0));
    for _ in 0..horizon {
        ev.step()?;
        p0.push(ev.current().get(x0));
    }
    // cross[t] = sum_{s < t} P(0,x0;s,x0) P(s,x0;t,x0)
    let cross: Vec<S> = (0..horizon)
        .into_par_iter()
        .map(|s| -> Result<Vec<(usize, S)>> {
            if p0[s].is_zero() {
                return Ok(Vec::new());
            }
            let mut ev = Evolver::with_cache(seq, s, x0, unbounded, Arc::clone(&cache))?;
            let mut out = Vec::with_capacity(horizon - s);
            for t in (s + 1)..=horizon {
                ev.step()?;
                out.push((t, p0[s].mul(&ev.current().get(x0))));
            }
            Ok(out)
        })
        .try_fold(
            || vec![S::zero(); horizon + 1],
            |mut acc, terms| -> Result<Vec<S>> {
                for (t, v) in terms? {
                    acc[t].add_assign(&v);
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![S::zero(); horizon + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.add_assign(y);
                }
                Ok(a)
            },
        )?;
    let mut mean = S::zero();
    let mut second = S::zero();
    let two = S::ratio(2, 1);
    let mut out = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        mean.add_assign(&p0[k]);
        second.add_assign(&p0[k]);
        second.add_assign(&two.mul(&cross[k]));
        out.push(ReturnStats::new(k, mean.to_f64(), second.to_f64(), 0.0, Method::Exact));
    }
    Ok(out)
}

/// Monte Carlo return moments at the (sorted) grid `ks`.
pub fn return_stats_mc(
    seq: &dyn GraphSequence,
    x0: VertexId,
    ks: &[usize],
    n: u64,
    seed: u64,
    budgets: Budgets,
) -> Result<Vec<ReturnStats>> {
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("ks", "grid must be strictly increasing"));
    }
    let horizon = ks.last().copied().unwrap_or(0);
    budgets.check_replicates(n, horizon)?;
    seq.snapshot_at(0)?.try_index(x0)?;
    let empty = || vec![Moments::default(); ks.len()];
    let moments = (0..n)
        .into_par_iter()
        .try_fold(empty, |mut acc, r| -> Result<_> {
            let mut rng = stream(seed, r);
            let mut x = x0;
            let mut returns = 1u64;
            let mut next_k = 0;
            for t in 0..=horizon {
                if t > 0 {
                    x = seq.sample_step(t - 1, x, &mut rng)?;
                    if x == x0 {
                        returns += 1;
                    }
                }
                if next_k < ks.len() && ks[next_k] == t {
                    acc[next_k].push(returns as f64);
                    next_k += 1;
                }
            }
            Ok(acc)
        })
        .try_reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
            Ok(a)
        })?;
    Ok(ks
        .iter()
        .zip(moments)
        .map(|(&k, m)| ReturnStats::new(k, m.mean(), m.sum_sq / m.n as f64, m.std_err(), Method::MonteCarlo))
        .collect())
}

/// Exact return moments when the restarted evolutions fit the step budget,
/// Monte Carlo otherwise.
pub fn return_stats(
    seq: &dyn GraphSequence,
    x0: VertexId,
    ks: &[usize],
    n: u64,
    seed: u64,
    budgets: Budgets,
) -> Result<Vec<ReturnStats>> {
    let horizon = ks.iter().copied().max().unwrap_or(0);
    let work = (horizon as u64 + 1) * (horizon as u64 + 2) / 2;
    if work <= budgets.max_steps {
        let all = return_stats_exact::<f64>(seq, x0, horizon, budgets)?;
        Ok(ks.iter().map(|&k| all[k].clone()).collect())
    } else {
        log::info!("return statistics to k = {horizon} exceed the exact budget; using {n} walkers");
        return_stats_mc(seq, x0, ks, n, seed, budgets)
    }
}

/// A vertex set `H` of a frozen snapshot together with its inner boundary.
#[derive(Clone, Debug)]
pub struct Region {
    snapshot: Arc<GraphSnapshot>,
    member: Vec<bool>,
    boundary: Vec<bool>,
    volume: u64,
}

impl Region {
    pub fn new(snapshot: Arc<GraphSnapshot>, members: &[VertexId]) -> Result<Self> {
        let b = snapshot.relative_boundary(members)?;
        if b.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        let mut member = vec![false; snapshot.len()];
        for &v in members {
            member[snapshot.try_index(v)?] = true;
        }
        let mut boundary = vec![false; snapshot.len()];
        for v in b {
            boundary[snapshot.try_index(v)?] = true;
        }
        let volume = member.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| snapshot.degree_at(i)).sum();
        Ok(Self { snapshot, member, boundary, volume })
    }

    /// All vertices within graph distance `radius` of `center`.
    pub fn ball(snapshot: Arc<GraphSnapshot>, center: VertexId, radius: usize) -> Result<Self> {
        let c = snapshot.try_index(center)?;
        let members: Vec<VertexId> = snapshot
            .distances_from(c)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= radius)
            .map(|(i, _)| snapshot.id(i))
            .collect();
        Self::new(snapshot, &members)
    }

    pub fn snapshot(&self) -> &Arc<GraphSnapshot> {
        &self.snapshot
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.snapshot.index_of(v).map_or(false, |i| self.member[i])
    }

    pub fn on_boundary(&self, v: VertexId) -> bool {
        self.snapshot.index_of(v).map_or(false, |i| self.boundary[i])
    }

    pub fn boundary(&self) -> Vec<VertexId> {
        (0..self.snapshot.len()).filter(|&i| self.boundary[i]).map(|i| self.snapshot.id(i)).collect()
    }

    /// `pi(H)` in the ambient snapshot.
    pub fn volume(&self) -> u64 {
        self.volume
    }

    /// First time the walk from `x` sits on the boundary, capped at `max_steps`
    /// (`None` when censored).
    fn hit(&self, x: usize, max_steps: u64, rng: &mut crate::rng::WalkRng) -> Result<Option<(u64, usize)>> {
        let mut i = x;
        let mut t = 0u64;
        while !self.boundary[i] {
            if t == max_steps {
                return Ok(None);
            }
            i = sample_row(&self.snapshot, i, rng)?;
            t += 1;
        }
        Ok(Some((t, i)))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HittingTail {
    pub region_volume: u64,
    /// `v(H) / (log v(H))^(2 + eps)`.
    pub scale: f64,
    pub grid: Vec<f64>,
    /// `P_x(tau_H > s * scale)` per grid point.
    pub tail: Vec<f64>,
    pub std_err: Vec<f64>,
    pub censored: u64,
    /// Fit of `log tail` against `s`; the exponential rate is `-slope`.
    pub fit: Option<LinearFit>,
}

/// Empirical tail of the boundary hitting time `tau_H` from `x`.
pub fn hitting_time_tail(
    region: &Region,
    x: VertexId,
    grid: &[f64],
    eps: f64,
    n: u64,
    seed: u64,
    budgets: Budgets,
) -> Result<HittingTail> {
    if !region.contains(x) {
        return Err(invalid("x", "start must lie in the region"));
    }
    let v = region.volume() as f64;
    let scale = v / v.ln().max(1.0).powf(2.0 + eps);
    let s_max = grid.iter().copied().fold(0.0, f64::max);
    let cap = (s_max * scale).ceil() as u64 + 1;
    budgets.check_replicates(n, cap as usize)?;
    let start = region.snapshot.try_index(x)?;
    let times: Vec<Option<u64>> = (0..n)
        .into_par_iter()
        .map(|r| -> Result<Option<u64>> {
            let mut rng = stream(seed, r);
            Ok(region.hit(start, cap, &mut rng)?.map(|(t, _)| t))
        })
        .collect::<Result<_>>()?;
    let censored = times.iter().filter(|t| t.is_none()).count() as u64;
    let mut tail = Vec::with_capacity(grid.len());
    let mut std_err = Vec::with_capacity(grid.len());
    for &s in grid {
        let threshold = s * scale;
        let above = times.iter().filter(|t| t.map_or(true, |t| t as f64 > threshold)).count();
        let p = above as f64 / n as f64;
        tail.push(p);
        std_err.push(crate::stats::binomial_se(p, n));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        grid.iter().zip(&tail).filter(|(_, &p)| p > 0.0).map(|(&s, &p)| (s, p.ln())).unzip();
    Ok(HittingTail {
        region_volume: region.volume(),
        scale,
        grid: grid.to_vec(),
        tail,
        std_err,
        censored,
        fit: linear_fit(&xs, &ys),
    })
}

/// Empirical law of `X_{tau_H}` on the boundary, started from `x`.
pub fn hitting_law(region: &Region, x: VertexId, n: u64, seed: u64, budgets: Budgets) -> Result<HashMap<VertexId, f64>> {
    budgets.check_replicates(n, 0)?;
    let start = region.snapshot.try_index(x)?;
    let cap = budgets.max_walk_steps / n.max(1);
    let counts = (0..n)
        .into_par_iter()
        .try_fold(HashMap::<usize, u64>::new, |mut acc, r| -> Result<_> {
            let mut rng = stream(seed, r);
            match region.hit(start, cap, &mut rng)? {
                Some((_, z)) => *acc.entry(z).or_default() += 1,
                None => return Err(Error::Budget { what: "walker steps", used: cap, cap, t: 0 }),
            }
            Ok(acc)
        })
        .try_reduce(HashMap::new, |mut a, b| {
            for (z, c) in b {
                *a.entry(z).or_default() += c;
            }
            Ok(a)
        })?;
    Ok(counts.into_iter().map(|(z, c)| (region.snapshot.id(z), c as f64 / n as f64)).collect())
}

/// `max_z a(z) / b(z)` over the support of `a`; infinite when `b` misses part
/// of that support.
pub fn density_ratio_max(a: &HashMap<VertexId, f64>, b: &HashMap<VertexId, f64>) -> f64 {
    a.iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(z, &p)| match b.get(z) {
            Some(&q) if q > 0.0 => p / q,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct OnDiagReport {
    /// `min_{x, t} P_x(Y_{2t} = x) - pi(x) / pi(H)`.
    pub worst_margin: f64,
    pub worst_x: VertexId,
    pub worst_t: usize,
    pub checked: usize,
    pub violations: usize,
}

/// Checks `P_x(Y_{2t} = x) >= pi(x) / pi(H)` for the walk frozen on `g`, for
/// every vertex and every `t <= horizon`.
pub fn on_diag_lower_check(g: &GraphSnapshot, horizon: usize, tolerance: f64) -> OnDiagReport {
    let rows = kernel_rows::<f64>(g);
    let volume = g.volume() as f64;
    let per_vertex: Vec<(f64, usize, usize, usize)> = (0..g.len())
        .into_par_iter()
        .map(|x| {
            let mut p = vec![0.0; g.len()];
            p[x] = 1.0;
            let floor = g.degree_at(x) as f64 / volume;
            let mut worst = (f64::INFINITY, 0usize);
            let mut violations = 0;
            for step in 1..=2 * horizon {
                let mut q = vec![0.0; g.len()];
                for (i, &pi) in p.iter().enumerate() {
                    if pi != 0.0 {
                        for &(j, k) in &rows[i] {
                            q[j] += pi * k;
                        }
                    }
                }
                p = q;
                if step % 2 == 0 {
                    let margin = p[x] - floor;
                    if margin < -tolerance {
                        violations += 1;
                    }
                    if margin < worst.0 {
                        worst = (margin, step / 2);
                    }
                }
            }
            if horizon == 0 {
                worst = (1.0 - floor, 0);
            }
            (worst.0, x, worst.1, violations)
        })
        .collect();
    let worst = per_vertex.iter().copied().fold((f64::INFINITY, 0, 0, 0), |a, b| if b.0 < a.0 { b } else { a });
    OnDiagReport {
        worst_margin: worst.0,
        worst_x: g.id(worst.1),
        worst_t: worst.2,
        checked: g.len() * horizon.max(1),
        violations: per_vertex.iter().map(|v| v.3).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{growing_path, two_vertex};
    use crate::sequence::FrozenSnapshot;
    use num::BigRational;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn kernel_rows_from_degrees() {
        let single = GraphSnapshot::from_edges([(0, 0, 2)]);
        assert_eq!(step_kernel::<f64>(&single, VertexId(0)).unwrap(), vec![(VertexId(0), 1.0)]);
        let two = GraphSnapshot::from_edges([(0, 1, 1), (0, 0, 1), (1, 1, 1)]);
        assert_eq!(
            step_kernel::<BigRational>(&two, VertexId(0)).unwrap(),
            vec![(VertexId(0), r(1, 2)), (VertexId(1), r(1, 2))]
        );
        let path = GraphSnapshot::from_edges([(0, 1, 1), (1, 2, 1), (1, 1, 1)]);
        let row = step_kernel::<BigRational>(&path, VertexId(1)).unwrap();
        assert!(row.iter().all(|(_, p)| *p == r(1, 3)));
        assert!(step_kernel::<f64>(&path, VertexId(9)).is_err());
    }

    #[test]
    fn two_vertex_evolution() {
        let f = two_vertex(5);
        let d = evolve_exact::<BigRational>(&f, VertexId(0), 2, Budgets::default()).unwrap();
        assert_eq!(d[0].get(VertexId(0)), r(1, 1));
        for t in 1..=2 {
            assert_eq!(d[t].get(VertexId(0)), r(1, 2));
            assert_eq!(d[t].get(VertexId(1)), r(1, 2));
        }
    }

    #[test]
    fn evolution_carries_mass_across_growth() {
        let f = growing_path(&[[0, 4], [3, 6], [6, 8]], 10).unwrap();
        let d = evolve_exact::<BigRational>(&f, VertexId(0), 10, Budgets::default()).unwrap();
        for dist in &d {
            assert_eq!(dist.total(), r(1, 1));
        }
        assert_eq!(d[10].snapshot().len(), 8);
    }

    #[test]
    fn budget_errors_name_the_time() {
        let f = growing_path(&[[0, 4], [3, 6], [6, 8]], 10).unwrap();
        let tight = Budgets { max_states: 5, ..Budgets::default() };
        match evolve_exact::<f64>(&f, VertexId(0), 10, tight) {
            Err(Error::Budget { t, .. }) => assert_eq!(t, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulate_matches_binomial() {
        let f = two_vertex(5);
        let n = 100_000;
        let m = simulate(&f, VertexId(0), &[0, 1], n, 3, Budgets::default()).unwrap();
        assert_eq!(m.prob(0, VertexId(0)), 1.0);
        let p = m.prob(1, VertexId(1));
        assert!((p - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn simulate_is_reproducible() {
        let f = growing_path(&[[0, 4], [3, 6], [6, 8]], 10).unwrap();
        let a = sample_path(&f, VertexId(0), 10, 9, 4).unwrap();
        let b = sample_path(&f, VertexId(0), 10, 9, 4).unwrap();
        assert_eq!(a, b);
        for (t, w) in a.positions.windows(2).enumerate() {
            assert!(f.snapshot_at(t).unwrap().multiplicity(w[0], w[1]) >= 1);
        }
    }

    #[test]
    fn return_moments_two_vertex() {
        let f = two_vertex(5);
        let s = return_stats_exact::<BigRational>(&f, VertexId(0), 2, Budgets::default()).unwrap();
        assert_eq!((s[0].mean, s[0].pz_ratio), (1.0, 1.0));
        // N = 1 + B_1 + B_2 with independent fair bits
        assert_eq!(s[2].mean, 2.0);
        assert_eq!(s[2].second_moment, 4.5);
    }

    #[test]
    fn return_moments_mc_agree_with_exact() {
        let f = growing_path(&[[0, 4], [3, 6], [6, 8]], 12).unwrap();
        let exact = return_stats_exact::<f64>(&f, VertexId(0), 12, Budgets::default()).unwrap();
        let mc = return_stats_mc(&f, VertexId(0), &[4, 12], 50_000, 1, Budgets::default()).unwrap();
        for s in &mc {
            let e = &exact[s.k];
            assert!((s.mean - e.mean).abs() <= 4.0 * s.mean_se, "{s:?} vs {e:?}");
        }
    }

    #[test]
    fn frozen_walk_is_reversible() {
        let g = GraphSnapshot::from_edges([(0, 1, 2), (1, 2, 1), (2, 0, 3), (2, 3, 1), (1, 1, 1), (3, 3, 2)]);
        let f = FrozenSnapshot::new(g.clone(), VertexId(0), 6).unwrap();
        let rows: Vec<Vec<Distribution<BigRational>>> = g
            .ids()
            .iter()
            .map(|&x| evolve_exact::<BigRational>(&f, x, 6, Budgets::default()).unwrap())
            .collect();
        for t in 0..=6 {
            for (i, &x) in g.ids().iter().enumerate() {
                for (j, &y) in g.ids().iter().enumerate() {
                    let lhs = BigRational::from_integer(g.degree_at(i).into()) * rows[i][t].get(y);
                    let rhs = BigRational::from_integer(g.degree_at(j).into()) * rows[j][t].get(x);
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn boundary_start_hits_immediately() {
        let g = Arc::new(crate::families::lattice::ball_snapshot(3, 3, 6));
        let center = crate::families::lattice::origin(3);
        let region = Region::ball(Arc::clone(&g), center, 2).unwrap();
        let z = region.boundary()[0];
        let tail = hitting_time_tail(&region, z, &[0.0, 0.5], 0.5, 100, 1, Budgets::default()).unwrap();
        assert_eq!(tail.tail, vec![0.0, 0.0]);
        let whole: Vec<VertexId> = g.ids().to_vec();
        assert!(matches!(Region::new(g, &whole), Err(Error::EmptyBoundary)));
    }

    #[test]
    fn center_tail_decays() {
        let g = Arc::new(crate::families::lattice::ball_snapshot(3, 9, 6));
        let region = Region::ball(g, crate::families::lattice::origin(3), 8).unwrap();
        let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
        let tail = hitting_time_tail(&region, crate::families::lattice::origin(3), &grid, 0.5, 10_000, 2, Budgets::default())
            .unwrap();
        assert!(tail.tail.windows(2).all(|w| w[1] <= w[0]), "{:?}", tail.tail);
        assert!(tail.tail[0] > tail.tail[4]);
    }

    #[test]
    fn on_diag_complete_graph() {
        let g = crate::families::expander::complete_with_loops(3, 1);
        let report = on_diag_lower_check(&g, 25, 1e-12);
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin >= -1e-12);
        let single = GraphSnapshot::from_edges([(0, 0, 1)]);
        let report = on_diag_lower_check(&single, 3, 1e-12);
        assert_eq!(report.worst_margin, 0.0);
    }
}
