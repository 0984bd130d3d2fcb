//! Heat-kernel upper bounds, transience sums, the `Z^d` phase diagram, and the
//! numerical lower-bound and frozen-stage experiments.
//!
//! `L^{(s)}_u` is carried in log space: on each profile segment
//! `phi = k r^(-p)` the defining integral has a closed form and is inverted
//! exactly, so no bisection is needed and decay far below `f64` range is kept.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::families::frozen::FrozenNestedFamily;
use crate::families::lattice::{ball_size, ball_snapshot, decode, encode};
use crate::graph::{GraphSnapshot, VertexId};
use crate::isoperimetry::{exact_profile, IsoperimetricProfile};
use crate::rng::stream;
use crate::sequence::GraphSequence;
use crate::stats::{linear_fit, spearman, Moments};
use crate::walk::{evolve_each, hitting_law, Budgets, Region};

/// Positive floor for `L` where no admissible set remains.
pub const L_FLOOR: f64 = 1e-300;

/// Anchors `s` are exhaustive up to this `t`; beyond it a shared geometric grid is used.
pub const EXHAUSTIVE_S_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Uniform degree bound `Delta`.
    pub delta: f64,
}

impl BoundParams {
    pub fn new(alpha: f64, gamma: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1)"));
        }
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(invalid("gamma", "must lie in (0, 1/2]"));
        }
        if !(delta >= 1.0 && delta.is_finite()) {
            return Err(invalid("delta", "must be a finite degree bound >= 1"));
        }
        Ok(Self { alpha, gamma, delta })
    }

    pub fn c_plus(&self) -> f64 {
        crate::evoset::c_plus(self.alpha, self.gamma)
    }

    pub fn c_star(&self) -> f64 {
        let g = self.gamma;
        g * g / (2.0 * (1.0 - g) * (1.0 - g))
    }

    /// `C = max(2 Delta, sqrt(Delta))`.
    pub fn big_c(&self) -> f64 {
        (2.0 * self.delta).max(self.delta.sqrt())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LTrajectory {
    pub s: usize,
    /// `ln L^{(s)}_u` for `u = s..=t`.
    pub ln_values: Vec<f64>,
    /// First `u` at which the floor was applied.
    pub floored_from: Option<usize>,
}

impl LTrajectory {
    pub fn end(&self) -> usize {
        self.s + self.ln_values.len() - 1
    }

    pub fn ln_value(&self, u: usize) -> f64 {
        self.ln_values[u - self.s]
    }

    pub fn value(&self, u: usize) -> f64 {
        self.ln_value(u).exp()
    }

    pub fn values(&self) -> Vec<f64> {
        self.ln_values.iter().map(|l| l.exp()).collect()
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// One step of the iteration: the largest `l` with
/// `int_{l/2}^{L/2} dz / (c_+ z phi(z^{1/(alpha-1)})^2) >= 1`, as `ln l`.
///
/// With `r = z^{1/(alpha-1)}` the condition reads
/// `int_{r_a}^{r_b} dr / (r phi(r)^2) >= c_+ / (1 - alpha)`. `None` when the
/// profile has no admissible set at or beyond `r_a`.
pub fn l_step(ln_l: f64, profile: &IsoperimetricProfile, alpha: f64, c_plus: f64) -> Option<f64> {
    let segs = profile.segments();
    if segs.is_empty() {
        return None;
    }
    let ln_ra = (ln_l - LN_2) / (alpha - 1.0);
    let mut rem = c_plus / (1.0 - alpha);
    let (mut i, mut ln_lo) = match profile.segment_index(ln_ra.exp()) {
        Some(i) => (i, ln_ra),
        // phi is infinite below the first admissible weight: no contribution
        None => (0, segs[0].start.ln()),
    };
    let ln_rb = loop {
        let seg = segs[i];
        if seg.coef == 0.0 {
            break ln_lo;
        }
        let k2 = seg.coef * seg.coef;
        let p2 = 2.0 * seg.power;
        let ln_hi = segs.get(i + 1).map_or(f64::INFINITY, |n| n.start.ln());
        let full = if p2 == 0.0 {
            (ln_hi - ln_lo) / k2
        } else {
            ((p2 * ln_hi).exp() - (p2 * ln_lo).exp()) / (p2 * k2)
        };
        if full >= rem {
            break if p2 == 0.0 { ln_lo + k2 * rem } else { ln_add_exp(p2 * ln_lo, (p2 * k2 * rem).ln()) / p2 };
        }
        rem -= full;
        ln_lo = ln_hi;
        i += 1;
        if i == segs.len() {
            return None;
        }
    };
    Some(LN_2 + (alpha - 1.0) * ln_rb)
}

/// `L^{(s)}_u` for `u = s..=t`, started from `pi_0(x0)^(alpha - 1)`; `profiles[u]` is `phi_u`.
pub fn iterate_l(
    profiles: &[IsoperimetricProfile],
    params: &BoundParams,
    s: usize,
    t: usize,
    x0_degree: u64,
) -> Result<LTrajectory> {
    if s >= t {
        return Err(invalid("s", format!("anchor {s} must be below t = {t}")));
    }
    if profiles.len() < t {
        return Err(Error::MissingProfile(profiles.len()));
    }
    if x0_degree == 0 {
        return Err(invalid("x0_degree", "must be positive"));
    }
    let c_plus = params.c_plus();
    let floor = L_FLOOR.ln();
    let mut ln = (params.alpha - 1.0) * (x0_degree as f64).ln();
    let mut ln_values = Vec::with_capacity(t - s + 1);
    ln_values.push(ln);
    let mut floored_from = None;
    for (u, profile) in profiles.iter().enumerate().take(t).skip(s) {
        if floored_from.is_none() {
            match l_step(ln, profile, params.alpha, c_plus) {
                Some(next) => ln = next.min(ln),
                None => {
                    floored_from = Some(u + 1);
                    ln = floor.min(ln);
                }
            }
        }
        ln_values.push(ln);
    }
    Ok(LTrajectory { s, ln_values, floored_from })
}

/// Profiles `phi_u` for `u < horizon`: exact on snapshots with at most `cap`
/// vertices, the family's analytic lower bound otherwise.
pub fn sequence_profiles(seq: &dyn GraphSequence, horizon: usize, cap: usize) -> Result<Vec<IsoperimetricProfile>> {
    let mut exact: HashMap<usize, (Arc<GraphSnapshot>, IsoperimetricProfile)> = HashMap::new();
    let mut out = Vec::with_capacity(horizon);
    for u in 0..horizon {
        let g = seq.snapshot_at(u)?;
        if g.len() <= cap {
            let key = Arc::as_ptr(&g) as usize;
            if !exact.contains_key(&key) {
                let p = exact_profile(&g, cap)?;
                exact.insert(key, (Arc::clone(&g), p));
            }
            out.push(exact[&key].1.clone());
        } else {
            out.push(seq.analytic_profile(u).ok_or(Error::MissingProfile(u))?);
        }
    }
    Ok(out)
}

/// Cheeger constants `Phi_u`, `u < horizon`, from the analytic profile when
/// available and the exact one on small snapshots otherwise; `None` is the
/// infinite sentinel.
pub fn cheeger_sequence(seq: &dyn GraphSequence, horizon: usize, cap: usize) -> Result<Vec<Option<f64>>> {
    let mut cache: HashMap<usize, (Arc<GraphSnapshot>, Option<f64>)> = HashMap::new();
    (0..horizon)
        .map(|u| {
            if let Some(p) = seq.analytic_profile(u) {
                return Ok(p.cheeger());
            }
            let g = seq.snapshot_at(u)?;
            if g.len() > cap {
                return Err(Error::MissingProfile(u));
            }
            let key = Arc::as_ptr(&g) as usize;
            if !cache.contains_key(&key) {
                let c = exact_profile(&g, cap)?.cheeger();
                cache.insert(key, (Arc::clone(&g), c));
            }
            Ok(cache[&key].1)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FirstBound {
    pub value: f64,
    pub argmin_s: usize,
}

/// Inputs of both upper bounds over `[0, horizon]`, with `L` trajectories
/// computed on demand per anchor.
pub struct BoundContext {
    params: BoundParams,
    x0_degree: u64,
    volumes: Vec<u64>,
    profiles: Vec<IsoperimetricProfile>,
    trajectories: Vec<OnceLock<LTrajectory>>,
}

impl BoundContext {
    /// `volumes[t]` for `t <= horizon` and `profiles[u]` for `u < horizon`.
    pub fn new(
        params: BoundParams,
        x0_degree: u64,
        volumes: Vec<u64>,
        profiles: Vec<IsoperimetricProfile>,
    ) -> Result<Self> {
        let horizon = profiles.len();
        if volumes.len() <= horizon {
            return Err(invalid("volumes", format!("need {} entries, got {}", horizon + 1, volumes.len())));
        }
        if x0_degree == 0 {
            return Err(invalid("x0_degree", "must be positive"));
        }
        let trajectories = (0..horizon).map(|_| OnceLock::new()).collect();
        Ok(Self { params, x0_degree, volumes, profiles, trajectories })
    }

    /// Measures `gamma` (capped at 1/2) and `Delta` over `[0, horizon]` and
    /// collects profiles with the given enumeration cap.
    pub fn for_sequence(seq: &dyn GraphSequence, x0: VertexId, horizon: usize, alpha: f64, cap: usize) -> Result<Self> {
        let mut gamma = 0.5f64;
        let mut delta = 1u64;
        let mut volumes = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let g = seq.snapshot_at(t)?;
            gamma = gamma.min(g.laziness_floor());
            delta = delta.max(g.max_degree());
            volumes.push(g.volume());
        }
        if gamma <= 0.0 {
            return Err(invalid("gamma", "some vertex has no self-loop; the walk is not uniformly lazy"));
        }
        let params = BoundParams::new(alpha, gamma, delta as f64)?;
        let x0_degree = seq.snapshot_at(0)?.degree(x0)?;
        Self::new(params, x0_degree, volumes, sequence_profiles(seq, horizon, cap)?)
    }

    pub fn params(&self) -> &BoundParams {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.profiles.len()
    }

    pub fn volume(&self, t: usize) -> u64 {
        self.volumes[t]
    }

    pub fn profiles(&self) -> &[IsoperimetricProfile] {
        &self.profiles
    }

    pub fn cheeger(&self, u: usize) -> Option<f64> {
        self.profiles[u].cheeger()
    }

    /// `L^{(s)}_u` for `u = s..=horizon`.
    pub fn trajectory(&self, s: usize) -> Result<&LTrajectory> {
        if s == 0 || s >= self.horizon() {
            return Err(invalid("s", format!("anchor must lie in [1, {})", self.horizon())));
        }
        if let Some(tr) = self.trajectories[s].get() {
            return Ok(tr);
        }
        let tr = iterate_l(&self.profiles, &self.params, s, self.horizon(), self.x0_degree)?;
        Ok(self.trajectories[s].get_or_init(|| tr))
    }

    /// Anchors minimized over at time `t`.
    pub fn s_grid(t: usize) -> Vec<usize> {
        if t <= EXHAUSTIVE_S_LIMIT {
            return (1..t).collect();
        }
        let mut grid: Vec<usize> = (0..)
            .map(|k| 1.05f64.powi(k).floor() as usize)
            .take_while(|&s| s < t)
            .collect();
        grid.push(t / 2);
        grid.sort_unstable();
        grid.dedup();
        grid
    }

    /// `min_s 2 pi_t(y) / v(s) + pi_t(y)^(1 - alpha) L^{(s)}_t` over [`Self::s_grid`].
    pub fn first_bound(&self, t: usize, degree_y: u64) -> Result<FirstBound> {
        self.first_bound_over(t, degree_y, &Self::s_grid(t))
    }

    pub fn first_bound_over(&self, t: usize, degree_y: u64, grid: &[usize]) -> Result<FirstBound> {
        if t < 2 {
            return Err(invalid("t", "the first bound needs t >= 2"));
        }
        if t > self.horizon() {
            return Err(Error::MissingProfile(self.horizon()));
        }
        let pi = degree_y as f64;
        let lead = pi.powf(1.0 - self.params.alpha);
        let mut best = FirstBound { value: f64::INFINITY, argmin_s: 0 };
        for &s in grid.iter().filter(|&&s| s >= 1 && s < t) {
            let value = 2.0 * pi / self.volumes[s] as f64 + lead * self.trajectory(s)?.value(t);
            if value < best.value {
                best = FirstBound { value, argmin_s: s };
            }
        }
        if best.argmin_s == 0 {
            return Err(invalid("s_grid", format!("no anchor in [1, {t})")));
        }
        Ok(best)
    }

    pub fn second_bound(&self, t: usize) -> Result<f64> {
        if t > self.horizon() {
            return Err(Error::MissingProfile(self.horizon()));
        }
        let cheegers: Vec<Option<f64>> = (0..t).map(|u| self.cheeger(u)).collect();
        second_bound(&self.params, &self.volumes, &cheegers, t)
    }
}

/// `C (1/v(floor(t/2)) + exp(-c_* sum_{u=floor(t/2)}^{t-1} Phi_u^2))`.
pub fn second_bound(params: &BoundParams, volumes: &[u64], cheegers: &[Option<f64>], t: usize) -> Result<f64> {
    if t < 2 {
        return Err(invalid("t", "the second bound needs t >= 2"));
    }
    if cheegers.len() < t {
        return Err(Error::MissingProfile(cheegers.len()));
    }
    let s = t / 2;
    let v = *volumes.get(s).ok_or(Error::MissingProfile(s))? as f64;
    let mut sum = 0.0;
    for phi in &cheegers[s..t] {
        match phi {
            Some(p) => sum += p * p,
            None => sum = f64::INFINITY,
        }
    }
    Ok(params.big_c() * (1.0 / v + (-params.c_star() * sum).exp()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SoundnessRow {
    pub t: usize,
    /// The vertex with the smallest margin at this `t`.
    pub y: VertexId,
    pub exact_prob: f64,
    pub first_bound: f64,
    pub argmin_s: usize,
    pub second_bound: f64,
    /// `min(first, second) - exact`.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SoundnessReport {
    pub params: BoundParams,
    pub checked: usize,
    pub first_violations: usize,
    pub second_violations: usize,
    pub min_first_margin: f64,
    pub min_second_margin: f64,
    pub rows: Vec<SoundnessRow>,
}

impl SoundnessReport {
    pub fn sound(&self) -> bool {
        self.first_violations == 0 && self.second_violations == 0
    }
}

/// Compares both bounds with exact `P(0, x0; t, y)` for every `2 <= t <= horizon`
/// and every `y` in `V_t`.
pub fn soundness_scan(
    ctx: &BoundContext,
    seq: &dyn GraphSequence,
    x0: VertexId,
    horizon: usize,
    budgets: Budgets,
) -> Result<SoundnessReport> {
    let mut report = SoundnessReport {
        params: *ctx.params(),
        checked: 0,
        first_violations: 0,
        second_violations: 0,
        min_first_margin: f64::INFINITY,
        min_second_margin: f64::INFINITY,
        rows: Vec::new(),
    };
    evolve_each::<f64>(seq, x0, horizon, budgets, |dist| {
        let t = dist.t();
        if t < 2 {
            return Ok(());
        }
        let g = dist.snapshot();
        let second = ctx.second_bound(t)?;
        let mut by_degree: HashMap<u64, FirstBound> = HashMap::new();
        let mut worst: Option<SoundnessRow> = None;
        for (i, &p) in dist.probs().iter().enumerate() {
            let deg = g.degree_at(i);
            let first = match by_degree.get(&deg) {
                Some(f) => *f,
                None => {
                    let f = ctx.first_bound(t, deg)?;
                    by_degree.insert(deg, f);
                    f
                }
            };
            report.checked += 1;
            let m1 = first.value - p;
            let m2 = second - p;
            report.first_violations += usize::from(m1 < 0.0);
            report.second_violations += usize::from(m2 < 0.0);
            report.min_first_margin = report.min_first_margin.min(m1);
            report.min_second_margin = report.min_second_margin.min(m2);
            let margin = m1.min(m2);
            if worst.as_ref().map_or(true, |w| margin < w.margin) {
                worst = Some(SoundnessRow {
                    t,
                    y: g.id(i),
                    exact_prob: p,
                    first_bound: first.value,
                    argmin_s: first.argmin_s,
                    second_bound: second,
                    margin,
                });
            }
        }
        report.rows.extend(worst);
        Ok(())
    })?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesFlag {
    ConsistentWithConvergence,
    ConsistentWithDivergence,
}

/// Fitted growth exponent above which `sum 1/v` is flagged convergent.
pub const VOLUME_EXPONENT_THRESHOLD: f64 = 1.05;
/// Fitted growth exponent of `E(t) = sum_{u=floor(t/2)}^{t-1} Phi_u^2` above
/// which the mixing series is flagged convergent.
pub const MIXING_EXPONENT_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransienceRow {
    pub t: usize,
    pub sum_inv_vol: f64,
    pub sum_mixing_term: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransienceReport {
    #[serde(skip)]
    pub rows: Vec<TransienceRow>,
    pub horizon: usize,
    pub sum_inv_vol: f64,
    pub sum_mixing_term: f64,
    /// Slope of `log v(t)` against `log t` over the upper half.
    pub volume_exponent: Option<f64>,
    /// Slope of `log E(t)` against `log t` over the upper half.
    pub mixing_exponent: Option<f64>,
    pub inv_vol_flag: SeriesFlag,
    pub mixing_flag: SeriesFlag,
}

/// Partial sums of `1/v(t)` and `exp(-E(t))` for `1 <= t <= horizon`;
/// `volumes[t]` for `t <= horizon`, `cheegers[u]` for `u < horizon`.
pub fn transience_sums(volumes: &[u64], cheegers: &[Option<f64>]) -> Result<TransienceReport> {
    let horizon = cheegers.len();
    if volumes.len() <= horizon || horizon < 4 {
        return Err(invalid("horizon", "need at least 4 steps of volume and Cheeger data"));
    }
    let mut prefix = vec![0.0f64; horizon + 1];
    let mut infinite = vec![0usize; horizon + 1];
    for (u, phi) in cheegers.iter().enumerate() {
        prefix[u + 1] = prefix[u] + phi.map_or(0.0, |p| p * p);
        infinite[u + 1] = infinite[u] + usize::from(phi.is_none());
    }
    let exponent_sum = |t: usize| {
        if infinite[t] > infinite[t / 2] {
            f64::INFINITY
        } else {
            prefix[t] - prefix[t / 2]
        }
    };
    let mut rows = Vec::with_capacity(horizon);
    let (mut inv, mut mix) = (0.0, 0.0);
    for t in 1..=horizon {
        if volumes[t] == 0 {
            return Err(invalid("volumes", format!("v({t}) = 0")));
        }
        inv += 1.0 / volumes[t] as f64;
        mix += (-exponent_sum(t)).exp();
        rows.push(TransienceRow { t, sum_inv_vol: inv, sum_mixing_term: mix });
    }
    let upper = (horizon / 2).max(1)..=horizon;
    let (xs, ys): (Vec<f64>, Vec<f64>) = upper.clone().map(|t| ((t as f64).ln(), (volumes[t] as f64).ln())).unzip();
    let volume_exponent = linear_fit(&xs, &ys).map(|f| f.slope);
    let (xs, ys): (Vec<f64>, Vec<f64>) = upper
        .clone()
        .map(|t| (t, exponent_sum(t)))
        .filter(|(_, e)| e.is_finite() && *e > 0.0)
        .map(|(t, e)| ((t as f64).ln(), e.ln()))
        .unzip();
    let all_infinite = upper.clone().all(|t| exponent_sum(t).is_infinite());
    let mixing_exponent = linear_fit(&xs, &ys).map(|f| f.slope);
    let flag = |converges: bool| {
        if converges {
            SeriesFlag::ConsistentWithConvergence
        } else {
            SeriesFlag::ConsistentWithDivergence
        }
    };
    Ok(TransienceReport {
        horizon,
        sum_inv_vol: inv,
        sum_mixing_term: mix,
        volume_exponent,
        mixing_exponent,
        inv_vol_flag: flag(volume_exponent.is_some_and(|p| p > VOLUME_EXPONENT_THRESHOLD)),
        mixing_flag: flag(all_infinite || mixing_exponent.is_some_and(|k| k > MIXING_EXPONENT_THRESHOLD)),
        rows,
    })
}

/// [`transience_sums`] over a family's volumes and Cheeger data.
pub fn transience_report(seq: &dyn GraphSequence, horizon: usize, cap: usize) -> Result<TransienceReport> {
    let volumes = (0..=horizon).map(|t| seq.volume(t)).collect::<Result<Vec<_>>>()?;
    transience_sums(&volumes, &cheeger_sequence(seq, horizon, cap)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "phase", rename_all = "kebab-case")]
pub enum ZdPhase {
    TransientViaSecondBound,
    TransientViaFirstBound { alpha: f64 },
    UpperBoundsSilent,
}

/// Phase of growing `Z^d` balls with `v(t) ~ t^beta`.
pub fn zd_phase(d: usize, beta: f64) -> Result<ZdPhase> {
    if d <= 2 {
        return Err(invalid("d", "the phase diagram needs d > 2"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", "must be positive and finite"));
    }
    let half = d as f64 / 2.0;
    Ok(if beta <= 1.0 {
        ZdPhase::UpperBoundsSilent
    } else if beta < half {
        ZdPhase::TransientViaSecondBound
    } else {
        let alpha = (1.0 - 2.0 / d as f64) / 2.0;
        debug_assert!(beta * (1.0 - alpha) > 1.0);
        ZdPhase::TransientViaFirstBound { alpha }
    })
}

fn default_psi_exponent() -> f64 {
    2.0
}

fn default_delta0() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    /// `psi(m) = m^psi_exponent`.
    #[serde(default = "default_psi_exponent")]
    pub psi_exponent: f64,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    pub t_grid: Vec<usize>,
    /// Constant `c` to compare the fitted one against.
    #[serde(default)]
    pub target_c: Option<f64>,
}

impl LowerBoundConfig {
    pub fn psi(&self, m: u64) -> f64 {
        (m as f64).powf(self.psi_exponent)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundRow {
    pub t: usize,
    /// `(r^{-1} + psi)^{-1}(t)`.
    pub m: u64,
    pub window: f64,
    pub admissible: usize,
    pub min_v_times_p: Option<f64>,
    pub c_hat: Option<f64>,
    pub ball_gap: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundReport {
    #[serde(skip)]
    pub rows: Vec<LowerBoundRow>,
    pub c_hat: Option<f64>,
    /// Max/min of `min_y v(t) P` over the upper half of the grid.
    pub stability: Option<f64>,
    /// Smallest `sum_{u=floor(t/2)}^{t-1} Phi_u^2 / log v(floor(t/2))` over the upper half.
    pub zeta: Option<f64>,
    pub target_met: Option<bool>,
}

/// `min{t : r(t) >= m}`, by monotone search on `[0, horizon]`.
fn inverse_radius(seq: &dyn GraphSequence, m: u64, horizon: usize) -> Result<Option<usize>> {
    let r = |t: usize| seq.radius_at(t).ok_or_else(|| invalid("r", "the family does not report r(t)"));
    if r(horizon)? < m {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0usize, horizon);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if r(mid)? >= m {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

/// `max{m : r^{-1}(m) + psi(m) <= t}`.
pub fn window_scale(seq: &dyn GraphSequence, config: &LowerBoundConfig, t: usize, horizon: usize) -> Result<u64> {
    let mut m = 0u64;
    loop {
        match inverse_radius(seq, m + 1, horizon)? {
            Some(inv) if inv as f64 + config.psi(m + 1) <= t as f64 => m += 1,
            _ => return Ok(m),
        }
    }
}

/// Scans `v(t) P(0, x0; t, y)` over `y` with `d(x0, y) <= (1 - delta0) M(t)`
/// on the configured grid, by exact evolution.
pub fn lower_bound_check(
    seq: &dyn GraphSequence,
    x0: VertexId,
    config: &LowerBoundConfig,
    cap: usize,
    budgets: Budgets,
) -> Result<LowerBoundReport> {
    if !(config.delta0 > 0.0 && config.delta0 <= 0.5) {
        return Err(invalid("delta0", "must lie in (0, 1/2]"));
    }
    if !(config.psi_exponent > 0.0) {
        return Err(invalid("psi_exponent", "must be positive"));
    }
    let mut grid = config.t_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let t_max = *grid.last().ok_or_else(|| invalid("t_grid", "must not be empty"))?;
    let horizon = seq.horizon().max(t_max);
    let mut rows = Vec::with_capacity(grid.len());
    let mut next = 0;
    let mut running: Option<f64> = None;
    evolve_each::<f64>(seq, x0, t_max, budgets, |dist| {
        let t = dist.t();
        if next >= grid.len() || grid[next] != t {
            return Ok(());
        }
        next += 1;
        let m = window_scale(seq, config, t, horizon)?;
        let window = (1.0 - config.delta0) * m as f64;
        let g = dist.snapshot();
        let dist_from = g.distances_from(g.try_index(x0)?);
        let v = g.volume() as f64;
        let mut admissible = 0;
        let mut min_vp: Option<f64> = None;
        for (i, &d) in dist_from.iter().enumerate() {
            if d as f64 <= window {
                admissible += 1;
                let vp = v * dist.probs()[i];
                min_vp = Some(min_vp.map_or(vp, |c| c.min(vp)));
            }
        }
        if let Some(c) = min_vp {
            running = Some(running.map_or(c, |r| r.min(c)));
        }
        rows.push(LowerBoundRow {
            t,
            m,
            window,
            admissible,
            min_v_times_p: min_vp,
            c_hat: running,
            ball_gap: seq.ball_like_gap(t),
        });
        Ok(())
    })?;
    let upper: Vec<f64> = rows[rows.len() / 2..].iter().filter_map(|r| r.min_v_times_p).collect();
    let stability = if upper.is_empty() {
        None
    } else {
        let hi = upper.iter().copied().fold(f64::MIN, f64::max);
        let lo = upper.iter().copied().fold(f64::MAX, f64::min);
        Some(if lo > 0.0 { hi / lo } else { f64::INFINITY })
    };
    let cheegers = cheeger_sequence(seq, t_max, cap)?;
    let mut zeta: Option<f64> = None;
    for &t in &grid[grid.len() / 2..] {
        let s = t / 2;
        let vs = seq.volume(s)? as f64;
        if vs <= 1.0 {
            continue;
        }
        let sum: f64 = cheegers[s..t].iter().map(|p| p.map_or(f64::INFINITY, |p| p * p)).sum();
        let z = sum / vs.ln();
        zeta = Some(zeta.map_or(z, |c| c.min(z)));
    }
    Ok(LowerBoundReport {
        c_hat: running,
        stability,
        zeta,
        target_met: config.target_c.map(|c| running.is_some_and(|r| r >= c)),
        rows,
    })
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenRecurrenceConfig {
    pub walkers: u64,
    /// Walkers per start point for the hitting-law comparison (0 skips it).
    #[serde(default)]
    pub hitting_walkers: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRow {
    pub l: usize,
    pub start: usize,
    pub end: usize,
    pub volume: u64,
    /// `(t_{l+1} - t_l) / v(t_l)`.
    pub shape: f64,
    /// Mean number of visits to `x0` during the stage.
    pub local_time: f64,
    pub local_time_se: f64,
    /// Partial sum of `shape` up to this stage.
    pub partial_sum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HittingRow {
    pub l: usize,
    pub inner_radius: u32,
    /// Distance of the second start point from `x0` (the envelope radius of stage `l - 1`).
    pub offset: u32,
    /// `max` over boundary faces of `max(p/q, q/p)` between the two hitting laws.
    pub face_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrozenRecurrenceReport {
    #[serde(skip)]
    pub stages: Vec<StageRow>,
    #[serde(skip)]
    pub hitting: Vec<HittingRow>,
    pub walkers: u64,
    pub rank_correlation: Option<f64>,
    /// Least-squares `c` in `local_time ~ c * shape`.
    pub fitted_constant: Option<f64>,
    pub divergence_partial_sum: f64,
}

/// Face of the lattice sphere containing `z`: dominant axis and its sign.
fn face(z: VertexId, d: usize) -> usize {
    let c = decode(z, d);
    let axis = (0..d).max_by_key(|&k| (c[k].abs(), std::cmp::Reverse(k))).unwrap_or(0);
    2 * axis + usize::from(c[axis] < 0)
}

fn face_law(law: &HashMap<VertexId, f64>, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * d];
    for (&z, &p) in law {
        out[face(z, d)] += p;
    }
    out
}

/// Per-stage local time at `x0` against `(t_{l+1} - t_l) / v(t_l)`, and the
/// stability of boundary hitting laws across stages.
pub fn frozen_recurrence_experiment(
    family: &FrozenNestedFamily,
    config: &FrozenRecurrenceConfig,
    budgets: Budgets,
) -> Result<FrozenRecurrenceReport> {
    let horizon = family.horizon() + 1;
    budgets.check_replicates(config.walkers, horizon)?;
    let stages = family.stages();
    let x0 = family.origin();
    let counts = (0..config.walkers)
        .into_par_iter()
        .try_fold(
            || vec![Moments::default(); stages.len()],
            |mut acc, r| -> Result<_> {
                let mut rng = stream(config.seed, r);
                let mut x = x0;
                let mut visits = vec![0u64; stages.len()];
                let mut l = 0;
                for t in 0..horizon {
                    while t >= stages[l].end {
                        l += 1;
                    }
                    visits[l] += u64::from(x == x0);
                    x = family.sample_step(t, x, &mut rng)?;
                }
                for (m, v) in acc.iter_mut().zip(visits) {
                    m.push(v as f64);
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![Moments::default(); stages.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.merge(y);
                }
                Ok(a)
            },
        )?;
    let mut partial = 0.0;
    let rows: Vec<StageRow> = stages
        .iter()
        .zip(&counts)
        .map(|(s, m)| {
            let shape = (s.end - s.start) as f64 / s.volume as f64;
            partial += shape;
            StageRow {
                l: s.index,
                start: s.start,
                end: s.end,
                volume: s.volume,
                shape,
                local_time: m.mean(),
                local_time_se: m.std_err(),
                partial_sum: partial,
            }
        })
        .collect();
    let live: Vec<&StageRow> = rows.iter().filter(|r| r.end > r.start).collect();
    let shapes: Vec<f64> = live.iter().map(|r| r.shape).collect();
    let times: Vec<f64> = live.iter().map(|r| r.local_time).collect();
    let denom: f64 = shapes.iter().map(|s| s * s).sum();
    let fitted_constant = (denom > 0.0).then(|| shapes.iter().zip(&times).map(|(s, t)| s * t).sum::<f64>() / denom);

    let mut hitting = Vec::new();
    if config.hitting_walkers > 0 {
        let d = family.dimension();
        for l in 1..stages.len() {
            let inner = stages[l].inner_radius;
            let offset = stages[l - 1].outer_radius;
            if offset >= inner {
                continue;
            }
            let states = ball_size(d, inner + 1);
            if states > budgets.max_states as u64 {
                return Err(Error::Budget { what: "states", used: states, cap: budgets.max_states as u64, t: stages[l].start });
            }
            let g = Arc::new(ball_snapshot(d, inner + 1, family.loops()));
            let region = Region::ball(g, x0, inner as usize)?;
            let mut y = [0i32; 4];
            y[0] = offset as i32;
            let seed = config.seed ^ ((l as u64) << 32);
            let p = face_law(&hitting_law(&region, x0, config.hitting_walkers, seed, budgets)?, d);
            let q = face_law(&hitting_law(&region, encode(&y[..d]), config.hitting_walkers, seed ^ 1, budgets)?, d);
            let face_ratio = p
                .iter()
                .zip(&q)
                .map(|(&a, &b)| if a > 0.0 && b > 0.0 { (a / b).max(b / a) } else { f64::INFINITY })
                .fold(1.0, f64::max);
            hitting.push(HittingRow { l, inner_radius: inner, offset, face_ratio });
        }
    }

    Ok(FrozenRecurrenceReport {
        walkers: config.walkers,
        rank_correlation: spearman(&shapes, &times),
        fitted_constant,
        divergence_partial_sum: partial,
        stages: rows,
        hitting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isoperimetry::{ProfileSegment, ProfileSource};
    use crate::sequence::FrozenSnapshot;

    fn two_vertex() -> FrozenSnapshot {
        let g = GraphSnapshot::from_edges([(0, 1, 1), (0, 0, 1), (1, 1, 1)]);
        FrozenSnapshot::new(g, VertexId(0), 60).unwrap()
    }

    #[test]
    fn constants_agree_at_one_half() {
        let p = BoundParams::new(0.5, 0.5, 2.0).unwrap();
        assert_eq!(p.c_plus(), 0.5);
        assert_eq!(p.c_star(), 0.5);
        assert_eq!(p.big_c(), 4.0);
        assert_eq!(BoundParams::new(0.5, 0.5, 0.25).is_err(), true);
    }

    #[test]
    fn flat_profile_decays_exponentially() {
        let params = BoundParams::new(0.3, 0.4, 4.0).unwrap();
        let phi = 0.2;
        let profiles = vec![IsoperimetricProfile::constant(phi, 100); 30];
        let tr = iterate_l(&profiles, &params, 5, 30, 3).unwrap();
        let l_s = 3f64.powf(params.alpha - 1.0);
        assert!((tr.value(5) - l_s).abs() < 1e-15);
        for u in 5..=30 {
            let closed = l_s * (-params.c_plus() * phi * phi * (u - 5) as f64).exp();
            assert!(((tr.value(u) - closed) / closed).abs() < 1e-12);
        }
    }

    #[test]
    fn two_vertex_start_value() {
        let params = BoundParams::new(0.5, 0.5, 2.0).unwrap();
        let ctx = BoundContext::for_sequence(&two_vertex(), VertexId(0), 50, 0.5, 20).unwrap();
        assert_eq!(ctx.params(), &params);
        let tr = ctx.trajectory(1).unwrap();
        assert!((tr.value(1) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(tr.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infinite_profile_floors_and_flags() {
        // no admissible set at all: the single vertex carries more than half the volume
        let empty = IsoperimetricProfile::from_segments(Vec::new(), 4, ProfileSource::Exact).unwrap();
        let params = BoundParams::new(0.5, 0.5, 4.0).unwrap();
        let tr = iterate_l(&vec![empty; 5], &params, 1, 5, 4).unwrap();
        assert_eq!(tr.floored_from, Some(2));
        assert!((tr.value(5) / L_FLOOR - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_prefix_contributes_nothing() {
        // phi = inf below r = 1000, then flat: only the flat part counts
        let seg = ProfileSegment { start: 1000.0, coef: 0.5, power: 0.0 };
        let p = IsoperimetricProfile::from_segments(vec![seg], 4000, ProfileSource::Exact).unwrap();
        let alpha = 0.5;
        let c = 0.5;
        let ln_l = 0.0;
        let next = l_step(ln_l, &p, alpha, c).unwrap();
        // r_b = 1000 * e^{k^2 c / (1 - alpha)}
        let expected = LN_2 + (alpha - 1.0) * (1000f64.ln() + 0.25);
        assert!((next - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_cheeger_stops_decay() {
        let p = IsoperimetricProfile::constant(0.0, 10);
        assert_eq!(l_step(-1.0, &p, 0.5, 0.5), Some(-1.0));
        let params = BoundParams::new(0.5, 0.5, 2.0).unwrap();
        let b = second_bound(&params, &[10; 10], &[Some(0.0); 10], 8).unwrap();
        assert!((b - params.big_c() * (0.1 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn power_segment_closed_form() {
        let p = IsoperimetricProfile::lattice_bound(0.8, 2, 1_000_000);
        let alpha = 0.4;
        let c = 0.3;
        let ln_l = -0.5;
        let next = l_step(ln_l, &p, alpha, c).unwrap();
        // check the defining integral numerically in r
        let ra = ((ln_l - LN_2) / (alpha - 1.0)).exp();
        let rb = ((next - LN_2) / (alpha - 1.0)).exp();
        let n = 200_000;
        let h = (rb.ln() - ra.ln()) / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let r = (ra.ln() + (i as f64 + 0.5) * h).exp();
                let phi = p.value(r).unwrap();
                h / (phi * phi)
            })
            .sum();
        assert!((integral * (1.0 - alpha) / c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_vertex_bounds_are_sound() {
        let seq = two_vertex();
        let ctx = BoundContext::for_sequence(&seq, VertexId(0), 50, 0.5, 20).unwrap();
        let report = soundness_scan(&ctx, &seq, VertexId(0), 50, Budgets::default()).unwrap();
        assert!(report.sound());
        assert_eq!(report.checked, 49 * 2);
        let b = ctx.first_bound(2, 2).unwrap();
        assert!(b.value >= 0.5);
        assert_eq!(b.argmin_s, 1);
    }

    #[test]
    fn path_family_bounds_are_sound() {
        let seq = crate::families::explicit::growing_path(&[[0, 4], [3, 6], [6, 8]], 30).unwrap();
        let ctx = BoundContext::for_sequence(&seq, seq.origin(), 30, 0.5, 20).unwrap();
        assert!(soundness_scan(&ctx, &seq, seq.origin(), 30, Budgets::default()).unwrap().sound());
    }

    #[test]
    fn larger_profile_never_raises_first_bound() {
        let params = BoundParams::new(0.5, 0.5, 8.0).unwrap();
        let vols: Vec<u64> = (0..=40).map(|t| 8 * (t as u64 + 1)).collect();
        let lo: Vec<_> = (0..40).map(|u| IsoperimetricProfile::lattice_bound(0.3, 2, vols[u])).collect();
        let hi: Vec<_> = (0..40).map(|u| IsoperimetricProfile::lattice_bound(0.6, 2, vols[u])).collect();
        let a = BoundContext::new(params, 8, vols.clone(), lo).unwrap();
        let b = BoundContext::new(params, 8, vols, hi).unwrap();
        for t in 2..=40 {
            assert!(b.first_bound(t, 8).unwrap().value <= a.first_bound(t, 8).unwrap().value);
        }
    }

    #[test]
    fn s_grid_is_exhaustive_then_geometric() {
        assert_eq!(BoundContext::s_grid(2), vec![1]);
        assert_eq!(BoundContext::s_grid(512).len(), 511);
        let g = BoundContext::s_grid(10_000);
        assert!(g.len() < 200 && g.contains(&5000) && g[0] == 1 && *g.last().unwrap() < 10_000);
    }

    #[test]
    fn transience_flags_on_power_volumes() {
        let n = 20_000;
        let sq: Vec<u64> = (0..=n as u64).map(|t| t * t).collect();
        let lin: Vec<u64> = (0..=n as u64).collect();
        let phi = vec![Some(0.5); n];
        let a = transience_sums(&sq, &phi).unwrap();
        assert!((a.sum_inv_vol - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-4);
        assert_eq!(a.inv_vol_flag, SeriesFlag::ConsistentWithConvergence);
        assert_eq!(a.mixing_flag, SeriesFlag::ConsistentWithConvergence);
        let b = transience_sums(&lin, &phi).unwrap();
        assert_eq!(b.inv_vol_flag, SeriesFlag::ConsistentWithDivergence);
        let flat = transience_sums(&lin, &vec![Some(0.0); n]).unwrap();
        assert_eq!(flat.mixing_flag, SeriesFlag::ConsistentWithDivergence);
    }

    #[test]
    fn phase_examples() {
        assert_eq!(zd_phase(3, 1.2).unwrap(), ZdPhase::TransientViaSecondBound);
        match zd_phase(4, 3.0).unwrap() {
            ZdPhase::TransientViaFirstBound { alpha } => assert!(alpha > 0.0 && alpha < 0.5),
            other => panic!("{other:?}"),
        }
        assert_eq!(zd_phase(3, 0.8).unwrap(), ZdPhase::UpperBoundsSilent);
        assert!(matches!(zd_phase(3, 1.5).unwrap(), ZdPhase::TransientViaFirstBound { alpha } if (alpha - 1.0 / 6.0).abs() < 1e-15));
        assert!(zd_phase(2, 1.2).is_err());
    }
}
