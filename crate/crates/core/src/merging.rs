//! Merging of the two-periodic birth-death chain: the auxiliary two-state
//! chain, exact two-start distances, the constraint certificate and the
//! excursion tail.

use num::{BigRational, One, Signed, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::families::merging::{to_f64, MergingChainSchedule};
use crate::graph::VertexId;
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::sequence::GraphSequence;
use crate::stats::{binomial_se, linear_fit, LinearFit};
use crate::walk::{kernel_rows, Budgets, KernelRows};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

#[derive(Clone, Debug)]
pub struct TwoStateAnalysis {
    pub theta: BigRational,
    pub eta: BigRational,
    /// Rows `A`, `B` of the transition matrix of `Z_t`.
    pub matrix: [[BigRational; 2]; 2],
    pub u: [BigRational; 2],
    pub drift_a: BigRational,
    pub drift_b: BigRational,
    pub beta: BigRational,
}

impl TwoStateAnalysis {
    /// `u M == u`, exactly.
    pub fn is_stationary(&self) -> bool {
        (0..2).all(|j| &self.u[0] * &self.matrix[0][j] + &self.u[1] * &self.matrix[1][j] == self.u[j])
    }

    pub fn beta_f64(&self) -> f64 {
        to_f64(&self.beta)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoStateSummary {
    pub theta: String,
    pub eta: String,
    pub u_a: String,
    pub u_b: String,
    pub drift_a: String,
    pub drift_b: String,
    pub beta: String,
    pub beta_f64: f64,
}

impl From<&TwoStateAnalysis> for TwoStateSummary {
    fn from(a: &TwoStateAnalysis) -> Self {
        Self {
            theta: a.theta.to_string(),
            eta: a.eta.to_string(),
            u_a: a.u[0].to_string(),
            u_b: a.u[1].to_string(),
            drift_a: a.drift_a.to_string(),
            drift_b: a.drift_b.to_string(),
            beta: a.beta.to_string(),
            beta_f64: a.beta_f64(),
        }
    }
}

/// Transition matrix, stationary law and drifts of the auxiliary chain.
pub fn two_state_analysis(theta: &BigRational, eta: &BigRational) -> Result<TwoStateAnalysis> {
    let one: BigRational = One::one();
    if !theta.is_positive() || *theta >= one {
        return Err(invalid("theta", "must lie in (0, 1)"));
    }
    if eta.is_negative() || *eta >= one {
        return Err(invalid("eta", "must lie in [0, 1)"));
    }
    let three = rat(3, 1);
    let a_den = &three - eta;
    let matrix = [
        [rat(2, 1) / &a_den, (&one - eta) / &a_den],
        [rat(1, 3), rat(2, 3)],
    ];
    let u_den = rat(6, 1) - rat(4, 1) * eta;
    let u = [(&three - eta) / &u_den, (&three - &three * eta) / &u_den];
    let drift_a = -(rat(2, 1) * theta) / &a_den;
    let drift_b = rat(2, 1) * theta / &three;
    let beta = &u[0] * &drift_a + &u[1] * &drift_b;
    Ok(TwoStateAnalysis { theta: theta.clone(), eta: eta.clone(), matrix, u, drift_a, drift_b, beta })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MergingRow {
    pub t: usize,
    pub tv: f64,
    /// Symmetrized `max_z |p/q - 1|`; infinite when the supports differ.
    pub relsup: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MergingReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub theta: f64,
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
    pub t_max: usize,
    /// Last time actually reached.
    pub t_reached: usize,
    /// First `t` with TV `< delta`, if reached.
    #[serde(rename = "T_tv")]
    pub t_tv: Option<usize>,
    /// First `t` with relative-sup `< delta`, if reached.
    #[serde(rename = "T_sup")]
    pub t_sup: Option<usize>,
    pub final_tv: f64,
    pub final_relsup: f64,
    pub budget_exhausted: bool,
    pub exact: bool,
    pub max_mass_drift: f64,
    #[serde(skip)]
    pub rows: Vec<MergingRow>,
}

#[derive(Clone, Debug)]
pub struct MergingOptions {
    pub t_max: usize,
    pub delta: f64,
    /// Keep a row every `every` steps (crossing times and `t_max` are always kept).
    pub every: usize,
    /// Stop once both merging times are found.
    pub stop_when_merged: bool,
}

impl MergingOptions {
    pub fn new(t_max: usize, delta: f64) -> Self {
        Self { t_max, delta, every: 1, stop_when_merged: false }
    }
}

fn distances(p: &[f64], q: &[f64]) -> (f64, f64) {
    let mut tv = 0.0;
    let mut relsup = 0.0f64;
    for (&a, &b) in p.iter().zip(q) {
        tv += (a - b).abs();
        if a == 0.0 && b == 0.0 {
            continue;
        }
        if a == 0.0 || b == 0.0 {
            relsup = f64::INFINITY;
        } else {
            relsup = relsup.max((a / b - 1.0).abs()).max((b / a - 1.0).abs());
        }
    }
    (0.5 * tv, relsup)
}

fn step<S: Scalar>(rows: &KernelRows<S>, p: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); p.len()];
    for (x, row) in rows.iter().enumerate() {
        if p[x].is_zero() {
            continue;
        }
        for (y, k) in row {
            out[*y].add_assign(&p[x].mul(k));
        }
    }
    out
}

/// `K_{0,t}(0, .)` and `K_{0,t}(N, .)` after `t` steps.
pub fn two_start_distributions<S: Scalar>(schedule: &MergingChainSchedule, t: usize) -> Result<(Vec<S>, Vec<S>)> {
    let kernels = parity_kernels::<S>(schedule)?;
    let n = schedule.n();
    let (mut p, mut q) = (point_mass::<S>(n + 1, 0), point_mass::<S>(n + 1, n));
    for s in 0..t {
        p = step(&kernels[s % 2], &p);
        q = step(&kernels[s % 2], &q);
    }
    Ok((p, q))
}

fn point_mass<S: Scalar>(len: usize, x: usize) -> Vec<S> {
    let mut v = vec![S::zero(); len];
    v[x] = S::one();
    v
}

fn parity_kernels<S: Scalar>(schedule: &MergingChainSchedule) -> Result<[KernelRows<S>; 2]> {
    let mut out = Vec::with_capacity(2);
    for parity in 0..2 {
        let g = schedule.snapshot_at(parity)?;
        // ids 0..=N are stored in order, so snapshot index and state coincide
        debug_assert!(g.ids().iter().enumerate().all(|(i, v)| *v == VertexId(i as u64)));
        out.push(kernel_rows::<S>(&g));
    }
    Ok([out.remove(0), out.remove(0)])
}

/// Evolves the two starts `0` and `N` side by side and records distances.
pub fn merging_distances<S: Scalar>(
    schedule: &MergingChainSchedule,
    options: &MergingOptions,
    budgets: Budgets,
) -> Result<MergingReport> {
    if !(options.delta > 0.0 && options.delta <= 1.0) {
        return Err(invalid("delta", "must lie in (0, 1]"));
    }
    let n = schedule.n();
    let cap = budgets.max_steps.min(usize::MAX as u64) as usize;
    let budget_exhausted = options.t_max > cap;
    let t_end = options.t_max.min(cap);
    let kernels = parity_kernels::<S>(schedule)?;
    let every = options.every.max(1);
    let (mut p, mut q) = (point_mass::<S>(n + 1, 0), point_mass::<S>(n + 1, n));
    let mut rows = Vec::new();
    let (mut t_tv, mut t_sup) = (None, None);
    let mut max_mass_drift = 0.0f64;
    let mut t = 0;
    let last = loop {
        let pf: Vec<f64> = p.iter().map(Scalar::to_f64).collect();
        let qf: Vec<f64> = q.iter().map(Scalar::to_f64).collect();
        let (tv, relsup) = distances(&pf, &qf);
        let last = MergingRow { t, tv, relsup };
        let mut keep = t % every == 0 || t == t_end;
        if t_tv.is_none() && tv < options.delta {
            t_tv = Some(t);
            keep = true;
        }
        if t_sup.is_none() && relsup < options.delta {
            t_sup = Some(t);
            keep = true;
        }
        if keep {
            rows.push(last);
        }
        if t == t_end || (options.stop_when_merged && t_tv.is_some() && t_sup.is_some()) {
            break last;
        }
        p = step(&kernels[t % 2], &p);
        q = step(&kernels[t % 2], &q);
        t += 1;
        if !S::EXACT {
            for v in [&mut p, &mut q] {
                let mass: f64 = v.iter().map(Scalar::to_f64).sum();
                max_mass_drift = max_mass_drift.max((mass - 1.0).abs());
            }
        }
    };
    if S::EXACT {
        for v in [&p, &q] {
            let mut mass = S::zero();
            for x in v {
                mass.add_assign(x);
            }
            if mass != S::one() {
                max_mass_drift = f64::INFINITY;
            }
        }
    }
    Ok(MergingReport {
        n,
        theta: to_f64(schedule.theta()),
        eta: to_f64(schedule.eta()),
        eps: to_f64(&schedule.epsilon()),
        delta: options.delta,
        t_max: options.t_max,
        t_reached: last.t,
        t_tv,
        t_sup,
        final_tv: last.tv,
        final_relsup: last.relsup,
        budget_exhausted,
        exact: S::EXACT,
        max_mass_drift,
        rows,
    })
}

/// Envelope `eps` accepted by [`certify_constraints`].
pub fn certificate_threshold() -> BigRational {
    rat(1, 12)
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: String,
    pub eps_f64: f64,
    pub threshold: String,
    pub detailed_balance: bool,
    pub passes: bool,
}

/// Smallest `eps` with interior entries in `1/3 ± eps`, endpoint holds in
/// `2/3 ± eps` and `(N+1) mu` in `1 ± eps` over one period, plus exact
/// detailed balance. Passes when `eps <= 1/12`, the envelope inside which
/// every kernel entry stays in `[1/4, 3/4]` and `(N+1) mu` in `[1/4, 4]`.
pub fn certify_constraints(schedule: &MergingChainSchedule) -> Certificate {
    let eps = schedule.epsilon();
    let threshold = certificate_threshold();
    let detailed_balance = schedule.detailed_balance_exact();
    Certificate {
        n: schedule.n(),
        eps_f64: to_f64(&eps),
        passes: detailed_balance && eps <= threshold,
        eps: eps.to_string(),
        threshold: threshold.to_string(),
        detailed_balance,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExcursionPoint {
    #[serde(rename = "N")]
    pub n: usize,
    pub replicates: u64,
    pub hits: u64,
    /// `P(sigma_0 >= N/2 | X_0 = 0)`.
    pub p: f64,
    pub std_err: f64,
}

/// Monte Carlo estimate of `P(sigma_0 >= N/2)` with `sigma_0 = inf{t > 0 : X_t = 0}`.
pub fn excursion_tail(schedule: &MergingChainSchedule, n: u64, seed: u64, budgets: Budgets) -> Result<ExcursionPoint> {
    let half = schedule.n() / 2;
    budgets.check_replicates(n, half)?;
    let kernels = parity_kernels::<f64>(schedule)?;
    let hits: u64 = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let mut x = 0usize;
            for t in 0..half.saturating_sub(1) {
                let mut u: f64 = rng.gen();
                let row = &kernels[t % 2][x];
                let mut next = row[row.len() - 1].0;
                for &(y, k) in row {
                    if u < k {
                        next = y;
                        break;
                    }
                    u -= k;
                }
                x = next;
                if x == 0 {
                    return 0;
                }
            }
            1
        })
        .sum();
    let p = hits as f64 / n as f64;
    Ok(ExcursionPoint { n: schedule.n(), replicates: n, hits, p, std_err: binomial_se(p, n) })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcursionReport {
    pub points: Vec<ExcursionPoint>,
    /// Fit of `log p` against `N` over points with `p > 0`.
    pub fit: Option<LinearFit>,
    /// `-slope`, the fitted exponential rate.
    pub rate: Option<f64>,
}

/// [`excursion_tail`] across a grid of `N`, each with its own stream.
pub fn excursion_scan(
    ns: &[usize],
    theta: &BigRational,
    eta: &BigRational,
    replicates: u64,
    seed: u64,
    budgets: Budgets,
) -> Result<ExcursionReport> {
    let mut points = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let schedule = MergingChainSchedule::new(n, theta.clone(), eta.clone(), n)?;
        points.push(excursion_tail(&schedule, replicates, seed.wrapping_add((i as u64) << 40), budgets)?);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|p| p.p > 0.0).map(|p| (p.n as f64, p.p.ln())).unzip();
    let fit = linear_fit(&xs, &ys);
    Ok(ExcursionReport { rate: fit.map(|f| -f.slope), fit, points })
}

/// `beta(theta, eta)` on the grid `{lo + k step}` of both parameters.
pub fn beta_grid(lo: &BigRational, step: &BigRational, count: usize) -> Result<Vec<(BigRational, BigRational, BigRational)>> {
    let mut out = Vec::with_capacity(count * count);
    for i in 0..count {
        let theta = lo + step * rat(i as i64, 1);
        for j in 0..count {
            let eta = lo + step * rat(j as i64, 1);
            let a = two_state_analysis(&theta, &eta)?;
            out.push((theta.clone(), eta, a.beta));
        }
    }
    Ok(out)
}

/// Largest `beta` on a grid; negative means the drift points to the ends everywhere.
pub fn max_beta(grid: &[(BigRational, BigRational, BigRational)]) -> Option<BigRational> {
    grid.iter().map(|g| g.2.clone()).reduce(|a, b| if b > a { b } else { a })
}

/// `true` when `beta == 0` exactly, i.e. no drift.
pub fn is_driftless(a: &TwoStateAnalysis) -> bool {
    Zero::is_zero(&a.beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(n: usize, theta: BigRational, eta: BigRational) -> MergingChainSchedule {
        MergingChainSchedule::new(n, theta, eta, 1000).unwrap()
    }

    #[test]
    fn beta_at_one_tenth() {
        let a = two_state_analysis(&rat(1, 10), &rat(1, 10)).unwrap();
        // direct evaluation: u = [29/56, 27/56], drifts -2/29 and 1/15
        assert_eq!(a.u, [rat(29, 56), rat(27, 56)]);
        assert_eq!(a.drift_a, rat(-2, 29));
        assert_eq!(a.drift_b, rat(1, 15));
        assert_eq!(a.beta, rat(29, 56) * rat(-2, 29) + rat(27, 56) * rat(1, 15));
        assert_eq!(a.beta, rat(-1, 280));
        assert!(a.is_stationary());
    }

    #[test]
    fn symmetric_without_holding_bias() {
        let a = two_state_analysis(&rat(1, 5), &rat(0, 1)).unwrap();
        assert_eq!(a.u, [rat(1, 2), rat(1, 2)]);
        assert!(a.is_stationary());
        assert!(two_state_analysis(&rat(0, 1), &rat(1, 2)).is_err());
    }

    #[test]
    fn beta_negative_on_grid() {
        let grid = beta_grid(&rat(1, 20), &rat(1, 20), 19).unwrap();
        assert_eq!(grid.len(), 361);
        assert!(max_beta(&grid).unwrap().is_negative());
    }

    #[test]
    fn starts_are_mirror_images() {
        let s = schedule(8, rat(1, 20), rat(1, 20));
        for t in [0, 1, 2, 7, 20] {
            let (p, q) = two_start_distributions::<BigRational>(&s, t).unwrap();
            for z in 0..=8 {
                assert_eq!(p[z], q[8 - z]);
            }
        }
    }

    #[test]
    fn exact_mode_conserves_mass() {
        let s = schedule(8, rat(1, 20), rat(1, 20));
        let r = merging_distances::<BigRational>(&s, &MergingOptions::new(40, 0.5), Budgets::default()).unwrap();
        assert_eq!(r.max_mass_drift, 0.0);
        assert_eq!(r.rows[0].tv, 1.0);
        assert!(r.rows[0].relsup.is_infinite());
        let f = merging_distances::<f64>(&s, &MergingOptions::new(40, 0.5), Budgets::default()).unwrap();
        assert!(f.max_mass_drift <= 1e-12);
        for (a, b) in r.rows.iter().zip(&f.rows) {
            assert!((a.tv - b.tv).abs() < 1e-12);
        }
    }

    #[test]
    fn driftless_chain_merges_diffusively() {
        let times: Vec<usize> = [8, 16]
            .iter()
            .map(|&n| {
                let s = schedule(n, rat(0, 1), rat(0, 1));
                let mut o = MergingOptions::new(100_000, 0.5);
                o.stop_when_merged = true;
                merging_distances::<f64>(&s, &o, Budgets::default()).unwrap().t_tv.unwrap()
            })
            .collect();
        let ratio = times[1] as f64 / times[0] as f64;
        assert!((3.0..=6.0).contains(&ratio), "{times:?}");
    }

    #[test]
    fn strong_drift_merges_super_quadratically() {
        let times: Vec<usize> = [12, 16, 20]
            .iter()
            .map(|&n| {
                let s = schedule(n, rat(9, 10), rat(9, 10));
                let mut o = MergingOptions::new(1_000_000, 0.5);
                o.stop_when_merged = true;
                merging_distances::<f64>(&s, &o, Budgets::default()).unwrap().t_tv.unwrap()
            })
            .collect();
        assert!(times[2] as f64 / times[0] as f64 > (20.0f64 / 12.0).powi(2), "{times:?}");
    }

    #[test]
    fn budget_cap_keeps_partial_results() {
        let s = schedule(8, rat(1, 20), rat(1, 20));
        let budgets = Budgets { max_steps: 50, ..Budgets::default() };
        let r = merging_distances::<f64>(&s, &MergingOptions::new(1000, 0.5), budgets).unwrap();
        assert!(r.budget_exhausted);
        assert_eq!(r.t_reached, 50);
    }

    #[test]
    fn certificate_for_small_drift() {
        let c = certify_constraints(&schedule(8, rat(1, 20), rat(1, 20)));
        assert!(c.passes && c.detailed_balance);
        assert!(c.eps_f64 > 0.0);
        let none = certify_constraints(&schedule(8, rat(0, 1), rat(0, 1)));
        assert_eq!(none.eps, "0");
        let strong = certify_constraints(&schedule(8, rat(9, 10), rat(9, 10)));
        assert!(!strong.passes);
    }

    #[test]
    fn excursion_probability_is_a_probability() {
        let s = schedule(4, rat(1, 20), rat(1, 20));
        let e = excursion_tail(&s, 10_000, 3, Budgets::default()).unwrap();
        assert!((0.0..=1.0).contains(&e.p));
        // N = 4: sigma_0 >= 2 iff the first step leaves 0
        let leave = 1.0 - to_f64(&s.kernel(0)[0][0].1);
        assert!((e.p - leave).abs() < 4.0 * e.std_err.max(1e-3));
    }
}
