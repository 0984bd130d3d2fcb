//! The acceptance suite: one self-contained check per criterion.

use std::time::Instant;

use growlab_core::bounds::{
    iterate_l, lower_bound_check, soundness_scan, zd_phase, BoundContext, BoundParams, LowerBoundConfig, ZdPhase,
};
use growlab_core::evoset::run_plain;
use growlab_core::families::explicit::{growing_path, two_vertex};
use growlab_core::families::lattice::{LatticeBallFamily, LatticeBallParams};
use growlab_core::families::merging::MergingChainSchedule;
use growlab_core::isoperimetry::{exact_profile, IsoperimetricProfile, DEFAULT_ENUMERATION_CAP};
use growlab_core::merging::{
    beta_grid, certify_constraints, excursion_scan, merging_distances, two_state_analysis, MergingOptions,
};
use growlab_core::walk::{evolve_exact, on_diag_lower_check, return_stats_mc, Budgets};
use growlab_core::{GraphSequence, GraphSnapshot, Result};
use num::BigRational;
use rand::Rng;
use serde::Serialize;

pub const COUNT: usize = 11;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub fn name(id: usize) -> &'static str {
    match id {
        1 => "evolving-set identity",
        2 => "evolving-set weight martingale",
        3 => "upper-bound soundness",
        4 => "flat-profile closed form",
        5 => "on-diagonal lower bound",
        6 => "merging falsification",
        7 => "two-state drift",
        8 => "excursion tail",
        9 => "phase diagram and return growth",
        10 => "lower-bound stability",
        11 => "isoperimetry oracle",
        _ => "unknown",
    }
}

/// Runs one criterion; errors count as failures with the error as detail.
pub fn run_criterion(id: usize, seed: u64) -> CriterionResult {
    let clock = Instant::now();
    let outcome = match id {
        1 => evolving_set_identity(seed),
        2 => martingale(seed),
        3 => soundness(),
        4 => flat_profile(),
        5 => on_diagonal(seed),
        6 => merging_falsification(),
        7 => two_state_drift(),
        8 => excursion_tail(seed),
        9 => phase_diagram(seed),
        10 => lower_bound_stability(),
        11 => isoperimetry_oracle(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, name: name(id), passed, detail, seconds: clock.elapsed().as_secs_f64() }
}

pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    (1..=COUNT).map(|id| run_criterion(id, seed)).collect()
}

pub fn format_line(r: &CriterionResult) -> String {
    format!(
        "{} criterion {:>2} {}: {} ({:.1}s)",
        if r.passed { "PASS" } else { "FAIL" },
        r.id,
        r.name,
        r.detail,
        r.seconds
    )
}

type Check = Result<(bool, String)>;

const REPLICATES: u64 = 100_000;
const SE_TOLERANCE: f64 = 3.0;

fn test_families(horizon: usize) -> Result<Vec<(&'static str, Box<dyn GraphSequence>)>> {
    Ok(vec![
        ("two-vertex", Box::new(two_vertex(horizon))),
        ("path 4-6-8", Box::new(growing_path(&[[0, 4], [3, 6], [6, 8]], horizon)?)),
    ])
}

fn evolving_set_identity(seed: u64) -> Check {
    let horizon = 10;
    let mut checked = 0;
    let mut failures = 0;
    let mut worst_z = 0.0f64;
    for (k, (_, seq)) in test_families(horizon)?.into_iter().enumerate() {
        let x0 = seq.origin();
        let est = run_plain(seq.as_ref(), x0, horizon, REPLICATES, seed.wrapping_add(k as u64), Budgets::default())?;
        let exact = evolve_exact::<f64>(seq.as_ref(), x0, horizon, Budgets::default())?;
        for t in 0..=horizon {
            let g = seq.snapshot_at(t)?;
            for i in 0..g.len() {
                let y = g.id(i);
                let (e, se) = est.walk_estimate(g.degree(y)?, t, y);
                let diff = (e - exact[t].get_f64(y)).abs();
                checked += 1;
                if se > 0.0 {
                    worst_z = worst_z.max(diff / se);
                }
                if diff > SE_TOLERANCE * se + 1e-12 {
                    failures += 1;
                }
            }
        }
    }
    Ok((failures == 0, format!("{checked} (t, y) pairs, {failures} beyond 3 SE, max |z| = {worst_z:.2}")))
}

fn martingale(seed: u64) -> Check {
    let horizon = 20;
    let mut failures = 0;
    let mut worst_z = 0.0f64;
    for (k, (_, seq)) in test_families(horizon)?.into_iter().enumerate() {
        let x0 = seq.origin();
        let est = run_plain(seq.as_ref(), x0, horizon, REPLICATES, seed.wrapping_add(100 + k as u64), Budgets::default())?;
        let target = est.start_weight as f64;
        for m in &est.weights {
            let diff = (m.mean() - target).abs();
            let se = m.std_err();
            if se > 0.0 {
                worst_z = worst_z.max(diff / se);
            }
            if diff > SE_TOLERANCE * se + 1e-12 {
                failures += 1;
            }
        }
    }
    Ok((failures == 0, format!("2 families x 21 times, {failures} beyond 3 SE, max |z| = {worst_z:.2}")))
}

fn lattice(d: usize, beta: f64, horizon: usize) -> Result<LatticeBallFamily> {
    LatticeBallFamily::new(LatticeBallParams {
        d,
        beta,
        a: 1.0,
        gamma: 0.5,
        horizon,
        c_d: None,
        max_states: 500_000,
    })
}

fn soundness() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    let two = two_vertex(50);
    let z2 = lattice(2, 1.0, 200)?;
    let cases: [(&str, &dyn GraphSequence, usize); 2] = [("two-vertex", &two, 50), ("Z2 balls", &z2, 200)];
    for (label, seq, horizon) in cases {
        let x0 = seq.origin();
        let ctx = BoundContext::for_sequence(seq, x0, horizon, 0.5, DEFAULT_ENUMERATION_CAP)?;
        let r = soundness_scan(&ctx, seq, x0, horizon, Budgets::default())?;
        ok &= r.sound();
        parts.push(format!(
            "{label}: {} checked, violations {}/{}, min margins {:.3e}/{:.3e}",
            r.checked, r.first_violations, r.second_violations, r.min_first_margin, r.min_second_margin
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn flat_profile() -> Check {
    let alphas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let gammas = [0.1, 0.25, 0.4, 0.5];
    let phis = [0.05, 0.2, 0.5, 1.0];
    let (s, t, degree) = (1usize, 100usize, 4u64);
    let mut worst = 0.0f64;
    let mut points = 0;
    for (i, &alpha) in alphas.iter().enumerate() {
        for (j, &gamma) in gammas.iter().enumerate() {
            let phi = phis[(i + j) % phis.len()];
            let params = BoundParams::new(alpha, gamma, degree as f64)?;
            let profiles = vec![IsoperimetricProfile::constant(phi, 1_000_000); t + 1];
            let tr = iterate_l(&profiles, &params, s, t, degree)?;
            let l_s = (degree as f64).powf(alpha - 1.0);
            for u in s..=t {
                let closed = l_s * (-params.c_plus() * phi * phi * (u - s) as f64).exp();
                worst = worst.max(((tr.value(u) - closed) / closed).abs());
            }
            points += 1;
        }
    }
    Ok((worst <= 1e-8, format!("{points} grid points, max relative error {worst:.2e} (tolerance 1e-8)")))
}

/// Connected multigraph on at most ten vertices: random tree, extra edges and
/// random self-loops.
fn random_graph(rng: &mut impl Rng) -> GraphSnapshot {
    let n = rng.gen_range(2..=10u64);
    let mut edges = Vec::new();
    for child in 1..n {
        edges.push((rng.gen_range(0..child), child, rng.gen_range(1..=3)));
    }
    for _ in 0..rng.gen_range(0..=n) {
        edges.push((rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(1..=2)));
    }
    for v in 0..n {
        let loops = rng.gen_range(0..=2);
        if loops > 0 {
            edges.push((v, v, loops));
        }
    }
    GraphSnapshot::from_edges(edges)
}

fn on_diagonal(seed: u64) -> Check {
    let mut rng = growlab_core::rng::stream(seed, 5);
    let mut violations = 0;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let g = random_graph(&mut rng);
        let r = on_diag_lower_check(&g, 50, 1e-12);
        violations += r.violations;
        checked += r.checked;
        worst = worst.min(r.worst_margin);
    }
    Ok((violations == 0, format!("100 graphs, {checked} (x, t) checks, {violations} violations, min slack {worst:.3e}")))
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn merging_falsification() -> Check {
    let n = 32;
    let t = 100 * n * n;
    let schedule = MergingChainSchedule::new(n, rat(1, 20), rat(1, 20), t)?;
    let cert = certify_constraints(&schedule);
    let options = MergingOptions { t_max: t, delta: 0.5, every: t, stop_when_merged: false };
    let report = merging_distances::<f64>(&schedule, &options, Budgets::default())?;
    let tv = report.final_tv;
    let mut times = Vec::new();
    for m in [12usize, 16, 20] {
        let s = MergingChainSchedule::new(m, rat(1, 20), rat(1, 20), 10_000_000)?;
        let opts = MergingOptions { t_max: 10_000_000, delta: 0.5, every: 10_000_000, stop_when_merged: true };
        times.push(merging_distances::<f64>(&s, &opts, Budgets::default())?.t_tv);
    }
    let ratio = match (times[0], times[2]) {
        (Some(a), Some(b)) => b as f64 / a as f64,
        _ => f64::NAN,
    };
    let quadratic = (20.0f64 / 12.0).powi(2);
    let passed = cert.passes && tv >= 0.99 && report.t_reached == t && ratio > quadratic;
    let fmt_t = |x: &Option<usize>| x.map_or("none".to_string(), |v| v.to_string());
    Ok((
        passed,
        format!(
            "certificate {} (eps {}); TV at t = {t} is {tv:.3e} (need >= 0.99); T_TV(1/2) for N = 12, 16, 20: {}, {}, {}; ratio {ratio:.3} (need > {quadratic:.3})",
            if cert.passes { "passes" } else { "fails" },
            cert.eps,
            fmt_t(&times[0]),
            fmt_t(&times[1]),
            fmt_t(&times[2]),
        ),
    ))
}

fn two_state_drift() -> Check {
    let a = two_state_analysis(&rat(1, 10), &rat(1, 10))?;
    // direct evaluation: u(A) = (3 - eta)/(6 - 4 eta), u(B) = (3 - 3 eta)/(6 - 4 eta),
    // drifts -2 theta/(3 - eta) and 2 theta/3
    let (theta, eta) = (rat(1, 10), rat(1, 10));
    let den = rat(6, 1) - rat(4, 1) * &eta;
    let ua = (rat(3, 1) - &eta) / &den;
    let ub = (rat(3, 1) - rat(3, 1) * &eta) / &den;
    let oracle = &ua * (-(rat(2, 1) * &theta) / (rat(3, 1) - &eta)) + &ub * (rat(2, 1) * &theta / rat(3, 1));
    let exact = a.beta == rat(-1, 280) && oracle == rat(-1, 280);
    let grid = beta_grid(&rat(1, 20), &rat(1, 20), 19)?;
    let negative = grid.iter().filter(|g| g.2 < rat(0, 1)).count();
    let max = grid.iter().map(|g| g.2.clone()).max().unwrap_or_else(|| rat(0, 1));
    Ok((
        exact && negative == grid.len(),
        format!("beta(0.1, 0.1) = {} (oracle {}); {negative}/{} grid points negative, max beta {max}", a.beta, oracle, grid.len()),
    ))
}

fn excursion_tail(seed: u64) -> Check {
    let ns = [8usize, 16, 24, 32];
    let drift = excursion_scan(&ns, &rat(1, 20), &rat(1, 20), REPLICATES, seed, Budgets::default())?;
    let null = excursion_scan(&ns, &rat(0, 1), &rat(0, 1), REPLICATES, seed.wrapping_add(1 << 20), Budgets::default())?;
    let (Some(f), Some(g)) = (drift.fit, null.fit) else {
        return Ok((false, "no fit: some tail probability is zero".to_string()));
    };
    let ratio = f.slope.abs() / g.slope.abs();
    let passed = f.slope < 0.0 && f.r_squared >= 0.9 && ratio >= 5.0;
    let ps: Vec<String> = drift.points.iter().map(|p| format!("{:.4}", p.p)).collect();
    let qs: Vec<String> = null.points.iter().map(|p| format!("{:.4}", p.p)).collect();
    Ok((
        passed,
        format!(
            "drifting p = [{}], slope {:.4}, R2 {:.3}; null p = [{}], slope {:.4}; slope ratio {ratio:.2} (need >= 5)",
            ps.join(", "),
            f.slope,
            f.r_squared,
            qs.join(", "),
            g.slope
        ),
    ))
}

fn phase_diagram(seed: u64) -> Check {
    let second = zd_phase(3, 1.2)? == ZdPhase::TransientViaSecondBound;
    let first = match zd_phase(4, 3.0)? {
        ZdPhase::TransientViaFirstBound { alpha } => Some(alpha),
        _ => None,
    };
    let silent = zd_phase(3, 0.8)? == ZdPhase::UpperBoundsSilent;
    let ks = [1_000usize, 10_000];
    let mut factors = Vec::new();
    for (k, beta) in [0.8, 1.2].into_iter().enumerate() {
        let seq = lattice(3, beta, ks[1])?;
        let stats = return_stats_mc(&seq, seq.origin(), &ks, REPLICATES, seed.wrapping_add(900 + k as u64), Budgets::default())?;
        factors.push(stats[1].mean / stats[0].mean);
    }
    let margin = factors[0] / factors[1] - 1.0;
    let passed = second && first.is_some() && silent && margin >= 0.10;
    Ok((
        passed,
        format!(
            "phases: (3, 1.2) second-bound {second}, (4, 3) first-bound alpha {}, (3, 0.8) silent {silent}; E[N0] growth 1e3 -> 1e4: beta 0.8 x{:.4}, beta 1.2 x{:.4}, margin {:.1}% (need >= 10%)",
            first.map_or("none".to_string(), |a| format!("{a:.4}")),
            factors[0],
            factors[1],
            100.0 * margin
        ),
    ))
}

fn lower_bound_stability() -> Check {
    let seq = lattice(2, 2.0 / 3.0, 2000)?;
    let config = LowerBoundConfig {
        psi_exponent: 2.0,
        delta0: 0.5,
        t_grid: (1000..=2000).step_by(100).collect(),
        target_c: None,
    };
    let report = lower_bound_check(&seq, seq.origin(), &config, DEFAULT_ENUMERATION_CAP, Budgets::default())?;
    let values: Vec<f64> = report.rows.iter().filter_map(|r| r.min_v_times_p).collect();
    let hi = values.iter().copied().fold(f64::MIN, f64::max);
    let lo = values.iter().copied().fold(f64::MAX, f64::min);
    let complete = values.len() == report.rows.len() && !values.is_empty();
    let ratio = hi / lo;
    Ok((
        complete && lo > 0.0 && ratio <= 2.0,
        format!("min_y v(t) P over t in [1000, 2000]: min {lo:.4}, max {hi:.4}, ratio {ratio:.3} (need <= 2)"),
    ))
}

fn isoperimetry_oracle() -> Check {
    let p4 = GraphSnapshot::from_edges([(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
    let prof = exact_profile(&p4, DEFAULT_ENUMERATION_CAP)?;
    let cheeger = prof.cheeger();
    let mut witness: Vec<u64> = prof.witness().unwrap_or(&[]).iter().map(|v| v.0).collect();
    witness.sort_unstable();
    let path_ok = cheeger.is_some_and(|c| (c - 1.0 / 3.0).abs() < 1e-15) && witness == [0, 1];
    // r(t) = ceil(t^(1/2)) reaches radius 2 at t = 4
    let seq = lattice(2, 1.0, 4)?;
    let mut dominated = 0;
    let mut radii = Vec::new();
    for t in 0..=4 {
        let r = seq.radius(t);
        if radii.contains(&r) {
            continue;
        }
        radii.push(r);
        let exact = exact_profile(&*seq.snapshot_at(t)?, DEFAULT_ENUMERATION_CAP)?;
        let analytic = seq.analytic_profile(t).expect("lattice balls ship an analytic profile");
        if exact.dominates(&analytic) {
            dominated += 1;
        }
    }
    Ok((
        path_ok && dominated == radii.len(),
        format!(
            "P4 Cheeger {} witness {witness:?}; exact dominates analytic on {dominated}/{} Z2 balls (radii {radii:?}, c_d {:.4})",
            cheeger.map_or("none".to_string(), |c| format!("{c:.6}")),
            radii.len(),
            seq.c_d()
        ),
    ))
}
