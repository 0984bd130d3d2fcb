use growlab_core::bounds::{
    frozen_recurrence_experiment, lower_bound_check, soundness_scan, transience_report, BoundContext,
    FrozenRecurrenceConfig, LowerBoundConfig, SeriesFlag,
};
use growlab_core::families::frozen::{FrozenNestedFamily, FrozenNestedParams};
use growlab_core::families::lattice::{LatticeBallFamily, LatticeBallParams};
use growlab_core::isoperimetry::DEFAULT_ENUMERATION_CAP;
use growlab_core::walk::{evolve_exact, Budgets};
use growlab_core::GraphSequence;

fn lattice(d: usize, beta: f64, horizon: usize) -> LatticeBallFamily {
    LatticeBallFamily::new(LatticeBallParams {
        d,
        beta,
        a: 1.0,
        gamma: 0.5,
        horizon,
        c_d: None,
        max_states: 500_000,
    })
    .unwrap()
}

#[test]
fn lattice_bounds_hold_against_exact_evolution() {
    let seq = lattice(2, 1.0, 200);
    let ctx = BoundContext::for_sequence(&seq, seq.origin(), 200, 0.5, DEFAULT_ENUMERATION_CAP).unwrap();
    let report = soundness_scan(&ctx, &seq, seq.origin(), 200, Budgets::default()).unwrap();
    assert!(report.sound(), "first {} second {}", report.first_violations, report.second_violations);
    assert!(report.checked > 10_000);
}

#[test]
fn lattice_first_bound_at_t64_covers_return_probability() {
    let seq = lattice(2, 1.0, 64);
    let ctx = BoundContext::for_sequence(&seq, seq.origin(), 64, 0.5, DEFAULT_ENUMERATION_CAP).unwrap();
    let exact = evolve_exact::<f64>(&seq, seq.origin(), 64, Budgets::default()).unwrap();
    let p = exact[64].get_f64(seq.origin());
    let b = ctx.first_bound(64, 8).unwrap();
    assert!(b.value >= p, "{} < {p}", b.value);
}

#[test]
fn lower_bound_constant_is_stable_on_slow_balls() {
    let seq = lattice(2, 2.0 / 3.0, 2000);
    let config = LowerBoundConfig {
        psi_exponent: 2.0,
        delta0: 0.5,
        t_grid: (100..=2000).step_by(100).collect(),
        target_c: None,
    };
    let report = lower_bound_check(&seq, seq.origin(), &config, DEFAULT_ENUMERATION_CAP, Budgets::default()).unwrap();
    let tail: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.t >= 1000)
        .map(|r| r.min_v_times_p.unwrap())
        .collect();
    let hi = tail.iter().copied().fold(f64::MIN, f64::max);
    let lo = tail.iter().copied().fold(f64::MAX, f64::min);
    assert!(lo > 0.0 && hi / lo <= 2.0, "lo {lo} hi {hi}");
    assert_eq!(report.rows.iter().find(|r| r.t == 1000).unwrap().m, 10);
    assert!(report.zeta.unwrap() > 0.0);
}

#[test]
fn transience_flags_for_intermediate_growth() {
    let seq = lattice(3, 1.2, 30_000);
    let report = transience_report(&seq, 30_000, DEFAULT_ENUMERATION_CAP).unwrap();
    assert_eq!(report.inv_vol_flag, SeriesFlag::ConsistentWithConvergence);
    assert_eq!(report.mixing_flag, SeriesFlag::ConsistentWithConvergence);
}

#[test]
fn frozen_stage_local_time_tracks_shape() {
    let inner = vec![1.0, 2.0, 4.0, 8.0];
    let outer: Vec<f64> = inner.iter().map(|r| 1.5 * r).collect();
    let family = FrozenNestedFamily::new(FrozenNestedParams {
        d: 3,
        times: vec![0, 40, 60, 400, 900],
        inner,
        outer,
        gamma: 0.5,
        delta: 1.0 / 3.0,
        c_d: Some(0.3),
        max_states: None,
    })
    .unwrap();
    let config = FrozenRecurrenceConfig { walkers: 4000, hitting_walkers: 2000, seed: 7 };
    let report = frozen_recurrence_experiment(&family, &config, Budgets::default()).unwrap();
    assert_eq!(report.stages.len(), 4);
    assert!(report.rank_correlation.unwrap() > 0.0);
    assert_eq!(report.hitting.len(), 3);
    assert!(report.hitting.iter().all(|h| h.face_ratio.is_finite()));
}
