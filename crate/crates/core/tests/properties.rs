use std::collections::BTreeSet;

use growlab_core::bounds::{iterate_l, zd_phase, BoundContext, BoundParams, ZdPhase};
use growlab_core::evoset::evolving_step;
use growlab_core::families::merging::MergingChainSchedule;
use growlab_core::isoperimetry::{exact_profile, IsoperimetricProfile};
use growlab_core::merging::{two_start_distributions, two_state_analysis};
use growlab_core::sequence::FrozenSnapshot;
use growlab_core::walk::{evolve_exact, on_diag_lower_check, Budgets};
use growlab_core::{GraphSnapshot, VertexId};
use num::{BigRational, One, Signed, Zero};
use proptest::prelude::*;

/// Connected multigraph on `n` vertices: a random spanning tree, extra edges
/// and at least one loop per vertex.
fn connected_graph() -> impl Strategy<Value = GraphSnapshot> {
    (2usize..8).prop_flat_map(|n| {
        (
            proptest::collection::vec((0usize..1000, 1u64..4), n - 1),
            proptest::collection::vec((0usize..n, 0usize..n, 1u64..3), 0..n),
            proptest::collection::vec(1u64..4, n),
        )
            .prop_map(move |(tree, extra, loops)| {
                let mut edges = Vec::new();
                for (i, (parent, m)) in tree.into_iter().enumerate() {
                    let child = i + 1;
                    edges.push(((parent % child) as u64, child as u64, m));
                }
                for (a, b, m) in extra {
                    edges.push((a as u64, b as u64, m));
                }
                for (v, m) in loops.into_iter().enumerate() {
                    edges.push((v as u64, v as u64, m));
                }
                GraphSnapshot::from_edges(edges)
            })
    })
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_evolution_conserves_mass(g in connected_graph(), t in 1usize..12) {
        let seq = FrozenSnapshot::new(g, VertexId(0), t).unwrap();
        let dists = evolve_exact::<BigRational>(&seq, VertexId(0), t, Budgets::default()).unwrap();
        for d in &dists {
            prop_assert!(d.total().is_one());
        }
    }

    #[test]
    fn frozen_walk_is_reversible(g in connected_graph(), t in 1usize..8) {
        let n = g.len();
        let x = VertexId(0);
        let y = g.id(n - 1);
        let seq_x = FrozenSnapshot::new(g.clone(), x, t).unwrap();
        let seq_y = FrozenSnapshot::new(g.clone(), y, t).unwrap();
        let px = evolve_exact::<BigRational>(&seq_x, x, t, Budgets::default()).unwrap();
        let py = evolve_exact::<BigRational>(&seq_y, y, t, Budgets::default()).unwrap();
        let dx = BigRational::from_integer(g.degree(x).unwrap().into());
        let dy = BigRational::from_integer(g.degree(y).unwrap().into());
        prop_assert_eq!(dx * px[t].get(y), dy * py[t].get(x));
    }

    #[test]
    fn return_probability_dominates_stationary_mass(g in connected_graph()) {
        let report = on_diag_lower_check(&g, 25, 1e-12);
        prop_assert_eq!(report.violations, 0);
    }

    #[test]
    fn exact_profiles_are_non_increasing_and_bounded(g in connected_graph()) {
        let p = exact_profile(&g, 20).unwrap();
        let table = p.table();
        for w in table.windows(2) {
            prop_assert!(w[1].1.unwrap() <= w[0].1.unwrap());
        }
        if let Some(c) = p.cheeger() {
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn smaller_uniform_gives_larger_set(g in connected_graph(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        let start = vec![VertexId(0)];
        let a: BTreeSet<_> = evolving_step(&start, &g, &g, lo, 0).unwrap().into_iter().collect();
        let b: BTreeSet<_> = evolving_step(&start, &g, &g, hi, 0).unwrap().into_iter().collect();
        prop_assert!(b.is_subset(&a));
    }

    #[test]
    fn l_trajectory_is_non_increasing_and_at_most_one(
        alpha in 0.05f64..0.95,
        gamma in 0.05f64..0.5,
        coefs in proptest::collection::vec((0.0f64..1.0, 0.0f64..0.5), 12),
        degree in 1u64..20,
    ) {
        let params = BoundParams::new(alpha, gamma, 20.0).unwrap();
        let profiles: Vec<_> = coefs
            .iter()
            .enumerate()
            .map(|(u, &(c, p))| {
                let vol = 40 + 10 * u as u64;
                if p < 0.25 {
                    IsoperimetricProfile::constant(c, vol)
                } else {
                    IsoperimetricProfile::lattice_bound(c, 2, vol)
                }
            })
            .collect();
        let tr = iterate_l(&profiles, &params, 1, 12, degree).unwrap();
        let values = tr.values();
        prop_assert!(values[0] <= 1.0);
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn first_bound_is_monotone_in_the_profile(scale in 1.0f64..4.0, c in 0.05f64..0.5, t in 2usize..30) {
        let params = BoundParams::new(0.5, 0.5, 8.0).unwrap();
        let vols: Vec<u64> = (0..=30).map(|u| 8 * (u as u64 + 1)).collect();
        let lo: Vec<_> = (0..30).map(|u| IsoperimetricProfile::lattice_bound(c, 2, vols[u])).collect();
        let hi: Vec<_> = (0..30).map(|u| IsoperimetricProfile::lattice_bound(c * scale, 2, vols[u])).collect();
        let a = BoundContext::new(params, 8, vols.clone(), lo).unwrap();
        let b = BoundContext::new(params, 8, vols, hi).unwrap();
        prop_assert!(b.first_bound(t, 8).unwrap().value <= a.first_bound(t, 8).unwrap().value);
    }

    #[test]
    fn phase_regions_partition(d in 3usize..12, beta in 0.01f64..12.0) {
        let phase = zd_phase(d, beta).unwrap();
        let half = d as f64 / 2.0;
        match phase {
            ZdPhase::UpperBoundsSilent => prop_assert!(beta <= 1.0),
            ZdPhase::TransientViaSecondBound => prop_assert!(beta > 1.0 && beta < half),
            ZdPhase::TransientViaFirstBound { alpha } => {
                prop_assert!(beta >= half);
                prop_assert!(alpha > 0.0 && alpha < 1.0 - 2.0 / d as f64);
                prop_assert!(beta * (1.0 - alpha) > 1.0);
            }
        }
    }

    #[test]
    fn two_state_chain_is_stationary_with_negative_drift(a in 1i64..100, b in 1i64..100) {
        let an = two_state_analysis(&rat(a, 100), &rat(b, 100)).unwrap();
        prop_assert!(an.is_stationary());
        prop_assert_eq!(&an.u[0] + &an.u[1], BigRational::one());
        prop_assert!(an.beta.is_negative());
    }

    #[test]
    fn merging_starts_mirror(half in 1usize..6, a in 0i64..20, b in 0i64..20, t in 0usize..30) {
        let n = 2 * half;
        let s = MergingChainSchedule::new(n, rat(a, 20), rat(b, 20), 100).unwrap();
        let (p, q) = two_start_distributions::<BigRational>(&s, t).unwrap();
        for z in 0..=n {
            prop_assert_eq!(&p[z], &q[n - z]);
        }
        let tv: BigRational = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(BigRational::zero(), |s, d| s + d);
        prop_assert!(tv <= rat(2, 1));
    }
}
