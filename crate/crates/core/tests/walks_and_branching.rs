use proptest::prelude::*;
use trapbrw::brw::{
    confined_count, simulate, simulate_many, step_counts, step_particles, BranchOrder,
    PopulationState, SimMode, SimOptions,
};
use trapbrw::lattice::{generate_environment, LatticeConfig, Site, TrapField};
use trapbrw::rng::{derive_replica_seed, replica_rng};
use trapbrw::walk::{survival_probability_dp, BallWalk, BoundaryMode};

fn field(seed: u64, l: u32, p: f64) -> TrapField {
    generate_environment(&LatticeConfig::new(2, l, p, seed).unwrap()).unwrap()
}

/// Same environment with the origin forced vacant.
fn field_with_vacant_origin(seed: u64, l: u32, p: f64) -> TrapField {
    let f = field(seed, l, p);
    TrapField::from_fn(f.config(), |s| s != Site::ORIGIN && f.is_trap(s).unwrap()).unwrap()
}

fn enumerate(field: &TrapField, at: Site, left: usize) -> f64 {
    if left == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for axis in 0..2 {
        for delta in [-1, 1] {
            let next = at.offset(axis, delta);
            if !field.is_trap(next).unwrap() {
                total += enumerate(field, next, left - 1);
            }
        }
    }
    total / 4.0
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursion_matches_path_enumeration(seed in any::<u64>(), p in 0.4f64..0.95, n in 0usize..8) {
        let f = field_with_vacant_origin(seed, 10, p);
        let table = survival_probability_dp(&f, Site::ORIGIN, n, BoundaryMode::Exact).unwrap();
        for k in 0..=n {
            prop_assert!((table.q(k) - enumerate(&f, Site::ORIGIN, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn survival_is_nonincreasing_and_trap_monotone(seed in any::<u64>(), p in 0.4f64..0.95, x in -6i32..=6, y in -6i32..=6) {
        let f = field_with_vacant_origin(seed, 30, p);
        let q = survival_probability_dp(&f, Site::ORIGIN, 20, BoundaryMode::Exact).unwrap().values();
        prop_assert!(q.windows(2).all(|w| w[1] <= w[0]));

        let extra = Site::new2(x, y);
        prop_assume!(extra != Site::ORIGIN);
        let more = TrapField::from_fn(f.config(), |s| s == extra || f.is_trap(s).unwrap()).unwrap();
        let q_more = survival_probability_dp(&more, Site::ORIGIN, 20, BoundaryMode::Exact).unwrap().values();
        for (a, b) in q_more.iter().zip(&q) {
            prop_assert!(*a <= *b + 1e-15);
        }
    }

    #[test]
    fn absorbing_boundary_is_a_lower_bound(seed in any::<u64>(), p in 0.5f64..0.95) {
        let f = field_with_vacant_origin(seed, 6, p);
        let absorbed = survival_probability_dp(&f, Site::ORIGIN, 12, BoundaryMode::Absorbing).unwrap().values();
        let big = TrapField::from_fn(&LatticeConfig::new(2, 20, p, seed).unwrap(), |s| {
            f.is_trap(s).unwrap_or(false)
        }).unwrap();
        let exact = survival_probability_dp(&big, Site::ORIGIN, 12, BoundaryMode::Exact).unwrap().values();
        for (a, b) in absorbed.iter().zip(&exact) {
            prop_assert!(*a <= *b + 1e-15);
        }
    }

    #[test]
    fn ball_survival_grows_with_radius_and_falls_with_time(r in 0.0f64..5.0, dr in 0.0f64..2.0) {
        let small = BallWalk::new(2, r).unwrap().survival_series(30);
        let large = BallWalk::new(2, r + dr).unwrap().survival_series(30);
        prop_assert!(small.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        for (a, b) in small.iter().zip(&large) {
            prop_assert!(*a <= *b + 1e-15);
        }
    }

    #[test]
    fn branching_steps_keep_the_books(seed in any::<u64>(), rs in any::<u64>()) {
        let f = field_with_vacant_origin(seed, 12, 0.7);
        let origin = f.geometry().index(Site::ORIGIN).unwrap();
        let mut rng = replica_rng(rs);
        let mut state = PopulationState::single(origin);
        let mut particles = vec![origin];
        for _ in 0..6 {
            let before = state.total();
            let (next, tally) = step_counts(&state, &f, &mut rng).unwrap();
            prop_assert_eq!(tally.fissions + tally.kills, before);
            prop_assert_eq!(next.total(), 2 * tally.fissions);
            prop_assert!(next.counts.iter().all(|&(i, c)| c > 0 && !f.is_trap_index(i)));
            state = next;

            let before = particles.len() as u128;
            let (next, tally) = step_particles(&particles, &f, &mut rng).unwrap();
            prop_assert_eq!(tally.fissions + tally.kills, before);
            prop_assert!(next.iter().all(|&i| !f.is_trap_index(i)));
            particles = next;
        }
    }

    #[test]
    fn replicas_are_reproducible_and_balanced(seed in any::<u64>(), rs in any::<u64>(), count_mode in any::<bool>()) {
        let f = field_with_vacant_origin(seed, 20, 0.75);
        let mode = if count_mode { SimMode::CountMultinomial } else { SimMode::ParticleExact };
        let opts = SimOptions::new(mode, 10, rs);
        let a = simulate(&f, Site::ORIGIN, &opts).unwrap();
        let b = simulate(&f, Site::ORIGIN, &opts).unwrap();
        prop_assert!(a.accounting_holds());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn mean_population_matches_walk_survival() {
    const N: usize = 8;
    for (i, mode) in [SimMode::ParticleExact, SimMode::CountMultinomial]
        .into_iter()
        .enumerate()
    {
        let f = field_with_vacant_origin(11 + i as u64, 20, 0.7);
        let q = survival_probability_dp(&f, Site::ORIGIN, N, BoundaryMode::Exact)
            .unwrap()
            .q(N);
        let records =
            simulate_many(&f, Site::ORIGIN, &SimOptions::new(mode, N, 0), 20_000, 5).unwrap();
        let xs: Vec<f64> = records
            .iter()
            .map(|r| r.final_population() as f64)
            .collect();
        let (m, se) = mean_and_se(&xs);
        let want = 2f64.powi(N as i32) * q;
        assert!(
            (m - want).abs() <= 4.0 * se,
            "{mode:?}: mean {m} vs {want} (se {se})"
        );
    }
}

#[test]
fn particle_and_count_modes_share_a_law() {
    const N: usize = 4;
    const R: usize = 20_000;
    let f = field_with_vacant_origin(3, 10, 0.7);
    let histogram = |mode: SimMode, master: u64| {
        let records =
            simulate_many(&f, Site::ORIGIN, &SimOptions::new(mode, N, 0), R, master).unwrap();
        let mut h = vec![0f64; (1 << N) + 1];
        for r in &records {
            h[r.final_population() as usize] += 1.0 / R as f64;
        }
        h
    };
    let a = histogram(SimMode::ParticleExact, 1);
    let b = histogram(SimMode::CountMultinomial, 2);
    let tv: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn confined_counts_average_to_the_survival_mass() {
    const R: usize = 20_000;
    for r in [1.5, 2.5] {
        let p = BallWalk::new(2, r).unwrap().survival_series(8);
        for n in [2usize, 5, 8] {
            let xs: Vec<f64> = (0..R as u64)
                .map(|i| {
                    let mut rng = replica_rng(derive_replica_seed(n as u64, i));
                    confined_count(2, r, n, BranchOrder::MoveThenSplit, &mut rng).unwrap() as f64
                })
                .collect();
            let (m, se) = mean_and_se(&xs);
            let want = 2f64.powi(n as i32) * p[n];
            assert!(
                (m - want).abs() <= 4.0 * se,
                "r {r} n {n}: {m} vs {want} (se {se})"
            );
        }
    }
}
