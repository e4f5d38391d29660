mod common;

use intermittent_nash::dynamics::{derivative, SeekingSystem};
use intermittent_nash::fixtures;
use intermittent_nash::graph::{coupling_matrices_for_dims, solve_lyapunov_certificate};
use intermittent_nash::linalg::{kron, solve_continuous_lyapunov, solve_linear};
use intermittent_nash::{AcrMode, DirectedGraph, Edge, GameModel, Schedule, SeekSign};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Random simple digraphs on 2..=6 nodes as (n, edges).
fn digraph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..=6).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let m = pairs.len();
        (Just(n), proptest::collection::vec(any::<bool>(), m)).prop_map(move |(n, keep)| {
            let edges = pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| *e).collect();
            (n, edges)
        })
    })
}

fn build(n: usize, edges: &[(usize, usize)], w: impl Fn(usize) -> f64) -> DirectedGraph {
    let e: Vec<Edge> = edges.iter().enumerate().map(|(k, &(f, t))| Edge::new(f, t, w(k))).collect();
    DirectedGraph::from_edges(n, &e).unwrap()
}

/// `M(a, b)`, with the empty interval allowed.
fn width(s: &Schedule, a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        s.comm_width(a, b).unwrap()
    }
}

/// Sorted disjoint windows inside `[0, horizon)`.
fn schedule() -> impl Strategy<Value = Schedule> {
    proptest::collection::vec((0.1f64..5.0, 0.1f64..5.0), 0..8).prop_map(|spans| {
        let mut t = 0.0;
        let mut windows = Vec::new();
        for (gap, width) in spans {
            let start = t + gap;
            windows.push((start, start + width));
            t = start + width;
        }
        Schedule::from_intervals(&windows, t + 1.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn strong_connectivity_matches_closure((n, edges) in digraph()) {
        let g = build(n, &edges, |_| 1.0);
        prop_assert_eq!(g.is_strongly_connected(), common::closure_strongly_connected(n, &edges));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn laplacian_annihilates_ones((n, edges) in digraph(), ws in proptest::collection::vec(1u32..9, 30)) {
        let g = build(n, &edges, |k| f64::from(ws[k % ws.len()]));
        let l = g.laplacian();
        let ones = DVector::from_element(n, 1.0);
        prop_assert!((l * ones).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn coupling_matches_componentwise_law(
        seed in any::<u64>(),
        y in proptest::collection::vec(-10.0f64..10.0, 25),
        x in proptest::collection::vec(-10.0f64..10.0, 5),
    ) {
        // Random weights on the ring plus chords.
        let w = |k: usize| 0.5 + ((seed >> (k % 60)) & 7) as f64 * 0.25;
        let edges = [(0, 4), (4, 3), (3, 2), (2, 1), (1, 0), (0, 2), (3, 1)];
        let g = build(5, &edges, w);
        let cm = coupling_matrices_for_dims(&g, &[1; 5]);
        let matrix = -(&cm.coupling * DVector::from_column_slice(&y)) + cm.injected(&x);
        for i in 0..5 {
            for j in 0..5 {
                let mut rhs = 0.0;
                for k in 0..5 {
                    rhs -= g.weight(i, k) * (y[i * 5 + j] - y[k * 5 + j]);
                }
                rhs -= g.weight(i, j) * (y[i * 5 + j] - x[j]);
                let got = matrix[i * 5 + j];
                prop_assert!((got - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn comm_width_is_additive(s in schedule(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let h = s.horizon();
        let mut p = [a * h, b * h, c * h];
        p.sort_by(f64::total_cmp);
        let whole = width(&s, p[0], p[2]);
        let split = width(&s, p[0], p[1]) + width(&s, p[1], p[2]);
        prop_assert!((whole - split).abs() <= 1e-12 * h);
        let total = s.comm_width(0.0, h).unwrap() + s.silent_width(0.0, h).unwrap();
        // Exact up to the rounding of `c + (h - c)`.
        prop_assert!((total - h).abs() <= 2.0 * f64::EPSILON * h);
    }

    #[test]
    fn periodic_width_per_period(period in 0.5f64..20.0, theta in 0.05f64..0.95, m in 1usize..12) {
        let s = Schedule::periodic(period, theta, period * m as f64).unwrap();
        for k in 0..=m {
            let got = width(&s, 0.0, k as f64 * period);
            prop_assert!((got - k as f64 * theta * period).abs() <= 1e-12 * period * m as f64);
        }
    }

    #[test]
    fn half_open_windows(s in schedule()) {
        let w = s.windows();
        for (k, win) in w.iter().enumerate() {
            prop_assert!(s.is_communicating(win.start).unwrap());
            let next_starts_here = w.get(k + 1).is_some_and(|n| n.start == win.end);
            if win.end < s.horizon() && !next_starts_here {
                prop_assert!(!s.is_communicating(win.end).unwrap());
            }
        }
    }

    #[test]
    fn affine_verification(x in proptest::collection::vec(-30.0f64..30.0, 5)) {
        let game = fixtures::energy_game();
        let (m, b) = game.affine_coefficients().unwrap();
        let want = m * DVector::from_column_slice(&x) + b;
        let got = game.pseudo_gradient(&x);
        for (g, w) in got.iter().zip(want.iter()) {
            prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0));
        }
    }

    #[test]
    fn energy_gradient_matches_fd(v in proptest::collection::vec(-30.0f64..30.0, 5)) {
        prop_assert!(common::fd_gradient_gap(&fixtures::energy_game(), &v) <= 1e-6);
    }

    #[test]
    fn connectivity_gradient_matches_fd(v in proptest::collection::vec(-15.0f64..15.0, 10)) {
        prop_assert!(common::fd_gradient_gap(&GameModel::connectivity(), &v) <= 1e-6);
    }

    #[test]
    fn lyapunov_matches_kronecker_oracle(shift in 0.5f64..3.0, entries in proptest::collection::vec(-1.0f64..1.0, 16)) {
        // shift·I + small perturbation keeps the spectrum in the right half-plane.
        let h = DMatrix::from_fn(4, 4, |r, c| entries[r * 4 + c] * 0.4 + if r == c { shift } else { 0.0 });
        if intermittent_nash::linalg::min_real_eigenvalue(&h) <= 0.1 {
            return Ok(());
        }
        let q = DMatrix::<f64>::identity(4, 4);
        let p = solve_continuous_lyapunov(&h, &q).unwrap();
        // (I ⊗ Hᵀ + Hᵀ ⊗ I) vec(P) = vec(Q), column-major vec.
        let ht = h.transpose();
        let i4 = DMatrix::<f64>::identity(4, 4);
        let big = kron(&i4, &ht) + kron(&ht, &i4);
        let vq = DVector::from_column_slice(q.as_slice());
        let vp = solve_linear(&big, &vq).unwrap();
        for (a, b) in p.as_slice().iter().zip(vp.iter()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

/// Slack re-evaluated on dense random time points (10⁴ per mode).
#[test]
fn acr_slack_reevaluation() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for s in [fixtures::acr_schedule(), fixtures::aic_schedule(), fixtures::pic_schedule(100.0)] {
        let h = s.horizon();
        for theta in [0.3, 0.5, 0.7] {
            let rep = s.check_acr(theta, AcrMode::FromZero).unwrap();
            let m_worst = width(&s, 0.0, rep.worst_time);
            assert!((m_worst - (theta * rep.worst_time - rep.elastic_slack_found)).abs() < 1e-9);
            for _ in 0..10_000 {
                let t = rng.random_range(0.0..h);
                let m = width(&s, 0.0, t);
                assert!(m >= theta * t - rep.elastic_slack_found - 1e-9, "t = {t}");
            }
            let rep = s.check_acr(theta, AcrMode::AllPairs).unwrap();
            let m_worst = width(&s, rep.worst_start, rep.worst_time);
            let bound = theta * (rep.worst_time - rep.worst_start) - rep.elastic_slack_found;
            assert!((m_worst - bound).abs() < 1e-9);
            for _ in 0..10_000 {
                let a = rng.random_range(0.0..h);
                let b = rng.random_range(0.0..h);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                let m = width(&s, a, b);
                assert!(m >= theta * (b - a) - rep.elastic_slack_found - 1e-9);
            }
        }
    }
}

/// Componentwise right-hand side against the assembled matrices.
#[test]
fn seeking_system_matches_derivative_on_connectivity() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let game = GameModel::connectivity();
    let g = fixtures::ring_graph();
    let kbar = [1.0, 0.5, 2.0, 1.5, 0.7];
    let sys = SeekingSystem::new(&game, &g, 0.3, &kbar).unwrap();
    let cm = coupling_matrices_for_dims(&g, game.dims());
    for _ in 0..100 {
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (mut dx, mut dy) = (vec![0.0; 10], vec![0.0; 50]);
        sys.eval(true, &x, &y, &mut dx, &mut dy);
        let (dx2, dy2) = derivative(&game, &g, 0.3, &kbar, true, &x, &y).unwrap();
        assert_eq!(dx, dx2);
        let want = -(&cm.coupling * DVector::from_column_slice(&y)) + cm.injected(&x);
        for (a, b) in dy.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        // The gain sign flips the descent game's gradient.
        for i in 0..5 {
            let grad = game.partial_gradient(i, &y[i * 10..(i + 1) * 10]);
            for (k, idx) in game.block(i).enumerate() {
                let want = SeekSign::Descent.factor() * 0.3 * kbar[i] * grad[k];
                assert!((dx[idx] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn certificate_on_random_strongly_connected_graphs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 30 {
        let n = rng.random_range(2..=6);
        let mut edges = Vec::new();
        for f in 0..n {
            for t in 0..n {
                if f != t && rng.random_bool(0.4) {
                    edges.push(Edge::new(f, t, rng.random_range(0.2..3.0)));
                }
            }
        }
        let g = DirectedGraph::from_edges(n, &edges).unwrap();
        if !g.is_strongly_connected() {
            continue;
        }
        let cm = coupling_matrices_for_dims(&g, &vec![1; n]);
        let s = cm.stack_len();
        let cert = solve_lyapunov_certificate(&cm, &DMatrix::identity(s, s)).unwrap();
        assert!(cert.residual <= 1e-10, "residual {}", cert.residual);
        assert!(cert.p_min() > 0.0);
        checked += 1;
    }
}
