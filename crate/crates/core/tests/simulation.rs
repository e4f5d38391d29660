mod common;

use intermittent_nash::analysis::{lyapunov_trace, xi_squared};
use intermittent_nash::dynamics::{error_traces, simulate, SimConfig};
use intermittent_nash::experiment::{self, certify, ExperimentConfig};
use intermittent_nash::fixtures::{self, ENERGY_X0};
use intermittent_nash::GameModel;

fn energy_pic(eps: f64, dt: f64, t_end: f64) -> Vec<f64> {
    let game = fixtures::energy_game();
    let cfg = SimConfig::new(eps, dt, t_end, ENERGY_X0.to_vec(), 5);
    let traj = simulate(&game, &fixtures::ring_graph(), &fixtures::pic_schedule(100.0), &cfg).unwrap();
    let mut state = traj.x_final().to_vec();
    state.extend_from_slice(traj.y_final());
    state
}

#[test]
fn rk4_observed_order() {
    let a = energy_pic(0.011, 0.5, 100.0);
    let b = energy_pic(0.011, 0.25, 100.0);
    let c = energy_pic(0.011, 0.125, 100.0);
    let order = common::observed_order(&a, &b, &c);
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn runs_are_deterministic() {
    for name in fixtures::RUN_FIXTURES {
        let cfg = ExperimentConfig::fixture(name).unwrap();
        let a = experiment::run(&cfg, None).unwrap();
        let b = experiment::run(&cfg, None).unwrap();
        assert_eq!(a.trajectory, b.trajectory, "{name}");
        assert_eq!(
            experiment::trajectory_csv(&a.trajectory, a.lyapunov.as_deref()),
            experiment::trajectory_csv(&b.trajectory, b.lyapunov.as_deref())
        );
    }
}

#[test]
fn seed_changes_random_initialisation() {
    let cfg = ExperimentConfig::fixture("connectivity_acr.json").unwrap();
    let a = experiment::run(&cfg, Some(1)).unwrap();
    let b = experiment::run(&cfg, Some(2)).unwrap();
    assert_ne!(a.trajectory.x(0), b.trajectory.x(0));
    assert_eq!(a.summary.seed, Some(1));
    for v in a.trajectory.x(0).iter().chain(a.trajectory.y(0)) {
        assert!((-15.0..15.0).contains(v));
    }
}

#[test]
fn equilibrium_is_stationary() {
    for (game, eps) in [(fixtures::energy_game(), 0.011), (GameModel::connectivity(), 0.005)] {
        let x_star = game.solve_nash(&vec![0.0; game.total_dim()], 1e-12, 100).unwrap().x_star;
        let mut cfg = SimConfig::new(eps, 0.01, 95.0, x_star.clone(), game.n());
        cfg.y0 = x_star.iter().copied().cycle().take(game.n() * game.total_dim()).collect();
        let traj = simulate(&game, &fixtures::ring_graph(), &fixtures::acr_schedule(), &cfg).unwrap();
        for k in 0..traj.len() {
            assert!(common::dist(traj.x(k), &x_star) <= 1e-9);
            assert!(common::dist(traj.y(k), &cfg.y0) <= 1e-9);
        }
    }
}

#[test]
fn silent_spans_freeze_estimates_bitwise() {
    for name in fixtures::RUN_FIXTURES {
        let out = experiment::run(&ExperimentConfig::fixture(name).unwrap(), None).unwrap();
        let traj = &out.trajectory;
        let runs = traj.silent_runs();
        assert!(!runs.is_empty(), "{name} has silent spans");
        for (first, last) in runs {
            for k in first..=last {
                assert_eq!(traj.y(k), traj.y(first), "{name} at t = {}", traj.times[k]);
            }
        }
    }
}

#[test]
fn initial_estimate_error_norm() {
    let game = fixtures::energy_game();
    let cfg = SimConfig::new(0.011, 0.01, 1.0, ENERGY_X0.to_vec(), 5);
    let traj = simulate(&game, &fixtures::ring_graph(), &fixtures::pic_schedule(1.0), &cfg).unwrap();
    let x_star = game.solve_nash(&[0.0; 5], 1e-12, 10).unwrap().x_star;
    let tr = error_traces(&traj, &x_star).unwrap();
    let x0_norm = ENERGY_X0.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((tr.ex_norms[0] - 5f64.sqrt() * x0_norm).abs() < 1e-12);
}

/// ε = 0.9 ε* on the energy fixture: strict decrease while communicating,
/// growth bounded by `exp(μ₂ (t - s_m))` while silent, and the sandwich
/// `η₁|Ξ|² ≤ V ≤ η₂|Ξ|²` throughout.
#[test]
fn lyapunov_decrease_and_growth_bound() {
    let cfg = ExperimentConfig::fixture("energy.json").unwrap();
    let game = cfg.build_game().unwrap();
    let graph = cfg.build_graph().unwrap();
    let c = certify(&cfg, &game, &graph, &[1.0; 5]).unwrap();
    let eps = 0.9 * c.constants.eps_star;
    assert_eq!(c.constants.epsilon, eps);
    let out = experiment::run(&cfg, None).unwrap();
    assert_eq!(out.summary.epsilon, eps);
    let traj = &out.trajectory;
    let v = lyapunov_trace(traj, &out.summary.x_star, &c.certificate).unwrap();
    assert_eq!(out.lyapunov.as_deref(), Some(&v[..]));

    // V(0) by direct evaluation.
    let x0 = ENERGY_X0;
    let e0: f64 = x0.iter().zip(&out.summary.x_star).map(|(a, b)| (a - b).powi(2)).sum();
    let lifted: Vec<f64> = (0..25).map(|r| -x0[r % 5]).collect();
    assert!((v[0] - (0.5 * e0 + c.certificate.quadratic_form(&lifted))).abs() < 1e-9 * v[0]);

    for (first, last) in traj.comm_runs() {
        for k in first..last {
            assert!(v[k + 1] < v[k], "V rose at t = {}", traj.times[k]);
        }
    }
    let mu2 = c.constants.mu2;
    for (first, last) in traj.silent_runs() {
        let s_m = traj.times[first];
        for k in first..=last {
            let bound = v[first] * (mu2 * (traj.times[k] - s_m)).exp() * (1.0 + 1e-6);
            assert!(v[k] <= bound, "growth bound violated at t = {}", traj.times[k]);
        }
    }
    let xi = xi_squared(traj, &out.summary.x_star).unwrap();
    for (vk, xk) in v.iter().zip(&xi) {
        assert!(c.constants.eta1 * xk <= vk * (1.0 + 1e-12));
        assert!(*vk <= c.constants.eta2 * xk * (1.0 + 1e-12));
    }
}

#[test]
fn fitted_rate_is_reported_for_every_fixture() {
    for name in fixtures::RUN_FIXTURES {
        let out = experiment::run(&ExperimentConfig::fixture(name).unwrap(), None).unwrap();
        let rate = out.summary.fitted_rate.expect("rate fit enabled by default");
        assert!(rate.is_finite() && rate > 0.0, "{name}: {rate}");
        // The fixture ε is above ε*, so no theorem bound applies to it.
        assert!(out.summary.theoretical_rate_bound.is_none());
        assert!(out.summary.conditions.as_ref().unwrap().notes.iter().any(|n| n.contains("eps*")));
    }
}
