//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use intermittent_nash::GameModel;

/// Reachability by repeated boolean squaring of `I + A`.
pub fn closure_strongly_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(f, t) in edges {
        r[f][t] = true;
    }
    let mut steps = 1;
    while steps < n {
        let mut next = r.clone();
        for i in 0..n {
            for j in 0..n {
                if !next[i][j] {
                    next[i][j] = (0..n).any(|k| r[i][k] && r[k][j]);
                }
            }
        }
        r = next;
        steps *= 2;
    }
    r.iter().all(|row| row.iter().all(|&b| b))
}

/// Largest relative gap between the analytic partial gradients and central
/// differences of the payoffs at `v`, scaled by `max(1, |g|)`.
pub fn fd_gradient_gap(game: &GameModel, v: &[f64]) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    let mut probe = v.to_vec();
    for i in 0..game.n() {
        let g = game.partial_gradient(i, v);
        for (k, idx) in game.block(i).enumerate() {
            probe[idx] = v[idx] + h;
            let up = game.payoff(i, &probe).expect("payoff");
            probe[idx] = v[idx] - h;
            let down = game.payoff(i, &probe).expect("payoff");
            probe[idx] = v[idx];
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / g[k].abs().max(1.0));
        }
    }
    worst
}

/// Euclidean distance.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Observed order from three solutions at step `h, h/2, h/4`.
pub fn observed_order(coarse: &[f64], mid: &[f64], fine: &[f64]) -> f64 {
    (dist(coarse, mid) / dist(mid, fine)).log2()
}
