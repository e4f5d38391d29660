//! Coupled action/estimate dynamics and their boundary-aligned integration.
//!
//! Actions follow `ẋ_i = σ_i ε k̄_i ∂f_i/∂x_i(y_i)`. Estimates follow the
//! consensus law `ẏ = -H y + B (1_n ⊗ x)` while communicating and are frozen
//! (`ẏ = 0`) during silent time.

use thiserror::Error;

use crate::game::GameModel;
use crate::graph::DirectedGraph;
use crate::schedule::Schedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("step dt = {dt} exceeds the narrowest communication window ({min_width})")]
    StepTooLarge { dt: f64, min_width: f64 },
    #[error("schedule horizon {horizon} is shorter than t_end = {t_end}")]
    HorizonTooShort { horizon: f64, t_end: f64 },
    #[error("non-finite state encountered at t = {time}")]
    NonFiniteState { time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Gain scale `ε`.
    pub epsilon: f64,
    /// Per-player gains `k̄_i`.
    pub kbar: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    /// Stacked estimates, row-major over (player, coordinate).
    pub y0: Vec<f64>,
}

impl SimConfig {
    /// Zero initial estimates and unit gains.
    pub fn new(epsilon: f64, dt: f64, t_end: f64, x0: Vec<f64>, n: usize) -> Self {
        let y0 = vec![0.0; n * x0.len()];
        Self {
            epsilon,
            kbar: vec![1.0; n],
            dt,
            t_end,
            x0,
            y0,
        }
    }
}

/// Right-hand side of the seeking system with gains folded in.
#[derive(Debug, Clone)]
pub struct SeekingSystem<'a> {
    game: &'a GameModel,
    graph: &'a DirectedGraph,
    /// `σ_i ε k̄_i` per player.
    gains: Vec<f64>,
    /// Player owning each action coordinate.
    owner: Vec<usize>,
}

impl<'a> SeekingSystem<'a> {
    pub fn new(
        game: &'a GameModel,
        graph: &'a DirectedGraph,
        epsilon: f64,
        kbar: &[f64],
    ) -> Result<Self, DynamicsError> {
        let n = game.n();
        if graph.n() != n {
            return Err(DynamicsError::DimensionMismatch {
                what: "graph players",
                expected: n,
                got: graph.n(),
            });
        }
        if kbar.len() != n {
            return Err(DynamicsError::DimensionMismatch {
                what: "kbar",
                expected: n,
                got: kbar.len(),
            });
        }
        let gains = kbar
            .iter()
            .zip(game.seek_sign())
            .map(|(k, s)| s.factor() * epsilon * k)
            .collect();
        let owner = (0..n)
            .flat_map(|i| std::iter::repeat_n(i, game.dims()[i]))
            .collect();
        Ok(Self {
            game,
            graph,
            gains,
            owner,
        })
    }

    pub fn state_dims(&self) -> (usize, usize) {
        let d = self.game.total_dim();
        (d, self.game.n() * d)
    }

    /// Writes `(ẋ, ẏ)` into `dx`, `dy`.
    pub fn eval(&self, communicating: bool, x: &[f64], y: &[f64], dx: &mut [f64], dy: &mut [f64]) {
        let n = self.game.n();
        let d = self.game.total_dim();
        for i in 0..n {
            let r = self.game.block(i);
            let out = &mut dx[r];
            self.game.partial_gradient_into(i, &y[i * d..(i + 1) * d], out);
            for v in out.iter_mut() {
                *v *= self.gains[i];
            }
        }
        if !communicating {
            dy.fill(0.0);
            return;
        }
        for i in 0..n {
            for q in 0..d {
                let yiq = y[i * d + q];
                let mut acc = 0.0;
                for k in 0..n {
                    let a = self.graph.weight(i, k);
                    if a != 0.0 {
                        acc += a * (yiq - y[k * d + q]);
                    }
                }
                let a = self.graph.weight(i, self.owner[q]);
                if a != 0.0 {
                    acc += a * (yiq - x[q]);
                }
                dy[i * d + q] = -acc;
            }
        }
    }
}

/// Allocating convenience wrapper around [`SeekingSystem::eval`].
pub fn derivative(
    game: &GameModel,
    graph: &DirectedGraph,
    epsilon: f64,
    kbar: &[f64],
    communicating: bool,
    x: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DynamicsError> {
    let sys = SeekingSystem::new(game, graph, epsilon, kbar)?;
    let (d, s) = sys.state_dims();
    check_len("x", d, x.len())?;
    check_len("y", s, y.len())?;
    let mut dx = vec![0.0; d];
    let mut dy = vec![0.0; s];
    sys.eval(communicating, x, y, &mut dx, &mut dy);
    Ok((dx, dy))
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), DynamicsError> {
    if expected != got {
        return Err(DynamicsError::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// Sampled solution. Sample `k` holds the state at `times[k]`; `comm[k]` is
/// the mode of the step leaving that sample (the last sample repeats the
/// mode of the final step).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub comm: Vec<bool>,
    x: Vec<f64>,
    y: Vec<f64>,
    dim: usize,
    stack: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.dim
    }

    pub fn stack_len(&self) -> usize {
        self.stack
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn y(&self, k: usize) -> &[f64] {
        &self.y[k * self.stack..(k + 1) * self.stack]
    }

    pub fn x_final(&self) -> &[f64] {
        self.x(self.len() - 1)
    }

    pub fn y_final(&self) -> &[f64] {
        self.y(self.len() - 1)
    }

    pub fn x_samples(&self) -> &[f64] {
        &self.x
    }

    pub fn y_samples(&self) -> &[f64] {
        &self.y
    }

    /// Index ranges `[first, last]` of maximal runs of silent steps; the
    /// range includes the sample closing the run.
    pub fn silent_runs(&self) -> Vec<(usize, usize)> {
        self.runs(false)
    }

    /// Same as [`Trajectory::silent_runs`] for communicating steps.
    pub fn comm_runs(&self) -> Vec<(usize, usize)> {
        self.runs(true)
    }

    fn runs(&self, flag: bool) -> Vec<(usize, usize)> {
        let steps = self.len().saturating_sub(1);
        let mut out = Vec::new();
        let mut k = 0;
        while k < steps {
            if self.comm[k] == flag {
                let start = k;
                while k < steps && self.comm[k] == flag {
                    k += 1;
                }
                out.push((start, k));
            } else {
                k += 1;
            }
        }
        out
    }
}

/// Time grid: every schedule boundary in `(0, t_end]` appears exactly once,
/// with steps of `dt` in between (the last step of a segment may be shorter).
pub fn time_grid(schedule: &Schedule, dt: f64, t_end: f64) -> Vec<f64> {
    let mut bounds: Vec<f64> = schedule
        .breakpoints()
        .into_iter()
        .filter(|&b| b > 0.0 && b < t_end)
        .collect();
    bounds.push(t_end);
    let mut grid = vec![0.0];
    let mut a = 0.0;
    for b in bounds {
        let snap = 1e-6 * dt;
        let mut k = 1u64;
        loop {
            let t = a + k as f64 * dt;
            if t >= b - snap {
                break;
            }
            grid.push(t);
            k += 1;
        }
        grid.push(b);
        a = b;
    }
    grid
}

fn validate(
    game: &GameModel,
    graph: &DirectedGraph,
    schedule: &Schedule,
    cfg: &SimConfig,
) -> Result<(), DynamicsError> {
    let d = game.total_dim();
    check_len("x0", d, cfg.x0.len())?;
    check_len("y0", game.n() * d, cfg.y0.len())?;
    check_len("kbar", game.n(), cfg.kbar.len())?;
    check_len("graph players", game.n(), graph.n())?;
    if !(cfg.epsilon > 0.0) || !cfg.epsilon.is_finite() {
        return Err(DynamicsError::InvalidConfig(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if cfg.kbar.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(DynamicsError::InvalidConfig("every kbar must be positive".into()));
    }
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
        return Err(DynamicsError::InvalidConfig(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.t_end > 0.0) || !cfg.t_end.is_finite() {
        return Err(DynamicsError::InvalidConfig(format!("t_end must be positive, got {}", cfg.t_end)));
    }
    if cfg.x0.iter().chain(&cfg.y0).any(|v| !v.is_finite()) {
        return Err(DynamicsError::InvalidConfig("initial state must be finite".into()));
    }
    if schedule.horizon() < cfg.t_end {
        return Err(DynamicsError::HorizonTooShort {
            horizon: schedule.horizon(),
            t_end: cfg.t_end,
        });
    }
    if let Some(min_width) = schedule.min_width() {
        if cfg.dt > min_width {
            return Err(DynamicsError::StepTooLarge { dt: cfg.dt, min_width });
        }
    }
    Ok(())
}

/// Classic RK4 with steps clamped to schedule boundaries, so the
/// communication mode is constant within every step.
pub fn simulate(
    game: &GameModel,
    graph: &DirectedGraph,
    schedule: &Schedule,
    cfg: &SimConfig,
) -> Result<Trajectory, DynamicsError> {
    validate(game, graph, schedule, cfg)?;
    let sys = SeekingSystem::new(game, graph, cfg.epsilon, &cfg.kbar)?;
    let (d, s) = sys.state_dims();
    let mut warnings = Vec::new();
    if !graph.is_strongly_connected() {
        warnings.push("communication graph is not strongly connected".to_string());
    }

    let times = time_grid(schedule, cfg.dt, cfg.t_end);
    let steps = times.len() - 1;
    let mut comm = Vec::with_capacity(times.len());
    let mut xs = Vec::with_capacity(times.len() * d);
    let mut ys = Vec::with_capacity(times.len() * s);

    let mut x = cfg.x0.clone();
    let mut y = cfg.y0.clone();
    xs.extend_from_slice(&x);
    ys.extend_from_slice(&y);

    let mut kx = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut ky = [vec![0.0; s], vec![0.0; s], vec![0.0; s], vec![0.0; s]];
    let mut xt = vec![0.0; d];
    let mut yt = vec![0.0; s];

    for k in 0..steps {
        let (t0, t1) = (times[k], times[k + 1]);
        let h = t1 - t0;
        let on = schedule
            .is_communicating(t0)
            .expect("grid lies inside the horizon");
        comm.push(on);

        sys.eval(on, &x, &y, &mut kx[0], &mut ky[0]);
        for (stage, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for q in 0..d {
                xt[q] = x[q] + c * h * kx[stage - 1][q];
            }
            if on {
                for q in 0..s {
                    yt[q] = y[q] + c * h * ky[stage - 1][q];
                }
            } else {
                yt.copy_from_slice(&y);
            }
            let (kxs, kys) = (&mut kx[stage], &mut ky[stage]);
            sys.eval(on, &xt, &yt, kxs, kys);
        }
        for q in 0..d {
            x[q] += h / 6.0 * (kx[0][q] + 2.0 * kx[1][q] + 2.0 * kx[2][q] + kx[3][q]);
        }
        if on {
            for q in 0..s {
                y[q] += h / 6.0 * (ky[0][q] + 2.0 * ky[1][q] + 2.0 * ky[2][q] + ky[3][q]);
            }
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteState { time: t1 });
        }
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
    }
    comm.push(comm.last().copied().unwrap_or(false));

    Ok(Trajectory {
        times,
        comm,
        x: xs,
        y: ys,
        dim: d,
        stack: s,
        warnings,
    })
}

/// Per-sample `|x - x*|` and `‖y - 1_n ⊗ x‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTraces {
    pub e_norms: Vec<f64>,
    pub ex_norms: Vec<f64>,
}

pub fn error_traces(traj: &Trajectory, x_star: &[f64]) -> Result<ErrorTraces, DynamicsError> {
    check_len("x_star", traj.action_dim(), x_star.len())?;
    let d = traj.action_dim();
    let mut e_norms = Vec::with_capacity(traj.len());
    let mut ex_norms = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let x = traj.x(k);
        let y = traj.y(k);
        e_norms.push(x.iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        ex_norms.push(
            y.iter()
                .enumerate()
                .map(|(r, v)| (v - x[r % d]).powi(2))
                .sum::<f64>()
                .sqrt(),
        );
    }
    Ok(ErrorTraces { e_norms, ex_norms })
}
