//! Payoff-gradient models, Nash equilibrium solving and regularity constants.
//!
//! Every player maximises its own payoff `f_i` over its action block `x_i`.
//! A [`GameModel`] only needs the own-action gradient `∂f_i/∂x_i`, evaluated
//! at an arbitrary vector of the full action dimension (during seeking that
//! vector is player `i`'s local estimate of everybody's action).

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("pseudo-gradient is not affine (probe residual {residual:.3e})")]
    NotAffine { residual: f64 },
    #[error("stationarity system is singular")]
    SingularSystem,
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid game definition: {0}")]
    Invalid(String),
}

/// Orientation of the gain in the seeking law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeekSign {
    /// Positive gain: gradient ascent on a concave payoff.
    Ascent,
    /// Negative gain: the payoff is convex in the own action.
    Descent,
}

impl SeekSign {
    pub fn factor(self) -> f64 {
        match self {
            SeekSign::Ascent => 1.0,
            SeekSign::Descent => -1.0,
        }
    }

    pub fn from_factor(f: f64) -> Option<Self> {
        if f == 1.0 {
            Some(SeekSign::Ascent)
        } else if f == -1.0 {
            Some(SeekSign::Descent)
        } else {
            None
        }
    }
}

/// Own-action gradient: `(player, v, out)` writes `∂f_i/∂x_i(v)` into `out`.
pub type GradientFn = dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync;
/// Payoff value `f_i(v)`.
pub type PayoffFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct GameModel {
    name: String,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    seek_sign: Vec<SeekSign>,
    gradient: Arc<GradientFn>,
    payoff: Option<Arc<PayoffFn>>,
}

impl fmt::Debug for GameModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("seek_sign", &self.seek_sign)
            .finish_non_exhaustive()
    }
}

/// Equilibrium found by [`GameModel::solve_nash`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashSolution {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Lipschitz (`alpha`) and strong-monotonicity (`beta`) constants of the
/// pseudo-gradient, the latter in the seek orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityConstants {
    pub alpha: f64,
    pub beta: f64,
    pub exact: bool,
    /// `diag{σ} M` for affine games.
    pub oriented_jacobian: Option<DMatrix<f64>>,
    /// Action dimension of each player (row blocks of the jacobian).
    pub dims: Vec<usize>,
}

impl GameModel {
    pub fn new(
        name: impl Into<String>,
        dims: Vec<usize>,
        seek_sign: Vec<SeekSign>,
        gradient: Arc<GradientFn>,
        payoff: Option<Arc<PayoffFn>>,
    ) -> Result<Self, GameError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(GameError::Invalid("every player needs a positive action dimension".into()));
        }
        if seek_sign.len() != dims.len() {
            return Err(GameError::Invalid(format!(
                "{} seek signs for {} players",
                seek_sign.len(),
                dims.len()
            )));
        }
        let offsets = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(Self {
            name: name.into(),
            dims,
            offsets,
            seek_sign,
            gradient,
            payoff,
        })
    }

    /// Electricity consumption game: `f_i = -(x_i - xq_i)² - x_i (r1 Σ x_j + r2)`.
    pub fn energy(xq: &[f64], r1: f64, r2: f64) -> Result<Self, GameError> {
        let n = xq.len();
        if n < 2 {
            return Err(GameError::Invalid("energy game needs at least two players".into()));
        }
        if xq.iter().any(|v| !v.is_finite()) || !r1.is_finite() || !r2.is_finite() {
            return Err(GameError::Invalid("energy game parameters must be finite".into()));
        }
        let xq_g: Arc<[f64]> = xq.into();
        let xq_f = xq_g.clone();
        let gradient = move |i: usize, v: &[f64], out: &mut [f64]| {
            let total: f64 = v.iter().sum();
            out[0] = -2.0 * (v[i] - xq_g[i]) - (r1 * total + r2) - r1 * v[i];
        };
        let payoff = move |i: usize, v: &[f64]| {
            let total: f64 = v.iter().sum();
            -(v[i] - xq_f[i]).powi(2) - v[i] * (r1 * total + r2)
        };
        Self::new(
            "energy",
            vec![1; n],
            vec![SeekSign::Ascent; n],
            Arc::new(gradient),
            Some(Arc::new(payoff)),
        )
    }

    /// Five-player connectivity control game with planar actions.
    ///
    /// `f_i = x_iᵀ diag{i,i} x_i + x_iᵀ (i,i)ᵀ + i + Σ_{k ∈ N_i} ‖x_i - x_k‖²`
    /// (one-based `i`) with the pairwise terms
    /// `N_1 = {2}, N_2 = {3}, N_3 = {2}, N_4 = {2, 5}, N_5 = {1}`.
    /// The payoff is convex in the own action, so every player descends.
    pub fn connectivity() -> Self {
        const PARTNERS: [&[usize]; 5] = [&[1], &[2], &[1], &[1, 4], &[0]];
        let gradient = |i: usize, v: &[f64], out: &mut [f64]| {
            let w = (i + 1) as f64;
            for c in 0..2 {
                let own = v[2 * i + c];
                let mut g = 2.0 * w * own + w;
                for &k in PARTNERS[i] {
                    g += 2.0 * (own - v[2 * k + c]);
                }
                out[c] = g;
            }
        };
        let payoff = |i: usize, v: &[f64]| {
            let w = (i + 1) as f64;
            let mut f = w;
            for c in 0..2 {
                let own = v[2 * i + c];
                f += w * own * own + w * own;
                for &k in PARTNERS[i] {
                    f += (own - v[2 * k + c]).powi(2);
                }
            }
            f
        };
        Self::new(
            "connectivity",
            vec![2; 5],
            vec![SeekSign::Descent; 5],
            Arc::new(gradient),
            Some(Arc::new(payoff)),
        )
        .expect("static definition is valid")
    }

    /// Game with affine pseudo-gradient `G(x) = M x + b`; row block `i` of
    /// `M` (and `b`) is player `i`'s own-action gradient.
    pub fn affine(
        m: DMatrix<f64>,
        b: DVector<f64>,
        dims: Vec<usize>,
        seek_sign: Vec<SeekSign>,
    ) -> Result<Self, GameError> {
        let d: usize = dims.iter().sum();
        if m.shape() != (d, d) || b.len() != d {
            return Err(GameError::Invalid(format!(
                "M must be {d}x{d} and b of length {d} for dims {dims:?}"
            )));
        }
        if m.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GameError::Invalid("M and b must be finite".into()));
        }
        let offsets: Vec<usize> = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let gdims = dims.clone();
        let gradient = move |i: usize, v: &[f64], out: &mut [f64]| {
            for (c, o) in out.iter_mut().enumerate().take(gdims[i]) {
                let r = offsets[i] + c;
                let mut acc = b[r];
                for (k, vk) in v.iter().enumerate() {
                    acc += m[(r, k)] * vk;
                }
                *o = acc;
            }
        };
        Self::new("affine", dims, seek_sign, Arc::new(gradient), None)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }

    pub fn seek_sign(&self) -> &[SeekSign] {
        &self.seek_sign
    }

    /// Seek-sign factor of each action coordinate.
    pub fn coordinate_signs(&self) -> Vec<f64> {
        (0..self.n())
            .flat_map(|i| std::iter::repeat_n(self.seek_sign[i].factor(), self.dims[i]))
            .collect()
    }

    pub fn has_payoff(&self) -> bool {
        self.payoff.is_some()
    }

    pub fn payoff(&self, i: usize, v: &[f64]) -> Option<f64> {
        self.payoff.as_ref().map(|f| f(i, v))
    }

    #[inline]
    pub fn partial_gradient_into(&self, i: usize, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.total_dim());
        debug_assert_eq!(out.len(), self.dims[i]);
        (self.gradient)(i, v, out)
    }

    pub fn partial_gradient(&self, i: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims[i]];
        self.partial_gradient_into(i, v, &mut out);
        out
    }

    /// Stacked own-action gradients at the true joint action.
    pub fn pseudo_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dim()];
        for i in 0..self.n() {
            let r = self.block(i);
            self.partial_gradient_into(i, x, &mut out[r]);
        }
        out
    }

    /// Recovers `(M, b)` with `G(x) = M x + b` from unit probes and checks
    /// the fit on independent points.
    pub fn affine_coefficients(&self) -> Result<(DMatrix<f64>, DVector<f64>), GameError> {
        let d = self.total_dim();
        let zero = vec![0.0; d];
        let b = DVector::from_vec(self.pseudo_gradient(&zero));
        let mut m = DMatrix::zeros(d, d);
        let mut probe = zero;
        for k in 0..d {
            probe[k] = 1.0;
            let g = self.pseudo_gradient(&probe);
            for r in 0..d {
                m[(r, k)] = g[r] - b[r];
            }
            probe[k] = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a551);
        let mut worst = 0.0_f64;
        for _ in 0..=d {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
            let g = DVector::from_vec(self.pseudo_gradient(&x));
            let fit = &m * DVector::from_column_slice(&x) + &b;
            let rel = (&g - fit).amax() / (1.0 + g.amax());
            worst = worst.max(rel);
        }
        if !(worst <= 1e-9) {
            return Err(GameError::NotAffine { residual: worst });
        }
        Ok((m, b))
    }

    /// Finds `x*` with `|G(x*)| ≤ tol`: one linear solve for affine games,
    /// damped Newton with a finite-difference Jacobian otherwise.
    pub fn solve_nash(&self, x0: &[f64], tol: f64, max_iter: usize) -> Result<NashSolution, GameError> {
        if !(tol > 0.0) {
            return Err(GameError::Invalid("tolerance must be positive".into()));
        }
        if x0.len() != self.total_dim() {
            return Err(GameError::Invalid(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                self.total_dim()
            )));
        }
        if let Ok((m, b)) = self.affine_coefficients() {
            let x = linalg::solve_linear(&m, &(-b)).ok_or(GameError::SingularSystem)?;
            let x_star: Vec<f64> = x.iter().copied().collect();
            let residual = norm(&self.pseudo_gradient(&x_star));
            if residual <= tol {
                return Ok(NashSolution {
                    x_star,
                    residual,
                    iterations: 1,
                });
            }
            // Ill-conditioned: polish with Newton from the linear solution.
            return self.newton(&x_star, tol, max_iter);
        }
        self.newton(x0, tol, max_iter)
    }

    fn jacobian_fd(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.total_dim();
        let mut jac = DMatrix::zeros(d, d);
        let mut probe = x.to_vec();
        for k in 0..d {
            let h = 1e-6 * x[k].abs().max(1.0);
            probe[k] = x[k] + h;
            let gp = self.pseudo_gradient(&probe);
            probe[k] = x[k] - h;
            let gm = self.pseudo_gradient(&probe);
            probe[k] = x[k];
            for r in 0..d {
                jac[(r, k)] = (gp[r] - gm[r]) / (2.0 * h);
            }
        }
        jac
    }

    fn newton(&self, x0: &[f64], tol: f64, max_iter: usize) -> Result<NashSolution, GameError> {
        let mut x = x0.to_vec();
        let mut g = self.pseudo_gradient(&x);
        let mut res = norm(&g);
        for it in 0..max_iter {
            if res <= tol {
                return Ok(NashSolution {
                    x_star: x,
                    residual: res,
                    iterations: it,
                });
            }
            let jac = self.jacobian_fd(&x);
            let step = linalg::solve_linear(&jac, &(-DVector::from_vec(g.clone())))
                .ok_or(GameError::SingularSystem)?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=30 {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + scale * s).collect();
                let gt = self.pseudo_gradient(&trial);
                let rt = norm(&gt);
                if rt < res {
                    x = trial;
                    g = gt;
                    res = rt;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(GameError::NoConvergence {
                    iterations: it + 1,
                    residual: res,
                });
            }
        }
        if res <= tol {
            return Ok(NashSolution {
                x_star: x,
                residual: res,
                iterations: max_iter,
            });
        }
        Err(GameError::NoConvergence {
            iterations: max_iter,
            residual: res,
        })
    }

    /// Exact constants for affine games; for other games falls back to
    /// [`GameModel::sampled_regularity_constants`] over `[-10, 10]^D`.
    pub fn regularity_constants(&self) -> RegularityConstants {
        match self.affine_coefficients() {
            Ok((m, _)) => self.constants_from_jacobian(&m, true),
            Err(_) => self.sampled_regularity_constants(-10.0, 10.0, 64, 7),
        }
    }

    fn constants_from_jacobian(&self, m: &DMatrix<f64>, exact: bool) -> RegularityConstants {
        let alpha = (0..self.n())
            .map(|i| {
                let r = self.block(i);
                linalg::spectral_norm(&m.rows(r.start, r.len()).into_owned())
            })
            .fold(0.0_f64, f64::max);
        let oriented = oriented(m, &self.coordinate_signs());
        let beta = linalg::lambda_min_sym(&(-&oriented)).max(0.0);
        RegularityConstants {
            alpha,
            beta,
            exact,
            oriented_jacobian: exact.then_some(oriented),
            dims: self.dims.clone(),
        }
    }

    /// Sampled estimates from finite-difference Jacobians on a box: largest
    /// observed `alpha`, smallest observed `beta`.
    pub fn sampled_regularity_constants(&self, low: f64, high: f64, samples: usize, seed: u64) -> RegularityConstants {
        let d = self.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alpha = 0.0_f64;
        let mut beta = f64::INFINITY;
        for _ in 0..samples.max(1) {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(low..high)).collect();
            let c = self.constants_from_jacobian(&self.jacobian_fd(&x), false);
            alpha = alpha.max(c.alpha);
            beta = beta.min(c.beta);
        }
        RegularityConstants {
            alpha,
            beta,
            exact: false,
            oriented_jacobian: None,
            dims: self.dims.clone(),
        }
    }
}

fn oriented(m: &DMatrix<f64>, signs: &[f64]) -> DMatrix<f64> {
    let mut o = m.clone();
    for (r, s) in signs.iter().enumerate() {
        o.row_mut(r).scale_mut(*s);
    }
    o
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
