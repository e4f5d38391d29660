//! Convergence-condition arithmetic and Lyapunov diagnostics.
//!
//! The quadratic `V̄(e) = ½|e|²` is used for the action-error part of the
//! Lyapunov function, which fixes `γ₁ = γ₂ = ½` and `γ₄ = 1`; `γ₃` is the
//! smallest eigenvalue of the symmetric part of `-diag{k̄} σ M` for affine
//! games. `V = ½|e|² + e_xᵀ P e_x` with `P` from the graph certificate.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{error_traces, DynamicsError, Trajectory};
use crate::game::RegularityConstants;
use crate::graph::LyapunovCertificate;
use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("pseudo-gradient is not strongly monotone in the seek orientation (gamma3 = {gamma3:.3e})")]
    NonPositiveBeta { gamma3: f64 },
    #[error("epsilon = {epsilon:.6e} is not below eps* = {eps_star:.6e}")]
    EpsilonTooLarge { epsilon: f64, eps_star: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("series must be positive on the fit window")]
    NonPositiveValues,
    #[error("fewer than two samples in the fit window")]
    InsufficientSamples,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Which expression defines the silent-time growth rate `μ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mu2Variant {
    /// `λ_max(Γ₂) / η₁`, the rate implied by the silent-time bound.
    #[default]
    GrowthBound,
    /// `λ_min(Γ₁) / η₁` as literally printed in the growth step.
    AsPrinted,
}

/// Constants feeding the convergence conditions, at a fixed `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremConstants {
    pub n_players: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    /// Domain radius of `V̄`; unused with the global quadratic choice.
    pub gamma5: f64,
    pub gamma3_exact: bool,
    pub kbar_max: f64,
    pub p_norm: f64,
    pub p_min: f64,
    pub q_min: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub eps1_star: f64,
    pub eps2_star: f64,
    pub eps_star: f64,
    pub epsilon: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// `μ₂` under the other variant, for comparison.
    pub mu2_alternate: f64,
    pub mu2_variant: Mu2Variant,
}

pub type Mat2 = [[f64; 2]; 2];

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn sym2_eigenvalues(m: Mat2) -> (f64, f64) {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - rad, mean + rad)
}

impl TheoremConstants {
    pub fn gamma1_matrix(&self, epsilon: f64) -> Mat2 {
        [
            [epsilon * self.gamma3, -epsilon * self.pi1],
            [-epsilon * self.pi1, self.q_min - epsilon * self.pi2],
        ]
    }

    pub fn gamma2_matrix(&self, epsilon: f64) -> Mat2 {
        [
            [epsilon.sqrt() * self.gamma3, epsilon * self.pi1],
            [epsilon * self.pi1, epsilon * self.pi2],
        ]
    }

    /// Re-evaluates the `ε`-dependent part without the `ε < ε*` check.
    pub fn at_epsilon(&self, epsilon: f64) -> Self {
        let mut c = self.clone();
        c.epsilon = epsilon;
        let (g1_min, _) = sym2_eigenvalues(self.gamma1_matrix(epsilon));
        let (_, g2_max) = sym2_eigenvalues(self.gamma2_matrix(epsilon));
        c.mu1 = g1_min / self.eta2;
        let growth = g2_max / self.eta1;
        let printed = g1_min / self.eta1;
        (c.mu2, c.mu2_alternate) = match self.mu2_variant {
            Mu2Variant::GrowthBound => (growth, printed),
            Mu2Variant::AsPrinted => (printed, growth),
        };
        c
    }

    pub fn with_mu2_variant(&self, variant: Mu2Variant) -> Self {
        let mut c = self.clone();
        c.mu2_variant = variant;
        c.at_epsilon(self.epsilon)
    }

    /// `μ₂ / (μ₁ + μ₂)`: the ratio threshold shared by all four conditions.
    pub fn ratio_threshold(&self) -> f64 {
        self.mu2 / (self.mu1 + self.mu2)
    }
}

/// Builds the constants block at `epsilon`; fails when `ε ≥ ε*`.
pub fn build_constants(
    reg: &RegularityConstants,
    kbar: &[f64],
    cert: &LyapunovCertificate,
    epsilon: f64,
) -> Result<TheoremConstants, AnalysisError> {
    let c = build_constants_unchecked(reg, kbar, cert, epsilon)?;
    if !(epsilon < c.eps_star) {
        return Err(AnalysisError::EpsilonTooLarge {
            epsilon,
            eps_star: c.eps_star,
        });
    }
    Ok(c)
}

/// Same as [`build_constants`] but accepts any positive `ε`.
pub fn build_constants_unchecked(
    reg: &RegularityConstants,
    kbar: &[f64],
    cert: &LyapunovCertificate,
    epsilon: f64,
) -> Result<TheoremConstants, AnalysisError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(AnalysisError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = kbar.len();
    if n == 0 || kbar.iter().any(|k| !(*k > 0.0)) {
        return Err(AnalysisError::InvalidInput("kbar must be non-empty and positive".into()));
    }
    let kbar_max = kbar.iter().copied().fold(0.0_f64, f64::max);
    let kbar_min = kbar.iter().copied().fold(f64::INFINITY, f64::min);
    let (gamma3, gamma3_exact) = match &reg.oriented_jacobian {
        Some(m) => {
            if reg.dims.len() != n || m.nrows() != reg.dims.iter().sum::<usize>() {
                return Err(AnalysisError::InvalidInput("jacobian does not match kbar".into()));
            }
            (gamma3_for_blocks(m, kbar, &reg.dims), true)
        }
        None => (kbar_min * reg.beta, false),
    };
    if !(gamma3 > 0.0) || !(reg.beta > 0.0) {
        return Err(AnalysisError::NonPositiveBeta { gamma3 });
    }
    let (gamma1, gamma2, gamma4) = (0.5, 0.5, 1.0);
    let p_norm = cert.p_norm();
    let p_min = cert.p_min();
    let q_min = cert.q_min();
    let nf = n as f64;
    let pi1 = reg.alpha * kbar_max * (gamma4 / 2.0 + nf * p_norm);
    let pi2 = 2.0 * reg.alpha * nf.sqrt() * p_norm * kbar_max;
    let eps1_star = gamma3 * q_min / (gamma3 * pi2 + pi1 * pi1);
    let eps2_star = gamma3 * gamma3 * pi2 * pi2 / pi1.powi(4);
    let eps_star = eps1_star.min(eps2_star);
    let base = TheoremConstants {
        n_players: n,
        alpha: reg.alpha,
        beta: reg.beta,
        gamma1,
        gamma2,
        gamma3,
        gamma4,
        gamma5: f64::INFINITY,
        gamma3_exact,
        kbar_max,
        p_norm,
        p_min,
        q_min,
        pi1,
        pi2,
        eps1_star,
        eps2_star,
        eps_star,
        epsilon,
        eta1: gamma1.min(p_min),
        eta2: gamma2.max(p_norm),
        mu1: 0.0,
        mu2: 0.0,
        mu2_alternate: 0.0,
        mu2_variant: Mu2Variant::GrowthBound,
    };
    Ok(base.at_epsilon(epsilon))
}

/// `λ_min(sym(-diag{k̄} σM))` for explicit per-player block sizes.
pub fn gamma3_for_blocks(oriented: &DMatrix<f64>, kbar: &[f64], dims: &[usize]) -> f64 {
    let mut scaled = -oriented.clone();
    let mut r = 0;
    for (k, d) in kbar.iter().zip(dims) {
        for _ in 0..*d {
            scaled.row_mut(r).scale_mut(*k);
            r += 1;
        }
    }
    linalg::lambda_min_sym(&scaled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "PIC")]
    Pic,
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "MinRatio")]
    MinRatio,
    #[serde(rename = "ACR")]
    Acr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub regime: Regime,
    pub satisfied: bool,
    pub margin: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub eps_star: f64,
    pub inputs: serde_json::Value,
}

fn report(c: &TheoremConstants, regime: Regime, margin: f64, inputs: serde_json::Value) -> ConditionReport {
    ConditionReport {
        regime,
        satisfied: margin > 0.0,
        margin,
        mu1: c.mu1,
        mu2: c.mu2,
        eps_star: c.eps_star,
        inputs,
    }
}

fn unit_ratio(name: &str, v: f64) -> Result<(), AnalysisError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::InvalidInput(format!("{name} = {v} must lie in (0, 1)")))
    }
}

/// Periodic communication: `μ₁θ̃ - μ₂(1 - θ̃) > 0`.
pub fn check_pic(c: &TheoremConstants, theta_tilde: f64) -> Result<ConditionReport, AnalysisError> {
    unit_ratio("theta_tilde", theta_tilde)?;
    let margin = c.mu1 * theta_tilde - c.mu2 * (1.0 - theta_tilde);
    Ok(report(c, Regime::Pic, margin, serde_json::json!({ "theta_tilde": theta_tilde })))
}

/// Quasi-periodic communication: `ρ = μ₁θ̄ - μ₂(T̄ - θ̄) > 0`.
pub fn check_aic(c: &TheoremConstants, theta_bar: f64, t_bar: f64) -> Result<ConditionReport, AnalysisError> {
    if !(theta_bar > 0.0 && theta_bar < t_bar && t_bar.is_finite()) {
        return Err(AnalysisError::InvalidInput(format!(
            "need 0 < theta_bar < T_bar, got theta_bar = {theta_bar}, T_bar = {t_bar}"
        )));
    }
    let margin = c.mu1 * theta_bar - c.mu2 * (t_bar - theta_bar);
    Ok(report(
        c,
        Regime::Aic,
        margin,
        serde_json::json!({ "theta_bar": theta_bar, "T_bar": t_bar }),
    ))
}

/// Minimum communication ratio: `μ₁(1 - ζ̄) - μ₂ζ̄ > 0` with `ζ̄` the silent ratio.
pub fn check_min_ratio(c: &TheoremConstants, zeta_bar: f64) -> Result<ConditionReport, AnalysisError> {
    unit_ratio("zeta_bar", zeta_bar)?;
    let margin = c.mu1 * (1.0 - zeta_bar) - c.mu2 * zeta_bar;
    Ok(report(c, Regime::MinRatio, margin, serde_json::json!({ "zeta_bar": zeta_bar })))
}

/// Average communication ratio: `ϑ > μ₂/(μ₁ + μ₂)`; the margin is the
/// decay exponent `μ₁ϑ - μ₂(1 - ϑ)`.
pub fn check_acr_condition(c: &TheoremConstants, vartheta: f64) -> Result<ConditionReport, AnalysisError> {
    unit_ratio("vartheta", vartheta)?;
    let margin = c.mu1 * vartheta - c.mu2 * (1.0 - vartheta);
    let mut r = report(c, Regime::Acr, margin, serde_json::json!({ "vartheta": vartheta }));
    r.satisfied = vartheta * (c.mu1 + c.mu2) - c.mu2 > 0.0;
    Ok(r)
}

/// `V(t) = ½|e|² + e_xᵀ P e_x` per sample.
pub fn lyapunov_trace(
    traj: &Trajectory,
    x_star: &[f64],
    cert: &LyapunovCertificate,
) -> Result<Vec<f64>, AnalysisError> {
    if cert.p_matrix.nrows() != traj.stack_len() {
        return Err(DynamicsError::DimensionMismatch {
            what: "certificate",
            expected: traj.stack_len(),
            got: cert.p_matrix.nrows(),
        }
        .into());
    }
    if x_star.len() != traj.action_dim() {
        return Err(DynamicsError::DimensionMismatch {
            what: "x_star",
            expected: traj.action_dim(),
            got: x_star.len(),
        }
        .into());
    }
    let d = traj.action_dim();
    let mut ex = vec![0.0; traj.stack_len()];
    Ok((0..traj.len())
        .map(|k| {
            let x = traj.x(k);
            let e2: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum();
            for (r, v) in traj.y(k).iter().enumerate() {
                ex[r] = v - x[r % d];
            }
            0.5 * e2 + cert.quadratic_form(&ex)
        })
        .collect())
}

/// `|Ξ(t)|² = |e|² + ‖e_x‖²` per sample.
pub fn xi_squared(traj: &Trajectory, x_star: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let tr = error_traces(traj, x_star)?;
    Ok(tr
        .e_norms
        .iter()
        .zip(&tr.ex_norms)
        .map(|(a, b)| a * a + b * b)
        .collect())
}

/// Negated least-squares slope of `ln V` over `window = (t_a, t_b)`.
/// Samples below `1e-14 V(0)` are dropped.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64, AnalysisError> {
    if times.len() != values.len() || times.is_empty() {
        return Err(AnalysisError::InvalidInput("times and values must have equal non-zero length".into()));
    }
    let floor = 1e-14 * values[0];
    let mut pts = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(AnalysisError::NonPositiveValues);
        }
        if v < floor {
            continue;
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 2 {
        return Err(AnalysisError::InsufficientSamples);
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let lm = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - lm)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientSamples);
    }
    Ok(-(sxy / sxx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameModel, SeekSign};
    use crate::graph::{coupling_matrices, solve_lyapunov_certificate, DirectedGraph, Edge};
    use nalgebra::{DMatrix, DVector};

    /// Two players, single edge 1→2 plus 2→1, decoupled quadratic game.
    fn toy() -> (RegularityConstants, LyapunovCertificate) {
        let g = DirectedGraph::from_edges(2, &[Edge::new(0, 1, 1.0), Edge::new(1, 0, 1.0)]).unwrap();
        let cm = coupling_matrices(&g);
        let cert = solve_lyapunov_certificate(&cm, &DMatrix::identity(4, 4)).unwrap();
        let game = GameModel::affine(
            DMatrix::from_diagonal_element(2, 2, -2.0),
            DVector::from_vec(vec![1.0, -1.0]),
            vec![1, 1],
            vec![SeekSign::Ascent; 2],
        )
        .unwrap();
        (game.regularity_constants(), cert)
    }

    #[test]
    fn toy_constants_by_hand() {
        let (reg, cert) = toy();
        let c = build_constants(&reg, &[1.0, 1.0], &cert, 1e-4).unwrap();
        // H = L⊗I + B for the 2-cycle: H = [[2,0,-1,0],[0,1,0,-1],[-1,0,1,0],[0,-1,0,2]].
        // Oracle: P from the Kronecker system and its largest eigenvalue.
        let h = coupling_matrices(
            &DirectedGraph::from_edges(2, &[Edge::new(0, 1, 1.0), Edge::new(1, 0, 1.0)]).unwrap(),
        )
        .coupling;
        let ht = h.transpose();
        let i4 = DMatrix::<f64>::identity(4, 4);
        let sys = linalg::kron(&i4, &ht) + linalg::kron(&ht, &i4);
        let vp = sys.lu().solve(&DVector::from_column_slice(i4.as_slice())).unwrap();
        let p = DMatrix::from_column_slice(4, 4, vp.as_slice());
        let p_norm = nalgebra::SymmetricEigen::new(p.clone()).eigenvalues.max();
        assert!((c.p_norm - p_norm).abs() < 1e-12);
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.gamma3, 2.0);
        let pi1 = 2.0 * (0.5 + 2.0 * p_norm);
        let pi2 = 2.0 * 2.0 * 2f64.sqrt() * p_norm;
        assert!((c.pi1 - pi1).abs() < 1e-12);
        assert!((c.pi2 - pi2).abs() < 1e-12);
        let e1 = 2.0 / (2.0 * pi2 + pi1 * pi1);
        let e2 = 4.0 * pi2 * pi2 / pi1.powi(4);
        assert!((c.eps1_star - e1).abs() < 1e-15);
        assert!((c.eps2_star - e2).abs() < 1e-15);
        // Γ₁ at ε: positive definite below ε₁*, indefinite above.
        let (lo, _) = sym2_eigenvalues(c.gamma1_matrix(0.5 * c.eps1_star));
        assert!(lo > 0.0);
        let (lo, _) = sym2_eigenvalues(c.gamma1_matrix(2.0 * c.eps1_star));
        assert!(lo < 0.0);
        // 2×2 eigen formula against nalgebra
        let g1 = c.gamma1_matrix(1e-4);
        let ev = nalgebra::SymmetricEigen::new(DMatrix::from_row_slice(2, 2, &[g1[0][0], g1[0][1], g1[1][0], g1[1][1]]))
            .eigenvalues;
        assert!((ev.min() - sym2_eigenvalues(g1).0).abs() < 1e-15);
    }

    #[test]
    fn epsilon_too_large_flagged() {
        let (reg, cert) = toy();
        let c = build_constants_unchecked(&reg, &[1.0, 1.0], &cert, 1e-4).unwrap();
        let err = build_constants(&reg, &[1.0, 1.0], &cert, c.eps_star * 1.01).unwrap_err();
        assert!(matches!(err, AnalysisError::EpsilonTooLarge { .. }));
    }

    #[test]
    fn mu1_vanishes_with_epsilon() {
        let (reg, cert) = toy();
        let c = build_constants(&reg, &[1.0, 1.0], &cert, 1e-12).unwrap();
        assert!(c.mu1 > 0.0 && c.mu1 < 1e-10);
    }

    #[test]
    fn nonpositive_beta_rejected() {
        let (_, cert) = toy();
        let reg = RegularityConstants {
            alpha: 1.0,
            beta: 0.0,
            exact: false,
            oriented_jacobian: None,
            dims: vec![1, 1],
        };
        assert!(matches!(
            build_constants(&reg, &[1.0, 1.0], &cert, 1e-5),
            Err(AnalysisError::NonPositiveBeta { .. })
        ));
    }

    #[test]
    fn pic_boundary_and_limit() {
        let (reg, cert) = toy();
        let c = build_constants(&reg, &[1.0, 1.0], &cert, 1e-4).unwrap();
        let th = c.ratio_threshold();
        let r = check_pic(&c, th).unwrap();
        assert!(r.margin.abs() < 1e-15);
        let r = check_pic(&c, 1.0 - 1e-12).unwrap();
        assert!(r.satisfied);
        assert!((r.margin - c.mu1).abs() < 1e-9 * c.mu2.max(1.0));
        assert!(check_pic(&c, 1.0).is_err());
    }

    #[test]
    fn aic_generalises_pic() {
        let (reg, cert) = toy();
        let c = build_constants(&reg, &[1.0, 1.0], &cert, 1e-4).unwrap();
        let (theta, period) = (0.7, 10.0);
        let pic = check_pic(&c, theta).unwrap();
        let aic = check_aic(&c, theta * period, period).unwrap();
        assert!((aic.margin - period * pic.margin).abs() < 1e-12 * aic.margin.abs().max(1.0));
        let b = check_aic(&c, period * c.ratio_threshold(), period).unwrap();
        assert!(b.margin.abs() < 1e-12);
        assert!(check_aic(&c, 5.0, 4.0).is_err());
    }

    #[test]
    fn min_ratio_and_acr_boundaries() {
        let (reg, cert) = toy();
        let c = build_constants(&reg, &[1.0, 1.0], &cert, 1e-4).unwrap();
        let z = c.mu1 / (c.mu1 + c.mu2);
        assert!(check_min_ratio(&c, z).unwrap().margin.abs() < 1e-15);
        assert!((check_min_ratio(&c, 1e-12).unwrap().margin - c.mu1).abs() < 1e-9);
        let r = check_acr_condition(&c, c.ratio_threshold()).unwrap();
        assert!(r.margin.abs() < 1e-15);
        let r = check_acr_condition(&c, 1.0 - 1e-12).unwrap();
        assert!((r.margin - c.mu1).abs() < 1e-9);
    }

    #[test]
    fn mu2_variants_swap() {
        let (reg, cert) = toy();
        let c = build_constants(&reg, &[1.0, 1.0], &cert, 1e-4).unwrap();
        let printed = c.with_mu2_variant(Mu2Variant::AsPrinted);
        assert_eq!(printed.mu2, c.mu2_alternate);
        assert_eq!(printed.mu2_alternate, c.mu2);
        let (lo, _) = sym2_eigenvalues(c.gamma1_matrix(1e-4));
        assert!((printed.mu2 - lo / c.eta1).abs() < 1e-15);
    }

    #[test]
    fn exponential_fit() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let v: Vec<f64> = times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let rate = fit_exponential_rate(&times, &v, (0.0, 10.0)).unwrap();
        assert!((rate - 2.0).abs() < 1e-9);
        let flat = vec![4.0; times.len()];
        assert!(fit_exponential_rate(&times, &flat, (0.0, 10.0)).unwrap().abs() < 1e-12);
        let mut bad = v.clone();
        bad[10] = 0.0;
        assert_eq!(fit_exponential_rate(&times, &bad, (0.0, 10.0)), Err(AnalysisError::NonPositiveValues));
    }
}
