//! Dense linear-algebra helpers shared by the graph and analysis modules.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetric_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)[0]
}

pub fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    *symmetric_eigenvalues(m).last().expect("non-empty matrix")
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, s| acc.max(*s))
}

// nalgebra's default Schur tolerance is machine epsilon with no iteration
// cap, which stalls on the block-circulant coupling matrices of rings.
const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 100_000;

/// Smallest real part over the (complex) spectrum of `m`; NaN if the QR
/// iteration fails to converge.
pub fn min_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    match Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER) {
        Some(s) => s
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min),
        None => f64::NAN,
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Solves `hᵀ P + P h = q` by complex Schur reduction and a triangular
/// back-substitution (Bartels–Stewart). Returns `None` when some pair of
/// eigenvalues satisfies `λ_k + λ_l ≈ 0`, i.e. no unique solution exists, or
/// when the Schur iteration does not converge.
pub fn solve_continuous_lyapunov(h: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = h.nrows();
    assert!(h.is_square() && q.shape() == (n, n), "shape mismatch");
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let hc: DMatrix<Complex64> = h.map(|v| Complex64::new(v, 0.0));
    let (u, t) = Schur::try_new(hc, SCHUR_EPS, SCHUR_MAX_ITER)?.unpack();
    // h = U T Uᴴ  ⇒  hᵀ = conj(U) Tᵀ Uᵀ; with P = conj(U) Y Uᴴ the equation
    // becomes Tᵀ Y + Y T = Uᵀ q U.
    let qc: DMatrix<Complex64> = q.map(|v| Complex64::new(v, 0.0));
    let c = u.transpose() * qc * &u;
    let scale = t.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1.0);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let mut acc = c[(k, l)];
            for p in 0..k {
                acc -= t[(p, k)] * y[(p, l)];
            }
            for r in 0..l {
                acc -= y[(k, r)] * t[(r, l)];
            }
            let denom = t[(k, k)] + t[(l, l)];
            if denom.norm() <= 1e-14 * scale {
                return None;
            }
            y[(k, l)] = acc / denom;
        }
    }
    let p = u.map(|z| z.conj()) * y * u.adjoint();
    let real = p.map(|z| z.re);
    Some(symmetric_part(&real))
}

/// LU solve that reports singular systems instead of returning garbage.
pub fn solve_linear(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0_f64, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= 1e-12 * max {
        return None;
    }
    lu.solve(rhs)
}
