//! Hamiltonian Krein index bookkeeping:
//! `k_r + k_c + k_− = n(L) − n(V) − z(V)` with
//! `V_jl = ⟨L⁻¹JΘ_j, JΘ_l⟩` over an orthonormal basis `Θ` of `Ker(L)`.
//!
//! `Ker(L) = Ker(L₁) × {0} ⊕ {0} × Ker(L₂)` and `J(u, w) = (−w, u)`, so a
//! kernel vector `(v, 0)` contributes `⟨L₂⁻¹v, v⟩` and `(0, w)` contributes
//! `⟨L₁⁻¹w, w⟩`; mixed entries vanish identically.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{kernel_tolerance, solve_in_range, OperatorMatrix, SymmetricSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Which half of the stacked vector `(u, w)` a kernel vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    /// `(v, 0)` with `v ∈ Ker(L₁)`.
    Real,
    /// `(0, w)` with `w ∈ Ker(L₂)`.
    Imaginary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub component: Component,
    /// Orthonormal coordinates of the nonzero half.
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KreinReport {
    pub z_l: usize,
    pub theta: Vec<ThetaVector>,
    pub v: Vec<Vec<f64>>,
    pub v_eigenvalues: Vec<f64>,
    pub v_symmetry_defect: f64,
    pub n_v: usize,
    pub z_v: usize,
    pub tau_v: f64,
    pub n_l: usize,
    pub tau_l1: f64,
    pub tau_l2: f64,
    pub rhs_index: i64,
    pub verdict: Verdict,
    /// Set when `rhs_index < 0`.
    pub inconsistent: bool,
    /// `max |⟨v, φ⟩|` over `v ∈ Ker(L₁)`, normalized by `‖φ‖`.
    pub kernel_orthogonality: Option<f64>,
}

/// `Θ`: kernel of `L₁` in the first component followed by the kernel of
/// `L₂` in the second. Already orthonormal because each spectrum's kernel
/// vectors are.
pub fn kernel_basis_l(l1: &SymmetricSpectrum, l2: &SymmetricSpectrum) -> Vec<ThetaVector> {
    let real = l1.counts.kernel.iter().map(|v| ThetaVector { component: Component::Real, coords: v.clone() });
    let imag = l2.counts.kernel.iter().map(|v| ThetaVector { component: Component::Imaginary, coords: v.clone() });
    real.chain(imag).collect()
}

/// `V` and the relative symmetry defect before averaging.
pub fn build_v(
    (l1, s1): (&OperatorMatrix, &SymmetricSpectrum),
    (l2, s2): (&OperatorMatrix, &SymmetricSpectrum),
    theta: &[ThetaVector],
) -> Result<(DMatrix<f64>, f64)> {
    let z = theta.len();
    // L⁻¹JΘ_j; JΘ = (0, v) for real-component Θ and (−w, 0) otherwise.
    let mut solved = Vec::with_capacity(z);
    for (j, t) in theta.iter().enumerate() {
        let rhs = DVector::from_column_slice(&t.coords);
        let sol = match t.component {
            Component::Real => solve_in_range(l2, s2, &rhs),
            Component::Imaginary => solve_in_range(l1, s1, &(-&rhs)),
        }
        .map_err(|e| match e {
            Error::Solvability { projection, tolerance } => {
                log::warn!("kernel vector {j} of L obstructs the solve (projection {projection:.3e})");
                Error::Solvability { projection, tolerance }
            }
            other => other,
        })?;
        solved.push(sol);
    }
    let mut v = DMatrix::zeros(z, z);
    for j in 0..z {
        for l in 0..z {
            if theta[j].component != theta[l].component {
                continue;
            }
            let jt = DVector::from_column_slice(&theta[l].coords);
            let sign = if theta[l].component == Component::Imaginary { -1.0 } else { 1.0 };
            v[(j, l)] = sign * solved[j].dot(&jt);
        }
    }
    let scale = v.amax().max(1.0);
    let defect = (&v - v.transpose()).amax() / scale;
    Ok(((&v + v.transpose()) * 0.5, defect))
}

/// Index-parity verdict from `n(L) − n(V) − z(V)`.
pub fn krein_verdict(n_l: usize, n_v: usize, z_v: usize) -> (i64, Verdict, bool) {
    let rhs = n_l as i64 - n_v as i64 - z_v as i64;
    if rhs < 0 {
        return (rhs, Verdict::Inconclusive, true);
    }
    let verdict = match rhs {
        0 => Verdict::Stable,
        r if r % 2 == 1 => Verdict::Unstable,
        _ => Verdict::Inconclusive,
    };
    (rhs, verdict, false)
}

/// Full Krein computation. `phi` (orthonormal coordinates of the wave), when
/// given, is used to test the premise `Ker(L₁) ⟂ φ`.
pub fn krein_analysis(
    l1: (&OperatorMatrix, &SymmetricSpectrum),
    l2: (&OperatorMatrix, &SymmetricSpectrum),
    phi: Option<&DVector<f64>>,
) -> Result<KreinReport> {
    let theta = kernel_basis_l(l1.1, l2.1);
    let kernel_orthogonality = phi.map(|phi| {
        let pn = phi.norm().max(f64::MIN_POSITIVE);
        l1.1.counts.kernel.iter().map(|v| DVector::from_column_slice(v).dot(phi).abs() / pn).fold(0.0, f64::max)
    });
    let (v, defect) = build_v(l1, l2, &theta)?;
    let (v_eigenvalues, n_v, z_v, tau_v) = if v.nrows() == 0 {
        (Vec::new(), 0, 0, kernel_tolerance(0.0))
    } else {
        let mut ev: Vec<f64> = SymmetricEigen::new(v.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let rho = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tau = kernel_tolerance(rho);
        let n = ev.iter().filter(|&&x| x < -tau).count();
        let z = ev.iter().filter(|&&x| x.abs() <= tau).count();
        (ev, n, z, tau)
    };
    let n_l = l1.1.counts.n + l2.1.counts.n;
    let (rhs_index, verdict, inconsistent) = krein_verdict(n_l, n_v, z_v);
    Ok(KreinReport {
        z_l: theta.len(),
        v: v.row_iter().map(|r| r.iter().copied().collect()).collect(),
        theta,
        v_eigenvalues,
        v_symmetry_defect: defect,
        n_v,
        z_v,
        tau_v,
        n_l,
        tau_l1: l1.1.counts.tau,
        tau_l2: l2.1.counts.tau,
        rhs_index,
        verdict,
        inconsistent,
        kernel_orthogonality,
    })
}
