//! Galerkin matrices of the linearized operators
//! `L₁ = −Δ + c − (p+1)φ^p` and `L₂ = −Δ + c − φ^p`, their spectra, and
//! range-restricted solves.
//!
//! Matrices act on orthonormal coordinates (see
//! [`SpectralField::to_coords`]), so symmetric operators are symmetric
//! matrices and dot products are L² inner products.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::continuation::WaveBranchPoint;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::spectral::{basis, coeff_to_nodal, BasisMode, Sector, SpectralField, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    L1,
    L2,
    L,
    JL,
    Other,
}

/// Row/column meaning: `component` is 0 for single-block operators and
/// 0/1 for the real/imaginary halves of the block operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub component: u8,
    pub mode: BasisMode,
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub sector: Sector,
    pub n: usize,
    pub basis_map: Vec<BasisEntry>,
    pub entries: DMatrix<f64>,
    pub symmetric: bool,
    /// `max |A − Aᵀ| / max(1, max |A|)` before symmetrization.
    pub symmetry_defect: f64,
}

const SYMMETRY_TOLERANCE: f64 = 1e-12;

fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

impl OperatorMatrix {
    /// Wraps a dense matrix in the single-block basis of `sector`.
    /// Symmetry is detected, and enforced by averaging when the defect is
    /// within `1e−12`.
    pub fn from_dense(kind: OperatorKind, sector: Sector, n: usize, blocks: u8, entries: DMatrix<f64>) -> Result<Self> {
        let modes = basis(sector, n);
        let basis_map: Vec<BasisEntry> = (0..blocks)
            .flat_map(|c| modes.iter().map(move |m| BasisEntry { component: c, mode: *m }))
            .collect();
        if entries.nrows() != basis_map.len() || entries.ncols() != basis_map.len() {
            return Err(Error::Incompatible(format!(
                "{}x{} matrix for a basis of size {}",
                entries.nrows(),
                entries.ncols(),
                basis_map.len()
            )));
        }
        let defect = relative_asymmetry(&entries);
        let symmetric = defect <= SYMMETRY_TOLERANCE;
        let entries = if symmetric { (&entries + entries.transpose()) * 0.5 } else { entries };
        Ok(Self { kind, sector, n, basis_map, entries, symmetric, symmetry_defect: defect })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Applies a single-block operator to a field.
    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField> {
        if f.sector() != self.sector || f.truncation() != self.n || f.dim() != self.dim() {
            return Err(Error::Incompatible("field does not match operator basis".into()));
        }
        SpectralField::from_coords(self.sector, self.n, &(&self.entries * f.to_coords()))
    }
}

/// Orthonormal 1-D factors: `cos(kx)/√(π α_k)` with `α₀ = 2`, `α_k = 1`.
fn normalized_cos(m: usize, n: usize) -> DMatrix<f64> {
    let mut t = crate::spectral::cos_table(m, n);
    for k in 0..=n {
        let s = 1.0 / (PI * if k == 0 { 2.0 } else { 1.0 }).sqrt();
        t.column_mut(k).scale_mut(s);
    }
    t
}

fn normalized_sin(m: usize, n: usize) -> DMatrix<f64> {
    crate::spectral::sin_table(m, n) / PI.sqrt()
}

/// `A[(k,j),(k',j')] = h² Σ v(x,y) xa_k(x) xb_k'(x) ya_j(y) yb_j'(y)`.
fn separable_block(
    v: &DMatrix<f64>,
    (xa, xb): (&DMatrix<f64>, &DMatrix<f64>),
    (ya, yb): (&DMatrix<f64>, &DMatrix<f64>),
    exec: Execution,
) -> DMatrix<f64> {
    let m = v.nrows();
    let (nax, nbx, nay, nby) = (xa.ncols(), xb.ncols(), ya.ncols(), yb.ncols());
    let columns = par::map_range(exec, m, |y| {
        let mut scaled = xb.clone();
        for x in 0..m {
            scaled.row_mut(x).scale_mut(v[(x, y)]);
        }
        xa.transpose() * scaled
    });
    let mut w = DMatrix::zeros(nax * nbx, m);
    for (y, t) in columns.iter().enumerate() {
        for k in 0..nax {
            for kp in 0..nbx {
                w[(k * nbx + kp, y)] = t[(k, kp)];
            }
        }
    }
    let z = DMatrix::from_fn(m, nay * nby, |y, c| ya[(y, c / nby)] * yb[(y, c % nby)]);
    let prod = w * z;
    let h2 = (2.0 * PI / m as f64).powi(2);
    DMatrix::from_fn(nax * nay, nbx * nby, |r, c| {
        let (k, j) = (r / nay, r % nay);
        let (kp, jp) = (c / nby, c % nby);
        h2 * prod[(k * nbx + kp, j * nby + jp)]
    })
}

/// Galerkin matrix of multiplication by the function sampled in
/// `weight` (an `M × M` nodal array). Exact when `weight` is a trigonometric
/// polynomial of degree `< M − 2N`.
pub fn multiplication_matrix(weight: &DMatrix<f64>, sector: Sector, n: usize, exec: Execution) -> DMatrix<f64> {
    let m = weight.nrows();
    let c = normalized_cos(m, n);
    let cc = separable_block(weight, (&c, &c), (&c, &c), exec);
    if sector == Sector::S || n == 0 {
        return cc;
    }
    let s = normalized_sin(m, n);
    let cs = separable_block(weight, (&c, &s), (&c, &s), exec);
    let sc = separable_block(weight, (&s, &c), (&s, &c), exec);
    let ss = separable_block(weight, (&s, &s), (&s, &s), exec);
    let (dc, ds) = (cc.nrows(), ss.nrows());
    let mut out = DMatrix::zeros(dc + ds, dc + ds);
    out.view_mut((0, 0), (dc, dc)).copy_from(&cc);
    out.view_mut((0, dc), (dc, ds)).copy_from(&cs);
    out.view_mut((dc, 0), (ds, dc)).copy_from(&sc);
    out.view_mut((dc, dc), (ds, ds)).copy_from(&ss);
    out
}

/// `diag(k² + j²) + shift` in the basis of `sector`.
pub fn shifted_negative_laplacian(sector: Sector, n: usize, shift: f64) -> DMatrix<f64> {
    let modes = basis(sector, n);
    DMatrix::from_diagonal(&DVector::from_iterator(modes.len(), modes.iter().map(|m| m.wavenumber_sq() + shift)))
}

/// `−Δ + c − coef·φ^p`.
pub fn schrodinger_operator(
    kind: OperatorKind,
    phi: &SpectralField,
    c: f64,
    p: u32,
    coef: f64,
    exec: Execution,
) -> Result<OperatorMatrix> {
    let (sector, n) = (phi.sector(), phi.truncation());
    let grid = TorusGrid::alias_free(n, p as usize + 1);
    let nodal = coeff_to_nodal(phi, grid)?;
    let potential = nodal.values.map(|v| v.powi(p as i32));
    if potential.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericRange("potential"));
    }
    let mult = multiplication_matrix(&potential, sector, n, exec);
    let entries = shifted_negative_laplacian(sector, n, c) - mult * coef;
    OperatorMatrix::from_dense(kind, sector, n, 1, entries)
}

pub fn assemble_l1(wave: &WaveBranchPoint, exec: Execution) -> Result<OperatorMatrix> {
    schrodinger_operator(OperatorKind::L1, &wave.field, wave.c, wave.p, (wave.p + 1) as f64, exec)
}

pub fn assemble_l2(wave: &WaveBranchPoint, exec: Execution) -> Result<OperatorMatrix> {
    schrodinger_operator(OperatorKind::L2, &wave.field, wave.c, wave.p, 1.0, exec)
}

/// Block-diagonal `L = diag(L₁, L₂)`.
pub fn assemble_l(l1: &OperatorMatrix, l2: &OperatorMatrix) -> Result<OperatorMatrix> {
    if l1.dim() != l2.dim() || l1.sector != l2.sector {
        return Err(Error::Incompatible("L1 and L2 bases differ".into()));
    }
    let d = l1.dim();
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    e.view_mut((0, 0), (d, d)).copy_from(&l1.entries);
    e.view_mut((d, d), (d, d)).copy_from(&l2.entries);
    OperatorMatrix::from_dense(OperatorKind::L, l1.sector, l1.n, 2, e)
}

/// Eigenvalue counts with the tolerance that gated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCounts {
    pub n: usize,
    pub z: usize,
    pub positive: usize,
    pub tau: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal coordinate vectors spanning the numerical kernel.
    pub kernel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub counts: SpectrumCounts,
    /// Columns are eigenvectors, in the order of `counts.eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

/// `max(1e−8, 1e−10 ρ)`.
pub fn kernel_tolerance(spectral_radius: f64) -> f64 {
    (1e-10 * spectral_radius).max(1e-8)
}

pub fn eig_sym(a: &OperatorMatrix) -> Result<SymmetricSpectrum> {
    if !a.symmetric {
        return Err(Error::NotSymmetric { defect: a.symmetry_defect });
    }
    eig_sym_with_tolerance(a, None)
}

/// As [`eig_sym`] with an optional explicit kernel tolerance.
pub fn eig_sym_with_tolerance(a: &OperatorMatrix, tau: Option<f64>) -> Result<SymmetricSpectrum> {
    if !a.symmetric {
        return Err(Error::NotSymmetric { defect: a.symmetry_defect });
    }
    let eig = SymmetricEigen::try_new(a.entries.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(a.dim(), a.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    let rho = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tau = tau.unwrap_or_else(|| kernel_tolerance(rho));
    let n = eigenvalues.iter().filter(|&&v| v < -tau).count();
    let z = eigenvalues.iter().filter(|&&v| v.abs() <= tau).count();
    let kernel = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= tau)
        .map(|(i, _)| eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok(SymmetricSpectrum {
        counts: SpectrumCounts { n, z, positive: eigenvalues.len() - n - z, tau, eigenvalues, kernel },
        eigenvectors,
    })
}

impl SymmetricSpectrum {
    fn pseudo_inverse_apply(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(b.len());
        for (i, &lam) in self.counts.eigenvalues.iter().enumerate() {
            if lam.abs() <= self.counts.tau {
                continue;
            }
            let v = self.eigenvectors.column(i);
            x.axpy(v.dot(b) / lam, &v, 1.0);
        }
        x
    }

    fn kernel_vectors(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.counts.kernel.iter().map(|k| DVector::from_column_slice(k))
    }

    /// Kernel fields of a single-block operator.
    pub fn kernel_fields(&self, sector: Sector, n: usize) -> Result<Vec<SpectralField>> {
        self.kernel_vectors().map(|v| SpectralField::from_coords(sector, n, &v)).collect()
    }
}

/// Minimum-norm solution of `A x = b` with `b` required to be orthogonal
/// to the numerical kernel (to `1e−8` relative). One step of iterative
/// refinement is applied.
pub fn solve_in_range(a: &OperatorMatrix, spectrum: &SymmetricSpectrum, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != a.dim() {
        return Err(Error::Incompatible("right-hand side length differs from operator".into()));
    }
    let bn = b.norm();
    let tolerance = 1e-8 * bn.max(f64::MIN_POSITIVE);
    let mut b = b.clone();
    for v in spectrum.kernel_vectors() {
        let proj = v.dot(&b);
        if proj.abs() > tolerance {
            return Err(Error::Solvability { projection: proj, tolerance });
        }
        b.axpy(-proj, &v, 1.0);
    }
    let mut x = spectrum.pseudo_inverse_apply(&b);
    let r = &b - &a.entries * &x;
    x += spectrum.pseudo_inverse_apply(&r);
    for v in spectrum.kernel_vectors() {
        let proj = v.dot(&x);
        x.axpy(-proj, &v, 1.0);
    }
    let res = (&a.entries * &x - &b).norm();
    if res > 1e-9 * bn.max(1e-300) {
        log::warn!("range solve residual {res:.3e} exceeds 1e-9 relative");
    }
    Ok(x)
}

pub fn solve_field(a: &OperatorMatrix, spectrum: &SymmetricSpectrum, rhs: &SpectralField) -> Result<SpectralField> {
    let x = solve_in_range(a, spectrum, &rhs.to_coords())?;
    SpectralField::from_coords(a.sector, a.n, &x)
}

/// `⟨A⁻¹f, f⟩` with `A⁻¹` the range-restricted inverse.
pub fn quadratic_form_inverse(a: &OperatorMatrix, spectrum: &SymmetricSpectrum, f: &DVector<f64>) -> Result<f64> {
    Ok(solve_in_range(a, spectrum, f)?.dot(f))
}
