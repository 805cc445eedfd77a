//! Direct route: the full spectrum of `JL = [[0, −L₂], [L₁, 0]]`, counts of
//! unstable and negative-signature eigenvalues, and consistency with the
//! Krein index.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krein::{KreinReport, Verdict};
use crate::operators::{kernel_tolerance, OperatorKind, OperatorMatrix};

pub fn assemble_jl(l1: &OperatorMatrix, l2: &OperatorMatrix) -> Result<OperatorMatrix> {
    if l1.dim() != l2.dim() || l1.sector != l2.sector {
        return Err(Error::Incompatible("L1 and L2 bases differ".into()));
    }
    let d = l1.dim();
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    e.view_mut((0, d), (d, d)).copy_from(&(-&l2.entries));
    e.view_mut((d, 0), (d, d)).copy_from(&l1.entries);
    OperatorMatrix::from_dense(OperatorKind::JL, l1.sector, l1.n, 2, e)
}

/// Eigenvalues and (complex, unit-norm) eigenvectors of a real matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    /// Columns are eigenvectors.
    pub vectors: DMatrix<Complex64>,
}

pub fn eigen_general(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let evd = m.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values: Vec<Complex64> = (0..n).map(|i| { let z = s[i]; Complex64::new(z.re, z.im) }).collect();
    let mut vectors = DMatrix::from_fn(n, n, |i, j| { let z = u[(i, j)]; Complex64::new(z.re, z.im) });
    for mut col in vectors.column_iter_mut() {
        let nrm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            col.unscale_mut(nrm);
        }
    }
    if values.iter().any(|z| !z.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(EigenDecomposition { values, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JlTolerances {
    /// Relative factor for `ε_re = factor · (1 + ρ)`.
    pub re_factor: f64,
    pub im_factor: f64,
    /// Imaginary eigenvalues closer than `cluster_factor · (1 + ρ)` share a
    /// signature computation.
    pub cluster_factor: f64,
    /// Restricted-form eigenvalues below this (unit vectors) are ambiguous.
    pub signature_floor: f64,
}

impl Default for JlTolerances {
    fn default() -> Self {
        Self { re_factor: 1e-7, im_factor: 1e-7, cluster_factor: 1e-6, signature_floor: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginaryCluster {
    /// Mean `Im λ` (positive half-axis).
    pub omega: f64,
    pub multiplicity: usize,
    /// Negative directions of `⟨Lw, w⟩` on the real invariant subspace
    /// (twice the negative-signature eigenvalues with `Im λ > 0`).
    pub negative: usize,
    pub min_abs_form: f64,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlSpectrumReport {
    pub eigenvalues: Vec<[f64; 2]>,
    pub spectral_radius: f64,
    pub max_real_part: f64,
    pub eps_re: f64,
    pub eps_im: f64,
    pub zero_count: usize,
    pub k_r: usize,
    pub k_c: usize,
    /// Negative-signature purely imaginary eigenvalues, counting both
    /// members of each `±iω` pair (always even).
    pub k_minus: usize,
    pub clusters: Vec<ImaginaryCluster>,
    pub ambiguous: bool,
    pub verdict: Verdict,
    pub quartet_defect: f64,
}

/// Largest distance from an element of `a` to its greedy partner in `b`.
fn multiset_distance(a: &[Complex64], b: &[Complex64], scale: impl Fn(Complex64) -> f64) -> f64 {
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].norm().total_cmp(&a[i].norm()));
    for i in order {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, z) in b.iter().enumerate() {
            if !used[j] {
                let d = (a[i] - z).norm();
                if d < best_d {
                    best_d = d;
                    best = Some(j);
                }
            }
        }
        match best {
            Some(j) => {
                used[j] = true;
                worst = worst.max(best_d / scale(b[j]));
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// `max` over the spectrum of the distance between `{λ}` and `{−λ}`, and
/// between `{λ}` and `{λ̄}`.
pub fn quartet_defect(values: &[Complex64]) -> f64 {
    let neg: Vec<Complex64> = values.iter().map(|z| -z).collect();
    let conj: Vec<Complex64> = values.iter().map(|z| z.conj()).collect();
    multiset_distance(values, &neg, |_| 1.0).max(multiset_distance(values, &conj, |_| 1.0))
}

/// Classifies the spectrum of `JL`; `l` is the block operator `diag(L₁, L₂)`
/// used for Krein signatures.
pub fn classify_spectrum(eig: &EigenDecomposition, l: &OperatorMatrix, tol: &JlTolerances) -> JlSpectrumReport {
    let values = &eig.values;
    let rho = values.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let eps_re = tol.re_factor * (1.0 + rho);
    let eps_im = tol.im_factor * (1.0 + rho);
    let (mut zero_count, mut k_r, mut k_c) = (0, 0, 0);
    let mut imaginary: Vec<usize> = Vec::new();
    for (i, z) in values.iter().enumerate() {
        if z.norm() <= eps_re {
            zero_count += 1;
        } else if z.re > eps_re && z.im.abs() <= eps_im {
            k_r += 1;
        } else if z.re > eps_re {
            k_c += 1;
        } else if z.re.abs() <= eps_re && z.im > eps_im {
            imaginary.push(i);
        }
    }
    imaginary.sort_by(|&i, &j| values[i].im.total_cmp(&values[j].im));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in imaginary {
        match groups.last_mut() {
            Some(g) if values[i].im - values[*g.last().unwrap()].im <= tol.cluster_factor * (1.0 + rho) => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let clusters: Vec<ImaginaryCluster> = groups.iter().map(|g| signature_of_cluster(eig, l, g, tol)).collect();
    let k_minus = clusters.iter().filter(|c| !c.ambiguous).map(|c| c.negative).sum();
    let ambiguous = clusters.iter().any(|c| c.ambiguous);
    let max_real_part = values.iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re));
    let max_abs_re = values.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    JlSpectrumReport {
        eigenvalues: values.iter().map(|z| [z.re, z.im]).collect(),
        spectral_radius: rho,
        max_real_part,
        eps_re,
        eps_im,
        zero_count,
        k_r,
        k_c,
        k_minus,
        clusters,
        ambiguous,
        verdict: if max_abs_re <= eps_re { Verdict::Stable } else { Verdict::Unstable },
        quartet_defect: quartet_defect(values),
    }
}

/// Inertia of `⟨Lq, q⟩` on the orthonormalized span of the real and
/// imaginary parts of the cluster's eigenvectors.
fn signature_of_cluster(eig: &EigenDecomposition, l: &OperatorMatrix, group: &[usize], tol: &JlTolerances) -> ImaginaryCluster {
    let d = l.dim();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(2 * group.len());
    for &i in group {
        let col = eig.vectors.column(i);
        basis.push(col.map(|z| z.re));
        basis.push(col.map(|z| z.im));
    }
    // modified Gram-Schmidt, twice
    let mut q: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut rank_deficient = false;
    for mut v in basis {
        let n0 = v.norm();
        for _ in 0..2 {
            for u in &q {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let nv = v.norm();
        if nv <= 1e-8 * n0.max(f64::MIN_POSITIVE) {
            rank_deficient = true;
            continue;
        }
        q.push(v / nv);
    }
    let qm = DMatrix::from_fn(d, q.len(), |r, c| q[c][r]);
    let g = qm.transpose() * &l.entries * &qm;
    let g = (&g + g.transpose()) * 0.5;
    let ev = SymmetricEigen::new(g).eigenvalues;
    let negative = ev.iter().filter(|&&x| x < 0.0).count();
    let min_abs_form = ev.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let omega = group.iter().map(|&i| eig.values[i].im).sum::<f64>() / group.len() as f64;
    let ambiguous = rank_deficient || min_abs_form < tol.signature_floor || negative % 2 == 1;
    ImaginaryCluster { omega, multiplicity: group.len(), negative, min_abs_form, ambiguous }
}

/// Spectrum of `−L₂L₁`. With `L₂ = QΛQᵀ`, `S = |Λ|^{1/2}Qᵀ` and
/// `D = sign Λ`, `−L₂L₁ = −SᵀDSL₁` has the spectrum of `−DSL₁Sᵀ`. For
/// `L₂ ⪰ 0` that matrix is symmetric and the spectrum is real; otherwise a
/// real Schur iteration with a capped iteration count is used, and `None`
/// means it did not converge.
pub fn product_spectrum(l1: &OperatorMatrix, l2: &OperatorMatrix) -> Option<Vec<Complex64>> {
    let eig = SymmetricEigen::new(l2.entries.clone());
    let rho = eig.eigenvalues.amax();
    let tau = kernel_tolerance(rho);
    let s = DMatrix::from_fn(eig.eigenvalues.len(), eig.eigenvalues.len(), |i, j| {
        eig.eigenvalues[i].abs().sqrt() * eig.eigenvectors[(j, i)]
    });
    let m = &s * &l1.entries * s.transpose();
    let negative: Vec<bool> = eig.eigenvalues.iter().map(|&v| v < -tau).collect();
    if !negative.iter().any(|&n| n) {
        let m = (&m + m.transpose()) * -0.5;
        return Some(SymmetricEigen::new(m).eigenvalues.iter().map(|&v| Complex64::new(v, 0.0)).collect());
    }
    let mut m = -m;
    for (i, &neg) in negative.iter().enumerate() {
        if neg {
            m.row_mut(i).neg_mut();
        }
    }
    let n = m.nrows();
    let schur = nalgebra::Schur::try_new(m, f64::EPSILON, 200 * n)?;
    Some(schur.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

/// Checks that squared eigenvalues of `JL` reproduce the spectrum of
/// `−L₂L₁` (each eigenvalue twice), computed without the general eigensolver
/// used for `JL`. Returns the largest relative mismatch `|λ² − μ| / (1 + |μ|)`,
/// or `None` when the product spectrum is unavailable.
pub fn product_route_defect(l1: &OperatorMatrix, l2: &OperatorMatrix, jl_values: &[Complex64]) -> Option<f64> {
    let mu = product_spectrum(l1, l2)?;
    let doubled: Vec<Complex64> = mu.iter().chain(mu.iter()).copied().collect();
    let squares: Vec<Complex64> = jl_values.iter().map(|z| z * z).collect();
    Some(multiset_distance(&squares, &doubled, |m| 1.0 + m.norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub k_r: usize,
    pub k_c: usize,
    pub k_minus: usize,
    pub jl_total: usize,
    pub rhs_index: i64,
    pub identity_holds: bool,
    pub krein_verdict: Verdict,
    pub direct_verdict: Verdict,
    pub verdicts_agree: bool,
    /// Both sides numerically resolved: no ambiguous signature cluster and
    /// no negative index.
    pub resolved: bool,
    pub eps_re: f64,
    pub tau_v: f64,
}

pub fn verdict_crosscheck(jl: &JlSpectrumReport, krein: &KreinReport) -> ConsistencyRecord {
    let jl_total = jl.k_r + jl.k_c + jl.k_minus;
    let identity_holds = jl_total as i64 == krein.rhs_index;
    let verdicts_agree = match krein.verdict {
        Verdict::Inconclusive => true,
        v => v == jl.verdict,
    };
    let record = ConsistencyRecord {
        k_r: jl.k_r,
        k_c: jl.k_c,
        k_minus: jl.k_minus,
        jl_total,
        rhs_index: krein.rhs_index,
        identity_holds,
        krein_verdict: krein.verdict,
        direct_verdict: jl.verdict,
        verdicts_agree,
        resolved: !jl.ambiguous && !krein.inconsistent,
        eps_re: jl.eps_re,
        tau_v: krein.tau_v,
    };
    if !identity_holds || !verdicts_agree {
        log::warn!(
            "index mismatch: k_r + k_c + k_- = {} + {} + {} vs n(L) - n(V) - z(V) = {}",
            jl.k_r,
            jl.k_c,
            jl.k_minus,
            krein.rhs_index
        );
    }
    record
}
