//! Constrained minimization of `B_c(u) = ½∫|∇u|² + c u²` over
//! `∫|u|^{p+2} = λ` by preconditioned projected gradient descent with
//! multiplicative renormalization onto the constraint.
//!
//! The gradient is taken in the inner product `⟨u, v⟩_c = ∫∇u·∇v + c uv`,
//! in which the gradient of `B_c` is `u` itself and the gradient of the
//! constraint is `(−Δ + c)⁻¹ (p+2)|u|^p u`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{basis, coeff_to_nodal, inner_product, Sector, SpectralField, TorusGrid};

/// `B_c(u)` via Parseval.
pub fn b_c(field: &SpectralField, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("B_c needs c > 0, got {c}")));
    }
    Ok(0.5
        * basis(field.sector(), field.truncation())
            .iter()
            .map(|m| (m.wavenumber_sq() + c) * m.norm_sq() * field.get(*m).powi(2))
            .sum::<f64>())
}

/// `∫|u|^{q}` by quadrature on a grid that integrates `u^q` exactly when
/// `q` is even or `u` keeps one sign.
pub fn power_integral(field: &SpectralField, q: u32) -> Result<f64> {
    let grid = TorusGrid::alias_free(field.truncation(), q as usize);
    Ok(coeff_to_nodal(field, grid)?.map(|v| v.abs().powi(q as i32)).integral())
}

/// Galerkin projection of `|u|^p u`.
fn nonlinearity(field: &SpectralField, p: u32) -> Result<SpectralField> {
    let grid = TorusGrid::alias_free(field.truncation(), p as usize + 1);
    let nodal = coeff_to_nodal(field, grid)?;
    let values = nodal.values.map(|v| v.abs().powi(p as i32) * v);
    Ok(crate::spectral::project_unchecked(&values, field.sector(), field.truncation()))
}

fn apply_symbol(field: &SpectralField, f: impl Fn(f64) -> f64) -> Result<SpectralField> {
    let mut out = field.clone();
    for m in basis(field.sector(), field.truncation()) {
        out.set(m, field.get(m) * f(m.wavenumber_sq()))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerOptions {
    pub max_iterations: usize,
    /// Stop when `B` decreased by less than this, relatively, over
    /// `stall_window` iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
    /// Stop when `‖g‖_c / ‖u‖_c` drops below this.
    pub gradient_tol: f64,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self { max_iterations: 200_000, stall_tol: 1e-12, stall_window: 50, gradient_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerRun {
    pub p: u32,
    pub c: f64,
    pub constraint_level: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub field: SpectralField,
    pub b_value: f64,
    /// `|∫|u|^{p+2} − λ| / λ` for the final field.
    pub constraint_defect: f64,
    /// Stationary solution `κu` with `κ^p` the least-squares multiplier of
    /// `(−Δ + c)u = κ^p |u|^p u`.
    pub rescaled: SpectralField,
    pub rescaled_b: f64,
    pub rescaled_half_power: f64,
    pub rescaled_residual: f64,
}

fn random_start(sector: Sector, n: usize, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::constant(sector, n, 1.0);
    for m in basis(sector, n) {
        if m.k <= 3 && m.j <= 3 && (m.k, m.j) != (0, 0) {
            let z: f64 = StandardNormal.sample(&mut rng);
            f.set(m, 0.3 * z / (1.0 + m.wavenumber_sq())).expect("mode in basis");
        }
    }
    f
}

fn renormalize(u: &SpectralField, p: u32, lambda: f64) -> Result<SpectralField> {
    let g = power_integral(u, p + 2)?;
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Degenerate("constraint integral vanished".into()));
    }
    Ok(u.scale((lambda / g).powf(1.0 / (p + 2) as f64)))
}

/// Minimizes from a seeded random start in `sector`.
pub fn minimize(p: u32, c: f64, lambda: f64, sector: Sector, n: usize, seed: u64, opts: &MinimizerOptions) -> Result<MinimizerRun> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("constraint level must be positive, got {lambda}")));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("p must be positive".into()));
    }
    minimize_from(p, c, lambda, random_start(sector, n, seed), seed, opts)
}

pub fn minimize_from(p: u32, c: f64, lambda: f64, start: SpectralField, seed: u64, opts: &MinimizerOptions) -> Result<MinimizerRun> {
    let n = start.truncation();
    let mut u = renormalize(&start, p, lambda)?;
    let mut b = b_c(&u, c)?;
    let mut history = vec![b];
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let gp = nonlinearity(&u, p)?.scale((p + 2) as f64);
        let pg = apply_symbol(&gp, |k2| 1.0 / (k2 + c))?;
        let alpha = inner_product(&u, &gp)? / inner_product(&pg, &gp)?;
        let g = u.axpy(-alpha, &pg)?;
        // ‖g‖_c² = 2 B_c(g)
        gnorm = (2.0 * b_c(&g, c)?).sqrt() / (2.0 * b).sqrt();
        if gnorm < opts.gradient_tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let trial = renormalize(&u.axpy(-step, &g)?, p, lambda)?;
            let bt = b_c(&trial, c)?;
            if bt <= b + 1e-14 * b.abs() {
                u = trial;
                b = bt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1.0);
        history.push(b);
        if history.len() > opts.stall_window {
            let old = history[history.len() - 1 - opts.stall_window];
            if (old - b) <= opts.stall_tol * b.abs() {
                converged = true;
                break;
            }
        }
    }
    let constraint_defect = (power_integral(&u, p + 2)? - lambda).abs() / lambda;
    // least-squares multiplier of the Euler-Lagrange equation
    let lu = apply_symbol(&u, |k2| k2 + c)?;
    let nu = nonlinearity(&u, p)?;
    let kp = inner_product(&lu, &nu)? / inner_product(&nu, &nu)?;
    let rescaled = u.scale(kp.abs().powf(1.0 / p as f64) * kp.signum());
    let rescaled_b = b_c(&rescaled, c)?;
    let rescaled_half_power = 0.5 * power_integral(&rescaled, p + 2)?;
    let rescaled_residual = crate::continuation::residual(&rescaled, c, p)?.norm();
    let _ = n;
    Ok(MinimizerRun {
        p,
        c,
        constraint_level: lambda,
        n: u.truncation(),
        seed,
        iterations,
        converged,
        gradient_norm: gnorm,
        b_value: b,
        field: u,
        constraint_defect,
        rescaled,
        rescaled_b,
        rescaled_half_power,
        rescaled_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub nodal_min: f64,
    pub flipped: bool,
    pub normalized: SpectralField,
}

/// Flips a global sign so the mean is positive and reports the nodal
/// minimum of the result.
pub fn positivity_and_phase_check(field: &SpectralField) -> Result<PositivityReport> {
    if field.max_abs_coefficient() == 0.0 {
        return Err(Error::Degenerate("zero field has no phase".into()));
    }
    let flipped = field.cc(0, 0) < 0.0;
    let normalized = if flipped { field.scale(-1.0) } else { field.clone() };
    Ok(PositivityReport { nodal_min: crate::stokes::nodal_minimum(&normalized)?, flipped, normalized })
}

/// L² distance minimized over `x ↔ y` and half-period shifts (the
/// symmetries preserving the S sector; E-sector fields are compared under
/// the shifts only plus `y ↦ −y`).
pub fn aligned_distance(u: &SpectralField, target: &SpectralField) -> Result<f64> {
    let mut best = f64::INFINITY;
    for swap in [false, true] {
        for sx in [false, true] {
            for sy in [false, true] {
                let mut v = u.shift_half(sx, sy);
                if swap {
                    v = if u.sector() == Sector::S { v.swap_xy() } else { v.reflect_y() };
                }
                best = best.min(v.sub(target)?.norm());
            }
        }
    }
    Ok(best)
}
