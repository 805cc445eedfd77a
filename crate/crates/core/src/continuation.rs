//! Bordered Newton solver for the stationary equation and amplitude
//! continuation of a branch.
//!
//! The unknowns are the field and the frequency `c`; the extra equation pins
//! the generator coefficient to the amplitude `a`. At the bifurcation point
//! `L₁` alone is singular while the bordered matrix is not.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{schrodinger_operator, OperatorKind};
use crate::par::Execution;
use crate::spectral::{coeff_to_nodal, laplacian_apply, Sector, SpectralField, TorusGrid};
use crate::stokes::{max_supported_order, nodal_minimum, stokes_wave, BranchKind};

/// `Galerkin[−Δφ + cφ − φ^{p+1}]`, with the nonlinear part evaluated as
/// `φ(c − φ^p)` on an alias-free grid.
pub fn residual(field: &SpectralField, c: f64, p: u32) -> Result<SpectralField> {
    let n = field.truncation();
    let grid = TorusGrid::alias_free(n, p as usize + 1);
    let nodal = coeff_to_nodal(field, grid)?;
    let local = nodal.values.map(|v| v * (c - v.powi(p as i32)));
    if local.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericRange("residual"));
    }
    let nonlinear = crate::spectral::project_unchecked(&local, field.sector(), n);
    laplacian_apply(field).scale(-1.0).add(&nonlinear)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaveBranchPoint {
    pub p: u32,
    pub sector: Sector,
    pub branch: BranchKind,
    pub a: f64,
    pub c: f64,
    pub field: SpectralField,
    pub residual: f64,
    pub n: usize,
    pub nodal_min: f64,
    /// Residual norms, one per Newton iterate (initial guess first).
    #[serde(default)]
    pub newton_history: Vec<f64>,
}

impl WaveBranchPoint {
    /// Wraps a field without solving; the residual and nodal minimum are
    /// evaluated, or set to NaN when they cannot be.
    pub fn unchecked(p: u32, branch: BranchKind, a: f64, c: f64, field: SpectralField) -> Self {
        let res = residual(&field, c, p).map(|r| r.norm()).unwrap_or(f64::NAN);
        let nodal_min = nodal_minimum(&field).unwrap_or(f64::NAN);
        Self {
            p,
            sector: field.sector(),
            branch,
            a,
            c,
            n: field.truncation(),
            field,
            residual: res,
            nodal_min,
            newton_history: Vec::new(),
        }
    }

    /// Order-3 expansion where available, otherwise order 2.
    pub fn from_stokes(p: u32, branch: BranchKind, a: f64, n: usize) -> Result<Self> {
        let w = stokes_wave(p, branch, a, max_supported_order(p), n)?;
        Ok(Self::unchecked(p, branch, a, w.c, w.field))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NewtonOptions {
    /// Convergence when `‖R‖ ≤ tol · max(1, ‖φ‖)`.
    pub tol: f64,
    pub max_iterations: usize,
    pub execution: Execution,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iterations: 30, execution: Execution::Sequential }
    }
}

fn generator_row(branch: BranchKind, sector: Sector, n: usize) -> DVector<f64> {
    let g = branch.generator(n);
    debug_assert_eq!(g.sector(), sector);
    let coords = g.to_coords();
    let nsq = coords.norm_squared();
    coords / nsq
}

/// Solves `{R(φ, c) = 0, amplitude(φ) = a}` starting from `guess`, with `a`
/// held at `guess.a`.
pub fn newton_solve_fixed_amplitude(guess: &WaveBranchPoint, opts: &NewtonOptions) -> Result<WaveBranchPoint> {
    let (p, sector, n, branch, a) = (guess.p, guess.sector, guess.n, guess.branch, guess.a);
    if branch.sector() != sector {
        return Err(Error::Incompatible(format!("branch {branch} lives in the {} sector", branch.sector())));
    }
    let row = generator_row(branch, sector, n);
    let dim = sector.dim(n);
    let mut field = guess.field.clone();
    let mut c = guess.c;
    let mut history = Vec::new();
    for iteration in 0..=opts.max_iterations {
        let r = residual(&field, c, p)?;
        let rn = r.norm();
        history.push(rn);
        let amp_defect = a - branch.amplitude_of(&field);
        let converged = rn <= opts.tol * field.norm().max(1.0) && amp_defect.abs() <= 1e-13 * a.abs().max(1.0);
        if converged {
            let nodal_min = nodal_minimum(&field)?;
            return Ok(WaveBranchPoint { p, sector, branch, a, c, field, residual: rn, n, nodal_min, newton_history: history });
        }
        if iteration == opts.max_iterations {
            return Err(Error::NoConvergence { iterations: iteration, residual: rn });
        }
        let l1 = schrodinger_operator(OperatorKind::L1, &field, c, p, (p + 1) as f64, opts.execution)?;
        let phi = field.to_coords();
        let mut jac = DMatrix::zeros(dim + 1, dim + 1);
        jac.view_mut((0, 0), (dim, dim)).copy_from(&l1.entries);
        jac.view_mut((0, dim), (dim, 1)).copy_from(&phi);
        jac.view_mut((dim, 0), (1, dim)).copy_from(&row.transpose());
        let mut rhs = DVector::zeros(dim + 1);
        rhs.rows_mut(0, dim).copy_from(&(-r.to_coords()));
        rhs[dim] = amp_defect;
        let delta = jac.lu().solve(&rhs).ok_or(Error::ContinuationBreakdown { a })?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::ContinuationBreakdown { a });
        }
        let mut x = phi;
        x += delta.rows(0, dim);
        field = SpectralField::from_coords(sector, n, &x)?;
        c += delta[dim];
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Branch {
    pub p: u32,
    pub sector: Sector,
    pub branch: BranchKind,
    pub n: usize,
    pub newton_tol: f64,
    pub points: Vec<WaveBranchPoint>,
}

/// A branch together with the reason it stopped early, if it did.
#[derive(Debug)]
pub struct ContinuationOutcome {
    pub branch: Branch,
    pub failure: Option<Error>,
    pub hint: Option<String>,
}

impl ContinuationOutcome {
    pub fn into_result(self) -> Result<Branch> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self.branch),
        }
    }
}

/// The `i`-th of `steps` equally spaced amplitudes in `[a_start, a_end]`.
pub fn amplitude_ladder(a_start: f64, a_end: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![a_start];
    }
    let h = (a_end - a_start) / (steps - 1) as f64;
    (0..steps).map(|i| if i + 1 == steps { a_end } else { a_start + h * i as f64 }).collect()
}

/// Marches the amplitude over `steps` equally spaced values from `a_start`
/// to `a_end` (both included). The first guess is the Stokes expansion,
/// later guesses extrapolate linearly from the last two points.
pub fn continue_branch(
    p: u32,
    branch: BranchKind,
    a_start: f64,
    a_end: f64,
    steps: usize,
    n: usize,
    opts: &NewtonOptions,
) -> Result<ContinuationOutcome> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must be positive".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if !(a_start.is_finite() && a_end.is_finite()) || a_end < a_start {
        return Err(Error::InvalidParameter(format!("amplitude range must be ordered, got {a_start} > {a_end}")));
    }
    let mut out = Branch { p, sector: branch.sector(), branch, n, newton_tol: opts.tol, points: Vec::with_capacity(steps) };
    for a in amplitude_ladder(a_start, a_end, steps) {
        let guess = match out.points.as_slice() {
            [] => WaveBranchPoint::from_stokes(p, branch, a, n)?,
            [.., prev, last] => {
                let t = (a - last.a) / (last.a - prev.a);
                let field = last.field.axpy(t, &last.field.sub(&prev.field)?)?;
                WaveBranchPoint::unchecked(p, branch, a, last.c + t * (last.c - prev.c), field)
            }
            [last] => {
                let field = last.field.axpy(a - last.a, &branch.generator(n))?;
                WaveBranchPoint::unchecked(p, branch, a, last.c, field)
            }
        };
        match newton_solve_fixed_amplitude(&guess, opts) {
            Ok(pt) => out.points.push(pt),
            Err(e) => {
                let hint = format!("continuation stopped at a = {a}; retry with more steps (smaller amplitude increments)");
                log::warn!("{hint}: {e}");
                return Ok(ContinuationOutcome { branch: out, failure: Some(e), hint: Some(hint) });
            }
        }
    }
    Ok(ContinuationOutcome { branch: out, failure: None, hint: None })
}

/// Derivative weights of the quadratic interpolant through `xs` at `x`.
fn lagrange_derivative_weights(xs: [f64; 3], x: f64) -> [f64; 3] {
    let mut w = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        w[i] = ((x - xs[j]) + (x - xs[k])) / ((xs[i] - xs[j]) * (xs[i] - xs[k]));
    }
    w
}

/// `dφ/dc` at `branch.points[index]`, from the quadratic interpolant in `c`
/// through three neighbouring points (centred in the interior, one-sided at
/// either end; two-point difference for a branch of two points).
pub fn d_phi_dc(branch: &Branch, index: usize) -> Result<SpectralField> {
    let pts = &branch.points;
    if index >= pts.len() {
        return Err(Error::DerivativeUnavailable(format!("index {index} outside branch of {} points", pts.len())));
    }
    if pts.len() < 2 {
        return Err(Error::DerivativeUnavailable("need at least two points".into()));
    }
    let degenerate = |dc: f64| {
        (dc.abs() < 1e-14).then(|| Error::DerivativeUnavailable(format!("frequency spacing {dc:.3e} too small")))
    };
    if pts.len() == 2 {
        let dc = pts[1].c - pts[0].c;
        if let Some(e) = degenerate(dc) {
            return Err(e);
        }
        return Ok(pts[1].field.sub(&pts[0].field)?.scale(1.0 / dc));
    }
    let start = index.saturating_sub(1).min(pts.len() - 3);
    let trio = [&pts[start], &pts[start + 1], &pts[start + 2]];
    for (u, v) in [(0, 1), (1, 2), (0, 2)] {
        if let Some(e) = degenerate(trio[v].c - trio[u].c) {
            return Err(e);
        }
    }
    let w = lagrange_derivative_weights([trio[0].c, trio[1].c, trio[2].c], pts[index].c);
    trio[0].field.scale(w[0]).axpy(w[1], &trio[1].field)?.axpy(w[2], &trio[2].field)
}
