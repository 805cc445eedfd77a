//! Small-amplitude (Stokes) expansions of the stationary equation
//! `−Δφ + cφ − φ^{p+1} = 0` bifurcating from the constant state.
//!
//! With `c₀ = (k² + j²)/p` for the generator mode and `φ₀ = c₀^{1/p}`, the
//! expansion `φ = φ₀ + aφ₁ + a²φ₂ + a³φ₃`, `c = c₀ + c₂a²` obeys
//!
//! ```text
//! (−Δ − p c₀) φ₁ = 0
//! (−Δ − p c₀) φ₂ = −c₂ φ₀ + C(p+1,2) φ₀^{p−1} φ₁²
//! (−Δ − p c₀) φ₃ = −c₂ φ₁ + p(p+1) φ₀^{p−1} φ₁ φ₂ + C(p+1,3) φ₀^{p−2} φ₁³
//! ```
//!
//! `c₂` is fixed by requiring the third right-hand side to be orthogonal to
//! the generator. Nothing here uses a closed form for `c₂`.

use serde::{Deserialize, Serialize};

use crate::continuation::residual;
use crate::error::{Error, Result};
use crate::spectral::{
    basis, coeff_to_nodal, field_power, field_product, inner_product, ModeKind, Sector,
    SpectralField, TorusGrid,
};

/// Which kernel direction of the linearization at the constant state the
/// branch bifurcates along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    /// `cos x cos y`, S sector, bifurcates at `c₀ = 2/p`.
    Ss,
    /// `cos(x + y)`, E sector, `c₀ = 2/p`.
    Eplus,
    /// `cos(x − y)`, E sector, `c₀ = 2/p`.
    Eminus,
    /// `cos x + cos y`, S sector, `c₀ = 1/p`.
    Cross,
}

impl BranchKind {
    pub const ALL: [BranchKind; 4] =
        [BranchKind::Ss, BranchKind::Eplus, BranchKind::Eminus, BranchKind::Cross];

    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Ss => "ss",
            BranchKind::Eplus => "eplus",
            BranchKind::Eminus => "eminus",
            BranchKind::Cross => "cross",
        }
    }

    pub fn sector(self) -> Sector {
        match self {
            BranchKind::Ss | BranchKind::Cross => Sector::S,
            BranchKind::Eplus | BranchKind::Eminus => Sector::E,
        }
    }

    /// `k² + j²` of the generator.
    pub fn wavenumber_sq(self) -> f64 {
        match self {
            BranchKind::Cross => 1.0,
            _ => 2.0,
        }
    }

    pub fn bifurcation_frequency(self, p: u32) -> f64 {
        self.wavenumber_sq() / p as f64
    }

    /// Unit-amplitude generator at truncation `n ≥ 1`.
    pub fn generator(self, n: usize) -> SpectralField {
        let mut g = SpectralField::zeros(self.sector(), n);
        let set = |g: &mut SpectralField, kind, k, j, v| {
            g.set(crate::spectral::BasisMode { kind, k, j }, v).expect("generator fits truncation")
        };
        match self {
            BranchKind::Ss => set(&mut g, ModeKind::Cc, 1, 1, 1.0),
            BranchKind::Cross => {
                set(&mut g, ModeKind::Cc, 1, 0, 1.0);
                set(&mut g, ModeKind::Cc, 0, 1, 1.0);
            }
            BranchKind::Eplus => {
                set(&mut g, ModeKind::Cc, 1, 1, 1.0);
                set(&mut g, ModeKind::Ss, 1, 1, -1.0);
            }
            BranchKind::Eminus => {
                set(&mut g, ModeKind::Cc, 1, 1, 1.0);
                set(&mut g, ModeKind::Ss, 1, 1, 1.0);
            }
        }
        g
    }

    /// Projection coefficient of `field` on the generator.
    pub fn amplitude_of(self, field: &SpectralField) -> f64 {
        match self {
            BranchKind::Ss => field.cc(1, 1),
            BranchKind::Cross => 0.5 * (field.cc(1, 0) + field.cc(0, 1)),
            BranchKind::Eplus => 0.5 * (field.cc(1, 1) - field.ss(1, 1)),
            BranchKind::Eminus => 0.5 * (field.cc(1, 1) + field.ss(1, 1)),
        }
    }
}

impl std::fmt::Display for BranchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BranchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(BranchKind::Ss),
            "eplus" | "e+" => Ok(BranchKind::Eplus),
            "eminus" | "e-" => Ok(BranchKind::Eminus),
            "cross" => Ok(BranchKind::Cross),
            other => Err(Error::InvalidParameter(format!("unknown branch '{other}'"))),
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Solves `(−Δ − shift) u = rhs` mode by mode. Kernel modes of the operator
/// must carry no right-hand side (beyond `1e−12` relative) and get a zero
/// coefficient.
fn solve_shifted_helmholtz(rhs: &SpectralField, shift: f64) -> Result<SpectralField> {
    let scale = rhs.max_abs_coefficient().max(1.0);
    let mut out = SpectralField::zeros(rhs.sector(), rhs.truncation());
    for m in basis(rhs.sector(), rhs.truncation()) {
        let symbol = m.wavenumber_sq() - shift;
        let r = rhs.get(m);
        if symbol.abs() < 1e-12 {
            if r.abs() > 1e-12 * scale {
                return Err(Error::Degenerate(format!(
                    "right-hand side has component {r:.3e} on kernel mode ({}, {})",
                    m.k, m.j
                )));
            }
            continue;
        }
        out.set(m, r / symbol)?;
    }
    Ok(out)
}

/// Expansion terms for one branch at truncation `n`.
#[derive(Debug, Clone)]
pub struct StokesTerms {
    pub p: u32,
    pub branch: BranchKind,
    pub c0: f64,
    pub phi0: f64,
    pub c2: f64,
    pub phi1: SpectralField,
    pub phi2: SpectralField,
    pub phi3: SpectralField,
}

struct Recurrence {
    p: u32,
    c0: f64,
    phi0: f64,
    phi1: SpectralField,
}

impl Recurrence {
    fn new(p: u32, branch: BranchKind, n: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("p must be a positive integer".into()));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!("truncation {n} < 3 cannot hold third-order terms")));
        }
        let c0 = branch.bifurcation_frequency(p);
        Ok(Self { p, c0, phi0: c0.powf(1.0 / p as f64), phi1: branch.generator(n) })
    }

    fn shift(&self) -> f64 {
        self.p as f64 * self.c0
    }

    fn phi2(&self, c2: f64) -> Result<SpectralField> {
        let p = self.p;
        let b2 = binomial(p + 1, 2) * self.phi0.powi(p as i32 - 1);
        let sector = self.phi1.sector();
        let n = self.phi1.truncation();
        let rhs = field_power(&self.phi1, 2)?
            .scale(b2)
            .axpy(-c2 * self.phi0, &SpectralField::constant(sector, n, 1.0))?;
        solve_shifted_helmholtz(&rhs, self.shift())
    }

    fn third_order_rhs(&self, c2: f64) -> Result<SpectralField> {
        let p = self.p;
        let phi2 = self.phi2(c2)?;
        let bpp = (p * (p + 1)) as f64 * self.phi0.powi(p as i32 - 1);
        let b3 = binomial(p + 1, 3);
        let mut rhs = field_product(&self.phi1, &phi2)?.scale(bpp).axpy(-c2, &self.phi1)?;
        if b3 != 0.0 {
            let cube = field_power(&self.phi1, 3)?;
            rhs = rhs.axpy(b3 * self.phi0.powi(p as i32 - 2), &cube)?;
        }
        Ok(rhs)
    }

    /// Fredholm solvability: the O(a³) right-hand side, affine in `c₂`,
    /// must be orthogonal to the generator.
    fn solvability_c2(&self) -> Result<f64> {
        let at0 = inner_product(&self.third_order_rhs(0.0)?, &self.phi1)?;
        let at1 = inner_product(&self.third_order_rhs(1.0)?, &self.phi1)?;
        let slope = at1 - at0;
        if slope.abs() < 1e-14 {
            return Err(Error::Degenerate("solvability condition does not determine c2".into()));
        }
        Ok(-at0 / slope)
    }
}

/// Frequency correction `c₂` of `c = c₀ + c₂a² + O(a⁴)` by projection.
pub fn solvability_c2(p: u32, branch: BranchKind) -> Result<f64> {
    Recurrence::new(p, branch, 4)?.solvability_c2()
}

/// `φ₁, φ₂, φ₃` and `c₂` at truncation `n ≥ 3`.
pub fn stokes_terms(p: u32, branch: BranchKind, n: usize) -> Result<StokesTerms> {
    let rec = Recurrence::new(p, branch, n)?;
    let c2 = rec.solvability_c2()?;
    let phi2 = rec.phi2(c2)?;
    let phi3 = solve_shifted_helmholtz(&rec.third_order_rhs(c2)?, rec.shift())?;
    Ok(StokesTerms { p, branch, c0: rec.c0, phi0: rec.phi0, c2, phi1: rec.phi1, phi2, phi3 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StokesWave {
    pub p: u32,
    pub sector: Sector,
    pub branch: BranchKind,
    pub a: f64,
    pub order: u32,
    pub field: SpectralField,
    pub c: f64,
    pub c2: f64,
    pub nodal_min: f64,
    /// `None` when the field is positive on the check grid.
    pub warning: Option<String>,
}

/// Third-order terms are only provided for `p = 1`.
pub fn max_supported_order(p: u32) -> u32 {
    if p == 1 {
        3
    } else {
        2
    }
}

/// Assembles the truncated expansion of order 2 or 3 in `a`.
pub fn stokes_wave(p: u32, branch: BranchKind, a: f64, order: u32, n: usize) -> Result<StokesWave> {
    if !(2..=3).contains(&order) {
        return Err(Error::InvalidParameter(format!("order must be 2 or 3, got {order}")));
    }
    if p >= 1 && order > max_supported_order(p) {
        return Err(Error::UnsupportedOrder { p, order });
    }
    if !a.is_finite() {
        return Err(Error::InvalidParameter("amplitude must be finite".into()));
    }
    let terms = stokes_terms(p, branch, n)?;
    let sector = branch.sector();
    let mut field = SpectralField::constant(sector, n, terms.phi0)
        .axpy(a, &terms.phi1)?
        .axpy(a * a, &terms.phi2)?;
    if order == 3 {
        field = field.axpy(a * a * a, &terms.phi3)?;
    }
    let nodal_min = nodal_minimum(&field)?;
    let warning = (nodal_min <= 0.0).then(|| {
        format!("amplitude {a} is beyond the positivity radius (nodal minimum {nodal_min:.3e})")
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(StokesWave { p, sector, branch, a, order, field, c: terms.c0 + terms.c2 * a * a, c2: terms.c2, nodal_min, warning })
}

/// Minimum over a grid twice as fine as the lossless one.
pub fn nodal_minimum(field: &SpectralField) -> Result<f64> {
    let grid = TorusGrid::new(crate::spectral::next_fast_size(4 * field.truncation() + 2))?;
    Ok(coeff_to_nodal(field, grid)?.min())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualOrderFit {
    pub amplitudes: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
}

/// Log-log slope of `‖−Δφ + cφ − φ^{p+1}‖` against `a` over nine amplitudes
/// from `1e−3` to `1e−1`.
pub fn stokes_residual_order(p: u32, branch: BranchKind, order: u32, n: usize) -> Result<ResidualOrderFit> {
    let amplitudes: Vec<f64> = (0..9).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect();
    let mut residuals = Vec::with_capacity(amplitudes.len());
    for &a in &amplitudes {
        let w = stokes_wave(p, branch, a, order, n)?;
        residuals.push(residual(&w.field, w.c, p)?.norm());
    }
    let xs: Vec<f64> = amplitudes.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ResidualOrderFit { amplitudes, residuals, slope: sxy / sxx })
}
