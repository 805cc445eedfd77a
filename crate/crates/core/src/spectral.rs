//! Real periodic functions on the torus `[0, 2π)²` in a symmetry-adapted
//! trigonometric basis.
//!
//! Two symmetry sectors are supported:
//!
//! * [`Sector::S`]: even in `x` and in `y` separately, basis
//!   `cos(kx)cos(jy)`, `k, j ≥ 0`.
//! * [`Sector::E`]: even under `(x, y) ↦ (−x, −y)`, basis
//!   `cos(kx)cos(jy)` plus `sin(kx)sin(jy)`, `k, j ≥ 1`.
//!
//! Stored coefficients multiply the plain products (no orthonormal scaling),
//! so `2 + a cos x cos y` has `cc[0,0] = 2` and `cc[1,1] = a`. Operator
//! matrices work instead in orthonormal coordinates, see
//! [`SpectralField::to_coords`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    /// `f(−x, y) = f(x, y) = f(x, −y)`
    #[serde(rename = "s", alias = "S")]
    S,
    /// `f(−x, −y) = f(x, y)`
    #[serde(rename = "e", alias = "E")]
    E,
}

impl Sector {
    pub fn name(self) -> &'static str {
        match self {
            Sector::S => "s",
            Sector::E => "e",
        }
    }

    /// Number of basis functions at truncation `n`.
    pub fn dim(self, n: usize) -> usize {
        match self {
            Sector::S => (n + 1) * (n + 1),
            Sector::E => (n + 1) * (n + 1) + n * n,
        }
    }
}

impl std::fmt::Display for Sector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" | "S" => Ok(Sector::S),
            "e" | "E" => Ok(Sector::E),
            other => Err(Error::InvalidParameter(format!("unknown sector '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    /// `cos(kx) cos(jy)`
    Cc,
    /// `sin(kx) sin(jy)`
    Ss,
}

/// One basis function; the row/column meaning of operator matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisMode {
    pub kind: ModeKind,
    pub k: usize,
    pub j: usize,
}

impl BasisMode {
    /// `∫ e² dx dy` over the torus.
    pub fn norm_sq(&self) -> f64 {
        mode_weight(self.kind, self.k, self.j)
    }

    /// Eigenvalue of `−Δ` on this mode.
    pub fn wavenumber_sq(&self) -> f64 {
        (self.k * self.k + self.j * self.j) as f64
    }
}

fn mode_weight(kind: ModeKind, k: usize, j: usize) -> f64 {
    match kind {
        ModeKind::Cc => {
            let wx = if k == 0 { 2.0 * PI } else { PI };
            let wy = if j == 0 { 2.0 * PI } else { PI };
            wx * wy
        }
        ModeKind::Ss => PI * PI,
    }
}

/// Ordered basis of a sector: all `cc` modes row-major in `(k, j)`, then the
/// `ss` modes row-major.
pub fn basis(sector: Sector, n: usize) -> Vec<BasisMode> {
    let mut out = Vec::with_capacity(sector.dim(n));
    for k in 0..=n {
        for j in 0..=n {
            out.push(BasisMode { kind: ModeKind::Cc, k, j });
        }
    }
    if sector == Sector::E {
        for k in 1..=n {
            for j in 1..=n {
                out.push(BasisMode { kind: ModeKind::Ss, k, j });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    sector: Sector,
    n: usize,
    /// `cos(kx)cos(jy)` coefficients, index `k * (n + 1) + j`.
    cc: Vec<f64>,
    /// `sin(kx)sin(jy)` coefficients, index `(k − 1) * n + (j − 1)`; empty
    /// in the S sector.
    ss: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(sector: Sector, n: usize) -> Self {
        let ss_len = if sector == Sector::E { n * n } else { 0 };
        Self { sector, n, cc: vec![0.0; (n + 1) * (n + 1)], ss: vec![0.0; ss_len] }
    }

    pub fn constant(sector: Sector, n: usize, value: f64) -> Self {
        let mut f = Self::zeros(sector, n);
        f.cc[0] = value;
        f
    }

    /// Single basis function scaled by `value`.
    pub fn mode(sector: Sector, n: usize, mode: BasisMode, value: f64) -> Result<Self> {
        let mut f = Self::zeros(sector, n);
        f.set(mode, value)?;
        Ok(f)
    }

    pub fn from_parts(sector: Sector, n: usize, cc: Vec<f64>, ss: Vec<f64>) -> Result<Self> {
        let ss_len = if sector == Sector::E { n * n } else { 0 };
        if cc.len() != (n + 1) * (n + 1) {
            return Err(Error::Incompatible(format!(
                "cc block has {} entries, expected {}",
                cc.len(),
                (n + 1) * (n + 1)
            )));
        }
        // an all-zero or missing ss block is accepted for S
        let ss = if sector == Sector::S {
            if ss.iter().any(|v| *v != 0.0) {
                return Err(Error::Incompatible("S-sector field with non-zero ss block".into()));
            }
            Vec::new()
        } else {
            ss
        };
        if ss.len() != ss_len {
            return Err(Error::Incompatible(format!(
                "ss block has {} entries, expected {ss_len}",
                ss.len()
            )));
        }
        if cc.iter().chain(ss.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NumericRange("field coefficients"));
        }
        Ok(Self { sector, n, cc, ss })
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn truncation(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.sector.dim(self.n)
    }

    pub fn cc_block(&self) -> &[f64] {
        &self.cc
    }

    pub fn ss_block(&self) -> &[f64] {
        &self.ss
    }

    pub fn cc(&self, k: usize, j: usize) -> f64 {
        if k > self.n || j > self.n {
            return 0.0;
        }
        self.cc[k * (self.n + 1) + j]
    }

    pub fn ss(&self, k: usize, j: usize) -> f64 {
        if self.sector == Sector::S || k == 0 || j == 0 || k > self.n || j > self.n {
            return 0.0;
        }
        self.ss[(k - 1) * self.n + (j - 1)]
    }

    pub fn get(&self, mode: BasisMode) -> f64 {
        match mode.kind {
            ModeKind::Cc => self.cc(mode.k, mode.j),
            ModeKind::Ss => self.ss(mode.k, mode.j),
        }
    }

    pub fn set(&mut self, mode: BasisMode, value: f64) -> Result<()> {
        if mode.k > self.n || mode.j > self.n {
            return Err(Error::InvalidParameter(format!(
                "mode ({}, {}) outside truncation {}",
                mode.k, mode.j, self.n
            )));
        }
        match mode.kind {
            ModeKind::Cc => self.cc[mode.k * (self.n + 1) + mode.j] = value,
            ModeKind::Ss => {
                if self.sector == Sector::S || mode.k == 0 || mode.j == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "sin({}x)sin({}y) is not a basis function of sector {}",
                        mode.k, mode.j, self.sector
                    )));
                }
                self.ss[(mode.k - 1) * self.n + (mode.j - 1)] = value;
            }
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.sector != other.sector || self.n != other.n {
            return Err(Error::Incompatible(format!(
                "sector {} / N = {} vs sector {} / N = {}",
                self.sector, self.n, other.sector, other.n
            )));
        }
        Ok(())
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.cc.iter_mut().zip(&other.cc).for_each(|(a, b)| *a += alpha * b);
        out.ss.iter_mut().zip(&other.ss).for_each(|(a, b)| *a += alpha * b);
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.cc.iter_mut().for_each(|v| *v *= s);
        out.ss.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).expect("field is compatible with itself").max(0.0).sqrt()
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.cc.iter().chain(&self.ss).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.cc.iter().chain(&self.ss).all(|v| v.is_finite())
    }

    /// Pad with zeros or drop modes above `n`.
    pub fn resized(&self, n: usize) -> Self {
        let mut out = Self::zeros(self.sector, n);
        let m = n.min(self.n);
        for k in 0..=m {
            for j in 0..=m {
                out.cc[k * (n + 1) + j] = self.cc(k, j);
            }
        }
        if self.sector == Sector::E {
            for k in 1..=m {
                for j in 1..=m {
                    out.ss[(k - 1) * n + (j - 1)] = self.ss(k, j);
                }
            }
        }
        out
    }

    /// Lossless embedding of an S-sector field into the E sector.
    pub fn to_e_sector(&self) -> Self {
        if self.sector == Sector::E {
            return self.clone();
        }
        Self { sector: Sector::E, n: self.n, cc: self.cc.clone(), ss: vec![0.0; self.n * self.n] }
    }

    /// `f(x, y) ↦ f(y, x)`
    pub fn swap_xy(&self) -> Self {
        let mut out = self.clone();
        for k in 0..=self.n {
            for j in 0..=self.n {
                out.cc[k * (self.n + 1) + j] = self.cc(j, k);
            }
        }
        if self.sector == Sector::E {
            for k in 1..=self.n {
                for j in 1..=self.n {
                    out.ss[(k - 1) * self.n + (j - 1)] = self.ss(j, k);
                }
            }
        }
        out
    }

    /// `f(x, y) ↦ f(x, −y)`; the identity on the S sector.
    pub fn reflect_y(&self) -> Self {
        let mut out = self.clone();
        out.ss.iter_mut().for_each(|v| *v = -*v);
        out
    }

    /// Half-period shifts `f(x + π, y)` and/or `f(x, y + π)`; both preserve
    /// each sector.
    pub fn shift_half(&self, in_x: bool, in_y: bool) -> Self {
        let sign = |k: usize, j: usize| {
            let mut s = 1.0;
            if in_x && k % 2 == 1 {
                s = -s;
            }
            if in_y && j % 2 == 1 {
                s = -s;
            }
            s
        };
        let mut out = self.clone();
        for k in 0..=self.n {
            for j in 0..=self.n {
                out.cc[k * (self.n + 1) + j] *= sign(k, j);
            }
        }
        if self.sector == Sector::E {
            for k in 1..=self.n {
                for j in 1..=self.n {
                    out.ss[(k - 1) * self.n + (j - 1)] *= sign(k, j);
                }
            }
        }
        out
    }

    /// Point evaluation of the trigonometric polynomial.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..=self.n {
            let cx = (k as f64 * x).cos();
            for j in 0..=self.n {
                s += self.cc(k, j) * cx * (j as f64 * y).cos();
            }
        }
        if self.sector == Sector::E {
            for k in 1..=self.n {
                let sx = (k as f64 * x).sin();
                for j in 1..=self.n {
                    s += self.ss(k, j) * sx * (j as f64 * y).sin();
                }
            }
        }
        s
    }

    /// Coordinates in the orthonormal basis `e / ‖e‖`, ordered as
    /// [`basis`]. The Euclidean dot product of coordinates is the L²
    /// inner product.
    pub fn to_coords(&self) -> DVector<f64> {
        let modes = basis(self.sector, self.n);
        DVector::from_iterator(modes.len(), modes.iter().map(|m| self.get(*m) * m.norm_sq().sqrt()))
    }

    pub fn from_coords(sector: Sector, n: usize, coords: &DVector<f64>) -> Result<Self> {
        let modes = basis(sector, n);
        if coords.len() != modes.len() {
            return Err(Error::Incompatible(format!(
                "{} coordinates for a basis of size {}",
                coords.len(),
                modes.len()
            )));
        }
        let mut f = Self::zeros(sector, n);
        for (m, v) in modes.iter().zip(coords.iter()) {
            f.set(*m, v / m.norm_sq().sqrt())?;
        }
        Ok(f)
    }
}

/// L² inner product `∫ f h dx dy` via Parseval.
pub fn inner_product(f: &SpectralField, h: &SpectralField) -> Result<f64> {
    f.check_compatible(h)?;
    let n = f.n;
    let mut s = 0.0;
    for k in 0..=n {
        for j in 0..=n {
            s += mode_weight(ModeKind::Cc, k, j) * f.cc[k * (n + 1) + j] * h.cc[k * (n + 1) + j];
        }
    }
    s += PI * PI * f.ss.iter().zip(&h.ss).map(|(a, b)| a * b).sum::<f64>();
    Ok(s)
}

/// `Δf`: coefficient `(k, j)` multiplied by `−(k² + j²)`.
pub fn laplacian_apply(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    let n = f.n;
    for k in 0..=n {
        for j in 0..=n {
            out.cc[k * (n + 1) + j] *= -((k * k + j * j) as f64);
        }
    }
    if f.sector == Sector::E {
        for k in 1..=n {
            for j in 1..=n {
                out.ss[(k - 1) * n + (j - 1)] *= -((k * k + j * j) as f64);
            }
        }
    }
    out
}

/// Uniform grid `x_m = 2πm/M`, the same in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    m: usize,
}

impl TorusGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        Ok(Self { m })
    }

    /// Smallest transform-friendly grid representing truncation `n`
    /// losslessly (`M ≥ 2N + 1`).
    pub fn for_truncation(n: usize) -> Self {
        Self { m: next_fast_size(2 * n + 1) }
    }

    /// Grid on which the Galerkin projection of a degree-`q` product of
    /// truncation-`n` fields back onto truncation `n` is exact:
    /// `M ≥ (q + 1)N + 1`, rounded up to a 2-3-5 smooth size.
    pub fn alias_free(n: usize, q: usize) -> Self {
        Self { m: next_fast_size(((q + 1) * n + 1).max(2 * n + 1)) }
    }

    pub fn points(&self) -> usize {
        self.m
    }

    pub fn node(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.m as f64
    }
}

/// Smallest integer `≥ x` with no prime factors other than 2, 3 and 5.
pub fn next_fast_size(x: usize) -> usize {
    let mut m = x.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Real nodal values on an `M × M` grid, row-major with `x` as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalValues {
    pub grid: TorusGrid,
    pub values: DMatrix<f64>,
}

impl NodalValues {
    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = grid.points();
        let values = DMatrix::from_fn(m, m, |i, j| f(grid.node(i), grid.node(j)));
        Self { grid, values }
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Trapezoidal (spectrally exact) quadrature of the nodal values.
    pub fn integral(&self) -> f64 {
        let h = 2.0 * PI / self.grid.points() as f64;
        self.values.sum() * h * h
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.map(f) }
    }
}

/// `M × (n+1)` table of `cos(k x_i)` using exact integer phase reduction.
pub(crate) fn cos_table(m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n + 1, |i, k| (2.0 * PI * ((i * k) % m) as f64 / m as f64).cos())
}

/// `M × n` table of `sin(k x_i)` for `k = 1..=n`.
pub(crate) fn sin_table(m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |i, k| (2.0 * PI * ((i * (k + 1)) % m) as f64 / m as f64).sin())
}

fn cc_matrix(f: &SpectralField) -> DMatrix<f64> {
    DMatrix::from_row_slice(f.n + 1, f.n + 1, &f.cc)
}

fn ss_matrix(f: &SpectralField) -> DMatrix<f64> {
    DMatrix::from_row_slice(f.n, f.n, &f.ss)
}

/// Exact evaluation of `f` at every node of `grid`.
pub fn coeff_to_nodal(f: &SpectralField, grid: TorusGrid) -> Result<NodalValues> {
    let m = grid.points();
    if m < 2 * f.n + 1 {
        return Err(Error::Resolution { m, n: f.n, required: 2 * f.n + 1 });
    }
    let c = cos_table(m, f.n);
    let mut values = &c * cc_matrix(f) * c.transpose();
    if f.sector == Sector::E && f.n > 0 {
        let s = sin_table(m, f.n);
        values += &s * ss_matrix(f) * s.transpose();
    }
    Ok(NodalValues { grid, values })
}

fn max_asymmetry(values: &DMatrix<f64>, sector: Sector) -> f64 {
    let m = values.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let ri = (m - i) % m;
        for j in 0..m {
            let rj = (m - j) % m;
            let v = values[(i, j)];
            match sector {
                Sector::S => {
                    worst = worst.max((v - values[(ri, j)]).abs()).max((v - values[(i, rj)]).abs());
                }
                Sector::E => worst = worst.max((v - values[(ri, rj)]).abs()),
            }
        }
    }
    worst
}

/// Quadrature projection onto the truncated basis of `sector`; exact when
/// the samples come from a truncation-`n` polynomial.
pub fn nodal_to_coeff(values: &NodalValues, sector: Sector, n: usize) -> Result<SpectralField> {
    let m = values.grid.points();
    if m < 2 * n + 1 {
        return Err(Error::Resolution { m, n, required: 2 * n + 1 });
    }
    let scale = values.values.amax().max(1.0);
    let asym = max_asymmetry(&values.values, sector);
    if asym > 1e-10 * scale {
        return Err(Error::SectorMismatch { sector: sector.name(), asymmetry: asym });
    }
    Ok(project_unchecked(&values.values, sector, n))
}

pub(crate) fn project_unchecked(values: &DMatrix<f64>, sector: Sector, n: usize) -> SpectralField {
    let m = values.nrows();
    let c = cos_table(m, n);
    let mut cc = c.transpose() * values * &c;
    let inv = 1.0 / (m * m) as f64;
    for k in 0..=n {
        for j in 0..=n {
            let wk = if k == 0 { 1.0 } else { 2.0 };
            let wj = if j == 0 { 1.0 } else { 2.0 };
            cc[(k, j)] *= wk * wj * inv;
        }
    }
    let mut out = SpectralField::zeros(sector, n);
    for k in 0..=n {
        for j in 0..=n {
            out.cc[k * (n + 1) + j] = cc[(k, j)];
        }
    }
    if sector == Sector::E && n > 0 {
        let s = sin_table(m, n);
        let ss = s.transpose() * values * &s;
        for k in 0..n {
            for j in 0..n {
                out.ss[k * n + j] = 4.0 * inv * ss[(k, j)];
            }
        }
    }
    out
}

/// Galerkin truncation of `f^q` back onto the truncation of `f`, computed
/// on an alias-free grid.
pub fn field_power(f: &SpectralField, q: u32) -> Result<SpectralField> {
    if q == 0 {
        return Err(Error::InvalidParameter("power must be positive".into()));
    }
    if q == 1 {
        return Ok(f.clone());
    }
    let grid = TorusGrid::alias_free(f.n, q as usize);
    let nodal = coeff_to_nodal(f, grid)?;
    let powered = nodal.values.map(|v| v.powi(q as i32));
    if powered.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericRange("field_power"));
    }
    Ok(project_unchecked(&powered, f.sector, f.n))
}

/// Galerkin truncation of the pointwise product `f g`.
pub fn field_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_compatible(g)?;
    let grid = TorusGrid::alias_free(f.n, 2);
    let a = coeff_to_nodal(f, grid)?;
    let b = coeff_to_nodal(g, grid)?;
    let prod = a.values.component_mul(&b.values);
    if prod.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericRange("field_product"));
    }
    Ok(project_unchecked(&prod, f.sector, f.n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cc_mode(k: usize, j: usize) -> BasisMode {
        BasisMode { kind: ModeKind::Cc, k, j }
    }

    fn random_field(sector: Sector, n: usize, seed: u64) -> SpectralField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = SpectralField::zeros(sector, n);
        for m in basis(sector, n) {
            f.set(m, rng.random_range(-1.0..1.0)).unwrap();
        }
        f
    }

    #[test]
    fn constant_evaluates_everywhere() {
        let f = SpectralField::constant(Sector::S, 4, 1.0);
        let nodal = coeff_to_nodal(&f, TorusGrid::new(11).unwrap()).unwrap();
        assert!(nodal.values.iter().all(|v| (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn cos_cos_at_special_nodes() {
        let f = SpectralField::mode(Sector::S, 2, cc_mode(1, 1), 1.0).unwrap();
        let nodal = coeff_to_nodal(&f, TorusGrid::new(8).unwrap()).unwrap();
        assert_abs_diff_eq!(nodal.values[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nodal.values[(4, 4)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nodal.values[(2, 2)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let f = SpectralField::zeros(Sector::S, 8);
        assert!(matches!(
            coeff_to_nodal(&f, TorusGrid::new(16).unwrap()),
            Err(Error::Resolution { required: 17, .. })
        ));
    }

    #[test]
    fn projection_of_simple_nodal_data() {
        let grid = TorusGrid::new(16).unwrap();
        let two = NodalValues::from_fn(grid, |_, _| 2.0);
        let f = nodal_to_coeff(&two, Sector::S, 4).unwrap();
        assert_abs_diff_eq!(f.cc(0, 0), 2.0, epsilon = 1e-15);
        assert!(f.max_abs_coefficient() - 2.0 < 1e-15);

        let c22 = NodalValues::from_fn(grid, |x, y| (2.0 * x).cos() * (2.0 * y).cos());
        let f = nodal_to_coeff(&c22, Sector::S, 4).unwrap();
        assert_abs_diff_eq!(f.cc(2, 2), 1.0, epsilon = 1e-14);
        assert!(f.sub(&SpectralField::mode(Sector::S, 4, cc_mode(2, 2), 1.0).unwrap()).unwrap().max_abs_coefficient() < 1e-14);
    }

    #[test]
    fn sin_sin_is_not_in_the_s_sector() {
        let grid = TorusGrid::new(16).unwrap();
        let v = NodalValues::from_fn(grid, |x, y| x.sin() * y.sin());
        assert!(matches!(nodal_to_coeff(&v, Sector::S, 4), Err(Error::SectorMismatch { .. })));
        let f = nodal_to_coeff(&v, Sector::E, 4).unwrap();
        assert_abs_diff_eq!(f.ss(1, 1), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn laplacian_symbols() {
        let n = 4;
        assert_eq!(laplacian_apply(&SpectralField::constant(Sector::S, n, 3.0)).max_abs_coefficient(), 0.0);
        let f = SpectralField::mode(Sector::S, n, cc_mode(1, 1), 1.0).unwrap();
        assert_eq!(laplacian_apply(&f).cc(1, 1), -2.0);
        let f = SpectralField::mode(Sector::S, n, cc_mode(3, 1), 1.0).unwrap();
        assert_eq!(laplacian_apply(&f).cc(3, 1), -10.0);
    }

    #[test]
    fn powers_of_simple_fields() {
        let two = SpectralField::constant(Sector::S, 3, 2.0);
        let sq = field_power(&two, 2).unwrap();
        assert_abs_diff_eq!(sq.cc(0, 0), 4.0, epsilon = 1e-14);

        let f = SpectralField::mode(Sector::S, 2, cc_mode(1, 1), 1.0).unwrap();
        let sq = field_power(&f, 2).unwrap();
        for (k, j) in [(0, 0), (2, 0), (0, 2), (2, 2)] {
            assert_abs_diff_eq!(sq.cc(k, j), 0.25, epsilon = 1e-15);
        }
        let others: f64 = basis(Sector::S, 2)
            .iter()
            .filter(|m| !matches!((m.k, m.j), (0, 0) | (2, 0) | (0, 2) | (2, 2)))
            .map(|m| sq.get(*m).abs())
            .sum();
        assert!(others < 1e-15);

        let f1 = SpectralField::mode(Sector::S, 1, cc_mode(1, 1), 1.0).unwrap();
        let sq = field_power(&f1, 2).unwrap();
        assert_abs_diff_eq!(sq.cc(0, 0), 0.25, epsilon = 1e-15);
        assert!(sq.cc(1, 1).abs() < 1e-15 && sq.cc(1, 0).abs() < 1e-15);
    }

    #[test]
    fn square_matches_quadrature_oracle() {
        // independent oracle: brute-force midpoint quadrature on a fine grid
        let f = SpectralField::mode(Sector::S, 2, cc_mode(1, 1), 1.0).unwrap();
        let sq = field_power(&f, 2).unwrap();
        let k = 200;
        let h = 2.0 * PI / k as f64;
        for (a, b) in [(0usize, 0usize), (2, 0), (2, 2)] {
            let mut acc = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                    let v = (x.cos() * y.cos()).powi(2);
                    acc += v * (a as f64 * x).cos() * (b as f64 * y).cos() * h * h;
                }
            }
            let coeff = acc / mode_weight(ModeKind::Cc, a, b);
            assert_abs_diff_eq!(sq.cc(a, b), coeff, epsilon = 1e-12);
        }
    }

    #[test]
    fn inner_products() {
        let n = 3;
        let one = SpectralField::constant(Sector::S, n, 1.0);
        assert_abs_diff_eq!(inner_product(&one, &one).unwrap(), 4.0 * PI * PI, epsilon = 1e-12);
        let a = SpectralField::mode(Sector::S, n, cc_mode(1, 1), 1.0).unwrap();
        let b = SpectralField::mode(Sector::S, n, cc_mode(2, 2), 1.0).unwrap();
        assert_abs_diff_eq!(inner_product(&a, &a).unwrap(), PI * PI, epsilon = 1e-12);
        assert_eq!(inner_product(&a, &b).unwrap(), 0.0);
        let e = SpectralField::zeros(Sector::E, n);
        assert!(inner_product(&a, &e).is_err());
    }

    #[test]
    fn power_one_is_identity() {
        let f = random_field(Sector::E, 5, 3);
        assert_eq!(field_power(&f, 1).unwrap(), f);
    }

    #[test]
    fn s_embeds_losslessly_into_e() {
        let f = random_field(Sector::S, 4, 9);
        let e = f.to_e_sector();
        let grid = TorusGrid::new(12).unwrap();
        let a = coeff_to_nodal(&f, grid).unwrap();
        let b = coeff_to_nodal(&e, grid).unwrap();
        assert!((a.values - b.values).amax() < 1e-14);
    }

    #[test]
    fn round_trip_n8_m32() {
        for sector in [Sector::S, Sector::E] {
            let f = random_field(sector, 8, 17);
            let nodal = coeff_to_nodal(&f, TorusGrid::new(32).unwrap()).unwrap();
            let back = nodal_to_coeff(&nodal, sector, 8).unwrap();
            assert!(back.sub(&f).unwrap().max_abs_coefficient() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip_is_identity(n in 0usize..=32, extra in 0usize..8, seed in any::<u64>(), e in any::<bool>()) {
            let sector = if e { Sector::E } else { Sector::S };
            let f = random_field(sector, n, seed);
            let grid = TorusGrid::new(2 * n + 1 + extra).unwrap();
            let back = nodal_to_coeff(&coeff_to_nodal(&f, grid).unwrap(), sector, n).unwrap();
            prop_assert!(back.sub(&f).unwrap().max_abs_coefficient() < 1e-12);
        }

        #[test]
        fn parseval_matches_nodal_quadrature(n in 1usize..=12, seed in any::<u64>(), e in any::<bool>()) {
            let sector = if e { Sector::E } else { Sector::S };
            let f = random_field(sector, n, seed);
            let h = random_field(sector, n, seed.wrapping_add(1));
            let grid = TorusGrid::alias_free(n, 2);
            let prod = coeff_to_nodal(&f, grid).unwrap().values.component_mul(&coeff_to_nodal(&h, grid).unwrap().values);
            let step = 2.0 * PI / grid.points() as f64;
            let quad = prod.sum() * step * step;
            let ip = inner_product(&f, &h).unwrap();
            prop_assert!((quad - ip).abs() < 1e-11 * (1.0 + ip.abs()));
        }

        #[test]
        fn laplacian_is_symmetric(n in 1usize..=16, seed in any::<u64>()) {
            let f = random_field(Sector::E, n, seed);
            let h = random_field(Sector::E, n, seed ^ 0xdead);
            let lhs = inner_product(&laplacian_apply(&f), &h).unwrap();
            let rhs = inner_product(&f, &laplacian_apply(&h)).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
        }
    }
}
