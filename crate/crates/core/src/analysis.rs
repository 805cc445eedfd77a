//! Per-point stability pipeline: operator spectra, Krein index, direct `JL`
//! spectrum, their cross-check, and a comparison against the published
//! small-amplitude claims.

use serde::{Deserialize, Serialize};

use crate::continuation::WaveBranchPoint;
use crate::error::Result;
use crate::jl::{
    assemble_jl, classify_spectrum, eigen_general, product_route_defect, verdict_crosscheck, ConsistencyRecord,
    JlSpectrumReport, JlTolerances,
};
use crate::krein::{krein_analysis, KreinReport, Verdict};
use crate::operators::{
    assemble_l, assemble_l1, assemble_l2, eig_sym_with_tolerance, quadratic_form_inverse, SpectrumCounts,
};
use crate::par::{self, Execution};
use crate::spectral::Sector;
use crate::stokes::BranchKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Absolute kernel tolerance for `L₁`, `L₂`, `L`; adaptive when absent.
    pub tau: Option<f64>,
    pub jl: JlTolerances,
    /// Parallelism inside a point (assembly). Sweeps over points use their
    /// own policy.
    pub execution: Execution,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { tau: None, jl: JlTolerances::default(), execution: Execution::Sequential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveIdentity {
    pub p: u32,
    pub sector: Sector,
    pub branch: BranchKind,
    pub a: f64,
    pub c: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub residual: f64,
    pub nodal_min: f64,
}

/// Published small-amplitude claims next to the computed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedComparison {
    /// False for branches the claims do not cover.
    pub applicable: bool,
    pub claimed_verdict: Verdict,
    pub krein_verdict_matches: bool,
    pub direct_verdict_matches: bool,
    pub claimed_n_l1: usize,
    pub n_l1_matches: bool,
    pub claimed_n_l2: usize,
    pub claimed_z_l2: usize,
    pub l2_counts_match: bool,
    pub claimed_n_v: usize,
    pub n_v_matches: bool,
    /// Claimed side of `2/p` for `c` (`+1` above).
    pub claimed_direction: i8,
    pub direction_matches: bool,
    pub quadratic_form: Option<f64>,
    pub claimed_quadratic_form: Option<f64>,
    pub quadratic_form_relative_error: Option<f64>,
    pub quadratic_form_within_20_percent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub wave: WaveIdentity,
    pub l1: SpectrumCounts,
    pub l2: SpectrumCounts,
    pub l: SpectrumCounts,
    pub l1_symmetry_defect: f64,
    pub l2_symmetry_defect: f64,
    pub l2_phi_norm: f64,
    pub krein: KreinReport,
    pub jl: JlSpectrumReport,
    /// Absent when the product spectrum could not be computed.
    pub product_route_defect: Option<f64>,
    pub consistency: ConsistencyRecord,
    pub published: PublishedComparison,
    pub options: StabilityOptions,
}

/// Leading-order `⟨L₁⁻¹φ, φ⟩` as published for each sector.
pub fn claimed_quadratic_form(p: u32, branch: BranchKind, c: f64) -> Option<f64> {
    let pf = p as f64;
    let pi2 = std::f64::consts::PI.powi(2);
    match branch {
        BranchKind::Ss => Some(-(2.0 / pf).powf(2.0 / pf) * (c + 2.0 - 2.0 / pf) * pi2),
        BranchKind::Eplus | BranchKind::Eminus if p == 1 => Some(-16.0 * c * pi2),
        BranchKind::Eplus | BranchKind::Eminus => Some(-(2.0 / pf).powf(2.0 / pf) * (c + 2.0) * pi2),
        BranchKind::Cross => None,
    }
}

pub fn analyze_point(wave: &WaveBranchPoint, opts: &StabilityOptions) -> Result<StabilityReport> {
    let l1 = assemble_l1(wave, opts.execution)?;
    let l2 = assemble_l2(wave, opts.execution)?;
    let s1 = eig_sym_with_tolerance(&l1, opts.tau)?;
    let s2 = eig_sym_with_tolerance(&l2, opts.tau)?;
    let l = assemble_l(&l1, &l2)?;
    let s = eig_sym_with_tolerance(&l, opts.tau)?;
    let phi = wave.field.to_coords();
    let l2_phi_norm = (&l2.entries * &phi).norm();
    let krein = krein_analysis((&l1, &s1), (&l2, &s2), Some(&phi))?;
    let jl_op = assemble_jl(&l1, &l2)?;
    let eig = eigen_general(&jl_op.entries)?;
    let jl = classify_spectrum(&eig, &l, &opts.jl);
    let product = product_route_defect(&l1, &l2, &eig.values);
    let consistency = verdict_crosscheck(&jl, &krein);

    let quadratic_form = quadratic_form_inverse(&l1, &s1, &phi).ok();
    let claimed = claimed_quadratic_form(wave.p, wave.branch, wave.c);
    let rel = match (quadratic_form, claimed) {
        (Some(q), Some(c)) => Some((q - c).abs() / c.abs()),
        _ => None,
    };
    let c0 = 2.0 / wave.p as f64;
    let published = PublishedComparison {
        applicable: wave.branch != BranchKind::Cross,
        claimed_verdict: Verdict::Stable,
        krein_verdict_matches: krein.verdict == Verdict::Stable,
        direct_verdict_matches: jl.verdict == Verdict::Stable,
        claimed_n_l1: 1,
        n_l1_matches: s1.counts.n == 1,
        claimed_n_l2: 0,
        claimed_z_l2: 1,
        l2_counts_match: s2.counts.n == 0 && s2.counts.z == 1,
        claimed_n_v: 1,
        n_v_matches: krein.n_v == 1,
        claimed_direction: 1,
        direction_matches: wave.c > c0,
        quadratic_form,
        claimed_quadratic_form: claimed,
        quadratic_form_relative_error: rel,
        quadratic_form_within_20_percent: rel.map(|r| r <= 0.2),
    };
    Ok(StabilityReport {
        wave: WaveIdentity {
            p: wave.p,
            sector: wave.sector,
            branch: wave.branch,
            a: wave.a,
            c: wave.c,
            n: wave.n,
            residual: wave.residual,
            nodal_min: wave.nodal_min,
        },
        l1: s1.counts,
        l2: s2.counts,
        l: s.counts,
        l1_symmetry_defect: l1.symmetry_defect,
        l2_symmetry_defect: l2.symmetry_defect,
        l2_phi_norm,
        krein,
        jl,
        product_route_defect: product,
        consistency,
        published,
        options: *opts,
    })
}

/// Analyses independent points, in parallel under `sweep`, preserving
/// order.
pub fn analyze_points(points: &[WaveBranchPoint], opts: &StabilityOptions, sweep: Execution) -> Vec<Result<StabilityReport>> {
    par::map(sweep, points, |w| analyze_point(w, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{newton_solve_fixed_amplitude, NewtonOptions};

    #[test]
    fn claimed_form_matches_published_value_at_bifurcation() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((claimed_quadratic_form(1, BranchKind::Ss, 2.0).unwrap() + 8.0 * pi2).abs() < 1e-12);
        assert!((claimed_quadratic_form(2, BranchKind::Ss, 1.0).unwrap() + 2.0 * pi2).abs() < 1e-12);
        assert!(claimed_quadratic_form(1, BranchKind::Cross, 1.0).is_none());
    }

    #[test]
    fn pipeline_runs_and_both_routes_balance() {
        let guess = WaveBranchPoint::from_stokes(1, BranchKind::Ss, 0.05, 8).unwrap();
        let w = newton_solve_fixed_amplitude(&guess, &NewtonOptions::default()).unwrap();
        let r = analyze_point(&w, &StabilityOptions::default()).unwrap();
        assert!(r.consistency.resolved);
        assert!(r.consistency.identity_holds, "{:?}", r.consistency);
        assert!(r.l2_phi_norm <= 1e-9);
        assert_eq!((r.l2.n, r.l2.z), (0, 1));
    }
}
