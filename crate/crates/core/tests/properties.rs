use proptest::prelude::*;

use torus_nls::analysis::{analyze_point, StabilityOptions, StabilityReport};
use torus_nls::continuation::{newton_solve_fixed_amplitude, NewtonOptions, WaveBranchPoint};
use torus_nls::evolution::{conserved_quantities, gradient_identity_residual, ComplexTorusField};
use torus_nls::io;
use torus_nls::operators::{schrodinger_operator, OperatorKind};
use torus_nls::par::Execution;
use torus_nls::spectral::{basis, inner_product, Sector, SpectralField};
use torus_nls::BranchKind;

fn field(sector: Sector, n: usize, coeffs: &[f64]) -> SpectralField {
    let mut f = SpectralField::constant(sector, n, 1.5);
    for (m, v) in basis(sector, n).into_iter().skip(1).zip(coeffs) {
        f.set(m, v / (1.0 + m.wavenumber_sq())).unwrap();
    }
    f
}

fn branch_strategy() -> impl Strategy<Value = BranchKind> {
    prop::sample::select(BranchKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn schrodinger_operator_is_self_adjoint(
        e in any::<bool>(),
        p in 1u32..4,
        coeffs in prop::collection::vec(-0.3f64..0.3, 60),
        g in prop::collection::vec(-1.0f64..1.0, 60),
        h in prop::collection::vec(-1.0f64..1.0, 60),
    ) {
        let sector = if e { Sector::E } else { Sector::S };
        let n = 5;
        let phi = field(sector, n, &coeffs);
        let op = schrodinger_operator(OperatorKind::L1, &phi, 1.3, p, (p + 1) as f64, Execution::Sequential).unwrap();
        prop_assert!(op.symmetry_defect <= 1e-12);
        let f1 = field(sector, n, &g);
        let f2 = field(sector, n, &h);
        let lhs = inner_product(&op.apply(&f1).unwrap(), &f2).unwrap();
        let rhs = inner_product(&f1, &op.apply(&f2).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn krein_identity_on_small_waves(p in 1u32..3, branch in branch_strategy(), a in 0.01f64..0.08) {
        let guess = WaveBranchPoint::from_stokes(p, branch, a, 5).unwrap();
        let Ok(w) = newton_solve_fixed_amplitude(&guess, &NewtonOptions::default()) else {
            return Ok(());
        };
        let r = analyze_point(&w, &StabilityOptions::default()).unwrap();
        if !r.jl.ambiguous {
            prop_assert!(r.consistency.identity_holds, "{:?}", r.consistency);
            prop_assert_eq!(r.consistency.jl_total as i64, r.krein.rhs_index);
        }
        prop_assert!(r.jl.quartet_defect <= 1e-8);
        prop_assert_eq!(r.jl.k_minus % 2, 0);
        prop_assert_eq!(r.jl.k_c % 2, 0);
    }

    #[test]
    fn mass_is_invariant_under_phase(theta in 0.0f64..6.3, coeffs in prop::collection::vec(-0.3f64..0.3, 60)) {
        let phi = field(Sector::E, 4, &coeffs);
        let u = ComplexTorusField::from_real_parts(&phi, None, 16).unwrap();
        let v = u.scale(num_complex::Complex64::from_polar(1.0, theta));
        let (a, b) = (conserved_quantities(&u, 1), conserved_quantities(&v, 1));
        prop_assert!((a.mass - b.mass).abs() <= 1e-12 * a.mass);
        prop_assert!((a.energy - b.energy).abs() <= 1e-12 * a.energy.abs());
    }
}

#[test]
fn stability_report_round_trips() {
    let guess = WaveBranchPoint::from_stokes(1, BranchKind::Eplus, 0.05, 5).unwrap();
    let w = newton_solve_fixed_amplitude(&guess, &NewtonOptions::default()).unwrap();
    let r = analyze_point(&w, &StabilityOptions { tau: Some(1e-7), ..Default::default() }).unwrap();
    let text = io::to_json(&r).unwrap();
    let back: StabilityReport = io::parse_json("report", &text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.options.tau, Some(1e-7));
}

#[test]
fn standing_wave_satisfies_the_gradient_identity() {
    let guess = WaveBranchPoint::from_stokes(1, BranchKind::Ss, 0.05, 16).unwrap();
    let w = newton_solve_fixed_amplitude(&guess, &NewtonOptions::default()).unwrap();
    let u = ComplexTorusField::from_real_parts(&w.field, None, 64).unwrap();
    let r = gradient_identity_residual(&u, w.c, 1);
    assert!(r <= 1e-9, "{r}");
}

#[test]
fn branch_file_round_trip_recovers_points() {
    let out = torus_nls::continuation::continue_branch(1, BranchKind::Eminus, 0.01, 0.03, 3, 5, &NewtonOptions::default()).unwrap();
    let file = io::BranchFile::from_branch(&out.branch, None);
    let text = io::to_json(&file).unwrap();
    let back: io::BranchFile = io::parse_json("b", &text).unwrap();
    assert_eq!(back, file);
    let pts = back.to_points("b").unwrap();
    for (a, b) in pts.iter().zip(&out.branch.points) {
        assert_eq!(a.field, b.field);
        assert_eq!(a.c, b.c);
    }
}
