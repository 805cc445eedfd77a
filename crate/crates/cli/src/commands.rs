use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use torus_nls::analysis::{analyze_point, StabilityReport};
use torus_nls::continuation::{continue_branch, WaveBranchPoint};
use torus_nls::evolution::evolve_perturbed;
use torus_nls::io::{self, BranchFile, WaveFile};
use torus_nls::minimizer::{aligned_distance, minimize, power_integral, MinimizerRun};
use torus_nls::par;
use torus_nls::stokes::{max_supported_order, stokes_wave};
use torus_nls::{Error, Result};

use crate::config::RunConfig;
use crate::{Cli, Command};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;
pub const EXIT_IO: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NoConvergence { .. }
        | Error::ContinuationBreakdown { .. }
        | Error::Eigen(_)
        | Error::NumericRange(_)
        | Error::DerivativeUnavailable(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

/// Minimizer output, optionally compared against a known wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeReport {
    #[serde(flatten)]
    pub run: MinimizerRun,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetComparison {
    pub wave: String,
    /// L² distance after symmetry alignment.
    pub aligned_distance: f64,
    /// `|B_c − λ/2| / (λ/2)`.
    pub b_half_lambda_relative_error: f64,
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => io::read_json::<RunConfig>(path)?,
        None => RunConfig::default(),
    };
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.sequential |= cli.sequential;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn stem(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "wave".into());
    name.strip_suffix(".json").unwrap_or(&name).to_string()
}

fn say(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn run(cli: Cli) -> Result<u8> {
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Stokes { wave, a, order, output } => {
            wave.apply(&mut cfg);
            if let Some(a) = a {
                cfg.a = *a;
            }
            if order.is_some() {
                cfg.order = *order;
            }
            cfg.validate()?;
            cmd_stokes(&cfg, output.as_deref())
        }
        Command::Branch { wave, a_start, a_end, steps, newton, output } => {
            wave.apply(&mut cfg);
            newton.apply(&mut cfg);
            cfg.a_start = a_start.unwrap_or(cfg.a_start);
            cfg.a_end = a_end.unwrap_or(cfg.a_end);
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.validate()?;
            cmd_branch(&cfg, output.as_deref())
        }
        Command::Stability { input, spectral } => {
            spectral.apply(&mut cfg);
            cfg.validate()?;
            cmd_stability(&cfg, input)
        }
        Command::Evolve { input, index, evolve } => {
            evolve.apply(&mut cfg);
            cfg.validate()?;
            cmd_evolve(&cfg, input, *index)
        }
        Command::Minimize { wave, c, lambda, seed, max_iterations, target, output } => {
            wave.apply(&mut cfg);
            if c.is_some() {
                cfg.c = *c;
            }
            if lambda.is_some() {
                cfg.lambda = *lambda;
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.max_iterations = max_iterations.unwrap_or(cfg.max_iterations);
            cfg.validate()?;
            cmd_minimize(&cfg, target.as_deref(), output.as_deref())
        }
        Command::Report { inputs, output } => cmd_report(&cfg, inputs, output.as_deref()),
    }
}

fn cmd_stokes(cfg: &RunConfig, output: Option<&Path>) -> Result<u8> {
    let order = cfg.order.unwrap_or_else(|| max_supported_order(cfg.p));
    let w = stokes_wave(cfg.p, cfg.branch, cfg.a, order, cfg.n)?;
    if let Some(msg) = &w.warning {
        log::warn!("{msg}");
    }
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join(format!("stokes_p{}_{}_a{}.json", cfg.p, cfg.branch.name(), cfg.a)),
    };
    io::write_json(&path, &WaveFile::from_stokes(&w))?;
    println!("c = {:.15e}  c2 = {:.15e}  nodal_min = {:.6e}", w.c, w.c2, w.nodal_min);
    say(&path);
    Ok(0)
}

fn cmd_branch(cfg: &RunConfig, output: Option<&Path>) -> Result<u8> {
    let outcome = continue_branch(cfg.p, cfg.branch, cfg.a_start, cfg.a_end, cfg.steps, cfg.n, &cfg.newton())?;
    let base = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join(format!("branch_p{}_{}", cfg.p, cfg.branch.name())),
    };
    let json = base.with_extension("json");
    let csv = base.with_extension("csv");
    let file = BranchFile::from_branch(&outcome.branch, outcome.failure.as_ref());
    io::write_json(&json, &file)?;
    io::write_atomic(&csv, io::branch_csv(&outcome.branch.points).as_bytes())?;
    if let Some(last) = outcome.branch.points.last() {
        println!("{} points, last a = {} c = {:.12}", outcome.branch.points.len(), last.a, last.c);
    }
    say(&json);
    say(&csv);
    match outcome.failure {
        Some(e) => {
            eprintln!("error: branch stopped early: {e}");
            if let Some(h) = outcome.hint {
                eprintln!("hint: {h}");
            }
            Ok(exit_code(&e))
        }
        None => Ok(0),
    }
}

fn cmd_stability(cfg: &RunConfig, input: &Path) -> Result<u8> {
    let points = io::read_points(input)?;
    let dir = out_dir(cfg)?;
    let base = stem(input);
    let opts = cfg.stability();
    let single = points.len() == 1;
    // points are analyzed one at a time; the assembly inside each is parallel
    let results: Vec<Result<StabilityReport>> = points.iter().map(|w| analyze_point(w, &opts)).collect();
    let mut code = 0;
    for (i, (w, r)) in points.iter().zip(results).enumerate() {
        let name = if single { base.clone() } else { format!("{base}_{i:03}") };
        match r {
            Ok(rep) => {
                let json = dir.join(format!("{name}.stability.json"));
                let csv = dir.join(format!("{name}.eigen.csv"));
                io::write_json(&json, &rep)?;
                io::write_atomic(&csv, io::eigen_csv(&rep.jl.eigenvalues).as_bytes())?;
                let k = &rep.consistency;
                println!(
                    "a = {} c = {:.10}: krein {} direct {} (n(L) = {}, n(V) = {}, z(V) = {}, k_r + k_c + k_- = {}){}",
                    w.a,
                    w.c,
                    k.krein_verdict,
                    k.direct_verdict,
                    rep.krein.n_l,
                    rep.krein.n_v,
                    rep.krein.z_v,
                    k.jl_total,
                    if k.identity_holds { "" } else { " INDEX MISMATCH" }
                );
                say(&json);
            }
            Err(e) => {
                eprintln!("error: point {i} (a = {}): {e}", w.a);
                code = code.max(exit_code(&e));
            }
        }
    }
    Ok(code)
}

fn cmd_evolve(cfg: &RunConfig, input: &Path, index: Option<usize>) -> Result<u8> {
    let points = io::read_points(input)?;
    let i = index.unwrap_or(points.len() - 1);
    let w: &WaveBranchPoint = points
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("index {i} out of range for {} points", points.len())))?;
    let trace = evolve_perturbed(&w.field, w.c, w.p, &cfg.evolution())?;
    let path = out_dir(cfg)?.join(format!("{}.trace.csv", stem(input)));
    io::write_atomic(&path, io::trace_csv(&trace).as_bytes())?;
    let f0 = trace.mass[0];
    let e0 = trace.energy[0];
    let fd = trace.mass.iter().map(|f| (f - f0).abs() / f0).fold(0.0, f64::max);
    let ed = trace.energy.iter().map(|e| (e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    println!(
        "F drift {fd:.3e}, E drift {ed:.3e}, final deviation {:.3e}",
        trace.deviation.last().copied().unwrap_or(0.0)
    );
    if let Some(g) = trace.growth_factor {
        println!("deviation growth factor {g:.3e} (bound {})", cfg.growth_bound);
    }
    say(&path);
    if let Some(t) = trace.blowup_time {
        eprintln!("error: blow-up guard fired at t = {t}");
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(0)
}

fn cmd_minimize(cfg: &RunConfig, target: Option<&Path>, output: Option<&Path>) -> Result<u8> {
    let wave = match target {
        Some(path) => {
            let pts = io::read_points(path)?;
            if pts.len() != 1 {
                return Err(Error::InvalidParameter("target must be a single wave file".into()));
            }
            pts.into_iter().next()
        }
        None => None,
    };
    let (p, c, n, sector) = match &wave {
        Some(w) => (w.p, w.c, w.n, w.sector),
        None => (cfg.p, cfg.c.ok_or_else(|| Error::InvalidParameter("--c is required without --target".into()))?, cfg.n, cfg.sector.unwrap_or(cfg.branch.sector())),
    };
    let lambda = match (cfg.lambda, &wave) {
        (Some(l), _) => l,
        (None, Some(w)) => power_integral(&w.field, w.p + 2)?,
        (None, None) => return Err(Error::InvalidParameter("--lambda is required without --target".into())),
    };
    let run = minimize(p, c, lambda, sector, n, cfg.seed, &cfg.minimizer())?;
    let target = match (&wave, target) {
        (Some(w), Some(path)) => Some(TargetComparison {
            wave: path.display().to_string(),
            aligned_distance: aligned_distance(&run.field, &w.field)?,
            b_half_lambda_relative_error: (run.b_value - 0.5 * lambda).abs() / (0.5 * lambda),
        }),
        _ => None,
    };
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join(format!("minimize_p{p}_c{c}_seed{}.json", cfg.seed)),
    };
    let report = MinimizeReport { run, target };
    io::write_json(&path, &report)?;
    println!(
        "{} after {} iterations, B = {:.12e}, lambda/2 = {:.12e}",
        if report.run.converged { "converged" } else { "NOT converged" },
        report.run.iterations,
        report.run.b_value,
        0.5 * lambda
    );
    if let Some(t) = &report.target {
        println!("aligned distance to target {:.3e}", t.aligned_distance);
    }
    say(&path);
    Ok(0)
}

fn collect_reports(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(".stability.json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub const REPORT_HEADER: &str = "file,p,branch,a,c,N,residual,n_l1,z_l1,n_l2,z_l2,n_l,n_v,z_v,rhs_index,k_r,k_c,k_minus,identity_holds,krein_verdict,direct_verdict,verdicts_agree,claimed_verdict,claim_matches,tau_l1,tau_l2,tau_v,eps_re";

fn cmd_report(cfg: &RunConfig, inputs: &[PathBuf], output: Option<&Path>) -> Result<u8> {
    let files = collect_reports(inputs)?;
    let reports: Vec<Result<StabilityReport>> = par::map(cfg.execution(), &files, |f| io::read_json(f));
    let mut table = String::from(REPORT_HEADER);
    table.push('\n');
    for (f, r) in files.iter().zip(reports) {
        let r = r?;
        let k = &r.consistency;
        let _ = writeln!(
            table,
            "{},{},{},{:e},{:e},{},{:e},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{:e}",
            f.file_name().map(|s| s.to_string_lossy()).unwrap_or_default(),
            r.wave.p,
            r.wave.branch.name(),
            r.wave.a,
            r.wave.c,
            r.wave.n,
            r.wave.residual,
            r.l1.n,
            r.l1.z,
            r.l2.n,
            r.l2.z,
            r.krein.n_l,
            r.krein.n_v,
            r.krein.z_v,
            r.krein.rhs_index,
            k.k_r,
            k.k_c,
            k.k_minus,
            k.identity_holds,
            k.krein_verdict,
            k.direct_verdict,
            k.verdicts_agree,
            r.published.claimed_verdict,
            r.published.krein_verdict_matches && r.published.direct_verdict_matches,
            r.krein.tau_l1,
            r.krein.tau_l2,
            r.krein.tau_v,
            k.eps_re,
        );
    }
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join("report.csv"),
    };
    io::write_atomic(&path, table.as_bytes())?;
    print!("{table}");
    say(&path);
    Ok(0)
}
