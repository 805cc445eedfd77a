use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use torus_nls::analysis::StabilityOptions;
use torus_nls::continuation::NewtonOptions;
use torus_nls::evolution::EvolutionOptions;
use torus_nls::jl::JlTolerances;
use torus_nls::minimizer::MinimizerOptions;
use torus_nls::par::Execution;
use torus_nls::{BranchKind, Error, Result, Sector};

/// Everything a run can be parameterized by. Loaded from `--config` when
/// given, then overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub p: u32,
    pub sector: Option<Sector>,
    pub branch: BranchKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub a: f64,
    pub order: Option<u32>,
    pub a_start: f64,
    pub a_end: f64,
    pub steps: usize,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    pub tau: Option<f64>,
    pub eps_re: f64,
    pub eps_im: f64,
    pub cluster: f64,
    pub t_final: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub grid: usize,
    pub stride: usize,
    pub growth_bound: f64,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub max_iterations: usize,
    pub out: Option<PathBuf>,
    pub sequential: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let jl = JlTolerances::default();
        let ev = EvolutionOptions::default();
        Self {
            p: 1,
            sector: None,
            branch: BranchKind::Ss,
            n: 16,
            a: 0.05,
            order: None,
            a_start: 0.01,
            a_end: 0.1,
            steps: 20,
            newton_tol: NewtonOptions::default().tol,
            max_newton_iterations: NewtonOptions::default().max_iterations,
            tau: None,
            eps_re: jl.re_factor,
            eps_im: jl.im_factor,
            cluster: jl.cluster_factor,
            t_final: ev.t_final,
            dt: ev.dt,
            epsilon: ev.epsilon,
            seed: 0,
            grid: ev.grid,
            stride: ev.stride,
            growth_bound: ev.growth_bound,
            c: None,
            lambda: None,
            max_iterations: MinimizerOptions::default().max_iterations,
            out: None,
            sequential: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if self.n < 3 {
            return Err(Error::InvalidParameter(format!("N must be at least 3, got {}", self.n)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if let Some(s) = self.sector {
            if s != self.branch.sector() {
                return Err(Error::InvalidParameter(format!("branch {} lives in sector {}", self.branch, self.branch.sector())));
            }
        }
        positive("newton_tol", self.newton_tol)?;
        positive("eps_re", self.eps_re)?;
        positive("eps_im", self.eps_im)?;
        positive("cluster", self.cluster)?;
        positive("t_final", self.t_final)?;
        positive("dt", self.dt)?;
        positive("growth_bound", self.growth_bound)?;
        if let Some(t) = self.tau {
            positive("tau", t)?;
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("amplitude must be non-negative, got {}", self.a)));
        }
        if self.stride == 0 || self.max_iterations == 0 || self.max_newton_iterations == 0 {
            return Err(Error::InvalidParameter("iteration counts and stride must be positive".into()));
        }
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { tol: self.newton_tol, max_iterations: self.max_newton_iterations, execution: self.execution() }
    }

    pub fn stability(&self) -> StabilityOptions {
        StabilityOptions {
            tau: self.tau,
            jl: JlTolerances { re_factor: self.eps_re, im_factor: self.eps_im, cluster_factor: self.cluster, ..Default::default() },
            execution: self.execution(),
        }
    }

    pub fn evolution(&self) -> EvolutionOptions {
        EvolutionOptions {
            epsilon: self.epsilon,
            t_final: self.t_final,
            dt: self.dt,
            seed: self.seed,
            grid: self.grid,
            stride: self.stride,
            growth_bound: self.growth_bound,
            ..Default::default()
        }
    }

    pub fn minimizer(&self) -> MinimizerOptions {
        MinimizerOptions { max_iterations: self.max_iterations, ..Default::default() }
    }
}

macro_rules! apply {
    ($cfg:expr, $args:expr; $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

#[derive(Debug, Args)]
pub struct WaveArgs {
    /// Nonlinearity power.
    #[arg(long)]
    pub p: Option<u32>,
    /// ss, e+, e- or cross.
    #[arg(long)]
    pub branch: Option<BranchKind>,
    /// Truncation.
    #[arg(long = "N", alias = "n")]
    pub n: Option<usize>,
}

impl WaveArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply!(cfg, self; p, branch, n);
    }
}

#[derive(Debug, Args)]
pub struct NewtonArgs {
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub max_newton_iterations: Option<usize>,
}

impl NewtonArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply!(cfg, self; newton_tol, max_newton_iterations);
    }
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    /// Eigenvalue threshold for counts; defaults to max(1e-8, 1e-10·‖A‖).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Real-part threshold factor for the spectrum of JL.
    #[arg(long)]
    pub eps_re: Option<f64>,
    /// Imaginary-part threshold factor for the spectrum of JL.
    #[arg(long)]
    pub eps_im: Option<f64>,
    /// Clustering factor for imaginary eigenvalues.
    #[arg(long)]
    pub cluster: Option<f64>,
}

impl SpectralArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        apply!(cfg, self; eps_re, eps_im, cluster);
    }
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Final time.
    #[arg(long = "T", alias = "t-final")]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Perturbation size.
    #[arg(long, alias = "eps")]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points per direction.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Steps between samples.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub growth_bound: Option<f64>,
}

impl EvolveArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply!(cfg, self; t_final, dt, epsilon, seed, grid, stride, growth_bound);
    }
}
