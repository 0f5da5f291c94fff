//! Command-line front end: model files, run configuration and the commands
//! behind the `queuecorr` binary. Every command renders CSV preceded by a
//! `# map-queue-corr v1, seed=..., model=...` provenance line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod grid;
pub mod model_file;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use queuecorr::estimate::{estimate_correlation, estimate_gamma, StationarySampler};
use queuecorr::fluid::{stationary_workload_fluid, stationary_workload_two_state};
use queuecorr::model::{mean_drift, stability_check};
use queuecorr::properties::check_shape;
use queuecorr::sim::{reflect, simulate_path_from, RngStreamSpec, StreamRole};
use queuecorr::transform::{correlation_from_gamma, decay_rate_fit, singularity_report, SingularModel};
use queuecorr::{
    CorrelationCurve, Error, FitMode, FluidView, InversionParams, MapModel, ShapeReport, SimConfig,
    StationaryWorkloadFluid, TransformEvaluator, TwoStateFluidParams,
};

pub use grid::GridSpec;
pub use model_file::{parse_model_file, parse_model_str, ModelFile, ParseError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Model(#[from] Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for input, validation and domain problems; 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(
                Error::Numeric(_) | Error::Invariant(_) | Error::RepeatedEigenvalue { .. } | Error::Pole { .. },
            ) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodSel {
    Analytic,
    Simulate,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the model and summarise its structure.
    Validate,
    /// Background law, mean drift and stability.
    Stationary,
    /// Stationary workload summary.
    Workload,
    /// γ(ϑ) = Cov(Q_0, Q_T), T ~ Exp(ϑ), over the --theta grid.
    Gamma,
    /// r(t) over the --t grid.
    Correlation,
    /// Singularities of γ and the fitted decay rate of c(t).
    Decay,
    /// Non-negativity, monotonicity and convexity of r(t).
    Shape,
    /// Stationary sample paths (t, X_t, J_t, Q_t).
    Paths,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Stationary => "stationary",
            Command::Workload => "workload",
            Command::Gamma => "gamma",
            Command::Correlation => "correlation",
            Command::Decay => "decay",
            Command::Shape => "shape",
            Command::Paths => "paths",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Model file.
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Limiting cyclic example with d states, evaluated in closed form.
    #[arg(long, global = true, value_name = "D")]
    pub cyclic: Option<usize>,
    /// Normalised two-state fluid queue.
    #[arg(long, global = true, num_args = 2, value_names = ["Q", "MU"])]
    pub two_state: Option<Vec<f64>>,
    /// Time grid, start:stop:count[:log].
    #[arg(long, global = true, value_name = "GRID")]
    pub t: Option<GridSpec>,
    /// ϑ grid, start:stop:count[:log].
    #[arg(long, global = true, value_name = "GRID")]
    pub theta: Option<GridSpec>,
    #[arg(long, global = true, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Analytic when available, otherwise simulation.
    #[arg(long, global = true)]
    pub method: Option<MethodSel>,
    /// Thread cap for simulation; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Finite buffer K; overrides the model file.
    #[arg(long, global = true, value_name = "K")]
    pub buffer: Option<f64>,
    /// Significance level of the shape checks.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub significance: f64,
    /// Number of paths dumped by `paths`.
    #[arg(long, global = true, default_value_t = 1)]
    pub paths: usize,
}

#[derive(Debug, Parser)]
#[command(name = "queuecorr", version, about = "Workload correlation of queues with Markov-additive input")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    File { path: PathBuf, file: ModelFile },
    Cyclic(usize),
    TwoState(TwoStateFluidParams),
}

impl ModelSource {
    pub fn label(&self) -> String {
        match self {
            ModelSource::File { path, .. } => path.display().to_string(),
            ModelSource::Cyclic(d) => format!("cyclic d={d}"),
            ModelSource::TwoState(p) => format!("two-state q={} mu={}", p.q, p.mu),
        }
    }

    /// The MAP, when there is one (the cyclic example is a limit of MAPs).
    pub fn map_model(&self) -> Option<MapModel> {
        match self {
            ModelSource::File { file, .. } => Some(file.model.clone()),
            ModelSource::Cyclic(_) => None,
            ModelSource::TwoState(p) => Some(p.model()),
        }
    }

    fn file_buffer(&self) -> Option<f64> {
        match self {
            ModelSource::File { file, .. } => file.buffer,
            _ => None,
        }
    }

    /// Closed-form singularity structure, if known.
    fn singular(&self) -> Option<SingularModel> {
        match self {
            ModelSource::Cyclic(d) => Some(SingularModel::Cyclic(*d)),
            ModelSource::TwoState(p) => Some(SingularModel::TwoState(*p)),
            ModelSource::File { file, .. } => normalized_two_state(&file.model).map(SingularModel::TwoState),
        }
    }
}

/// Recognises the normalised two-state fluid model (drifts 1 and −μ, leaving
/// rates q and 1) so that its closed forms are used.
fn normalized_two_state(m: &MapModel) -> Option<TwoStateFluidParams> {
    if m.dim() != 2 || !m.is_fluid() {
        return None;
    }
    let g = &m.generator;
    let d = m.drifts();
    if d[0] == 1.0 && g.rate(1, 0) == 1.0 {
        TwoStateFluidParams::new(g.rate(0, 1), -d[1]).ok()
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub source: ModelSource,
    pub t_grid: Option<GridSpec>,
    pub theta_grid: Option<GridSpec>,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub method: Option<MethodSel>,
    pub workers: Option<usize>,
    pub buffer: Option<f64>,
    pub significance: f64,
    pub paths: usize,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let o = cli.options;
        let given = o.model.is_some() as usize + o.cyclic.is_some() as usize + o.two_state.is_some() as usize;
        if given != 1 {
            return Err(CliError::Usage("give exactly one of --model, --cyclic, --two-state".into()));
        }
        let source = if let Some(path) = o.model {
            let file = parse_model_file(&path)?;
            ModelSource::File { path, file }
        } else if let Some(d) = o.cyclic {
            if d < 2 {
                return Err(CliError::Usage(format!("--cyclic needs d >= 2, got {d}")));
            }
            ModelSource::Cyclic(d)
        } else {
            let v = o.two_state.unwrap_or_default();
            ModelSource::TwoState(TwoStateFluidParams::new(v[0], v[1])?)
        };
        if let Some(k) = o.buffer {
            if !(k > 0.0 && k.is_finite()) {
                return Err(CliError::Usage(format!("--buffer must be positive and finite, got {k}")));
            }
        }
        if !(o.significance > 0.0 && o.significance < 1.0) {
            return Err(CliError::Usage(format!("--significance must lie in (0, 1), got {}", o.significance)));
        }
        Ok(RunConfig {
            command: cli.command,
            buffer: o.buffer.or(source.file_buffer()),
            source,
            t_grid: o.t,
            theta_grid: o.theta,
            reps: o.reps,
            seed: o.seed,
            out: o.out,
            method: o.method,
            workers: o.workers,
            significance: o.significance,
            paths: o.paths,
        })
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            workers: self.workers,
            ..SimConfig::default()
                .with_reps(self.reps)
                .with_seed(self.seed)
                .with_buffer(self.buffer)
        }
    }

    fn map_model(&self) -> Result<MapModel, CliError> {
        self.source.map_model().ok_or_else(|| {
            Error::Unsupported(
                "the cyclic example has infinite drain rates and cannot be simulated; use a model file".into(),
            )
            .into()
        })
    }

    fn evaluator(&self) -> Result<TransformEvaluator, Error> {
        if self.buffer.is_some() {
            return Err(Error::Unsupported("analytic routes assume an infinite buffer".into()));
        }
        match self.source.singular() {
            Some(SingularModel::Cyclic(d)) => TransformEvaluator::cyclic(d),
            Some(SingularModel::TwoState(p)) => TransformEvaluator::two_state(p),
            None => TransformEvaluator::fluid(&self.source.map_model().expect("files carry a MAP")),
        }
    }

    fn analytic_available(&self) -> bool {
        self.evaluator().is_ok()
    }

    fn method_or_default(&self) -> MethodSel {
        self.method.unwrap_or(if self.analytic_available() {
            MethodSel::Analytic
        } else {
            MethodSel::Simulate
        })
    }

    fn header(&self) -> String {
        format!("# map-queue-corr v1, seed={}, model={}\n", self.seed, self.source.label())
    }
}

/// Runs a command and returns the CSV it produces.
pub fn execute(cfg: &RunConfig) -> Result<String, CliError> {
    let body = match cfg.command {
        Command::Validate => validate(cfg)?,
        Command::Stationary => stationary(cfg)?,
        Command::Workload => workload(cfg)?,
        Command::Gamma => gamma(cfg)?,
        Command::Correlation => correlation(cfg)?,
        Command::Decay => decay(cfg)?,
        Command::Shape => shape(cfg)?,
        Command::Paths => paths(cfg)?,
    };
    Ok(cfg.header() + &body)
}

/// Runs a command, writes its output and returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let result = execute(cfg).and_then(|csv| match &cfg.out {
        Some(path) => std::fs::write(path, csv).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{csv}");
            Ok(())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("queuecorr {}: {e}", cfg.command.name());
            e.exit_code()
        }
    }
}

fn fmt_buffer(k: Option<f64>) -> String {
    k.map_or_else(|| "inf".to_string(), |k| k.to_string())
}

fn validate(cfg: &RunConfig) -> Result<String, CliError> {
    let mut out = String::from("key,value\n");
    match cfg.source.map_model() {
        Some(m) => {
            model_file::check_model(&m)?;
            let _ = writeln!(out, "states,{}", m.dim());
            let _ = writeln!(out, "spectral,{}", m.spectral);
            let _ = writeln!(out, "fluid,{}", m.is_fluid());
            let _ = writeln!(out, "transition_jumps,{}", m.has_transition_jumps());
            let _ = writeln!(out, "stable,{}", stability_check(&m)?);
        }
        None => {
            let ModelSource::Cyclic(d) = cfg.source else { unreachable!() };
            let _ = writeln!(out, "states,{d}");
            let _ = writeln!(out, "spectral,SP");
            let _ = writeln!(out, "fluid,true");
            let _ = writeln!(out, "transition_jumps,false");
            let _ = writeln!(out, "stable,true");
        }
    }
    let _ = writeln!(out, "buffer,{}", fmt_buffer(cfg.buffer));
    Ok(out)
}

fn stationary(cfg: &RunConfig) -> Result<String, CliError> {
    let mut out = String::from("key,value\n");
    match cfg.source.map_model() {
        Some(m) => {
            for (i, p) in m.stationary_distribution()?.iter().enumerate() {
                let _ = writeln!(out, "pi_{},{p}", i + 1);
            }
            let _ = writeln!(out, "mean_drift,{}", mean_drift(&m)?);
            let _ = writeln!(out, "stable,{}", stability_check(&m)?);
        }
        None => {
            let ModelSource::Cyclic(d) = cfg.source else { unreachable!() };
            for i in 0..d {
                let _ = writeln!(out, "pi_{},{}", i + 1, 1.0 / d as f64);
            }
            let _ = writeln!(out, "mean_drift,-inf");
            let _ = writeln!(out, "stable,true");
        }
    }
    Ok(out)
}

fn spectral_workload(cfg: &RunConfig) -> Result<Option<StationaryWorkloadFluid>, Error> {
    if cfg.buffer.is_some() {
        return Ok(None);
    }
    match &cfg.source {
        ModelSource::Cyclic(d) => StationaryWorkloadFluid::cyclic(*d).map(Some),
        ModelSource::TwoState(p) => stationary_workload_two_state(p).map(Some),
        ModelSource::File { file, .. } if file.model.is_fluid() => {
            stationary_workload_fluid(&FluidView::new(&file.model)?).map(Some)
        }
        ModelSource::File { .. } => Ok(None),
    }
}

fn workload(cfg: &RunConfig) -> Result<String, CliError> {
    let mut out = String::from("key,value\n");
    if let Some(sw) = spectral_workload(cfg)? {
        let m = sw.moments();
        let _ = writeln!(out, "method,spectral");
        let _ = writeln!(out, "mean,{}", m.mean);
        let _ = writeln!(out, "variance,{}", m.variance);
        let _ = writeln!(out, "p_empty,{}", sw.atoms.iter().sum::<f64>());
        for (i, a) in sw.atoms.iter().enumerate() {
            let _ = writeln!(out, "atom_{},{a}", i + 1);
        }
        for (i, pm) in m.partial_means.iter().enumerate() {
            let _ = writeln!(out, "partial_mean_{},{pm}", i + 1);
        }
        return Ok(out);
    }
    let model = cfg.map_model()?;
    let c = &model.components[0];
    if model.dim() == 1 && c.brownian_var > 0.0 && c.jump_rate == 0.0 && cfg.buffer.is_none() {
        if !(c.drift < 0.0) {
            return Err(Error::Unstable { drift: c.drift }.into());
        }
        // exponential with rate 2|drift|/variance
        let mean = c.brownian_var / (-2.0 * c.drift);
        let _ = writeln!(out, "method,closed-form");
        let _ = writeln!(out, "mean,{mean}");
        let _ = writeln!(out, "variance,{}", mean * mean);
        let _ = writeln!(out, "p_empty,0");
        return Ok(out);
    }
    let sim = cfg.sim_config();
    if sim.reps < 100 {
        return Err(Error::Domain(format!("need at least 100 replications, got {}", sim.reps)).into());
    }
    let sampler = StationarySampler::new(&model, &sim)?;
    let draws = (0..sim.reps)
        .map(|k| {
            let spec = RngStreamSpec::new(sim.seed, k as u64);
            sampler.sample(&model, &mut spec.rng(StreamRole::Start)).map(|(q, _)| q)
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (n - 1.0);
    let _ = writeln!(out, "method,simulated");
    let _ = writeln!(out, "mean,{mean}");
    let _ = writeln!(out, "variance,{var}");
    let _ = writeln!(out, "p_empty,{}", draws.iter().filter(|&&q| q == 0.0).count() as f64 / n);
    let _ = writeln!(out, "mean_half_width,{}", 1.96 * (var / n).sqrt());
    let _ = writeln!(out, "n_reps,{}", draws.len());
    Ok(out)
}

fn gamma(cfg: &RunConfig) -> Result<String, CliError> {
    let thetas = cfg.theta_grid.unwrap_or(GridSpec {
        start: 0.1,
        stop: 10.0,
        count: 21,
        log: true,
    });
    let thetas = thetas.points();
    let method = cfg.method_or_default();
    let analytic = match method {
        MethodSel::Simulate => None,
        _ => {
            let ev = cfg.evaluator()?;
            Some(thetas.iter().map(|&th| ev.gamma_real(th)).collect::<Result<Vec<f64>, _>>()?)
        }
    };
    let simulated = match method {
        MethodSel::Analytic => None,
        _ => Some(estimate_gamma(&cfg.map_model()?, &thetas, &cfg.sim_config())?),
    };
    let mut out = String::new();
    match (&analytic, &simulated) {
        (Some(a), None) => {
            out.push_str("theta,gamma\n");
            for (th, g) in thetas.iter().zip(a) {
                let _ = writeln!(out, "{th},{g}");
            }
        }
        (None, Some(s)) => {
            out.push_str("theta,gamma_hat,half_width,n_reps\n");
            for e in s {
                let _ = writeln!(out, "{},{},{},{}", e.theta, e.gamma, e.half_width, cfg.reps);
            }
        }
        (Some(a), Some(s)) => {
            out.push_str("theta,gamma,gamma_hat,half_width,n_reps\n");
            for (g, e) in a.iter().zip(s) {
                let _ = writeln!(out, "{},{g},{},{},{}", e.theta, e.gamma, e.half_width, cfg.reps);
            }
        }
        (None, None) => unreachable!(),
    }
    Ok(out)
}

fn analytic_curve(cfg: &RunConfig, t: &[f64]) -> Result<CorrelationCurve, Error> {
    correlation_from_gamma(&cfg.evaluator()?, t, &InversionParams::default())
}

fn simulated_curve(cfg: &RunConfig, t: &[f64]) -> Result<CorrelationCurve, CliError> {
    Ok(estimate_correlation(&cfg.map_model()?, t, &cfg.sim_config())?)
}

fn correlation(cfg: &RunConfig) -> Result<String, CliError> {
    let t = cfg.t_grid.unwrap_or(GridSpec::linear(0.0, 10.0, 41)).points();
    Ok(match cfg.method_or_default() {
        MethodSel::Analytic => analytic_curve(cfg, &t)?.to_analytic_csv(),
        MethodSel::Simulate => simulated_curve(cfg, &t)?.to_csv(),
        MethodSel::Both => {
            let a = analytic_curve(cfg, &t)?;
            let s = simulated_curve(cfg, &t)?;
            let mut out = String::from("t,c,r,c_hat,r_hat,half_width,n_reps\n");
            for k in 0..t.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    t[k], a.c[k], a.r[k], s.c[k], s.r[k], s.half_width[k], s.n_reps
                );
            }
            out
        }
    })
}

fn decay(cfg: &RunConfig) -> Result<String, CliError> {
    let singular = if cfg.buffer.is_none() { cfg.source.singular() } else { None };
    let (default_grid, mode) = match singular {
        Some(SingularModel::Cyclic(_)) => (GridSpec::linear(20.0, 80.0, 601), FitMode::Envelope),
        Some(SingularModel::TwoState(_)) => (GridSpec::linear(10.0, 40.0, 121), FitMode::PowerCorrected),
        None => (GridSpec::linear(10.0, 40.0, 121), FitMode::Plain),
    };
    let t = cfg.t_grid.unwrap_or(default_grid).points();
    let window = (t[0], *t.last().unwrap());
    let report = singular.map(|s| singularity_report(&s)).transpose()?;
    let method = cfg.method_or_default();
    let mut fits = Vec::new();
    if method != MethodSel::Simulate {
        fits.push(("fitted", decay_rate_fit(&analytic_curve(cfg, &t)?, window, mode)?));
    }
    if method != MethodSel::Analytic {
        fits.push(("fitted_simulated", decay_rate_fit(&simulated_curve(cfg, &t)?, window, mode)?));
    }

    let mut out = String::new();
    for (name, fit) in &fits {
        let _ = writeln!(
            out,
            "# {name}: mode={:?}, window=[{}, {}], points={}, rms_residual={}",
            fit.mode, window.0, window.1, fit.points, fit.rms_residual
        );
        if let Some(note) = &fit.note {
            let _ = writeln!(out, "# {name}: {note}");
        }
    }
    if let Some(note) = report.as_ref().and_then(|r| r.note.as_ref()) {
        let _ = writeln!(out, "# {note}");
    }
    out.push_str("type,re,im\n");
    if let Some(r) = &report {
        for s in &r.singularities {
            let _ = writeln!(out, "{},{},{}", s.kind.as_str(), s.at.re, s.at.im);
        }
        let _ = writeln!(out, "dominant,{},0", r.dominant);
    }
    for (name, fit) in &fits {
        let _ = writeln!(out, "{name},{},0", fit.rate);
    }
    Ok(out)
}

fn shape_rows(out: &mut String, method: &str, report: &ShapeReport) {
    if let Some(d) = &report.diagnostic {
        let _ = writeln!(out, "# {method}: {d}");
    }
    for line in report.to_csv().lines().skip(1) {
        let _ = writeln!(out, "{method},{line}");
    }
}

fn shape(cfg: &RunConfig) -> Result<String, CliError> {
    let method = cfg.method_or_default();
    let default_grid = if method == MethodSel::Simulate {
        GridSpec::linear(0.0, 5.5, 12)
    } else {
        GridSpec::linear(0.0, 30.0, 301)
    };
    let t = cfg.t_grid.unwrap_or(default_grid).points();
    let mut reports = Vec::new();
    if method != MethodSel::Simulate {
        reports.push(("analytic", check_shape(&analytic_curve(cfg, &t)?, cfg.significance)?));
    }
    if method != MethodSel::Analytic {
        reports.push(("simulated", check_shape(&simulated_curve(cfg, &t)?, cfg.significance)?));
    }
    let mut body = String::from("method,property,verdict,worst_t,worst_margin\n");
    let mut comments = String::new();
    for (name, rep) in &reports {
        let mut rows = String::new();
        shape_rows(&mut rows, name, rep);
        for line in rows.lines() {
            if line.starts_with('#') {
                let _ = writeln!(comments, "{line}");
            } else {
                let _ = writeln!(body, "{line}");
            }
        }
    }
    Ok(comments + &body)
}

fn paths(cfg: &RunConfig) -> Result<String, CliError> {
    let model = cfg.map_model()?;
    let horizon = cfg.t_grid.map_or(10.0, |g| *g.points().last().unwrap());
    if !(horizon > 0.0) {
        return Err(Error::Grid(format!("path horizon must be positive, got {horizon}")).into());
    }
    let sim = cfg.sim_config();
    let sampler = StationarySampler::new(&model, &sim)?;
    let disc = sim.discretization(&model);
    let mut out = String::from("path,t,x,j,q\n");
    for k in 0..cfg.paths {
        let spec = RngStreamSpec::new(cfg.seed, k as u64);
        let (q0, j0) = sampler.sample(&model, &mut spec.rng(StreamRole::Start))?;
        let path = simulate_path_from(&model, horizon, disc, j0, &mut spec.rng(StreamRole::Path))?;
        let refl = reflect(&path, q0, cfg.buffer)?;
        for line in refl.to_csv().lines().skip(1) {
            let _ = writeln!(out, "{},{line}", k + 1);
        }
    }
    Ok(out)
}
