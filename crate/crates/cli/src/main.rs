mod data;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proxdiv::proximal::{d_psi, run};
use proxdiv::{
    BetaSchedule, DivergenceSpec, Error, ExperimentReport, InitStrategy, MixtureModel, Objective, ObjectiveChoice, ParamVector,
    PlanFile, ProximalConfig, ProximalGenerator, ProximalTrace, QuadratureConfig, Sample, StopReason, TraceRecord,
};
use serde::Deserialize;

use crate::output::Format;

const BUNDLED_PLANS: &[(&str, &str)] = &[
    ("gaussian-table1", include_str!("../../../plans/gaussian-table1.toml")),
    ("weibull-table2", include_str!("../../../plans/weibull-table2.toml")),
];

#[derive(Debug, Parser)]
#[command(name = "proxdiv", version, about = "Proximal-point minimum dual divergence estimation for two-component mixtures")]
struct Cli {
    /// TOML file with default estimation settings; flags take precedence.
    #[arg(long, global = true, env = "PROXDIV_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a mixture to a data file.
    Estimate {
        /// One observation per line; '#' starts a comment.
        data: PathBuf,
        #[command(flatten)]
        settings: Settings,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment plan.
    Simulate(SimulateArgs),
    /// Per-iteration trace of the proximal iteration.
    Trace {
        data: PathBuf,
        #[command(flatten)]
        settings: Settings,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Plan file (TOML or .json) or the name of a bundled plan.
    #[arg(long, required_unless_present = "from_report")]
    plan: Option<String>,
    /// Re-read a JSON report written earlier and print its table.
    #[arg(long, conflicts_with = "plan")]
    from_report: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output prefix: writes PREFIX.csv and PREFIX.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum EstimatorName {
    ClassicalDual,
    KernelDual,
    Mdpd,
    NegLoglik,
    Em,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Settings {
    /// gaussian2 or weibull2.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorName>,
    /// hellinger, kl, mkl or cressie-read:<γ>.
    #[arg(long)]
    divergence: Option<String>,
    /// Cressie-Read index; overrides --divergence.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// MDPD tuning constant.
    #[arg(long)]
    a: Option<f64>,
    /// Kernel bandwidth; Silverman's rule when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Weight margin: λ is kept in [η, 1 − η].
    #[arg(long)]
    eta: Option<f64>,
    /// Box for the component parameters, as LO,HI.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu_box: Option<Vec<f64>>,
    /// Initial point λ,θ1,θ2; a gated random draw when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Proximal generator ψ.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    eps_phi: Option<f64>,
    #[arg(long)]
    x_tol: Option<f64>,
    #[arg(long)]
    f_tol: Option<f64>,
    #[arg(long)]
    quad_abs_tol: Option<f64>,
    #[arg(long)]
    quad_rel_tol: Option<f64>,
    #[arg(skip)]
    #[serde(default)]
    format: Option<Format>,
}

macro_rules! overlay {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    fn overlay(self, base: Settings) -> Settings {
        overlay!(self, base; model, estimator, divergence, gamma, a, bandwidth, eta, mu_box, start, seed,
            generator, beta, max_iter, eps_d, eps_phi, x_tol, f_tol, quad_abs_tol, quad_rel_tol, format)
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Estimation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Estimation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

/// Configuration mistakes exit with 2, numerical failures with 3.
fn classify(e: Error) -> CliError {
    match e {
        Error::InvalidParameter(_) | Error::Domain { .. } | Error::Plan { .. } => CliError::Usage(e.to_string()),
        other => CliError::Estimation(other.to_string()),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load_settings(path: Option<&Path>) -> Result<Settings, CliError> {
    let Some(path) = path else {
        return Ok(Settings::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

struct Job {
    model: MixtureModel,
    estimator: EstimatorName,
    choice: ObjectiveChoice,
    proximal: ProximalConfig,
    quadrature: QuadratureConfig,
    start: Option<ParamVector>,
    seed: u64,
}

impl Job {
    fn from_settings(s: &Settings) -> Result<Job, CliError> {
        let usage = |e: Error| CliError::Usage(e.to_string());
        let mut model: MixtureModel = s.model.as_deref().unwrap_or("gaussian2").parse().map_err(usage)?;
        if let Some(eta) = s.eta {
            model = model.with_eta(eta).map_err(usage)?;
        }
        if let Some(b) = &s.mu_box {
            if b.len() != 2 {
                return Err(CliError::Usage(format!("--mu-box needs LO,HI, got {} values", b.len())));
            }
            model = model.with_theta_box(b[0], b[1]).map_err(usage)?;
        }
        let divergence = match (s.gamma, s.divergence.as_deref()) {
            (Some(g), _) => DivergenceSpec::cressie_read(g).map_err(usage)?,
            (None, Some(d)) => d.parse().map_err(usage)?,
            (None, None) => DivergenceSpec::Hellinger,
        };
        let estimator = s.estimator.unwrap_or(EstimatorName::KernelDual);
        let choice = match estimator {
            EstimatorName::ClassicalDual => ObjectiveChoice::ClassicalDual { divergence },
            EstimatorName::KernelDual => ObjectiveChoice::KernelDual {
                divergence,
                bandwidth: s.bandwidth,
            },
            EstimatorName::Mdpd => ObjectiveChoice::Mdpd { a: s.a.unwrap_or(0.5) },
            EstimatorName::NegLoglik | EstimatorName::Em => ObjectiveChoice::NegLogLikelihood,
        };

        let mut proximal = if estimator == EstimatorName::Em {
            ProximalConfig::em_equivalent()
        } else {
            ProximalConfig::default()
        };
        if let Some(g) = &s.generator {
            proximal.generator = ProximalGenerator(g.parse().map_err(usage)?);
        }
        if let Some(beta) = s.beta {
            proximal.beta = BetaSchedule::Constant { beta };
        }
        let stop = &mut proximal.stop;
        stop.max_iter = s.max_iter.unwrap_or(stop.max_iter);
        stop.eps_d = s.eps_d.unwrap_or(stop.eps_d);
        stop.eps_phi = s.eps_phi.unwrap_or(stop.eps_phi);
        let opt = &mut proximal.optimizer;
        opt.x_tol = s.x_tol.unwrap_or(opt.x_tol);
        opt.f_tol = s.f_tol.unwrap_or(opt.f_tol);
        proximal.validate().map_err(usage)?;

        let mut quadrature = QuadratureConfig::default();
        quadrature.abs_tol = s.quad_abs_tol.unwrap_or(quadrature.abs_tol);
        quadrature.rel_tol = s.quad_rel_tol.unwrap_or(quadrature.rel_tol);
        quadrature.validate().map_err(usage)?;

        let start = match &s.start {
            Some(v) => {
                if v.len() != 3 {
                    return Err(CliError::Usage(format!("--start needs λ,θ1,θ2, got {} values", v.len())));
                }
                let p = ParamVector::from_slice(v);
                model.validate(&p).map_err(usage)?;
                Some(p)
            }
            None => None,
        };
        Ok(Job {
            model,
            estimator,
            choice,
            proximal,
            quadrature,
            start,
            seed: s.seed.unwrap_or(42),
        })
    }

    fn label(&self) -> String {
        match self.estimator {
            EstimatorName::Em => "em".into(),
            _ => match self.choice {
                ObjectiveChoice::ClassicalDual { divergence } => format!("classical-dual({divergence})"),
                ObjectiveChoice::KernelDual { divergence, .. } => format!("kernel-dual({divergence})"),
                ObjectiveChoice::Mdpd { a } => format!("mdpd(a={a})"),
                ObjectiveChoice::NegLogLikelihood => "neg-loglik".into(),
            },
        }
    }

    fn trace(&self, sample: Sample) -> Result<ProximalTrace, CliError> {
        let start = match self.start {
            Some(p) => p,
            None => InitStrategy::default()
                .start_seeded(&self.model, &sample, self.seed)
                .map_err(classify)?,
        };
        let obj = self
            .choice
            .build(self.model, sample)
            .and_then(|o| o.with_quadrature(self.quadrature))
            .map_err(classify)?;
        let trace = if self.estimator == EstimatorName::Em {
            em_trace(&obj, &start, &self.proximal)
        } else {
            run(&obj, &start, &self.proximal)
        };
        trace.map_err(|e| CliError::Estimation(e.to_string()))
    }
}

/// EM iterates in the same record layout as a proximal trace.
fn em_trace(obj: &Objective, start: &ParamVector, cfg: &ProximalConfig) -> proxdiv::Result<ProximalTrace> {
    let model = &obj.model;
    let mut phi = model.clamp(start);
    let d0 = obj.eval(&phi)?;
    let record = |k, phi: &ParamVector, d: f64, penalty, step_norm, ok| TraceRecord {
        k,
        lambda: phi.lambda,
        theta1: phi.theta[0],
        theta2: phi.theta[1],
        objective: d,
        log1p_objective: d.ln_1p(),
        penalty,
        step_norm,
        monotone_ok: ok,
    };
    let mut records = vec![record(0, &phi, d0, 0.0, 0.0, true)];
    let mut prev = d0;
    let psi = ProximalGenerator::modified_kl();
    for k in 1..=cfg.stop.max_iter {
        let next = model.clamp(&model.em_step(&phi, &obj.sample)?);
        let d = obj.eval(&next)?;
        let step = next.distance(&phi);
        if step < cfg.stop.eps_phi && (d - prev).abs() < cfg.stop.eps_d {
            return Ok(ProximalTrace {
                records,
                stop: StopReason::FixedPoint,
            });
        }
        let penalty = d_psi(model, &next, &phi, &obj.sample, &psi)?;
        records.push(record(k, &next, d, penalty, step, d <= prev + proxdiv::proximal::MONOTONE_SLACK));
        let dd = (d - prev).abs();
        phi = next;
        prev = d;
        if step < cfg.stop.eps_phi || dd < cfg.stop.eps_d {
            return Ok(ProximalTrace {
                records,
                stop: StopReason::Converged,
            });
        }
    }
    Ok(ProximalTrace {
        records,
        stop: StopReason::MaxIter,
    })
}

fn resolve_plan(name: &str) -> Result<PlanFile, CliError> {
    let key = name.trim_end_matches(".plan").trim_end_matches(".toml");
    if let Some((_, text)) = BUNDLED_PLANS.iter().find(|(n, _)| *n == key) {
        if !Path::new(name).exists() {
            return PlanFile::from_toml_str(text).map_err(classify);
        }
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(CliError::Io(format!("{name}: no such plan file or bundled plan")));
    }
    PlanFile::load(path).map_err(classify)
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    use std::io::Write;
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn cmd_estimate(settings: Settings, data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let job = Job::from_settings(&settings)?;
    let sample = data::read_sample(data)?;
    let trace = job.trace(sample)?;
    let last = trace.records.last().expect("trace has a first row");
    let phi = proxdiv::simulation::canonical(&job.model, last.phi());
    let record = output::EstimateRecord {
        model: job.model.name().into(),
        estimator: job.label(),
        lambda: phi.lambda,
        theta1: phi.theta[0],
        theta2: phi.theta[1],
        objective: last.objective,
        iterations: trace.iterations(),
        stop: trace.stop,
    };
    let bytes = output::estimate(&record, job.model.theta_label(), settings.format.unwrap_or_default())?;
    write_out(out, &bytes)
}

fn cmd_trace(settings: Settings, data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let job = Job::from_settings(&settings)?;
    let sample = data::read_sample(data)?;
    let trace = job.trace(sample)?;
    log::info!("{}: {} iterations, stop: {:?}", job.label(), trace.iterations(), trace.stop);
    let bytes = output::trace(&trace, job.model.theta_label(), settings.format.unwrap_or_default())?;
    write_out(out, &bytes)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let reports: Vec<ExperimentReport> = if let Some(path) = &args.from_report {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
    } else {
        let mut file = resolve_plan(args.plan.as_deref().expect("required by clap"))?;
        file.replications = args.replications.unwrap_or(file.replications);
        file.seed = args.seed.unwrap_or(file.seed);
        file.jobs = args.jobs.unwrap_or(file.jobs);
        let plans = file.expand().map_err(classify)?;
        let mut reports = Vec::new();
        for plan in &plans {
            log::info!("{} [{}]: {} replications of n = {}", plan.name, plan.contamination, plan.replications, plan.n);
            let t = Instant::now();
            let report = proxdiv::simulation::run_experiment(plan).map_err(classify)?;
            log::info!("{} [{}]: done in {:.1?}", plan.name, plan.contamination, t.elapsed());
            reports.push(report);
        }
        reports
    };

    let csv = output::table(&reports)?;
    let json = serde_json::to_vec_pretty(&reports).map_err(|e| CliError::Io(e.to_string()))?;
    match &args.out {
        Some(prefix) => {
            write_out(Some(&prefix.with_extension("csv")), &csv)?;
            write_out(Some(&prefix.with_extension("json")), &json)
        }
        None => match args.format.unwrap_or_default() {
            Format::Csv => write_out(None, &csv),
            Format::Json => write_out(None, &json),
        },
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = load_settings(cli.config.as_deref())?;
    match cli.command {
        Command::Estimate {
            data,
            mut settings,
            format,
            out,
        } => {
            settings.format = format;
            cmd_estimate(settings.overlay(file), &data, out.as_deref())
        }
        Command::Trace {
            data,
            mut settings,
            format,
            out,
        } => {
            settings.format = format;
            cmd_trace(settings.overlay(file), &data, out.as_deref())
        }
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
