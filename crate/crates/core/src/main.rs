use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use ssl_lab::optim::SolverConfig;
use ssl_lab::responsibility::{self, ResponsibilityError};
use ssl_lab::risk::{self, RiskError};
use ssl_lab::safe_learner::{self, AdversaryMode, SafeLearnerError, MAX_EXHAUSTIVE};
use ssl_lab::workbench::{self, DataSource, ExperimentConfig, Suite, SyntheticSpec, WorkbenchError};
use ssl_lab::{LabeledDataset, LossKind, LossSpec, RiskConfig, UnlabeledDataset, Weights};

#[derive(Parser)]
#[command(name = "ssl-lab", version, about = "Pessimistic semi-supervised learning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the supervised classifier.
    Fit(Common),
    /// Per-object responsibilities that reproduce the supervised fit.
    Recover(Common),
    /// Worst-case labeling for a random perturbation of the supervised fit.
    Adversary {
        #[command(flatten)]
        common: Common,
        /// Norm of the perturbation.
        #[arg(long, default_value_t = 0.1)]
        perturb: f64,
    },
    /// Pessimistic (minimax) semi-supervised fit.
    Minimax(Common),
    /// Attainability of the supervised fit and the closed-form conditions.
    Conditions(Common),
    /// Run a verification suite and write a report.
    Suite {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "all")]
        suite: String,
        /// Number of synthetic instances.
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "logistic")]
    loss: String,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// CSV file with a `label` column (+1, -1 or ?).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic data as d,L,U,mu,sigma.
    #[arg(long)]
    synthetic: Option<String>,
    /// Seed; the SSL_LAB_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

enum Failure {
    Usage(String),
    Assertion(String),
}

impl From<WorkbenchError> for Failure {
    fn from(e: WorkbenchError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<RiskError> for Failure {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::Dimension(_) | RiskError::InvalidData(_) | RiskError::Precondition(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Assertion(other.to_string()),
        }
    }
}

impl From<ResponsibilityError> for Failure {
    fn from(e: ResponsibilityError) -> Self {
        match e {
            ResponsibilityError::Risk(r) => r.into(),
            ResponsibilityError::UnsupportedLoss(_) | ResponsibilityError::Dimension(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Assertion(other.to_string()),
        }
    }
}

impl From<SafeLearnerError> for Failure {
    fn from(e: SafeLearnerError) -> Self {
        match e {
            SafeLearnerError::Risk(r) => r.into(),
            SafeLearnerError::UnsupportedLoss(..) | SafeLearnerError::Precondition(_) | SafeLearnerError::Rank(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Assertion(other.to_string()),
        }
    }
}

struct Setup {
    loss: LossSpec,
    cfg: RiskConfig,
    solver: SolverConfig,
    source: DataSource,
    seed: u64,
    out: Option<PathBuf>,
}

impl Common {
    fn setup(&self) -> Result<Setup, Failure> {
        let loss: LossSpec = self.loss.parse().map_err(|e: ssl_lab::loss::LossError| Failure::Usage(e.to_string()))?;
        let cfg = RiskConfig::new(self.lambda)?;
        let mut solver = SolverConfig::default();
        if let Some(t) = self.grad_tol {
            solver.grad_tol = t;
        }
        if let Some(n) = self.max_iters {
            solver.max_iters = n;
        }
        solver.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        let seed = match std::env::var("SSL_LAB_SEED") {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("SSL_LAB_SEED=`{s}` is not an unsigned integer")))?,
            Err(_) => self.seed,
        };
        let source = match (&self.data, &self.synthetic) {
            (Some(path), _) => DataSource::Csv(path.clone()),
            (None, Some(spec)) => DataSource::Synthetic(SyntheticSpec::parse(spec)?),
            (None, None) => return Err(Failure::Usage("one of --data or --synthetic is required".into())),
        };
        Ok(Setup {
            loss,
            cfg,
            solver,
            source,
            seed,
            out: self.out.clone(),
        })
    }
}

impl Setup {
    fn datasets(&self) -> Result<(LabeledDataset, UnlabeledDataset, rand_chacha::ChaCha8Rng), Failure> {
        let mut rng = workbench::instance_rng(self.seed, 0);
        let (data, unl) = match &self.source {
            DataSource::Csv(path) => workbench::load_csv(path)?,
            DataSource::Synthetic(spec) => workbench::generate_synthetic(spec, &mut rng)?,
        };
        Ok((data, unl, rng))
    }

    fn need_unlabeled(&self, unl: &UnlabeledDataset) -> Result<(), Failure> {
        if unl.is_empty() {
            return Err(Failure::Usage("the data have no unlabeled rows".into()));
        }
        Ok(())
    }

    fn emit<T: Serialize>(&self, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).expect("results serialize");
        match &self.out {
            Some(path) => {
                fs::write(path, text + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                info!("wrote {}", path.display());
            }
            None => print_stdout(&text)?,
        }
        Ok(())
    }
}

/// A closed pipe (`ssl-lab ... | head`) is not an error.
fn print_stdout(text: &str) -> Result<(), Failure> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Usage(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fit(common) => {
            let s = common.setup()?;
            let (data, unl, _) = s.datasets()?;
            let w = risk::fit_supervised(&s.loss, &data, &s.cfg, &s.solver)?;
            let value = risk::supervised_risk(&s.loss, &w, &data, &s.cfg)?;
            s.emit(&json!({ "loss": s.loss.name(), "lambda": s.cfg.lambda, "labeled": data.len(), "unlabeled": unl.len(), "w_sup": w, "risk": value }))
        }
        Command::Recover(common) => {
            let s = common.setup()?;
            let (data, unl, _) = s.datasets()?;
            s.need_unlabeled(&unl)?;
            let w = risk::fit_supervised(&s.loss, &data, &s.cfg, &s.solver)?;
            let rec = responsibility::recover_q(&s.loss, &w, &unl)?;
            s.emit(&json!({ "w_sup": w, "recovery": rec }))
        }
        Command::Adversary { common, perturb } => {
            let s = common.setup()?;
            let (data, unl, mut rng) = s.datasets()?;
            s.need_unlabeled(&unl)?;
            if !(perturb >= 0.0 && perturb.is_finite()) {
                return Err(Failure::Usage(format!("--perturb must be a non-negative number, got {perturb}")));
            }
            let w_sup = risk::fit_supervised(&s.loss, &data, &s.cfg, &s.solver)?;
            let dir = nalgebra::DVector::from_fn(data.dim(), |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let w = Weights::new(w_sup.as_vector() + dir.normalize() * perturb);
            let mode = if unl.len() <= MAX_EXHAUSTIVE { AdversaryMode::Hard } else { AdversaryMode::Soft };
            let adv = safe_learner::adversary_max(&s.loss, &w, &w_sup, &data, &unl, &s.cfg, mode)?;
            s.emit(&json!({ "w": w, "w_sup": w_sup, "mode": mode, "adversary": adv }))
        }
        Command::Minimax(common) => {
            let s = common.setup()?;
            let (data, unl, _) = s.datasets()?;
            s.need_unlabeled(&unl)?;
            match safe_learner::minimax_fit(&s.loss, &data, &unl, &s.cfg, &s.solver) {
                Ok(r) => s.emit(&r),
                Err(SafeLearnerError::SaddleQuality { gap, result }) => {
                    s.emit(&*result)?;
                    Err(Failure::Assertion(format!("duality gap {gap:.3e} exceeds the saddle tolerance")))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Conditions(common) => {
            let s = common.setup()?;
            let (data, unl, _) = s.datasets()?;
            s.need_unlabeled(&unl)?;
            let w_sup = risk::fit_supervised(&s.loss, &data, &s.cfg, &s.solver)?;
            let general = responsibility::in_constraint_set(&s.loss, &w_sup, &data, &unl, &s.cfg)?;
            let quadratic = if s.loss.kind() == LossKind::Quadratic {
                Some(responsibility::quadratic_improvement_condition(&s.loss, &unl, &w_sup)?)
            } else {
                None
            };
            let outside = if s.loss.has_outside_margin_signature() {
                Some(responsibility::outside_margin_condition(&s.loss, &unl, &w_sup)?)
            } else {
                None
            };
            s.emit(&json!({ "w_sup": w_sup, "verdict": general, "quadratic": quadratic, "all_outside_margin": outside }))
        }
        Command::Suite { common, suite, instances } => {
            let s = common.setup()?;
            let suite: Suite = suite.parse()?;
            let config = ExperimentConfig {
                loss: common.loss.clone(),
                lambda: s.cfg.lambda,
                source: s.source.clone(),
                seed: s.seed,
                suite,
                output: s.out.clone(),
                solver: s.solver,
                instances,
            };
            let report = workbench::run_suite(&config)?;
            match &s.out {
                Some(path) => fs::write(path, report.to_json() + "\n")
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
                None => print_stdout(&report.to_json())?,
            }
            for (record, check) in report.failed_checks() {
                eprintln!("FAIL [{} #{} {}] {}: {}", record.suite, record.instance, record.variant, check.property, check.detail);
            }
            for record in report.records.iter().filter(|r| r.error.is_some()) {
                eprintln!("ERROR [{} #{} {}] {}", record.suite, record.instance, record.variant, record.error.as_deref().unwrap_or(""));
            }
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Assertion("some checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("ssl-lab: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("ssl-lab: {msg}");
            ExitCode::from(2)
        }
    }
}
