//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::case_io::{load_se_case, read_case, save_se_case, se_case_to_json, serialize_case, PfResultsFile, ResultsFile};
use crate::casegen::{generate_se_case, NoiseSpec};
use crate::error::{Error, Result};
use crate::evaluation::{bus_squared_errors, run_trials, sigma_max, sigma_ss, CiOptions, Measure, Model, StopReason, TrialConfig};
use crate::montecarlo::{histograms_csv, run_mc, McConfig};
use crate::network::PerturbationSpec;
use crate::nonlinear_se::{NlInit, NlOptions};
use crate::powerflow::{solve_power_flow, PfInit, PfOptions};
use crate::synth::{synthetic_grid, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "gridse", version, about = "Equivalent-circuit power-grid state estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for Monte Carlo and trials (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    /// Output file (stdout when omitted).
    #[arg(short = 'o', long = "output", global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the power flow of a MATPOWER case.
    Pf {
        case: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        /// Start from the case's voltages instead of a flat start.
        #[arg(long)]
        from_case: bool,
    },
    /// Build a synthetic measurement set around the power-flow solution.
    GenCase {
        case: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Run an estimator on a measurement set.
    Estimate {
        secase: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::DeltaI)]
        model: ModelArg,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        /// Per-bus squared voltage errors (needs embedded truth).
        #[arg(long)]
        errors_csv: Option<PathBuf>,
    },
    /// Repeat estimation over fresh measurement noise until the mean error
    /// is known to the requested precision.
    Trials {
        case: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::DeltaI)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = MeasureArg::Ss)]
        measure: MeasureArg,
        /// Confidence level.
        #[arg(long, default_value_t = 0.99)]
        ci: f64,
        /// Target half-width relative to the mean.
        #[arg(long, default_value_t = 0.05)]
        rel: f64,
        #[arg(long, default_value_t = 30)]
        min_trials: usize,
        #[arg(long, default_value_t = 2000)]
        max_trials: usize,
        /// Degraded RTUs keep the regular weight.
        #[arg(long, conflicts_with = "weighted")]
        unweighted: bool,
        /// Degraded RTUs get a reduced weight (default).
        #[arg(long)]
        weighted: bool,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Probabilistic estimation by Monte Carlo sampling.
    Mc {
        secase: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// JSON file with sigma_line_r, sigma_line_x, sigma_xfmr_r, sigma_xfmr_x.
        #[arg(long, conflicts_with = "temperature")]
        net_uncertainty: Option<PathBuf>,
        /// Use the temperature-driven series-parameter uncertainties.
        #[arg(long)]
        temperature: bool,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        #[arg(long, default_value_t = 500)]
        pilot: usize,
        /// Directory for vm_hist.csv and va_hist.csv.
        #[arg(long)]
        hist_dir: Option<PathBuf>,
    },
    /// Write a seeded synthetic grid as a MATPOWER case.
    Synth {
        #[arg(long, default_value_t = 500)]
        buses: usize,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, default_value_t = 0.04)]
    pub pmu_perfect: f64,
    #[arg(long, default_value_t = 0.06)]
    pub pmu_noisy: f64,
    #[arg(long, default_value_t = 0.0002)]
    pub pmu_sigma: f64,
    #[arg(long, default_value_t = 0.004)]
    pub rtu_sigma_vm: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rtu_sigma_pq: f64,
    #[arg(long, default_value_t = 10.0)]
    pub g_pmu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub degraded_frac: f64,
    #[arg(long, default_value_t = 10.0)]
    pub degraded_mult: f64,
    /// Degraded weight divisor is degraded_mult^weight_exponent.
    #[arg(long, default_value_t = 1.0)]
    pub weight_exponent: f64,
    /// Switch all measurement noise off.
    #[arg(long)]
    pub zero_noise: bool,
}

impl NoiseArgs {
    fn spec(&self) -> NoiseSpec {
        let s = NoiseSpec {
            frac_pmu_perfect: self.pmu_perfect,
            frac_pmu_noisy: self.pmu_noisy,
            pmu_sigma_rel: self.pmu_sigma,
            rtu_sigma_vm_rel: self.rtu_sigma_vm,
            rtu_sigma_pq_rel: self.rtu_sigma_pq,
            g_pmu: self.g_pmu,
            rtu_gamma: 1.0,
            degraded_frac: self.degraded_frac,
            degraded_sigma_mult: self.degraded_mult,
            degraded_weight_div: 1.0,
        }
        .with_weight_exponent(self.weight_exponent);
        if self.zero_noise {
            s.noiseless()
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    DeltaI,
    DeltaY,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::DeltaI => Model::DeltaI,
            ModelArg::DeltaY => Model::DeltaY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Ss,
    Max,
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pf {
            case,
            tol,
            max_iter,
            from_case,
        } => {
            let c = read_case(case)?;
            let opt = PfOptions {
                tol: *tol,
                max_iter: *max_iter,
                init: if *from_case { PfInit::FromCase } else { PfInit::Flat },
            };
            let pf = solve_power_flow(&c, &opt)?;
            log::info!("power flow converged in {} iterations", pf.iterations);
            emit(
                &cli.output,
                &to_json(&PfResultsFile {
                    vr: pf.vr,
                    vi: pf.vi,
                    iterations: pf.iterations,
                }),
            )
        }
        Command::GenCase { case, noise } => {
            let c = read_case(case)?;
            let pf = solve_power_flow(&c, &PfOptions::default())?;
            let se = generate_se_case(&pf, &c, &noise.spec(), cli.seed)?;
            match &cli.output {
                Some(p) => save_se_case(&se, p),
                None => emit(&None, &se_case_to_json(&se)),
            }
        }
        Command::Estimate {
            secase,
            model,
            tol,
            max_iter,
            errors_csv,
        } => {
            let se = load_se_case(secase)?;
            let nl = NlOptions {
                tol: *tol,
                max_iter: *max_iter,
                damping: 1.0,
                init: NlInit::FromLinear,
            };
            let est = Model::from(*model).estimate(&se, &nl)?;
            let (ss, mx) = match &se.truth {
                Some((vr, vi)) => (
                    Some(sigma_ss(&est.vr, &est.vi, vr, vi)?),
                    Some(sigma_max(&est.vr, &est.vi, vr, vi)?),
                ),
                None => (None, None),
            };
            if let Some(path) = errors_csv {
                let (vr, vi) = se
                    .truth
                    .as_ref()
                    .ok_or_else(|| Error::Config("--errors-csv needs a measurement set with truth".into()))?;
                let errs = bus_squared_errors(&est.vr, &est.vi, vr, vi)?;
                let mut csv = String::from("bus,squared_error\n");
                for (bus, e) in se.grid.buses.iter().zip(&errs) {
                    csv.push_str(&format!("{},{e:e}\n", bus.id));
                }
                write_file(path, &csv)?;
            }
            emit(
                &cli.output,
                &to_json(&ResultsFile {
                    vr: est.vr,
                    vi: est.vi,
                    objective: est.objective,
                    iterations: est.iterations,
                    converged: est.converged,
                    sigma_ss: ss,
                    sigma_max: mx,
                }),
            )
        }
        Command::Trials {
            case,
            model,
            measure,
            ci,
            rel,
            min_trials,
            max_trials,
            unweighted,
            weighted: _,
            noise,
        } => {
            let c = read_case(case)?;
            let mut spec = noise.spec();
            if *unweighted {
                spec.degraded_weight_div = 1.0;
            }
            let cfg = TrialConfig {
                model: (*model).into(),
                measure: match measure {
                    MeasureArg::Ss => Measure::SigmaSs,
                    MeasureArg::Max => Measure::SigmaMax,
                },
                ci: CiOptions {
                    level: *ci,
                    rel: *rel,
                    min_trials: *min_trials,
                    max_trials: *max_trials,
                },
                seed: cli.seed,
                threads: cli.threads,
                nl: NlOptions::default(),
                pf: PfOptions::default(),
            };
            let stats = run_trials(&c, &spec, &cfg)?;
            let row = format!(
                "case,model,measure,weighted,degraded_frac,trials,mean,ci_half_width,stopped_by,degenerate_mean,failed\n\
                 {},{},{},{},{},{},{:e},{:e},{},{},{}\n",
                c.name,
                cfg.model.name(),
                match measure {
                    MeasureArg::Ss => "sigma_ss",
                    MeasureArg::Max => "sigma_max",
                },
                !*unweighted,
                spec.degraded_frac,
                stats.trials,
                stats.mean,
                stats.ci_half_width,
                match stats.stopped_by {
                    StopReason::Ci => "ci",
                    StopReason::MaxTrials => "max_trials",
                },
                stats.degenerate_mean,
                stats.failed_trials.len(),
            );
            emit(&cli.output, &row)
        }
        Command::Mc {
            secase,
            samples,
            net_uncertainty,
            temperature,
            bins,
            pilot,
            hist_dir,
        } => {
            let se = load_se_case(secase)?;
            let net = match (net_uncertainty, temperature) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    let spec: PerturbationSpec = serde_json::from_str(&text).map_err(|e| Error::Schema {
                        path: p.display().to_string(),
                        reason: e.to_string(),
                    })?;
                    Some(spec)
                }
                (None, true) => Some(PerturbationSpec::TEMPERATURE),
                (None, false) => None,
            };
            let cfg = McConfig {
                samples: *samples,
                seed: cli.seed,
                threads: cli.threads,
                net_uncertainty: net,
                histogram_bins: *bins,
                pilot_samples: (*pilot).min(*samples),
            };
            let summary = run_mc(&se, &cfg)?;
            if let Some(dir) = hist_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_file(&dir.join("vm_hist.csv"), &histograms_csv(&se, &summary.vm_hist))?;
                write_file(&dir.join("va_hist.csv"), &histograms_csv(&se, &summary.va_hist))?;
            }
            emit(&cli.output, &to_json(&summary))
        }
        Command::Synth { buses } => {
            let c = synthetic_grid(&SynthSpec::new(*buses), cli.seed)?;
            emit(&cli.output, &serialize_case(&c))
        }
        Command::Selftest => {
            let checks = crate::selftest::run();
            let mut report = String::new();
            for c in &checks {
                report.push_str(&format!(
                    "{} {}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ));
            }
            emit(&cli.output, &report)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Error::SelftestFailed(failed));
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gridse: {e}");
            e.exit_code()
        }
    }
}
