//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::decoding::DecodeConfig;
use crate::descent::correlation_slack;
use crate::descent::{run_descent, CorrelationParams, DescentConfig};
use crate::genmodel::support_stats;
use crate::genmodel::{
    draw_batch, generate_dictionary, generate_orthonormal_dictionary, perturb_columns, CoeffLaw,
    ModelParams,
};
use crate::init::{pairwise_init, InitConfig, InitInput, MomentSource};
use crate::io::{load_matrix, save_matrix, trace_to_csv, KeyValues};
use crate::metrics::nearness;
use crate::numerics::{spectral_norm, Matrix, DEFAULT_TOL};
use crate::updates::{
    empirical_gradient, expected_gradient, GradientMode, ProjectionSetB, UpdateRule,
};
use crate::Error;

#[derive(Debug, Parser)]
#[command(
    name = "sparsecode",
    version,
    about = "Sparse coding by alternating minimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DictKind {
    Gaussian,
    Orthonormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Simple,
    Of,
    Unbiased,
}

impl From<RuleArg> for UpdateRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Simple => UpdateRule::Simple,
            RuleArg::Of => UpdateRule::OlshausenField,
            RuleArg::Unbiased => UpdateRule::Unbiased,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Empirical,
    Oracle,
}

impl From<ModeArg> for GradientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Empirical => GradientMode::Empirical,
            ModeArg::Oracle => GradientMode::AnalyticOracle,
        }
    }
}

/// Sparsity and coefficient law shared by the model-aware commands.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Nonzeros per code.
    #[arg(long)]
    pub k: usize,
    /// Smallest coefficient magnitude for signed-uniform codes; Rademacher when absent.
    #[arg(long)]
    pub coeff_low: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

impl ModelArgs {
    fn params(&self, n: usize, m: usize) -> Result<ModelParams, Error> {
        let law = match self.coeff_low {
            Some(low) => CoeffLaw::SignedUniform { low },
            None => CoeffLaw::Rademacher,
        };
        Ok(ModelParams::new(n, m, self.k, law, self.noise)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a ground-truth dictionary with unit columns.
    GenDict {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DictKind::Gaussian)]
        kind: DictKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples y = A* x* + noise as the columns of a matrix.
    GenSamples {
        #[arg(long)]
        dict: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Column-wise perturbation of a dictionary by exactly `delta`.
    Perturb {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise initialization from a ground truth or from samples.
    Init {
        /// Ground truth; samples are drawn from the model.
        #[arg(long, conflicts_with = "samples", required_unless_present = "samples")]
        truth: Option<PathBuf>,
        /// Observed samples: the first p1 columns form pairs, the next p2 the moments.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Number of atoms (needed with --samples).
        #[arg(long)]
        m: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        p1: Option<usize>,
        #[arg(long)]
        p2: Option<usize>,
        #[arg(long)]
        sigma1_floor: Option<f64>,
        #[arg(long)]
        sigma2_ceil: Option<f64>,
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long)]
        oracle_moment: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run alternating minimization from an initial dictionary.
    Learn {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = RuleArg::Simple)]
        rule: RuleArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Empirical)]
        mode: ModeArg,
        /// Step size is eta_scale * m / k.
        #[arg(long, default_value_t = 0.25)]
        eta_scale: f64,
        #[arg(long, default_value_t = 25)]
        iterations: usize,
        #[arg(long, default_value_t = 20_000)]
        p: usize,
        /// Project onto the set anchored at the initial dictionary with this column radius.
        #[arg(long)]
        project_delta0: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compare a dictionary to a reference up to sign and permutation.
    Eval {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta_target: f64,
        #[arg(long, default_value_t = 2.0)]
        kappa_target: f64,
    },
    /// Per-column error and correlation slack of one update direction.
    Diagnose {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = RuleArg::Simple)]
        rule: RuleArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Oracle)]
        mode: ModeArg,
        #[arg(long, default_value_t = 20_000)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dictionary generation, initialization, learning and evaluation from one config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(Error::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load(path: &Path) -> Result<Matrix, Error> {
    Ok(load_matrix(path)?)
}

/// Runs one command and returns what it prints on success.
pub fn execute(cmd: Command) -> Result<String, Error> {
    match cmd {
        Command::GenDict {
            n,
            m,
            seed,
            kind,
            out,
        } => {
            let a = match kind {
                DictKind::Gaussian => generate_dictionary(n, m, seed)?,
                DictKind::Orthonormal => generate_orthonormal_dictionary(n, m, seed)?,
            };
            save_matrix(&out, &a)?;
            Ok(format!("wrote {n}x{m} dictionary to {}\n", out.display()))
        }
        Command::GenSamples {
            dict,
            model,
            p,
            seed,
            out,
        } => {
            let a = load(&dict)?;
            let params = model.params(a.rows(), a.cols())?;
            let batch = draw_batch(&a, &params, p, seed, 0)?;
            save_matrix(&out, &batch.samples)?;
            Ok(format!("wrote {p} samples to {}\n", out.display()))
        }
        Command::Perturb {
            dict,
            delta,
            seed,
            out,
        } => {
            let a = load(&dict)?;
            save_matrix(&out, &perturb_columns(&a, delta, seed)?)?;
            Ok(format!("wrote perturbed dictionary to {}\n", out.display()))
        }
        Command::Init {
            truth,
            samples,
            m,
            model,
            p1,
            p2,
            sigma1_floor,
            sigma2_ceil,
            max_pairs,
            oracle_moment,
            seed,
            out,
        } => {
            let (astar, data) = match (&truth, &samples) {
                (Some(t), _) => (Some(load(t)?), None),
                (None, Some(s)) => (None, Some(load(s)?)),
                (None, None) => return Err(Error::Usage("need --truth or --samples".into())),
            };
            let (n, m) = match (&astar, &data, m) {
                (Some(a), _, _) => (a.rows(), a.cols()),
                (None, Some(y), Some(m)) => (y.rows(), m),
                _ => return Err(Error::Usage("--m is required with --samples".into())),
            };
            let params = model.params(n, m)?;
            let mut cfg = InitConfig::defaults(&params, seed);
            if let Some(y) = &data {
                let half = y.cols() / 2;
                cfg.p1 = p1.unwrap_or(half.min(cfg.p1));
                cfg.p2 = p2.unwrap_or(y.cols() - cfg.p1);
            } else {
                cfg.p1 = p1.unwrap_or(cfg.p1);
                cfg.p2 = p2.unwrap_or(cfg.p2);
            }
            cfg.sigma1_floor = sigma1_floor.unwrap_or(cfg.sigma1_floor);
            cfg.sigma2_ceil = sigma2_ceil.unwrap_or(cfg.sigma2_ceil);
            cfg.max_pairs = max_pairs.unwrap_or(cfg.max_pairs);
            if oracle_moment {
                cfg.moment = MomentSource::Oracle;
            }
            let input = match (&astar, &data) {
                (Some(a), _) => InitInput::Synthetic { astar: a },
                (None, Some(y)) => InitInput::Data { samples: y },
                _ => unreachable!(),
            };
            let res = pairwise_init(input, &params, &cfg)?;
            save_matrix(&out, &res.dictionary)?;
            let mut s = format!(
                "accepted {} atoms after {} pairs; wrote {}\n",
                res.candidates.len(),
                res.pairs_tried,
                out.display()
            );
            if let Some(a) = &astar {
                let r = nearness(&res.dictionary, a, 0.25, 2.0)?;
                writeln!(
                    s,
                    "columns within 0.25: {}/{}; delta {}",
                    r.columns_within(0.25),
                    m,
                    r.delta
                )
                .unwrap();
            }
            Ok(s)
        }
        Command::Learn {
            truth,
            init,
            model,
            rule,
            mode,
            eta_scale,
            iterations,
            p,
            project_delta0,
            seed,
            out,
            trace,
        } => {
            let astar = load(&truth)?;
            let a0 = load(&init)?;
            let params = model.params(astar.rows(), astar.cols())?;
            let project = match project_delta0 {
                Some(d) => Some(ProjectionSetB::new(
                    a0.clone(),
                    d,
                    2.0 * spectral_norm(&astar, DEFAULT_TOL)?,
                )?),
                None => None,
            };
            let cfg = DescentConfig {
                rule: rule.into(),
                eta: DescentConfig::eta_for(&params, eta_scale),
                iterations,
                p_per_iter: p,
                mode: mode.into(),
                project,
                seed,
            };
            let (a, tr) = run_descent(&astar, &a0, &params, &cfg)?;
            save_matrix(&out, &a)?;
            fs::write(&trace, trace_to_csv(&tr)).map_err(|e| Error::Runtime(e.to_string()))?;
            let last = tr.final_record().expect("trace has iterations + 1 records");
            Ok(format!(
                "final max column error {} after {} iterations\n",
                last.max_col_err, iterations
            ))
        }
        Command::Eval {
            dict,
            reference,
            delta_target,
            kappa_target,
        } => {
            let a = load(&dict)?;
            let r = load(&reference)?;
            let report = nearness(&a, &r, delta_target, kappa_target)?;
            Ok(format!("{}\n", report.to_json()))
        }
        Command::Diagnose {
            truth,
            dict,
            model,
            rule,
            mode,
            p,
            seed,
        } => {
            let astar = load(&truth)?;
            let a = load(&dict)?;
            let params = model.params(astar.rows(), astar.cols())?;
            let g = match GradientMode::from(mode) {
                GradientMode::AnalyticOracle => {
                    expected_gradient(rule.into(), &a, &astar, &support_stats(&params))?
                }
                GradientMode::Empirical => {
                    let b = draw_batch(&astar, &params, p, seed, 0)?;
                    empirical_gradient(
                        rule.into(),
                        &a,
                        &b.samples,
                        &DecodeConfig::for_model(&params),
                    )?
                }
            };
            let cp = CorrelationParams::for_model(&params);
            let mut s = String::from("column,error,slack\n");
            for i in 0..a.cols() {
                let err = a
                    .column(i)
                    .iter()
                    .zip(astar.column(i))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let slack = correlation_slack(g.g.column(i), a.column(i), astar.column(i), &cp)?;
                writeln!(s, "{i},{err},{slack}").unwrap();
            }
            Ok(s)
        }
        Command::Experiment { config } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| Error::Runtime(format!("{}: {e}", config.display())))?;
            run_experiment(&text)
        }
    }
}

/// Keys accepted by `experiment` config files.
pub const EXPERIMENT_KEYS: &[&str] = &[
    "n",
    "m",
    "k",
    "coeff_low",
    "noise_sigma",
    "dictionary",
    "dict_seed",
    "init",
    "init_delta",
    "init_p1",
    "init_p2",
    "sigma1_floor",
    "sigma2_ceil",
    "max_pairs",
    "init_moment",
    "rule",
    "mode",
    "eta_scale",
    "iterations",
    "p_per_iter",
    "project_delta0",
    "seed",
    "delta_target",
    "kappa_target",
    "out_dir",
];

/// Runs generation → initialization → learning → evaluation and writes
/// `truth.scmx`, `init.scmx`, `final.scmx`, `trace.csv` and `report.json`
/// into `out_dir`.
pub fn run_experiment(text: &str) -> Result<String, Error> {
    let kv = KeyValues::parse(text, EXPERIMENT_KEYS)?;
    let n: usize = kv.require("n")?;
    let m: usize = kv.require("m")?;
    let k: usize = kv.require("k")?;
    let law = match kv.get::<f64>("coeff_low")? {
        Some(low) => CoeffLaw::SignedUniform { low },
        None => CoeffLaw::Rademacher,
    };
    let params = ModelParams::new(n, m, k, law, kv.get_or("noise_sigma", 0.0)?)?;
    let seed: u64 = kv.get_or("seed", 0)?;
    let out_dir = PathBuf::from(kv.require::<String>("out_dir")?);
    fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Runtime(format!("{}: {e}", out_dir.display())))?;

    let dict_seed: u64 = kv.get_or("dict_seed", seed)?;
    let astar = match kv.get_or("dictionary", "gaussian".to_string())?.as_str() {
        "gaussian" => generate_dictionary(n, m, dict_seed)?,
        "orthonormal" => generate_orthonormal_dictionary(n, m, dict_seed)?,
        other => return Err(Error::Usage(format!("unknown dictionary kind {other:?}"))),
    };

    let a0 = match kv.get_or("init", "perturb".to_string())?.as_str() {
        "perturb" => perturb_columns(&astar, kv.get_or("init_delta", 0.1)?, seed)?,
        "pairwise" => {
            let mut cfg = InitConfig::defaults(&params, seed);
            cfg.p1 = kv.get_or("init_p1", cfg.p1)?;
            cfg.p2 = kv.get_or("init_p2", cfg.p2)?;
            cfg.sigma1_floor = kv.get_or("sigma1_floor", cfg.sigma1_floor)?;
            cfg.sigma2_ceil = kv.get_or("sigma2_ceil", cfg.sigma2_ceil)?;
            cfg.max_pairs = kv.get_or("max_pairs", cfg.max_pairs)?;
            cfg.moment = match kv.get_or("init_moment", "empirical".to_string())?.as_str() {
                "empirical" => MomentSource::Empirical,
                "oracle" => MomentSource::Oracle,
                other => return Err(Error::Usage(format!("unknown init_moment {other:?}"))),
            };
            let out = pairwise_init(InitInput::Synthetic { astar: &astar }, &params, &cfg)?;
            // learning compares columns by index, so put the estimate in the
            // ground truth's order and signs first
            let r = nearness(&out.dictionary, &astar, 1.0, 2.0)?;
            crate::metrics::align(&out.dictionary, &r.permutation, &r.signs)?
        }
        other => return Err(Error::Usage(format!("unknown init {other:?}"))),
    };

    let rule: UpdateRule = kv
        .get_or("rule", "simple".to_string())?
        .parse()
        .map_err(Error::Usage)?;
    let mode: GradientMode = kv
        .get_or("mode", "empirical".to_string())?
        .parse()
        .map_err(Error::Usage)?;
    let project = match kv.get::<f64>("project_delta0")? {
        Some(d) => Some(ProjectionSetB::new(
            a0.clone(),
            d,
            2.0 * spectral_norm(&astar, DEFAULT_TOL)?,
        )?),
        None => None,
    };
    let cfg = DescentConfig {
        rule,
        eta: DescentConfig::eta_for(&params, kv.get_or("eta_scale", 0.25)?),
        iterations: kv.require("iterations")?,
        p_per_iter: kv.get_or("p_per_iter", 20_000)?,
        mode,
        project,
        seed,
    };
    let (a, trace) = run_descent(&astar, &a0, &params, &cfg)?;
    let report = nearness(
        &a,
        &astar,
        kv.get_or("delta_target", 0.1)?,
        kv.get_or("kappa_target", 2.0)?,
    )?;

    save_matrix(&out_dir.join("truth.scmx"), &astar)?;
    save_matrix(&out_dir.join("init.scmx"), &a0)?;
    save_matrix(&out_dir.join("final.scmx"), &a)?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::Runtime(format!("{}: {e}", p.display())))
    };
    write("trace.csv", trace_to_csv(&trace))?;
    write("report.json", report.to_json())?;
    Ok(format!("{}\n", report.to_json()))
}
