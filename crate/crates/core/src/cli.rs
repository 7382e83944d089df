//! Command-line front end.
//!
//! Every command reads an embedding set from `--input` or builds one with
//! `--generate M,N,d,clusters`, and writes to `--output` or stdout. Exit
//! status is 0 on success, 1 on bad input or flags, 2 when an internal
//! invariant breaks.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::anchor::{anchor_fraction, calibrate_threshold, plan_text_into_image, reorder};
use crate::anchor::{ImageIntoTextConfig, Mode, SequenceDocument};
use crate::attention::{
    rope_attention_demo, theorem1_csv, theorem1_sweep, verify_theorem1, BiasFamily, BiasModel,
    Theorem1Sweep, Theorem1Trial, DEFAULT_ROPE_BASE,
};
use crate::bench::{run_scaling, BenchGrid};
use crate::error::Error;
use crate::failure::{run_failure_scenario, FailureKind, FailureScenario};
use crate::info::{local_mi_experiment, LocalityWindow};
use crate::synth::{self, ClusteredSpec};
use crate::threshold::{
    gaussian_oracle, optimal_threshold, sweep_csv, sweep_report, CorrespondenceLabels,
    GaussianMixtureSpec, DEFAULT_SWEEP,
};
use crate::tokens::{argmax_match, build_similarity_matrix, EmbeddingSet};

#[derive(Debug, Parser)]
#[command(
    name = "attanchor",
    version,
    about = "Cross-modal attention anchors and their numerical checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Embedding set JSON file.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Write here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Build a clustered synthetic set instead of reading one.
    #[arg(long, value_name = "M,N,d,clusters")]
    pub generate: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Insert anchors and emit the sequence document.
    Reorder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "text-into-image")]
        mode: ModeArg,
        /// Pause tokens appended in think mode.
        #[arg(long, default_value_t = 0)]
        pause_count: usize,
        #[arg(long)]
        think_mode: bool,
    },
    /// Anchor counts over a list of thresholds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP.to_vec())]
        thresholds: Vec<f64>,
    },
    /// Threshold whose anchor fraction reaches a target.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.10)]
        target_fraction: f64,
    },
    /// F1-optimal threshold from labelled pairs.
    Tune {
        #[command(flatten)]
        common: Common,
        /// CSV of `text,image,is_true,score`; defaults to cluster agreement.
        #[arg(long, value_name = "PATH")]
        labels: Option<PathBuf>,
    },
    /// Analytic F1 curve for a two-Gaussian similarity mixture.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu_true: f64,
        #[arg(long, default_value_t = 0.0)]
        mu_false: f64,
        #[arg(long, default_value_t = 0.15)]
        sigma: f64,
        #[arg(long, default_value_t = 0.3)]
        p_true: f64,
    },
    /// Attention ratio of anchored pairs against the additive-bias bound.
    Theorem1 {
        #[command(flatten)]
        common: Common,
        /// Randomized trials when no input is given.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Bias family for pairs from an input set.
        #[arg(long, value_enum, default_value = "linear")]
        family: FamilyArg,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
    /// Rotary attention before and after reordering.
    RopeDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.12)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_ROPE_BASE)]
        base: f64,
    },
    /// Windowed and global mutual information before and after reordering.
    Mi {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.12)]
        threshold: f64,
        #[arg(long, default_value_t = 2)]
        window: usize,
    },
    /// Wall-clock scaling of similarity, insertion and attention.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![64, 128, 256, 512])]
        n_values: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![576])]
        m_values: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![64])]
        d_values: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 0.12)]
        threshold: f64,
        /// Time the parallel similarity path.
        #[arg(long)]
        parallel: bool,
    },
    /// Constructed inputs on which anchoring should not help.
    FailureModes {
        #[command(flatten)]
        common: Common,
        /// One scenario; all three by default.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 0.12)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    TextIntoImage,
    ImageIntoText,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::TextIntoImage => Mode::TextIntoImage,
            ModeArg::ImageIntoText => Mode::ImageIntoText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Linear,
    Logarithmic,
}

impl From<FamilyArg> for BiasFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Linear => BiasFamily::Linear,
            FamilyArg::Logarithmic => BiasFamily::Logarithmic,
        }
    }
}

/// A failed run: exit code plus the field it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub field: String,
    pub message: String,
}

impl CliError {
    fn usage(field: &str, message: impl Into<String>) -> Self {
        Self {
            code: 1,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn from_lib(field: &str, e: Error) -> Self {
        let code = match e {
            Error::IntegrationFailure(_) | Error::MalformedSequence(_) => 2,
            _ => 1,
        };
        Self {
            code,
            field: field.to_string(),
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "error: {}: {}",
            self.field,
            self.message.replace('\n', " ")
        )
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait Field<T> {
    fn field(self, name: &str) -> CliResult<T>;
}

impl<T> Field<T> for crate::Result<T> {
    fn field(self, name: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_lib(name, e))
    }
}

fn threshold_field(t: f64) -> CliResult<f64> {
    crate::anchor::check_threshold(t).field("--threshold")?;
    Ok(t)
}

fn embeddings(c: &Common) -> CliResult<EmbeddingSet> {
    match (&c.input, &c.generate) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "--input",
            "give either --input or --generate, not both",
        )),
        (Some(path), None) => {
            if !path.exists() {
                return Err(CliError::usage(
                    "--input",
                    format!("{} not found", path.display()),
                ));
            }
            EmbeddingSet::load(path).field("--input")
        }
        (None, Some(spec)) => {
            let spec = ClusteredSpec::parse(spec).field("--generate")?;
            synth::clustered(&spec, c.seed).field("--generate")
        }
        (None, None) => Err(CliError::usage(
            "--input",
            "an embedding set is required (--input or --generate)",
        )),
    }
}

fn no_embeddings(c: &Common, command: &str) -> CliResult<()> {
    for (flag, given) in [
        ("--input", c.input.is_some()),
        ("--generate", c.generate.is_some()),
    ] {
        if given {
            return Err(CliError::usage(flag, format!("not used by {command}")));
        }
    }
    Ok(())
}

fn only_format(c: &Common, allowed: &[Format], default: Format) -> CliResult<Format> {
    let f = c.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(CliError::usage(
            "--format",
            format!("{f:?} output is not available for this command").to_lowercase(),
        ));
    }
    Ok(f)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn theorem1_json(trials: &[Theorem1Trial]) -> String {
    let satisfied = trials.iter().filter(|t| t.report.satisfied).count();
    to_json(&json!({
        "trials": trials.len(),
        "satisfied": satisfied,
        "satisfied_rate": if trials.is_empty() { 0.0 } else { satisfied as f64 / trials.len() as f64 },
        "results": trials,
    }))
}

fn execute(cmd: &Command) -> CliResult<String> {
    match cmd {
        Command::Reorder {
            common,
            threshold,
            mode,
            pause_count,
            think_mode,
        } => {
            only_format(common, &[Format::Json], Format::Json)?;
            let t = threshold_field(*threshold)?;
            let cfg =
                ImageIntoTextConfig::new(t, *pause_count, *think_mode).field("--pause-count")?;
            let e = embeddings(common)?;
            let sim = build_similarity_matrix(&e);
            let (_, seq) = reorder(&e, &sim, (*mode).into(), &cfg).field("--mode")?;
            let doc = SequenceDocument::new(&seq, t, (*mode).into());
            let back = SequenceDocument::from_json_str(&doc.to_json_string()).field("output")?;
            if back.to_sequence().field("output")? != seq {
                return Err(CliError {
                    code: 2,
                    field: "output".into(),
                    message: "sequence document does not round-trip".into(),
                });
            }
            Ok(doc.to_json_string() + "\n")
        }
        Command::Sweep { common, thresholds } => {
            let f = only_format(common, &[Format::Csv, Format::Json], Format::Csv)?;
            for &t in thresholds {
                threshold_field(t).map_err(|e| CliError {
                    field: "--thresholds".into(),
                    ..e
                })?;
            }
            let e = embeddings(common)?;
            let rows = sweep_report(&e, thresholds).field("--thresholds")?;
            Ok(match f {
                Format::Csv => sweep_csv(&rows),
                Format::Json => to_json(&rows),
            })
        }
        Command::Calibrate {
            common,
            target_fraction,
        } => {
            only_format(common, &[Format::Json], Format::Json)?;
            if !(*target_fraction > 0.0 && *target_fraction <= 1.0) {
                return Err(CliError::usage(
                    "--target-fraction",
                    format!("{target_fraction} outside (0, 1]"),
                ));
            }
            let e = embeddings(common)?;
            let sim = build_similarity_matrix(&e);
            let tau = calibrate_threshold(&sim, *target_fraction).field("--target-fraction")?;
            let plan = plan_text_into_image(&sim, tau).field("--target-fraction")?;
            Ok(to_json(&json!({
                "threshold": tau,
                "target_fraction": target_fraction,
                "anchor_count": plan.len(),
                "anchor_fraction": anchor_fraction(&plan, e.n()),
                "n": e.n(),
                "seed": common.seed,
            })))
        }
        Command::Tune { common, labels } => {
            let f = only_format(common, &[Format::Csv, Format::Json], Format::Json)?;
            let labels = match labels {
                Some(path) => {
                    no_embeddings(common, "tune --labels")?;
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        CliError::usage("--labels", format!("{}: {e}", path.display()))
                    })?;
                    CorrespondenceLabels::from_csv(&text).field("--labels")?
                }
                None => {
                    CorrespondenceLabels::from_clusters(&embeddings(common)?).field("--input")?
                }
            };
            let curve = optimal_threshold(&labels).field("--labels")?;
            Ok(match f {
                Format::Csv => curve.to_csv(),
                Format::Json => to_json(&json!({
                    "tau_star": curve.tau_star,
                    "f1_star": curve.f1_star,
                    "pairs": labels.pairs().len(),
                    "true_pairs": labels.true_count(),
                })),
            })
        }
        Command::Oracle {
            common,
            mu_true,
            mu_false,
            sigma,
            p_true,
        } => {
            no_embeddings(common, "oracle")?;
            let f = only_format(common, &[Format::Csv, Format::Json], Format::Json)?;
            let spec = GaussianMixtureSpec::new(*mu_true, *mu_false, *sigma, *p_true)
                .field("--mu-true")?;
            let curve = gaussian_oracle(&spec).field("--mu-true")?;
            Ok(match f {
                Format::Csv => curve.to_csv(),
                Format::Json => to_json(&json!({
                    "tau_star": curve.tau_star,
                    "f1_star": curve.f1_star,
                    "mass_below_zero": spec.mass_below_zero(),
                    "truncation_significant": spec.truncation_significant(),
                })),
            })
        }
        Command::Theorem1 {
            common,
            trials,
            threshold,
            family,
            alpha,
        } => {
            let f = only_format(common, &[Format::Csv, Format::Json], Format::Csv)?;
            let t = threshold_field(*threshold)?;
            let rows = if common.input.is_some() || common.generate.is_some() {
                let e = embeddings(common)?;
                let bias = BiasModel::new((*family).into(), *alpha).field("--alpha")?;
                let sim = build_similarity_matrix(&e);
                let mut rows = Vec::new();
                for n in 0..e.n() {
                    let (m, score) = argmax_match(sim.row(n));
                    if score < t {
                        continue;
                    }
                    let report = verify_theorem1(&e, (n, m), t, bias).field("--input")?;
                    rows.push(Theorem1Trial {
                        trial_seed: common.seed,
                        m: e.m(),
                        n: e.n(),
                        d: e.dim(),
                        alpha: *alpha,
                        family: (*family).into(),
                        text_index: n,
                        image_index: m,
                        report,
                    });
                }
                rows
            } else {
                let cfg = Theorem1Sweep {
                    trials: *trials,
                    base_seed: common.seed,
                    threshold: t,
                    ..Theorem1Sweep::default()
                };
                theorem1_sweep(&cfg).field("--trials")?
            };
            Ok(match f {
                Format::Csv => theorem1_csv(&rows),
                Format::Json => theorem1_json(&rows),
            })
        }
        Command::RopeDemo {
            common,
            threshold,
            base,
        } => {
            only_format(common, &[Format::Json], Format::Json)?;
            let t = threshold_field(*threshold)?;
            if !(*base > 1.0 && base.is_finite()) {
                return Err(CliError::usage(
                    "--base",
                    format!("{base} must be a finite value > 1"),
                ));
            }
            let e = embeddings(common)?;
            Ok(to_json(
                &rope_attention_demo(&e, t, *base).field("--input")?,
            ))
        }
        Command::Mi {
            common,
            threshold,
            window,
        } => {
            only_format(common, &[Format::Json], Format::Json)?;
            let t = threshold_field(*threshold)?;
            let w = LocalityWindow::new(*window).field("--window")?;
            let e = embeddings(common)?;
            let r = local_mi_experiment(&e, t, w).field("--threshold")?;
            let mut v = serde_json::to_value(r).expect("report serializes");
            v["seed"] = json!(common.seed);
            Ok(to_json(&v))
        }
        Command::Bench {
            common,
            n_values,
            m_values,
            d_values,
            repetitions,
            threshold,
            parallel,
        } => {
            no_embeddings(common, "bench")?;
            let f = only_format(common, &[Format::Csv, Format::Json], Format::Csv)?;
            let grid = BenchGrid {
                n_values: n_values.clone(),
                m_values: m_values.clone(),
                d_values: d_values.clone(),
                repetitions: *repetitions,
                seed: common.seed,
                threshold: *threshold,
                parallel: *parallel,
            };
            grid.validate().field("--repetitions")?;
            let report = run_scaling(&grid).field("bench")?;
            Ok(match f {
                Format::Csv => report.to_csv(),
                Format::Json => report.summary_json() + "\n",
            })
        }
        Command::FailureModes {
            common,
            scenario,
            threshold,
        } => {
            no_embeddings(common, "failure-modes")?;
            only_format(common, &[Format::Json], Format::Json)?;
            let t = threshold_field(*threshold)?;
            let kinds = match scenario {
                Some(s) => vec![s.parse::<FailureKind>().field("--scenario")?],
                None => FailureKind::ALL.to_vec(),
            };
            let reports = kinds
                .into_iter()
                .map(|kind| {
                    run_failure_scenario(
                        &FailureScenario {
                            kind,
                            generator_seed: common.seed,
                        },
                        t,
                    )
                })
                .collect::<crate::Result<Vec<_>>>()
                .field("--scenario")?;
            let passed = reports.iter().all(|r| r.passed);
            Ok(to_json(&json!({ "passed": passed, "scenarios": reports })))
        }
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Reorder { common, .. }
        | Command::Sweep { common, .. }
        | Command::Calibrate { common, .. }
        | Command::Tune { common, .. }
        | Command::Oracle { common, .. }
        | Command::Theorem1 { common, .. }
        | Command::RopeDemo { common, .. }
        | Command::Mi { common, .. }
        | Command::Bench { common, .. }
        | Command::FailureModes { common, .. } => common,
    }
}

fn run_parsed(cli: &Cli) -> CliResult<()> {
    let c = common(&cli.command);
    let out = match c.threads {
        Some(0) => return Err(CliError::usage("--threads", "must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage("--threads", e.to_string()))?
            .install(|| execute(&cli.command))?,
        None => execute(&cli.command)?,
    };
    match &c.output {
        Some(path) => std::fs::write(path, out)
            .map_err(|e| CliError::usage("--output", format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| CliError::usage("stdout", e.to_string())),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr as one line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return 1;
        }
    };
    match run_parsed(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}
