//! Command-line front end: evidence calibration, studies, paired
//! comparisons and code-matrix dumps.

pub mod calibrate;
pub mod compare;
pub mod manifest;
pub mod output;
pub mod simulate;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rbse_core::evidence::CalibrationParams;
use rbse_core::paradigms::{alp_codeword_pool, alp_pool_from_posterior, rcp_matrix, CodeMatrix};
use rbse_core::{run_study, Pmf, Vocabulary};

use crate::calibrate::{CalibrationRequest, ModelFile};
use crate::compare::AucBand;
use crate::manifest::LoadedManifest;
use crate::output::{fmt_float, json_hash, OutputSet, Table};
use crate::simulate::Provenance;

/// Default output directory when neither a flag nor the manifest sets one.
pub const OUT_DIR_ENV: &str = "ARBSE_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rbse", version, about = "Active RBSE typing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an evidence model from a target AUC or a synthetic calibration session.
    Calibrate(CalibrateArgs),
    /// Run a study described by a manifest.
    Simulate(SimulateArgs),
    /// Paired signed-rank comparison of two session reports.
    Compare(CompareArgs),
    /// Dump a code matrix as CSV.
    Codebook(CodebookArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Gaussian evidence model with this analytic AUC.
    #[arg(long, conflicts_with = "synth")]
    pub auc: Option<f64>,
    /// Run the synthetic feature → RDA → KDE pipeline.
    #[arg(long)]
    pub synth: bool,
    #[arg(long, default_value_t = 40)]
    pub dims: usize,
    /// Target samples in the calibration set.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1300)]
    pub n_nontarget: usize,
    /// Class-mean distance in feature space.
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; defaults to evidence_model.json in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Phrases per session.
    #[arg(long)]
    pub phrases: Option<usize>,
    /// Replace the manifest's users by these AUC levels.
    #[arg(long, value_delimiter = ',')]
    pub auc: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report directory or sessions.csv for arm A.
    pub report_a: PathBuf,
    /// Report directory or sessions.csv for arm B.
    pub report_b: PathBuf,
    #[arg(long)]
    pub arm_a: Option<String>,
    #[arg(long)]
    pub arm_b: Option<String>,
    /// Only compare users with AUC at least this.
    #[arg(long)]
    pub min_auc: Option<f64>,
    /// Only compare users with AUC at most this.
    #[arg(long)]
    pub max_auc: Option<f64>,
    /// Output CSV; defaults to compare.csv in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    /// Row/column grid codewords.
    Rcp,
    /// Posterior-ranked assignment under a uniform posterior.
    Alp,
    /// Every admissible ALP codeword.
    AlpPool,
}

#[derive(Debug, Args, Serialize)]
pub struct CodebookArgs {
    #[arg(value_enum)]
    pub kind: CodebookKind,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, default_value_t = 7)]
    pub cols: usize,
    #[arg(long, default_value_t = 6)]
    pub length: usize,
    #[arg(long, default_value_t = 3)]
    pub max_weight: usize,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

trait FailureExt<T> {
    fn usage(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> FailureExt<T> for std::result::Result<T, E> {
    fn usage(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Codebook(a) => cmd_codebook(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (kind, err) = match &f {
                Failure::Usage(e) => ("usage error", e),
                Failure::Runtime(e) => ("error", e),
            };
            eprintln!("{kind}: {err:#}");
            f.code()
        }
    }
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> CmdResult {
    let request = match (args.auc, args.synth) {
        (Some(auc), false) => CalibrationRequest::Gaussian { auc },
        (None, true) => CalibrationRequest::Synthetic(CalibrationParams {
            dims: args.dims,
            n_target: args.n,
            n_nontarget: args.n_nontarget,
            separation: args.separation,
            folds: args.folds,
            seed: args.seed,
            ..CalibrationParams::default()
        }),
        _ => return Err(Failure::Usage(anyhow!("pass exactly one of --auc or --synth"))),
    };
    let file = ModelFile::build(&request).usage()?;
    let out = args.out.clone().unwrap_or_else(|| default_out_dir().join("evidence_model.json"));
    let mut set = OutputSet::default();
    set.add(&out, file.to_json().runtime()?);
    set.commit().runtime()?;
    println!("auc {}", fmt_float(file.auc));
    if let Some(d) = file.separation {
        println!("separation {}", fmt_float(d));
    }
    if let Some(sel) = file.selection {
        println!("lambda {} gamma {} cv_auc {}", fmt_float(sel.lambda), fmt_float(sel.gamma), fmt_float(sel.mean_auc));
    }
    println!("sigma_plus {} sigma_minus {}", fmt_float(file.sigma.sigma_plus), fmt_float(file.sigma.sigma_minus));
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let mut loaded = LoadedManifest::load(&args.manifest).usage()?;
    let m = &mut loaded.manifest;
    if let Some(r) = args.reps {
        m.reps = r;
    }
    if let Some(p) = args.phrases {
        m.phrases_per_session = p;
    }
    if let Some(levels) = &args.auc {
        m.auc_levels = levels.clone();
        m.evidence_models.clear();
    }
    if let Some(s) = args.seed {
        m.simulation.rng_seed = s;
    }
    loaded.validate().usage()?;
    let lm = loaded.language_model().usage()?;
    let pool = loaded.phrase_pool(&lm).usage()?;
    let config = loaded.study_config(args.workers).usage()?;
    config.validate(lm.vocabulary().len()).usage()?;

    let provenance = loaded.provenance();
    let prov = Provenance { manifest_hash: json_hash(&provenance).runtime()?, seed: config.sim.rng_seed };
    let sim = &config.sim;
    eprintln!(
        "timing: iti_ms={} inter_sequence_pause_ms={} post_decision_pause_ms={} phrase_budget_ms={} \
         max_sequences={} confidence_threshold={} max_consecutive_errors={}",
        fmt_float(sim.iti_ms),
        fmt_float(sim.inter_sequence_pause_ms),
        fmt_float(sim.post_decision_pause_ms),
        fmt_float(sim.phrase_budget_ms),
        sim.max_sequences,
        fmt_float(sim.confidence_threshold),
        sim.max_consecutive_errors,
    );

    let report = run_study(&config, &lm, &pool).runtime()?;

    let dir = args.out.clone().or_else(|| loaded.output_dir()).unwrap_or_else(default_out_dir);
    let adaptive: Vec<String> =
        config.arms.iter().filter(|a| a.paradigm.is_active()).map(|a| a.name.clone()).collect();
    let mut set = OutputSet::default();
    set.add(dir.join("sessions.csv"), simulate::sessions_csv(&report, &prov).runtime()?);
    set.add(dir.join("summary.json"), simulate::summary_json(&report, &provenance, &prov).runtime()?);
    set.add(dir.join("ttd_scatter.csv"), simulate::ttd_scatter_csv(&report, &adaptive, &prov).runtime()?);
    set.add(dir.join("ppc_auc.csv"), simulate::ppc_auc_csv(&report, &prov).runtime()?);
    let written: Vec<String> = set.paths().map(|p| p.display().to_string()).collect();
    set.commit().runtime()?;

    let mut stdout = std::io::stdout().lock();
    for name in simulate::arm_names(&report) {
        let sessions: Vec<_> = report.sessions_for(&name).collect();
        let ttd: Vec<f64> = sessions.iter().map(|s| s.ttd_minutes()).collect();
        let ppc: Vec<f64> = sessions.iter().map(|s| s.ppc()).collect();
        let _ = writeln!(
            stdout,
            "{name}: sessions={} mean_ttd_minutes={} mean_ppc={}",
            sessions.len(),
            fmt_float(rbse_core::stats::mean(&ttd)),
            fmt_float(rbse_core::stats::mean(&ppc)),
        );
    }
    for p in written {
        let _ = writeln!(stdout, "wrote {p}");
    }
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> CmdResult {
    let a = compare::read_sessions(&args.report_a).usage()?;
    let b = compare::read_sessions(&args.report_b).usage()?;
    let band = match (args.min_auc, args.max_auc) {
        (None, None) => None,
        (lo, hi) => Some(AucBand { min: lo.unwrap_or(f64::NEG_INFINITY), max: hi.unwrap_or(f64::INFINITY) }),
    };
    let comparison =
        compare::compare(a, b, args.arm_a.as_deref(), args.arm_b.as_deref(), band).usage()?;
    for line in comparison.describe() {
        println!("{line}");
    }
    if comparison.all_failed() {
        return Err(Failure::Runtime(anyhow!("no metric could be tested")));
    }
    let out = args.out.clone().unwrap_or_else(|| default_out_dir().join("compare.csv"));
    let mut set = OutputSet::default();
    set.add(&out, comparison.to_csv().runtime()?);
    set.commit().runtime()?;
    println!("wrote {}", out.display());
    Ok(())
}

fn bits(word: &[u8]) -> String {
    word.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn matrix_rows(table: &mut Table, hash: &str, matrix: &CodeMatrix, vocab: &Vocabulary) -> anyhow::Result<()> {
    for (i, word) in matrix.rows().iter().enumerate() {
        table.row([
            hash.to_string(),
            "0".to_string(),
            vocab.symbol(i).to_string(),
            i.to_string(),
            bits(word),
            matrix.row_weight(i).to_string(),
        ])?;
    }
    Ok(())
}

pub fn codebook_csv(args: &CodebookArgs) -> anyhow::Result<Vec<u8>> {
    let hash = json_hash(args)?;
    let vocab = Vocabulary::english();
    match args.kind {
        CodebookKind::Rcp | CodebookKind::Alp => {
            let matrix = if args.kind == CodebookKind::Rcp {
                rcp_matrix(args.rows, args.cols, vocab.len())?
            } else {
                alp_pool_from_posterior(&Pmf::uniform(vocab.len()), args.length, args.max_weight)?.1
            };
            let mut t = Table::new(&["manifest_hash", "seed", "symbol", "index", "codeword", "weight"])?;
            matrix_rows(&mut t, &hash, &matrix, &vocab)?;
            t.into_bytes()
        }
        CodebookKind::AlpPool => {
            let mut t = Table::new(&["manifest_hash", "seed", "index", "codeword", "weight"])?;
            for (i, word) in alp_codeword_pool(args.length, args.max_weight)?.iter().enumerate() {
                let weight = word.iter().filter(|&&b| b == 1).count();
                t.row([hash.clone(), "0".into(), i.to_string(), bits(word), weight.to_string()])?;
            }
            t.into_bytes()
        }
    }
}

pub fn cmd_codebook(args: &CodebookArgs) -> CmdResult {
    let csv = codebook_csv(args).usage()?;
    match &args.out {
        Some(path) => {
            let mut set = OutputSet::default();
            set.add(path, csv);
            set.commit().runtime()?;
            println!("wrote {}", path.display());
        }
        None => std::io::stdout().write_all(&csv).context("writing to stdout").runtime()?,
    }
    Ok(())
}
