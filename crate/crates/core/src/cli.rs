//! Command-line front end: dataset synthesis, training, evaluation, gradient
//! checks, cost benchmarks, scan dumps and ablation sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cost::{attention_cost, cost_model, StructureStats};
use crate::datakit::{Dataset, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, CheckSize};
use crate::pipeline::{
    evaluate, load_checkpoint, save_checkpoint, train_with, HgMambaModel, Metrics, RunConfig,
};
use crate::scanner::ScanMix;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(
    name = "hgmamba",
    version,
    about = "Hypergraph state-space MIL on tile bags"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted-motif dataset with a manifest.
    Synth(SynthArgs),
    /// Train a model and write the best checkpoint and the history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Compare every backward pass against finite differences.
    Gradcheck(GradcheckArgs),
    /// Analytic FLOPs and memory against an attention baseline.
    Bench(BenchArgs),
    /// Print the scan set of one bag.
    Scan(ScanArgs),
    /// Train and cost one-axis variations of a configuration.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Total number of bags, divided between splits by `--splits`.
    #[arg(long, default_value_t = 350)]
    pub bags: usize,
    /// Relative train,val,test sizes.
    #[arg(long, default_value = "4,1,2")]
    pub splits: String,
    #[arg(long, default_value = "14x14")]
    pub grid: String,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 2.0)]
    pub motif: f64,
    #[arg(long)]
    pub high_order: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `key=value` configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report path; defaults to `eval_<split>.txt` beside the checkpoint.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "tiny")]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value = "1000,2000,4000,8000")]
    pub n_list: String,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Model settings other than width and depth.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the curve files; the current directory by default.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Bag id (file stem).
    #[arg(long)]
    pub bag: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured epoch count for every run.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Skip training and only cost the variants.
    #[arg(long)]
    pub cost_only: bool,
}

fn read_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            RunConfig::parse(&text)
        }
        None => Ok(RunConfig::default()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{what}: cannot parse {v:?}")))
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Usage(format!("grid must look like 14x14, got {s:?}")))?;
    let parse = |v: &str| {
        v.parse()
            .map_err(|_| Error::Usage(format!("bad grid {s:?}")))
    };
    Ok((parse(r)?, parse(c)?))
}

/// Split `total` into parts proportional to `weights`; rounding goes to train.
fn split_counts(total: usize, weights: &[usize]) -> Result<(usize, usize, usize)> {
    let [tr, va, te] = weights[..] else {
        return Err(Error::Usage("--splits needs three values".into()));
    };
    let sum = tr + va + te;
    if sum == 0 {
        return Err(Error::Usage("--splits must not all be zero".into()));
    }
    let share = |w: usize| ((total * w) as f64 / sum as f64).round() as usize;
    let (val, test) = (share(va), share(te));
    Ok((total.saturating_sub(val + test), val, test))
}

/// Binds the data-dependent parts of a configuration to the dataset.
fn fit_to_data(cfg: &mut RunConfig, data: &Dataset) -> Result<()> {
    let dim = data
        .feature_dim()
        .ok_or_else(|| Error::Data("dataset has no bags".into()))?;
    cfg.model.input_dim = dim;
    if data.n_classes() > cfg.model.n_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, configuration {}",
            data.n_classes(),
            cfg.model.n_classes
        )));
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<String> {
    let (rows, cols) = parse_grid(&a.grid)?;
    let cfg = SynthConfig {
        rows,
        cols,
        d: a.dim,
        n_classes: a.classes,
        motif_strength: a.motif,
        high_order: a.high_order,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let (n_train, n_val, n_test) = split_counts(a.bags, &parse_list("--splits", &a.splits)?)?;
    let data = Dataset::synthesize(&cfg, n_train, n_val, n_test)?;
    data.save(&a.out)?;
    Ok(format!(
        "wrote {} bags ({n_train} train, {n_val} val, {n_test} test) to {}\n",
        a.bags,
        a.out.display()
    ))
}

fn metrics_lines(prefix: &str, m: &Metrics) -> String {
    m.report()
        .lines()
        .map(|l| format!("{prefix}{l}\n"))
        .collect()
}

pub fn train_cmd(a: &TrainArgs) -> Result<String> {
    let mut cfg = read_config(a.config.as_deref())?;
    let data = Dataset::load(&a.data)?;
    fit_to_data(&mut cfg, &data)?;
    create_dir(&a.out)?;
    let model = HgMambaModel::init(&cfg.model, cfg.train.seed)?;
    let outcome = train_with(model, &data, &cfg.train, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  val_acc {:.3}  val_auc {}  lr {:.2e}",
            r.epoch,
            r.train_loss,
            r.val.acc,
            r.val
                .auc
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into()),
            r.lr
        );
    })?;
    save_checkpoint(&a.out.join(CHECKPOINT_FILE), &cfg, &outcome.best)?;
    write_file(&a.out.join(HISTORY_FILE), &outcome.history.to_csv())?;
    write_file(&a.out.join(CONFIG_FILE), &cfg.to_text())?;
    let mut s = String::new();
    let _ = writeln!(s, "best_epoch={}", outcome.best_epoch);
    s.push_str(&metrics_lines(
        "val_",
        &outcome.history.epochs[outcome.best_epoch].val,
    ));
    Ok(s)
}

pub fn eval_cmd(a: &EvalArgs) -> Result<String> {
    let split = Split::parse(&a.split).ok_or_else(|| {
        Error::Usage(format!(
            "split must be train, val or test, got {:?}",
            a.split
        ))
    })?;
    let (cfg, model) = load_checkpoint(&a.checkpoint)?;
    let data = Dataset::load(&a.data)?;
    let metrics = evaluate(&model, data.split(split), cfg.train.seed)?;
    let text = metrics.report();
    let report = a.report.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("eval_{split}.txt"))
    });
    write_file(&report, &text)?;
    Ok(text)
}

/// Returns the report and whether every check passed.
pub fn gradcheck_cmd(a: &GradcheckArgs) -> Result<(String, bool)> {
    let size = CheckSize::parse(&a.size)
        .ok_or_else(|| Error::Usage(format!("size must be tiny or small, got {:?}", a.size)))?;
    let checks = run_gradcheck(size, a.seed)?;
    let mut s = String::new();
    for c in &checks {
        let _ = writeln!(
            s,
            "{:<4} {:<40} {:.3e}",
            if c.passed() { "ok" } else { "FAIL" },
            c.name,
            c.rel_err
        );
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(s, "{} checks, {failed} failed", checks.len());
    Ok((s, failed == 0))
}

/// One row of the bench table.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub hgmamba: u64,
    pub attention: u64,
    pub peak_bytes: u64,
    pub attention_peak_bytes: u64,
}

impl BenchRow {
    pub fn ratio(&self) -> f64 {
        self.attention as f64 / self.hgmamba as f64
    }
}

pub fn bench_rows(cfg: &RunConfig, ns: &[usize]) -> Result<Vec<BenchRow>> {
    ns.iter()
        .map(|&n| {
            let r = cost_model(&cfg.model, &StructureStats::estimate(&cfg.model, n))?;
            Ok(BenchRow {
                n,
                hgmamba: r.total,
                attention: attention_cost(n, cfg.model.d, cfg.model.n_layers),
                peak_bytes: r.peak_activation_bytes,
                attention_peak_bytes: r.attention_peak_bytes,
            })
        })
        .collect()
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>14} {:>14} {:>7} {:>9} {:>9} {:>12} {:>12}",
        "n", "hgmamba_gflop", "attn_gflop", "ratio", "hg_x2", "attn_x2", "hg_mib", "attn_mib"
    );
    for (i, r) in rows.iter().enumerate() {
        let growth = |now: u64, before: Option<u64>| {
            before
                .map(|b| format!("{:.3}", now as f64 / b as f64))
                .unwrap_or_else(|| "-".into())
        };
        let prev = i
            .checked_sub(1)
            .map(|j| &rows[j])
            .filter(|p| 2 * p.n == r.n);
        let _ = writeln!(
            s,
            "{:>8} {:>14.3} {:>14.3} {:>7.2} {:>9} {:>9} {:>12.1} {:>12.1}",
            r.n,
            r.hgmamba as f64 / 1e9,
            r.attention as f64 / 1e9,
            r.ratio(),
            growth(r.hgmamba, prev.map(|p| p.hgmamba)),
            growth(r.attention, prev.map(|p| p.attention)),
            r.peak_bytes as f64 / (1 << 20) as f64,
            r.attention_peak_bytes as f64 / (1 << 20) as f64,
        );
    }
    s
}

pub fn curve_file(points: impl Iterator<Item = (usize, u64)>) -> String {
    let mut s = String::from("n\tflops\n");
    for (n, f) in points {
        let _ = writeln!(s, "{n}\t{f}");
    }
    s
}

pub fn bench_cmd(a: &BenchArgs) -> Result<String> {
    let mut cfg = read_config(a.config.as_deref())?;
    cfg.model.d = a.dim;
    cfg.model.input_dim = a.dim;
    cfg.model.n_layers = a.layers;
    let ns: Vec<usize> = parse_list("--n-list", &a.n_list)?;
    let rows = bench_rows(&cfg, &ns)?;
    create_dir(&a.out)?;
    write_file(
        &a.out.join("hgmamba_curve.tsv"),
        &curve_file(rows.iter().map(|r| (r.n, r.hgmamba))),
    )?;
    write_file(
        &a.out.join("attention_curve.tsv"),
        &curve_file(rows.iter().map(|r| (r.n, r.attention))),
    )?;
    Ok(bench_table(&rows))
}

pub fn scan_cmd(a: &ScanArgs) -> Result<String> {
    let cfg = read_config(a.config.as_deref())?;
    let path = a
        .data
        .join(format!("{}.{}", a.bag, crate::datakit::BAG_EXTENSION));
    let bag = crate::datakit::read_bag(&path)?;
    let mut mcfg = cfg.model.clone();
    mcfg.input_dim = bag.dim();
    let model = HgMambaModel::init(&mcfg, 0)?;
    let hg = model.graph(&bag)?;
    let scan = model.scan_set(&hg, a.seed, 0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "bag={} nodes={} hyperedges={} sequences={}",
        bag.id,
        hg.n_nodes(),
        hg.n_edges(),
        scan.sequences.len()
    );
    for (i, q) in scan.sequences.iter().enumerate() {
        let order: Vec<String> = q.valid_prefix().iter().map(|v| v.to_string()).collect();
        let restarts: Vec<String> = q.restarts.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            s,
            "seq {i} {:?} valid={} padding={} restarts=[{}] order={}",
            q.strategy,
            q.valid_len(),
            q.order.len() - q.valid_len(),
            restarts.join(","),
            order.join(" ")
        );
    }
    for (v, sites) in scan.membership.iter().enumerate() {
        let sites: Vec<String> = sites.iter().map(|(m, p)| format!("{m}:{p}")).collect();
        let _ = writeln!(s, "node {v} {}", sites.join(" "));
    }
    Ok(s)
}

/// The one-axis variations swept by [`sweep_cmd`]: `(axis, value, config)`.
pub fn sweep_variants(base: &RunConfig) -> Vec<(&'static str, String, RunConfig)> {
    let mut out = Vec::new();
    for k in 1..=6 {
        let mut c = base.clone();
        c.model.top_k = k;
        out.push(("top_k", k.to_string(), c));
    }
    for mix in [
        ScanMix::HdfsOnly,
        ScanMix::HarwOnly,
        ScanMix::Both,
        ScanMix::Random,
    ] {
        let mut c = base.clone();
        c.model.scan_mix = mix;
        out.push(("scan_mix", mix.name().to_string(), c));
    }
    for l in 1..=4 {
        let mut c = base.clone();
        c.model.n_layers = l;
        out.push(("n_layers", l.to_string(), c));
    }
    out
}

pub const SWEEP_HEADER: &str = "axis\tvalue\tflops\tparam_bytes\ttest_acc\ttest_auc\ttest_f1";

pub fn sweep_cmd(a: &SweepArgs) -> Result<String> {
    let mut base = read_config(a.config.as_deref())?;
    let data = Dataset::load(&a.data)?;
    fit_to_data(&mut base, &data)?;
    if let Some(e) = a.epochs {
        base.train.epochs = e;
        base.train.milestones.retain(|&m| m < e);
    }
    create_dir(&a.out)?;
    let n = data.train.first().map(|b| b.n_tiles()).unwrap_or(1);
    let mut s = format!("{SWEEP_HEADER}\n");
    for (axis, value, cfg) in sweep_variants(&base) {
        let cost = cost_model(&cfg.model, &StructureStats::estimate(&cfg.model, n))?;
        let (acc, auc, f1) = if a.cost_only {
            (String::new(), String::new(), String::new())
        } else {
            let model = HgMambaModel::init(&cfg.model, cfg.train.seed)?;
            let outcome = crate::pipeline::train(model, &data, &cfg.train)?;
            let m = evaluate(&outcome.best, &data.test, cfg.train.seed)?;
            let run = a.out.join(format!("{axis}_{value}"));
            create_dir(&run)?;
            write_file(&run.join(HISTORY_FILE), &outcome.history.to_csv())?;
            write_file(&run.join(CONFIG_FILE), &cfg.to_text())?;
            write_file(&run.join("eval_test.txt"), &m.report())?;
            (
                m.acc.to_string(),
                m.auc.map(|v| v.to_string()).unwrap_or_default(),
                m.macro_f1.to_string(),
            )
        };
        let _ = writeln!(
            s,
            "{axis}\t{value}\t{}\t{}\t{acc}\t{auc}\t{f1}",
            cost.total, cost.param_bytes
        );
    }
    write_file(&a.out.join("sweep.tsv"), &s)?;
    Ok(s)
}

/// Runs a parsed command; the returned text goes to standard output and the
/// flag reports whether the command's own check passed.
pub fn run(cli: &Cli) -> Result<(String, bool)> {
    match &cli.command {
        Command::Synth(a) => synth(a).map(|s| (s, true)),
        Command::Train(a) => train_cmd(a).map(|s| (s, true)),
        Command::Eval(a) => eval_cmd(a).map(|s| (s, true)),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Bench(a) => bench_cmd(a).map(|s| (s, true)),
        Command::Scan(a) => scan_cmd(a).map(|s| (s, true)),
        Command::Sweep(a) => sweep_cmd(a).map(|s| (s, true)),
    }
}
