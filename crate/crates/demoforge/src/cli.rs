//! The `demoforge` command line.
//!
//! Exit codes: 0 on success, 1 for bad input (flags, missing or malformed
//! files), 2 for internal failures such as unwritable outputs or training
//! that diverges. Diagnostics go to standard error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use demoforge_core::analytics::{
    self, action_heatmap, player_stats, ActionKind, Bounds, CoordSelector, CorpusTotals, Series,
};
use demoforge_core::bench::{
    self, evaluate, train_boosted_stumps, train_deepsets, train_logreg, train_mlp, BenchError, Dataset, DatasetBuilder,
    LogRegParams, NeuralParams, Split, TrainedModel, TreeParams,
};
use demoforge_core::codec::write_demo;
use demoforge_core::matchgen::{generate_match, inject_anomalies, AnomalyKind, GenConfig, RoundTarget};
use demoforge_core::model::{DemoDocument, ParserParams};
use demoforge_core::pipeline::ParseOptions;
use rayon::prelude::*;

use crate::files::{parse_demo_file, write_bytes, FileError};
use crate::json::{read_json, write_json};
use crate::report;

pub const THREADS_ENV: &str = "DEMOFORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "demoforge", version, about = "Parse, clean, analyse, and benchmark round-based FPS demo logs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse demo files into JSON documents.
    Parse(ParseArgs),
    /// Player stat lines and corpus summary for parsed documents.
    Stats(StatsArgs),
    /// Bin action coordinates into a heatmap SVG.
    Heatmap(HeatmapArgs),
    /// Write a synthetic match and its ground truth.
    Generate(GenerateArgs),
    /// Round win-probability benchmark.
    Winprob {
        #[command(subcommand)]
        command: WinprobCommand,
    },
}

#[derive(Debug, Args)]
struct ParseArgs {
    #[arg(required = true)]
    demos: Vec<PathBuf>,
    /// Frames sampled per second of game time.
    #[arg(long, default_value_t = 2)]
    parse_rate: u16,
    /// Output file for one demo, or directory for several. Standard output when omitted with one demo.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep rounds that fail validation, flagged with their reasons.
    #[arg(long)]
    keep_invalid: bool,
    /// Keep rounds that never reach an end record.
    #[arg(long)]
    keep_incomplete: bool,
    /// Gzip outputs written into a directory.
    #[arg(long)]
    gzip: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(required = true)]
    docs: Vec<PathBuf>,
    /// Write player stat lines here as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the corpus summary here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[arg(required = true)]
    docs: Vec<PathBuf>,
    /// damage, kill, flash, bombPlant, grenade, or weaponFire.
    #[arg(long)]
    action: String,
    /// actor, victim, or land.
    #[arg(long)]
    coord: String,
    #[arg(long, default_value_t = 32)]
    nx: usize,
    #[arg(long, default_value_t = 32)]
    ny: usize,
    /// Map extent as xmin,xmax,ymin,ymax.
    #[arg(long, value_parser = parse_bounds)]
    bounds: Option<Bounds>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exact round count; plays until a side clinches when omitted.
    #[arg(long)]
    rounds: Option<u16>,
    /// restart, duplicateRoundEnd, or truncation.
    #[arg(long)]
    anomaly: Option<String>,
    /// Ticks between player updates.
    #[arg(long, default_value_t = 16)]
    update_interval: u32,
    /// Bias in [-1, 1] toward CT round wins.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    skill_gap: f64,
    /// Directory for match.esdm and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Logreg,
    Mlp,
    Stumps,
    Deepsets,
}

#[derive(Debug, Subcommand)]
enum WinprobCommand {
    /// Sample one frame per round and split into train/validation/test.
    Build {
        #[arg(required = true)]
        docs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "70/10/20")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on a built dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Epoch budget for neural models, tree budget for stumps, iterations for logreg.
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-epoch losses as CSV.
        #[arg(long)]
        log_csv: Option<PathBuf>,
    },
    /// Log loss, calibration error, and reliability diagram on the test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "model-file")]
        model_file: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Report JSON; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Win probability over one round for one or more models.
    Curve {
        #[arg(long = "model-file", required = true)]
        model_files: Vec<PathBuf>,
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        round: u16,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Internal(m) => m,
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

fn parse_bounds(s: &str) -> Result<Bounds, String> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [xmin, xmax, ymin, ymax] if xmax > xmin && ymax > ymin => Ok(Bounds { xmin, xmax, ymin, ymax }),
        _ => Err("expected xmin,xmax,ymin,ymax with min < max".into()),
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("demoforge: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Parse(a) => cmd_parse(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Winprob { command } => match command {
            WinprobCommand::Build { docs, seed, split, out } => cmd_build(&docs, seed, &split, &out),
            WinprobCommand::Train { data, model, seed, epochs, hidden, out, log_csv } => {
                cmd_train(&data, model, seed, epochs, hidden, &out, log_csv.as_deref())
            }
            WinprobCommand::Eval { data, model_file, bins, out, csv, svg } => {
                cmd_eval(&data, &model_file, bins, out.as_deref(), csv.as_deref(), svg.as_deref())
            }
            WinprobCommand::Curve { model_files, doc, round, out, csv } => {
                cmd_curve(&model_files, &doc, round, &out, csv.as_deref())
            }
        },
    }
}

fn read_failure(e: FileError) -> Failure {
    input(e)
}

fn write_failure(e: FileError) -> Failure {
    internal(e)
}

fn worker_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| input(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(internal)
}

fn stdout_write(bytes: &[u8]) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(internal)
}

fn json_out<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    match path {
        Some(p) => write_json(p, value).map_err(write_failure),
        None => {
            let mut text = serde_json::to_vec_pretty(value).map_err(internal)?;
            text.push(b'\n');
            stdout_write(&text)
        }
    }
}

fn output_name(demo: &Path, gzip: bool) -> PathBuf {
    let stem = demo.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "demo".into());
    PathBuf::from(if gzip { format!("{stem}.json.gz") } else { format!("{stem}.json") })
}

fn cmd_parse(a: ParseArgs) -> Result<(), Failure> {
    let opts = ParseOptions {
        params: ParserParams { parse_rate: a.parse_rate, drop_incomplete_rounds: !a.keep_incomplete },
        keep_invalid: a.keep_invalid,
        source_file: String::new(),
    };
    let targets: Vec<Option<PathBuf>> = if a.demos.len() == 1 {
        vec![a.out.clone()]
    } else {
        let dir = a.out.clone().ok_or_else(|| input("--out DIR is required with several demos"))?;
        let mut seen = std::collections::HashMap::new();
        for d in &a.demos {
            if let Some(prev) = seen.insert(output_name(d, a.gzip), d) {
                return Err(input(format!(
                    "{} and {} would both write {}",
                    prev.display(),
                    d.display(),
                    output_name(d, a.gzip).display()
                )));
            }
        }
        std::fs::create_dir_all(&dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
        a.demos.iter().map(|d| Some(dir.join(output_name(d, a.gzip)))).collect()
    };
    let pool = worker_pool()?;
    let results: Vec<Result<DemoDocument, Failure>> = pool.install(|| {
        a.demos
            .par_iter()
            .zip(&targets)
            .map(|(demo, target)| {
                let doc = parse_demo_file(demo, &opts).map_err(read_failure)?;
                if let Some(t) = target {
                    write_json(t, &doc).map_err(write_failure)?;
                }
                Ok(doc)
            })
            .collect()
    });
    let mut worst: Option<Failure> = None;
    for (demo, r) in a.demos.iter().zip(results) {
        match r {
            Ok(doc) => {
                let c = &doc.cleaning;
                eprintln!(
                    "{}: {} rounds ({} invalid dropped, {} incomplete dropped)",
                    demo.display(),
                    doc.game_rounds.len(),
                    c.invalid_rounds_dropped,
                    c.incomplete_rounds_dropped
                );
                if targets.len() == 1 && targets[0].is_none() {
                    let mut text = crate::json::emit_json(&doc).into_bytes();
                    text.push(b'\n');
                    stdout_write(&text)?;
                }
            }
            Err(f) => {
                if a.demos.len() > 1 {
                    eprintln!("demoforge: {}", f.message());
                }
                if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                    worst = Some(f);
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(f) if a.demos.len() == 1 => Err(f),
        Some(f) => Err(match f {
            Failure::Input(_) => Failure::Input("some demos failed to parse".into()),
            Failure::Internal(_) => Failure::Internal("some outputs could not be written".into()),
        }),
    }
}

fn load_docs(paths: &[PathBuf]) -> Result<Vec<DemoDocument>, Failure> {
    let pool = worker_pool()?;
    pool.install(|| paths.par_iter().map(|p| read_json::<DemoDocument>(p).map_err(read_failure)).collect())
}

fn cmd_stats(a: StatsArgs) -> Result<(), Failure> {
    let pool = worker_pool()?;
    type DocStats = (String, Vec<analytics::PlayerStatLine>, CorpusTotals);
    let per_doc: Vec<Result<DocStats, Failure>> = pool.install(|| {
        a.docs
            .par_iter()
            .map(|p| {
                let doc: DemoDocument = read_json(p).map_err(read_failure)?;
                let mut totals = CorpusTotals::default();
                totals.add_document(&doc);
                Ok((p.display().to_string(), player_stats(&doc.game_rounds, &doc.players), totals))
            })
            .collect()
    });
    let per_doc: Vec<_> = per_doc.into_iter().collect::<Result<_, _>>()?;
    let totals = per_doc.iter().fold(CorpusTotals::default(), |acc, (_, _, t)| acc.merge(t.clone()));
    let summary = totals.summary().map_err(input)?;
    if let Some(csv) = &a.csv {
        let rows = per_doc.iter().flat_map(|(src, lines, _)| lines.iter().map(move |l| (src.as_str(), l)));
        report::write_csv(csv, &report::stats_csv(rows)).map_err(write_failure)?;
    }
    json_out(a.out.as_deref(), &summary)
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<(), Failure> {
    let action: ActionKind = a.action.parse().map_err(input)?;
    let coord: CoordSelector = a.coord.parse().map_err(input)?;
    let docs = load_docs(&a.docs)?;
    let grid = action_heatmap(&docs, action, coord, a.bounds.unwrap_or(Bounds::DEFAULT), a.nx, a.ny).map_err(input)?;
    eprintln!("{} points binned, {} outside bounds", grid.total(), grid.out_of_bounds);
    let svg = analytics::render_heatmap_svg(&grid, &format!("{} {}", a.action, a.coord));
    write_bytes(&a.out, svg.as_bytes()).map_err(write_failure)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let cfg = GenConfig {
        seed: a.seed,
        rounds: a.rounds.map_or(RoundTarget::PlayToClinch, RoundTarget::Fixed),
        update_interval: a.update_interval,
        skill_gap: a.skill_gap,
        ..GenConfig::default()
    };
    let kind: Option<AnomalyKind> = a.anomaly.as_deref().map(str::parse).transpose().map_err(input)?;
    let (header, mut events, truth) = generate_match(&cfg).map_err(input)?;
    if let Some(k) = kind {
        events = inject_anomalies(events, k, a.seed).map_err(input)?;
    }
    let bytes = write_demo(&header, &events).map_err(internal)?;
    std::fs::create_dir_all(&a.out).map_err(|e| internal(format!("{}: {e}", a.out.display())))?;
    write_bytes(&a.out.join("match.esdm"), &bytes).map_err(write_failure)?;
    write_json(&a.out.join("truth.json"), &truth).map_err(write_failure)?;
    eprintln!("{} rounds, final score {}-{}", truth.rounds.len(), truth.final_score.0, truth.final_score.1);
    Ok(())
}

fn cmd_build(docs: &[PathBuf], seed: u64, split: &str, out: &Path) -> Result<(), Failure> {
    let split: Split = split.parse().map_err(input)?;
    let mut b = DatasetBuilder::new(seed);
    for p in docs {
        let doc: DemoDocument = read_json(p).map_err(read_failure)?;
        b.add_document(&doc).map_err(input)?;
    }
    let ds = b.finish_with(split).map_err(input)?;
    eprintln!("{} train, {} validation, {} test samples", ds.train.len(), ds.val.len(), ds.test.len());
    write_json(out, &ds).map_err(write_failure)
}

fn bench_failure(e: BenchError) -> Failure {
    match e {
        BenchError::NonFiniteLoss { .. } => internal(e),
        _ => input(e),
    }
}

fn cmd_train(
    data: &Path,
    model: ModelArg,
    seed: u64,
    epochs: Option<u32>,
    hidden: Option<usize>,
    out: &Path,
    log_csv: Option<&Path>,
) -> Result<(), Failure> {
    let ds: Dataset = read_json(data).map_err(read_failure)?;
    let mut nn = NeuralParams { seed, ..NeuralParams::default() };
    if let Some(e) = epochs {
        nn.epochs = e;
    }
    if let Some(h) = hidden {
        nn.hidden = h;
    }
    let m = match model {
        ModelArg::Logreg => {
            let mut hp = LogRegParams::default();
            if let Some(e) = epochs {
                hp.iterations = e;
            }
            train_logreg(&ds.train, &ds.val, &hp)
        }
        ModelArg::Mlp => train_mlp(&ds.train, &ds.val, &nn),
        ModelArg::Stumps => {
            let mut hp = TreeParams::default();
            if let Some(e) = epochs {
                hp.max_trees = e;
            }
            train_boosted_stumps(&ds.train, &ds.val, &hp)
        }
        ModelArg::Deepsets => train_deepsets(&ds.train, &ds.val, &nn),
    }
    .map_err(bench_failure)?;
    if let Some(last) = m.training_log.last() {
        eprintln!(
            "trained {:?}: {} log entries, final train loss {:.4}",
            m.kind,
            m.training_log.len(),
            last.train_loss
        );
    }
    if let Some(p) = log_csv {
        report::write_csv(p, &report::training_log_csv(&m.training_log)).map_err(write_failure)?;
    }
    write_json(out, &m).map_err(write_failure)
}

fn load_model(path: &Path) -> Result<TrainedModel, Failure> {
    let m: TrainedModel = read_json(path).map_err(|e| match e {
        FileError::Io { .. } if e.is_missing() => input(format!("no trained model at {}", path.display())),
        other => input(other),
    })?;
    m.check_format().map_err(input)?;
    Ok(m)
}

fn model_label(m: &TrainedModel) -> &'static str {
    match m.kind {
        bench::ModelKind::LogisticRegression => "logreg",
        bench::ModelKind::Mlp => "mlp",
        bench::ModelKind::BoostedStumps => "stumps",
        bench::ModelKind::DeepSets => "deepsets",
    }
}

fn cmd_eval(
    data: &Path,
    model_file: &Path,
    bins: usize,
    out: Option<&Path>,
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> Result<(), Failure> {
    let m = load_model(model_file)?;
    let ds: Dataset = read_json(data).map_err(read_failure)?;
    let r = evaluate(&m, &ds.test, bins).map_err(input)?;
    eprintln!("{}: log loss {:.4}, ECE {:.4} on {} samples", model_label(&m), r.log_loss, r.ece, r.n);
    if let Some(p) = csv {
        report::write_csv(p, &report::calibration_csv(&r)).map_err(write_failure)?;
    }
    if let Some(p) = svg {
        let points = r.bins.iter().filter(|b| b.size > 0).map(|b| (b.confidence, b.accuracy)).collect();
        let chart = analytics::render_line_chart_svg(
            "Reliability",
            "predicted CT win probability",
            &[Series { label: model_label(&m).into(), points }],
            true,
        );
        write_bytes(p, chart.as_bytes()).map_err(write_failure)?;
    }
    json_out(out, &r)
}

fn cmd_curve(model_files: &[PathBuf], doc: &Path, round: u16, out: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    let models: Vec<TrainedModel> = model_files.iter().map(|p| load_model(p)).collect::<Result<_, _>>()?;
    let doc: DemoDocument = read_json(doc).map_err(read_failure)?;
    let r = doc
        .game_rounds
        .iter()
        .find(|r| r.round_num == round)
        .ok_or_else(|| input(format!("round {round} not in document")))?;
    if r.frames.is_empty() {
        return Err(input(format!("round {round} has no frames")));
    }
    let rate = f64::from(doc.meta.tick_rate);
    let curves: Vec<Vec<(u32, f64)>> = models.iter().map(|m| bench::win_curve(m, r)).collect();
    if let Some(p) = csv {
        report::write_csv(p, &report::curve_csv(&curves[0])).map_err(write_failure)?;
    }
    let series: Vec<Series> = models
        .iter()
        .zip(&curves)
        .map(|(m, c)| Series {
            label: model_label(m).into(),
            points: c.iter().map(|&(t, p)| (f64::from(t - r.start_tick) / rate, p)).collect(),
        })
        .collect();
    let title = format!("Round {round} CT win probability");
    let chart = analytics::render_line_chart_svg(&title, "seconds since round start", &series, false);
    write_bytes(out, chart.as_bytes()).map_err(write_failure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_exits_one() {
        assert_eq!(run(["demoforge", "parse", "x.esdm", "--bogus"]), 1);
        assert_eq!(run(["demoforge"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["demoforge", "--help"]), 0);
    }

    #[test]
    fn bounds_parse() {
        assert_eq!(parse_bounds("0,10,-5,5").unwrap(), Bounds { xmin: 0.0, xmax: 10.0, ymin: -5.0, ymax: 5.0 });
        assert!(parse_bounds("0,0,1,2").is_err());
        assert!(parse_bounds("1,2,3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
