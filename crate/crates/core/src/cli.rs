//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arena::{self, GameConfig};
use crate::entropy::{self, ascent_maximize, DualEvalConfig, EntropySpec};
use crate::error::Error;
use crate::loss::LossSpec;
use crate::mixability::{self, EtaStatus, MixSearchConfig, MixabilityReport};
use crate::simplex::{self, DualVector};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERTIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_ENTROPIES: [&str; 7] = ["H", "S-0.1", "S-0.5", "S-0.9", "R-0.1", "R-0.5", "R-0.9"];
const DEFAULT_LOSSES: [&str; 4] = ["log", "l^Q", "l^S-0.5", "l^R-0.5"];

#[derive(Debug, Parser)]
#[command(name = "phimix", version, about = "Generalized mixability: η* search, regret tables and game simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of optimal regret and η* for every (loss, entropy) pair.
    Table(TableArgs),
    /// η* search for a single (loss, entropy) pair.
    Eta(EtaArgs),
    /// Closed-form worst-case divergences against numerical Bregman values.
    RegretBounds(RegretBoundsArgs),
    /// Play a game described by a TOML config and certify the regret bound.
    Simulate(SimulateArgs),
    /// Legendre probe, dual-solver validation and closed-form regrets.
    EntropyInfo(EntropyInfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 2)]
    pub experts: usize,
    #[arg(long, default_value_t = 2)]
    pub outcomes: usize,
    /// Coarse lattice resolution for expert predictions and mixtures.
    #[arg(long, default_value_t = 25)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eta_lo: f64,
    #[arg(long, default_value_t = 1e3)]
    pub eta_hi: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eta_tol: f64,
    /// Values of M at or above −band count as nonnegative.
    #[arg(long, default_value_t = MixSearchConfig::default().band)]
    pub band: f64,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
}

impl SearchArgs {
    fn config(&self) -> MixSearchConfig {
        MixSearchConfig {
            experts: self.experts,
            outcomes: self.outcomes,
            action_grid: self.grid,
            prior_grid: self.grid,
            eta_lo: self.eta_lo,
            eta_hi: self.eta_hi,
            eta_tol: self.eta_tol,
            band: self.band,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    /// Column entropy, e.g. `H`, `S-0.5`, `R-0.9/2` or a JSON spec.
    #[arg(long = "entropy")]
    pub entropies: Vec<String>,
    /// Row loss, e.g. `log`, `squared`, `l^S-0.5` or a JSON spec.
    #[arg(long = "loss")]
    pub losses: Vec<String>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Directory for table.csv, table.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct EtaArgs {
    #[arg(long, default_value = "H")]
    pub entropy: String,
    #[arg(long, default_value = "log")]
    pub loss: String,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct RegretBoundsArgs {
    #[arg(long = "entropy")]
    pub entropies: Vec<String>,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML game config.
    pub config: PathBuf,
    /// Directory for trace.csv, summary.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct EntropyInfoArgs {
    #[arg(long, default_value = "H")]
    pub entropy: String,
    #[arg(long, default_value_t = 3)]
    pub experts: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Written next to every set of output files.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Four significant figures.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let decimals = (3 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

/// A table cell: `regret (η*)`, or `—(0)` when η* = 0.
pub fn format_cell(report: &MixabilityReport) -> String {
    match (report.status, report.regret) {
        (EtaStatus::NotMixable, _) | (_, None) => "—(0)".into(),
        (EtaStatus::LowerBound, Some(r)) => format!("≤{} (≥{})", sig4(r), sig4(report.eta_star)),
        (EtaStatus::Found, Some(r)) => format!("{} ({})", sig4(r), sig4(report.eta_star)),
    }
}

fn parse_entropy(s: &str) -> Result<EntropySpec, CliError> {
    s.parse().map_err(|e: Error| CliError::Usage(format!("--entropy {s}: {e}")))
}

fn parse_loss(s: &str) -> Result<LossSpec, CliError> {
    s.parse().map_err(|e: Error| CliError::Usage(format!("--loss {s}: {e}")))
}

struct Output {
    dir: Option<PathBuf>,
    files: Vec<String>,
}

impl Output {
    fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| io(d, e))?;
        }
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        if let Some(d) = &self.dir {
            let p = d.join(name);
            fs::write(&p, contents).map_err(|e| io(&p, e))?;
            self.files.push(p.display().to_string());
        }
        Ok(())
    }

    fn finish<C: Serialize>(mut self, command: &str, config: &C, seed: u64, start: Instant) -> Result<(), CliError> {
        if self.dir.is_none() {
            return Ok(());
        }
        let manifest = RunManifest {
            command: command.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            outputs: std::mem::take(&mut self.files),
        };
        self.write("manifest.json", &to_json(&manifest))
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

#[derive(Serialize)]
struct TableDocument<'a> {
    entropies: Vec<String>,
    losses: Vec<String>,
    cells: Vec<TableCell<'a>>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct TableCell<'a> {
    loss: String,
    entropy: String,
    cell: String,
    report: &'a MixabilityReport,
}

fn cmd_table(args: &TableArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let cfg = args.search.config();
    cfg.validate()?;
    let pick = |given: &[String], default: &[&str]| -> Vec<String> {
        if given.is_empty() {
            default.iter().map(|s| s.to_string()).collect()
        } else {
            given.to_vec()
        }
    };
    let entropies = pick(&args.entropies, &DEFAULT_ENTROPIES)
        .iter()
        .map(|s| parse_entropy(s))
        .collect::<Result<Vec<_>, _>>()?;
    let losses = pick(&args.losses, &DEFAULT_LOSSES).iter().map(|s| parse_loss(s)).collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::new();
    for l in &losses {
        for e in &entropies {
            reports.push(mixability::mixability_report(e, l, &cfg)?);
        }
    }
    let mut rows = vec![std::iter::once("loss".to_string()).chain(entropies.iter().map(|e| e.label())).collect()];
    for (i, l) in losses.iter().enumerate() {
        let mut row = vec![l.label()];
        row.extend(reports[i * entropies.len()..(i + 1) * entropies.len()].iter().map(format_cell));
        rows.push(row);
    }
    let mut notes = Vec::new();
    if losses.iter().any(|l| l.label().starts_with("l^R"))
        || entropies.iter().any(|e| e.label().starts_with('R'))
    {
        notes.push("Rényi entropies use α ∈ (−1, 0); R-0.5 means α = −0.5.".into());
    }
    for r in &reports {
        if r.uniform_divergence - r.inf_sup_divergence > 1e-6 {
            notes.push(format!(
                "{} / {}: worst-case divergence {} below the uniform prior's {}",
                r.loss_id, r.entropy_id, r.inf_sup_divergence, r.uniform_divergence
            ));
        }
    }
    let doc = TableDocument {
        entropies: entropies.iter().map(|e| e.label()).collect(),
        losses: losses.iter().map(|l| l.label()).collect(),
        cells: reports
            .iter()
            .map(|r| TableCell { loss: r.loss_id.clone(), entropy: r.entropy_id.clone(), cell: format_cell(r), report: r })
            .collect(),
        notes,
    };
    let (csv, json) = (csv_string(&rows), to_json(&doc));
    print!("{}", if args.format == Format::Csv { &csv } else { &json });
    if args.format == Format::Json {
        println!();
    }
    let mut out = Output::new(args.out.clone())?;
    out.write("table.csv", &csv)?;
    out.write("table.json", &json)?;
    out.finish("table", args, cfg.seed, start)?;
    Ok(EXIT_OK)
}

fn cmd_eta(args: &EtaArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let cfg = args.search.config();
    let (phi, loss) = (parse_entropy(&args.entropy)?, parse_loss(&args.loss)?);
    let report = mixability::mixability_report(&phi, &loss, &cfg)?;
    let mut rows = vec![vec!["eta".to_string(), "m".into()]];
    rows.extend(report.samples.iter().map(|s| vec![s.eta.to_string(), s.m.to_string()]));
    let csv = csv_string(&rows);
    let json = to_json(&report);
    match args.format {
        Format::Csv => {
            println!("loss {}, entropy {}: {} ({:?})", report.loss_id, report.entropy_id, format_cell(&report), report.status);
            println!("eta* = {}", sig4(report.eta_star));
            print!("{csv}");
        }
        Format::Json => println!("{json}"),
    }
    let mut out = Output::new(args.out.clone())?;
    out.write("samples.csv", &csv)?;
    out.write("report.json", &json)?;
    out.finish("eta", args, cfg.seed, start)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BoundRow {
    entropy: String,
    k: usize,
    closed_form: f64,
    bregman: f64,
    difference: f64,
}

fn cmd_regret_bounds(args: &RegretBoundsArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    if args.k_min < 2 || args.k_max < args.k_min {
        return Err(CliError::Usage(format!("invalid K range {}..={}", args.k_min, args.k_max)));
    }
    let names: Vec<String> = if args.entropies.is_empty() {
        ["H", "Q", "S-0.5", "R-0.5"].map(String::from).to_vec()
    } else {
        args.entropies.clone()
    };
    let mut table = Vec::new();
    for name in &names {
        let phi = parse_entropy(name)?;
        for k in args.k_min..=args.k_max {
            let closed_form = entropy::closed_form_regret(&phi, k)?;
            let bregman = entropy::bregman(&phi, &simplex::dirac(k, 0)?, &simplex::uniform(k)?)?;
            table.push(BoundRow { entropy: phi.label(), k, closed_form, bregman, difference: closed_form - bregman });
        }
    }
    let mut rows = vec![["entropy", "k", "closed_form", "bregman", "difference"].map(String::from).to_vec()];
    rows.extend(table.iter().map(|r| {
        vec![r.entropy.clone(), r.k.to_string(), sig4(r.closed_form), sig4(r.bregman), format!("{:.3e}", r.difference)]
    }));
    let csv = csv_string(&rows);
    let json = to_json(&table);
    print!("{}", if args.format == Format::Csv { csv.clone() } else { json.clone() + "\n" });
    let mut out = Output::new(args.out.clone())?;
    out.write("regret_bounds.csv", &csv)?;
    out.write("regret_bounds.json", &json)?;
    out.finish("regret-bounds", args, 0, start)?;
    Ok(EXIT_OK)
}

/// Reads and validates a TOML game config.
pub fn load_game_config(path: &Path) -> Result<GameConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let cfg: GameConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let cfg = load_game_config(&args.config)?;
    let trace = arena::run_game(&cfg)?;
    let summary = trace.summary();
    let json = to_json(&summary);
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let csv = String::from_utf8(buf).expect("utf-8");
    match args.format {
        Format::Json => println!("{json}"),
        Format::Csv => {
            println!(
                "{} rounds, {} experts, loss {}, entropy {}",
                summary.rounds, summary.experts, summary.loss, summary.entropy
            );
            println!("player loss {}, regret {}", sig4(summary.player_loss), sig4(summary.regret));
            for (t, (l, d)) in summary.expert_losses.iter().zip(&summary.divergence_bounds).enumerate() {
                println!("expert {t}: loss {}, bound term {}, slack {}", sig4(*l), sig4(*d), sig4(trace.expert_slack[t]));
            }
        }
    }
    if let Some(e) = &summary.aborted {
        eprintln!("game aborted: {e}");
    }
    if !summary.flagged_rounds.is_empty() {
        eprintln!("mixability violations in rounds {:?}", summary.flagged_rounds);
    }
    for (t, s) in trace.expert_slack.iter().enumerate() {
        if *s < -arena::BOUND_TOLERANCE {
            eprintln!("bound violated for expert {t}: slack {s}");
        }
    }
    let mut out = Output::new(args.out.clone())?;
    out.write("trace.csv", &csv)?;
    out.write("summary.json", &json)?;
    out.finish("simulate", &cfg, cfg.seed, start)?;
    if summary.certified {
        println!("certified");
        Ok(EXIT_OK)
    } else {
        println!("not certified");
        Ok(EXIT_CERTIFICATION)
    }
}

#[derive(Serialize)]
struct EntropyInfo {
    entropy: EntropySpec,
    legendre: bool,
    probe: entropy::LegendreProbe,
    dual_max_error: f64,
    closed_form_regrets: Vec<(usize, f64)>,
}

fn cmd_entropy_info(args: &EntropyInfoArgs) -> Result<i32, CliError> {
    let start = Instant::now();
    let phi = parse_entropy(&args.entropy)?;
    let probe = entropy::legendre_probe(&phi, args.experts, args.seed)?;
    let legendre = probe.strictly_convex && probe.boundary_gradient_unbounded;
    // the solver against direct mirror ascent on random dual points
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let cfg = DualEvalConfig::default();
    let mut dual_max_error: f64 = 0.0;
    for _ in 0..20 {
        let v = DualVector::new(simplex::random_point(&mut rng, args.experts).iter().map(|x| 3.0 * x - 1.0).collect());
        let solved = entropy::entropic_dual(&phi, &v, &cfg)?;
        let start_point = simplex::uniform(args.experts)?;
        let direct = ascent_maximize(
            |m| simplex::dot(m, v.as_slice()) - entropy::unit_value(phi.kind, m) / phi.eta,
            |m| v.iter().zip(entropy::unit_grad(phi.kind, m)).map(|(a, b)| a - b / phi.eta).collect(),
            &start_point,
            1e-11,
            20_000,
        );
        dual_max_error = dual_max_error.max((solved - direct.value).abs());
    }
    let closed_form_regrets = (2..=8).map(|k| Ok((k, entropy::closed_form_regret(&phi, k)?))).collect::<Result<Vec<_>, Error>>()?;
    let info = EntropyInfo { entropy: phi, legendre, probe, dual_max_error, closed_form_regrets };
    let json = to_json(&info);
    match args.format {
        Format::Json => println!("{json}"),
        Format::Csv => {
            println!("entropy {}", phi.label());
            println!("strictly convex: {}", if info.probe.strictly_convex { "yes" } else { "no" });
            if info.probe.boundary_gradient_unbounded {
                println!("boundary gradient unbounded");
            } else {
                println!("boundary gradient bounded: not Legendre");
            }
            println!("Legendre: {}", if legendre { "yes" } else { "no" });
            println!("dual solver vs direct ascent: max error {:.3e}", info.dual_max_error);
            for (k, r) in &info.closed_form_regrets {
                println!("K={k}: sup_θ D(δ_θ, uniform) = {}", sig4(*r));
            }
        }
    }
    let mut out = Output::new(args.out.clone())?;
    out.write("entropy_info.json", &json)?;
    out.finish("entropy-info", args, args.seed, start)?;
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Table(a) => cmd_table(a),
        Command::Eta(a) => cmd_eta(a),
        Command::RegretBounds(a) => cmd_regret_bounds(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::EntropyInfo(a) => cmd_entropy_info(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
