use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spiralscan::io::{self, CompareFile, FootprintSummary, OrderFormat, ReportConfig, ReportFile};
use spiralscan::isotropy::{compare_strategies_with, scan_report, FERMAT_CONTINUOUS};
use spiralscan::ssm::{footprint, Aggregation, FootprintConfig, FootprintMap, Method, Probe};
use spiralscan::{GridDims, MatchConfig, MatchMode, ScanOrder, SpiralParams, Strategy};

#[derive(Parser)]
#[command(name = "spiralscan", version, about = "Build and analyze 2D grid scan orders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scan order file.
    Generate(GenerateArgs),
    /// Isotropy metrics of an existing scan order file.
    Metrics(MetricsArgs),
    /// Metrics and footprints for every strategy on one grid.
    Compare(CompareArgs),
    /// Footprint of a single strategy.
    Footprint(FootprintArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Raster,
    Rect,
    Fermat,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Raster => Strategy::Raster,
            StrategyArg::Rect => Strategy::Rect,
            StrategyArg::Fermat => Strategy::Fermat,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Accelerated,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Bin,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    SumAbs,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fd,
    Analytic,
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive and finite"))
    }
}

fn finite(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be finite"))
    }
}

fn probe(s: &str) -> std::result::Result<Probe, String> {
    s.parse().map_err(|e: spiralscan::Error| e.to_string())
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    height: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    width: u32,
}

impl GridArgs {
    fn dims(&self) -> Result<GridDims> {
        Ok(GridDims::new(self.height as usize, self.width as usize)?)
    }
}

#[derive(Args)]
struct SpiralArgs {
    /// Weight of the continuity term.
    #[arg(long, default_value_t = spiralscan::matching::DEFAULT_LAMBDA_C, value_parser = unit_interval)]
    lambda_c: f64,
    /// Fidelity normalizer; defaults to the grid diagonal.
    #[arg(long, value_parser = positive)]
    eta_f: Option<f64>,
    /// Continuity normalizer; defaults to the grid diagonal.
    #[arg(long, value_parser = positive)]
    eta_c: Option<f64>,
    /// Radial scale; defaults to reaching the grid corners.
    #[arg(long, value_parser = positive)]
    alpha: Option<f64>,
    /// Divergence angle in degrees; defaults to the golden angle.
    #[arg(long, value_parser = finite)]
    phi_g_deg: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Accelerated)]
    mode: ModeArg,
}

impl SpiralArgs {
    fn resolve(&self, dims: GridDims) -> Result<(SpiralParams, MatchConfig)> {
        let mut sp = SpiralParams::for_grid(dims);
        if let Some(a) = self.alpha {
            sp.alpha = a;
        }
        if let Some(deg) = self.phi_g_deg {
            sp.phi_g = deg.to_radians();
        }
        sp.validate()?;
        let mode = match self.mode {
            ModeArg::Exhaustive => MatchMode::Exhaustive,
            ModeArg::Accelerated => MatchMode::Accelerated,
        };
        let mut cfg = MatchConfig::for_grid(dims).with_lambda(self.lambda_c).with_mode(mode);
        if let Some(e) = self.eta_f {
            cfg.eta_f = e;
        }
        if let Some(e) = self.eta_c {
            cfg.eta_c = e;
        }
        cfg.validate()?;
        Ok((sp, cfg))
    }
}

#[derive(Args)]
struct FootprintOpts {
    /// Number of random parameter draws to average.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    seeds: u32,
    /// First seed; draw `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `center`, `corner` or `row,col`.
    #[arg(long, default_value = "center", value_parser = probe)]
    probe: Probe,
    #[arg(long, value_enum, default_value_t = AggregationArg::SumAbs)]
    aggregation: AggregationArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Fd)]
    method: MethodArg,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    channels: u32,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    state_dim: u32,
    /// Use a fixed step size instead of an input-dependent one.
    #[arg(long)]
    non_selective: bool,
}

impl FootprintOpts {
    fn config(&self) -> Result<FootprintConfig> {
        let cfg = FootprintConfig {
            channels: self.channels as usize,
            state_dim: self.state_dim as usize,
            selective: !self.non_selective,
            n_seeds: self.seeds as usize,
            base_seed: self.seed,
            probe: self.probe,
            aggregation: match self.aggregation {
                AggregationArg::SumAbs => Aggregation::SumAbs,
                AggregationArg::L2 => Aggregation::L2,
            },
            method: match self.method {
                MethodArg::Fd => Method::FiniteDifference,
                MethodArg::Analytic => Method::Analytic,
            },
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    spiral: SpiralArgs,
    /// Recorded in reports; scan construction is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; CSV goes to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Bin)]
    format: FormatArg,
}

#[derive(Args)]
struct MetricsArgs {
    /// Binary or CSV scan order file.
    #[arg(long)]
    order: PathBuf,
    /// Report path; printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    spiral: SpiralArgs,
    #[command(flatten)]
    fp: FootprintOpts,
    #[arg(long)]
    out: PathBuf,
    /// Directory for `<strategy>.pgm` heatmaps.
    #[arg(long)]
    heatmaps: PathBuf,
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct FootprintArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    spiral: SpiralArgs,
    #[command(flatten)]
    fp: FootprintOpts,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn spiral_config(strategy: Strategy, sp: &SpiralParams, cfg: &MatchConfig, seed: Option<u64>) -> ReportConfig {
    match strategy {
        Strategy::Fermat => ReportConfig {
            lambda_c: Some(cfg.lambda_c),
            eta_f: Some(cfg.eta_f),
            eta_c: Some(cfg.eta_c),
            alpha: Some(sp.alpha),
            phi_g_radians: Some(sp.phi_g),
            seed,
        },
        _ => ReportConfig {
            seed,
            ..Default::default()
        },
    }
}

fn write_report(path: &Path, report: &ReportFile) -> Result<()> {
    report.validate()?;
    io::write_json(path, report).with_context(|| format!("writing {}", path.display()))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let dims = a.grid.dims()?;
    let (sp, cfg) = a.spiral.resolve(dims)?;
    let t = Instant::now();
    let order = Strategy::from(a.strategy).build(dims, &sp, &cfg)?;
    let ms = elapsed_ms(t);
    let format = match a.format {
        FormatArg::Bin => OrderFormat::Bin,
        FormatArg::Csv => OrderFormat::Csv,
    };
    match (&a.out, format) {
        (Some(path), _) => {
            io::write_order(path, &order, format).with_context(|| format!("writing {}", path.display()))?;
            println!("n_cells {}  elapsed_ms {:.3}", order.len(), ms);
        }
        (None, OrderFormat::Csv) => {
            print!("{}", io::encode_order_csv(&order)?);
            eprintln!("n_cells {}  elapsed_ms {:.3}", order.len(), ms);
        }
        (None, OrderFormat::Bin) => bail!("--out is required for --format bin"),
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let order = io::read_order(&a.order, None).with_context(|| format!("reading {}", a.order.display()))?;
    let t = Instant::now();
    let metrics = scan_report(&order)?;
    let mut report = ReportFile::new(order.dims());
    report.metrics = Some(metrics);
    if a.timings {
        report.timings_ms.insert("metrics".into(), elapsed_ms(t));
    }
    match a.out {
        Some(path) => write_report(&path, &report)?,
        None => {
            report.validate()?;
            print!("{}", io::to_json(&report)?);
        }
    }
    Ok(())
}

fn run_footprint(order: &ScanOrder, fp: &FootprintConfig) -> Result<(FootprintMap, f64)> {
    let t = Instant::now();
    let map = footprint(order, fp)?;
    Ok((map, elapsed_ms(t)))
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let dims = a.grid.dims()?;
    let (sp, cfg) = a.spiral.resolve(dims)?;
    let fp = a.fp.config()?;
    std::fs::create_dir_all(&a.heatmaps).with_context(|| format!("creating {}", a.heatmaps.display()))?;

    let t = Instant::now();
    let metrics = compare_strategies_with(dims, &sp, &cfg)?;
    let metrics_ms = elapsed_ms(t);

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for strategy in Strategy::ALL {
        let t = Instant::now();
        let order = strategy.build(dims, &sp, &cfg)?;
        let build_ms = elapsed_ms(t);
        let (map, fp_ms) = run_footprint(&order, &fp)?;
        let heatmap = a.heatmaps.join(format!("{}.pgm", strategy.name()));
        io::write_pgm(&heatmap, &map).with_context(|| format!("writing {}", heatmap.display()))?;

        let mut r = ReportFile::new(dims);
        r.strategy = Some(strategy.name().into());
        r.config = spiral_config(strategy, &sp, &cfg, Some(fp.base_seed));
        r.metrics = metrics.get(strategy.name()).copied();
        r.footprint = Some(FootprintSummary::from(&map));
        if a.timings {
            r.timings_ms.insert("build".into(), build_ms);
            r.timings_ms.insert("footprint".into(), fp_ms);
            r.timings_ms.insert("metrics_all".into(), metrics_ms);
        }
        rows.push((strategy.name(), r.metrics.map(|m| m.nn_variance), map.mu, map.sigma));
        reports.push(r);
    }
    let mut cont = ReportFile::new(dims);
    cont.strategy = Some(FERMAT_CONTINUOUS.into());
    cont.config = spiral_config(Strategy::Fermat, &sp, &cfg, None);
    cont.metrics = metrics.get(FERMAT_CONTINUOUS).copied();
    reports.push(cont);

    let file = CompareFile {
        tool_version: io::TOOL_VERSION.into(),
        dims: dims.into(),
        reports,
    };
    file.validate()?;
    io::write_json(&a.out, &file).with_context(|| format!("writing {}", a.out.display()))?;

    println!("{:<10} {:>14} {:>10} {:>10}", "strategy", "nn_variance", "fp_mu", "fp_sigma");
    for (name, nn, mu, sigma) in rows {
        let nn = nn.map_or("-".to_string(), |v| format!("{v:.6e}"));
        println!("{name:<10} {nn:>14} {mu:>10.6} {sigma:>10.6}");
    }
    Ok(())
}

fn cmd_footprint(a: FootprintArgs) -> Result<()> {
    let dims = a.grid.dims()?;
    let (sp, cfg) = a.spiral.resolve(dims)?;
    let fp = a.fp.config()?;
    let strategy = Strategy::from(a.strategy);
    let t = Instant::now();
    let order = strategy.build(dims, &sp, &cfg)?;
    let build_ms = elapsed_ms(t);
    let (map, fp_ms) = run_footprint(&order, &fp)?;
    if let Some(path) = &a.heatmap {
        io::write_pgm(path, &map).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut r = ReportFile::new(dims);
    r.strategy = Some(strategy.name().into());
    r.config = spiral_config(strategy, &sp, &cfg, Some(fp.base_seed));
    r.footprint = Some(FootprintSummary::from(&map));
    if a.timings {
        r.timings_ms.insert("build".into(), build_ms);
        r.timings_ms.insert("footprint".into(), fp_ms);
    }
    write_report(&a.out, &r)?;
    println!("{}  mu {:.6}  sigma {:.6}", strategy.name(), map.mu, map.sigma);
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SPIRALSCAN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("SPIRALSCAN_THREADS must be a non-negative integer, got `{v}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Footprint(a) => cmd_footprint(a),
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
