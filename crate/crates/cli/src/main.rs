//! `mchom`: run the multicontinuum upscaling pipeline from the command line.
//!
//! Every subcommand reads an optional flat `key=value` config file, applies
//! command-line overrides on top, validates the result and writes everything
//! under `--out`. Exit codes: 0 success, 2 configuration, 3 solver, 4 I/O.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mchom::cell_problems::write_decay_log;
use mchom::effective::save_json;
use mchom::experiments::{
    append_csv, block_decay, coarse_solve, diagonal_sweep, fine_reference, parse_kv, period_sweep,
    resolve_threads, run_case, run_sweep, upscale, with_threads, BlockTensors, CaseOutcome, CsvRow,
    ExperimentConfig, Problem, RunManifest,
};
use mchom::fine_solvers::save_dumps;
use mchom::grid::Layers;
use mchom::media::save_raster;
use mchom::{Error, ErrorCategory, Result, Stage, StageExt};

#[derive(Parser)]
#[command(name = "mchom", version, about = "Multicontinuum homogenization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fine-scale reference problem and dump its fields.
    SolveFine(Common),
    /// Solve the cell problems and report constraint residuals and decay.
    Cells(CellsArgs),
    /// Compute effective coefficients of every block and export them as JSON.
    Upscale(Common),
    /// Solve the macroscale system from exported or freshly computed tensors.
    SolveCoarse(CoarseArgs),
    /// Run the whole pipeline and append a row to `results.csv`.
    RunCase(Common),
    /// Run several configurations and append one row each.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Extra `key=value` override; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// 0 (homogeneous), 1 (layers) or 2 (inclusions).
    #[arg(long)]
    case: Option<String>,
    /// Coarse blocks per axis.
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    /// Period, as a decimal or `1/k`.
    #[arg(long)]
    eps: Option<String>,
    /// Oversampling layers `l`.
    #[arg(long, alias = "l")]
    layers: Option<usize>,
    /// Velocity-constraint layers (below `l`; default `l - 2`).
    #[arg(long = "l-v")]
    l_v: Option<usize>,
    /// Integration layers (default `l - 1`).
    #[arg(long = "l-i")]
    l_i: Option<usize>,
    /// zero_order, elliptic or mixed.
    #[arg(long)]
    path: Option<String>,
    /// Fine cells per axis (default: h = H * eps).
    #[arg(long)]
    n_fine: Option<usize>,
    /// Drop the alpha^v coupling in the mixed macro system.
    #[arg(long)]
    neglect_alpha_v: bool,
    #[arg(long)]
    neglect_convection: bool,
    /// Disable cell-solution reuse between identical blocks.
    #[arg(long)]
    no_cache: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (overrides MCHOM_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CellsArgs {
    #[command(flatten)]
    common: Common,
    /// Block `i,j` (default: the central block).
    #[arg(long, value_name = "I,J")]
    block: Option<String>,
    /// Write per-column decay ratios as JSON lines.
    #[arg(long)]
    dump_decay: bool,
    /// Layer counts to compare in the decay dump (default: the configured l).
    /// Inner layers are held at zero so only the oversampling width changes.
    #[arg(long, value_delimiter = ',')]
    decay_layers: Vec<usize>,
}

#[derive(Args)]
struct CoarseArgs {
    #[command(flatten)]
    common: Common,
    /// Tensors exported by `upscale`; computed on the fly when absent.
    #[arg(long, value_name = "FILE")]
    tensors: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Values of M with H = eps = 1/M.
    #[arg(long, value_delimiter = ',')]
    pairs: Vec<usize>,
    /// Periods at the configured M.
    #[arg(long = "eps-list", value_delimiter = ',')]
    eps_list: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("case", self.case.clone());
        put("m", self.m.map(|v| v.to_string()));
        put("eps", self.eps.clone());
        put("l", self.layers.map(|v| v.to_string()));
        put("l_v", self.l_v.map(|v| v.to_string()));
        put("l_i", self.l_i.map(|v| v.to_string()));
        put("path", self.path.clone());
        put("n_fine", self.n_fine.map(|v| v.to_string()));
        put("neglect_alpha_v", self.neglect_alpha_v.then(|| "true".into()));
        put("neglect_convection", self.neglect_convection.then(|| "true".into()));
        put("cache", self.no_cache.then(|| "false".into()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        map.extend(parse_kv(&self.set.join("\n"))?);
        Ok(map)
    }

    /// Config file first, then command-line overrides.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut map = match &self.config {
            Some(p) => parse_kv(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        let over = self.overrides()?;
        // A new `l` without explicit inner widths resets them to the defaults
        // for that `l` rather than keeping values tied to the old one.
        if over.contains_key("l") {
            for k in ["l_v", "l_i"] {
                if !over.contains_key(k) {
                    map.remove(k);
                }
            }
        }
        map.extend(over);
        ExperimentConfig::from_map(&map)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.clone())
}

fn parse_block(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--block expects I,J, got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn finish(mut manifest: RunManifest, dir: &Path, name: &str, outputs: Vec<PathBuf>) -> Result<()> {
    let path = dir.join(format!("{name}.manifest.json"));
    manifest.outputs = outputs;
    manifest.outputs.push(path.clone());
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    manifest.save(&path)
}

fn record_outcome(o: &CaseOutcome, dir: &Path, command: &str, threads: Option<usize>) -> Result<CsvRow> {
    let tag = o.config.tag();
    let csv = dir.join("results.csv");
    let row = CsvRow::from_outcome(o);
    append_csv(&csv, &row)?;
    o.coarse.save(dir, &format!("{tag}.coarse"))?;
    let report = dir.join(format!("{tag}.errors.json"));
    save_json(&o.report, &report)?;
    let manifest = RunManifest::new(command, &o.config, threads).with_outcome(o);
    let outputs = vec![
        csv,
        dir.join(format!("{tag}.coarse.txt")),
        dir.join(format!("{tag}.coarse.json")),
        report,
    ];
    finish(manifest, dir, &tag, outputs)?;
    Ok(row)
}

fn print_row(row: &CsvRow) {
    let pct: Vec<String> = row.e2.iter().map(|e| format!("{:.2}%", 100.0 * e)).collect();
    println!("{}  (e2 = {})", row.to_line(), pct.join(", "));
}

fn solve_fine(c: &Common, threads: Option<usize>) -> Result<()> {
    let cfg = c.config()?;
    let dir = out_dir(&cfg)?;
    let problem = Problem::build(&cfg).stage(Stage::Medium)?;
    let fine = fine_reference(&problem).stage(Stage::FineReference)?;
    let tag = format!("{}.fine", cfg.tag());
    save_dumps(&fine, &dir, &tag)?;
    let raster = dir.join(format!("{}.raster.txt", cfg.tag()));
    save_raster(&problem.medium, &raster)?;
    let mut outputs = vec![raster, dir.join(format!("{tag}_u.txt"))];
    if fine.velocity.is_some() {
        outputs.push(dir.join(format!("{tag}_v.txt")));
    }
    println!("fine solution on {0}x{0} cells written to {1}", cfg.fine_cells(), dir.display());
    finish(RunManifest::new("solve-fine", &cfg, threads), &dir, &tag, outputs)
}

fn cells(a: &CellsArgs, threads: Option<usize>) -> Result<()> {
    let cfg = a.common.config()?;
    let dir = out_dir(&cfg)?;
    let problem = Problem::build(&cfg).stage(Stage::Medium)?;
    let block = match &a.block {
        Some(s) => parse_block(s)?,
        None => (cfg.m / 2, cfg.m / 2),
    };
    let layer_list: Vec<_> = if a.decay_layers.is_empty() {
        vec![cfg.layers]
    } else {
        a.decay_layers
            .iter()
            .map(|&l| Layers::new(l, 0, 0))
            .collect::<Result<_>>()?
    };
    let mut reports = Vec::new();
    for layers in layer_list {
        reports.extend(block_decay(&problem, block, layers).stage(Stage::CellProblems)?);
    }
    let mut outputs = Vec::new();
    if a.dump_decay {
        let path = dir.join(format!("{}.decay.jsonl", cfg.tag()));
        let mut buf = Vec::new();
        write_decay_log(&reports, &mut buf)?;
        std::fs::write(&path, &buf)?;
        std::io::stdout().write_all(&buf)?;
        outputs.push(path);
    } else {
        for r in &reports {
            println!("block {:?} l={} {:<12} decay ratio {:.3e}", r.block, r.l, r.column, r.ratio);
        }
    }
    let name = format!("{}.cells_{}_{}", cfg.tag(), block.0, block.1);
    finish(RunManifest::new("cells", &cfg, threads), &dir, &name, outputs)
}

fn upscale_cmd(c: &Common, threads: Option<usize>) -> Result<()> {
    let cfg = c.config()?;
    let dir = out_dir(&cfg)?;
    let problem = Problem::build(&cfg).stage(Stage::Medium)?;
    let (tensors, stats) = upscale(&problem)?;
    let path = dir.join(format!("{}.tensors.json", cfg.tag()));
    save_json(&tensors, &path)?;
    println!(
        "{} blocks, {} distinct cell problems, max constraint residual {:.2e}; tensors in {}",
        stats.blocks,
        stats.solved,
        stats.max_residual,
        path.display()
    );
    let mut manifest = RunManifest::new("upscale", &cfg, threads);
    manifest.cells = Some(stats);
    finish(manifest, &dir, &format!("{}.upscale", cfg.tag()), vec![path])
}

fn solve_coarse(a: &CoarseArgs, threads: Option<usize>) -> Result<()> {
    let cfg = a.common.config()?;
    let dir = out_dir(&cfg)?;
    let tensors: BlockTensors = match &a.tensors {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Parse(e.to_string()))?,
        None => upscale(&Problem::build(&cfg).stage(Stage::Medium)?)?.0,
    };
    let sol = coarse_solve(&cfg, &tensors).stage(Stage::CoarseSolve)?;
    let stem = format!("{}.coarse", cfg.tag());
    sol.save(&dir, &stem)?;
    println!("coarse solution written to {}", dir.join(format!("{stem}.txt")).display());
    let outputs = vec![dir.join(format!("{stem}.txt")), dir.join(format!("{stem}.json"))];
    finish(RunManifest::new("solve-coarse", &cfg, threads), &dir, &stem, outputs)
}

fn run_case_cmd(c: &Common, threads: Option<usize>) -> Result<()> {
    let cfg = c.config()?;
    let dir = out_dir(&cfg)?;
    let outcome = run_case(&cfg)?;
    let row = record_outcome(&outcome, &dir, "run-case", threads)?;
    print_row(&row);
    Ok(())
}

fn sweep(a: &SweepArgs, threads: Option<usize>) -> Result<()> {
    let base = a.common.config()?;
    let dir = out_dir(&base)?;
    let mut configs = diagonal_sweep(&base, &a.pairs);
    if !a.eps_list.is_empty() {
        let mut eps = Vec::new();
        for s in &a.eps_list {
            let mut m = BTreeMap::new();
            m.insert("eps".to_string(), s.clone());
            eps.push(ExperimentConfig::from_map(&m)?.eps);
        }
        configs.extend(period_sweep(&base, &eps));
    }
    if configs.is_empty() {
        return Err(Error::Config("sweep needs --pairs and/or --eps-list".into()));
    }
    let outcomes = run_sweep(&configs)?;
    let mut rows = Vec::new();
    for o in &outcomes {
        let row = record_outcome(o, &dir, "sweep", threads)?;
        print_row(&row);
        rows.push(row);
    }
    let decreasing = rows.windows(2).all(|w| w[1].e2[0] < w[0].e2[0]);
    println!("e2_1 {} over the sweep", if decreasing { "decreases" } else { "does not decrease" });
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let common = match &cli.command {
        Command::SolveFine(c) | Command::Upscale(c) | Command::RunCase(c) => c,
        Command::Cells(a) => &a.common,
        Command::SolveCoarse(a) => &a.common,
        Command::Sweep(a) => &a.common,
    };
    let threads = resolve_threads(common.threads)?;
    with_threads(threads, || match &cli.command {
        Command::SolveFine(c) => solve_fine(c, threads),
        Command::Cells(a) => cells(a, threads),
        Command::Upscale(c) => upscale_cmd(c, threads),
        Command::SolveCoarse(a) => solve_coarse(a, threads),
        Command::RunCase(c) => run_case_cmd(c, threads),
        Command::Sweep(a) => sweep(a, threads),
    })?
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Solver => 3,
        ErrorCategory::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
