use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use d2cip::harness::io::write_scenario_dir;
use d2cip::harness::{
    builtin_suite, compute_metrics, generate_scenario, load_sequence, make_backend, run_ablation, run_sequence,
    run_sequence_observed, RunConfig, ScenarioKind, ScenarioParams, Sequence, TrackResult,
};

const SEED_ENV: &str = "D2CIP_SEED";

#[derive(Parser)]
#[command(name = "d2cip", version, about = "Iterative correlation particle filter tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence directory and write result.json and metrics.csv.
    Track {
        /// Directory with %06d.pgm frames and groundtruth.txt (or scenario.json).
        sequence: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write per-particle refinement traces as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run all four variants over a suite and write ablation.csv.
    Ablate {
        /// Directory whose subdirectories are sequences; the built-in
        /// synthetic suite is used when omitted.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Built-in suite: scenarios per kind.
        #[arg(long, default_value_t = 5)]
        per_kind: usize,
        /// Built-in suite: frames per scenario.
        #[arg(long)]
        frames: Option<usize>,
        /// Number of seeds, starting at the configured seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a synthetic scenario (frames, ground truth, scenario.json).
    Gen {
        /// linear, fast-motion, occlusion, distractor, or `suite` for the
        /// built-in suite (one subdirectory per scenario).
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value_t = 5)]
        per_kind: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics.csv from a saved result.json.
    Metrics {
        result: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    /// Defaults, then the file, then the seed environment variable, then flags.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::parse_kv(&text, RunConfig::default())?
            }
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.set("seed", &v).with_context(|| format!("{SEED_ENV}"))?;
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(k, v)?;
        }
        if let Some(v) = &self.variant {
            cfg.set("variant", v)?;
        }
        if let Some(v) = &self.backend {
            cfg.set("backend", v)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.particles {
            cfg.n_total = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn scenario_params(frames: Option<usize>) -> ScenarioParams {
    let mut p = ScenarioParams::default();
    if let Some(n) = frames {
        p.frames = n;
    }
    p
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn track(seq_dir: &Path, cfg: &RunConfig, out: &Path, trace: Option<&Path>) -> Result<()> {
    let seq = load_sequence(seq_dir).with_context(|| format!("loading {}", seq_dir.display()))?;
    let result = match trace {
        None => run_sequence(cfg, &seq)?,
        Some(path) => run_traced(cfg, &seq, path)?,
    };
    let metrics = compute_metrics(&result)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("result.json"), &result)?;
    fs::write(out.join("metrics.csv"), metrics.to_csv())?;
    let lost = result.frames.iter().filter(|f| f.diagnostics.lost).count();
    println!(
        "{} [{}] precision@20 = {:.4}  success AUC = {:.4}  lost frames = {lost}",
        result.sequence, result.variant, metrics.precision, metrics.success_auc
    );
    Ok(())
}

fn run_traced(cfg: &RunConfig, seq: &Sequence, path: &Path) -> Result<TrackResult> {
    use std::io::Write;

    let backend = make_backend(cfg.backend, seq)?;
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let result = run_sequence_observed(cfg, seq, backend.as_ref(), |t, step| match &step.report {
        Some(report) => report.write_jsonl(t, &mut w),
        None => Ok(()),
    })?;
    w.flush()?;
    Ok(result)
}

fn load_suite(dir: &Path) -> Result<Vec<Sequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no sequence directories in {}", dir.display());
    }
    dirs.iter()
        .map(|d| load_sequence(d).with_context(|| format!("loading {}", d.display())))
        .collect()
}

fn ablate(
    suite_dir: Option<&Path>,
    per_kind: usize,
    frames: Option<usize>,
    n_seeds: u64,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    if n_seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let suite = match suite_dir {
        Some(d) => load_suite(d)?,
        None => builtin_suite(per_kind, &scenario_params(frames))?
            .into_iter()
            .map(|sc| Sequence::from_scenario(format!("{}-{:04}", sc.kind, sc.seed), sc))
            .collect(),
    };
    let seeds: Vec<u64> = (0..n_seeds).map(|i| cfg.seed.wrapping_add(i)).collect();
    let table = run_ablation(&suite, cfg, &seeds)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("ablation.csv"), table.to_csv())?;
    fs::write(out.join("ablation_runs.csv"), table.runs_csv())?;
    print!("{}", table.format_table());
    let failed = table.runs.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} run(s) failed and were scored as lost");
    }
    Ok(())
}

fn gen(kind: &str, seed: u64, frames: Option<usize>, per_kind: usize, out: &Path) -> Result<()> {
    let params = scenario_params(frames);
    if kind.eq_ignore_ascii_case("suite") {
        for sc in builtin_suite(per_kind, &params)? {
            let dir = out.join(format!("{}-{:04}", sc.kind, sc.seed));
            write_scenario_dir(&dir, &sc)?;
        }
        println!("wrote {} scenarios to {}", per_kind * ScenarioKind::ALL.len(), out.display());
    } else {
        let k: ScenarioKind = kind.parse()?;
        let sc = generate_scenario(k, &params, seed)?;
        write_scenario_dir(out, &sc)?;
        println!("wrote {} frames of {} to {}", sc.len(), k, out.display());
    }
    Ok(())
}

fn metrics(result: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(result).with_context(|| format!("reading {}", result.display()))?;
    let r: TrackResult = serde_json::from_str(&text).context("parsing track result")?;
    let m = compute_metrics(&r)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.csv"), m.to_csv())?;
    println!("precision@20 = {:.4}  success AUC = {:.4}", m.precision, m.success_auc);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track {
            sequence,
            cfg,
            out,
            trace,
        } => track(&sequence, &cfg.resolve()?, &out, trace.as_deref()),
        Command::Ablate {
            suite,
            per_kind,
            frames,
            seeds,
            cfg,
            out,
        } => ablate(suite.as_deref(), per_kind, frames, seeds, &cfg.resolve()?, &out),
        Command::Gen {
            kind,
            seed,
            frames,
            per_kind,
            out,
        } => gen(&kind, seed, frames, per_kind, &out),
        Command::Metrics { result, out } => metrics(&result, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
