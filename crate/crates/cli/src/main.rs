use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use radarfed::harness::{
    export_csv, kl_study, read_summary_csv, run_experiment_with, sweep, write_summary_csv, ExperimentConfig, Mode,
    Quantiles, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "radarfed",
    version,
    about = "Cooperative and federated radar fusion simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write epochs.csv and summary.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Dump posterior grids every N epochs.
        #[arg(long, value_name = "N")]
        dump_grids: Option<u64>,
        /// Log sidelink messages to messages.jsonl.
        #[arg(long)]
        replay: bool,
    },
    /// Monte Carlo over consecutive seeds starting at --seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Federation run sampling D_KL against the global posterior.
    Kl {
        #[command(flatten)]
        common: Common,
    },
    /// Average summary CSVs by mode, radar, metric and key.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.n_epochs = e;
        }
        cfg.validate()?;
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(cfg)
    }
}

fn target_ids(cfg: &ExperimentConfig) -> Vec<u32> {
    cfg.scenario.targets.iter().map(|t| t.id).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn run(common: &Common, dump_grids: Option<u64>, replay: bool) -> Result<()> {
    let cfg = common.load()?;
    let options = RunOptions {
        grid_dump: dump_grids.map(|n| (common.out.join("grids"), n)),
        replay: replay.then(|| common.out.join("messages.jsonl")),
    };
    let out = run_experiment_with(&cfg, &options)?;
    let (epochs, summary) = export_csv(&common.out, &target_ids(&cfg), &out.records, &out.metrics)?;
    let h = out.metrics.headline();
    println!(
        "{} seed {} radar {}: MAE x {} y {}, P_u {}, B {:.1} bit/s",
        cfg.mode,
        cfg.seed,
        cfg.observer,
        fmt_opt(h.mae.map(|m| m.x)),
        fmt_opt(h.mae.map(|m| m.y)),
        fmt_opt(h.p_u),
        h.rate_bps
    );
    info!("wrote {} and {}", epochs.display(), summary.display());
    Ok(())
}

fn run_sweep(common: &Common, seeds: u64) -> Result<()> {
    let cfg = common.load()?;
    let first = cfg.seed;
    let result = sweep(&cfg, first..first + seeds)?;
    let path = common.out.join(format!("sweep_{}.csv", cfg.mode));
    write_summary_csv(&path, &result.runs)?;
    println!(
        "{} over {} seeds: mean MAE x {} y {}, mean P_u {}, mean B {} bit/s, {} seeds unresolved",
        cfg.mode,
        seeds,
        fmt_opt(result.mean_mae_x()),
        fmt_opt(result.mean_mae_y()),
        fmt_opt(result.mean_p_u()),
        fmt_opt(result.mean_rate_bps()),
        result.unresolved_runs()
    );
    info!("wrote {}", path.display());
    Ok(())
}

fn run_kl(common: &Common) -> Result<()> {
    let mut cfg = common.load()?;
    cfg.mode = Mode::Federation;
    cfg.kl.enabled = true;
    let out = run_experiment_with(&cfg, &RunOptions::default())?;
    export_csv(&common.out, &target_ids(&cfg), &out.records, &out.metrics)?;
    let study = kl_study(&out.records);
    let path = common.out.join("kl.csv");
    write_kl(&path, &study.pooled_fed, &study.per_radar)?;
    let med = |q: &Option<Quantiles>| fmt_opt(q.as_ref().map(Quantiles::median));
    println!("median D_KL(global||federated), pooled: {}", med(&study.pooled_fed));
    for (k, (fed, local)) in study.per_radar.iter().enumerate() {
        println!("radar {k}: federated {}, local {}", med(fed), med(local));
    }
    println!("federated closer than every local: {}", study.federation_closer());
    Ok(())
}

fn write_kl(path: &Path, pooled: &Option<Quantiles>, per: &[(Option<Quantiles>, Option<Quantiles>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["radar", "divergence", "count", "mean", "q10", "median", "q90"])?;
    let mut row = |radar: &str, what: &str, q: &Option<Quantiles>| -> Result<()> {
        if let Some(q) = q {
            w.write_record([
                radar.to_string(),
                what.to_string(),
                q.count.to_string(),
                q.mean.to_string(),
                q.deciles[0].to_string(),
                q.median().to_string(),
                q.deciles[8].to_string(),
            ])?;
        }
        Ok(())
    };
    row("all", "federated", pooled)?;
    for (k, (fed, local)) in per.iter().enumerate() {
        row(&k.to_string(), "federated", fed)?;
        row(&k.to_string(), "local", local)?;
    }
    w.flush()?;
    Ok(())
}

fn report(summaries: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut acc: BTreeMap<(String, String, String, String), (f64, u64)> = BTreeMap::new();
    for path in summaries {
        for m in read_summary_csv(path)? {
            let mode = m.mode.to_string();
            for [radar, metric, key, value] in m.to_rows() {
                if let Ok(v) = value.parse::<f64>() {
                    let e = acc.entry((mode.clone(), radar, metric, key)).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
        }
    }
    if acc.is_empty() {
        bail!("no metrics found in the given summaries");
    }
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["mode", "radar", "metric", "key", "mean", "runs"])?;
    for ((mode, radar, metric, key), (sum, n)) in acc {
        w.write_record([mode, radar, metric, key, (sum / n as f64).to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run {
            common,
            dump_grids,
            replay,
        } => run(common, *dump_grids, *replay),
        Command::Sweep { common, seeds } => run_sweep(common, *seeds),
        Command::Kl { common } => run_kl(common),
        Command::Report { summaries, out } => report(summaries, out.as_deref()),
    }
}
