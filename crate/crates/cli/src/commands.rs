use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use fgcn_core::kernel::{enumerate_paths, expand, reachable_hop_subsets, unit_hop_coefficients, Scheme, MAX_SEARCH_HOPS};
use fgcn_core::pipeline::{generate_sbm, run_protocol, save_dataset, SbmConfig};
use fgcn_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunArgs, RunConfig, SbmArgs};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Invalid(format!("serializing json: {e}")))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory for report.json, report.csv and timing.json
    #[arg(long, default_value = "fgcn-out")]
    pub out: PathBuf,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let ds = cfg.load_dataset()?;
    let model = cfg.model_for(&ds, cfg.hops);
    let start = Instant::now();
    let report = run_protocol(&model, &cfg.hyper(), &ds, cfg.seed)?;
    let total = start.elapsed().as_secs_f64();

    create_dir(&args.out)?;
    write_file(&args.out.join("report.json"), &to_json(&json!({ "config": cfg, "report": report }))?)?;
    write_file(&args.out.join("report.csv"), &report.to_csv()?)?;
    let per_split: Vec<f64> = report.runs.iter().map(|r| r.wall_clock_secs).collect();
    write_file(
        &args.out.join("timing.json"),
        &to_json(&json!({ "total_secs": total, "per_split_secs": per_split }))?,
    )?;

    println!("dataset {} ({} nodes), model {} K={}", ds.name(), ds.num_nodes(), cfg.model, cfg.hops);
    for (i, run) in report.runs.iter().enumerate() {
        println!(
            "split {i}: test micro-F1 {:.4}, stopped at epoch {}",
            run.test_micro_f1.unwrap_or(f64::NAN),
            run.epoch_stopped
        );
    }
    println!("mean test micro-F1: {:.4}", report.mean_test_micro_f1);
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Kernel depth K (1..=20; subset search only up to 6)
    #[arg(long)]
    pub hops: usize,
    /// shared, skip or non_shared
    #[arg(long, default_value = "shared")]
    pub scheme: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

fn subset_label(s: &std::collections::BTreeSet<usize>) -> String {
    s.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("-")
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let scheme: Scheme = args.scheme.parse()?;
    let k = args.hops;
    let coeffs = unit_hop_coefficients(k, scheme)?;
    let paths = enumerate_paths(k)?;
    let subsets = if k <= MAX_SEARCH_HOPS {
        Some(reachable_hop_subsets(k, scheme)?)
    } else {
        None
    };
    let mut out = String::new();
    match args.format {
        Format::Csv => {
            out.push_str("record,hop,value\n");
            for (hop, c) in coeffs.iter().enumerate() {
                writeln!(out, "coefficient,{hop},{c}").unwrap();
            }
            for r in &paths.rows {
                writeln!(out, "identity,{},{}", r.hop, r.identity).unwrap();
                writeln!(out, "neighbor,{},{}", r.hop, r.neighbor).unwrap();
                writeln!(out, "paths,{},{}", r.hop, r.paths).unwrap();
            }
            for s in subsets.iter().flatten() {
                writeln!(out, "subset,,{}", subset_label(s)).unwrap();
            }
        }
        Format::Text => {
            writeln!(out, "kernel: {scheme}, K={k}").unwrap();
            let list: Vec<String> = coeffs.iter().map(u64::to_string).collect();
            writeln!(out, "hop coefficients (alpha = 1, identity weights): {}", list.join(",")).unwrap();
            if k <= 3 {
                writeln!(out, "expansion of h_K:").unwrap();
                for line in expand(k, scheme)?.to_string().lines() {
                    writeln!(out, "  {line}").unwrap();
                }
            }
            writeln!(out, "computation tree with separate node/neighbor weights:").unwrap();
            writeln!(out, "  hop  identity  F(A)  paths").unwrap();
            for r in &paths.rows {
                writeln!(out, "  {:>3}  {:>8}  {:>4}  {:>5}", r.hop, r.identity, r.neighbor, r.paths).unwrap();
            }
            writeln!(out, "  total paths: {}", paths.total_paths()).unwrap();
            match &subsets {
                Some(s) => {
                    writeln!(out, "achievable hop subsets ({}):", s.len()).unwrap();
                    for set in s {
                        let hops: Vec<String> = set.iter().map(|h| h.to_string()).collect();
                        writeln!(out, "  {{{}}}", hops.join(",")).unwrap();
                    }
                }
                None => writeln!(out, "achievable hop subsets: skipped, exhaustive search covers K <= {MAX_SEARCH_HOPS}").unwrap(),
            }
        }
    }
    print!("{out}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub sbm: SbmArgs,
    /// Generator seed, used unless --sbm-seed is given [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let base = SbmConfig {
        seed: args.seed.unwrap_or(0),
        ..SbmConfig::default()
    };
    let cfg = args.sbm.apply(base)?;
    let ds = generate_sbm(&cfg)?;
    save_dataset(&ds, &args.out)?;
    write_file(&args.out.join("sbm.json"), &to_json(&cfg)?)?;
    println!(
        "wrote {} ({} nodes, {} edges, label rule {})",
        args.out.display(),
        ds.num_nodes(),
        ds.graph.num_edges(),
        cfg.label_rule
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct HopsweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1)]
    pub min_hops: usize,
    #[arg(long, default_value_t = 4)]
    pub max_hops: usize,
    /// Directory for hopsweep.csv and config.json; CSV goes to stdout if absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepEcho<'a> {
    config: &'a RunConfig,
    min_hops: usize,
    max_hops: usize,
}

pub fn hopsweep(args: &HopsweepArgs) -> Result<()> {
    if args.min_hops == 0 || args.min_hops > args.max_hops {
        return Err(Error::Invalid(format!(
            "hop range {}..={} must be non-empty and start at 1 or more",
            args.min_hops, args.max_hops
        )));
    }
    let cfg = args.run.resolve()?;
    let ds = cfg.load_dataset()?;
    let mut csv = String::from("model,hops,mean_test_micro_f1");
    for i in 0..fgcn_core::pipeline::NUM_SPLITS {
        write!(csv, ",split_{i}").unwrap();
    }
    csv.push('\n');
    for k in args.min_hops..=args.max_hops {
        let model = cfg.model_for(&ds, k);
        let report = run_protocol(&model, &cfg.hyper(), &ds, cfg.seed)?;
        write!(csv, "{},{k},{}", cfg.model, report.mean_test_micro_f1).unwrap();
        for f in &report.per_split_test_micro_f1 {
            write!(csv, ",{f}").unwrap();
        }
        csv.push('\n');
    }
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("hopsweep.csv"), &csv)?;
            let echo = SweepEcho {
                config: &cfg,
                min_hops: args.min_hops,
                max_hops: args.max_hops,
            };
            write_file(&dir.join("config.json"), &to_json(&echo)?)?;
            println!("wrote {}", dir.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
