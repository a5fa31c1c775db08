//! Batch experiment runner for the spectral verification suites.
//!
//! Subcommands select a check group (`solve`, `norms`, `nodal`, `heat`) or
//! run everything (`verify`); `report` re-renders the summary from an
//! existing manifest. Configuration comes from a TOML file or flags; flags
//! override the file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steklov_core::config::{ExperimentConfig, PotentialSpec};
use steklov_core::verify::{self, CheckGroup, CheckStatus};

#[derive(Parser)]
#[command(name = "steklov", version, about = "spectral estimate verification workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Boundary dimension (1 = circle/disk, 2 = sphere/ball).
    #[arg(long, value_parser = clap::value_parser!(usize))]
    dim: Option<usize>,

    /// Basis truncation degree K.
    #[arg(long)]
    max_degree: Option<usize>,

    /// Potential family: zero | constant:C | cos-lowfreq | random-lipschitz:lip=L,deg=D
    #[arg(long)]
    potential: Option<String>,

    /// Comma-separated exponent list, e.g. "2,4,inf".
    #[arg(long, value_name = "LIST")]
    p: Option<String>,

    /// Comma-separated alpha list in (0,2), e.g. "0.5,1,1.5".
    #[arg(long, value_name = "LIST")]
    alpha: Option<String>,

    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for CSV/manifest/summary.
    #[arg(long)]
    out: Option<PathBuf>,

    /// TOML config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum checks: model exactness, zero counts, eigenvalue counting.
    Solve(ConfigArgs),
    /// Norm-growth checks: interior ratios, cluster/resolvent/multiplier bounds.
    Norms(ConfigArgs),
    /// Nodal-set checks: measures, Gauss-Green functionals, gradient bounds.
    Nodal(ConfigArgs),
    /// Heat-kernel checks: Picard routes, contraction, 3P, envelopes.
    Heat(ConfigArgs),
    /// Run the full registered suite for the configured dimension.
    Verify(ConfigArgs),
    /// Re-render the plain-text summary from an existing manifest.
    Report {
        /// Directory holding manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                tok.parse::<f64>().map_err(|e| format!("bad number '{tok}': {e}"))
            }
        })
        .collect()
}

fn build_config(args: &ConfigArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            ExperimentConfig::from_toml_str(&text).map_err(|e| e.to_string())?
        }
        None => {
            let dim = args.dim.unwrap_or(1);
            ExperimentConfig::default_for_dim(dim).map_err(|e| e.to_string())?
        }
    };
    if let Some(dim) = args.dim {
        if args.config.is_some() && dim != cfg.dim {
            return Err("--dim conflicts with the config file's dim".into());
        }
        cfg.dim = dim;
    }
    if let Some(k) = args.max_degree {
        cfg.max_degree = k;
    }
    if let Some(pot) = &args.potential {
        cfg.potential = pot.parse::<PotentialSpec>().map_err(|e| e.to_string())?;
    }
    if let Some(p) = &args.p {
        cfg.p_list = parse_f64_list(p)?;
    }
    if let Some(a) = &args.alpha {
        cfg.alpha_list = parse_f64_list(a)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run_checks(args: &ConfigArgs, group: Option<CheckGroup>) -> Result<bool, String> {
    let cfg = build_config(args)?;
    let report = match group {
        Some(g) => verify::run_group(&cfg, g).map_err(|e| e.to_string())?,
        None => verify::run_suite(&cfg).map_err(|e| e.to_string())?,
    };
    verify::write_report(&report, &cfg, &cfg.out_dir).map_err(|e| e.to_string())?;
    print!("{}", verify::summary_text(&report));
    println!("report written to {}", cfg.out_dir.display());
    Ok(report
        .results
        .iter()
        .all(|r| matches!(r.status, CheckStatus::Pass | CheckStatus::ReportOnly)))
}

fn render_report(out: &std::path::Path) -> Result<bool, String> {
    let manifest_path = out.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| format!("cannot read {}: {e}", manifest_path.display()))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let hash = manifest["config_hash"].as_str().unwrap_or("?");
    let dim = manifest["dim"].as_u64().unwrap_or(0);
    println!("verification summary (dim {dim}, config {hash})");
    let mut all_ok = true;
    for check in manifest["checks"].as_array().into_iter().flatten() {
        let id = check["id"].as_str().unwrap_or("?");
        let status = check["status"].as_str().unwrap_or("?");
        all_ok &= status == "pass" || status == "report_only";
        let vals: Vec<String> = check["measured"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|m| {
                format!(
                    "{}={}",
                    m["name"].as_str().unwrap_or("?"),
                    m["value"].as_str().unwrap_or("?")
                )
            })
            .collect();
        println!("{:<36} {:<12} {}", id, status.to_uppercase(), vals.join(" "));
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(args) => run_checks(args, Some(CheckGroup::Spectrum)),
        Command::Norms(args) => run_checks(args, Some(CheckGroup::Norms)),
        Command::Nodal(args) => run_checks(args, Some(CheckGroup::Nodal)),
        Command::Heat(args) => run_checks(args, Some(CheckGroup::Heat)),
        Command::Verify(args) => run_checks(args, None),
        Command::Report { out } => render_report(out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
