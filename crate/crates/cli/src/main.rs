use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use gaussot_cli::commands;
use gaussot_cli::report::canonical_json;
use gaussot_cli::scenario::{ConfigError, Scenario};

#[derive(Parser)]
#[command(
    name = "gaussot",
    version,
    about = "Transport maps between Gaussian-weighted measures, with verified estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario's primary transport problem and summarize the map
    Solve {
        /// Scenario TOML file
        #[arg(long)]
        scenario: PathBuf,
        /// Write the solved map as canonical JSON
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the points-per-axis of the quadrature rule
        #[arg(long)]
        quad_order: Option<usize>,
    },
    /// Run a scenario's verifications and report the verdicts
    Verify {
        /// Scenario TOML file
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated verification kinds to run (default: all)
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// Write the full report as canonical JSON
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the points-per-axis of the quadrature rule
        #[arg(long)]
        quad_order: Option<usize>,
    },
    /// Tabulate the pointwise map equation residual on a probe grid
    Residual {
        /// Scenario TOML file
        #[arg(long)]
        scenario: PathBuf,
        /// Probe points per axis
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Half-width of the probe box
        #[arg(long, default_value_t = 3.0)]
        range: f64,
        /// Write the table as CSV
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the points-per-axis of the quadrature rule
        #[arg(long)]
        quad_order: Option<usize>,
    },
    /// Build the tower of squared costs for a separable quadratic target
    Tower {
        /// Comma-separated per-axis coefficients of the target
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Points of the per-axis quadrature rule
        #[arg(long, default_value_t = 60)]
        quad_order: usize,
        /// Write the levels as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scale a one-dimensional scenario across product dimensions
    Sweep {
        /// Scenario TOML file (must have dim 1)
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated product dimensions to evaluate
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        /// Write the rows as CSV
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the points-per-axis of the quadrature rule
        #[arg(long)]
        quad_order: Option<usize>,
    },
    /// Check the matrix bound and identity on seeded random batteries
    MatrixLemmas {
        /// Comma-separated matrix dimensions
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        dims: Vec<usize>,
        /// Sampled pairs per dimension and battery
        #[arg(long, default_value_t = 125)]
        per_dim: usize,
        /// Seed for the pair sampler
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Nodes of the line-integral rule in the identity check
        #[arg(long, default_value_t = 64)]
        t_order: usize,
        /// Write both battery summaries as canonical JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge verification reports into one document sorted by scenario
    ReportMerge {
        /// Output path for the merged document
        #[arg(long)]
        out: PathBuf,
        /// Report files to merge
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, ConfigError> {
    match command {
        Command::Solve {
            scenario,
            out,
            seed,
            quad_order,
        } => {
            let scn = Scenario::load(&scenario, seed, quad_order)?;
            let map = scn.solve_primary()?;
            let summary = commands::map_report("primary", &scn.file().solve.backend, &map, scn.rule())?;
            println!(
                "{}: solved {} -> {} with the {} backend in dim {}",
                scn.name(),
                scn.file().solve.source,
                scn.file().solve.target,
                summary.backend,
                summary.dim
            );
            println!("  squared cost        {:.12e}", summary.w2_sq);
            println!(
                "  pushforward check   {:.3e} worst over {} observables",
                summary.pushforward.max_abs_discrepancy,
                summary.pushforward.entries.len()
            );
            if let Some(path) = out {
                let text = canonical_json(&map)
                    .map_err(|err| ConfigError(format!("serializing map: {err}")))?;
                commands::write_text(&path, &text)?;
                println!("  map written to      {}", commands::resolve_out(&path).display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            scenario,
            only,
            out,
            seed,
            quad_order,
        } => {
            let scn = Scenario::load(&scenario, seed, quad_order)?;
            let report = commands::run_scenario(&scn, only.as_deref())?;
            for map in &report.maps {
                println!(
                    "{}: {} map ({}), squared cost {:.9e}, pushforward {:.3e}",
                    scn.name(),
                    map.role,
                    map.backend,
                    map.w2_sq,
                    map.pushforward.max_abs_discrepancy
                );
            }
            for v in &report.verifications {
                println!(
                    "{}: {:<24} {:<15} lhs {:+.9e}  rhs {:+.9e}  slack {:+.3e}  tol {:.1e}",
                    scn.name(),
                    v.name,
                    verdict_label(v),
                    v.lhs,
                    v.rhs,
                    v.slack,
                    v.tolerance
                );
            }
            let held = report.verifications.iter().filter(|v| v.holds()).count();
            println!(
                "{}: {held}/{} verifications hold",
                scn.name(),
                report.verifications.len()
            );
            if let Some(path) = out {
                let text = canonical_json(&report)
                    .map_err(|err| ConfigError(format!("serializing report: {err}")))?;
                commands::write_text(&path, &text)?;
            }
            if report.all_hold() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Residual {
            scenario,
            grid,
            range,
            out,
            seed,
            quad_order,
        } => {
            let scn = Scenario::load(&scenario, seed, quad_order)?;
            let (rows, sup) = commands::residual_table(&scn, grid, range)?;
            println!(
                "{}: residual sup {:.6e} over {} probes in [-{range}, {range}]^{}",
                scn.name(),
                sup,
                rows.len(),
                scn.dim()
            );
            if let Some(path) = out {
                commands::write_text(&path, &commands::residual_csv(&scn, &rows))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tower { lambdas, quad_order, out } => {
            let rows = commands::tower_rows(&lambdas, quad_order)?;
            for row in &rows {
                println!(
                    "level {:>2}: squared cost {:.12e}  tail mass {:.6e}  mass error {:.3e}",
                    row.n, row.w2_sq, row.alpha_n, row.mass_error
                );
            }
            if let Some(path) = out {
                commands::write_text(&path, &commands::tower_csv(&rows))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            scenario,
            dims,
            out,
            seed,
            quad_order,
        } => {
            let scn = Scenario::load(&scenario, seed, quad_order)?;
            let rows = commands::sweep_rows(&scn, &dims)?;
            for row in &rows {
                println!(
                    "dim {:>2}: lhs {:+.9e}  rhs {:+.9e}  slack {:+.9e}  slack/dim {:+.12e}",
                    row.dim, row.lhs, row.rhs, row.slack, row.slack_per_dim
                );
            }
            if let Some(path) = out {
                commands::write_text(&path, &commands::sweep_csv(&rows))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::MatrixLemmas {
            dims,
            per_dim,
            seed,
            t_order,
            out,
        } => {
            let result = commands::matrix_batteries(&dims, per_dim, seed, t_order)?;
            println!(
                "bound:    {} pairs checked, {} violations, worst margin {:+.3e}",
                result.bound.checked, result.bound.violations, result.bound.worst_margin
            );
            println!(
                "identity: {} pairs checked, {} failures, worst residual {:.3e}",
                result.identity.checked, result.identity.failures, result.identity.worst_residual
            );
            if let Some(path) = out {
                let text = canonical_json(&result)
                    .map_err(|err| ConfigError(format!("serializing batteries: {err}")))?;
                commands::write_text(&path, &text)?;
            }
            if result.bound.violations == 0 && result.identity.failures == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::ReportMerge { out, inputs } => {
            let mut parsed = Vec::with_capacity(inputs.len());
            for path in inputs {
                let text = std::fs::read_to_string(&path)
                    .map_err(|err| ConfigError(format!("cannot read {}: {err}", path.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|err| ConfigError(format!("cannot parse {}: {err}", path.display())))?;
                parsed.push((path, value));
            }
            let merged = commands::merge_reports(&parsed)?;
            let count = merged["reports"].as_array().map_or(0, Vec::len);
            let text = canonical_json(&merged)
                .map_err(|err| ConfigError(format!("serializing merged document: {err}")))?;
            commands::write_text(&out, &text)?;
            println!(
                "merged {count} reports into {}",
                commands::resolve_out(&out).display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn verdict_label(report: &gaussot::inequalities::InequalityReport) -> &'static str {
    use gaussot::inequalities::Verdict;
    match report.verdict {
        Verdict::Holds => "holds",
        Verdict::Violated => "VIOLATED",
        Verdict::IdentityOk => "identity-ok",
        Verdict::IdentityBroken => "IDENTITY BROKEN",
    }
}
