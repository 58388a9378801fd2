//! Command-line pipeline: mode computation, database generation, sequence
//! tracking, validation and benchmarking.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;

use anyhow::Result;

use cli::{Cli, Command, DbCommand};
use commands::SnakeArgs;
use config::PipelineConfig;

/// Runs one parsed command line. `Ok(false)` means a validation failure.
pub fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.overrides.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
    }
    let ov = &cli.overrides;
    match cli.command {
        Command::Modes => {
            let cfg = PipelineConfig::resolve(ov)?;
            let out = commands::cmd_modes(&cfg)?;
            let r = out.report;
            println!(
                "basis: {} modes, {} free DOFs, lambda in [{:.6e}, {:.6e}]",
                r.modes, r.free_dofs, r.lambda_min, r.lambda_max
            );
            println!(
                "orthogonality: mass {:.3e}, stiffness off-diagonal {:.3e}",
                r.mass_orthonormality, r.stiffness_offdiag
            );
            println!("wrote {}", cfg.basis_path().display());
        }
        Command::Db {
            command: DbCommand::Generate,
        } => {
            let cfg = PipelineConfig::resolve(ov)?;
            let db = commands::cmd_db_generate(&cfg)?;
            let r = &db.rejections;
            println!(
                "database: {} records from {} draws (rejected {} inverted, {} self-intersecting, {} backtracking, {} degenerate), max_disp {}",
                db.len(),
                db.drawn,
                r.inverted,
                r.self_intersection,
                r.backtrack,
                r.degenerate,
                db.config.max_disp
            );
            println!("wrote {}", cfg.database_path().display());
        }
        Command::Track { frames } => {
            let cfg = PipelineConfig::resolve(ov)?;
            let out = commands::cmd_track(&cfg, &frames)?;
            println!(
                "tracked {} frames, {} record changes, slowest frame {:.3} ms",
                out.results.len(),
                out.jumps,
                out.max_elapsed.as_secs_f64() * 1e3
            );
            println!("wrote {}", cfg.results_path().display());
        }
        Command::Validate { frames, results } => {
            let cfg = PipelineConfig::resolve(ov)?;
            let out = commands::cmd_validate(&cfg, &frames, results.as_deref())?;
            for f in &out.failures {
                eprintln!("FAIL {f}");
            }
            println!(
                "validated {} rows: {}",
                out.rows.len(),
                if out.passed() { "ok" } else { "FAILED" }
            );
            return Ok(out.passed());
        }
        Command::Bench { repeats, gen_samples } => {
            let cfg = PipelineConfig::resolve(ov)?;
            let out = commands::cmd_bench(&cfg, repeats, gen_samples)?;
            println!("database records: {}", out.records);
            print!("{}", commands::format_bench_table(&out.stages));
        }
        Command::Fixture { dir, small } => {
            let path = commands::cmd_fixture(&dir, small)?;
            println!("wrote {}", path.display());
        }
        Command::SynthFrames { frames, count } => {
            let cfg = PipelineConfig::resolve(ov)?;
            let ids = commands::cmd_synth_frames(&cfg, &frames, count)?;
            println!("wrote {} frames to {}", ids.len(), frames.display());
        }
        Command::Snake {
            image,
            init,
            output,
            snake_alpha,
            snake_beta,
            snake_gamma,
            iterations,
        } => {
            let args = SnakeArgs {
                alpha: snake_alpha,
                beta: snake_beta,
                gamma: snake_gamma,
                iterations,
            };
            let n = commands::cmd_snake(&image, &init, &output, &args)?;
            println!("snake converged after {n} iterations; wrote {}", output.display());
        }
    }
    Ok(true)
}
