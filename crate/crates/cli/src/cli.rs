use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "modalpose",
    version,
    about = "Contour-driven posing of a modal-reduced tetrahedral model"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble the FEM system, solve for the modal basis, write basis.bin and modes_report.txt.
    Modes,
    /// Shape database commands.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Match every frame contour against the database; write results.csv and per-frame OBJs.
    Track {
        /// Directory of frame_NNNNNN.csv contours in image coordinates.
        #[arg(long)]
        frames: PathBuf,
    },
    /// Recompute stored results and write validate.csv and overlay.csv.
    Validate {
        #[arg(long)]
        frames: PathBuf,
        /// Results file; defaults to results.csv in the output directory.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Time eigensolve, database generation and per-frame scoring.
    Bench {
        /// Timed repetitions per stage.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Accepted samples drawn for the generation timing.
        #[arg(long, default_value_t = 100)]
        gen_samples: usize,
    },
    /// Write the bundled tongue fixture mesh and config.
    Fixture {
        /// Target directory.
        #[arg(long)]
        dir: PathBuf,
        /// Coarse variant with few nodes.
        #[arg(long)]
        small: bool,
    },
    /// Write frame contours copied from database records, for closed-loop checks.
    SynthFrames {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Refine a contour on a PGM image with a greedy snake.
    Snake {
        #[arg(long)]
        image: PathBuf,
        /// Initial contour CSV in pixel coordinates.
        #[arg(long)]
        init: PathBuf,
        /// Output contour CSV.
        #[arg(long)]
        output: PathBuf,
        /// Continuity weight.
        #[arg(long)]
        snake_alpha: Option<f64>,
        /// Curvature weight.
        #[arg(long)]
        snake_beta: Option<f64>,
        /// Edge attraction weight.
        #[arg(long)]
        snake_gamma: Option<f64>,
        /// Maximum number of sweeps.
        #[arg(long)]
        iterations: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Draw random constraint displacements until N plausible shapes are stored in shapes.db.
    Generate,
}
