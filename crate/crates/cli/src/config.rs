//! Pipeline settings merged from a `key = value` file and command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use modalpose_core::config::KeyValues;
use modalpose_core::contour::{AffineMap2, ScoringConfig};
use modalpose_core::fem::{DEFAULT_XI, DEFAULT_ZETA};
use modalpose_core::mesh::{load_mesh, TetMesh};
use modalpose_core::modal::{DEFAULT_MODES, DEFAULT_POSE_EPS};
use modalpose_core::shape_db::{DEFAULT_BACKTRACK_TOL, DEFAULT_SAMPLES, DEFAULT_SEED};
use modalpose_core::MaterialParams;

pub const CONFIG_ENV: &str = "MODALPOSE_CONFIG";

/// Every key accepted in a config file.
pub const KNOWN_KEYS: &[&str] = &[
    "mesh",
    "anchors",
    "constraints",
    "plane_tolerance",
    "youngs_modulus",
    "poisson_ratio",
    "density",
    "xi",
    "zeta",
    "modes",
    "samples",
    "max_disp",
    "seed",
    "backtrack_tol",
    "pose_eps",
    "warp",
    "resample_n",
    "alpha",
    "beta",
    "msd_guard",
    "penalty_guard",
    "image_scale_x",
    "image_scale_y",
    "image_offset_x",
    "image_offset_y",
    "out",
];

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (`key = value` lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Tetrahedral mesh in `tetmesh v1` format.
    #[arg(long, global = true)]
    pub mesh: Option<PathBuf>,
    /// Number of retained modes r.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    /// Number of accepted database shapes N.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Upper bound on each constraint displacement component (model units).
    #[arg(long = "max-disp", global = true)]
    pub max_disp: Option<f64>,
    /// Database sampling seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Weight of the MSD term.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Weight of the constraint penalty term.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Points per contour after equidistant resampling.
    #[arg(long = "resample-n", global = true)]
    pub resample_n: Option<usize>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mesh_path: PathBuf,
    pub anchors: Vec<usize>,
    pub constraints: Vec<usize>,
    /// `None` picks a tolerance from the mesh size.
    pub plane_tolerance: Option<f64>,
    pub material: MaterialParams,
    pub xi: f64,
    pub zeta: f64,
    pub modes: usize,
    pub samples: usize,
    /// `None` picks a fraction of the rest contour length.
    pub max_disp: Option<f64>,
    pub seed: u64,
    pub backtrack_tol: f64,
    pub pose_eps: f64,
    pub warp: bool,
    pub scoring: ScoringConfig,
    pub image_map: AffineMap2,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

fn pick<T: std::str::FromStr>(kv: &KeyValues, key: &str, flag: Option<T>, default: T) -> Result<T> {
    Ok(match flag {
        Some(v) => v,
        None => kv.get(key)?.unwrap_or(default),
    })
}

impl PipelineConfig {
    /// Resolves the config file (flag, then environment) and applies flag
    /// overrides. Relative paths inside the file are taken relative to it.
    pub fn resolve(ov: &Overrides) -> Result<Self> {
        let (kv, base) = match &ov.config {
            Some(path) => {
                let kv = KeyValues::load(path).with_context(|| format!("reading config {}", path.display()))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (kv, base)
            }
            None => (KeyValues::default(), PathBuf::new()),
        };
        Self::from_parts(&kv, &base, ov)
    }

    pub fn from_parts(kv: &KeyValues, base: &Path, ov: &Overrides) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            bail!("unknown config key `{k}` (known keys: {})", KNOWN_KEYS.join(", "));
        }
        let mesh_path = match (&ov.mesh, kv.get_str("mesh")) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base.join(p),
            (None, None) => bail!("no mesh given: pass --mesh or set `mesh` in the config file"),
        };
        let out = match (&ov.out, kv.get_str("out")) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base.join(p),
            (None, None) => PathBuf::from("out"),
        };
        let defaults = MaterialParams::default();
        let scoring_defaults = ScoringConfig::default();
        let cfg = PipelineConfig {
            mesh_path,
            anchors: kv.get_list("anchors")?.unwrap_or_default(),
            constraints: kv.get_list("constraints")?.unwrap_or_default(),
            plane_tolerance: kv.get("plane_tolerance")?,
            material: MaterialParams {
                youngs_modulus: pick(kv, "youngs_modulus", None, defaults.youngs_modulus)?,
                poisson_ratio: pick(kv, "poisson_ratio", None, defaults.poisson_ratio)?,
                density: pick(kv, "density", None, defaults.density)?,
            },
            xi: pick(kv, "xi", None, DEFAULT_XI)?,
            zeta: pick(kv, "zeta", None, DEFAULT_ZETA)?,
            modes: pick(kv, "modes", ov.modes, DEFAULT_MODES)?,
            samples: pick(kv, "samples", ov.samples, DEFAULT_SAMPLES)?,
            max_disp: match ov.max_disp {
                Some(v) => Some(v),
                None => kv.get("max_disp")?,
            },
            seed: pick(kv, "seed", ov.seed, DEFAULT_SEED)?,
            backtrack_tol: pick(kv, "backtrack_tol", None, DEFAULT_BACKTRACK_TOL)?,
            pose_eps: pick(kv, "pose_eps", None, DEFAULT_POSE_EPS)?,
            warp: pick(kv, "warp", None, false)?,
            scoring: ScoringConfig {
                n: pick(kv, "resample_n", ov.resample_n, scoring_defaults.n)?,
                alpha: pick(kv, "alpha", ov.alpha, scoring_defaults.alpha)?,
                beta: pick(kv, "beta", ov.beta, scoring_defaults.beta)?,
                msd_guard: pick(kv, "msd_guard", None, scoring_defaults.msd_guard)?,
                penalty_guard: pick(kv, "penalty_guard", None, scoring_defaults.penalty_guard)?,
            },
            image_map: AffineMap2 {
                scale: [
                    pick(kv, "image_scale_x", None, 1.0)?,
                    pick(kv, "image_scale_y", None, 1.0)?,
                ],
                offset: [
                    pick(kv, "image_offset_x", None, 0.0)?,
                    pick(kv, "image_offset_y", None, 0.0)?,
                ],
            },
            out,
            jobs: ov.jobs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.scoring.validate()?;
        if self.modes == 0 {
            bail!("--modes must be >= 1");
        }
        if self.samples == 0 {
            bail!("--samples must be >= 1");
        }
        if let Some(d) = self.max_disp {
            if !(d >= 0.0 && d.is_finite()) {
                bail!("--max-disp must be finite and >= 0, got {d}");
            }
        }
        if !(self.xi >= 0.0 && self.zeta >= 0.0) {
            bail!("damping coefficients must be >= 0");
        }
        if self.image_map.scale.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            bail!("image scale factors must be finite and nonzero");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be >= 1");
        }
        Ok(())
    }

    /// Loads the mesh and attaches the configured node sets.
    pub fn load_mesh(&self) -> Result<TetMesh> {
        if !self.mesh_path.exists() {
            bail!("mesh file {} does not exist", self.mesh_path.display());
        }
        if self.anchors.is_empty() || self.constraints.is_empty() {
            bail!("`anchors` and `constraints` must be set in the config file");
        }
        let mesh = load_mesh(&self.mesh_path)?;
        Ok(mesh.with_node_sets(&self.anchors, &self.constraints)?)
    }

    pub fn plane_tolerance_for(&self, mesh: &TetMesh) -> f64 {
        self.plane_tolerance.unwrap_or_else(|| mesh.default_plane_tolerance())
    }

    pub fn basis_path(&self) -> PathBuf {
        self.out.join("basis.bin")
    }

    pub fn database_path(&self) -> PathBuf {
        self.out.join("shapes.db")
    }

    pub fn results_path(&self) -> PathBuf {
        self.out.join("results.csv")
    }
}
