//! Pipeline stages behind each subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use modalpose_core::contour::{
    contour_csv_string, frame_file_name, list_frames, read_contour_csv, write_contour_csv, Contour2D,
};
use modalpose_core::contour::{snake_extract, GrayImage, SnakeParams};
use modalpose_core::fixture::FixtureParams;
use modalpose_core::mesh::{export_surface_frame, midsagittal_path, MidsagittalPath, TetMesh};
use modalpose_core::modal::{reconstruct_q, BasisReport, ModalBasis};
use modalpose_core::retrieval::{jump_count, read_results_csv, track_sequence, validate_overlay, write_results_csv};
use modalpose_core::retrieval::{MatchResult, Matcher};
use modalpose_core::shape_db::{generate_database, project_contour, GenConfig, ShapeDatabase};
use modalpose_core::{assemble, solve_modes, Vec3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;

/// Per-frame association time budget.
pub const FRAME_TIME_BOUND: Duration = Duration::from_millis(1200);

fn create_out(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating output directory {}", cfg.out.display()))
}

fn load_basis(cfg: &PipelineConfig, mesh: &TetMesh) -> Result<ModalBasis> {
    let path = cfg.basis_path();
    ensure!(
        path.exists(),
        "{} not found; run `modalpose modes` first",
        path.display()
    );
    let basis = ModalBasis::load(&path)?;
    ensure!(
        basis.node_count == mesh.node_count(),
        "{} was computed for {} nodes but the mesh has {}; rerun `modalpose modes`",
        path.display(),
        basis.node_count,
        mesh.node_count()
    );
    Ok(basis)
}

fn load_database(cfg: &PipelineConfig, basis: &ModalBasis) -> Result<ShapeDatabase> {
    let path = cfg.database_path();
    ensure!(
        path.exists(),
        "{} not found; run `modalpose db generate` first",
        path.display()
    );
    Ok(ShapeDatabase::load_verified(&path, basis)?)
}

/// Mesh, basis and midsagittal path, loaded and cross-checked.
pub struct Model {
    pub mesh: TetMesh,
    pub basis: ModalBasis,
    pub path: MidsagittalPath,
}

impl Model {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let mesh = cfg.load_mesh()?;
        let basis = load_basis(cfg, &mesh)?;
        let path = midsagittal_path(&mesh, cfg.plane_tolerance_for(&mesh))?;
        Ok(Model { mesh, basis, path })
    }

    pub fn rest_contour(&self) -> Result<Contour2D> {
        Ok(project_contour(
            &self.mesh,
            &self.path,
            &vec![Vec3::zeros(); self.mesh.node_count()],
        )?)
    }
}

pub fn format_report(report: &BasisReport, basis: &ModalBasis) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "modes {}", report.modes);
    let _ = writeln!(s, "free_dofs {}", report.free_dofs);
    let _ = writeln!(s, "fingerprint {}", basis.fingerprint());
    let _ = writeln!(s, "mass_orthonormality {:e}", report.mass_orthonormality);
    let _ = writeln!(s, "stiffness_offdiag {:e}", report.stiffness_offdiag);
    let _ = writeln!(s, "stiffness_diag {:e}", report.stiffness_diag);
    let _ = writeln!(s, "residual {:e}", report.residual);
    let _ = writeln!(s, "lambda_min {}", report.lambda_min);
    let _ = writeln!(s, "lambda_max {}", report.lambda_max);
    let _ = writeln!(s, "mode,lambda,frequency_hz");
    for (i, l) in basis.lambda.iter().enumerate() {
        let _ = writeln!(s, "{i},{l},{}", l.sqrt() / (2.0 * std::f64::consts::PI));
    }
    s
}

pub struct ModesOutcome {
    pub basis: ModalBasis,
    pub report: BasisReport,
}

pub fn cmd_modes(cfg: &PipelineConfig) -> Result<ModesOutcome> {
    let mesh = cfg.load_mesh()?;
    create_out(cfg)?;
    let system = assemble(&mesh, &cfg.material, cfg.xi, cfg.zeta)?;
    let start = Instant::now();
    let basis = solve_modes(&system, cfg.modes)?.with_curl_basis(&mesh)?;
    log::info!(
        "solved {} modes over {} free DOFs in {:.3} s",
        basis.modes(),
        basis.free_dof_count(),
        start.elapsed().as_secs_f64()
    );
    let report = basis.report(&system);
    basis.save(&cfg.basis_path())?;
    let report_path = cfg.out.join("modes_report.txt");
    std::fs::write(&report_path, format_report(&report, &basis))
        .with_context(|| format!("writing {}", report_path.display()))?;
    Ok(ModesOutcome { basis, report })
}

pub fn gen_config(cfg: &PipelineConfig, rest: &Contour2D) -> GenConfig {
    let defaults = GenConfig::for_rest_contour(rest);
    GenConfig {
        samples: cfg.samples,
        max_disp: cfg.max_disp.unwrap_or(defaults.max_disp),
        seed: cfg.seed,
        backtrack_tol: cfg.backtrack_tol,
        pose_eps: cfg.pose_eps,
        warp: cfg.warp,
    }
}

pub fn cmd_db_generate(cfg: &PipelineConfig) -> Result<ShapeDatabase> {
    let model = Model::load(cfg)?;
    ensure!(
        model.basis.modes() == cfg.modes,
        "basis has {} modes but {} were requested; rerun `modalpose modes`",
        model.basis.modes(),
        cfg.modes
    );
    let gen = gen_config(cfg, &model.rest_contour()?);
    let db = generate_database(&model.mesh, &model.basis, &model.path, &gen)?;
    create_out(cfg)?;
    db.save(&cfg.database_path())?;
    Ok(db)
}

/// Frame contours mapped from image to model coordinates, in frame order.
pub fn load_frames(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<(usize, Contour2D)>> {
    let files = list_frames(dir)?;
    ensure!(!files.is_empty(), "no frame_NNNNNN.csv files in {}", dir.display());
    files
        .into_iter()
        .map(|(i, path)| {
            let c = read_contour_csv(&path).with_context(|| format!("frame {i}"))?;
            let c = c
                .map(|p| cfg.image_map.apply(p))
                .with_context(|| format!("frame {i}"))?;
            Ok((i, c))
        })
        .collect()
}

pub struct TrackOutcome {
    pub results: Vec<MatchResult>,
    pub jumps: usize,
    pub max_elapsed: Duration,
}

pub fn cmd_track(cfg: &PipelineConfig, frames_dir: &Path) -> Result<TrackOutcome> {
    let model = Model::load(cfg)?;
    let db = load_database(cfg, &model.basis)?;
    let frames = load_frames(cfg, frames_dir)?;
    let matcher = Matcher::new(&db, cfg.scoring)?;
    let results = track_sequence(&matcher, &frames)?;

    let obj_dir = cfg.out.join("frames");
    std::fs::create_dir_all(&obj_dir).with_context(|| format!("creating {}", obj_dir.display()))?;
    for r in &results {
        let rec = &db.records[r.record_id];
        let u = reconstruct_q(&model.basis, &rec.q, db.config.warp)?;
        export_surface_frame(
            &model.mesh,
            &u,
            &obj_dir.join(format!("frame_{:06}.obj", r.frame_index)),
        )?;
    }
    write_results_csv(&results, &cfg.results_path())?;

    let max_elapsed = results.iter().map(|r| r.elapsed).max().unwrap_or_default();
    if max_elapsed > FRAME_TIME_BOUND {
        log::warn!("slowest frame took {:.1} ms", max_elapsed.as_secs_f64() * 1e3);
    }
    Ok(TrackOutcome {
        jumps: jump_count(&results),
        results,
        max_elapsed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateRow {
    pub frame_index: usize,
    pub record_id: usize,
    pub stored_score: f64,
    pub recomputed_score: f64,
    pub msd_value: f64,
    pub best_record_id: usize,
}

impl ValidateRow {
    pub fn score_ok(&self) -> bool {
        self.stored_score == self.recomputed_score
    }

    pub fn argmax_ok(&self) -> bool {
        self.best_record_id == self.record_id
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidateOutcome {
    pub rows: Vec<ValidateRow>,
    pub failures: Vec<String>,
}

impl ValidateOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn cmd_validate(cfg: &PipelineConfig, frames_dir: &Path, results_path: Option<&Path>) -> Result<ValidateOutcome> {
    let model = Model::load(cfg)?;
    let db = load_database(cfg, &model.basis)?;
    let frames = load_frames(cfg, frames_dir)?;
    let results_path = results_path.map(PathBuf::from).unwrap_or_else(|| cfg.results_path());
    let results = read_results_csv(&results_path)?;
    let matcher = Matcher::new(&db, cfg.scoring)?;

    let mut out = ValidateOutcome::default();
    if results.len() != frames.len() {
        out.failures
            .push(format!("{} result rows for {} frames", results.len(), frames.len()));
    }
    let mut overlay = String::from("frame,record_id,curve,point,x,y\n");
    for r in &results {
        let Some((_, target)) = frames.iter().find(|(i, _)| *i == r.frame_index) else {
            out.failures
                .push(format!("result for frame {} has no frame file", r.frame_index));
            continue;
        };
        if r.record_id >= db.len() {
            out.failures.push(format!(
                "frame {}: record {} not in database",
                r.frame_index, r.record_id
            ));
            continue;
        }
        let entry = validate_overlay(&matcher, r, target)?;
        let penalty =
            modalpose_core::contour::penalty(&db.records[r.record_id].constraint_points, cfg.scoring.penalty_guard)?;
        let row = ValidateRow {
            frame_index: r.frame_index,
            record_id: r.record_id,
            stored_score: r.score_l,
            recomputed_score: cfg.scoring.combine(entry.msd_value, penalty.value),
            msd_value: entry.msd_value,
            best_record_id: matcher.best_match(r.frame_index, target)?.record_id,
        };
        if !row.score_ok() {
            out.failures.push(format!(
                "frame {}: stored score {} but recomputed {}",
                row.frame_index, row.stored_score, row.recomputed_score
            ));
        }
        if !row.argmax_ok() {
            out.failures.push(format!(
                "frame {}: stored record {} but best is {}",
                row.frame_index, row.record_id, row.best_record_id
            ));
        }
        for (curve, c) in [("target", &entry.target), ("selected", &entry.selected)] {
            for (k, p) in c.points().iter().enumerate() {
                let _ = writeln!(overlay, "{},{},{curve},{k},{},{}", r.frame_index, r.record_id, p.x, p.y);
            }
        }
        out.rows.push(row);
    }

    let mut table = String::from("frame,record_id,stored_score,recomputed_score,msd,score_ok,argmax_ok\n");
    for row in &out.rows {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            row.frame_index,
            row.record_id,
            row.stored_score,
            row.recomputed_score,
            row.msd_value,
            row.score_ok(),
            row.argmax_ok()
        );
    }
    create_out(cfg)?;
    for (name, text) in [("validate.csv", &table), ("overlay.csv", &overlay)] {
        let path = cfg.out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub runs: usize,
    pub min: Duration,
    pub median: Duration,
    pub max: Duration,
}

impl StageTiming {
    fn from_samples(stage: &'static str, mut samples: Vec<Duration>) -> Self {
        samples.sort();
        StageTiming {
            stage,
            runs: samples.len(),
            min: samples[0],
            median: samples[samples.len() / 2],
            max: samples[samples.len() - 1],
        }
    }
}

pub fn format_bench_table(rows: &[StageTiming]) -> String {
    let mut s = format!(
        "{:<24} {:>6} {:>12} {:>12} {:>12}\n",
        "stage", "runs", "min_ms", "median_ms", "max_ms"
    );
    for r in rows {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let _ = writeln!(
            s,
            "{:<24} {:>6} {:>12.4} {:>12.4} {:>12.4}",
            r.stage,
            r.runs,
            ms(r.min),
            ms(r.median),
            ms(r.max)
        );
    }
    s
}

pub struct BenchOutcome {
    pub stages: Vec<StageTiming>,
    pub records: usize,
}

impl BenchOutcome {
    pub fn stage(&self, name: &str) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

pub fn cmd_bench(cfg: &PipelineConfig, repeats: usize, gen_samples: usize) -> Result<BenchOutcome> {
    ensure!(repeats >= 1, "--repeats must be >= 1");
    let model = Model::load(cfg)?;
    let db = load_database(cfg, &model.basis)?;
    ensure!(!db.is_empty(), "database {} is empty", cfg.database_path().display());
    let matcher = Matcher::new(&db, cfg.scoring)?;

    let targets: Vec<&Contour2D> = db
        .records
        .iter()
        .step_by((db.len() / 20).max(1))
        .map(|r| &r.contour)
        .collect();
    let mut scoring = Vec::new();
    for _ in 0..repeats {
        for (k, t) in targets.iter().enumerate() {
            scoring.push(matcher.best_match(k, t)?.elapsed);
        }
    }

    let mut eigen = Vec::new();
    for _ in 0..repeats {
        let start = Instant::now();
        let system = assemble(&model.mesh, &cfg.material, cfg.xi, cfg.zeta)?;
        let _ = solve_modes(&system, model.basis.modes())?;
        eigen.push(start.elapsed());
    }

    let mut gen = Vec::new();
    if gen_samples > 0 {
        let gcfg = GenConfig {
            samples: gen_samples,
            ..gen_config(cfg, &model.rest_contour()?)
        };
        for _ in 0..repeats.min(3) {
            let start = Instant::now();
            let g = generate_database(&model.mesh, &model.basis, &model.path, &gcfg)?;
            gen.push(start.elapsed() / g.len() as u32);
        }
    }

    let mut stages = vec![
        StageTiming::from_samples("scoring_per_frame", scoring),
        StageTiming::from_samples("eigensolve", eigen),
    ];
    if !gen.is_empty() {
        stages.push(StageTiming::from_samples("db_gen_per_sample", gen));
    }
    let mut table = format!("# database records: {}\n", db.len());
    table.push_str(&format_bench_table(&stages));
    create_out(cfg)?;
    let path = cfg.out.join("bench.txt");
    std::fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    Ok(BenchOutcome {
        stages,
        records: db.len(),
    })
}

pub fn cmd_fixture(dir: &Path, small: bool) -> Result<PathBuf> {
    let params = if small {
        FixtureParams::small()
    } else {
        FixtureParams::default()
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mesh = params.build()?;
    mesh.save(&dir.join("tongue.tetmesh"))?;
    let cfg_path = dir.join("tongue.cfg");
    std::fs::write(&cfg_path, params.config_text("tongue.tetmesh"))
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    Ok(cfg_path)
}

/// Copies `count` database contours into frame files (image coordinates) and
/// lists the source record of each frame in `sources.csv`.
pub fn cmd_synth_frames(cfg: &PipelineConfig, dir: &Path, count: usize) -> Result<Vec<usize>> {
    ensure!(count >= 1, "--count must be >= 1");
    let model = Model::load(cfg)?;
    let db = load_database(cfg, &model.basis)?;
    ensure!(!db.is_empty(), "database is empty");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sources: Vec<usize> = if count <= db.len() {
        sample(&mut rng, db.len(), count).into_vec()
    } else {
        (0..count).map(|k| k % db.len()).collect()
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut listing = String::from("frame,record_id\n");
    for (k, &id) in sources.iter().enumerate() {
        let c = db.records[id].contour.map(|p| cfg.image_map.inverse_apply(p))?;
        write_contour_csv(&c, &dir.join(frame_file_name(k)))?;
        let _ = writeln!(listing, "{k},{id}");
    }
    std::fs::write(dir.join("sources.csv"), listing)?;
    Ok(sources)
}

pub struct SnakeArgs {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub iterations: Option<usize>,
}

pub fn cmd_snake(image: &Path, init: &Path, output: &Path, args: &SnakeArgs) -> Result<usize> {
    let img = GrayImage::load_pgm(image)?;
    let init = read_contour_csv(init)?;
    let d = SnakeParams::default();
    let params = SnakeParams {
        alpha: args.alpha.unwrap_or(d.alpha),
        beta: args.beta.unwrap_or(d.beta),
        gamma: args.gamma.unwrap_or(d.gamma),
        max_iterations: args.iterations.unwrap_or(d.max_iterations),
        ..d
    };
    let res = snake_extract(&img, &init, &params)?;
    std::fs::write(output, contour_csv_string(&res.contour))
        .with_context(|| format!("writing {}", output.display()))?;
    Ok(res.iterations)
}
