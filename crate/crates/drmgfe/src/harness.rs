//! Coupled-path Monte Carlo strong-error estimation and EOC computation.
//!
//! For each sample one [`PathContext`] supplies the Brownian randomness to
//! the reference level and to every ladder level, so per-sample differences
//! measure discretization error rather than noise. A single sweep over the
//! path cells generates each cell's mode draws once and feeds all levels'
//! step accumulators; because per-cell contributions are grid-quantized
//! (see [`crate::noise`]), the accumulated increments are bit-identical to
//! the ones [`crate::scheme::integrate`] would read on its own.
//!
//! Samples are independent work units on a rayon pool; squared errors are
//! reduced in sample order so reports are bit-reproducible regardless of
//! the worker count.

use crate::config;
use crate::fem::{assemble_space, build_mesh, restrict_to_coarse, Dim, FemSpace, StateVector};
use crate::noise::{build_covariance_mesh_banded, CovarianceModel, ModeIncrements, ModeSpec, PathContext};
use crate::problem::{benchmark_problem, ProblemSpec};
use crate::scheme::{LevelDriver, SchemeError, SchemeKind, TimeLevel};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("sample {sample} failed at {context}: {source}")]
    SampleFailed {
        sample: u64,
        context: String,
        #[source]
        source: SchemeError,
    },
    #[error("strong error needs matching nonempty sample lists ({refs} vs {coarse})")]
    SampleCountMismatch { refs: usize, coarse: usize },
    #[error("EOC needs at least two strictly positive finite errors")]
    BadErrorSequence,
    #[error(transparent)]
    Fem(#[from] crate::fem::FemError),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error("report parse error at line {line}: {message}")]
    BadReport { line: usize, message: String },
}

/// Which resolution the ladder refines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyAxis {
    Time,
    Space,
}

/// Axis-specific grid configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum AxisConfig {
    /// Fixed mesh, refining time steps against a fine reference step.
    Time {
        mesh_cells: usize,
        dt_ladder: Vec<f64>,
        dt_ref: f64,
    },
    /// Fixed time step, refining meshes against a fine reference mesh.
    Space {
        cells_ladder: Vec<usize>,
        cells_ref: usize,
        dt: f64,
    },
}

/// Full description of one convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub dim: Dim,
    pub scheme: SchemeKind,
    pub t_final: f64,
    pub delta: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub modes_per_axis: usize,
    pub axis: AxisConfig,
}

impl StudyConfig {
    pub fn axis_kind(&self) -> StudyAxis {
        match self.axis {
            AxisConfig::Time { .. } => StudyAxis::Time,
            AxisConfig::Space { .. } => StudyAxis::Space,
        }
    }
}

/// One ladder row of a report.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelResult {
    /// dt for temporal studies, h for spatial ones.
    pub resolution: f64,
    pub u_error: f64,
    /// log2(e_prev / e_this); absent on the first row.
    pub eoc: Option<f64>,
}

/// Study outcome: per-level errors and EOC values plus the resolved
/// configuration that produced them.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub levels: Vec<LevelResult>,
    /// Relative standard error of each u_error estimate.
    pub rel_std_error: Vec<f64>,
    pub warnings: Vec<String>,
    /// The resolved config in ini form; feeding it back reproduces the
    /// report bit-exactly (wall time aside).
    pub config_echo: String,
    pub wall_seconds: f64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

fn steps_from_dt(t_final: f64, dt: f64, what: &str) -> Result<u64, HarnessError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(HarnessError::InvalidConfig(format!(
            "{what} = {dt} must be positive"
        )));
    }
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(HarnessError::InvalidConfig(format!(
            "{what} = {dt} does not divide t_final = {t_final}"
        )));
    }
    Ok(steps as u64)
}

const MAX_PATH_CELLS: u64 = 50_000_000;

struct LevelPlan {
    space: Arc<FemSpace>,
    cov: Arc<CovarianceModel>,
    level: TimeLevel,
}

struct StudyPlan {
    axis: StudyAxis,
    problem: ProblemSpec,
    path_cells: u64,
    mode_count: usize,
    /// Reference level first, ladder levels after, coarsest first.
    levels: Vec<LevelPlan>,
    /// Ladder resolutions (dt or h), aligned with `levels[1..]`.
    resolutions: Vec<f64>,
}

fn mode_spec(dim: Dim, modes_per_axis: usize) -> ModeSpec {
    match dim {
        Dim::One => ModeSpec::InverseSquare {
            modes: modes_per_axis,
        },
        Dim::Two => ModeSpec::GaussianDecay { modes_per_axis },
    }
}

impl StudyPlan {
    fn build(config: &StudyConfig) -> Result<StudyPlan, HarnessError> {
        if config.samples == 0 {
            return Err(HarnessError::InvalidConfig("samples must be positive".into()));
        }
        if !(config.t_final.is_finite() && config.t_final > 0.0) {
            return Err(HarnessError::InvalidConfig("t_final must be positive".into()));
        }
        if config.delta < 0.0 {
            return Err(HarnessError::InvalidConfig("delta must be nonnegative".into()));
        }
        if config.modes_per_axis == 0 {
            return Err(HarnessError::InvalidConfig(
                "modes_per_axis must be positive".into(),
            ));
        }
        let problem = benchmark_problem(config.delta);
        match &config.axis {
            AxisConfig::Time {
                mesh_cells,
                dt_ladder,
                dt_ref,
            } => {
                if dt_ladder.is_empty() {
                    return Err(HarnessError::InvalidConfig("dt_ladder is empty".into()));
                }
                for pair in dt_ladder.windows(2) {
                    if !(pair[0] > pair[1]) || (pair[0] / pair[1] - 2.0).abs() > 1e-9 {
                        return Err(HarnessError::InvalidConfig(format!(
                            "dt_ladder must halve between entries, got {} -> {}",
                            pair[0], pair[1]
                        )));
                    }
                }
                if *dt_ref >= dt_ladder[dt_ladder.len() - 1] {
                    return Err(HarnessError::InvalidConfig(format!(
                        "dt_ref = {dt_ref} must be finer than the finest ladder step"
                    )));
                }
                let ref_steps = steps_from_dt(config.t_final, *dt_ref, "dt_ref")?;
                let mut ladder_steps = Vec::with_capacity(dt_ladder.len());
                let mut path_cells = ref_steps;
                for dt in dt_ladder {
                    let steps = steps_from_dt(config.t_final, *dt, "dt_ladder entry")?;
                    path_cells = lcm(path_cells, steps);
                    ladder_steps.push(steps);
                }
                if path_cells > MAX_PATH_CELLS {
                    return Err(HarnessError::InvalidConfig(format!(
                        "path grid needs {path_cells} cells, above the cap {MAX_PATH_CELLS}"
                    )));
                }
                let space = Arc::new(assemble_space(build_mesh(config.dim, *mesh_cells)?));
                let cov = Arc::new(build_covariance_mesh_banded(
                    mode_spec(config.dim, config.modes_per_axis),
                    &space,
                )?);
                let mut levels = vec![LevelPlan {
                    space: Arc::clone(&space),
                    cov: Arc::clone(&cov),
                    level: TimeLevel {
                        id: 0,
                        steps: ref_steps,
                        cells_per_step: path_cells / ref_steps,
                    },
                }];
                for (i, steps) in ladder_steps.iter().enumerate() {
                    levels.push(LevelPlan {
                        space: Arc::clone(&space),
                        cov: Arc::clone(&cov),
                        level: TimeLevel {
                            id: (i + 1) as u32,
                            steps: *steps,
                            cells_per_step: path_cells / steps,
                        },
                    });
                }
                Ok(StudyPlan {
                    axis: StudyAxis::Time,
                    problem,
                    path_cells,
                    mode_count: cov.mode_count(),
                    levels,
                    resolutions: dt_ladder.clone(),
                })
            }
            AxisConfig::Space {
                cells_ladder,
                cells_ref,
                dt,
            } => {
                if cells_ladder.is_empty() {
                    return Err(HarnessError::InvalidConfig("cells_ladder is empty".into()));
                }
                for pair in cells_ladder.windows(2) {
                    if pair[1] != 2 * pair[0] {
                        return Err(HarnessError::InvalidConfig(format!(
                            "cells_ladder must double between entries, got {} -> {}",
                            pair[0], pair[1]
                        )));
                    }
                }
                let finest = *cells_ladder.last().unwrap();
                if *cells_ref <= finest
                    || cells_ref % finest != 0
                    || !(cells_ref / finest).is_power_of_two()
                {
                    return Err(HarnessError::InvalidConfig(format!(
                        "cells_ref = {cells_ref} must be a power-of-two refinement of the \
                         finest ladder mesh ({finest})"
                    )));
                }
                for c in cells_ladder {
                    if cells_ref % c != 0 || !(cells_ref / c).is_power_of_two() {
                        return Err(HarnessError::InvalidConfig(format!(
                            "ladder mesh {c} is not nested in the reference mesh {cells_ref}"
                        )));
                    }
                }
                let steps = steps_from_dt(config.t_final, *dt, "dt")?;
                if steps > MAX_PATH_CELLS {
                    return Err(HarnessError::InvalidConfig(format!(
                        "path grid needs {steps} cells, above the cap {MAX_PATH_CELLS}"
                    )));
                }
                let spec = mode_spec(config.dim, config.modes_per_axis);
                let ref_space = Arc::new(assemble_space(build_mesh(config.dim, *cells_ref)?));
                let ref_cov = Arc::new(build_covariance_mesh_banded(spec, &ref_space)?);
                let mode_count = ref_cov.mode_count();
                let mut levels = vec![LevelPlan {
                    space: ref_space,
                    cov: ref_cov,
                    level: TimeLevel {
                        id: 0,
                        steps,
                        cells_per_step: 1,
                    },
                }];
                for (i, cells) in cells_ladder.iter().enumerate() {
                    let space = Arc::new(assemble_space(build_mesh(config.dim, *cells)?));
                    let cov = Arc::new(build_covariance_mesh_banded(spec, &space)?);
                    levels.push(LevelPlan {
                        space,
                        cov,
                        level: TimeLevel {
                            id: (i + 1) as u32,
                            steps,
                            cells_per_step: 1,
                        },
                    });
                }
                Ok(StudyPlan {
                    axis: StudyAxis::Space,
                    problem,
                    path_cells: steps,
                    mode_count,
                    levels,
                    resolutions: cells_ladder.iter().map(|c| 1.0 / *c as f64).collect(),
                })
            }
        }
    }
}

/// Per-level accumulation state inside the shared cell sweep.
struct SweepLevel<'a> {
    driver: LevelDriver<'a>,
    full: Vec<f64>,
    stage: Vec<f64>,
    stage_cells: u64,
    xi: f64,
    /// 1-based index of the step currently being accumulated.
    step: u64,
}

impl SweepLevel<'_> {
    fn begin_step(&mut self, ctx: &PathContext, scheme: SchemeKind) {
        let level = self.driver.level();
        if self.step > level.steps {
            return;
        }
        match scheme {
            SchemeKind::Drmgfe => {
                let frac = ctx.stage_fraction(level.id, self.step, level.cells_per_step);
                self.stage_cells = frac.cells;
                self.xi = frac.value();
            }
            SchemeKind::SemiImplicitMilstein => {
                self.stage_cells = 0;
                self.xi = 0.0;
            }
        }
    }

    fn on_cell(
        &mut self,
        cell: u64,
        quantized: &[f64],
        ctx: &PathContext,
        scheme: SchemeKind,
    ) -> Result<(), SchemeError> {
        let level = self.driver.level();
        if self.step > level.steps {
            return Ok(());
        }
        let m = level.cells_per_step;
        let start = (self.step - 1) * m;
        let pos = cell - start;
        if pos < self.stage_cells {
            for (s, q) in self.stage.iter_mut().zip(quantized) {
                *s += q;
            }
        }
        for (f, q) in self.full.iter_mut().zip(quantized) {
            *f += q;
        }
        if pos + 1 == m {
            let full = ModeIncrements::new(std::mem::take(&mut self.full), start..start + m);
            let stage = ModeIncrements::new(
                std::mem::take(&mut self.stage),
                start..start + self.stage_cells,
            );
            self.driver.advance(self.xi, &stage, &full)?;
            self.full = full.into_deltas();
            self.full.fill(0.0);
            self.stage = stage.into_deltas();
            self.stage.fill(0.0);
            self.step += 1;
            self.begin_step(ctx, scheme);
        }
        Ok(())
    }
}

/// Runs one sample: integrates the reference and every ladder level off one
/// path sweep and returns the squared errors per ladder level.
fn run_sample(
    plan: &StudyPlan,
    config: &StudyConfig,
    sample: u64,
) -> Result<Vec<f64>, HarnessError> {
    let ctx = PathContext::new(
        config.master_seed,
        sample,
        plan.path_cells,
        config.t_final,
        plan.mode_count,
    );
    let fail = |context: String, source: SchemeError| HarnessError::SampleFailed {
        sample,
        context,
        source,
    };

    let mut levels = Vec::with_capacity(plan.levels.len());
    for lp in &plan.levels {
        let driver = LevelDriver::new(
            config.scheme,
            &lp.space,
            &lp.cov,
            &plan.problem,
            &ctx,
            lp.level,
        )
        .map_err(|e| fail(format!("level {} setup", lp.level.id), e))?;
        let mut sl = SweepLevel {
            driver,
            full: vec![0.0; plan.mode_count],
            stage: vec![0.0; plan.mode_count],
            stage_cells: 0,
            xi: 0.0,
            step: 1,
        };
        sl.begin_step(&ctx, config.scheme);
        levels.push(sl);
    }

    let mut z = vec![0.0; plan.mode_count];
    let mut quantized = vec![0.0; plan.mode_count];
    let mut gauss = ctx.gauss_stream();
    for cell in 0..plan.path_cells {
        gauss.cell_normals_into(cell, &mut z);
        for (q, zi) in quantized.iter_mut().zip(&z) {
            *q = gauss.scaled_increment(*zi);
        }
        for sl in levels.iter_mut() {
            let id = sl.driver.level().id;
            sl.on_cell(cell, &quantized, &ctx, config.scheme)
                .map_err(|e| fail(format!("level {id} step"), e))?;
        }
    }

    let reference = levels[0].driver.state().clone();
    let ref_space = Arc::clone(&plan.levels[0].space);
    let mut sq_errors = Vec::with_capacity(levels.len() - 1);
    for (sl, lp) in levels.iter().zip(&plan.levels).skip(1) {
        let coarse = sl.driver.state();
        let diff = match plan.axis {
            StudyAxis::Time => StateVector::from_vec(
                reference
                    .as_slice()
                    .iter()
                    .zip(coarse.as_slice())
                    .map(|(a, b)| a - b)
                    .collect(),
            ),
            StudyAxis::Space => {
                let restricted = restrict_to_coarse(&ref_space, &lp.space, &reference)?;
                StateVector::from_vec(
                    restricted
                        .as_slice()
                        .iter()
                        .zip(coarse.as_slice())
                        .map(|(a, b)| a - b)
                        .collect(),
                )
            }
        };
        let e = lp.space.mass_norm(&diff);
        sq_errors.push(e * e);
    }
    Ok(sq_errors)
}

/// Integrates a single sample at the study's reference resolution and
/// returns the space together with the final state (the `single-run` CLI
/// payload).
pub fn single_run(
    config: &StudyConfig,
    sample: u64,
) -> Result<(Arc<FemSpace>, StateVector), HarnessError> {
    let plan = StudyPlan::build(config)?;
    let ctx = PathContext::new(
        config.master_seed,
        sample,
        plan.path_cells,
        config.t_final,
        plan.mode_count,
    );
    let lp = &plan.levels[0];
    let state = crate::scheme::integrate(
        config.scheme,
        &lp.space,
        &lp.cov,
        &plan.problem,
        &ctx,
        lp.level,
    )
    .map_err(|e| HarnessError::SampleFailed {
        sample,
        context: "single run".into(),
        source: e,
    })?;
    Ok((Arc::clone(&lp.space), state))
}

/// Root-mean-square distance over coupled sample pairs:
/// `sqrt(mean_s ||ref_s - coarse_s||_M^2)` in the comparison space.
pub fn strong_error(
    ref_finals: &[StateVector],
    coarse_finals: &[StateVector],
    comparison: &FemSpace,
) -> Result<f64, HarnessError> {
    if ref_finals.is_empty() || ref_finals.len() != coarse_finals.len() {
        return Err(HarnessError::SampleCountMismatch {
            refs: ref_finals.len(),
            coarse: coarse_finals.len(),
        });
    }
    let mut acc = 0.0;
    for (a, b) in ref_finals.iter().zip(coarse_finals) {
        let diff = StateVector::from_vec(
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| x - y)
                .collect(),
        );
        let e = comparison.mass_norm(&diff);
        acc += e * e;
    }
    Ok((acc / ref_finals.len() as f64).sqrt())
}

/// Experimental orders of convergence: EOC_i = log2(e_i / e_{i+1}) for an
/// error sequence ordered by halving resolution.
pub fn eoc(errors: &[f64]) -> Result<Vec<f64>, HarnessError> {
    if errors.len() < 2 || errors.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(HarnessError::BadErrorSequence);
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Runs the full study: every sample integrates the reference and the whole
/// ladder off one coupled path; squared errors are averaged in sample order.
pub fn run_study(config: &StudyConfig) -> Result<ConvergenceReport, HarnessError> {
    let start = Instant::now();
    let plan = StudyPlan::build(config)?;
    let per_sample: Vec<Result<Vec<f64>, HarnessError>> = (0..config.samples as u64)
        .into_par_iter()
        .map(|s| run_sample(&plan, config, s))
        .collect();

    let ladder = plan.resolutions.len();
    let mut sum = vec![0.0; ladder];
    let mut sum_sq = vec![0.0; ladder];
    for result in per_sample {
        let sq = result?;
        for i in 0..ladder {
            sum[i] += sq[i];
            sum_sq[i] += sq[i] * sq[i];
        }
    }
    let n = config.samples as f64;
    let mut u_errors = Vec::with_capacity(ladder);
    let mut rel_std_error = Vec::with_capacity(ladder);
    for i in 0..ladder {
        let mean_sq = sum[i] / n;
        u_errors.push(mean_sq.sqrt());
        let var = (sum_sq[i] / n - mean_sq * mean_sq).max(0.0);
        // d sqrt(m)/dm = 1/(2 sqrt(m)): relative SE from the SE of mean_sq.
        let se = (var / n).sqrt();
        rel_std_error.push(if mean_sq > 0.0 { 0.5 * se / mean_sq } else { 0.0 });
    }
    let eocs = if u_errors.len() >= 2 {
        eoc(&u_errors)?
    } else {
        Vec::new()
    };

    let mut warnings = Vec::new();
    for (i, w) in u_errors.windows(2).enumerate() {
        if w[1] >= w[0] {
            warnings.push(format!(
                "u_error not decreasing between ladder levels {} and {} ({} -> {})",
                i,
                i + 1,
                w[0],
                w[1]
            ));
        }
    }

    let levels = plan
        .resolutions
        .iter()
        .zip(&u_errors)
        .enumerate()
        .map(|(i, (res, err))| LevelResult {
            resolution: *res,
            u_error: *err,
            eoc: if i == 0 { None } else { Some(eocs[i - 1]) },
        })
        .collect();

    Ok(ConvergenceReport {
        levels,
        rel_std_error,
        warnings,
        config_echo: config::to_ini(config),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Renders the CSV form: metadata comments (including the embedded resolved
/// config), a header row, then one row per ladder level. Floats use Rust's
/// shortest round-trip formatting, so parsing recovers them exactly.
pub fn render_csv(report: &ConvergenceReport) -> String {
    let mut out = String::new();
    out.push_str("# convergence report\n");
    out.push_str(&format!("# wall_seconds = {}\n", report.wall_seconds));
    let ses: Vec<String> = report.rel_std_error.iter().map(|s| s.to_string()).collect();
    out.push_str(&format!("# u_error_rel_se = {}\n", ses.join(" ")));
    for w in &report.warnings {
        out.push_str(&format!("# warning = {w}\n"));
    }
    out.push_str("# config-begin\n");
    for line in report.config_echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("# config-end\n");
    out.push_str("resolution,u_error,eoc\n");
    for lr in &report.levels {
        match lr.eoc {
            Some(e) => out.push_str(&format!("{},{},{}\n", lr.resolution, lr.u_error, e)),
            None => out.push_str(&format!("{},{},\n", lr.resolution, lr.u_error)),
        }
    }
    out
}

/// Writes the CSV report; I/O failures are surfaced to the caller.
pub fn emit_csv(report: &ConvergenceReport, path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_csv(report).as_bytes())?;
    file.flush()
}

/// A parsed report: the data rows and the embedded config text.
#[derive(Clone, Debug)]
pub struct ParsedReport {
    pub levels: Vec<LevelResult>,
    pub config_text: String,
}

/// Parses the CSV form produced by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<ParsedReport, HarnessError> {
    let mut levels = Vec::new();
    let mut config_text = String::new();
    let mut in_config = false;
    let mut seen_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.strip_prefix(' ').unwrap_or(comment);
            match comment.trim_end() {
                "config-begin" => in_config = true,
                "config-end" => in_config = false,
                _ if in_config => {
                    config_text.push_str(comment);
                    config_text.push('\n');
                }
                _ => {}
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line.trim() != "resolution,u_error,eoc" {
                return Err(HarnessError::BadReport {
                    line: line_no,
                    message: format!("expected header row, got '{line}'"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(HarnessError::BadReport {
                line: line_no,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, HarnessError> {
            s.parse::<f64>().map_err(|_| HarnessError::BadReport {
                line: line_no,
                message: format!("bad {what} '{s}'"),
            })
        };
        levels.push(LevelResult {
            resolution: parse(fields[0], "resolution")?,
            u_error: parse(fields[1], "u_error")?,
            eoc: if fields[2].is_empty() {
                None
            } else {
                Some(parse(fields[2], "eoc")?)
            },
        });
    }
    if !seen_header {
        return Err(HarnessError::BadReport {
            line: 0,
            message: "missing header row".into(),
        });
    }
    Ok(ParsedReport {
        levels,
        config_text,
    })
}
