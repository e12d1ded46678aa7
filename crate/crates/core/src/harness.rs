//! Experiment specs and the pipelines built on them.
//!
//! A spec is a TOML document:
//!
//! ```toml
//! name = "theorem-dipole"
//! dynamics = "schrodinger"        # schrodinger | gradient_flow | mixed
//! t_end = 0.5
//! eps = [0.1, 0.05, 0.025]        # empty or absent: ODE only
//!
//! [domain]
//! kind = "rectangle"              # plane | disk | rectangle
//! xmin = -2.0
//! xmax = 2.0
//! ymin = -2.0
//! ymax = 2.0
//!
//! [potential]
//! kind = "zero"                   # zero | constant | bump | gaussian | step
//!                                 # | double_gaussian | lattice | form | file
//! params = []
//!
//! [[vortices]]
//! x = -0.5
//! y = 0.5
//! degree = 1
//! ```
//!
//! Optional tables `[ode]`, `[pde]` and `[tf]` tune the integrator, the field
//! solver and the Thomas-Fermi study; see [`OdeSettings`], [`PdeSettings`] and
//! [`TfSettings`]. Relative file paths are resolved against the spec's
//! directory.
//!
//! Data files written by [`run`] depend only on the spec. Wall-clock time
//! appears in `summary.json` alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{builtin_potential, tf_convergence_report_sampled, AnalyticPotential, PotentialForm, TfOptions, TfReport};
use crate::error::{Error, Result, StageExt};
use crate::geometry::Vec2;
use crate::gp_solver::{
    build_initial_data, energy_report, radial_core_profile, ComplexField, EnergyReference, FlowKind, GpStepper, StepperOptions,
};
use crate::grid::{Grid, ScalarField};
use crate::ode_dynamics::{dissipation_check, hamiltonian_drift, integrate, DynamicsKind, IntegrateOptions, Termination, Trajectory};
use crate::vortex_config::{Domain, VortexConfig};
use crate::vortex_tracking::{compare_detections, detect_vortices, DetectionResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    pub x: f64,
    pub y: f64,
    pub degree: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default = "default_potential_kind")]
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    /// Closed form for `kind = "form"`.
    #[serde(default)]
    pub form: Option<PotentialForm>,
    /// Grid file (`VLGRID1`) for `kind = "file"`.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

fn default_potential_kind() -> String {
    "zero".into()
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec { kind: default_potential_kind(), params: vec![], form: None, file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Output spacing of the trajectory CSV; absent records every step.
    pub stride: Option<f64>,
}

impl Default for OdeSettings {
    fn default() -> Self {
        OdeSettings { rtol: 1e-10, atol: 1e-12, stride: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSettings {
    /// Computational box `[xmin, xmax, ymin, ymax]`; defaults to a rectangular domain.
    #[serde(rename = "box")]
    pub bounds: Option<[f64; 4]>,
    /// Grid spacing is `eps / points_per_eps` unless `resolution` is set.
    pub points_per_eps: f64,
    /// Nodes along the longer box side, overriding `points_per_eps`.
    pub resolution: Option<usize>,
    /// Time step as a multiple of `eps^2`.
    pub dt_factor: f64,
    /// Spacing of detection and energy samples.
    pub sample_dt: f64,
    pub nonlinear_tol: f64,
    pub merge_radius: Option<f64>,
    pub core_r_max: f64,
    pub core_samples: usize,
    /// Write the final field and the profile as binary grids.
    pub write_fields: bool,
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings {
            bounds: None,
            points_per_eps: 4.0,
            resolution: None,
            dt_factor: 0.5,
            sample_dt: 0.05,
            nonlinear_tol: 1e-10,
            merge_radius: None,
            core_r_max: 20.0,
            core_samples: 4001,
            write_fields: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfSettings {
    /// Square `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for TfSettings {
    fn default() -> Self {
        TfSettings { half_width: 1.5, nodes: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default = "default_dynamics")]
    pub dynamics: DynamicsKind,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub vortices: Vec<VortexSpec>,
    #[serde(default)]
    pub eps: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub ode: OdeSettings,
    #[serde(default)]
    pub pde: PdeSettings,
    #[serde(default)]
    pub tf: TfSettings,
    /// Directory used to resolve relative paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_dynamics() -> DynamicsKind {
    DynamicsKind::Schrodinger
}

fn default_domain() -> Domain {
    Domain::Plane
}

/// Background potential of a spec.
#[derive(Debug, Clone)]
pub enum Background {
    Analytic(AnalyticPotential),
    Sampled(ScalarField),
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads and validates a spec file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut spec = Self::parse(&text)?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn config(&self) -> Result<VortexConfig> {
        let items: Vec<(f64, f64, i32)> = self.vortices.iter().map(|v| (v.x, v.y, v.degree)).collect();
        VortexConfig::from_tuples(&items)
    }

    pub fn background(&self) -> Result<Background> {
        let p = &self.potential;
        let analytic = match p.kind.as_str() {
            "zero" => AnalyticPotential::zero(),
            "constant" => match p.params.as_slice() {
                [v] => AnalyticPotential::constant(*v)?,
                _ => return Err(Error::BadParams("constant potential takes one parameter".into())),
            },
            "bump" => match p.params.as_slice() {
                [a, cx, cy, r] => AnalyticPotential::bump(*a, Vec2::new(*cx, *cy), *r)?,
                _ => return Err(Error::BadParams("bump potential takes [amplitude, cx, cy, radius]".into())),
            },
            "form" => {
                let form = p.form.clone().ok_or_else(|| Error::BadParams("`form` potential needs a form table".into()))?;
                AnalyticPotential::from_form("form", p.params.clone(), form)?
            }
            "file" => {
                let f = p.file.as_ref().ok_or_else(|| Error::BadParams("`file` potential needs a file".into()))?;
                return Ok(Background::Sampled(ScalarField::read_binary(&self.resolve(f))?));
            }
            other => builtin_potential(other.parse()?, &p.params)?,
        };
        Ok(Background::Analytic(analytic))
    }

    /// The potential as a closed form, required by the reduced dynamics.
    pub fn analytic_potential(&self) -> Result<AnalyticPotential> {
        match self.background()? {
            Background::Analytic(a) => Ok(a),
            Background::Sampled(_) => Err(Error::BadParams("grid-file potentials are only usable by the Thomas-Fermi study".into())),
        }
    }

    /// Box of the field solver.
    pub fn pde_box(&self) -> Result<[f64; 4]> {
        if let Some(b) = self.pde.bounds {
            return Ok(b);
        }
        match self.domain {
            Domain::Rectangle { xmin, xmax, ymin, ymax } => Ok([xmin, xmax, ymin, ymax]),
            _ => Err(Error::BadParams("field runs need a rectangular domain or a [pde] box".into())),
        }
    }

    /// Grid of the field solver at `eps`.
    pub fn pde_grid(&self, eps: f64) -> Result<Grid> {
        let [xmin, xmax, ymin, ymax] = self.pde_box()?;
        let (wx, wy) = (xmax - xmin, ymax - ymin);
        let h = match self.pde.resolution {
            Some(n) if n >= 2 => wx.max(wy) / (n - 1) as f64,
            Some(n) => return Err(Error::BadParams(format!("resolution must be at least 2, got {n}"))),
            None => eps / self.pde.points_per_eps,
        };
        // The small allowance keeps exact multiples from gaining a node.
        let nodes = |w: f64| (w / h - 1e-9).ceil() as usize + 1;
        Grid::covering(xmin, xmax, ymin, ymax, nodes(wx), nodes(wy))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::BadParams("spec needs a name".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::BadParams(format!("t_end must be positive, got {}", self.t_end)));
        }
        self.domain.validate()?;
        let config = self.config()?;
        config.validate_in(&self.domain)?;
        config.check_distinct()?;
        // Loads grid files, so a missing file fails here.
        self.background()?;
        if let Some(s) = self.ode.stride {
            if !(s > 0.0) {
                return Err(Error::BadParams("ode stride must be positive".into()));
            }
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::BadParams("eps values must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Checks that every `eps` can be run by the field solver: closed-form
    /// potential, supported dynamics, a box, and `h <= eps/4`.
    pub fn validate_field_runs(&self) -> Result<()> {
        if !self.eps.is_empty() {
            if matches!(self.background()?, Background::Sampled(_)) {
                return Err(Error::BadParams("field runs need a closed-form potential".into()));
            }
            if self.dynamics == DynamicsKind::Mixed {
                return Err(Error::BadParams("field runs support schrodinger and gradient_flow only".into()));
            }
            let pde = &self.pde;
            if !(pde.points_per_eps >= 4.0 && pde.dt_factor > 0.0 && pde.sample_dt > 0.0 && pde.nonlinear_tol > 0.0) {
                return Err(Error::BadParams("invalid [pde] settings".into()));
            }
            let [xmin, xmax, ymin, ymax] = self.pde_box()?;
            Domain::rectangle(xmin, xmax, ymin, ymax)?;
            for &eps in &self.eps {
                let g = self.pde_grid(eps)?;
                if g.h() > eps / 4.0 * (1.0 + 1e-9) {
                    return Err(Error::ResolutionTooCoarse(format!("h = {} exceeds eps/4 = {} at eps = {eps}", g.h(), eps / 4.0)));
                }
            }
        }
        Ok(())
    }
}

/// Names of the bundled presets.
pub const PRESET_NAMES: [&str; 7] = ["v1-dipole", "v2-dipole", "v3-dipole", "v4-dipole", "control-dipole", "theorem-dipole", "gf-single-v1"];

/// A bundled spec by name.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let text = match name {
        "v1-dipole" => include_str!("../../../presets/v1-dipole.toml"),
        "v2-dipole" => include_str!("../../../presets/v2-dipole.toml"),
        "v3-dipole" => include_str!("../../../presets/v3-dipole.toml"),
        "v4-dipole" => include_str!("../../../presets/v4-dipole.toml"),
        "control-dipole" => include_str!("../../../presets/control-dipole.toml"),
        "theorem-dipole" => include_str!("../../../presets/theorem-dipole.toml"),
        "gf-single-v1" => include_str!("../../../presets/gf-single-v1.toml"),
        other => return Err(Error::BadParams(format!("unknown preset `{other}`"))),
    };
    let spec = ExperimentSpec::parse(text)?;
    spec.validate()?;
    spec.validate_field_runs()?;
    Ok(spec)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Suppress progress lines on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeSummary {
    pub termination: Termination,
    pub end_time: f64,
    pub steps: usize,
    pub h0_initial: f64,
    pub h0_drift: f64,
    /// Relative to `max(1, |H0(0)|)`.
    pub h0_relative_drift: f64,
    /// Gradient-flow runs only.
    pub h0_monotone: Option<bool>,
    pub endpoint: Vec<Vec2>,
    pub endpoint_finite: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeSummary {
    pub eps: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub max_flat_distance: f64,
    pub count_mismatches: usize,
    pub max_mass_residual: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub final_excess: Option<f64>,
    pub annihilations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub dynamics: DynamicsKind,
    pub t_end: f64,
    pub ode: Option<OdeSummary>,
    pub pde: Vec<PdeSummary>,
    pub wall_clock_seconds: f64,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trajectory: Option<Trajectory>,
    pub detections: Vec<Vec<DetectionResult>>,
}

fn progress(opts: &RunOptions, msg: impl FnOnce() -> String) {
    if !opts.quiet {
        eprintln!("{}", msg());
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn ode_options(spec: &ExperimentSpec) -> IntegrateOptions {
    IntegrateOptions { rtol: spec.ode.rtol, atol: spec.ode.atol, sample_stride: spec.ode.stride, ..Default::default() }
}

/// Integrates the reduced dynamics of a spec.
pub fn run_ode(spec: &ExperimentSpec) -> Result<Trajectory> {
    let config = spec.config().stage("config")?;
    let q0 = spec.analytic_potential().stage("potential")?;
    integrate(&config, &spec.domain, &q0, spec.dynamics, spec.t_end, &ode_options(spec)).stage("ode")
}

pub fn summarize_ode(traj: &Trajectory) -> OdeSummary {
    let h0_initial = traj.h0.first().copied().unwrap_or(0.0);
    let drift = hamiltonian_drift(traj);
    let end = traj.final_state();
    OdeSummary {
        termination: traj.termination,
        end_time: traj.end_time(),
        steps: traj.len(),
        h0_initial,
        h0_drift: drift,
        h0_relative_drift: drift / h0_initial.abs().max(1.0),
        h0_monotone: (traj.kind == DynamicsKind::GradientFlow).then(|| dissipation_check(traj).monotone),
        endpoint: end.positions.clone(),
        endpoint_finite: end.positions.iter().all(|p| p.is_finite()),
    }
}

fn eps_tag(i: usize, eps: f64) -> String {
    format!("eps{i}_{eps}")
}

struct PdeJob {
    summary: PdeSummary,
    detections: Vec<DetectionResult>,
}

/// Evolves the field for one `eps`, tracking vortices against `traj`.
fn run_pde(spec: &ExperimentSpec, index: usize, eps: f64, traj: &Trajectory, out: Option<&Path>, opts: &RunOptions) -> Result<PdeJob> {
    let stage = |s: &str| format!("{s} (eps = {eps})");
    let q0 = spec.analytic_potential().stage(stage("potential"))?;
    let config = spec.config().stage(stage("config"))?;
    let grid = spec.pde_grid(eps).stage(stage("grid"))?;
    let eta = crate::background::profile_for_potential(&q0, grid, eps, &TfOptions::default()).stage(stage("background"))?;
    let core = radial_core_profile(spec.pde.core_r_max, spec.pde.core_samples).stage(stage("core profile"))?;
    let mut w = build_initial_data(&config, eps, &core, &eta).stage(stage("initial data"))?;

    let kind = match spec.dynamics {
        DynamicsKind::GradientFlow => FlowKind::GradientFlow,
        _ => FlowKind::Schrodinger,
    };
    let t_stop = traj.end_time().min(spec.t_end);
    let dt_target = spec.pde.dt_factor * eps * eps;
    let every = (spec.pde.sample_dt / dt_target).ceil().max(1.0) as usize;
    let n_samples = (t_stop / (every as f64 * dt_target)).ceil().max(1.0) as usize;
    let steps = n_samples * every;
    let dt = t_stop / steps as f64;
    let sopts = StepperOptions { nonlinear_tol: spec.pde.nonlinear_tol, ..Default::default() };
    let mut stepper = GpStepper::new(&eta, kind, dt, sopts).stage(stage("stepper"))?;

    let reference = |t: f64| EnergyReference { config: traj.interpolate(t), potential: q0.clone(), domain: spec.domain };
    let mut energy_csv = String::from("t,energy,excess,mass_residual,energy_delta\n");
    let mut detections = Vec::with_capacity(n_samples + 1);
    let mut prev_energy: Option<f64> = None;
    let mut max_mass = 0.0f64;
    let mut energies = Vec::new();
    let mut excess = None;
    let mut record = |w: &ComplexField, detections: &mut Vec<DetectionResult>| -> Result<()> {
        detections.push(detect_vortices(w, spec.pde.merge_radius).stage(stage("detection"))?);
        let rep = energy_report(w, &eta, Some(&reference(w.t)), core.gamma0).stage(stage("energy"))?;
        let delta = prev_energy.map(|e| rep.total - e);
        prev_energy = Some(rep.total);
        max_mass = max_mass.max(rep.mass_residual.abs());
        energies.push(rep.total);
        excess = rep.excess;
        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(energy_csv, "{},{:e},{},{:e},{}", w.t, rep.total, fmt_opt(rep.excess), rep.mass_residual, fmt_opt(delta));
        Ok(())
    };
    record(&w, &mut detections)?;
    for n in 1..=steps {
        stepper.step_in_place(&mut w).stage(stage(&format!("step {n}")))?;
        // Keep sample times on the nominal lattice.
        w.t = n as f64 * dt;
        if n % every == 0 {
            record(&w, &mut detections)?;
            progress(opts, || format!("[{}] eps {eps}: t = {:.4} / {t_stop}", spec.name, w.t));
        }
    }
    let cmp = compare_detections(&detections, traj, &spec.domain).stage(stage("comparison"))?;

    if let Some(dir) = out {
        let tag = eps_tag(index, eps);
        let mut det_csv = String::from("t,x,y,weight,cluster_size,residual\n");
        for d in &detections {
            det_csv.push_str(&d.csv_rows());
        }
        write_text(&dir.join(format!("{tag}_detections.csv")), &det_csv)?;
        write_text(&dir.join(format!("{tag}_compare.csv")), &cmp.to_csv())?;
        write_text(&dir.join(format!("{tag}_energy.csv")), &energy_csv)?;
        if spec.pde.write_fields {
            w.write_binary(&dir.join(format!("{tag}_final.vlc")))?;
            eta.eta_field().write_binary(&dir.join(format!("{tag}_eta.vlg")))?;
        }
    }
    Ok(PdeJob {
        summary: PdeSummary {
            eps,
            nx: grid.nx,
            ny: grid.ny,
            h: grid.h(),
            dt,
            steps,
            max_flat_distance: cmp.max_distance,
            count_mismatches: cmp.mismatches,
            max_mass_residual: max_mass,
            energy_initial: energies[0],
            energy_final: *energies.last().unwrap(),
            final_excess: excess,
            annihilations: detections.iter().map(|d| d.annihilated).sum(),
        },
        detections,
    })
}

/// Runs a spec: the reduced dynamics, then one field evolution per `eps`.
/// Files go to `out` when given.
pub fn run(spec: &ExperimentSpec, out: Option<&Path>, opts: &RunOptions) -> Result<RunOutcome> {
    let start = Instant::now();
    spec.validate().stage("spec")?;
    spec.validate_field_runs().stage("spec")?;
    progress(opts, || format!("[{}] integrating reduced dynamics to t = {}", spec.name, spec.t_end));
    let traj = run_ode(spec)?;
    if let Some(dir) = out {
        write_text(&dir.join("trajectory.csv"), &traj.to_csv())?;
    }
    let jobs: Vec<Result<PdeJob>> = spec
        .eps
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| run_pde(spec, i, eps, &traj, out, opts))
        .collect();
    let mut pde = Vec::new();
    let mut detections = Vec::new();
    for job in jobs {
        let job = job?;
        pde.push(job.summary);
        detections.push(job.detections);
    }
    let summary = RunSummary {
        name: spec.name.clone(),
        dynamics: spec.dynamics,
        t_end: spec.t_end,
        ode: Some(summarize_ode(&traj)),
        pde,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    }
    Ok(RunOutcome { summary, trajectory: Some(traj), detections })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub nx: usize,
    pub max_flat_distance: f64,
    pub count_mismatches: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub strictly_decreasing: bool,
    /// Adjacent pairs where the distance failed to decrease.
    pub breaks: usize,
    /// `Q0` along the reduced trajectory never increases (gradient flow only).
    pub q0_decreasing: Option<bool>,
    pub verdict: Verdict,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,nx,max_flat_distance,count_mismatches\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:e},{}", r.eps, r.nx, r.max_flat_distance, r.count_mismatches);
        }
        s
    }
}

/// Relative slack tolerated on one non-decreasing pair.
pub const MONOTONE_SLACK: f64 = 0.10;

/// Applies the column rule: PASS when strictly decreasing, or when a single
/// pair fails to decrease by at most [`MONOTONE_SLACK`].
pub fn column_verdict(values: &[f64]) -> (bool, usize, Verdict) {
    let mut breaks = 0;
    let mut beyond = false;
    for w in values.windows(2) {
        if !(w[1] < w[0]) {
            breaks += 1;
            if !(w[1] <= w[0] * (1.0 + MONOTONE_SLACK)) {
                beyond = true;
            }
        }
    }
    let verdict = if breaks == 0 || (breaks == 1 && !beyond) { Verdict::Pass } else { Verdict::Fail };
    (breaks == 0, breaks, verdict)
}

/// Runs every `eps` of the spec and tabulates the distance to the reduced
/// trajectory.
pub fn validate_theorem(spec: &ExperimentSpec, out: Option<&Path>, opts: &RunOptions) -> Result<(ConvergenceTable, RunOutcome)> {
    if spec.eps.len() < 3 {
        return Err(Error::BadParams(format!("validation needs at least three eps values, got {}", spec.eps.len())));
    }
    if spec.eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::BadParams("eps values must decrease".into()));
    }
    let traj = run_ode(spec)?;
    if let Termination::Collision { t_col } = traj.termination {
        return Err(Error::BadParams(format!("horizon {} exceeds the collision time {t_col}", spec.t_end)));
    }
    let outcome = run(spec, out, opts)?;
    let rows: Vec<ConvergenceRow> = outcome
        .summary
        .pde
        .iter()
        .map(|p| ConvergenceRow { eps: p.eps, nx: p.nx, max_flat_distance: p.max_flat_distance, count_mismatches: p.count_mismatches })
        .collect();
    let dists: Vec<f64> = rows.iter().map(|r| r.max_flat_distance).collect();
    let (strictly_decreasing, breaks, mut verdict) = column_verdict(&dists);
    let q0_decreasing = (spec.dynamics == DynamicsKind::GradientFlow).then(|| {
        let q0 = spec.analytic_potential().expect("validated");
        let vals: Vec<f64> = traj.states.iter().map(|s| s.positions.iter().map(|&p| q0.value(p)).sum()).collect();
        vals.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    });
    if q0_decreasing == Some(false) {
        verdict = Verdict::Fail;
    }
    let table = ConvergenceTable { rows, strictly_decreasing, breaks, q0_decreasing, verdict };
    if let Some(dir) = out {
        write_text(&dir.join("convergence.csv"), &table.to_csv())?;
        write_text(&dir.join("convergence.json"), &serde_json::to_string_pretty(&table).expect("table serializes"))?;
    }
    Ok((table, outcome))
}

/// Thomas-Fermi convergence on the spec's `[tf]` grid.
pub fn tf_study(spec: &ExperimentSpec, out: Option<&Path>) -> Result<TfReport> {
    let rho = match spec.background().stage("potential")? {
        Background::Sampled(f) => f,
        Background::Analytic(a) => {
            let hw = spec.tf.half_width;
            let grid = Grid::covering(-hw, hw, -hw, hw, spec.tf.nodes, spec.tf.nodes).stage("tf grid")?;
            a.sample(grid)
        }
    };
    let report = tf_convergence_report_sampled(&spec.eps, &rho).stage("thomas-fermi")?;
    if let Some(dir) = out {
        let mut s = String::from("eps,sup_error,h1_error,sup_order,h1_order\n");
        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
        for r in &report.rows {
            let _ = writeln!(s, "{},{:e},{:e},{},{}", r.eps, r.sup_error, r.h1_error, fmt_opt(r.sup_order), fmt_opt(r.h1_order));
        }
        write_text(&dir.join("tf_convergence.csv"), &s)?;
    }
    Ok(report)
}

/// Largest distance of a vortex from the straight line through its start
/// point along its initial velocity.
pub fn path_curvature(traj: &Trajectory) -> f64 {
    let (Some(first), Some(v0)) = (traj.states.first(), traj.velocities.first()) else {
        return 0.0;
    };
    let mut worst = 0.0f64;
    for k in 0..first.len() {
        let speed = v0[k].norm();
        if speed == 0.0 {
            continue;
        }
        let normal = v0[k].perp() * (1.0 / speed);
        for s in &traj.states {
            worst = worst.max((s.positions[k] - first.positions[k]).dot(normal).abs());
        }
    }
    worst
}

/// Deviation from symmetry under `x1 -> -x1` for a two-vortex trajectory whose
/// vortices are swapped by the reflection.
pub fn mirror_asymmetry(traj: &Trajectory) -> Result<f64> {
    if traj.states.first().map_or(0, |s| s.len()) != 2 {
        return Err(Error::BadParams("mirror check needs two vortices".into()));
    }
    Ok(traj.states.iter().fold(0.0f64, |m, s| {
        let (a, b) = (s.positions[0], s.positions[1]);
        m.max((a.x + b.x).abs()).max((a.y - b.y).abs())
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureRow {
    pub preset: String,
    pub termination: Termination,
    pub h0_relative_drift: f64,
    pub curvature: f64,
    pub endpoint: Vec<Vec2>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureReport {
    pub rows: Vec<FigureRow>,
    pub control_curvature: f64,
    pub v3_mirror_asymmetry: f64,
    pub verdict: Verdict,
}

/// The four background presets.
pub const FIGURE_PRESETS: [&str; 4] = ["v1-dipole", "v2-dipole", "v3-dipole", "v4-dipole"];

/// Bound on the relative `H0` drift of the figure runs.
pub const FIGURE_DRIFT_TOL: f64 = 1e-7;
pub const MIRROR_TOL: f64 = 1e-6;
/// Largest deviation from a straight line counted as straight.
pub const STRAIGHT_TOL: f64 = 1e-8;
/// Smallest deviation counted as curved. The v1 dipole passes the bump at
/// distance ~4.95 and deflects by ~5e-9; the control sits near 4e-13.
pub const CURVED_TOL: f64 = 1e-10;

/// Runs the background presets and the straight-line control.
pub fn figures(out: Option<&Path>, opts: &RunOptions) -> Result<FigureReport> {
    let names: Vec<&str> = FIGURE_PRESETS.iter().copied().chain(["control-dipole"]).collect();
    let runs: Vec<Result<(String, Trajectory)>> = names
        .par_iter()
        .map(|&name| {
            let spec = preset(name)?;
            progress(opts, || format!("[{name}] integrating to t = {}", spec.t_end));
            let traj = run_ode(&spec).stage(name)?;
            if let Some(dir) = out {
                write_text(&dir.join(format!("{name}.csv")), &traj.to_csv())?;
            }
            Ok((name.to_string(), traj))
        })
        .collect();
    let mut rows = Vec::new();
    let mut control_curvature = f64::NAN;
    let mut v3_mirror_asymmetry = f64::NAN;
    for r in runs {
        let (name, traj) = r?;
        let s = summarize_ode(&traj);
        let curvature = path_curvature(&traj);
        if name == "control-dipole" {
            control_curvature = curvature;
        }
        if name == "v3-dipole" {
            v3_mirror_asymmetry = mirror_asymmetry(&traj)?;
        }
        rows.push(FigureRow { preset: name, termination: s.termination, h0_relative_drift: s.h0_relative_drift, curvature, endpoint: s.endpoint });
    }
    let ok = rows.iter().all(|r| {
        matches!(r.termination, Termination::ReachedT)
            && r.h0_relative_drift <= FIGURE_DRIFT_TOL
            && r.endpoint.iter().all(|p| p.is_finite())
            && (r.preset == "control-dipole" || r.curvature > CURVED_TOL)
    }) && control_curvature <= STRAIGHT_TOL
        && v3_mirror_asymmetry <= MIRROR_TOL;
    let report = FigureReport { rows, control_curvature, v3_mirror_asymmetry, verdict: if ok { Verdict::Pass } else { Verdict::Fail } };
    if let Some(dir) = out {
        let mut s = String::from("preset,termination,h0_relative_drift,curvature\n");
        for r in &report.rows {
            let term = match r.termination {
                Termination::ReachedT => "reached_t",
                Termination::Collision { .. } => "collision",
                Termination::SolverFailure => "solver_failure",
            };
            let _ = writeln!(s, "{},{term},{:e},{:e}", r.preset, r.h0_relative_drift, r.curvature);
        }
        write_text(&dir.join("figures.csv"), &s)?;
    }
    Ok(report)
}

/// Detects vortices in a stored field and writes `detections.csv`.
pub fn detect_file(field: &Path, merge_radius: Option<f64>, out: Option<&Path>) -> Result<DetectionResult> {
    let w = ComplexField::read_binary(field).stage("read field")?;
    let det = detect_vortices(&w, merge_radius).stage("detection")?;
    if let Some(dir) = out {
        det.write_csv(&dir.join("detections.csv"))?;
    }
    Ok(det)
}

/// Copy of `spec` cut down for a quick end-to-end check: only the coarsest
/// `eps`, at most `t_cap` of simulated time.
pub fn reduced(spec: &ExperimentSpec, t_cap: f64) -> ExperimentSpec {
    let mut s = spec.clone();
    s.eps.truncate(1);
    s.t_end = s.t_end.min(t_cap);
    s.pde.write_fields = false;
    s
}
