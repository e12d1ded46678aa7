//! Background potentials and the Thomas-Fermi profile.
//!
//! The profile `eta` solves `-eps^2 Lap eta = eta (p^2 - eta^2)` with
//! homogeneous Neumann data, `p^2 = 1 + rho / |log eps|`. The solver works
//! with `Qt = |log eps| (eta - 1)` and exposes `Q = |log eps| (eta^2 - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Sym2, Vec2};
use crate::grid::{apply_div_grad, dirichlet_energy, Grid, ScalarField};
use crate::linalg::{pcg_real, KrylovOptions, NeumannSpectral};

/// Closed-form building blocks of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PotentialForm {
    Zero,
    Constant { value: f64 },
    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    Gaussian { amplitude: f64, center: Vec2, width: f64 },
    /// `amplitude * tanh(x_1 / scale)`.
    Tanh { amplitude: f64, scale: f64 },
    /// `amplitude * exp(1 - 1/(1 - |x-c|^2/R^2))` inside the disk, zero outside.
    Bump { amplitude: f64, center: Vec2, radius: f64 },
    /// Gaussians of common width at `spacing * (j, k)`, `|j|, |k| <= extent`.
    Lattice { amplitude: f64, spacing: f64, extent: u32, width: f64 },
    Sum { terms: Vec<PotentialForm> },
}

/// Terms of a Gaussian sum whose exponent exceeds the nearest one by more
/// than this are below double precision and skipped.
const GAUSS_SKIP: f64 = 40.0;

fn gaussian_parts(amplitude: f64, center: Vec2, width: f64, x: Vec2) -> (f64, Vec2, Sym2) {
    let d = x - center;
    let w2 = width * width;
    let g = amplitude * (-d.norm_sq() / w2).exp();
    let grad = d * (-2.0 * g / w2);
    let a = 4.0 * g / (w2 * w2);
    let b = 2.0 * g / w2;
    (g, grad, Sym2 { xx: a * d.x * d.x - b, xy: a * d.x * d.y, yy: a * d.y * d.y - b })
}

impl PotentialForm {
    fn eval(&self, x: Vec2) -> (f64, Vec2, Sym2) {
        match self {
            PotentialForm::Zero => (0.0, Vec2::ZERO, Sym2::default()),
            PotentialForm::Constant { value } => (*value, Vec2::ZERO, Sym2::default()),
            PotentialForm::Gaussian { amplitude, center, width } => gaussian_parts(*amplitude, *center, *width, x),
            PotentialForm::Tanh { amplitude, scale } => {
                let t = (x.x / scale).tanh();
                let sech2 = 1.0 - t * t;
                (
                    amplitude * t,
                    Vec2::new(amplitude * sech2 / scale, 0.0),
                    Sym2 { xx: -2.0 * amplitude * sech2 * t / (scale * scale), xy: 0.0, yy: 0.0 },
                )
            }
            PotentialForm::Bump { amplitude, center, radius } => {
                let d = x - *center;
                let r2 = radius * radius;
                let s = d.norm_sq() / r2;
                if s >= 1.0 {
                    return (0.0, Vec2::ZERO, Sym2::default());
                }
                let g = 1.0 / (1.0 - s);
                let v = amplitude * (1.0 - g).exp();
                // d/ds of v and its second derivative.
                let vs = -v * g * g;
                let vss = v * g * g * g * (g - 2.0);
                let ds = d * (2.0 / r2);
                let grad = ds * vs;
                let c = 2.0 * vs / r2;
                (v, grad, Sym2 { xx: vss * ds.x * ds.x + c, xy: vss * ds.x * ds.y, yy: vss * ds.y * ds.y + c })
            }
            PotentialForm::Lattice { amplitude, spacing, extent, width } => {
                let e = *extent as i64;
                let w2 = width * width;
                let nearest = |c: f64| ((c / spacing).round() as i64).clamp(-e, e);
                let near = Vec2::new(nearest(x.x) as f64 * spacing, nearest(x.y) as f64 * spacing);
                let min_exp = (x - near).norm_sq() / w2;
                let reach = ((min_exp + GAUSS_SKIP).sqrt() * width / spacing).ceil() as i64 + 1;
                let (ci, cj) = (nearest(x.x), nearest(x.y));
                let mut acc = (0.0, Vec2::ZERO, Sym2::default());
                for j in (ci - reach).max(-e)..=(ci + reach).min(e) {
                    for k in (cj - reach).max(-e)..=(cj + reach).min(e) {
                        let c = Vec2::new(j as f64 * spacing, k as f64 * spacing);
                        if (x - c).norm_sq() / w2 > min_exp + GAUSS_SKIP {
                            continue;
                        }
                        let t = gaussian_parts(*amplitude, c, *width, x);
                        acc = (acc.0 + t.0, acc.1 + t.1, acc.2 + t.2);
                    }
                }
                acc
            }
            PotentialForm::Sum { terms } => terms.iter().fold((0.0, Vec2::ZERO, Sym2::default()), |acc, t| {
                let v = t.eval(x);
                (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2)
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::BadParams(format!("{what} must be positive and finite, got {v}")))
            }
        };
        let fin = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::BadParams(format!("{what} must be finite")))
            }
        };
        match self {
            PotentialForm::Zero => Ok(()),
            PotentialForm::Constant { value } => fin(*value, "constant"),
            PotentialForm::Gaussian { amplitude, center, width } => {
                fin(*amplitude, "amplitude")?;
                fin(center.x + center.y, "center")?;
                pos(*width, "width")
            }
            PotentialForm::Tanh { amplitude, scale } => {
                fin(*amplitude, "amplitude")?;
                pos(*scale, "scale")
            }
            PotentialForm::Bump { amplitude, center, radius } => {
                fin(*amplitude, "amplitude")?;
                fin(center.x + center.y, "center")?;
                pos(*radius, "radius")
            }
            PotentialForm::Lattice { amplitude, spacing, extent, width } => {
                fin(*amplitude, "amplitude")?;
                pos(*spacing, "spacing")?;
                pos(*width, "width")?;
                if *extent > 1000 {
                    return Err(Error::BadParams(format!("lattice extent {extent} too large")));
                }
                Ok(())
            }
            PotentialForm::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
        }
    }
}

/// A background potential with closed-form value, gradient and Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPotential {
    pub kind: String,
    pub params: Vec<f64>,
    pub form: PotentialForm,
}

impl AnalyticPotential {
    pub fn from_form(kind: &str, params: Vec<f64>, form: PotentialForm) -> Result<Self> {
        form.validate()?;
        Ok(AnalyticPotential { kind: kind.to_string(), params, form })
    }

    pub fn zero() -> Self {
        AnalyticPotential { kind: "zero".into(), params: vec![], form: PotentialForm::Zero }
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::from_form("constant", vec![value], PotentialForm::Constant { value })
    }

    pub fn bump(amplitude: f64, center: Vec2, radius: f64) -> Result<Self> {
        Self::from_form("bump", vec![amplitude, center.x, center.y, radius], PotentialForm::Bump { amplitude, center, radius })
    }

    pub fn value(&self, x: Vec2) -> f64 {
        self.form.eval(x).0
    }

    pub fn gradient(&self, x: Vec2) -> Vec2 {
        self.form.eval(x).1
    }

    pub fn hessian(&self, x: Vec2) -> Sym2 {
        self.form.eval(x).2
    }

    /// Value, gradient and Hessian in one pass.
    pub fn evaluate(&self, x: Vec2) -> (f64, Vec2, Sym2) {
        self.form.eval(x)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, PotentialForm::Zero)
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        ScalarField::sample(grid, |x, y| self.value(Vec2::new(x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    Gaussian,
    Step,
    DoubleGaussian,
    Lattice,
}

impl std::str::FromStr for BuiltinKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(BuiltinKind::Gaussian),
            "step" => Ok(BuiltinKind::Step),
            "double_gaussian" => Ok(BuiltinKind::DoubleGaussian),
            "lattice" => Ok(BuiltinKind::Lattice),
            other => Err(Error::BadParams(format!("unknown potential kind `{other}`"))),
        }
    }
}

/// The four reference backgrounds.
///
/// Parameters are optional and override defaults from the left:
/// - gaussian: `[amplitude=1, width=1]`
/// - step: `[amplitude=0.225, scale=1]`
/// - double_gaussian: `[amplitude=1, offset=1, width=1]`
/// - lattice: `[amplitude=1, extent=15, spacing=1, width=1]`
pub fn builtin_potential(kind: BuiltinKind, params: &[f64]) -> Result<AnalyticPotential> {
    let defaults: &[f64] = match kind {
        BuiltinKind::Gaussian => &[1.0, 1.0],
        BuiltinKind::Step => &[0.225, 1.0],
        BuiltinKind::DoubleGaussian => &[1.0, 1.0, 1.0],
        BuiltinKind::Lattice => &[1.0, 15.0, 1.0, 1.0],
    };
    if params.len() > defaults.len() {
        return Err(Error::BadParams(format!("{kind:?} takes at most {} parameters", defaults.len())));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::BadParams("non-finite potential parameter".into()));
    }
    let mut p = defaults.to_vec();
    p[..params.len()].copy_from_slice(params);
    let (tag, form) = match kind {
        BuiltinKind::Gaussian => ("gaussian", PotentialForm::Gaussian { amplitude: p[0], center: Vec2::ZERO, width: p[1] }),
        BuiltinKind::Step => ("step", PotentialForm::Tanh { amplitude: p[0], scale: p[1] }),
        BuiltinKind::DoubleGaussian => (
            "double_gaussian",
            PotentialForm::Sum {
                terms: vec![
                    PotentialForm::Gaussian { amplitude: p[0], center: Vec2::new(p[1], 0.0), width: p[2] },
                    PotentialForm::Gaussian { amplitude: p[0], center: Vec2::new(-p[1], 0.0), width: p[2] },
                ],
            },
        ),
        BuiltinKind::Lattice => {
            if p[1] < 0.0 || p[1].fract() != 0.0 {
                return Err(Error::BadParams(format!("lattice extent must be a non-negative integer, got {}", p[1])));
            }
            ("lattice", PotentialForm::Lattice { amplitude: p[0], extent: p[1] as u32, spacing: p[2], width: p[3] })
        }
    };
    AnalyticPotential::from_form(tag, p, form)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfMethod {
    /// Damped linearized fixed point on `Qt`, falling back to descent.
    Iteration,
    /// Preconditioned gradient descent on the discrete energy only.
    Descent,
}

#[derive(Debug, Clone)]
pub struct TfOptions {
    pub max_sweeps: usize,
    /// Target for `eps^2 * max |residual|`.
    pub tol: f64,
    /// Largest scaled residual accepted when the target cannot be reached.
    pub accept_tol: f64,
    pub initial_eta: Option<Vec<f64>>,
    pub method: TfMethod,
}

impl Default for TfOptions {
    fn default() -> Self {
        TfOptions { max_sweeps: 500, tol: 1e-13, accept_tol: 1e-8, initial_eta: None, method: TfMethod::Iteration }
    }
}

/// Grid samples of `eta` and `Q = |log eps| (eta^2 - 1)`.
#[derive(Debug, Clone)]
pub struct GridProfile {
    pub grid: Grid,
    pub eps: f64,
    pub eta: Vec<f64>,
    pub q: Vec<f64>,
    /// `eps^2 * max |Lap eta + eps^-2 eta (p^2 - eta^2)|`.
    pub residual: f64,
    pub sweeps: usize,
    pub used_descent: bool,
    /// `max |Q| <= 1.1 max |rho|`.
    pub bound_ok: bool,
}

impl GridProfile {
    /// The homogeneous profile `eta = 1`.
    pub fn uniform(grid: Grid, eps: f64) -> Self {
        GridProfile {
            grid,
            eps,
            eta: vec![1.0; grid.len()],
            q: vec![0.0; grid.len()],
            residual: 0.0,
            sweeps: 0,
            used_descent: false,
            bound_ok: true,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.eta.iter().all(|&e| e == 1.0)
    }

    pub fn eta_field(&self) -> ScalarField {
        ScalarField { grid: self.grid, data: self.eta.clone() }
    }

    pub fn q_field(&self) -> ScalarField {
        ScalarField { grid: self.grid, data: self.q.clone() }
    }

    pub fn eta_squared(&self) -> Vec<f64> {
        self.eta.iter().map(|e| e * e).collect()
    }
}

fn log_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParams(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(-eps.ln())
}

/// `eps^2 * (Lap eta + eps^-2 eta (p^2 - eta^2))`.
fn scaled_residual(grid: &Grid, eps: f64, p2: &[f64], eta: &[f64], out: &mut [f64]) -> f64 {
    apply_div_grad(grid, None, eta, out);
    let e2 = eps * eps;
    let mut m = 0.0f64;
    for k in 0..eta.len() {
        out[k] = e2 * out[k] + eta[k] * (p2[k] - eta[k] * eta[k]);
        m = m.max(out[k].abs());
    }
    m
}

/// Discrete energy `1/2 int |grad eta|^2 + 1/(4 eps^2) int (p^2 - eta^2)^2`.
pub fn tf_energy(grid: &Grid, eps: f64, p2: &[f64], eta: &[f64]) -> f64 {
    let pot: Vec<f64> = p2.iter().zip(eta).map(|(p, e)| (p - e * e).powi(2)).collect();
    dirichlet_energy(grid, None, eta, |v| v * v) + grid.integrate(&pot) / (4.0 * eps * eps)
}

fn squared_density(rho: &ScalarField, l: f64) -> Result<Vec<f64>> {
    let p2: Vec<f64> = rho.data.iter().map(|r| 1.0 + r / l).collect();
    if p2.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::BadParams("p^2 = 1 + rho/|log eps| must be positive and finite".into()));
    }
    Ok(p2)
}

/// Solves the Thomas-Fermi problem for the sampled density `rho`.
pub fn solve_thomas_fermi(rho: &ScalarField, eps: f64, opts: &TfOptions) -> Result<GridProfile> {
    let l = log_eps(eps)?;
    let grid = rho.grid;
    let p2 = squared_density(rho, l)?;
    let n = grid.len();
    let mut eta: Vec<f64> = match &opts.initial_eta {
        Some(e) => {
            if e.len() != n {
                return Err(Error::GeometryMismatch("initial guess has the wrong length".into()));
            }
            if e.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::BadParams("initial guess must be positive".into()));
            }
            e.clone()
        }
        None => p2.iter().map(|v| v.sqrt()).collect(),
    };
    let mut spec = NeumannSpectral::new(&grid);
    let weights = grid.node_weights();
    let mut r = vec![0.0; n];
    let mut res = scaled_residual(&grid, eps, &p2, &eta, &mut r);
    let mut sweeps = 0usize;
    let mut used_descent = opts.method == TfMethod::Descent;

    if !used_descent {
        let mut qt: Vec<f64> = eta.iter().map(|e| l * (e - 1.0)).collect();
        let mut theta = 0.5f64;
        let mut halvings = 0usize;
        let mut delta = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial_eta = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        let e2h = 0.5 * eps * eps;
        while res > opts.tol && sweeps < opts.max_sweeps {
            sweeps += 1;
            // Newton correction for the Qt equation: (c - eps^2/2 Lap) d = eps^2 L/2 r / eps^2.
            let c: Vec<f64> = eta.iter().zip(&p2).map(|(e, p)| 0.5 * (3.0 * e * e - p)).collect();
            let cmin = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let c: Vec<f64> = if cmin > 0.0 { c } else { p2.iter().map(|p| 0.5 * (3.0 - p).max(0.5)).collect() };
            let cbar = c.iter().sum::<f64>() / n as f64;
            let rhs: Vec<f64> = r.iter().map(|v| 0.5 * l * v).collect();
            delta.iter_mut().for_each(|d| *d = 0.0);
            let op = |u: &[f64], out: &mut [f64]| {
                apply_div_grad(&grid, None, u, out);
                for k in 0..u.len() {
                    out[k] = c[k] * u[k] - e2h * out[k];
                }
            };
            pcg_real(
                op,
                |v, z| {
                    z.copy_from_slice(v);
                    spec.solve_shifted_real(z, cbar, e2h);
                },
                &rhs,
                &mut delta,
                &weights,
                KrylovOptions { tol: 1e-14, max_iter: 400 },
            )?;
            loop {
                for k in 0..n {
                    trial[k] = qt[k] + theta * delta[k];
                    trial_eta[k] = 1.0 + trial[k] / l;
                }
                let positive = trial_eta.iter().all(|e| *e > 0.0);
                let trial_res = if positive { scaled_residual(&grid, eps, &p2, &trial_eta, &mut r_trial) } else { f64::INFINITY };
                if positive && trial_res < res {
                    std::mem::swap(&mut qt, &mut trial);
                    std::mem::swap(&mut eta, &mut trial_eta);
                    std::mem::swap(&mut r, &mut r_trial);
                    res = trial_res;
                    theta = (2.0 * theta).min(1.0);
                    halvings = 0;
                    break;
                }
                theta *= 0.5;
                halvings += 1;
                if halvings > 10 {
                    break;
                }
            }
            if halvings > 10 {
                if !trial_eta.iter().all(|e| *e > 0.0) && res > opts.accept_tol {
                    return Err(Error::NonPositiveDensity);
                }
                break;
            }
        }
        if res > opts.accept_tol {
            used_descent = true;
        }
    }

    if used_descent {
        let (e, extra) = descend(&grid, eps, &p2, eta, opts, &mut spec)?;
        eta = e;
        sweeps += extra;
        res = scaled_residual(&grid, eps, &p2, &eta, &mut r);
    }
    if res > opts.accept_tol {
        return Err(Error::NoConvergence { iterations: sweeps, residual: res });
    }
    let q: Vec<f64> = eta.iter().map(|e| l * (e * e - 1.0)).collect();
    let rho_max = rho.max_abs();
    let bound_ok = q.iter().all(|v| v.abs() <= 1.1 * rho_max + 1e-12);
    Ok(GridProfile { grid, eps, eta, q, residual: res, sweeps, used_descent, bound_ok })
}

/// Preconditioned gradient descent with Armijo backtracking on the energy.
fn descend(grid: &Grid, eps: f64, p2: &[f64], mut eta: Vec<f64>, opts: &TfOptions, spec: &mut NeumannSpectral) -> Result<(Vec<f64>, usize)> {
    let n = grid.len();
    let e2 = eps * eps;
    let pmax = p2.iter().cloned().fold(0.0, f64::max);
    let mut r = vec![0.0; n];
    let mut energy = tf_energy(grid, eps, p2, &eta);
    let mut step: f64 = 1.0;
    for sweep in 0..opts.max_sweeps.max(1) * 20 {
        let res = scaled_residual(grid, eps, p2, &eta, &mut r);
        if res <= opts.tol {
            return Ok((eta, sweep));
        }
        // Descent direction: (2 pmax - eps^2 Lap)^{-1} applied to minus the gradient.
        let mut dir = r.clone();
        spec.solve_shifted_real(&mut dir, 2.0 * pmax, e2);
        let weights = grid.node_weights();
        let slope: f64 = -(0..n).map(|k| weights[k] * r[k] * dir[k]).sum::<f64>() * grid.cell_area() / e2;
        let mut accepted = false;
        step = (step * 2.0).min(1.0);
        for _ in 0..40 {
            let trial: Vec<f64> = eta.iter().zip(&dir).map(|(e, d)| e + step * d).collect();
            if trial.iter().all(|v| *v > 0.0) {
                let e_trial = tf_energy(grid, eps, p2, &trial);
                if e_trial <= energy + 1e-4 * step * slope {
                    eta = trial;
                    energy = e_trial;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok((eta, sweep));
        }
    }
    Ok((eta, opts.max_sweeps * 20))
}

/// Samples `rho0` on `grid` and solves the profile for it.
pub fn profile_for_potential(potential: &AnalyticPotential, grid: Grid, eps: f64, opts: &TfOptions) -> Result<GridProfile> {
    if potential.is_zero() {
        log_eps(eps)?;
        return Ok(GridProfile::uniform(grid, eps));
    }
    solve_thomas_fermi(&potential.sample(grid), eps, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfRow {
    pub eps: f64,
    pub sup_error: f64,
    pub h1_error: f64,
    pub sup_order: Option<f64>,
    pub h1_order: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfReport {
    pub rows: Vec<TfRow>,
    /// Every error vanished to rounding.
    pub exact: bool,
}

/// Convergence of `Q_eps` to `rho0` as `eps` decreases, with observed orders
/// `log(e_i / e_{i+1}) / log(eps_i / eps_{i+1})`.
pub fn tf_convergence_report(eps_list: &[f64], rho0: &AnalyticPotential, grid: Grid) -> Result<TfReport> {
    tf_convergence_report_sampled(eps_list, &rho0.sample(grid))
}

/// As [`tf_convergence_report`] for grid samples of `rho0`.
pub fn tf_convergence_report_sampled(eps_list: &[f64], rho: &ScalarField) -> Result<TfReport> {
    let grid = rho.grid;
    if eps_list.len() < 3 {
        return Err(Error::BadParams("need at least three eps values".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::BadParams("eps values must decrease".into()));
    }
    let eps_min = *eps_list.last().unwrap();
    if grid.h() > eps_min / 4.0 * (1.0 + 1e-9) {
        return Err(Error::ResolutionTooCoarse(format!("h = {} exceeds eps/4 = {}", grid.h(), eps_min / 4.0)));
    }
    let scale = rho.max_abs().max(1.0);
    let mut rows: Vec<TfRow> = Vec::new();
    for &eps in eps_list {
        let prof = solve_thomas_fermi(rho, eps, &TfOptions::default())?;
        let diff: Vec<f64> = prof.q.iter().zip(&rho.data).map(|(q, r)| q - r).collect();
        let sup = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h1 = (2.0 * dirichlet_energy(&grid, None, &diff, |v| v * v)).sqrt();
        rows.push(TfRow { eps, sup_error: sup, h1_error: h1, sup_order: None, h1_order: None });
    }
    let exact = rows.iter().all(|r| r.sup_error <= 1e-12 * scale);
    if !exact {
        for i in 1..rows.len() {
            let ratio = (rows[i - 1].eps / rows[i].eps).ln();
            let order = |a: f64, b: f64| if a > 0.0 && b > 0.0 { Some((a / b).ln() / ratio) } else { None };
            rows[i].sup_order = order(rows[i - 1].sup_error, rows[i].sup_error);
            rows[i].h1_order = order(rows[i - 1].h1_error, rows[i].h1_error);
        }
    }
    Ok(TfReport { rows, exact })
}
