//! Field-level solver for the weighted Gross-Pitaevskii equation and its
//! gradient flow on a node grid with Neumann data.
//!
//! The state is `w = u / eta`. The discrete energy is
//! `1/2 sum_edges c_e |dw|^2 + sum_nodes eta^4 (1 - |w|^2)^2 / (4 eps^2)`
//! with edge coefficient `c_e = (eta_i^2 + eta_j^2) / 2` and trapezoid
//! weights. Its first variation gives the operator `D = div(eta^2 grad)`
//! used by both steppers, so the discrete mass, energy and dissipation
//! identities hold for exactly this energy.
//!
//! The Hamiltonian step is Crank-Nicolson with the nonlinear potential
//! treated by predictor-corrector passes; each pass is a COCG solve
//! preconditioned by cosine transforms.
//!
//! Time runs in the direction in which a vortex dipole translates as the
//! reduced point-vortex law predicts; see [`HAMILTONIAN_SIGN`].
//!
//! The gradient flow uses a linearly implicit scheme with a stabilizing
//! term `S eta^4 / eps^2 (w1 - w0)`, which dissipates the discrete energy
//! while `|w| <= 1`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::background::{AnalyticPotential, GridProfile};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{apply_div_grad, dirichlet_energy, gradient, header_bytes, parse_header, read_file, write_file, Grid, COMPLEX_MAGIC};
use crate::linalg::{cg_complex, KrylovOptions, NeumannSpectral};
use crate::renormalized_energy::interaction_hamiltonian;
use crate::vortex_config::{Domain, VortexConfig};
use crate::vortex_tracking::jacobian_values;

/// Sign `s` in `i eta^2 dw/dt = s [div(eta^2 grad w) + eta^4/eps^2 (1 - |w|^2) w]`.
pub const HAMILTONIAN_SIGN: f64 = -1.0;

/// Complex samples of `w` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: Grid,
    pub data: Vec<Complex64>,
    pub t: f64,
}

impl ComplexField {
    pub fn new(grid: Grid, data: Vec<Complex64>, t: f64) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GeometryMismatch(format!("{} values for a {} node grid", data.len(), grid.len())));
        }
        Ok(ComplexField { grid, data, t })
    }

    pub fn ones(grid: Grid) -> Self {
        ComplexField { grid, data: vec![Complex64::new(1.0, 0.0); grid.len()], t: 0.0 }
    }

    pub fn sample(grid: Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.x(i), grid.y(j)));
            }
        }
        ComplexField { grid, data, t: 0.0 }
    }

    pub fn max_modulus(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Binary `VLCPLX1` file: grid header then interleaved `(re, im)`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = header_bytes(COMPLEX_MAGIC, &self.grid);
        buf.reserve(self.data.len() * 16);
        for v in &self.data {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        write_file(path, &buf)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let (grid, body) = parse_header(COMPLEX_MAGIC, &bytes)?;
        if body.len() != grid.len() * 16 {
            return Err(Error::Parse(format!("expected {} payload bytes, found {}", grid.len() * 16, body.len())));
        }
        let data = body
            .chunks_exact(16)
            .map(|c| Complex64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
            .collect();
        ComplexField::new(grid, data, 0.0)
    }

    /// CSV with columns `x,y,modulus,phase`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("x,y,modulus,phase\n");
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let v = self.data[self.grid.idx(i, j)];
                s.push_str(&format!("{:.12e},{:.12e},{:.15e},{:.15e}\n", self.grid.x(i), self.grid.y(j), v.norm(), v.arg()));
            }
        }
        write_file(path, s.as_bytes())
    }
}

/// Radial profile `f` of the degree-one vortex and its core energy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoreProfile {
    pub r_max: f64,
    pub h: f64,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub gamma0: f64,
}

/// `1 - 1/(2 r^2) - 9/(8 r^4)`, the large-`r` expansion of `f`.
pub fn core_tail(r: f64) -> f64 {
    let r2 = r * r;
    1.0 - 0.5 / r2 - 1.125 / (r2 * r2)
}

impl CoreProfile {
    /// `f(s)` by cubic Hermite interpolation, the tail expansion beyond `r_max`.
    pub fn eval(&self, s: f64) -> f64 {
        if s >= self.r_max {
            return core_tail(s);
        }
        let x = s / self.h;
        let i = (x.floor() as usize).min(self.f.len() - 2);
        let t = x - i as f64;
        let (h00, h10, h01, h11) = ((1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t), t * (1.0 - t) * (1.0 - t), t * t * (3.0 - 2.0 * t), t * t * (t - 1.0));
        h00 * self.f[i] + h10 * self.h * self.df[i] + h01 * self.f[i + 1] + h11 * self.h * self.df[i + 1]
    }

    /// `2 pi int_0^R [1/2 (f'^2 + f^2/r^2) + 1/4 (1 - f^2)^2] r dr - pi log R`,
    /// midpoint rule on the sample cells.
    pub fn truncated_core_energy(&self, r: f64) -> f64 {
        let cells = ((r / self.h).round() as usize).min(self.f.len() - 1);
        let mut e = 0.0;
        for i in 0..cells {
            let rm = (i as f64 + 0.5) * self.h;
            let fm = 0.5 * (self.f[i] + self.f[i + 1]);
            let dfm = (self.f[i + 1] - self.f[i]) / self.h;
            let dens = 0.5 * (dfm * dfm + fm * fm / (rm * rm)) + 0.25 * (1.0 - fm * fm).powi(2);
            e += dens * rm * self.h;
        }
        2.0 * PI * e - PI * (cells as f64 * self.h).ln()
    }
}

fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    c[0] = sup[0] / d;
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - sub[i] * c[i - 1];
        if i + 1 < n {
            c[i] = sup[i] / d;
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Solves `f'' + f'/r - f/r^2 + (1 - f^2) f = 0`, `f(0) = 0`, with the tail
/// expansion imposed at `r_max`, by Newton iteration on centered differences.
pub fn radial_core_profile(r_max: f64, n_samples: usize) -> Result<CoreProfile> {
    if !(r_max >= 20.0 && r_max.is_finite()) || n_samples < 2000 {
        return Err(Error::BadParams("need r_max >= 20 and at least 2000 samples".into()));
    }
    let n = n_samples;
    let h = r_max / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let mut f: Vec<f64> = r.iter().map(|&x| x / (x * x + 2.0).sqrt()).collect();
    f[n - 1] = core_tail(r_max);
    let m = n - 2;
    let (mut sub, mut diag, mut sup, mut res) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut converged = false;
    for _ in 0..100 {
        for k in 0..m {
            let i = k + 1;
            let (ri, fi) = (r[i], f[i]);
            let a = 1.0 / (h * h);
            let b = 1.0 / (2.0 * h * ri);
            res[k] = -(a * (f[i + 1] - 2.0 * fi + f[i - 1]) + b * (f[i + 1] - f[i - 1]) - fi / (ri * ri) + (1.0 - fi * fi) * fi);
            sub[k] = a - b;
            diag[k] = -2.0 * a - 1.0 / (ri * ri) + 1.0 - 3.0 * fi * fi;
            sup[k] = a + b;
        }
        solve_tridiagonal(&sub, &diag, &sup, &mut res);
        let step = res.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for k in 0..m {
            f[k + 1] += res[k];
        }
        if step < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: 100, residual: f64::NAN });
    }
    let mut df = vec![0.0; n];
    df[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    for i in 1..n - 1 {
        df[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    df[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    let mut prof = CoreProfile { r_max, h, f, df, gamma0: 0.0 };
    let g1 = prof.truncated_core_energy(0.5 * r_max);
    let g2 = prof.truncated_core_energy(r_max);
    prof.gamma0 = (4.0 * g2 - g1) / 3.0;
    Ok(prof)
}

/// Well-prepared product ansatz `prod_j f(|x - a_j| / eps) ((z - a_j)/|z - a_j|)^{d_j}`.
pub fn build_initial_data(config: &VortexConfig, eps: f64, profile: &CoreProfile, eta: &GridProfile) -> Result<ComplexField> {
    let grid = eta.grid;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParams(format!("eps must lie in (0, 1), got {eps}")));
    }
    if grid.h() > 0.25 * eps * (1.0 + 1e-9) {
        return Err(Error::ResolutionTooCoarse(format!("h = {} exceeds eps/4 = {}", grid.h(), eps / 4.0)));
    }
    for i in 0..config.len() {
        for j in i + 1..config.len() {
            if config.positions[i].dist(config.positions[j]) < 16.0 * grid.h() {
                return Err(Error::ResolutionTooCoarse(format!("vortices {i} and {j} closer than 16 h")));
            }
        }
    }
    let box_domain = Domain::Rectangle { xmin: grid.x0, xmax: grid.xmax(), ymin: grid.y0, ymax: grid.ymax() };
    config.validate_in(&box_domain)?;
    let mut field = ComplexField::ones(grid);
    for (a, &d) in config.positions.iter().zip(&config.degrees) {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let z = Complex64::new(grid.x(i) - a.x, grid.y(j) - a.y);
                let r = z.norm();
                let k = grid.idx(i, j);
                if r == 0.0 {
                    field.data[k] = Complex64::default();
                    continue;
                }
                let unit = if d > 0 { z / r } else { z.conj() / r };
                field.data[k] *= unit * profile.eval(r / eps);
            }
        }
    }
    Ok(field)
}

/// Discrete weighted energy `E^eta_eps(w)`.
pub fn weighted_energy(w: &[Complex64], eta: &GridProfile) -> f64 {
    let eta2 = eta.eta_squared();
    let grid = &eta.grid;
    let grad = dirichlet_energy(grid, Some(&eta2), w, |v| v.norm_sqr());
    let pot: Vec<f64> = w.iter().zip(&eta2).map(|(v, e2)| e2 * e2 * (1.0 - v.norm_sqr()).powi(2)).collect();
    grad + grid.integrate(&pot) / (4.0 * eta.eps * eta.eps)
}

/// Unweighted energy `E_eps(u) = 1/2 int |grad u|^2 + 1/(4 eps^2) int (p^2 - |u|^2)^2`
/// with `p^2 = 1 + rho / |log eps|`.
pub fn gl_energy(u: &[Complex64], rho: &[f64], grid: &Grid, eps: f64) -> f64 {
    let l = -eps.ln();
    let grad = dirichlet_energy(grid, None, u, |v| v.norm_sqr());
    let pot: Vec<f64> = u.iter().zip(rho).map(|(v, r)| (1.0 + r / l - v.norm_sqr()).powi(2)).collect();
    grad + grid.integrate(&pot) / (4.0 * eps * eps)
}

/// Weighted mass `int eta^2 (|w|^2 - 1)`.
pub fn weighted_mass(w: &[Complex64], eta: &GridProfile) -> f64 {
    let v: Vec<f64> = w.iter().zip(&eta.eta).map(|(z, e)| e * e * (z.norm_sqr() - 1.0)).collect();
    eta.grid.integrate(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Schrodinger,
    GradientFlow,
}

#[derive(Debug, Clone, Copy)]
pub struct StepperOptions {
    /// `dt <= dt_safety * eps^2`.
    pub dt_safety: f64,
    pub linear_tol: f64,
    pub max_linear_iter: usize,
    /// Stabilization constant of the gradient-flow scheme.
    pub stabilization: f64,
    pub blowup_modulus: f64,
    /// Tolerance on the max nodal update of the Hamiltonian step.
    pub nonlinear_tol: f64,
}

impl Default for StepperOptions {
    fn default() -> Self {
        StepperOptions { dt_safety: 0.5, linear_tol: 1e-13, max_linear_iter: 300, stabilization: 1.0, blowup_modulus: 10.0, nonlinear_tol: 1e-12 }
    }
}

const ANDERSON_DEPTH: usize = 5;

/// Anderson mixing for `x <- x - z(x)`, with `z` the preconditioned residual.
struct Anderson {
    depth: usize,
    prev_x: Vec<Complex64>,
    prev_z: Vec<Complex64>,
    dx: Vec<Vec<Complex64>>,
    dz: Vec<Vec<Complex64>>,
    started: bool,
}

impl Anderson {
    fn new(depth: usize, n: usize) -> Self {
        Anderson { depth, prev_x: vec![Complex64::default(); n], prev_z: vec![Complex64::default(); n], dx: Vec::new(), dz: Vec::new(), started: false }
    }

    fn mix(&mut self, x: &mut [Complex64], z: &[Complex64]) {
        let n = x.len();
        if self.started {
            if self.dx.len() == self.depth {
                self.dx.remove(0);
                self.dz.remove(0);
            }
            self.dx.push((0..n).map(|k| x[k] - self.prev_x[k]).collect());
            self.dz.push((0..n).map(|k| z[k] - self.prev_z[k]).collect());
        }
        self.started = true;
        self.prev_x.copy_from_slice(x);
        self.prev_z.copy_from_slice(z);
        let m = self.dz.len();
        let mut gamma = vec![0.0; m];
        if m > 0 {
            let dot = |a: &[Complex64], b: &[Complex64]| -> f64 { a.iter().zip(b).map(|(p, q)| p.re * q.re + p.im * q.im).sum() };
            let mut a = vec![0.0; m * m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                for j in 0..=i {
                    let v = dot(&self.dz[i], &self.dz[j]);
                    a[i * m + j] = v;
                    a[j * m + i] = v;
                }
                rhs[i] = dot(&self.dz[i], z);
            }
            let scale = (0..m).map(|i| a[i * m + i]).fold(0.0f64, f64::max);
            for i in 0..m {
                a[i * m + i] += 1e-12 * scale;
            }
            if !solve_dense(&mut a, &mut rhs, m) {
                self.dx.clear();
                self.dz.clear();
            } else {
                gamma = rhs;
            }
        }
        // x_new = (x - z) - sum gamma_i (dx_i - dz_i)
        for k in 0..n {
            let mut v = x[k] - z[k];
            for (i, g) in gamma.iter().enumerate() {
                v -= (self.dx[i][k] - self.dz[i][k]) * *g;
            }
            x[k] = v;
        }
    }
}

/// Gaussian elimination with partial pivoting; `false` if singular.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i * m + c].abs().partial_cmp(&a[j * m + c].abs()).unwrap()).unwrap();
        if a[p * m + c].abs() < 1e-300 {
            return false;
        }
        if p != c {
            for j in 0..m {
                a.swap(p * m + j, c * m + j);
            }
            b.swap(p, c);
        }
        for i in c + 1..m {
            let f = a[i * m + c] / a[c * m + c];
            for j in c..m {
                a[i * m + j] -= f * a[c * m + j];
            }
            b[i] -= f * b[c];
        }
    }
    for c in (0..m).rev() {
        let mut v = b[c];
        for j in c + 1..m {
            v -= a[c * m + j] * b[j];
        }
        b[c] = v / a[c * m + c];
    }
    true
}

/// Reusable time stepper for one background and step size.
pub struct GpStepper {
    pub kind: FlowKind,
    pub dt: f64,
    grid: Grid,
    eps: f64,
    eta2: Vec<f64>,
    weights: Vec<f64>,
    spectral: NeumannSpectral,
    opts: StepperOptions,
    /// Krylov iterations (gradient flow) or preconditioned sweeps
    /// (Hamiltonian step) of the last step.
    pub last_iterations: usize,
    /// Output time and input state of the last Hamiltonian step.
    history: Option<(f64, Vec<Complex64>)>,
}

impl GpStepper {
    pub fn new(eta: &GridProfile, kind: FlowKind, dt: f64, opts: StepperOptions) -> Result<Self> {
        let eps = eta.eps;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::BadParams(format!("time step must be positive, got {dt}")));
        }
        if dt > opts.dt_safety * eps * eps * (1.0 + 1e-12) {
            return Err(Error::BadParams(format!("dt = {dt} exceeds {} eps^2 = {}", opts.dt_safety, opts.dt_safety * eps * eps)));
        }
        if eta.eta.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::NonPositiveDensity);
        }
        Ok(GpStepper {
            kind,
            dt,
            grid: eta.grid,
            eps,
            eta2: eta.eta_squared(),
            weights: eta.grid.node_weights(),
            spectral: NeumannSpectral::new(&eta.grid),
            opts,
            last_iterations: 0,
            history: None,
        })
    }

    pub fn step(&mut self, field: &ComplexField) -> Result<ComplexField> {
        let mut out = field.clone();
        self.step_in_place(&mut out)?;
        Ok(out)
    }

    pub fn step_in_place(&mut self, field: &mut ComplexField) -> Result<()> {
        self.grid.check_same(&field.grid)?;
        match self.kind {
            FlowKind::Schrodinger => self.schrodinger(&mut field.data, field.t)?,
            FlowKind::GradientFlow => self.gradient_flow(&mut field.data)?,
        }
        field.t += self.dt;
        let max_modulus = field.max_modulus();
        if !(max_modulus <= self.opts.blowup_modulus) {
            return Err(Error::BlowupDetected { t: field.t, max_modulus });
        }
        Ok(())
    }

    /// Crank-Nicolson with the potential `V = eta^4/eps^2 (1 - |w|^2)` taken as
    /// the average of its values at both ends of the step. The nonlinear system
    /// `R(w1) = eta^2 (w1 - w0) + i s (D + Vbar)(w1 + w0) = 0` is solved by a
    /// fixed-point iteration preconditioned with the constant-coefficient
    /// operator and accelerated by Anderson mixing. The solution conserves the
    /// weighted mass and the discrete energy.
    fn schrodinger(&mut self, w: &mut [Complex64], t_in: f64) -> Result<()> {
        let n = w.len();
        let inv_e2 = 1.0 / (self.eps * self.eps);
        let s = HAMILTONIAN_SIGN * 0.5 * self.dt;
        let i_s = Complex64::new(0.0, s);
        let w0 = w.to_vec();
        let v0: Vec<f64> = w0.iter().zip(&self.eta2).map(|(z, e)| e * e * inv_e2 * (1.0 - z.norm_sqr())).collect();
        let mut dw0 = vec![Complex64::default(); n];
        apply_div_grad(&self.grid, Some(&self.eta2), &w0, &mut dw0);
        if let Some((t_prev, prev)) = &self.history {
            if *t_prev == t_in {
                for k in 0..n {
                    w[k] = w0[k] * 2.0 - prev[k];
                }
            }
        }
        let mean_e2 = self.eta2.iter().sum::<f64>() / n as f64;
        let mut mixer = Anderson::new(ANDERSON_DEPTH, n);
        let mut dw1 = vec![Complex64::default(); n];
        let mut z = vec![Complex64::default(); n];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.opts.max_linear_iter {
            iterations += 1;
            apply_div_grad(&self.grid, Some(&self.eta2), w, &mut dw1);
            for k in 0..n {
                let e2 = self.eta2[k];
                let vbar = 0.5 * (v0[k] + e2 * e2 * inv_e2 * (1.0 - w[k].norm_sqr()));
                z[k] = (w[k] - w0[k]) * e2 + i_s * (dw1[k] + dw0[k] + (w[k] + w0[k]) * vbar);
            }
            self.spectral.solve_shifted(&mut z, Complex64::new(mean_e2, 0.0), -i_s * mean_e2);
            let update = z.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            if !update.is_finite() {
                break;
            }
            if update <= self.opts.nonlinear_tol {
                for k in 0..n {
                    w[k] -= z[k];
                }
                converged = true;
                break;
            }
            mixer.mix(w, &z);
        }
        self.last_iterations = iterations;
        self.history = Some((t_in + self.dt, w0));
        if !converged {
            return Err(Error::LinearSolveFailure(format!("Crank-Nicolson iteration did not converge in {iterations} sweeps")));
        }
        Ok(())
    }

    fn gradient_flow(&mut self, w: &mut [Complex64]) -> Result<()> {
        let n = w.len();
        let l = -self.eps.ln();
        let inv_e2 = 1.0 / (self.eps * self.eps);
        let sdamp = self.opts.stabilization;
        let diag: Vec<f64> = self.eta2.iter().map(|e2| e2 / (l * self.dt) + sdamp * e2 * e2 * inv_e2).collect();
        let rhs: Vec<Complex64> = (0..n)
            .map(|k| w[k] * diag[k] + w[k] * (self.eta2[k] * self.eta2[k] * inv_e2 * (1.0 - w[k].norm_sqr())))
            .collect();
        if self.eta2.iter().all(|&e| e == 1.0) {
            let mut x = rhs;
            self.spectral.solve_shifted(&mut x, Complex64::new(diag[0], 0.0), Complex64::new(1.0, 0.0));
            w.copy_from_slice(&x);
            self.last_iterations = 0;
            return Ok(());
        }
        let mean_diag = diag.iter().sum::<f64>() / n as f64;
        let mean_e2 = self.eta2.iter().sum::<f64>() / n as f64;
        let (grid, eta2, spectral) = (&self.grid, &self.eta2, &mut self.spectral);
        let apply = |u: &[Complex64], out: &mut [Complex64]| {
            apply_div_grad(grid, Some(eta2), u, out);
            for k in 0..u.len() {
                out[k] = u[k] * diag[k] - out[k];
            }
        };
        let precond = |r: &[Complex64], z: &mut [Complex64]| {
            z.copy_from_slice(r);
            spectral.solve_shifted(z, Complex64::new(mean_diag, 0.0), Complex64::new(mean_e2, 0.0));
        };
        let stats = cg_complex(
            apply,
            precond,
            &rhs,
            w,
            &self.weights,
            true,
            KrylovOptions { tol: self.opts.linear_tol.max(1e-13), max_iter: self.opts.max_linear_iter },
        )?;
        self.last_iterations = stats.iterations;
        Ok(())
    }
}

fn check_eps(eta: &GridProfile, eps: f64) -> Result<()> {
    if (eta.eps - eps).abs() > 1e-14 * eps {
        return Err(Error::BadParams(format!("profile was built for eps = {}, got {eps}", eta.eps)));
    }
    Ok(())
}

/// One Hamiltonian step; builds a fresh stepper (use [`GpStepper`] for runs).
pub fn step_schrodinger(field: &ComplexField, eta: &GridProfile, eps: f64, dt: f64) -> Result<ComplexField> {
    check_eps(eta, eps)?;
    GpStepper::new(eta, FlowKind::Schrodinger, dt, StepperOptions::default())?.step(field)
}

/// One gradient-flow step; builds a fresh stepper (use [`GpStepper`] for runs).
pub fn step_gradient_flow(field: &ComplexField, eta: &GridProfile, eps: f64, dt: f64) -> Result<ComplexField> {
    check_eps(eta, eps)?;
    GpStepper::new(eta, FlowKind::GradientFlow, dt, StepperOptions::default())?.step(field)
}

/// Reference data for the excess energy.
#[derive(Debug, Clone)]
pub struct EnergyReference {
    pub config: VortexConfig,
    pub potential: AnalyticPotential,
    pub domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    /// `total - H_eps(reference)` when a reference is supplied.
    pub excess: Option<f64>,
    pub mass_residual: f64,
    /// Change of `total` since the previous report of a run.
    pub energy_delta: Option<f64>,
}

/// Energy, excess energy and weighted mass of `field`.
pub fn energy_report(field: &ComplexField, eta: &GridProfile, reference: Option<&EnergyReference>, gamma0: f64) -> Result<EnergyReport> {
    field.grid.check_same(&eta.grid)?;
    let total = weighted_energy(&field.data, eta);
    let excess = match reference {
        Some(r) if r.config.is_empty() => Some(total),
        Some(r) => Some(total - interaction_hamiltonian(&r.config, &r.domain, &r.potential, eta.eps, gamma0)?.h_eps),
        None => None,
    };
    Ok(EnergyReport { total, excess, mass_residual: weighted_mass(&field.data, eta), energy_delta: None })
}

/// Discrete residual of the weak Jacobian evolution law tested against `phi`:
/// the difference quotient of `int phi J(w)` minus the time-averaged
/// right-hand side, maximized over consecutive pairs of fields.
pub fn jacobian_flux_residual(fields: &[ComplexField], eta: &GridProfile, phi: &crate::grid::ScalarField) -> Result<f64> {
    if fields.len() < 2 {
        return Err(Error::BadParams("need at least two fields".into()));
    }
    for f in fields {
        f.grid.check_same(&eta.grid)?;
    }
    phi.grid.check_same(&eta.grid)?;
    let grid = eta.grid;
    let (px, py) = gradient(&grid, &phi.data);
    let (pxx, pxy) = gradient(&grid, &px);
    let (_, pyy) = gradient(&grid, &py);
    let eta2 = eta.eta_squared();
    let (ex, ey) = gradient(&grid, &eta2);
    let inv4e2 = 1.0 / (4.0 * eta.eps * eta.eps);
    let lhs = |w: &[Complex64]| -> f64 {
        let j = jacobian_values(&grid, w);
        let v: Vec<f64> = j.iter().zip(&phi.data).map(|(a, b)| a * b).collect();
        grid.integrate(&v)
    };
    let rhs = |w: &[Complex64]| -> f64 {
        let (wx, wy) = gradient(&grid, w);
        let pair = |a: Complex64, b: Complex64| (a * b.conj()).re;
        let mut v = vec![0.0; w.len()];
        for k in 0..w.len() {
            let (a, b) = (wx[k], wy[k]);
            let t1 = (pxx[k] - pyy[k]) * pair(a, b) + pxy[k] * (pair(b, b) - pair(a, a));
            let gx = ex[k] / eta2[k];
            let gy = ey[k] / eta2[k];
            let pot = (1.0 - w[k].norm_sqr()).powi(2) * inv4e2;
            let b1 = gx * pair(a, a) + gy * pair(a, b) + ex[k] * pot;
            let b2 = gx * pair(b, a) + gy * pair(b, b) + ey[k] * pot;
            let t2 = -(px[k] * b2 - py[k] * b1);
            v[k] = t1 + t2;
        }
        HAMILTONIAN_SIGN * grid.integrate(&v)
    };
    let mut worst = 0.0f64;
    let mut prev_l = lhs(&fields[0].data);
    let mut prev_r = rhs(&fields[0].data);
    for pair in fields.windows(2) {
        let dt = pair[1].t - pair[0].t;
        if !(dt > 0.0) {
            return Err(Error::BadParams("field times must increase".into()));
        }
        let l = lhs(&pair[1].data);
        let r = rhs(&pair[1].data);
        worst = worst.max(((l - prev_l) / dt - 0.5 * (r + prev_r)).abs());
        prev_l = l;
        prev_r = r;
    }
    Ok(worst)
}

/// Position-independent helper: sample `phi(x) = x_m chi(|x - c|)` style
/// test functions on a grid.
pub fn sample_test_function(grid: Grid, f: impl Fn(Vec2) -> f64) -> crate::grid::ScalarField {
    crate::grid::ScalarField::sample(grid, |x, y| f(Vec2::new(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_profile_shape() {
        let p = radial_core_profile(20.0, 2001).unwrap();
        assert_eq!(p.f[0], 0.0);
        assert!(p.f.windows(2).all(|w| w[1] > w[0]));
        assert!((p.eval(10.0) - 0.995).abs() < 1e-3);
        assert!((p.eval(20.0) - core_tail(20.0)).abs() < 1e-12);
        assert!(radial_core_profile(10.0, 4000).is_err());
        assert!(radial_core_profile(20.0, 100).is_err());
    }

    #[test]
    fn empty_config_gives_unit_field() {
        let g = Grid::covering(-1.0, 1.0, -1.0, 1.0, 41, 41).unwrap();
        let eta = GridProfile::uniform(g, 0.2);
        let p = radial_core_profile(20.0, 2001).unwrap();
        let w = build_initial_data(&VortexConfig::new(vec![], vec![]).unwrap(), 0.2, &p, &eta).unwrap();
        assert!(w.data.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let c = VortexConfig::from_tuples(&[(0.0, 0.0, 1)]).unwrap();
        assert!(matches!(build_initial_data(&c, 0.1, &p, &eta), Err(Error::ResolutionTooCoarse(_))));
    }

    #[test]
    fn unit_field_is_stationary() {
        let g = Grid::covering(-1.0, 1.0, -1.0, 1.0, 33, 33).unwrap();
        let eta = GridProfile::uniform(g, 0.2);
        let w = ComplexField::ones(g);
        let a = step_schrodinger(&w, &eta, 0.2, 0.01).unwrap();
        let b = step_gradient_flow(&w, &eta, 0.2, 0.01).unwrap();
        for k in 0..g.len() {
            assert!((a.data[k] - 1.0).norm() < 1e-14);
            assert!((b.data[k] - 1.0).norm() < 1e-14);
        }
        assert!(matches!(step_schrodinger(&w, &eta, 0.2, 0.05), Err(Error::BadParams(_))));
    }

    #[test]
    fn complex_binary_roundtrip() {
        let g = Grid::covering(0.0, 1.0, 0.0, 2.0, 5, 7).unwrap();
        let f = ComplexField::sample(g, |x, y| Complex64::new(x, -y));
        let dir = std::env::temp_dir().join(format!("vlcplx-{}", std::process::id()));
        let p = dir.join("w.bin");
        f.write_binary(&p).unwrap();
        assert_eq!(ComplexField::read_binary(&p).unwrap(), f);
        std::fs::remove_dir_all(dir).ok();
    }
}
