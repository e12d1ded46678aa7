//! Reduced point-vortex dynamics driven by `H0`.
//!
//! Three laws are supported: the Hamiltonian flow
//! `pi d_k a_k' = grad_perp H0`, the gradient flow `pi a_k' = -grad H0`, and
//! the mixed law `pi a_k' - pi d_k (e3 x a_k') = -grad H0`. Integration uses
//! Dormand-Prince 5(4) with step-size control and stops at a collision,
//! i.e. when the separation radius drops below a fraction of its initial
//! value.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::background::AnalyticPotential;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::renormalized_energy::{grad_w_unchecked, h0_unchecked};
use crate::vortex_config::{separation_radius_of, Domain, VortexConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    Schrodinger,
    GradientFlow,
    Mixed,
}

impl std::str::FromStr for DynamicsKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "schrodinger" => Ok(DynamicsKind::Schrodinger),
            "gradient_flow" => Ok(DynamicsKind::GradientFlow),
            "mixed" => Ok(DynamicsKind::Mixed),
            other => Err(Error::BadParams(format!("unknown dynamics `{other}`"))),
        }
    }
}

/// Velocity of vortex `k` given `grad_{alpha_k} H0`.
pub fn velocity_from_gradient(grad: Vec2, degree: i32, kind: DynamicsKind) -> Vec2 {
    let d = degree as f64;
    match kind {
        DynamicsKind::Schrodinger => Vec2::new(grad.y, -grad.x) * (1.0 / (PI * d)),
        DynamicsKind::GradientFlow => grad * (-1.0 / PI),
        DynamicsKind::Mixed => (grad + grad.perp() * d) * (-1.0 / (2.0 * PI)),
    }
}

fn velocities_unchecked(pos: &[Vec2], deg: &[i32], domain: &Domain, q0: &AnalyticPotential, kind: DynamicsKind, out: &mut [Vec2]) -> Result<()> {
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            if pos[i] == pos[j] {
                return Err(Error::CoincidentVortices(i, j));
            }
        }
    }
    for k in 0..pos.len() {
        let g = grad_w_unchecked(pos, deg, domain, k) + q0.gradient(pos[k]) * PI;
        out[k] = velocity_from_gradient(g, deg[k], kind);
        if !out[k].is_finite() {
            return Err(Error::SolverFailure(format!("non-finite velocity for vortex {k}")));
        }
    }
    Ok(())
}

fn check_domain(config: &VortexConfig, domain: &Domain) -> Result<()> {
    domain.validate()?;
    if domain.is_bounded() {
        config.validate_in(domain)?;
    }
    Ok(())
}

/// Velocities of every vortex.
pub fn vortex_velocity(config: &VortexConfig, domain: &Domain, q0: &AnalyticPotential, kind: DynamicsKind) -> Result<Vec<Vec2>> {
    check_domain(config, domain)?;
    let mut v = vec![Vec2::ZERO; config.len()];
    velocities_unchecked(&config.positions, &config.degrees, domain, q0, kind, &mut v)?;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    ReachedT,
    Collision { t_col: f64 },
    SolverFailure,
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Output spacing; `None` records every accepted step.
    pub sample_stride: Option<f64>,
    /// Collision when `r_alpha < collision_fraction * r_alpha(0)`.
    pub collision_fraction: f64,
    pub event_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { rtol: 1e-9, atol: 1e-11, sample_stride: None, collision_fraction: 1e-4, event_tol: 1e-6, max_steps: 10_000_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: DynamicsKind,
    pub domain: Domain,
    pub times: Vec<f64>,
    pub states: Vec<VortexConfig>,
    pub velocities: Vec<Vec<Vec2>>,
    pub h0: Vec<f64>,
    pub r_alpha: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &VortexConfig {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    /// Cubic Hermite interpolation between samples, using the stored
    /// velocities. Times outside the recorded range are clamped.
    pub fn interpolate(&self, t: f64) -> VortexConfig {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        let a = &self.states[i];
        let b = &self.states[i + 1];
        let pos = (0..a.len())
            .map(|k| {
                a.positions[k] * h00 + self.velocities[i][k] * (h10 * h) + b.positions[k] * h01 + self.velocities[i + 1][k] * (h11 * h)
            })
            .collect();
        a.with_positions(pos)
    }

    /// CSV with header `t,x1,y1,d1,...,xn,yn,dn,H0,r_alpha`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut s = String::from("t");
        for k in 1..=n {
            let _ = write!(s, ",x{k},y{k},d{k}");
        }
        s.push_str(",H0,r_alpha\n");
        for i in 0..self.times.len() {
            let _ = write!(s, "{:?}", self.times[i]);
            for (p, d) in self.states[i].positions.iter().zip(&self.states[i].degrees) {
                let _ = write!(s, ",{:?},{:?},{}", p.x, p.y, d);
            }
            let _ = writeln!(s, ",{:?},{:?}", self.h0[i], self.r_alpha[i]);
        }
        s
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

struct System<'a> {
    deg: &'a [i32],
    domain: &'a Domain,
    q0: &'a AnalyticPotential,
    kind: DynamicsKind,
}

impl System<'_> {
    fn rhs(&self, y: &[Vec2], out: &mut [Vec2]) -> Result<()> {
        velocities_unchecked(y, self.deg, self.domain, self.q0, self.kind, out)
    }

    /// One Dormand-Prince step from `(y, f0)`; returns the new state, its
    /// derivative and the scaled error norm.
    fn step(&self, y: &[Vec2], f0: &[Vec2], h: f64, rtol: f64, atol: f64) -> Result<(Vec<Vec2>, Vec<Vec2>, f64)> {
        let n = y.len();
        let mut k: Vec<Vec<Vec2>> = vec![f0.to_vec()];
        let mut stage = vec![Vec2::ZERO; n];
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate() {
                    if A[s][j] != 0.0 {
                        acc += kj[i] * (h * A[s][j]);
                    }
                }
                stage[i] = acc;
            }
            let mut ks = vec![Vec2::ZERO; n];
            self.rhs(&stage, &mut ks)?;
            k.push(ks);
        }
        // Stage 7 is evaluated at the 5th-order solution.
        let y_new = stage;
        let mut err = 0.0;
        for i in 0..n {
            let mut e = Vec2::ZERO;
            for (j, kj) in k.iter().enumerate() {
                e += kj[i] * (h * E[j]);
            }
            let sx = atol + rtol * y[i].x.abs().max(y_new[i].x.abs());
            let sy = atol + rtol * y[i].y.abs().max(y_new[i].y.abs());
            err += (e.x / sx).powi(2) + (e.y / sy).powi(2);
        }
        let err = if n == 0 { 0.0 } else { (err / (2 * n) as f64).sqrt() };
        Ok((y_new, k.pop().unwrap(), err))
    }
}

/// Integrates the reduced dynamics up to `t_end` or the first collision.
pub fn integrate(
    config0: &VortexConfig,
    domain: &Domain,
    q0: &AnalyticPotential,
    kind: DynamicsKind,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    check_domain(config0, domain)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::BadParams(format!("horizon must be positive, got {t_end}")));
    }
    if config0.is_empty() {
        return Err(Error::InvalidConfig("no vortices to integrate".into()));
    }
    if let Some(s) = opts.sample_stride {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::BadParams("sample stride must be positive".into()));
        }
    }
    let r0 = separation_radius_of(&config0.positions, domain);
    if !(r0 > 0.0) {
        return Err(Error::CoincidentVortices(0, 0));
    }
    let r_stop = opts.collision_fraction * r0;
    let sys = System { deg: &config0.degrees, domain, q0, kind };
    let deg = &config0.degrees;

    let mut y = config0.positions.clone();
    let mut f = vec![Vec2::ZERO; y.len()];
    sys.rhs(&y, &mut f)?;
    let mut traj = Trajectory {
        kind,
        domain: *domain,
        times: vec![0.0],
        states: vec![config0.clone()],
        velocities: vec![f.clone()],
        h0: vec![h0_unchecked(&y, deg, domain, q0)],
        r_alpha: vec![r0],
        termination: Termination::ReachedT,
    };
    let record = |traj: &mut Trajectory, t: f64, y: &[Vec2], f: &[Vec2]| {
        traj.times.push(t);
        traj.states.push(config0.with_positions(y.to_vec()));
        traj.velocities.push(f.to_vec());
        traj.h0.push(h0_unchecked(y, deg, domain, q0));
        traj.r_alpha.push(separation_radius_of(y, domain));
    };

    let vmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let length = if r0.is_finite() { 8.0 * r0 } else { 1.0 };
    let mut h = if vmax > 0.0 { (1e-3 * length / vmax).min(t_end) } else { t_end };
    let mut t = 0.0;
    let mut next_sample = opts.sample_stride.map(|s| s.min(t_end));
    let mut sample_index = 1usize;
    let mut steps = 0usize;
    let tiny = 1e-13 * t_end.max(1.0);

    while t < t_end - tiny {
        steps += 1;
        if steps > opts.max_steps {
            traj.termination = Termination::SolverFailure;
            return Ok(traj);
        }
        let target = next_sample.unwrap_or(t_end).min(t_end);
        let mut h_try = h.min(target - t);
        let hits_target = h_try >= target - t - tiny;
        if hits_target {
            h_try = target - t;
        }
        if h_try < 1e-15 * t_end.max(1.0) {
            traj.termination = Termination::SolverFailure;
            return Ok(traj);
        }
        let (y_new, f_new, err) = match sys.step(&y, &f, h_try, opts.rtol, opts.atol) {
            Ok(v) => v,
            Err(Error::CoincidentVortices(..)) | Err(Error::SolverFailure(_)) => (Vec::new(), Vec::new(), f64::INFINITY),
            Err(e) => return Err(e),
        };
        if !(err <= 1.0) {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h = h_try * fac;
            continue;
        }
        let fac = if err > 0.0 { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        let h_next = h_try * fac;

        let r_new = separation_radius_of(&y_new, domain);
        if r_new < r_stop {
            // Bisect on the step length with fresh steps from the last state.
            let (mut lo, mut hi) = (0.0, h_try);
            let mut y_hi = y_new;
            let mut f_hi = f_new;
            while hi - lo > opts.event_tol {
                let mid = 0.5 * (lo + hi);
                match sys.step(&y, &f, mid, opts.rtol, opts.atol) {
                    Ok((ym, _, _)) if separation_radius_of(&ym, domain) >= r_stop => lo = mid,
                    Ok((ym, fm, _)) => {
                        hi = mid;
                        y_hi = ym;
                        f_hi = fm;
                    }
                    Err(_) => hi = mid,
                }
            }
            if y_hi.iter().all(|p| p.is_finite()) && f_hi.iter().all(|v| v.is_finite()) && f_hi.len() == y.len() {
                record(&mut traj, t + hi, &y_hi, &f_hi);
            }
            traj.termination = Termination::Collision { t_col: t + hi };
            return Ok(traj);
        }

        t = if hits_target { target } else { t + h_try };
        y = y_new;
        f = f_new;
        h = if hits_target { h_next.max(h) } else { h_next };
        match (opts.sample_stride, hits_target) {
            (None, _) => record(&mut traj, t, &y, &f),
            (Some(stride), true) => {
                record(&mut traj, t, &y, &f);
                sample_index += 1;
                next_sample = Some((sample_index as f64 * stride).min(t_end));
            }
            (Some(_), false) => {}
        }
    }
    Ok(traj)
}

/// `max_t |H0(t) - H0(0)|`.
pub fn hamiltonian_drift(traj: &Trajectory) -> f64 {
    match traj.h0.first() {
        Some(&h) => traj.h0.iter().fold(0.0, |m, v| m.max((v - h).abs())),
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationVerdict {
    pub monotone: bool,
    /// Largest increase of `H0` between consecutive samples (0 if none).
    pub worst_uphill: f64,
}

/// Checks that `H0` never increases by more than `1e-12 max(1, |H0|)`.
pub fn dissipation_check(traj: &Trajectory) -> DissipationVerdict {
    let mut worst = 0.0f64;
    let mut monotone = true;
    for w in traj.h0.windows(2) {
        let up = w[1] - w[0];
        worst = worst.max(up);
        if up > 1e-12 * w[0].abs().max(1.0) {
            monotone = false;
        }
    }
    DissipationVerdict { monotone, worst_uphill: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{builtin_potential, BuiltinKind};

    fn cfg(items: &[(f64, f64, i32)]) -> VortexConfig {
        VortexConfig::from_tuples(items).unwrap()
    }

    #[test]
    fn velocity_examples() {
        let l = 0.8;
        let z = AnalyticPotential::zero();
        let v = vortex_velocity(&cfg(&[(0.0, l / 2.0, 1), (0.0, -l / 2.0, -1)]), &Domain::Plane, &z, DynamicsKind::Schrodinger).unwrap();
        for vk in &v {
            assert!((*vk - Vec2::new(2.0 / l, 0.0)).norm() < 1e-14);
        }
        let v = vortex_velocity(&cfg(&[(l / 2.0, 0.0, 1), (-l / 2.0, 0.0, 1)]), &Domain::Plane, &z, DynamicsKind::Schrodinger).unwrap();
        assert!((v[0] - Vec2::new(0.0, 2.0 / l)).norm() < 1e-14);
        assert!((v[1] - Vec2::new(0.0, -2.0 / l)).norm() < 1e-14);

        let g = Vec2::new(1.0, 0.0);
        let v = velocity_from_gradient(g, 1, DynamicsKind::Mixed);
        assert!((v - Vec2::new(-1.0, -1.0) * (1.0 / (2.0 * PI))).norm() < 1e-15);
        // (I - d M) v = -g / pi
        let resid = v - v.perp() + g * (1.0 / PI);
        assert!(resid.norm() < 1e-14);
    }

    #[test]
    fn critical_point_stays_put() {
        let v1 = builtin_potential(BuiltinKind::Gaussian, &[]).unwrap();
        let c = cfg(&[(0.0, 0.0, 1)]);
        let tr = integrate(&c, &Domain::Plane, &v1, DynamicsKind::GradientFlow, 1.0, &IntegrateOptions::default()).unwrap();
        assert_eq!(hamiltonian_drift(&tr), 0.0);
        assert_eq!(tr.final_state().positions[0], Vec2::ZERO);
        assert_eq!(tr.termination, Termination::ReachedT);
    }

    #[test]
    fn stride_samples_land_on_grid() {
        let c = cfg(&[(0.0, 0.5, 1), (0.0, -0.5, -1)]);
        let opts = IntegrateOptions { sample_stride: Some(0.1), ..Default::default() };
        let tr = integrate(&c, &Domain::Plane, &AnalyticPotential::zero(), DynamicsKind::Schrodinger, 1.0, &opts).unwrap();
        assert_eq!(tr.len(), 11);
        for (i, t) in tr.times.iter().enumerate() {
            assert!((t - 0.1 * i as f64).abs() < 1e-12);
        }
        let mid = tr.interpolate(0.55);
        assert!((mid.positions[0] - Vec2::new(1.1, 0.5)).norm() < 1e-10);
    }

    #[test]
    fn csv_header() {
        let c = cfg(&[(0.0, 0.5, 1), (0.0, -0.5, -1)]);
        let tr = integrate(&c, &Domain::Plane, &AnalyticPotential::zero(), DynamicsKind::Schrodinger, 0.1, &IntegrateOptions::default()).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x1,y1,d1,x2,y2,d2,H0,r_alpha\n"));
        assert_eq!(csv.lines().count(), tr.len() + 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = AnalyticPotential::zero();
        let c = cfg(&[(0.0, 0.0, 1), (0.0, 0.0, -1)]);
        assert!(integrate(&c, &Domain::Plane, &z, DynamicsKind::Schrodinger, 1.0, &IntegrateOptions::default()).is_err());
        let c = cfg(&[(0.0, 0.0, 1)]);
        assert!(integrate(&c, &Domain::Plane, &z, DynamicsKind::Schrodinger, -1.0, &IntegrateOptions::default()).is_err());
        let rect = Domain::rectangle(-1.0, 1.0, -1.0, 1.0).unwrap();
        let c = cfg(&[(1.5, 0.0, 1)]);
        assert!(matches!(integrate(&c, &rect, &z, DynamicsKind::Schrodinger, 1.0, &IntegrateOptions::default()), Err(Error::OutsideDomain(0))));
    }

    #[test]
    fn box_images_slow_the_dipole() {
        // Oracle: direct lattice sum of opposite-degree images, |m|, |n| <= 40, RK4.
        let rect = Domain::rectangle(-3.0, 3.0, -3.0, 3.0).unwrap();
        let c = cfg(&[(-0.5, 0.5, 1), (-0.5, -0.5, -1)]);
        let tr = integrate(&c, &rect, &AnalyticPotential::zero(), DynamicsKind::Schrodinger, 0.5, &IntegrateOptions::default()).unwrap();
        let p = tr.final_state().positions[0];
        assert!((p.x - 0.40397).abs() < 1e-3, "{p:?}");
        assert!((p.y - 0.49977).abs() < 1e-3, "{p:?}");
    }
}
