//! Renormalized energy `W`, the Hamiltonians `H0` and `H_eps`, their
//! gradients, and the current of the canonical harmonic map.
//!
//! On a bounded domain `G(x, a, d) = d [log|x - a| + H(x, a)]` is the
//! Green's function vanishing on the boundary and `H` its regular part, and
//!
//! `W = -pi sum_{j != k} d_j d_k log|a_j - a_k| - pi sum_{j,k} d_j d_k H(a_j, a_k)`.
//!
//! With this sign the boundary acts through opposite-degree images, which is
//! what keeps the normal current zero; vortices are drawn towards the wall.
//!
//! On the disk of radius `R`,
//! `H(x, a) = -1/2 log(|a|^2 |x|^2 - 2 R^2 x.a + R^4) + log R`.
//! On a rectangle `[0, A] x [0, B]` (local coordinates, `z = x + i y`) the
//! images along `y` are summed in closed form,
//! `sum_n log|z - b - 2inB| -> log|sinh(pi (z - b) / 2B)|`, and the remaining
//! sum over reflections in `x` converges like `exp(-pi m A / B)`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::background::AnalyticPotential;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::vortex_config::{Domain, VortexConfig};

fn check_config(config: &VortexConfig, domain: &Domain) -> Result<()> {
    domain.validate()?;
    config.check_distinct()?;
    if domain.is_bounded() {
        config.validate_in(domain)?;
    }
    Ok(())
}

fn disk_s(x: Vec2, a: Vec2, r: f64) -> f64 {
    a.norm_sq() * x.norm_sq() - 2.0 * r * r * x.dot(a) + r.powi(4)
}

/// Image sums for the rectangle.
#[derive(Debug, Clone, Copy)]
struct BoxImages {
    x0: f64,
    y0: f64,
    width: f64,
    height: f64,
    reflections: i32,
}

impl BoxImages {
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        let (width, height) = (xmax - xmin, ymax - ymin);
        BoxImages { x0: xmin, y0: ymin, width, height, reflections: 3 + (4.0 * height / width).ceil() as i32 }
    }

    fn local(&self, p: Vec2) -> Complex64 {
        Complex64::new(p.x - self.x0, p.y - self.y0)
    }

    fn k(&self) -> f64 {
        PI / (2.0 * self.height)
    }

    /// `log|sinh(k w)|`, stable for large `|Re w|`.
    fn log_sinh(&self, w: Complex64) -> f64 {
        let u = w * self.k();
        if u.re >= 0.0 {
            u.re - LN_2 + (Complex64::new(1.0, 0.0) - (-2.0 * u).exp()).norm().ln()
        } else {
            -u.re - LN_2 + (Complex64::new(1.0, 0.0) - (2.0 * u).exp()).norm().ln()
        }
    }

    /// `k coth(k w)`.
    fn coth(&self, w: Complex64) -> Complex64 {
        let u = w * self.k();
        let one = Complex64::new(1.0, 0.0);
        let c = if u.re >= 0.0 {
            let e = (-2.0 * u).exp();
            (one + e) / (one - e)
        } else {
            let e = (2.0 * u).exp();
            -(one + e) / (one - e)
        };
        c * self.k()
    }

    /// `log|sinh(k w)| - log|w|`, continuous at `w = 0`.
    fn log_sinh_reg(&self, w: Complex64) -> f64 {
        let u = w * self.k();
        if u.norm() < 1e-4 {
            self.k().ln() + (u * u / 6.0).re
        } else {
            self.log_sinh(w) - w.norm().ln()
        }
    }

    /// `k coth(k w) - 1/w`, continuous at `w = 0`.
    fn coth_reg(&self, w: Complex64) -> Complex64 {
        let u = w * self.k();
        if u.norm() < 1e-4 {
            u * self.k() / 3.0
        } else {
            self.coth(w) - 1.0 / w
        }
    }

    /// Source offsets `(b, sign)` of the image system of `a`, with the
    /// original source first.
    fn for_images(&self, a: Complex64, mut f: impl FnMut(Complex64, f64, bool)) {
        let shift = 2.0 * self.width;
        for m in -self.reflections..=self.reflections {
            let t = Complex64::new(shift * m as f64, 0.0);
            f(a + t, 1.0, m == 0);
            f(a.conj() + t, -1.0, false);
            f(-a.conj() + t, -1.0, false);
            f(-a + t, 1.0, false);
        }
    }

    /// Regular part `H(x, a) = G(x, a, 1) - log|x - a|`.
    fn h(&self, x: Vec2, a: Vec2) -> f64 {
        let (z, a) = (self.local(x), self.local(a));
        let mut v = 0.0;
        self.for_images(a, |b, sign, original| {
            v += sign * if original { self.log_sinh_reg(z - b) } else { self.log_sinh(z - b) };
        });
        v
    }

    /// `grad_x H(x, a)`.
    fn h_dx(&self, x: Vec2, a: Vec2) -> Vec2 {
        let (z, a) = (self.local(x), self.local(a));
        let mut phi = Complex64::default();
        self.for_images(a, |b, sign, original| {
            phi += sign * if original { self.coth_reg(z - b) } else { self.coth(z - b) };
        });
        Vec2::new(phi.re, -phi.im)
    }
}

/// Regular part `H(x, a)` of the unit-degree Green's function.
fn boundary_h(domain: &Domain, x: Vec2, a: Vec2) -> f64 {
    match *domain {
        Domain::Plane => 0.0,
        Domain::Disk { radius } => radius.ln() - 0.5 * disk_s(x, a, radius).ln(),
        Domain::Rectangle { xmin, xmax, ymin, ymax } => BoxImages::new(xmin, xmax, ymin, ymax).h(x, a),
    }
}

/// Gradient of `boundary_h` in its first argument.
fn boundary_h_dx(domain: &Domain, x: Vec2, a: Vec2) -> Vec2 {
    match *domain {
        Domain::Plane => Vec2::ZERO,
        Domain::Disk { radius } => (x * a.norm_sq() - a * (radius * radius)) * (-1.0 / disk_s(x, a, radius)),
        Domain::Rectangle { xmin, xmax, ymin, ymax } => BoxImages::new(xmin, xmax, ymin, ymax).h_dx(x, a),
    }
}

/// Green's data for a domain.
#[derive(Debug, Clone, Copy)]
pub struct GreensData {
    pub domain: Domain,
}

impl GreensData {
    pub fn new(domain: Domain) -> Result<Self> {
        domain.validate()?;
        Ok(GreensData { domain })
    }

    /// `G(x, a, d)`, vanishing on the boundary of a bounded domain.
    pub fn green(&self, x: Vec2, a: Vec2, d: i32) -> f64 {
        d as f64 * (x - a).norm().ln() + self.regular_part(x, a, d)
    }

    /// `F(x, a) = G(x, a, d) - d log|x - a|`.
    pub fn regular_part(&self, x: Vec2, a: Vec2, d: i32) -> f64 {
        d as f64 * boundary_h(&self.domain, x, a)
    }

    /// `grad_x G(x, a, d)`.
    pub fn green_gradient(&self, x: Vec2, a: Vec2, d: i32) -> Vec2 {
        let r = x - a;
        (r * (1.0 / r.norm_sq()) + boundary_h_dx(&self.domain, x, a)) * d as f64
    }
}

/// `W(alpha, d)`; see the module docs for the bounded-domain term.
pub fn renormalized_energy(config: &VortexConfig, domain: &Domain) -> Result<f64> {
    check_config(config, domain)?;
    Ok(w_unchecked(&config.positions, &config.degrees, domain))
}

pub(crate) fn w_unchecked(pos: &[Vec2], deg: &[i32], domain: &Domain) -> f64 {
    let n = pos.len();
    let mut w = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            w -= 2.0 * PI * (deg[j] * deg[k]) as f64 * (pos[j] - pos[k]).norm().ln();
        }
    }
    if domain.is_bounded() {
        for j in 0..n {
            for k in j..n {
                let mult = if j == k { 1.0 } else { 2.0 };
                w -= mult * PI * (deg[j] * deg[k]) as f64 * boundary_h(domain, pos[j], pos[k]);
            }
        }
    }
    w
}

/// `grad_{alpha_k} W`.
pub fn grad_renormalized_energy(config: &VortexConfig, domain: &Domain, k: usize) -> Result<Vec2> {
    check_config(config, domain)?;
    if k >= config.len() {
        return Err(Error::BadParams(format!("vortex index {k} out of range")));
    }
    Ok(grad_w_unchecked(&config.positions, &config.degrees, domain, k))
}

pub(crate) fn grad_w_unchecked(pos: &[Vec2], deg: &[i32], domain: &Domain, k: usize) -> Vec2 {
    let mut g = Vec2::ZERO;
    for j in 0..pos.len() {
        if j != k {
            let d = pos[k] - pos[j];
            g += d * (-2.0 * PI * (deg[k] * deg[j]) as f64 / d.norm_sq());
        }
    }
    if domain.is_bounded() {
        for j in 0..pos.len() {
            g += boundary_h_dx(domain, pos[k], pos[j]) * (-2.0 * PI * (deg[k] * deg[j]) as f64);
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    #[serde(rename = "W")]
    pub w: f64,
    /// `pi sum Q0(alpha_j)`.
    pub background: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "H_eps")]
    pub h_eps: f64,
    pub gamma0: f64,
}

/// `H0 = W + pi sum Q0(alpha_j)` and `H_eps = H0 + n (pi |log eps| + gamma0)`.
pub fn interaction_hamiltonian(
    config: &VortexConfig,
    domain: &Domain,
    q0: &AnalyticPotential,
    eps: f64,
    gamma0: f64,
) -> Result<EnergyBreakdown> {
    check_config(config, domain)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParams(format!("eps must lie in (0, 1), got {eps}")));
    }
    let w = w_unchecked(&config.positions, &config.degrees, domain);
    let background = PI * config.positions.iter().map(|&p| q0.value(p)).sum::<f64>();
    let h0 = w + background;
    let h_eps = h0 + config.len() as f64 * (PI * eps.ln().abs() + gamma0);
    Ok(EnergyBreakdown { w, background, h0, h_eps, gamma0 })
}

/// `H0` alone.
pub fn h0(config: &VortexConfig, domain: &Domain, q0: &AnalyticPotential) -> Result<f64> {
    check_config(config, domain)?;
    Ok(h0_unchecked(&config.positions, &config.degrees, domain, q0))
}

pub(crate) fn h0_unchecked(pos: &[Vec2], deg: &[i32], domain: &Domain, q0: &AnalyticPotential) -> f64 {
    w_unchecked(pos, deg, domain) + PI * pos.iter().map(|&p| q0.value(p)).sum::<f64>()
}

/// `grad_{alpha_k} H0 = grad_{alpha_k} W + pi grad Q0(alpha_k)`.
pub fn grad_h0(config: &VortexConfig, domain: &Domain, q0: &AnalyticPotential, k: usize) -> Result<Vec2> {
    Ok(grad_renormalized_energy(config, domain, k)? + q0.gradient(config.positions[k]) * PI)
}

/// Supercurrent `j(w*)(x) = sum_j d_j (grad G(x, a_j, 1))^perp` of the
/// canonical harmonic map; its normal component vanishes on the boundary of
/// a bounded domain.
pub fn canonical_phase_current(config: &VortexConfig, domain: &Domain, x: Vec2) -> Result<Vec2> {
    domain.validate()?;
    if !x.is_finite() {
        return Err(Error::NonFiniteInput("evaluation point"));
    }
    let greens = GreensData { domain: *domain };
    let mut j = Vec2::ZERO;
    for (idx, (&a, &d)) in config.positions.iter().zip(&config.degrees).enumerate() {
        if (x - a).norm_sq() == 0.0 {
            return Err(Error::EvaluationAtVortex(idx));
        }
        j += greens.green_gradient(x, a, d).perp();
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{builtin_potential, BuiltinKind};

    fn cfg(items: &[(f64, f64, i32)]) -> VortexConfig {
        VortexConfig::from_tuples(items).unwrap()
    }

    #[test]
    fn plane_examples() {
        let p = Domain::Plane;
        assert_eq!(renormalized_energy(&cfg(&[(0.0, 0.0, 1), (1.0, 0.0, 1)]), &p).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let w = renormalized_energy(&cfg(&[(0.0, 0.0, 1), (e, 0.0, -1)]), &p).unwrap();
        assert!((w - 2.0 * PI).abs() < 1e-14);
        assert_eq!(renormalized_energy(&cfg(&[(0.3, 0.2, 1)]), &p).unwrap(), 0.0);
        assert!(matches!(
            renormalized_energy(&cfg(&[(0.0, 0.0, 1), (0.0, 0.0, -1)]), &p),
            Err(Error::CoincidentVortices(0, 1))
        ));
    }

    #[test]
    fn gradient_examples() {
        let l = 0.7;
        let c = cfg(&[(0.0, l / 2.0, 1), (0.0, -l / 2.0, -1)]);
        let g = grad_renormalized_energy(&c, &Domain::Plane, 0).unwrap();
        assert!((g - Vec2::new(0.0, 2.0 * PI / l)).norm() < 1e-13);
        let c = cfg(&[(-l / 2.0, 0.0, 1), (l / 2.0, 0.0, 1)]);
        let g = grad_renormalized_energy(&c, &Domain::Plane, 0).unwrap();
        assert!((g - Vec2::new(2.0 * PI / l, 0.0)).norm() < 1e-13);
        let c = cfg(&[(l / 2.0, 0.0, 1), (-l / 2.0, 0.0, 1)]);
        let g = grad_renormalized_energy(&c, &Domain::Plane, 0).unwrap();
        assert!((g - Vec2::new(-2.0 * PI / l, 0.0)).norm() < 1e-13);
        let c = cfg(&[(0.2, 0.1, -1)]);
        assert_eq!(grad_renormalized_energy(&c, &Domain::Plane, 0).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn hamiltonian_examples() {
        let v1 = builtin_potential(BuiltinKind::Gaussian, &[]).unwrap();
        let c = cfg(&[(1.0, 0.0, 1)]);
        let g = grad_h0(&c, &Domain::Plane, &v1, 0).unwrap();
        assert!((g - Vec2::new(-2.0 * PI / std::f64::consts::E, 0.0)).norm() < 1e-14);

        let v2 = builtin_potential(BuiltinKind::Step, &[]).unwrap();
        let c = cfg(&[(0.5, 0.3, 1), (-0.2, 0.1, -1)]);
        let b = interaction_hamiltonian(&c, &Domain::Plane, &v2, 0.05, 1.2).unwrap();
        let w = renormalized_energy(&c, &Domain::Plane).unwrap();
        assert_eq!(b.w, w);
        assert_eq!(b.h0, b.w + b.background);
        assert!((b.background - PI * (v2.value(c.positions[0]) + v2.value(c.positions[1]))).abs() < 1e-15);
        assert!((b.h_eps - b.h0 - 2.0 * (PI * 0.05f64.ln().abs() + 1.2)).abs() < 1e-12);
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.contains("\"H0\""));
    }

    #[test]
    fn current_examples() {
        let c = cfg(&[(0.0, 0.0, 1)]);
        let j = canonical_phase_current(&c, &Domain::Plane, Vec2::new(1.0, 0.0)).unwrap();
        assert!((j - Vec2::new(0.0, 1.0)).norm() < 1e-15);
        let jm = canonical_phase_current(&c.reversed(), &Domain::Plane, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(jm, -j);
        assert!(matches!(canonical_phase_current(&c, &Domain::Plane, Vec2::ZERO), Err(Error::EvaluationAtVortex(0))));
    }

    #[test]
    fn disk_green_vanishes_on_boundary() {
        let gd = GreensData::new(Domain::disk(2.0).unwrap()).unwrap();
        for &a in &[Vec2::new(0.3, -0.4), Vec2::ZERO, Vec2::new(1.9, 0.0)] {
            for k in 0..16 {
                let t = k as f64 * PI / 8.0;
                let x = Vec2::new(2.0 * t.cos(), 2.0 * t.sin());
                assert!(gd.green(x, a, -1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn disk_current_is_tangential_on_boundary() {
        let disk = Domain::disk(1.5).unwrap();
        let c = cfg(&[(0.3, 0.2, 1), (-0.5, 0.1, -1), (0.0, 0.0, 1)]);
        for k in 0..12 {
            let t = 0.3 + k as f64 * PI / 6.0;
            let nrm = Vec2::new(t.cos(), t.sin());
            let j = canonical_phase_current(&c, &disk, nrm * 1.5).unwrap();
            assert!(j.dot(nrm).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_green_vanishes_on_boundary() {
        let gd = GreensData::new(Domain::rectangle(-1.0, 2.0, -0.5, 1.5).unwrap()).unwrap();
        let a = Vec2::new(0.3, 0.2);
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            for x in [Vec2::new(-1.0 + 3.0 * s, -0.5), Vec2::new(-1.0 + 3.0 * s, 1.5), Vec2::new(-1.0, -0.5 + 2.0 * s), Vec2::new(2.0, -0.5 + 2.0 * s)] {
                assert!(gd.green(x, a, 1).abs() < 1e-10, "{x:?}");
            }
        }
        let b = Vec2::new(1.7, 1.1);
        assert!((gd.regular_part(a, b, 1) - gd.regular_part(b, a, 1)).abs() < 1e-12);
    }

    #[test]
    fn rectangle_gradient_and_current() {
        let rect = Domain::rectangle(-1.0, 2.0, -0.5, 1.5).unwrap();
        let c = cfg(&[(0.3, 0.2, 1), (-0.5, 0.9, -1), (1.6, 1.2, 1)]);
        for k in 0..c.len() {
            let g = grad_renormalized_energy(&c, &rect, k).unwrap();
            let h = 1e-6;
            let mut fd = [0.0; 2];
            for (dim, slot) in fd.iter_mut().enumerate() {
                let shift = |s: f64| {
                    let mut p = c.positions.clone();
                    if dim == 0 { p[k].x += s } else { p[k].y += s }
                    renormalized_energy(&c.with_positions(p), &rect).unwrap()
                };
                *slot = (shift(h) - shift(-h)) / (2.0 * h);
            }
            assert!((g.x - fd[0]).abs() < 1e-6 * (1.0 + g.norm()), "{g:?} {fd:?}");
            assert!((g.y - fd[1]).abs() < 1e-6 * (1.0 + g.norm()), "{g:?} {fd:?}");
        }
        for k in 1..20 {
            let s = k as f64 / 20.0;
            let j = canonical_phase_current(&c, &rect, Vec2::new(-1.0 + 3.0 * s, 1.5)).unwrap();
            assert!(j.y.abs() < 1e-9);
            let j = canonical_phase_current(&c, &rect, Vec2::new(-1.0, -0.5 + 2.0 * s)).unwrap();
            assert!(j.x.abs() < 1e-9);
        }
    }

    #[test]
    fn wall_attracts_in_energy() {
        let disk = Domain::disk(1.0).unwrap();
        let near = renormalized_energy(&cfg(&[(0.95, 0.0, 1)]), &disk).unwrap();
        let far = renormalized_energy(&cfg(&[(0.2, 0.0, 1)]), &disk).unwrap();
        assert!(near < far);
    }
}
