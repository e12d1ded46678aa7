//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use vortexlab::gp_solver::ComplexField;
use vortexlab::grid::Grid;
use vortexlab::vortex_config::Domain;
use vortexlab::Vec2;

fn wrap(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Winding of `arg w` along the grid boundary, counterclockwise.
pub fn boundary_winding(f: &ComplexField) -> f64 {
    let g = f.grid;
    let mut path = Vec::new();
    for i in 0..g.nx {
        path.push(g.idx(i, 0));
    }
    for j in 1..g.ny {
        path.push(g.idx(g.nx - 1, j));
    }
    for i in (0..g.nx - 1).rev() {
        path.push(g.idx(i, g.ny - 1));
    }
    for j in (0..g.ny - 1).rev() {
        path.push(g.idx(0, j));
    }
    path.push(path[0]);
    path.windows(2).map(|p| wrap(f.data[p[1]].arg() - f.data[p[0]].arg())).sum::<f64>() / (2.0 * PI)
}

/// Sum of the plaquette windings, each checked to be an exact integer.
pub fn plaquette_windings(f: &ComplexField) -> i64 {
    let g = f.grid;
    let mut total = 0i64;
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let c = [g.idx(i, j), g.idx(i + 1, j), g.idx(i + 1, j + 1), g.idx(i, j + 1), g.idx(i, j)];
            let s: f64 = c.windows(2).map(|p| wrap(f.data[p[1]].arg() - f.data[p[0]].arg())).sum::<f64>() / (2.0 * PI);
            assert!((s - s.round()).abs() < 1e-9, "plaquette winding {s}");
            total += s.round() as i64;
        }
    }
    total
}

/// Vortices with a tanh core times a smooth phase `a x + b y + c x y`.
pub fn random_field(vortices: &[(f64, f64, i32)], phase: (f64, f64, f64)) -> ComplexField {
    let eps = 0.1;
    let grid = Grid::square_with_spacing(1.0, eps / 4.0).unwrap();
    ComplexField::sample(grid, |x, y| {
        let mut w = Complex64::from_polar(1.0, phase.0 * x + phase.1 * y + phase.2 * x * y);
        for &(a, b, d) in vortices {
            let z = Complex64::new(x - a, y - b);
            let r = z.norm();
            let u = if r == 0.0 { Complex64::new(0.0, 0.0) } else { z / r * (r / eps).tanh() };
            w *= if d > 0 { u } else { u.conj() };
        }
        w
    })
}

/// Exhaustive flat distance for unit atoms: every positive unit is matched to
/// a negative unit or sent to the boundary; leftover negatives exit too.
pub fn brute_force(pos: &[Vec2], neg: &[Vec2], domain: &Domain) -> f64 {
    fn rec(i: usize, pos: &[Vec2], neg: &[Vec2], used: &mut Vec<bool>, domain: &Domain) -> f64 {
        if i == pos.len() {
            let mut rest = 0.0;
            for (j, &q) in neg.iter().enumerate() {
                if !used[j] {
                    if !domain.is_bounded() {
                        return f64::INFINITY;
                    }
                    rest += domain.boundary_distance(q);
                }
            }
            return rest;
        }
        let mut best = if domain.is_bounded() { domain.boundary_distance(pos[i]) + rec(i + 1, pos, neg, used, domain) } else { f64::INFINITY };
        for j in 0..neg.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(pos[i].dist(neg[j]) + rec(i + 1, pos, neg, used, domain));
                used[j] = false;
            }
        }
        best
    }
    rec(0, pos, neg, &mut vec![false; neg.len()], domain)
}

