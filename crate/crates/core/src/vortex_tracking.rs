//! Vortex extraction from a sampled field.
//!
//! Detection is by plaquette winding numbers, which are exact integers.
//! Nonzero plaquettes are grouped by single linkage within a merge radius.
//! A group made of one unit plaquette is located at the zero of the bilinear
//! interpolant of `w` in that plaquette; other groups fall back to the first
//! moment of the discrete Jacobian over a 5x5 node window.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::gp_solver::ComplexField;
use crate::grid::{gradient, write_file, Grid, ScalarField};
use crate::ode_dynamics::Trajectory;
use crate::vortex_config::{flat_norm_distance, Atom, AtomicMeasure, Domain};

/// Nodes with modulus below this are treated as exact zeros.
const ZERO_MODULUS: f64 = 1e-12;

/// `j = (i w, grad w)` at the nodes, centered differences.
pub fn supercurrent(field: &ComplexField) -> (ScalarField, ScalarField) {
    let (wx, wy) = gradient(&field.grid, &field.data);
    let comp = |d: &[Complex64]| -> Vec<f64> { field.data.iter().zip(d).map(|(w, g)| (w.conj() * g).im).collect() };
    (ScalarField { grid: field.grid, data: comp(&wx) }, ScalarField { grid: field.grid, data: comp(&wy) })
}

pub(crate) fn jacobian_values(grid: &Grid, w: &[Complex64]) -> Vec<f64> {
    let (wx, wy) = gradient(grid, w);
    wx.iter().zip(&wy).map(|(a, b)| (a.conj() * b).im).collect()
}

/// `J(w) = det grad w` at the nodes, centered differences.
pub fn jacobian(field: &ComplexField) -> ScalarField {
    ScalarField { grid: field.grid, data: jacobian_values(&field.grid, &field.data) }
}

/// One detected vortex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedVortex {
    pub center: Vec2,
    /// `+-pi`.
    pub weight: f64,
    /// Number of winding plaquettes in the cluster.
    pub cluster_size: usize,
    /// Distance from the refined center to the winding centroid of the cluster.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub t: f64,
    pub measure: AtomicMeasure,
    pub vortices: Vec<DetectedVortex>,
    /// Flat distance between the refined measure and the raw plaquette measure.
    pub residual: f64,
    /// Clusters of zero net winding that were dropped.
    pub annihilated: usize,
    /// Set when a cluster of net degree `|d| >= 2` was split into unit atoms.
    pub split_multiplicity: bool,
}

impl DetectionResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,weight,cluster_size,residual\n");
        s.push_str(&self.csv_rows());
        s
    }

    /// Rows without the header, for concatenating several times.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for v in &self.vortices {
            s.push_str(&format!("{:?},{:?},{:?},{:?},{},{:?}\n", self.t, v.center.x, v.center.y, v.weight, v.cluster_size, v.residual));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }

    pub fn total_degree(&self) -> i32 {
        (self.measure.total_weight() / PI).round() as i32
    }
}

#[derive(Debug, Clone, Copy)]
struct Winding {
    center: Vec2,
    n: i32,
    /// Lower-left node of the plaquette; `None` for a ring around a zero node.
    cell: Option<(usize, usize)>,
}

fn phase_step(a: Complex64, b: Complex64) -> f64 {
    (b * a.conj()).arg()
}

fn loop_winding(vals: &[Complex64]) -> i32 {
    let mut s = 0.0;
    for k in 0..vals.len() {
        s += phase_step(vals[k], vals[(k + 1) % vals.len()]);
    }
    (s / (2.0 * PI)).round() as i32
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Plaquette windings; exact zeros at nodes are wound around their
/// eight-neighbour ring instead.
fn windings(field: &ComplexField) -> Result<Vec<Winding>> {
    let g = &field.grid;
    let w = &field.data;
    let scale = field.max_modulus().max(1e-300);
    let is_zero = |k: usize| w[k].norm() <= ZERO_MODULUS * scale;
    let mut out = Vec::new();
    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let ks = [g.idx(i, j), g.idx(i + 1, j), g.idx(i + 1, j + 1), g.idx(i, j + 1)];
            if ks.iter().any(|&k| is_zero(k)) {
                continue;
            }
            let vals = ks.map(|k| w[k]);
            let n = loop_winding(&vals);
            if n != 0 {
                if vals.iter().all(|v| v.norm() > 0.5) {
                    return Err(Error::UnresolvedCore { x: g.x(i) + 0.5 * g.hx, y: g.y(j) + 0.5 * g.hy });
                }
                out.push(Winding { center: Vec2::new(g.x(i) + 0.5 * g.hx, g.y(j) + 0.5 * g.hy), n, cell: Some((i, j)) });
            }
        }
    }
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            if !is_zero(g.idx(i, j)) {
                continue;
            }
            let ring = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
            let ks: Vec<usize> = ring.iter().map(|&(di, dj)| g.idx((i as i64 + di) as usize, (j as i64 + dj) as usize)).collect();
            if ks.iter().any(|&k| is_zero(k)) {
                continue;
            }
            let vals: Vec<Complex64> = ks.iter().map(|&k| w[k]).collect();
            let n = loop_winding(&vals);
            if n != 0 {
                out.push(Winding { center: Vec2::new(g.x(i), g.y(j)), n, cell: None });
            }
        }
    }
    Ok(out)
}

/// Zero of the bilinear interpolant of `w` on the plaquette with lower-left
/// node `(i, j)`, by Newton iteration from the cell center.
fn bilinear_zero(grid: &Grid, w: &[Complex64], i: usize, j: usize) -> Option<Vec2> {
    let (a, b, c, d) = (w[grid.idx(i, j)], w[grid.idx(i + 1, j)], w[grid.idx(i, j + 1)], w[grid.idx(i + 1, j + 1)]);
    let (mut s, mut t) = (0.5, 0.5);
    for _ in 0..30 {
        let f = a * (1.0 - s) * (1.0 - t) + b * s * (1.0 - t) + c * (1.0 - s) * t + d * s * t;
        let fs = (b - a) * (1.0 - t) + (d - c) * t;
        let ft = (c - a) * (1.0 - s) + (d - b) * s;
        let det = fs.re * ft.im - ft.re * fs.im;
        if det.abs() < 1e-300 {
            return None;
        }
        let ds = (f.re * ft.im - ft.re * f.im) / det;
        let dt = (fs.re * f.im - f.re * fs.im) / det;
        s -= ds;
        t -= dt;
        if !(s.is_finite() && t.is_finite()) || s.abs() > 3.0 || t.abs() > 3.0 {
            return None;
        }
        if ds.abs() + dt.abs() < 1e-13 {
            break;
        }
    }
    if (-0.25..=1.25).contains(&s) && (-0.25..=1.25).contains(&t) {
        Some(Vec2::new(grid.x(i) + s * grid.hx, grid.y(j) + t * grid.hy))
    } else {
        None
    }
}

/// First moment of `J` over the 5x5 node window around the node nearest `c`.
fn jacobian_moment(grid: &Grid, jac: &[f64], c: Vec2, sign: f64) -> Option<Vec2> {
    let ci = ((c.x - grid.x0) / grid.hx).round() as i64;
    let cj = ((c.y - grid.y0) / grid.hy).round() as i64;
    let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
    for dj in -2..=2 {
        for di in -2..=2 {
            let (i, j) = (ci + di, cj + dj);
            if i < 0 || j < 0 || i >= grid.nx as i64 || j >= grid.ny as i64 {
                return None;
            }
            let (i, j) = (i as usize, j as usize);
            let v = jac[grid.idx(i, j)] * sign;
            m0 += v;
            mx += v * grid.x(i);
            my += v * grid.y(j);
        }
    }
    if m0 > 0.0 {
        Some(Vec2::new(mx / m0, my / m0))
    } else {
        None
    }
}

fn refine(grid: &Grid, jac: &[f64], start: Vec2, sign: f64) -> Vec2 {
    let mut c = start;
    for _ in 0..3 {
        match jacobian_moment(grid, jac, c, sign) {
            Some(next) if next.dist(start) <= 1.5 * grid.h() => c = next,
            _ => break,
        }
    }
    c
}

/// Winding-number detection with Jacobian refinement. `merge_radius`
/// defaults to `4h`.
pub fn detect_vortices(field: &ComplexField, merge_radius: Option<f64>) -> Result<DetectionResult> {
    if !field.is_finite() {
        return Err(Error::NonFiniteInput("field"));
    }
    let grid = field.grid;
    let merge = merge_radius.unwrap_or(4.0 * grid.h());
    if !(merge >= 0.0) {
        return Err(Error::BadParams(format!("merge radius must be non-negative, got {merge}")));
    }
    let ws = windings(field)?;
    let mut parent: Vec<usize> = (0..ws.len()).collect();
    for a in 0..ws.len() {
        for b in a + 1..ws.len() {
            if ws[a].center.dist(ws[b].center) <= merge * (1.0 + 1e-12) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; ws.len()];
    for k in 0..ws.len() {
        let r = find(&mut parent, k);
        if root_slot[r] == usize::MAX {
            root_slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[root_slot[r]].push(k);
    }
    let jac = jacobian_values(&grid, &field.data);
    let mut vortices = Vec::new();
    let mut annihilated = 0;
    let mut split_multiplicity = false;
    for members in &clusters {
        let net: i32 = members.iter().map(|&k| ws[k].n).sum();
        if net == 0 {
            annihilated += 1;
            continue;
        }
        let sign = net.signum() as f64;
        // Winding centroid over plaquettes carrying the net sign.
        let same: Vec<usize> = members.iter().copied().filter(|&k| ws[k].n.signum() == net.signum()).collect();
        let total: f64 = same.iter().map(|&k| ws[k].n.abs() as f64).sum();
        let mut centroid = Vec2::default();
        for &k in &same {
            centroid += ws[k].center * (ws[k].n.abs() as f64 / total);
        }
        if net.abs() == 1 {
            // Zero of the interpolant in the net-sign plaquette nearest the centroid,
            // else the Jacobian moment.
            let nearest = same.iter().copied().min_by(|&a, &b| ws[a].center.dist(centroid).partial_cmp(&ws[b].center.dist(centroid)).unwrap()).unwrap();
            let c = match ws[nearest].cell {
                None => ws[nearest].center,
                Some((i, j)) => match bilinear_zero(&grid, &field.data, i, j) {
                    Some(z) if same.len() == 1 => z,
                    _ => refine(&grid, &jac, centroid, sign),
                },
            };
            vortices.push(DetectedVortex { center: c, weight: sign * PI, cluster_size: members.len(), residual: c.dist(centroid) });
        } else {
            split_multiplicity = true;
            let mut seeds: Vec<Vec2> = Vec::new();
            for &k in &same {
                for _ in 0..ws[k].n.abs() {
                    seeds.push(ws[k].center);
                }
            }
            for (q, s) in seeds.iter().take(net.unsigned_abs() as usize).enumerate() {
                let c = *s + Vec2::new(0.25 * grid.hx * q as f64, 0.0);
                vortices.push(DetectedVortex { center: c, weight: sign * PI, cluster_size: members.len(), residual: c.dist(centroid) });
            }
        }
    }
    vortices.sort_by(|a, b| (a.center.x, a.center.y).partial_cmp(&(b.center.x, b.center.y)).unwrap());
    let measure = AtomicMeasure::new(vortices.iter().map(|v| Atom { point: v.center, weight: v.weight }).collect());
    let raw = AtomicMeasure::new(ws.iter().map(|w| Atom { point: w.center, weight: PI * w.n as f64 }).collect());
    let residual = flat_norm_distance(&measure, &raw, &Domain::Plane)?;
    Ok(DetectionResult { t: field.t, measure, vortices, residual, annihilated, split_multiplicity })
}

/// Per-component equipartition defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquipartitionResidual {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl EquipartitionResidual {
    pub fn max(&self) -> f64 {
        self.xx.max(self.xy).max(self.yy)
    }
}

/// Window radius used by [`equipartition_residual`]: half the distance
/// between detected vortices, capped at `1/2` and by the grid edge.
pub fn equipartition_window(field: &ComplexField, detection: &DetectionResult) -> f64 {
    let g = &field.grid;
    let mut r: f64 = 0.5;
    let atoms = detection.measure.atoms();
    for (a, x) in atoms.iter().enumerate() {
        for y in &atoms[a + 1..] {
            r = r.min(0.5 * x.point.dist(y.point));
        }
        let p = x.point;
        r = r.min(p.x - g.x0).min(g.xmax() - p.x).min(p.y - g.y0).min(g.ymax() - p.y);
    }
    r.max(0.0)
}

/// Compares `(d_k w, d_l w) / |log eps|` on a disc around each detected vortex
/// with `delta_kl pi`; the test functions are affine with unit gradient, so
/// the pairing reduces to the window integral. Components are summed over
/// vortices.
pub fn equipartition_residual(field: &ComplexField, detection: &DetectionResult, eps: f64) -> Result<EquipartitionResidual> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParams(format!("eps must lie in (0, 1), got {eps}")));
    }
    let mut res = EquipartitionResidual { xx: 0.0, xy: 0.0, yy: 0.0 };
    if detection.measure.is_empty() {
        return Ok(res);
    }
    let g = field.grid;
    let l = -eps.ln();
    let rad = equipartition_window(field, detection);
    let (wx, wy) = gradient(&g, &field.data);
    for atom in detection.measure.atoms() {
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for j in 0..g.ny {
            for i in 0..g.nx {
                if Vec2::new(g.x(i), g.y(j)).dist(atom.point) >= rad {
                    continue;
                }
                let k = g.idx(i, j);
                let wgt = g.node_weight(i, j) * g.cell_area();
                let (a, b) = (wx[k], wy[k]);
                sxx += wgt * a.norm_sqr();
                syy += wgt * b.norm_sqr();
                sxy += wgt * (a * b.conj()).re;
            }
        }
        res.xx += (sxx / l - PI).abs();
        res.yy += (syy / l - PI).abs();
        res.xy += (sxy / l).abs();
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub t: f64,
    pub distance: f64,
    pub detected: usize,
    pub expected: usize,
    pub count_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryComparison {
    pub rows: Vec<CompareRow>,
    pub max_distance: f64,
    pub mismatches: usize,
}

impl TrajectoryComparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,distance,detected,expected,count_mismatch\n");
        for r in &self.rows {
            s.push_str(&format!("{:?},{:?},{},{},{}\n", r.t, r.distance, r.detected, r.expected, r.count_mismatch));
        }
        s
    }
}

/// Flat distance between the detected Jacobian measure of each field and
/// `pi sum d_j delta_{alpha_j(t)}` from the reduced trajectory.
pub fn trajectory_compare(pde_fields: &[ComplexField], ode_traj: &Trajectory, domain: &Domain) -> Result<TrajectoryComparison> {
    let detections: Vec<DetectionResult> = pde_fields.iter().map(|f| detect_vortices(f, None)).collect::<Result<_>>()?;
    compare_detections(&detections, ode_traj, domain)
}

/// As [`trajectory_compare`] for precomputed detections.
pub fn compare_detections(detections: &[DetectionResult], ode_traj: &Trajectory, domain: &Domain) -> Result<TrajectoryComparison> {
    let mut rows = Vec::with_capacity(detections.len());
    for d in detections {
        let cfg = ode_traj.interpolate(d.t);
        let target = cfg.jacobian_measure();
        let distance = flat_norm_distance(&d.measure, &target, domain)?;
        let (detected, expected) = (d.measure.len(), cfg.len());
        rows.push(CompareRow { t: d.t, distance, detected, expected, count_mismatch: detected != expected });
    }
    let max_distance = rows.iter().fold(0.0f64, |m, r| m.max(r.distance));
    let mismatches = rows.iter().filter(|r| r.count_mismatch).count();
    Ok(TrajectoryComparison { rows, max_distance, mismatches })
}
