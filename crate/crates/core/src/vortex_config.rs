//! Point-vortex configurations, domains, separation radii and the flat norm
//! between atomic measures.
//!
//! The flat distance between two atomic measures is computed as a transport
//! problem: positive mass travels to negative mass at Euclidean cost and, on
//! bounded domains, any atom may be discharged at the boundary for its
//! distance to it. After splitting weights into equal quanta this becomes a
//! square assignment problem.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Tolerance used to merge atoms and to quantize weights.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Hard cap on the number of unit quanta in one flat-norm evaluation.
const MAX_QUANTA: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Plane,
    Disk { radius: f64 },
    Rectangle { xmin: f64, xmax: f64, ymin: f64, ymax: f64 },
}

impl Domain {
    pub fn disk(radius: f64) -> Result<Self> {
        let d = Domain::Disk { radius };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self> {
        let d = Domain::Rectangle { xmin, xmax, ymin, ymax };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Plane => Ok(()),
            Domain::Disk { radius } => {
                if radius.is_finite() && radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::BadParams(format!("disk radius must be positive, got {radius}")))
                }
            }
            Domain::Rectangle { xmin, xmax, ymin, ymax } => {
                let finite = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite());
                if finite && xmin < xmax && ymin < ymax {
                    Ok(())
                } else {
                    Err(Error::BadParams("rectangle needs xmin < xmax and ymin < ymax".into()))
                }
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Domain::Plane)
    }

    /// Distance to the boundary; `+inf` on the plane, negative outside.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        match *self {
            Domain::Plane => f64::INFINITY,
            Domain::Disk { radius } => radius - p.norm(),
            Domain::Rectangle { xmin, xmax, ymin, ymax } => {
                (p.x - xmin).min(xmax - p.x).min(p.y - ymin).min(ymax - p.y)
            }
        }
    }

    pub fn contains_strictly(&self, p: Vec2) -> bool {
        p.is_finite() && self.boundary_distance(p) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexConfig {
    pub positions: Vec<Vec2>,
    pub degrees: Vec<i32>,
}

impl VortexConfig {
    /// Builds a configuration; degrees must be +1 or -1. The empty
    /// configuration is allowed and stands for the vortex-free state.
    pub fn new(positions: Vec<Vec2>, degrees: Vec<i32>) -> Result<Self> {
        if positions.len() != degrees.len() {
            return Err(Error::InvalidConfig(format!(
                "{} positions but {} degrees",
                positions.len(),
                degrees.len()
            )));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteInput("vortex positions"));
        }
        if let Some(j) = degrees.iter().position(|d| d.abs() != 1) {
            return Err(Error::InvalidConfig(format!("degree {} at index {j} is not +-1", degrees[j])));
        }
        Ok(VortexConfig { positions, degrees })
    }

    pub fn from_tuples(items: &[(f64, f64, i32)]) -> Result<Self> {
        Self::new(
            items.iter().map(|&(x, y, _)| Vec2::new(x, y)).collect(),
            items.iter().map(|&(_, _, d)| d).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_degree(&self) -> i32 {
        self.degrees.iter().sum()
    }

    /// Checks that every vortex lies strictly inside `domain`.
    pub fn validate_in(&self, domain: &Domain) -> Result<()> {
        for (j, p) in self.positions.iter().enumerate() {
            if !domain.contains_strictly(*p) {
                return Err(Error::OutsideDomain(j));
            }
        }
        Ok(())
    }

    /// Rejects coincident vortices.
    pub fn check_distinct(&self) -> Result<()> {
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.positions[i] == self.positions[j] {
                    return Err(Error::CoincidentVortices(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn with_positions(&self, positions: Vec<Vec2>) -> Self {
        VortexConfig { positions, degrees: self.degrees.clone() }
    }

    /// Same positions with every degree flipped.
    pub fn reversed(&self) -> Self {
        VortexConfig { positions: self.positions.clone(), degrees: self.degrees.iter().map(|d| -d).collect() }
    }

    /// The measure `scale * sum d_j delta_{alpha_j}`.
    pub fn to_measure(&self, scale: f64) -> AtomicMeasure {
        AtomicMeasure::new(
            self.positions.iter().zip(&self.degrees).map(|(&p, &d)| Atom { point: p, weight: scale * d as f64 }).collect(),
        )
    }

    /// The measure `pi * sum d_j delta_{alpha_j}`, the Jacobian limit.
    pub fn jacobian_measure(&self) -> AtomicMeasure {
        self.to_measure(PI)
    }

    /// Parses lines of `x y d`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected `x y d`, got `{raw}`", lineno + 1)));
            }
            let bad = |what: &str| Error::Parse(format!("line {}: bad {what} in `{raw}`", lineno + 1));
            let x: f64 = fields[0].parse().map_err(|_| bad("x"))?;
            let y: f64 = fields[1].parse().map_err(|_| bad("y"))?;
            let d: i32 = fields[2].parse().map_err(|_| bad("degree"))?;
            items.push((x, y, d));
        }
        Self::from_tuples(&items)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# x y d\n");
        for (p, d) in self.positions.iter().zip(&self.degrees) {
            let _ = writeln!(s, "{:?} {:?} {}", p.x, p.y, d);
        }
        s
    }
}

/// `(1/8) min(pairwise distances, boundary distances)`.
///
/// On the plane a single vortex has infinite separation radius.
pub fn separation_radius(config: &VortexConfig, domain: &Domain) -> f64 {
    separation_radius_of(&config.positions, domain)
}

pub fn separation_radius_of(positions: &[Vec2], domain: &Domain) -> f64 {
    let mut m = f64::INFINITY;
    for (i, &p) in positions.iter().enumerate() {
        m = m.min(domain.boundary_distance(p));
        for &q in &positions[i + 1..] {
            m = m.min(p.dist(q));
        }
    }
    (m / 8.0).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// Canonicalizes: atoms closer than `WEIGHT_TOL` are merged and
    /// (near) zero weights dropped.
    pub fn new(atoms: Vec<Atom>) -> Self {
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if let Some(m) = merged.iter_mut().find(|m| m.point.dist(a.point) <= WEIGHT_TOL) {
                m.weight += a.weight;
            } else {
                merged.push(a);
            }
        }
        let scale = merged.iter().fold(0.0f64, |s, a| s.max(a.weight.abs())).max(1.0);
        merged.retain(|a| a.weight.abs() > WEIGHT_TOL * scale);
        AtomicMeasure { atoms: merged }
    }

    pub fn empty() -> Self {
        AtomicMeasure { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn negated(&self) -> Self {
        AtomicMeasure { atoms: self.atoms.iter().map(|a| Atom { point: a.point, weight: -a.weight }).collect() }
    }
}

fn float_gcd(mut a: f64, mut b: f64, tol: f64) -> f64 {
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    while b > tol {
        let r = a % b;
        a = b;
        b = if r > b - tol { 0.0 } else { r };
    }
    a
}

/// Flat distance between two atomic measures.
pub fn flat_norm_distance(a: &AtomicMeasure, b: &AtomicMeasure, domain: &Domain) -> Result<f64> {
    domain.validate()?;
    for atom in a.atoms.iter().chain(&b.atoms) {
        if !atom.point.is_finite() || !atom.weight.is_finite() {
            return Err(Error::NonFiniteInput("atomic measure"));
        }
    }
    if !domain.is_bounded() {
        let (ta, tb) = (a.total_weight(), b.total_weight());
        let scale = a.atoms.iter().chain(&b.atoms).map(|x| x.weight.abs()).fold(1.0, f64::max);
        if (ta - tb).abs() > 1e-9 * scale {
            return Err(Error::WeightMismatch { left: ta, right: tb });
        }
    }
    let mut all = a.atoms.clone();
    all.extend(b.atoms.iter().map(|x| Atom { point: x.point, weight: -x.weight }));
    let diff = AtomicMeasure::new(all);
    if diff.is_empty() {
        return Ok(0.0);
    }

    let wmax = diff.atoms.iter().map(|x| x.weight.abs()).fold(0.0, f64::max);
    let tol = WEIGHT_TOL * wmax.max(1.0);
    let quantum = diff.atoms.iter().map(|x| x.weight.abs()).fold(0.0, |g, w| if g == 0.0 { w } else { float_gcd(g, w, tol) });
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for atom in &diff.atoms {
        let units = (atom.weight.abs() / quantum).round();
        if (units * quantum - atom.weight.abs()).abs() > 1e-9 * wmax.max(1.0) || units as usize > MAX_QUANTA {
            return Err(Error::BadParams("atom weights are not commensurate".into()));
        }
        let list = if atom.weight > 0.0 { &mut pos } else { &mut neg };
        list.extend(std::iter::repeat(atom.point).take(units as usize));
    }
    if pos.len() + neg.len() > MAX_QUANTA {
        return Err(Error::BadParams("too many weight quanta".into()));
    }

    let total = if domain.is_bounded() {
        // Rows: positive units then one boundary source per negative unit.
        // Columns: negative units then one boundary sink per positive unit.
        let (p, q) = (pos.len(), neg.len());
        let n = p + q;
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cost[i * n + j] = match (i < p, j < q) {
                    (true, true) => pos[i].dist(neg[j]),
                    (true, false) => domain.boundary_distance(pos[i]).max(0.0),
                    (false, true) => domain.boundary_distance(neg[j]).max(0.0),
                    (false, false) => 0.0,
                };
            }
        }
        min_cost_assignment(&cost, n).1
    } else {
        if pos.len() != neg.len() {
            return Err(Error::WeightMismatch { left: a.total_weight(), right: b.total_weight() });
        }
        let n = pos.len();
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cost[i * n + j] = pos[i].dist(neg[j]);
            }
        }
        min_cost_assignment(&cost, n).1
    };
    Ok(total * quantum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    /// `(reference index, atom index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_references: Vec<usize>,
    pub unmatched_atoms: Vec<usize>,
}

impl Pairing {
    pub fn atom_for(&self, reference: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == reference).map(|p| p.1)
    }
}

/// Greedy nearest-neighbour pairing between reference vortices and detected
/// atoms of the same sign.
///
/// Pairs farther apart than half the minimum reference separation are
/// rejected, so no atom can be closer to a second reference vortex.
pub fn pair_configurations(reference: &VortexConfig, detected: &AtomicMeasure) -> Pairing {
    let cutoff = 4.0 * separation_radius(reference, &Domain::Plane);
    let mut candidates = Vec::new();
    for (i, (p, d)) in reference.positions.iter().zip(&reference.degrees).enumerate() {
        for (k, atom) in detected.atoms().iter().enumerate() {
            let dist = p.dist(atom.point);
            if (*d as f64) * atom.weight > 0.0 && dist <= cutoff {
                candidates.push((dist, i, k));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ref_used = vec![false; reference.len()];
    let mut atom_used = vec![false; detected.len()];
    let mut pairs = Vec::new();
    for (_, i, k) in candidates {
        if !ref_used[i] && !atom_used[k] {
            ref_used[i] = true;
            atom_used[k] = true;
            pairs.push((i, k));
        }
    }
    pairs.sort();
    Pairing {
        pairs,
        unmatched_references: (0..reference.len()).filter(|&i| !ref_used[i]).collect(),
        unmatched_atoms: (0..detected.len()).filter(|&k| !atom_used[k]).collect(),
    }
}
