//! Node-based rectangular grids, trapezoid quadrature, Neumann difference
//! operators and binary/CSV field I/O.
//!
//! Nodes sit at `x0 + i*hx`, `y0 + j*hy` and values are stored row-major
//! (`index = j*nx + i`). Quadrature weights are 1 inside, 1/2 on edges and
//! 1/4 at corners, times the cell area. The Laplacian uses ghost nodes
//! mirrored across the boundary, which makes it the exact first variation
//! of the trapezoid Dirichlet energy.

use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, x0: f64, y0: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::BadParams(format!("grid needs at least 3x3 nodes, got {nx}x{ny}")));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite() && x0.is_finite() && y0.is_finite()) {
            return Err(Error::BadParams("grid spacings must be positive and finite".into()));
        }
        Ok(Grid { nx, ny, hx, hy, x0, y0 })
    }

    /// `n x n` nodes covering `[xmin, xmax] x [ymin, ymax]`.
    pub fn covering(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 || !(xmax > xmin) || !(ymax > ymin) {
            return Err(Error::BadParams("degenerate grid box".into()));
        }
        Grid::new(nx, ny, (xmax - xmin) / (nx - 1) as f64, (ymax - ymin) / (ny - 1) as f64, xmin, ymin)
    }

    /// Square box `[-a, a]^2` with spacing at most `h`.
    pub fn square_with_spacing(half_width: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && half_width > 0.0) {
            return Err(Error::BadParams("box and spacing must be positive".into()));
        }
        let cells = (2.0 * half_width / h - 1e-9).ceil().max(2.0) as usize;
        Grid::covering(-half_width, half_width, -half_width, half_width, cells + 1, cells + 1)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.hx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.hy
    }

    pub fn xmax(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn ymax(&self) -> f64 {
        self.y(self.ny - 1)
    }

    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Trapezoid weight of node `(i, j)` without the cell area.
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i + 1 == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j + 1 == self.ny { 0.5 } else { 1.0 };
        wx * wy
    }

    pub fn node_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                w.push(self.node_weight(i, j));
            }
        }
        w
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        self.nx == other.nx
            && self.ny == other.ny
            && close(self.hx, other.hx)
            && close(self.hy, other.hy)
            && close(self.x0, other.x0)
            && close(self.y0, other.y0)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Trapezoid integral of `f` over the grid box.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ny {
            let wy = if j == 0 || j + 1 == self.ny { 0.5 } else { 1.0 };
            let row = &f[j * self.nx..(j + 1) * self.nx];
            let inner: f64 = row[1..self.nx - 1].iter().sum::<f64>() + 0.5 * (row[0] + row[self.nx - 1]);
            s += wy * inner;
        }
        s * self.cell_area()
    }
}

/// Values that difference operators act on.
pub trait FieldValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync {}
impl FieldValue for f64 {}
impl FieldValue for Complex64 {}

/// `div(c grad u)` with edge coefficients `(c_i + c_j)/2` and mirrored ghost
/// nodes. With `c = None` this is the plain 5-point Laplacian.
pub fn apply_div_grad<T: FieldValue>(grid: &Grid, c: Option<&[f64]>, u: &[T], out: &mut [T]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let (ax, ay) = (1.0 / (grid.hx * grid.hx), 1.0 / (grid.hy * grid.hy));
    let coef = |a: usize, b: usize| match c {
        Some(c) => 0.5 * (c[a] + c[b]),
        None => 1.0,
    };
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let uk = u[k];
            let mut acc = T::default();
            let mut sx = T::default();
            if i == 0 {
                sx = sx + (u[k + 1] - uk) * (2.0 * coef(k, k + 1));
            } else if i + 1 == nx {
                sx = sx + (u[k - 1] - uk) * (2.0 * coef(k, k - 1));
            } else {
                sx = sx + (u[k + 1] - uk) * coef(k, k + 1) + (u[k - 1] - uk) * coef(k, k - 1);
            }
            acc = acc + sx * ax;
            let mut sy = T::default();
            if j == 0 {
                sy = sy + (u[k + nx] - uk) * (2.0 * coef(k, k + nx));
            } else if j + 1 == ny {
                sy = sy + (u[k - nx] - uk) * (2.0 * coef(k, k - nx));
            } else {
                sy = sy + (u[k + nx] - uk) * coef(k, k + nx) + (u[k - nx] - uk) * coef(k, k - nx);
            }
            out[k] = acc + sy * ay;
        }
    }
}

/// Trapezoid Dirichlet energy `1/2 int c |grad u|^2` whose first variation
/// is `-apply_div_grad`.
pub fn dirichlet_energy<T: FieldValue>(grid: &Grid, c: Option<&[f64]>, u: &[T], modsq: impl Fn(T) -> f64) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let coef = |a: usize, b: usize| match c {
        Some(c) => 0.5 * (c[a] + c[b]),
        None => 1.0,
    };
    let mut ex = 0.0;
    for j in 0..ny {
        let w = if j == 0 || j + 1 == ny { 0.5 } else { 1.0 };
        for i in 0..nx - 1 {
            let k = j * nx + i;
            ex += w * coef(k, k + 1) * modsq(u[k + 1] - u[k]);
        }
    }
    let mut ey = 0.0;
    for j in 0..ny - 1 {
        for i in 0..nx {
            let w = if i == 0 || i + 1 == nx { 0.5 } else { 1.0 };
            let k = j * nx + i;
            ey += w * coef(k, k + nx) * modsq(u[k + nx] - u[k]);
        }
    }
    0.5 * grid.cell_area() * (ex / (grid.hx * grid.hx) + ey / (grid.hy * grid.hy))
}

/// Centered first differences; one-sided differences on the boundary rows.
pub fn gradient<T: FieldValue>(grid: &Grid, u: &[T]) -> (Vec<T>, Vec<T>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut gx = vec![T::default(); u.len()];
    let mut gy = vec![T::default(); u.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            gx[k] = if i == 0 {
                (u[k + 1] - u[k]) * (1.0 / grid.hx)
            } else if i + 1 == nx {
                (u[k] - u[k - 1]) * (1.0 / grid.hx)
            } else {
                (u[k + 1] - u[k - 1]) * (0.5 / grid.hx)
            };
            gy[k] = if j == 0 {
                (u[k + nx] - u[k]) * (1.0 / grid.hy)
            } else if j + 1 == ny {
                (u[k] - u[k - nx]) * (1.0 / grid.hy)
            } else {
                (u[k + nx] - u[k - nx]) * (0.5 / grid.hy)
            };
        }
    }
    (gx, gy)
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GeometryMismatch(format!("{} values for a {} node grid", data.len(), grid.len())));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn constant(grid: Grid, v: f64) -> Self {
        ScalarField { grid, data: vec![v; grid.len()] }
    }

    pub fn sample(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                data.push(f(grid.x(i), y));
            }
        }
        ScalarField { grid, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation, clamped to the grid box.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let fx = ((x - g.x0) / g.hx).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((y - g.y0) / g.hy).clamp(0.0, (g.ny - 1) as f64);
        let i = (fx.floor() as usize).min(g.nx - 2);
        let j = (fy.floor() as usize).min(g.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |a, b| self.data[g.idx(a, b)];
        (1.0 - ty) * ((1.0 - tx) * v(i, j) + tx * v(i + 1, j)) + ty * ((1.0 - tx) * v(i, j + 1) + tx * v(i + 1, j + 1))
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = header_bytes(GRID_MAGIC, &self.grid);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_file(path, &buf)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let (grid, body) = parse_header(GRID_MAGIC, &bytes)?;
        if body.len() != grid.len() * 8 {
            return Err(Error::Parse(format!("expected {} payload bytes, found {}", grid.len() * 8, body.len())));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        ScalarField::new(grid, data)
    }

    /// CSV with columns `x,y,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("x,y,value\n");
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                s.push_str(&format!("{:.12e},{:.12e},{:.15e}\n", self.grid.x(i), self.grid.y(j), self.data[self.grid.idx(i, j)]));
            }
        }
        write_file(path, s.as_bytes())
    }
}

pub(crate) const GRID_MAGIC: &[u8; 8] = b"VLGRID1\0";
pub(crate) const COMPLEX_MAGIC: &[u8; 8] = b"VLCPLX1\0";
const HEADER_LEN: usize = 8 + 4 + 4 + 4 * 8;

pub(crate) fn header_bytes(magic: &[u8; 8], g: &Grid) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(g.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u32).to_le_bytes());
    for v in [g.hx, g.hy, g.x0, g.y0] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub(crate) fn parse_header<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(Grid, &'a [u8])> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != magic {
        return Err(Error::Parse(format!("missing {} header", String::from_utf8_lossy(&magic[..7]))));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let grid = Grid::new(u32_at(8), u32_at(12), f64_at(16), f64_at(24), f64_at(32), f64_at(40))?;
    Ok((grid, &bytes[HEADER_LEN..]))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_is_variation_of_dirichlet_energy() {
        let g = Grid::covering(-1.0, 2.0, 0.0, 1.5, 7, 5).unwrap();
        let c: Vec<f64> = (0..g.len()).map(|k| 1.0 + 0.1 * (k as f64).sin()).collect();
        let u: Vec<f64> = (0..g.len()).map(|k| (0.3 * k as f64).cos()).collect();
        let mut lu = vec![0.0; g.len()];
        apply_div_grad(&g, Some(&c), &u, &mut lu);
        let w = g.node_weights();
        for k in [0, 3, 8, 17, g.len() - 1] {
            let mut up = u.clone();
            let mut um = u.clone();
            let d = 1e-6;
            up[k] += d;
            um[k] -= d;
            let fd = (dirichlet_energy(&g, Some(&c), &up, |v| v * v) - dirichlet_energy(&g, Some(&c), &um, |v| v * v)) / (2.0 * d);
            let exact = -w[k] * g.cell_area() * lu[k];
            assert!((fd - exact).abs() < 1e-7 * exact.abs().max(1.0), "{k}: {fd} vs {exact}");
        }
    }

    #[test]
    fn trapezoid_integrates_bilinear_exactly() {
        let g = Grid::covering(0.0, 2.0, -1.0, 1.0, 9, 5).unwrap();
        let f = ScalarField::sample(g, |x, y| 1.0 + x + 3.0 * x * y);
        assert!((g.integrate(&f.data) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn binary_roundtrip() {
        let g = Grid::covering(-1.0, 1.0, -2.0, 2.0, 4, 6).unwrap();
        let f = ScalarField::sample(g, |x, y| x * 10.0 + y);
        let dir = std::env::temp_dir().join(format!("vlgrid-{}", std::process::id()));
        let p = dir.join("f.bin");
        f.write_binary(&p).unwrap();
        let back = ScalarField::read_binary(&p).unwrap();
        assert_eq!(back, f);
        assert!(matches!(ScalarField::read_binary(&dir.join("missing.bin")), Err(Error::FileNotFound(_))));
        std::fs::remove_dir_all(dir).ok();
    }
}
