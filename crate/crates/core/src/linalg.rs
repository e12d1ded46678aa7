//! Fast Neumann solvers and Krylov iterations on node grids.
//!
//! The ghost-node Neumann Laplacian is diagonalized by the type-I discrete
//! cosine transform, computed here through an FFT of the even extension.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Type-I cosine transforms along both grid axes.
pub struct NeumannSpectral {
    nx: usize,
    ny: usize,
    fft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    /// Eigenvalues of the 1-D Neumann second difference, all <= 0.
    pub lambda_x: Vec<f64>,
    pub lambda_y: Vec<f64>,
    ext: Vec<Complex64>,
    scratch: Vec<Complex64>,
    tmp: Vec<Complex64>,
    buf: Vec<Complex64>,
}

fn eigenvalues(n: usize, h: f64) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * m)).sin();
            -4.0 * s * s / (h * h)
        })
        .collect()
}

impl NeumannSpectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fft_x = planner.plan_fft_forward(2 * (grid.nx - 1));
        let fft_y = planner.plan_fft_forward(2 * (grid.ny - 1));
        let scratch_len = fft_x.get_inplace_scratch_len().max(fft_y.get_inplace_scratch_len());
        NeumannSpectral {
            nx: grid.nx,
            ny: grid.ny,
            fft_x,
            fft_y,
            lambda_x: eigenvalues(grid.nx, grid.hx),
            lambda_y: eigenvalues(grid.ny, grid.hy),
            ext: Vec::new(),
            scratch: vec![Complex64::default(); scratch_len],
            tmp: vec![Complex64::default(); grid.nx * grid.ny],
            buf: vec![Complex64::default(); grid.nx * grid.ny],
        }
    }

    /// Unnormalized DCT-I of `count` contiguous lines of length `n`.
    fn dct_lines(fft: &Arc<dyn Fft<f64>>, ext: &mut Vec<Complex64>, scratch: &mut [Complex64], data: &mut [Complex64], n: usize) {
        let count = data.len() / n;
        let m = 2 * (n - 1);
        ext.resize(count * m, Complex64::default());
        for (line, e) in data.chunks_exact(n).zip(ext.chunks_exact_mut(m)) {
            e[..n].copy_from_slice(line);
            for j in 1..n - 1 {
                e[m - j] = line[j];
            }
        }
        fft.process_with_scratch(ext, scratch);
        for (line, e) in data.chunks_exact_mut(n).zip(ext.chunks_exact(m)) {
            for k in 0..n {
                line[k] = e[k] * 0.5;
            }
        }
    }

    fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
        const B: usize = 32;
        for rb in (0..rows).step_by(B) {
            for cb in (0..cols).step_by(B) {
                for r in rb..(rb + B).min(rows) {
                    for c in cb..(cb + B).min(cols) {
                        dst[c * rows + r] = src[r * cols + c];
                    }
                }
            }
        }
    }

    /// In-place 2-D DCT-I (unnormalized, self-inverse up to scaling).
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let (nx, ny) = (self.nx, self.ny);
        Self::dct_lines(&self.fft_x, &mut self.ext, &mut self.scratch, data, nx);
        Self::transpose(data, &mut self.tmp, ny, nx);
        Self::dct_lines(&self.fft_y, &mut self.ext, &mut self.scratch, &mut self.tmp, ny);
        Self::transpose(&self.tmp, data, nx, ny);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.forward(data);
        let s = 4.0 / ((self.nx - 1) * (self.ny - 1)) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Replaces `data` by `g(-Delta_h) data`, with `g` evaluated on the
    /// eigenvalues `mu >= 0` of the negative Neumann Laplacian.
    pub fn apply_symbol(&mut self, data: &mut [Complex64], g: impl Fn(f64) -> Complex64) {
        self.forward(data);
        for j in 0..self.ny {
            for i in 0..self.nx {
                data[j * self.nx + i] *= g(-(self.lambda_x[i] + self.lambda_y[j]));
            }
        }
        self.inverse(data);
    }

    /// Solves `(alpha - beta Delta_h) x = data` in place.
    pub fn solve_shifted(&mut self, data: &mut [Complex64], alpha: Complex64, beta: Complex64) {
        self.apply_symbol(data, |mu| 1.0 / (alpha + beta * mu));
    }

    /// Real version of [`Self::solve_shifted`].
    pub fn solve_shifted_real(&mut self, data: &mut [f64], alpha: f64, beta: f64) {
        let mut buf = std::mem::take(&mut self.buf);
        for (b, &d) in buf.iter_mut().zip(data.iter()) {
            *b = Complex64::new(d, 0.0);
        }
        self.apply_symbol(&mut buf, |mu| Complex64::new(1.0 / (alpha + beta * mu), 0.0));
        for (d, b) in data.iter_mut().zip(buf.iter()) {
            *d = b.re;
        }
        self.buf = buf;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Relative residual target in the weighted norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-12, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Accepts a stagnated solve if it got within this factor of the target.
const STAGNATION_SLACK: f64 = 100.0;

/// Preconditioned conjugate gradients for an operator self-adjoint and
/// positive in the inner product weighted by `w`.
pub fn pcg_real(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    w: &[f64],
    opts: KrylovOptions,
) -> Result<KrylovStats> {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).zip(w).map(|((a, b), c)| a * b * c).sum() };
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rho = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(KrylovStats { iterations: it, relative_residual: res });
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::LinearSolveFailure(format!("operator not positive (p.Ap = {pq:e})")));
        }
        let alpha = rho / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        precond(&r, &mut z);
        let rho_new = dot(&r, &z);
        let beta = rho_new / rho;
        rho = rho_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if res <= opts.tol * STAGNATION_SLACK {
        Ok(KrylovStats { iterations: opts.max_iter, relative_residual: res })
    } else {
        Err(Error::LinearSolveFailure(format!("no convergence in {} iterations (residual {res:e})", opts.max_iter)))
    }
}

/// Conjugate gradients for complex systems. With `hermitian` the operator
/// must be self-adjoint positive in the weighted inner product; otherwise it
/// must be complex symmetric in the weighted bilinear form (COCG).
pub fn cg_complex(
    mut apply: impl FnMut(&[Complex64], &mut [Complex64]),
    mut precond: impl FnMut(&[Complex64], &mut [Complex64]),
    b: &[Complex64],
    x: &mut [Complex64],
    w: &[f64],
    hermitian: bool,
    opts: KrylovOptions,
) -> Result<KrylovStats> {
    let n = b.len();
    let form = |u: &[Complex64], v: &[Complex64]| -> Complex64 {
        let mut s = Complex64::default();
        if hermitian {
            for k in 0..u.len() {
                s += u[k].conj() * v[k] * w[k];
            }
        } else {
            for k in 0..u.len() {
                s += u[k] * v[k] * w[k];
            }
        }
        s
    };
    let norm = |u: &[Complex64]| -> f64 { u.iter().zip(w).map(|(a, c)| a.norm_sqr() * c).sum::<f64>().sqrt() };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::default());
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![Complex64::default(); n];
    apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z = vec![Complex64::default(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![Complex64::default(); n];
    let mut rho = form(&r, &z);
    let mut res = norm(&r) / bnorm;
    let mut best = res;
    let mut since_best = 0usize;
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(KrylovStats { iterations: it, relative_residual: res });
        }
        apply(&p, &mut q);
        let pq = form(&p, &q);
        if pq.norm() == 0.0 || !pq.is_finite() {
            return Err(Error::LinearSolveFailure("Krylov breakdown".into()));
        }
        let alpha = rho / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        res = norm(&r) / bnorm;
        if res < best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 20 && best <= opts.tol * STAGNATION_SLACK {
                return Ok(KrylovStats { iterations: it + 1, relative_residual: res });
            }
        }
        precond(&r, &mut z);
        let rho_new = form(&r, &z);
        let beta = rho_new / rho;
        rho = rho_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if res <= opts.tol * STAGNATION_SLACK {
        Ok(KrylovStats { iterations: opts.max_iter, relative_residual: res })
    } else {
        Err(Error::LinearSolveFailure(format!("no convergence in {} iterations (residual {res:e})", opts.max_iter)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::apply_div_grad;

    fn grid() -> Grid {
        Grid::covering(-1.0, 1.0, 0.0, 3.0, 9, 13).unwrap()
    }

    #[test]
    fn forward_then_inverse_is_identity() {
        let g = grid();
        let mut s = NeumannSpectral::new(&g);
        let orig: Vec<Complex64> = (0..g.len()).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.7).cos())).collect();
        let mut d = orig.clone();
        s.forward(&mut d);
        s.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn shifted_solve_inverts_ghost_node_laplacian() {
        let g = grid();
        let mut s = NeumannSpectral::new(&g);
        let x: Vec<Complex64> = (0..g.len()).map(|k| Complex64::new((0.3 * k as f64).sin(), 0.1 * k as f64)).collect();
        let mut lap = vec![Complex64::default(); g.len()];
        apply_div_grad(&g, None, &x, &mut lap);
        let (alpha, beta) = (Complex64::new(2.0, 0.5), Complex64::new(0.3, -1.0));
        let mut rhs: Vec<Complex64> = x.iter().zip(&lap).map(|(a, l)| alpha * a - beta * l).collect();
        s.solve_shifted(&mut rhs, alpha, beta);
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).norm() < 1e-11);
        }
    }

    #[test]
    fn pcg_solves_variable_coefficient_problem() {
        let g = grid();
        let c: Vec<f64> = (0..g.len()).map(|k| 1.0 + 0.5 * (k as f64 * 0.37).sin().powi(2)).collect();
        let w = g.node_weights();
        let xs: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.11).cos()).collect();
        let op = |u: &[f64], out: &mut [f64]| {
            apply_div_grad(&g, Some(&c), u, out);
            for k in 0..u.len() {
                out[k] = 3.0 * u[k] - out[k];
            }
        };
        let mut b = vec![0.0; g.len()];
        op(&xs, &mut b);
        let mut spec = NeumannSpectral::new(&g);
        let mut x = vec![0.0; g.len()];
        let st = pcg_real(op, |r, z| {
            z.copy_from_slice(r);
            spec.solve_shifted_real(z, 3.0, 1.2);
        }, &b, &mut x, &w, KrylovOptions { tol: 1e-13, max_iter: 200 })
        .unwrap();
        assert!(st.iterations < 60);
        for (a, e) in x.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-10);
        }
    }
}
