//! Fourier-Chebyshev solver on a disk with radially symmetric depth.
//!
//! Each Fourier mode `e^{ik theta}` reduces the problem to the radial equation
//! `rho (rho h phi')' - k^2 h phi = 0`, which is collocated on the full diameter
//! `[-R, R]` (odd node count, so the singular center is never a node) with the
//! parity-respecting boundary values `phi(R) = 1`, `phi(-R) = (-1)^k`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, CurveSpec};
use crate::interior::{InteriorBathymetry, InteriorSolution};
use crate::trace::{fft_forward_inverse, signed_mode, spectral_derivative};

/// Chebyshev points `x_j = cos(j pi / n)` and the differentiation matrix.
pub fn chebyshev_matrix(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
    let c = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut row = 0.0;
        for j in 0..=n {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let v = c(i) / c(j) * sign / (x[i] - x[j]);
                d[(i, j)] = v;
                row += v;
            }
        }
        d[(i, i)] = -row;
    }
    (x, d)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Debug, Clone)]
pub struct SpectralDisk {
    n_s: usize,
    radius: f64,
    x: Vec<f64>,
    d: DMatrix<f64>,
    h_nodes: Vec<f64>,
    /// Radial mode shapes on the full diameter, `modes[k][j]`.
    modes: Vec<Vec<f64>>,
    symbols: Vec<f64>,
    residual: f64,
    nodes: Vec<[f64; 2]>,
    theta: Vec<f64>,
}

impl SpectralDisk {
    pub fn new(curve: &BoundaryCurve, bathy: &InteriorBathymetry) -> Result<Self> {
        let (radius, center) = match curve.spec() {
            CurveSpec::Circle { radius, center } => (*radius, *center),
            _ => return Err(Error::Unsupported("spectral backend needs a circular curve".into())),
        };
        if !bathy.is_radial()
            || (bathy.center[0] - center[0]).hypot(bathy.center[1] - center[1]) > 1e-12 * radius
        {
            return Err(Error::Unsupported(
                "spectral backend needs depth radially symmetric about the disk center".into(),
            ));
        }
        let n_s = curve.n_s();
        let mut n = n_s / 2 + 41;
        if n % 2 == 0 {
            n += 1;
        }
        let (x, d) = chebyshev_matrix(n);
        let h_nodes: Vec<f64> = x.iter().map(|&xj| bathy.radial(radius * xj.abs()).unwrap()).collect();
        for &h in &h_nodes {
            if !(h >= bathy.c0) || !(bathy.c0 > 0.0) {
                return Err(Error::DepthFloor { value: h, c0: bathy.c0 });
            }
        }
        // x D (x h) D, shared by every mode.
        let xh = DMatrix::from_diagonal(&DVector::from_iterator(n + 1, x.iter().zip(&h_nodes).map(|(a, b)| a * b)));
        let xd = DMatrix::from_diagonal(&DVector::from_vec(x.clone()));
        let base = &xd * &d * xh * &d;
        let kmax = n_s / 2;
        let solved: Vec<Result<(Vec<f64>, f64, f64)>> = (0..=kmax)
            .into_par_iter()
            .map(|k| {
                if k == 0 {
                    return Ok((vec![1.0; n + 1], 0.0, 0.0));
                }
                let k2 = (k * k) as f64;
                let mut l = base.clone();
                for j in 0..=n {
                    l[(j, j)] -= k2 * h_nodes[j];
                }
                let op = l.clone();
                let mut rhs = DVector::zeros(n + 1);
                for (row, val) in [(0usize, 1.0), (n, if k % 2 == 0 { 1.0 } else { -1.0 })] {
                    l.row_mut(row).fill(0.0);
                    l[(row, row)] = 1.0;
                    rhs[row] = val;
                }
                let phi = l
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::SingularSystem(format!("radial mode {k}")))?;
                let r = &op * &phi;
                let scale = op.amax() * phi.amax();
                let res = (1..n).map(|j| r[j].abs()).fold(0.0, f64::max) / scale;
                let dphi = (&d * &phi)[0];
                Ok((phi.iter().copied().collect(), h_nodes[0] * dphi / radius, res))
            })
            .collect();
        let mut modes = Vec::with_capacity(kmax + 1);
        let mut symbols = Vec::with_capacity(kmax + 1);
        let mut residual = 0.0f64;
        for s in solved {
            let (phi, sigma, res) = s?;
            modes.push(phi);
            symbols.push(sigma);
            residual = residual.max(res);
        }
        let theta: Vec<f64> = (0..n_s).map(|l| 2.0 * PI * l as f64 / n_s as f64).collect();
        let n_pos = (n - 1) / 2 + 1;
        let mut nodes = Vec::with_capacity(n_pos * n_s);
        for &xj in x.iter().take(n_pos) {
            for &th in &theta {
                nodes.push([center[0] + radius * xj * th.cos(), center[1] + radius * xj * th.sin()]);
            }
        }
        Ok(Self { n_s, radius, x, d, h_nodes, modes, symbols, residual, nodes, theta })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    /// DtN symbol of Fourier mode `k` (in the angle), `0 <= k <= n_s/2`.
    pub fn symbol(&self, k: usize) -> f64 {
        self.symbols[k]
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_s).collect()
    }

    fn n_pos(&self) -> usize {
        (self.x.len() - 2) / 2 + 1
    }

    pub fn solve(&self, psi: &[f64]) -> InteriorSolution {
        let n = self.n_s;
        let mut spec: Vec<Complex64> = psi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_forward_inverse(&mut spec, false);
        let mut phi = Vec::with_capacity(self.nodes.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for jr in 0..self.n_pos() {
            for (m, b) in buf.iter_mut().enumerate() {
                let k = signed_mode(m, n).unsigned_abs() as usize;
                *b = spec[m] * self.modes[k][jr] / n as f64;
            }
            fft_forward_inverse(&mut buf, true);
            phi.extend(buf.iter().map(|c| c.re));
        }
        InteriorSolution { nodes: self.nodes.clone(), phi, residual: self.residual }
    }

    pub fn dtn_matrix(&self) -> Vec<f64> {
        let n = self.n_s;
        let mut col: Vec<Complex64> = (0..n)
            .map(|m| Complex64::new(self.symbols[signed_mode(m, n).unsigned_abs() as usize], 0.0))
            .collect();
        fft_forward_inverse(&mut col, true);
        let c: Vec<f64> = col.iter().map(|z| z.re / n as f64).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = c[(i + n - j) % n];
            }
        }
        out
    }

    /// Values along the diameter through angle index `l`, extended to negative
    /// abscissae through the antipodal angle.
    fn diameter(&self, f: &[f64], l: usize) -> DVector<f64> {
        let n = self.x.len() - 1;
        let np = self.n_pos();
        let ns = self.n_s;
        DVector::from_iterator(
            n + 1,
            (0..=n).map(|j| if j < np { f[j * ns + l] } else { f[(n - j) * ns + (l + ns / 2) % ns] }),
        )
    }

    pub fn gradient(&self, phi: &[f64]) -> Result<Vec<[f64; 2]>> {
        if phi.len() != self.nodes.len() {
            return Err(Error::SizeMismatch { expected: self.nodes.len(), got: phi.len() });
        }
        let ns = self.n_s;
        let np = self.n_pos();
        let mut d_rho = vec![0.0; phi.len()];
        for l in 0..ns {
            let dcol = &self.d * self.diameter(phi, l);
            for j in 0..np {
                d_rho[j * ns + l] = dcol[j] / self.radius;
            }
        }
        let mut out = Vec::with_capacity(phi.len());
        for j in 0..np {
            let d_th = spectral_derivative(&phi[j * ns..(j + 1) * ns], 2.0 * PI, 1);
            let rho = self.radius * self.x[j];
            for l in 0..ns {
                let (s, c) = self.theta[l].sin_cos();
                let (fr, ft) = (d_rho[j * ns + l], d_th[l] / rho);
                out.push([fr * c - ft * s, fr * s + ft * c]);
            }
        }
        Ok(out)
    }

    pub fn dirichlet_form(&self, phi1: &[f64], phi2: &[f64]) -> Result<f64> {
        let g1 = self.gradient(phi1)?;
        let g2 = self.gradient(phi2)?;
        let np = self.n_pos();
        let ns = self.n_s;
        let f: Vec<f64> = (0..np * ns)
            .map(|idx| {
                let j = idx / ns;
                self.h_nodes[j] * (g1[idx][0] * g2[idx][0] + g1[idx][1] * g2[idx][1])
            })
            .collect();
        let n = self.x.len() - 1;
        let (gx, gw) = gauss_legendre(n + 1);
        let bw: Vec<f64> = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut total = 0.0;
        for l in 0..ns {
            let col = self.diameter(&f, l);
            let mut acc = 0.0;
            for (t, w) in gx.iter().zip(&gw) {
                let y = 0.5 * (1.0 + t);
                acc += 0.5 * w * y * barycentric(&self.x, &bw, col.as_slice(), y);
            }
            total += acc;
        }
        Ok(total * self.radius * self.radius * 2.0 * PI / ns as f64)
    }
}

fn barycentric(x: &[f64], w: &[f64], f: &[f64], y: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..x.len() {
        let d = y - x[j];
        if d == 0.0 {
            return f[j];
        }
        let t = w[j] / d;
        num += t * f[j];
        den += t;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_differentiates_polynomials() {
        let (x, d) = chebyshev_matrix(9);
        let f = DVector::from_iterator(10, x.iter().map(|t| t.powi(5)));
        let df = &d * f;
        for (j, t) in x.iter().enumerate() {
            assert!((df[j] - 5.0 * t.powi(4)).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_integrates_exactly() {
        let (x, w) = gauss_legendre(7);
        let q: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(12)).sum();
        assert!((q - 2.0 / 13.0).abs() < 1e-14);
    }
}
