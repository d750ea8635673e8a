//! Second-order finite-volume solver on a polar-like grid for star-shaped
//! interiors.
//!
//! The interior is parametrized by `x = c + rho P(s)` with `P(s) = gamma(s) - c`,
//! `rho in [0, 1]`. In these coordinates the equation becomes
//! `d_rho(h (A phi_rho + B phi_s)) + d_s(h (B phi_rho + C phi_s)) = 0` with
//! `A = rho / a`, `B = -b / a`, `C = |P|^2 / (rho a)`, where `a = P x gamma'`
//! and `b = P . gamma'`. Rings are eliminated one block at a time.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::interior::{InteriorBathymetry, InteriorSolution};

#[derive(Debug, Clone, Copy)]
struct Station {
    p: [f64; 2],
    a: f64,
    b: f64,
    p2: f64,
}

impl Station {
    fn new(x: [f64; 2], tangent: [f64; 2], c: [f64; 2]) -> Self {
        let p = [x[0] - c[0], x[1] - c[1]];
        Self {
            p,
            a: p[0] * tangent[1] - p[1] * tangent[0],
            b: p[0] * tangent[0] + p[1] * tangent[1],
            p2: p[0] * p[0] + p[1] * p[1],
        }
    }
}

/// Sparse row of the global system: `(unknown index, coefficient)`.
type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct MappedFd {
    n_s: usize,
    rings: usize,
    ds: f64,
    center: [f64; 2],
    nodal: Vec<Station>,
    normals: Vec<[f64; 2]>,
    h_boundary: Vec<f64>,
    h_nodes: Vec<f64>,
    rows: Vec<Row>,
    /// `X_k` with block `k` = `X_k` block `k+1`; the last maps the boundary trace.
    elim: Vec<DMatrix<f64>>,
    nodes: Vec<[f64; 2]>,
}

impl MappedFd {
    pub fn new(curve: &BoundaryCurve, bathy: &InteriorBathymetry, rings: usize) -> Result<Self> {
        let n = curve.n_s();
        let m = rings.max(8);
        let ds = curve.ds();
        let pts: Vec<[f64; 2]> = curve.nodes().iter().map(|p| p.x).collect();
        let center = polygon_centroid(&pts);
        let nodal: Vec<Station> = curve.nodes().iter().map(|p| Station::new(p.x, p.tangent, center)).collect();
        let half: Vec<Station> = (0..n)
            .map(|j| {
                let p = curve.eval((j as f64 + 0.5) * ds);
                Station::new(p.x, p.tangent, center)
            })
            .collect();
        if nodal.iter().chain(&half).any(|st| !(st.a > 0.0)) {
            return Err(Error::Unsupported("curve is not star-shaped about its centroid".into()));
        }
        let drho = 1.0 / m as f64;
        let at = |rho: f64, st: &Station| [center[0] + rho * st.p[0], center[1] + rho * st.p[1]];
        let depth = |x: [f64; 2]| -> Result<f64> {
            let h = bathy.eval(x);
            if !(bathy.c0 > 0.0) || !(h >= bathy.c0) {
                return Err(Error::DepthFloor { value: h, c0: bathy.c0 });
            }
            Ok(h)
        };

        let idx = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * n + (j % n) };
        let mut rows: Vec<Row> = Vec::with_capacity(1 + (m - 1) * n);
        // Face coefficients, already multiplied by the face measure.
        let coef_r = |i_half: f64, j: usize| -> Result<(f64, f64)> {
            let st = &nodal[j];
            let h = depth(at(i_half * drho, st))?;
            Ok((h * i_half * drho / st.a * ds / drho, -h * st.b / st.a / 4.0))
        };
        let coef_s = |i: usize, j: usize| -> Result<(f64, f64)> {
            let st = &half[j % n];
            let rho = i as f64 * drho;
            let h = depth(at(rho, st))?;
            Ok((-h * st.b / st.a / 4.0, h * st.p2 / (rho * st.a) * drho / ds))
        };

        let mut center_row: Row = Vec::new();
        let mut c_diag = 0.0;
        for j in 0..n {
            let (a0, b0) = coef_r(0.5, j)?;
            center_row.push((idx(1, j), a0));
            c_diag -= a0;
            center_row.push((idx(1, j + 1), b0));
            center_row.push((idx(1, j + n - 1), -b0));
        }
        center_row.push((0, c_diag));
        rows.push(center_row);

        for i in 1..m {
            for j in 0..n {
                let (jp, jm) = (j + 1, j + n - 1);
                let mut row: Row = Vec::with_capacity(12);
                let (ar, br) = coef_r(i as f64 + 0.5, j)?;
                row.extend([(idx(i + 1, j), ar), (idx(i, j), -ar)]);
                row.extend([
                    (idx(i, jp), br),
                    (idx(i, jm), -br),
                    (idx(i + 1, jp), br),
                    (idx(i + 1, jm), -br),
                ]);
                let (al, bl) = coef_r(i as f64 - 0.5, j)?;
                row.extend([(idx(i, j), -al), (idx(i - 1, j), al)]);
                row.extend([
                    (idx(i - 1, jp), -bl),
                    (idx(i - 1, jm), bl),
                    (idx(i, jp), -bl),
                    (idx(i, jm), bl),
                ]);
                let (be, ce) = coef_s(i, j)?;
                row.extend([
                    (idx(i + 1, j), be),
                    (idx(i - 1, j), -be),
                    (idx(i + 1, jp), be),
                    (idx(i - 1, jp), -be),
                ]);
                row.extend([(idx(i, jp), ce), (idx(i, j), -ce)]);
                let (bw, cw) = coef_s(i, j + n - 1)?;
                row.extend([
                    (idx(i + 1, jm), -bw),
                    (idx(i - 1, jm), bw),
                    (idx(i + 1, j), -bw),
                    (idx(i - 1, j), bw),
                ]);
                row.extend([(idx(i, j), -cw), (idx(i, jm), cw)]);
                rows.push(compress(row));
            }
        }

        let h_boundary = nodal.iter().map(|st| depth(at(1.0, st))).collect::<Result<Vec<_>>>()?;
        let mut nodes = vec![center];
        let mut h_nodes = vec![depth(center)?];
        for i in 1..=m {
            for st in &nodal {
                let x = at(i as f64 * drho, st);
                nodes.push(x);
                h_nodes.push(depth(x)?);
            }
        }
        let normals = curve.nodes().iter().map(|p| p.normal).collect();
        let mut solver =
            Self { n_s: n, rings: m, ds, center, nodal, normals, h_boundary, h_nodes, rows, elim: Vec::new(), nodes };
        solver.eliminate()?;
        Ok(solver)
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn rings(&self) -> usize {
        self.rings
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        let start = 1 + (self.rings - 1) * self.n_s;
        (start..start + self.n_s).collect()
    }

    /// Unknown range of block `k` (block 0 is the center plus ring 1).
    fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let n = self.n_s;
        if k == 0 {
            0..n + 1
        } else {
            1 + k * n..1 + (k + 1) * n
        }
    }

    fn eliminate(&mut self) -> Result<()> {
        let nb = self.rings - 1;
        let mut elim: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let rr = self.block_range(k);
            let next = self.block_range(k + 1);
            let prev = if k > 0 { Some(self.block_range(k - 1)) } else { None };
            let size = rr.len();
            let mut d = DMatrix::<f64>::zeros(size, size);
            let mut u = DMatrix::<f64>::zeros(size, next.len());
            for (r, row) in self.rows[rr.clone()].iter().enumerate() {
                for &(c, v) in row {
                    if rr.contains(&c) {
                        d[(r, c - rr.start)] += v;
                    } else if next.contains(&c) {
                        u[(r, c - next.start)] += v;
                    } else if let (Some(p), Some(x)) = (&prev, elim.last()) {
                        // L_k X_{k-1}, using the sparsity of L.
                        let pr = c - p.start;
                        for col in 0..size {
                            d[(r, col)] += v * x[(pr, col)];
                        }
                    }
                }
            }
            let lu = d.lu();
            let x = lu
                .solve(&u)
                .ok_or_else(|| Error::SingularSystem(format!("interior ring block {k}")))?;
            elim.push(-x);
        }
        self.elim = elim;
        Ok(())
    }

    pub fn solve(&self, psi: &[f64]) -> Result<InteriorSolution> {
        let n = self.n_s;
        if psi.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: psi.len() });
        }
        let nb = self.rings - 1;
        let mut phi = vec![0.0; 1 + self.rings * n];
        phi[1 + (self.rings - 1) * n..].copy_from_slice(psi);
        let mut upper = DVector::from_column_slice(psi);
        for k in (0..nb).rev() {
            let cur = &self.elim[k] * &upper;
            let rr = self.block_range(k);
            phi[rr].copy_from_slice(cur.as_slice());
            upper = cur;
        }
        let residual = self.residual(&phi);
        Ok(InteriorSolution { nodes: self.nodes.clone(), phi, residual })
    }

    /// Relative residual of the discrete equations at the unknown nodes.
    pub fn residual(&self, phi: &[f64]) -> f64 {
        let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut worst = 0.0f64;
        for row in &self.rows {
            let diag = row.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
            let r: f64 = row.iter().map(|&(c, v)| v * phi[c]).sum();
            worst = worst.max(r.abs() / (diag * scale));
        }
        worst
    }

    /// Products of the elimination matrices giving rings `M-1..M-4` in terms of the trace.
    fn ring_maps(&self) -> Vec<DMatrix<f64>> {
        let n = self.n_s;
        let nb = self.rings - 1;
        let mut maps = Vec::with_capacity(4);
        let mut cur = self.elim[nb - 1].clone();
        maps.push(cur.clone());
        for q in 1..4 {
            let k = nb - 1 - q;
            cur = &self.elim[k] * &cur;
            if k == 0 {
                maps.push(cur.rows(1, n).into_owned());
            } else {
                maps.push(cur.clone());
            }
        }
        maps
    }

    pub fn dtn_matrix(&self) -> Result<Vec<f64>> {
        let n = self.n_s;
        let drho = 1.0 / self.rings as f64;
        let maps = self.ring_maps();
        let mut d_rho = DMatrix::<f64>::identity(n, n) * 25.0;
        for (w, mm) in [-48.0, 36.0, -16.0, 3.0].iter().zip(&maps) {
            d_rho += mm * *w;
        }
        d_rho /= 12.0 * drho;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let st = &self.nodal[i];
            let f = self.h_boundary[i] / st.a;
            let bs = st.b / (12.0 * self.ds);
            for j in 0..n {
                out[i * n + j] = f * d_rho[(i, j)];
            }
            for (off, w) in [(2usize, -1.0), (1, 8.0), (n - 1, -8.0), (n - 2, 1.0)] {
                out[i * n + (i + off) % n] -= f * bs * w;
            }
        }
        Ok(out)
    }

    pub fn gradient(&self, phi: &[f64]) -> Result<Vec<[f64; 2]>> {
        let n = self.n_s;
        let m = self.rings;
        if phi.len() != 1 + m * n {
            return Err(Error::SizeMismatch { expected: 1 + m * n, got: phi.len() });
        }
        let drho = 1.0 / m as f64;
        let at = |i: usize, j: usize| if i == 0 { phi[0] } else { phi[1 + (i - 1) * n + (j % n)] };
        let mut out = Vec::with_capacity(phi.len());
        // Least-squares plane through the first ring for the center value.
        let (mut sxx, mut sxy, mut syy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, st) in self.nodal.iter().enumerate() {
            let d = [drho * st.p[0], drho * st.p[1]];
            let f = at(1, j) - phi[0];
            sxx += d[0] * d[0];
            sxy += d[0] * d[1];
            syy += d[1] * d[1];
            bx += d[0] * f;
            by += d[1] * f;
        }
        let det = sxx * syy - sxy * sxy;
        out.push([(syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det]);
        for i in 1..=m {
            let rho = i as f64 * drho;
            for j in 0..n {
                let f_r = if i < m {
                    (at(i + 1, j) - at(i - 1, j)) / (2.0 * drho)
                } else {
                    (3.0 * at(m, j) - 4.0 * at(m - 1, j) + at(m - 2, j)) / (2.0 * drho)
                };
                let f_s = (at(i, j + 1) - at(i, j + n - 1)) / (2.0 * self.ds);
                let st = &self.nodal[j];
                let nrm = self.normals[j];
                let pp = [-st.p[1], st.p[0]];
                out.push([
                    f_r * nrm[0] / st.a + f_s * pp[0] / (rho * st.a),
                    f_r * nrm[1] / st.a + f_s * pp[1] / (rho * st.a),
                ]);
            }
        }
        Ok(out)
    }

    pub fn dirichlet_form(&self, phi1: &[f64], phi2: &[f64]) -> Result<f64> {
        let g1 = self.gradient(phi1)?;
        let g2 = self.gradient(phi2)?;
        let n = self.n_s;
        let m = self.rings;
        let drho = 1.0 / m as f64;
        let dot = |k: usize| self.h_nodes[k] * (g1[k][0] * g2[k][0] + g1[k][1] * g2[k][1]);
        let mean_a: f64 = self.nodal.iter().map(|s| s.a).sum::<f64>() / n as f64;
        let mut total = dot(0) * 0.5 * mean_a * (0.5 * drho).powi(2) * n as f64 * self.ds;
        for i in 1..=m {
            let rho = i as f64 * drho;
            let width = if i == m { 0.5 * drho } else { drho };
            let rho_c = if i == m { rho - 0.25 * drho } else { rho };
            for j in 0..n {
                let k = 1 + (i - 1) * n + j;
                total += dot(k) * rho_c * self.nodal[j].a * width * self.ds;
            }
        }
        Ok(total)
    }
}

fn compress(mut row: Row) -> Row {
    row.sort_by_key(|e| e.0);
    let mut out: Row = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

fn polygon_centroid(p: &[[f64; 2]]) -> [f64; 2] {
    let n = p.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (u, w) = (p[k], p[(k + 1) % n]);
        let cr = u[0] * w[1] - w[0] * u[1];
        a += cr;
        cx += (u[0] + w[0]) * cr;
        cy += (u[1] + w[1]) * cr;
    }
    [cx / (3.0 * a), cy / (3.0 * a)]
}
