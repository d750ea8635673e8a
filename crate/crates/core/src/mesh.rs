//! Body-fitted annular mesh of the truncated exterior domain.
//!
//! Cell `(i, j)` spans `r in [i dr, (i+1) dr]` and `s in [(j - 1/2) ds, (j + 1/2) ds]`,
//! so the contact-curve node `j` sits at the middle of the inner face of cell
//! `(0, j)`. Vertices are pushed out along the normal of the curve; where the
//! curve is concave the extrusion direction is blended toward the radial
//! direction from the centroid so the outer rings cannot fold.

use crate::error::{Error, Result};
use crate::geometry::{cutoff, BoundaryCurve};

#[derive(Debug, Clone)]
pub struct ExteriorMesh {
    n_r: usize,
    n_s: usize,
    dr: f64,
    r_out: f64,
    chart_r0: f64,
    length: f64,
    vertices: Vec<[f64; 2]>,
    area: Vec<f64>,
    centroid: Vec<[f64; 2]>,
    width: Vec<f64>,
    rface_normal: Vec<[f64; 2]>,
    rface_len: Vec<f64>,
    sface_normal: Vec<[f64; 2]>,
    sface_len: Vec<f64>,
    gamma: Vec<[f64; 2]>,
    gamma_normal: Vec<[f64; 2]>,
    gamma_tangent: Vec<[f64; 2]>,
    /// Quadratic extrapolation weights from the first three rings to the curve.
    extrap: Vec<[f64; 3]>,
    // Inverse of the centroid Jacobian [[x_xi, y_xi], [x_eta, y_eta]] per cell.
    inv_jac: Vec<[[f64; 2]; 2]>,
    chi: Vec<f64>,
}

impl ExteriorMesh {
    /// Mesh with `n_r` rings out to distance `r_out` from the curve.
    pub fn new(curve: &BoundaryCurve, n_r: usize, r_out: f64) -> Result<Self> {
        if n_r < 3 {
            return Err(Error::GridMismatch("exterior mesh needs at least 3 rings".into()));
        }
        if !(r_out > 0.0) {
            return Err(Error::GridMismatch(format!("outer distance must be positive, got {r_out}")));
        }
        let n_s = curve.n_s();
        let ds = curve.ds();
        let dr = r_out / n_r as f64;
        let pts: Vec<[f64; 2]> = curve.nodes().iter().map(|p| p.x).collect();
        let c = centroid_of(&pts);
        let kmax = curve.max_abs_kappa();
        let chart_r0 = if kmax > 0.0 { 0.5 / kmax } else { curve.length() };

        let vframes: Vec<_> = (0..n_s).map(|j| curve.eval((j as f64 - 0.5) * ds)).collect();
        let kneg = vframes.iter().chain(curve.nodes()).map(|p| (-p.kappa).max(0.0)).fold(0.0, f64::max);
        let mut vertices = vec![[0.0; 2]; (n_r + 1) * n_s];
        for (j, f) in vframes.iter().enumerate() {
            let mut x = f.x;
            vertices[j] = x;
            for i in 0..n_r {
                let rm = (i as f64 + 0.5) * dr;
                let d = if kneg == 0.0 {
                    f.normal
                } else {
                    // Start blending well before the normals of concave parts meet.
                    let beta = 1.0 - cutoff(rm, 0.5 / kneg);
                    let rad = [f.x[0] - c[0], f.x[1] - c[1]];
                    let rn = rad[0].hypot(rad[1]);
                    let mix = [
                        (1.0 - beta) * f.normal[0] + beta * rad[0] / rn,
                        (1.0 - beta) * f.normal[1] + beta * rad[1] / rn,
                    ];
                    let m = mix[0].hypot(mix[1]);
                    [mix[0] / m, mix[1] / m]
                };
                if kneg == 0.0 {
                    let r = (i + 1) as f64 * dr;
                    x = [f.x[0] + r * d[0], f.x[1] + r * d[1]];
                } else {
                    x = [x[0] + dr * d[0], x[1] + dr * d[1]];
                }
                vertices[(i + 1) * n_s + j] = x;
            }
        }

        let v = |i: usize, j: usize| vertices[i * n_s + (j % n_s)];
        let mut area = Vec::with_capacity(n_r * n_s);
        let mut centroid = Vec::with_capacity(n_r * n_s);
        for i in 0..n_r {
            for j in 0..n_s {
                let quad = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
                let (a, cc) = polygon_area_centroid(&quad);
                if !(a > 0.0) {
                    return Err(Error::InvalidCurve(format!("exterior mesh folds at cell ({i}, {j})")));
                }
                area.push(a);
                centroid.push(cc);
            }
        }
        let mut rface_normal = Vec::with_capacity((n_r + 1) * n_s);
        let mut rface_len = Vec::with_capacity((n_r + 1) * n_s);
        for i in 0..=n_r {
            for j in 0..n_s {
                let (a, b) = (v(i, j), v(i, j + 1));
                let d = [b[0] - a[0], b[1] - a[1]];
                let l = d[0].hypot(d[1]);
                rface_normal.push([d[1] / l, -d[0] / l]);
                rface_len.push(l);
            }
        }
        let mut sface_normal = Vec::with_capacity(n_r * n_s);
        let mut sface_len = Vec::with_capacity(n_r * n_s);
        for i in 0..n_r {
            for j in 0..n_s {
                let (a, b) = (v(i, j), v(i + 1, j));
                let e = [b[0] - a[0], b[1] - a[1]];
                let l = e[0].hypot(e[1]);
                sface_normal.push([-e[1] / l, e[0] / l]);
                sface_len.push(l);
            }
        }
        let width = (0..n_r * n_s)
            .map(|k| {
                let (i, j) = (k / n_s, k % n_s);
                let lmax = rface_len[i * n_s + j]
                    .max(rface_len[(i + 1) * n_s + j])
                    .max(sface_len[k])
                    .max(sface_len[i * n_s + (j + 1) % n_s]);
                area[k] / lmax
            })
            .collect();
        let gamma: Vec<[f64; 2]> = pts;
        let gamma_normal: Vec<[f64; 2]> = curve.nodes().iter().map(|p| p.normal).collect();
        let gamma_tangent: Vec<[f64; 2]> = curve.nodes().iter().map(|p| p.tangent).collect();
        let extrap = (0..n_s)
            .map(|j| {
                let nn = gamma_normal[j];
                let t = |i: usize| {
                    let cc = centroid[i * n_s + j];
                    (cc[0] - gamma[j][0]) * nn[0] + (cc[1] - gamma[j][1]) * nn[1]
                };
                let (t0, t1, t2) = (t(0), t(1), t(2));
                [
                    t1 * t2 / ((t0 - t1) * (t0 - t2)),
                    t0 * t2 / ((t1 - t0) * (t1 - t2)),
                    t0 * t1 / ((t2 - t0) * (t2 - t1)),
                ]
            })
            .collect();
        let inv_jac = (0..n_r * n_s)
            .map(|k| {
                let (i, j) = (k / n_s, k % n_s);
                let cc = |ii: usize, jj: usize| centroid[ii * n_s + (jj % n_s)];
                let x_xi = diff_xi(i, n_r, |ii| cc(ii, j));
                let x_eta = {
                    let (a, b) = (cc(i, j + 1), cc(i, j + n_s - 1));
                    [0.5 * (a[0] - b[0]), 0.5 * (a[1] - b[1])]
                };
                let det = x_xi[0] * x_eta[1] - x_xi[1] * x_eta[0];
                [[x_eta[1] / det, -x_xi[1] / det], [-x_eta[0] / det, x_xi[0] / det]]
            })
            .collect();
        let chi = (0..n_r).map(|i| cutoff((i as f64 + 0.5) * dr, chart_r0)).collect();
        Ok(Self {
            n_r,
            n_s,
            dr,
            r_out,
            chart_r0,
            length: curve.length(),
            vertices,
            area,
            centroid,
            width,
            rface_normal,
            rface_len,
            sface_normal,
            sface_len,
            gamma,
            gamma_normal,
            gamma_tangent,
            extrap,
            inv_jac,
            chi,
        })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_s(&self) -> usize {
        self.n_s
    }
    pub fn n_cells(&self) -> usize {
        self.n_r * self.n_s
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn ds(&self) -> f64 {
        self.length / self.n_s as f64
    }
    pub fn r_out(&self) -> f64 {
        self.r_out
    }
    pub fn curve_length(&self) -> f64 {
        self.length
    }
    /// Half-width of the tubular chart used for the cutoff.
    pub fn chart_r0(&self) -> f64 {
        self.chart_r0
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n_s + j
    }

    pub fn vertex(&self, i: usize, j: usize) -> [f64; 2] {
        self.vertices[i * self.n_s + (j % self.n_s)]
    }
    pub fn areas(&self) -> &[f64] {
        &self.area
    }
    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroid
    }
    pub fn widths(&self) -> &[f64] {
        &self.width
    }
    /// Face between rings `i-1` and `i` at column `j` (`i = 0` is the curve,
    /// `i = n_r` the outer boundary), normal pointing away from the curve.
    #[inline]
    pub fn rface(&self, i: usize, j: usize) -> ([f64; 2], f64) {
        let k = i * self.n_s + j;
        (self.rface_normal[k], self.rface_len[k])
    }
    /// Face between cells `(i, j-1)` and `(i, j)`, normal pointing toward `(i, j)`.
    #[inline]
    pub fn sface(&self, i: usize, j: usize) -> ([f64; 2], f64) {
        let k = i * self.n_s + (j % self.n_s);
        (self.sface_normal[k], self.sface_len[k])
    }
    pub fn gamma(&self, j: usize) -> [f64; 2] {
        self.gamma[j]
    }
    pub fn gamma_normal(&self, j: usize) -> [f64; 2] {
        self.gamma_normal[j]
    }
    pub fn gamma_tangent(&self, j: usize) -> [f64; 2] {
        self.gamma_tangent[j]
    }
    /// Trapezoid weight of curve node `j`.
    pub fn gamma_weight(&self, _j: usize) -> f64 {
        self.ds()
    }
    /// Cutoff value on ring `i`.
    pub fn chi(&self, i: usize) -> f64 {
        self.chi[i]
    }

    /// Quadratic extrapolation of the values on the first three rings to the
    /// curve node `j`, along the normal.
    #[inline]
    pub fn trace_of(&self, f: [f64; 3], j: usize) -> f64 {
        let w = self.extrap[j];
        w[0] * f[0] + w[1] * f[1] + w[2] * f[2]
    }

    pub fn trace(&self, field: &[f64]) -> Vec<f64> {
        let n = self.n_s;
        (0..n).map(|j| self.trace_of([field[j], field[n + j], field[2 * n + j]], j)).collect()
    }

    /// Cell-centered gradient from centroid differences; exact for linear fields.
    pub fn gradient(&self, field: &[f64]) -> Vec<[f64; 2]> {
        let (n_r, n_s) = (self.n_r, self.n_s);
        (0..n_r * n_s)
            .map(|k| {
                let (i, j) = (k / n_s, k % n_s);
                let f_xi = diff_xi(i, n_r, |ii| [field[ii * n_s + j], 0.0])[0];
                let f_eta = 0.5 * (field[i * n_s + (j + 1) % n_s] - field[i * n_s + (j + n_s - 1) % n_s]);
                let m = self.inv_jac[k];
                [m[0][0] * f_xi + m[0][1] * f_eta, m[1][0] * f_xi + m[1][1] * f_eta]
            })
            .collect()
    }

    /// Discrete `d_1 v_2 - d_2 v_1` at the cell centers.
    pub fn vorticity(&self, v1: &[f64], v2: &[f64]) -> Vec<f64> {
        let g1 = self.gradient(v1);
        let g2 = self.gradient(v2);
        g1.iter().zip(&g2).map(|(a, b)| b[0] - a[1]).collect()
    }

    /// Cell sum `sum f A`.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field.iter().zip(&self.area).map(|(f, a)| f * a).sum()
    }
}

/// Second-order difference along the ring index (one-sided at the ends).
fn diff_xi(i: usize, n_r: usize, f: impl Fn(usize) -> [f64; 2]) -> [f64; 2] {
    let comb = |a: [f64; 2], wa: f64, b: [f64; 2], wb: f64, c: [f64; 2], wc: f64| {
        [wa * a[0] + wb * b[0] + wc * c[0], wa * a[1] + wb * b[1] + wc * c[1]]
    };
    if i == 0 {
        comb(f(0), -1.5, f(1), 2.0, f(2), -0.5)
    } else if i == n_r - 1 {
        comb(f(i), 1.5, f(i - 1), -2.0, f(i - 2), 0.5)
    } else {
        comb(f(i + 1), 0.5, f(i - 1), -0.5, f(i), 0.0)
    }
}

fn polygon_area_centroid(p: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let n = p.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (u, w) = (p[k], p[(k + 1) % n]);
        let cr = u[0] * w[1] - w[0] * u[1];
        a += cr;
        cx += (u[0] + w[0]) * cr;
        cy += (u[1] + w[1]) * cr;
    }
    (0.5 * a, [cx / (3.0 * a), cy / (3.0 * a)])
}

fn centroid_of(p: &[[f64; 2]]) -> [f64; 2] {
    polygon_area_centroid(p).1
}
