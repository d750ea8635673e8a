#![allow(dead_code)]

//! Reference solutions that share no code with the library.

use std::io::Write;

/// One line per checked property, on stderr so it survives `--nocapture` and
/// the default capture alike when a test fails.
pub fn report(tag: &str, ok: bool, detail: &str) {
    let _ = writeln!(std::io::stderr(), "[{}] {tag}: {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Least squares slope of `log e` against `log h` with `h` halving per level.
pub fn observed_order(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let xs: Vec<f64> = (0..errors.len()).map(|k| -(k as f64) * 2f64.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// DtN symbol of mode `k` on the disk of radius `big_r` with depth
/// `h(rho) = sum_m c_m rho^(2m)`.
///
/// Writes `phi = rho^k w` and integrates the regular system for `(w, rho w')`
/// in `x = ln rho` with classical RK4, starting from the two-term Frobenius
/// series close to the center. The symbol is `h(R) (k / R + w'(R) / w(R))`.
pub fn radial_symbol(k: usize, coeffs: &[f64], big_r: f64) -> f64 {
    let h = |r: f64| coeffs.iter().rev().fold(0.0, |acc, &c| acc * r * r + c);
    let dh = |r: f64| {
        coeffs.iter().enumerate().skip(1).map(|(m, &c)| 2.0 * m as f64 * c * r.powi(2 * m as i32 - 1)).sum::<f64>()
    };
    let kf = k as f64;
    // rho h'/h, smooth in rho
    let q = |r: f64| r * dh(r) / h(r);
    let rhs = |x: f64, y: [f64; 2]| {
        let r = x.exp();
        [y[1], -2.0 * kf * y[1] - q(r) * (y[1] + kf * y[0])]
    };
    let r0: f64 = 1e-4 * big_r;
    let h2 = coeffs.get(1).copied().unwrap_or(0.0);
    let a = -kf * h2 / (coeffs[0] * (2.0 * kf + 2.0));
    let mut y = [1.0 + a * r0 * r0, 2.0 * a * r0 * r0];
    let (x0, x1) = (r0.ln(), big_r.ln());
    let n = 20_000;
    let dx = (x1 - x0) / n as f64;
    for i in 0..n {
        let x = x0 + i as f64 * dx;
        let k1 = rhs(x, y);
        let k2 = rhs(x + 0.5 * dx, [y[0] + 0.5 * dx * k1[0], y[1] + 0.5 * dx * k1[1]]);
        let k3 = rhs(x + 0.5 * dx, [y[0] + 0.5 * dx * k2[0], y[1] + 0.5 * dx * k2[1]]);
        let k4 = rhs(x + dx, [y[0] + dx * k3[0], y[1] + dx * k3[1]]);
        for c in 0..2 {
            y[c] += dx / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    h(big_r) * (kf / big_r + y[1] / (big_r * y[0]))
}

/// Radially symmetric shallow water between two walls at `r_in` and `r_out`:
/// `zeta_t + (r h v)_r / r = 0`, `v_t + (g zeta + v^2 / 2)_r = 0`.
///
/// Cell averages, central reconstruction, Rusanov fluxes, mirror ghosts at
/// both walls and SSP-RK2; a deliberately plain scheme.
pub struct Radial1d {
    pub g: f64,
    pub h0: f64,
    pub cfl: f64,
    pub faces: Vec<f64>,
    pub zeta: Vec<f64>,
    pub v: Vec<f64>,
}

impl Radial1d {
    pub fn new(r_in: f64, r_out: f64, n: usize, g: f64, h0: f64, zeta0: impl Fn(f64) -> f64) -> Self {
        let dr = (r_out - r_in) / n as f64;
        let faces: Vec<f64> = (0..=n).map(|i| r_in + i as f64 * dr).collect();
        let zeta = (0..n).map(|i| zeta0(Self::centroid(faces[i], faces[i + 1]))).collect();
        Self { g, h0, cfl: 0.4, faces, zeta, v: vec![0.0; n] }
    }

    /// Area centroid radius of the annulus `[a, b]`.
    pub fn centroid(a: f64, b: f64) -> f64 {
        2.0 / 3.0 * (b.powi(3) - a.powi(3)) / (b * b - a * a)
    }

    pub fn annulus_area(&self, i: usize) -> f64 {
        std::f64::consts::PI * (self.faces[i + 1].powi(2) - self.faces[i].powi(2))
    }

    fn rhs(&self, z: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = z.len();
        let (g, h0) = (self.g, self.h0);
        let slope = |f: &[f64], i: usize| {
            if i == 0 {
                0.5 * (-3.0 * f[0] + 4.0 * f[1] - f[2])
            } else if i == n - 1 {
                0.5 * (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3])
            } else {
                0.5 * (f[i + 1] - f[i - 1])
            }
        };
        let sz: Vec<f64> = (0..n).map(|i| slope(z, i)).collect();
        let sv: Vec<f64> = (0..n).map(|i| slope(v, i)).collect();
        let flux = |zl: f64, vl: f64, zr: f64, vr: f64| {
            let (hl, hr) = (h0 + zl, h0 + zr);
            let a = (vl.abs() + (g * hl).sqrt()).max(vr.abs() + (g * hr).sqrt());
            let fm = 0.5 * (hl * vl + hr * vr) - 0.5 * a * (zr - zl);
            let fv = 0.5 * (g * zl + 0.5 * vl * vl + g * zr + 0.5 * vr * vr) - 0.5 * a * (vr - vl);
            (fm, fv)
        };
        let mut fm = vec![0.0; n + 1];
        let mut fv = vec![0.0; n + 1];
        for f in 0..=n {
            let (zl, vl, zr, vr) = if f == 0 {
                let (zr, vr) = (z[0] - 0.5 * sz[0], v[0] - 0.5 * sv[0]);
                (zr, -vr, zr, vr)
            } else if f == n {
                let (zl, vl) = (z[n - 1] + 0.5 * sz[n - 1], v[n - 1] + 0.5 * sv[n - 1]);
                (zl, vl, zl, -vl)
            } else {
                (z[f - 1] + 0.5 * sz[f - 1], v[f - 1] + 0.5 * sv[f - 1], z[f] - 0.5 * sz[f], v[f] - 0.5 * sv[f])
            };
            let (a, b) = flux(zl, vl, zr, vr);
            fm[f] = a * self.faces[f];
            fv[f] = b;
        }
        let mut dz = vec![0.0; n];
        let mut dv = vec![0.0; n];
        for i in 0..n {
            let (a, b) = (self.faces[i], self.faces[i + 1]);
            dz[i] = -(fm[i + 1] - fm[i]) / (0.5 * (b * b - a * a));
            dv[i] = -(fv[i + 1] - fv[i]) / (b - a);
        }
        (dz, dv)
    }

    pub fn run(&mut self, t_end: f64) {
        let dr = self.faces[1] - self.faces[0];
        let mut t = 0.0;
        while t < t_end {
            let speed = self
                .zeta
                .iter()
                .zip(&self.v)
                .map(|(z, v)| v.abs() + (self.g * (self.h0 + z)).sqrt())
                .fold(0.0, f64::max);
            let dt = (self.cfl * dr / speed).min(t_end - t);
            let (dz1, dv1) = self.rhs(&self.zeta, &self.v);
            let z1: Vec<f64> = self.zeta.iter().zip(&dz1).map(|(a, b)| a + dt * b).collect();
            let v1: Vec<f64> = self.v.iter().zip(&dv1).map(|(a, b)| a + dt * b).collect();
            let (dz2, dv2) = self.rhs(&z1, &v1);
            for i in 0..self.zeta.len() {
                self.zeta[i] = 0.5 * (self.zeta[i] + z1[i] + dt * dz2[i]);
                self.v[i] = 0.5 * (self.v[i] + v1[i] + dt * dv2[i]);
            }
            t += dt;
        }
    }

    /// Area-weighted averages over blocks of `factor` cells.
    pub fn coarsen(&self, factor: usize) -> Vec<f64> {
        self.zeta
            .chunks(factor)
            .enumerate()
            .map(|(b, zs)| {
                let (mut num, mut den) = (0.0, 0.0);
                for (k, z) in zs.iter().enumerate() {
                    let a = self.annulus_area(b * factor + k);
                    num += z * a;
                    den += a;
                }
                num / den
            })
            .collect()
    }
}

pub fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Constant-coefficient linearization about the lake at rest on the same mesh:
/// `zeta_t + H0 div v = 0`, `v_t + g grad zeta = 0`, with the linearized
/// characteristic ghost on the curve and a mirror wall outside.
pub struct LinearOracle<'a> {
    pub mesh: &'a swdtn::mesh::ExteriorMesh,
    pub dtn: &'a swdtn::interior::DtnOperator,
    pub g: f64,
    pub h0: f64,
}

impl LinearOracle<'_> {
    fn rhs(&self, u: &[[f64; 3]], psi: &[f64]) -> (Vec<[f64; 3]>, Vec<f64>) {
        let m = self.mesh;
        let (n_r, n_s) = (m.n_r(), m.n_s());
        let (g, h0) = (self.g, self.h0);
        let c0 = (g * h0).sqrt();
        let at = |i: usize, j: usize| u[i * n_s + (j % n_s)];
        let slope_r = |i: usize, j: usize, k: usize| {
            if i == 0 {
                0.5 * (-3.0 * at(0, j)[k] + 4.0 * at(1, j)[k] - at(2, j)[k])
            } else if i == n_r - 1 {
                0.5 * (3.0 * at(i, j)[k] - 4.0 * at(i - 1, j)[k] + at(i - 2, j)[k])
            } else {
                0.5 * (at(i + 1, j)[k] - at(i - 1, j)[k])
            }
        };
        let slope_s = |i: usize, j: usize, k: usize| 0.5 * (at(i, j + 1)[k] - at(i, j + n_s - 1)[k]);
        let flux = |l: [f64; 3], r: [f64; 3], n: [f64; 2]| {
            let f = |w: [f64; 3]| [h0 * (w[1] * n[0] + w[2] * n[1]), g * w[0] * n[0], g * w[0] * n[1]];
            let (fl, fr) = (f(l), f(r));
            [0, 1, 2].map(|k| 0.5 * (fl[k] + fr[k]) - 0.5 * c0 * (r[k] - l[k]))
        };
        let mut lam = vec![0.0; n_s];
        self.dtn.apply_slice(psi, &mut lam);
        let mut du = vec![[0.0; 3]; n_r * n_s];
        let mut dpsi = vec![0.0; n_s];
        let mut add = |k: usize, f: [f64; 3], sign: f64| {
            let a = m.areas()[k];
            for c in 0..3 {
                du[k][c] += sign * f[c] / a;
            }
        };
        for j in 0..n_s {
            let tr = [0, 1, 2].map(|k| m.trace_of([at(0, j)[k], at(1, j)[k], at(2, j)[k]], j));
            let nn = m.gamma_normal(j);
            let vn_tr = tr[1] * nn[0] + tr[2] * nn[1];
            let vn_g = lam[j] / h0;
            let zeta_g = tr[0] + h0 / c0 * (vn_g - vn_tr);
            dpsi[j] = -g * zeta_g;
            let (nrm, len) = m.rface(0, j);
            add(j, [lam[j] * m.gamma_weight(j), g * zeta_g * nrm[0] * len, g * zeta_g * nrm[1] * len], 1.0);
            for i in 1..=n_r {
                let (nrm, len) = m.rface(i, j);
                let l = [0, 1, 2].map(|k| at(i - 1, j)[k] + 0.5 * slope_r(i - 1, j, k));
                let r = if i == n_r {
                    let vn = l[1] * nrm[0] + l[2] * nrm[1];
                    [l[0], l[1] - 2.0 * vn * nrm[0], l[2] - 2.0 * vn * nrm[1]]
                } else {
                    [0, 1, 2].map(|k| at(i, j)[k] - 0.5 * slope_r(i, j, k))
                };
                let f = flux(l, r, nrm).map(|x| x * len);
                add((i - 1) * n_s + j, f, -1.0);
                if i < n_r {
                    add(i * n_s + j, f, 1.0);
                }
            }
        }
        for i in 0..n_r {
            for j in 0..n_s {
                let (nrm, len) = m.sface(i, j);
                let jm = j + n_s - 1;
                let l = [0, 1, 2].map(|k| at(i, jm)[k] + 0.5 * slope_s(i, jm, k));
                let r = [0, 1, 2].map(|k| at(i, j)[k] - 0.5 * slope_s(i, j, k));
                let f = flux(l, r, nrm).map(|x| x * len);
                add(i * n_s + jm % n_s, f, -1.0);
                add(i * n_s + j, f, 1.0);
            }
        }
        (du, dpsi)
    }

    /// SSP-RK2 with the supplied step sequence.
    pub fn run(&self, u: &mut Vec<[f64; 3]>, psi: &mut Vec<f64>, dts: &[f64]) {
        for &dt in dts {
            let (k1, p1) = self.rhs(u, psi);
            let u1: Vec<[f64; 3]> = u.iter().zip(&k1).map(|(a, b)| [0, 1, 2].map(|c| a[c] + dt * b[c])).collect();
            let psi1: Vec<f64> = psi.iter().zip(&p1).map(|(a, b)| a + dt * b).collect();
            let (k2, p2) = self.rhs(&u1, &psi1);
            for (k, x) in u.iter_mut().enumerate() {
                for c in 0..3 {
                    x[c] = 0.5 * (x[c] + u1[k][c] + dt * k2[k][c]);
                }
            }
            for (k, x) in psi.iter_mut().enumerate() {
                *x = 0.5 * (*x + psi1[k] + dt * p2[k]);
            }
        }
    }
}
