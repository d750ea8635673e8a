//! Pointwise shallow-water algebra in the unknown `u = (zeta, v1, v2)`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// Physical constants of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub g: f64,
    pub h0: f64,
    pub rho: f64,
    pub p_atm: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self { g: 9.81, h0: 1.0, rho: 1000.0, p_atm: 0.0 }
    }
}

impl Params {
    pub fn unit() -> Self {
        Self { g: 1.0, h0: 1.0, rho: 1.0, p_atm: 0.0 }
    }

    pub fn c0(&self) -> f64 {
        (self.g * self.h0).sqrt()
    }
}

/// Point value of the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub zeta: f64,
    pub v: [f64; 2],
}

impl FlowState {
    pub const REST: FlowState = FlowState { zeta: 0.0, v: [0.0, 0.0] };

    pub fn new(zeta: f64, v: [f64; 2]) -> Self {
        Self { zeta, v }
    }

    pub fn from_array(u: [f64; 3]) -> Self {
        Self { zeta: u[0], v: [u[1], u[2]] }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.zeta, self.v[0], self.v[1]]
    }

    pub fn depth(&self, p: &Params) -> f64 {
        p.h0 + self.zeta
    }

    pub fn speed2(&self) -> f64 {
        self.v[0] * self.v[0] + self.v[1] * self.v[1]
    }

    /// `g h - |v|^2`; positive exactly in the subcritical regime.
    pub fn subcritical_margin(&self, p: &Params) -> f64 {
        p.g * self.depth(p) - self.speed2()
    }

    /// `g zeta + |v|^2 / 2`, the Bernoulli head per unit density.
    pub fn head(&self, p: &Params) -> f64 {
        p.g * self.zeta + 0.5 * self.speed2()
    }
}

/// Conservative fluxes `F_j = (h v_j, (g zeta + |v|^2/2) e_j)`.
pub fn flux(u: &FlowState, p: &Params) -> Result<([f64; 3], [f64; 3])> {
    let h = u.depth(p);
    if !(h > 0.0) {
        return Err(Error::NonPositiveDepth(h));
    }
    let b = u.head(p);
    Ok(([h * u.v[0], b, 0.0], [h * u.v[1], 0.0, b]))
}

/// Flux through a face with unit normal `n`: `F_j n_j`.
#[inline]
pub fn normal_flux(u: [f64; 3], n: [f64; 2], p: &Params) -> [f64; 3] {
    let h = p.h0 + u[0];
    let b = p.g * u[0] + 0.5 * (u[1] * u[1] + u[2] * u[2]);
    let vn = u[1] * n[0] + u[2] * n[1];
    [h * vn, b * n[0], b * n[1]]
}

/// Bernoulli pressure excess `rho (g zeta + |v|^2/2)`.
pub fn bernoulli(u: &FlowState, p: &Params) -> f64 {
    p.rho * u.head(p)
}

/// Structure matrix `G(N) = N_j G_j = [[0, N^T], [N, 0]]`.
pub fn g_matrix(n: [f64; 2]) -> Matrix3<f64> {
    Matrix3::new(0.0, n[0], n[1], n[0], 0.0, 0.0, n[1], 0.0, 0.0)
}

/// `(0, N_perp)` with `N_perp = (-N2, N1)`.
pub fn tangential_vector(n: [f64; 2]) -> Vector3<f64> {
    Vector3::new(0.0, -n[1], n[0])
}

/// Matrices of the quasilinear form `d_t u + A_j(u) d_j u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasilinearPack {
    pub sigma: Matrix3<f64>,
    pub s: Matrix3<f64>,
    pub a1: Matrix3<f64>,
    pub a2: Matrix3<f64>,
    pub g1: Matrix3<f64>,
    pub g2: Matrix3<f64>,
}

impl QuasilinearPack {
    pub fn new(u: &FlowState, p: &Params) -> Result<Self> {
        let h = u.depth(p);
        let margin = u.subcritical_margin(p);
        if !(h > 0.0) {
            return Err(Error::NonPositiveDepth(h));
        }
        if !(margin > 0.0) {
            return Err(Error::Subcritical { i: 0, j: 0, margin });
        }
        let [v1, v2] = u.v;
        let sigma = Matrix3::new(p.g, v1, v2, v1, h, 0.0, v2, 0.0, h);
        // Closed-form inverse with the v_perp (x) v_perp / h correction.
        let (w1, w2) = (-v2, v1);
        let s = Matrix3::new(
            h,
            -v1,
            -v2,
            -v1,
            p.g - w1 * w1 / h,
            -w1 * w2 / h,
            -v2,
            -w2 * w1 / h,
            p.g - w2 * w2 / h,
        ) / margin;
        let g1 = g_matrix([1.0, 0.0]);
        let g2 = g_matrix([0.0, 1.0]);
        Ok(Self { a1: g1 * sigma, a2: g2 * sigma, sigma, s, g1, g2 })
    }

    /// `A(N) = N_j A_j`.
    pub fn a_dir(&self, n: [f64; 2]) -> Matrix3<f64> {
        self.a1 * n[0] + self.a2 * n[1]
    }
}

/// Eigenvalues and unit left eigenvectors of the boundary matrix
/// `[[N.v, h N^T], [g N, (N.v) I]]`, ordered `N.v`, `N.v + c`, `N.v - c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEigen {
    pub values: [f64; 3],
    pub left: [Vector3<f64>; 3],
    pub matrix: Matrix3<f64>,
}

pub fn boundary_matrix(u: &FlowState, n: [f64; 2], p: &Params) -> Matrix3<f64> {
    let h = u.depth(p);
    let a = u.v[0] * n[0] + u.v[1] * n[1];
    Matrix3::new(a, h * n[0], h * n[1], p.g * n[0], a, 0.0, p.g * n[1], 0.0, a)
}

pub fn boundary_eigenstructure(u: &FlowState, n: [f64; 2], p: &Params) -> Result<BoundaryEigen> {
    let h = u.depth(p);
    let margin = u.subcritical_margin(p);
    if !(h > 0.0) {
        return Err(Error::NonPositiveDepth(h));
    }
    if !(margin > 0.0) {
        return Err(Error::Subcritical { i: 0, j: 0, margin });
    }
    let a = u.v[0] * n[0] + u.v[1] * n[1];
    let c = (p.g * h).sqrt();
    let fix = |w: Vector3<f64>| {
        let w = w.normalize();
        let lead = w.iter().copied().find(|x| x.abs() > 1e-14).unwrap_or(1.0);
        if lead < 0.0 {
            -w
        } else {
            w
        }
    };
    Ok(BoundaryEigen {
        values: [a, a + c, a - c],
        left: [
            fix(tangential_vector(n)),
            fix(Vector3::new(c, h * n[0], h * n[1])),
            fix(Vector3::new(-c, h * n[0], h * n[1])),
        ],
        matrix: boundary_matrix(u, n, p),
    })
}

/// Eigenvalues of `G(N) - eps S` for a list of `eps`, with the slope of the
/// branch emanating from zero compared to `lambda_0(N) = -(0,N_perp).S(0,N_perp)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedEigenReport {
    pub eps: Vec<f64>,
    /// Ascending eigenvalues per `eps`.
    pub eigenvalues: Vec<[f64; 3]>,
    /// The eigenvalue continuing the zero eigenvalue of `G(N)`.
    pub near_zero: Vec<f64>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub lambda0: f64,
    /// Least-squares slope of `near_zero` against `eps` (with a quadratic term).
    pub fitted_slope: f64,
}

pub fn regularized_boundary_eigen(
    s: &Matrix3<f64>,
    n: [f64; 2],
    eps_list: &[f64],
) -> Result<RegularizedEigenReport> {
    if (s - s.transpose()).amax() > 1e-12 * s.amax().max(1.0) {
        return Err(Error::Degenerate(f64::NAN));
    }
    let se = SymmetricEigen::new(*s);
    if se.eigenvalues.min() <= 0.0 {
        return Err(Error::Degenerate(se.eigenvalues.min()));
    }
    let g = g_matrix(n);
    let t = tangential_vector(n);
    let lambda0 = -(t.dot(&(s * t)));
    let mut eigenvalues = Vec::with_capacity(eps_list.len());
    let mut near_zero = Vec::with_capacity(eps_list.len());
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for &e in eps_list {
        let m = g - s * e;
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        // G(N) has eigenvalues -1, 0, 1; the middle branch continues 0.
        near_zero.push(ev[1]);
        positive.push(ev.iter().filter(|&&x| x > 0.0).count());
        negative.push(ev.iter().filter(|&&x| x < 0.0).count());
        eigenvalues.push([ev[0], ev[1], ev[2]]);
    }
    let fitted_slope = fit_slope_through_origin(eps_list, &near_zero);
    Ok(RegularizedEigenReport {
        eps: eps_list.to_vec(),
        eigenvalues,
        near_zero,
        positive,
        negative,
        lambda0,
        fitted_slope,
    })
}

/// Least squares fit of `y = a x + b x^2`, returning `a`. Falls back to a pure
/// proportional fit when fewer than two distinct abscissae are given.
fn fit_slope_through_origin(x: &[f64], y: &[f64]) -> f64 {
    let (mut s2, mut s3, mut s4, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        s2 += xi * xi;
        s3 += xi.powi(3);
        s4 += xi.powi(4);
        sy1 += xi * yi;
        sy2 += xi * xi * yi;
    }
    let det = s2 * s4 - s3 * s3;
    if det.abs() <= 1e-12 * s2 * s4 {
        return if s2 > 0.0 { sy1 / s2 } else { 0.0 };
    }
    (sy1 * s4 - sy2 * s3) / det
}

/// Recover `d_nor u` on the boundary from the time derivative, the tangential
/// derivative and the conserved vorticity. `t_vec` is the chart vector
/// `T = J gamma'` at the point.
pub fn recover_normal_derivative(
    u: &FlowState,
    dt_u: [f64; 3],
    dtan_u: [f64; 3],
    omega_in: f64,
    n: [f64; 2],
    t_vec: [f64; 2],
    p: &Params,
) -> Result<[f64; 3]> {
    let pack = QuasilinearPack::new(u, p)?;
    let t2 = t_vec[0] * t_vec[0] + t_vec[1] * t_vec[1];
    let at = pack.a_dir(t_vec);
    let r = -Vector3::from(dt_u) - at * Vector3::from(dtan_u) / t2;
    let np = [-n[1], n[0]];
    let tp = [-t_vec[1], t_vec[0]];
    let vn = u.v[0] * n[0] + u.v[1] * n[1];
    let vt = u.v[0] * np[0] + u.v[1] * np[1];
    let h = u.depth(p);
    // N_perp . d_nor v from the vorticity; T_perp . d_tan v.
    let z = omega_in - (tp[0] * dtan_u[1] + tp[1] * dtan_u[2]) / t2;
    let rhs1 = r[0];
    let rhs2 = n[0] * r[1] + n[1] * r[2] - vt * z;
    let det = vn * vn - p.g * h;
    if det.abs() < 1e-12 * p.g * h {
        return Err(Error::Degenerate(det));
    }
    let x = (vn * rhs1 - h * rhs2) / det;
    let y = (vn * rhs2 - p.g * rhs1) / det;
    Ok([x, y * n[0] + z * np[0], y * n[1] + z * np[1]])
}
