//! Compatible initial data: potential initialization, time-derivative jets at
//! `t = 0`, compatibility residuals and the algebraic `G_nor W = F` solver.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::exterior::{ExteriorField, TaylorForcing};
use crate::geometry::cutoff;
use crate::interior::DtnOperator;
use crate::mesh::ExteriorMesh;
use crate::swe::{g_matrix, tangential_vector, Params};
use crate::trace::TraceField;

/// Highest jet order that is built.
pub const MAX_JET_ORDER: usize = 3;

/// Time derivatives `d_t^j u` and `d_t^j psi` at `t = 0`, `j = 0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialJet {
    pub order: usize,
    pub zeta: Vec<Vec<f64>>,
    pub v: Vec<Vec<[f64; 2]>>,
    pub psi: Vec<TraceField>,
}

impl InitialJet {
    pub fn level(&self, j: usize) -> Vec<[f64; 3]> {
        self.zeta[j].iter().zip(&self.v[j]).map(|(z, v)| [*z, v[0], v[1]]).collect()
    }

    /// Taylor polynomial in time of the cell unknowns.
    pub fn forcing(&self) -> TaylorForcing {
        TaylorForcing { levels: (0..=self.order).map(|j| self.level(j)).collect() }
    }
}

/// `v = grad phi`, `psi = phi` on the curve, using the solver's extrapolation.
pub fn init_from_potential(mesh: &ExteriorMesh, zeta: &[f64], phi: &[f64]) -> Result<(ExteriorField, TraceField)> {
    let n = mesh.n_cells();
    for len in [zeta.len(), phi.len()] {
        if len != n {
            return Err(Error::SizeMismatch { expected: n, got: len });
        }
    }
    let grad = mesh.gradient(phi);
    let u = zeta.iter().zip(&grad).map(|(z, g)| [*z, g[0], g[1]]).collect();
    let field = ExteriorField { n_r: mesh.n_r(), n_s: mesh.n_s(), u };
    let psi = TraceField::new(mesh.trace(phi), mesh.curve_length());
    Ok((field, psi))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn divergence(mesh: &ExteriorMesh, q: &[[f64; 2]]) -> Vec<f64> {
    let q1: Vec<f64> = q.iter().map(|x| x[0]).collect();
    let q2: Vec<f64> = q.iter().map(|x| x[1]).collect();
    let g1 = mesh.gradient(&q1);
    let g2 = mesh.gradient(&q2);
    g1.iter().zip(&g2).map(|(a, b)| a[0] + b[1]).collect()
}

/// `d_t^j (h v)` at `t = 0` by the Leibniz rule.
fn mass_flux_level(jet: &InitialJet, j: usize, p: &Params) -> Vec<[f64; 2]> {
    let n = jet.zeta[0].len();
    let mut q = vec![[0.0; 2]; n];
    for k in 0..=j {
        let c = binomial(j, k);
        let hz = &jet.zeta[j - k];
        let add_h0 = j == k;
        for (c_out, (z, v)) in q.iter_mut().zip(hz.iter().zip(&jet.v[k])) {
            let h = if add_h0 { p.h0 + z } else { *z };
            c_out[0] += c * h * v[0];
            c_out[1] += c * h * v[1];
        }
    }
    q
}

/// `d_t^j (g zeta + |v|^2 / 2)` at `t = 0`.
fn head_level(jet: &InitialJet, j: usize, p: &Params) -> Vec<f64> {
    let mut b: Vec<f64> = jet.zeta[j].iter().map(|z| p.g * z).collect();
    for k in 0..=j {
        let c = 0.5 * binomial(j, k);
        for (bo, (a, w)) in b.iter_mut().zip(jet.v[j - k].iter().zip(&jet.v[k])) {
            *bo += c * (a[0] * w[0] + a[1] * w[1]);
        }
    }
    b
}

/// Time-derivative levels of the data by the formal recursion
/// `zeta_{j+1} = -div d^j(hv)`, `v_{j+1} = -grad d^j B`, `psi_{j+1} = -d^j B` on the curve.
pub fn build_jet(mesh: &ExteriorMesh, field: &ExteriorField, psi: &TraceField, m: usize, p: &Params) -> Result<InitialJet> {
    if m > MAX_JET_ORDER {
        return Err(Error::JetOrder { requested: m, max: MAX_JET_ORDER });
    }
    if field.u.len() != mesh.n_cells() || psi.len() != mesh.n_s() {
        return Err(Error::GridMismatch("jet data does not match the mesh".into()));
    }
    let mut jet = InitialJet {
        order: 0,
        zeta: vec![field.zeta()],
        v: vec![field.u.iter().map(|c| [c[1], c[2]]).collect()],
        psi: vec![psi.clone()],
    };
    for j in 0..m {
        let q = mass_flux_level(&jet, j, p);
        let b = head_level(&jet, j, p);
        let zeta_next = divergence(mesh, &q).into_iter().map(|x| -x).collect();
        let v_next = mesh.gradient(&b).into_iter().map(|g| [-g[0], -g[1]]).collect();
        let psi_next = mesh.trace(&b).into_iter().map(|x| -x).collect();
        jet.zeta.push(zeta_next);
        jet.v.push(v_next);
        jet.psi.push(TraceField::new(psi_next, mesh.curve_length()));
        jet.order = j + 1;
    }
    Ok(jet)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatResidual {
    pub order: usize,
    pub l2: f64,
    pub h_minus_half: f64,
    /// Pointwise residual on the curve nodes.
    pub residual: TraceField,
}

/// Residual of `sum_k C(j,k) N.(h_{j-k} v_k) = Lambda psi_j` on the curve.
pub fn check_compatibility(mesh: &ExteriorMesh, jet: &InitialJet, dtn: &DtnOperator, order: usize, p: &Params) -> Result<CompatResidual> {
    if order > jet.order {
        return Err(Error::JetOrder { requested: order, max: jet.order });
    }
    let q = mass_flux_level(jet, order, p);
    let q1 = mesh.trace(&q.iter().map(|x| x[0]).collect::<Vec<_>>());
    let q2 = mesh.trace(&q.iter().map(|x| x[1]).collect::<Vec<_>>());
    let lam = dtn.apply(&jet.psi[order])?;
    let values = (0..mesh.n_s())
        .map(|j| {
            let n = mesh.gamma_normal(j);
            n[0] * q1[j] + n[1] * q2[j] - lam.values[j]
        })
        .collect();
    let residual = TraceField::new(values, mesh.curve_length());
    Ok(CompatResidual { order, l2: residual.l2_norm(), h_minus_half: residual.sobolev_norm(-0.5), residual })
}

/// Default tolerance for compatibility residuals: ten times a second-order
/// discretization error estimate.
pub fn default_compat_tol(mesh: &ExteriorMesh) -> f64 {
    10.0 * mesh.dr().max(mesh.ds()).powi(2)
}

/// Adjust `phi` in a collar next to the curve so that the order-0 condition
/// `N.(h grad phi) = Lambda (phi on the curve)` holds at the discrete level.
/// The correction is linear in the normal distance over the first rings, so
/// the trace of `phi` is left untouched.
pub fn project_collar(mesh: &ExteriorMesh, dtn: &DtnOperator, zeta: &[f64], phi: &[f64], p: &Params) -> Result<Vec<f64>> {
    let (n_r, n_s) = (mesh.n_r(), mesh.n_s());
    let collar = 6.0 * mesh.dr();
    let dist: Vec<f64> = (0..n_r * n_s)
        .map(|k| {
            let j = k % n_s;
            let (c, g, nn) = (mesh.centroids()[k], mesh.gamma(j), mesh.gamma_normal(j));
            (c[0] - g[0]) * nn[0] + (c[1] - g[1]) * nn[1]
        })
        .collect();
    let h_tr: Vec<f64> = mesh.trace(zeta).iter().map(|z| p.h0 + z).collect();
    let mut phi = phi.to_vec();
    let psi = TraceField::new(mesh.trace(&phi), mesh.curve_length());
    let target = dtn.apply(&psi)?;
    for _ in 0..50 {
        let grad = mesh.gradient(&phi);
        let g1 = mesh.trace(&grad.iter().map(|g| g[0]).collect::<Vec<_>>());
        let g2 = mesh.trace(&grad.iter().map(|g| g[1]).collect::<Vec<_>>());
        let defect: Vec<f64> = (0..n_s)
            .map(|j| {
                let n = mesh.gamma_normal(j);
                target.values[j] - h_tr[j] * (n[0] * g1[j] + n[1] * g2[j])
            })
            .collect();
        let worst = defect.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        if worst < 1e-13 {
            break;
        }
        for (k, ph) in phi.iter_mut().enumerate() {
            let j = k % n_s;
            let t = dist[k];
            *ph += cutoff(t, collar) * t * defect[j] / h_tr[j];
        }
    }
    Ok(phi)
}

/// Uniform stream `phi = U.x` with an optional Gaussian surface bump
/// `(amplitude, width, center)`, projected so that the order-0 condition holds.
pub fn stream_with_bump(
    mesh: &ExteriorMesh,
    dtn: &DtnOperator,
    stream: [f64; 2],
    bump: Option<(f64, f64, [f64; 2])>,
    p: &Params,
) -> Result<(ExteriorField, TraceField)> {
    let cells = mesh.centroids();
    let phi: Vec<f64> = cells.iter().map(|x| stream[0] * x[0] + stream[1] * x[1]).collect();
    let zeta: Vec<f64> = cells
        .iter()
        .map(|x| match bump {
            Some((a, w, c)) => a * (-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (w * w)).exp(),
            None => 0.0,
        })
        .collect();
    let phi = project_collar(mesh, dtn, &zeta, &phi, p)?;
    init_from_potential(mesh, &zeta, &phi)
}

/// Data of the algebraic problem `G_nor W = F`, optionally with the side
/// condition `S0 (0, N_perp) . W = f_tilde`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnorSystem {
    pub n: [f64; 2],
    pub f: Vector3<f64>,
    pub s0: Option<Matrix3<f64>>,
    pub f_tilde: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnorSolution {
    pub solvable: bool,
    pub w: Vector3<f64>,
    pub alpha: f64,
    /// `|F.(0, N_perp)|` when unsolvable, otherwise `|G_nor W - F|_inf`.
    pub defect: f64,
}

/// Solvable iff `F.(0, N_perp) = 0`; then `W = G_nor F + alpha (0, N_perp)`.
pub fn solve_gnor_system(sys: &GnorSystem) -> GnorSolution {
    const TOL: f64 = 1e-12;
    let g = g_matrix(sys.n);
    let tv = tangential_vector(sys.n);
    let obstruction = sys.f.dot(&tv);
    if obstruction.abs() > TOL {
        return GnorSolution { solvable: false, w: Vector3::zeros(), alpha: 0.0, defect: obstruction.abs() };
    }
    let base = g * sys.f;
    let alpha = match (sys.s0, sys.f_tilde) {
        (Some(s0), Some(ft)) => {
            let st = s0 * tv;
            (ft - st.dot(&base)) / st.dot(&tv)
        }
        _ => 0.0,
    };
    let w = base + alpha * tv;
    let defect = (g * w - sys.f).amax();
    GnorSolution { solvable: true, w, alpha, defect }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order0Correction {
    /// Boundary triple `w_0` at each curve node.
    pub w: Vec<Vector3<f64>>,
    /// `N.w_0^II = (J Lambda J - Lambda) psi_0`.
    pub normal: TraceField,
    pub norm: f64,
}

/// Order-0 correction of the trace of the data for the regularized problem.
pub fn order0_trace_correction(mesh: &ExteriorMesh, jet: &InitialJet, dtn: &DtnOperator, eps: f64) -> Result<Order0Correction> {
    if jet.order < 1 {
        return Err(Error::JetOrder { requested: 1, max: jet.order });
    }
    let psi0 = &jet.psi[0];
    let reg = dtn.apply_smoothed(psi0, eps)?;
    let plain = dtn.apply(psi0)?;
    let rhs: Vec<f64> = reg.values.iter().zip(&plain.values).map(|(a, b)| a - b).collect();
    let mut w = Vec::with_capacity(rhs.len());
    let mut normal = Vec::with_capacity(rhs.len());
    for (j, &c) in rhs.iter().enumerate() {
        let n = mesh.gamma_normal(j);
        let sol = solve_gnor_system(&GnorSystem {
            n,
            f: Vector3::new(c, 0.0, 0.0),
            s0: Some(Matrix3::identity()),
            f_tilde: Some(0.0),
        });
        normal.push(n[0] * sol.w[1] + n[1] * sol.w[2]);
        w.push(sol.w);
    }
    let normal = TraceField::new(normal, mesh.curve_length());
    let norm = normal.l2_norm();
    Ok(Order0Correction { w, normal, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryCurve, CurveSpec};
    use crate::interior::{assemble_dtn, InteriorBathymetry, InteriorChoice};
    use std::f64::consts::PI;

    fn disk(n_r: usize, n_s: usize) -> (ExteriorMesh, DtnOperator) {
        let curve = BoundaryCurve::new(CurveSpec::Circle { radius: 1.0, center: [0.0, 0.0] }, n_s).unwrap();
        let dtn = assemble_dtn(&curve, &InteriorBathymetry::constant(1.0, 0.1), InteriorChoice::Spectral).unwrap();
        (ExteriorMesh::new(&curve, n_r, 7.0).unwrap(), dtn)
    }

    #[test]
    fn gnor_examples() {
        let s = solve_gnor_system(&GnorSystem { n: [1.0, 0.0], f: Vector3::new(1.0, 2.0, 0.0), s0: None, f_tilde: None });
        assert!(s.solvable);
        assert_eq!(s.w, Vector3::new(2.0, 1.0, 0.0));
        let s = solve_gnor_system(&GnorSystem { n: [1.0, 0.0], f: Vector3::new(1.0, 2.0, 0.5), s0: None, f_tilde: None });
        assert!(!s.solvable);
        assert_eq!(s.defect, 0.5);
        let s = solve_gnor_system(&GnorSystem {
            n: [1.0, 0.0],
            f: Vector3::new(1.0, 2.0, 0.0),
            s0: Some(Matrix3::identity()),
            f_tilde: Some(3.0),
        });
        assert_eq!(s.alpha, 3.0);
        assert_eq!(s.w, Vector3::new(2.0, 1.0, 3.0));
    }

    #[test]
    fn potential_basics() {
        let (mesh, _) = disk(8, 32);
        let c = vec![0.7; mesh.n_cells()];
        let (f, psi) = init_from_potential(&mesh, &vec![0.0; mesh.n_cells()], &c).unwrap();
        assert!(f.u.iter().all(|u| u[1].abs() < 1e-12 && u[2].abs() < 1e-12));
        assert!(psi.values.iter().all(|x| (x - 0.7).abs() < 1e-12));
        let x1: Vec<f64> = mesh.centroids().iter().map(|x| x[0]).collect();
        let (f, psi) = init_from_potential(&mesh, &vec![0.0; mesh.n_cells()], &x1).unwrap();
        assert!(f.u.iter().all(|u| (u[1] - 1.0).abs() < 1e-10 && u[2].abs() < 1e-10));
        for j in 0..mesh.n_s() {
            assert!((psi.values[j] - mesh.gamma(j)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn rest_jet_vanishes() {
        let (mesh, dtn) = disk(8, 32);
        let p = Params::unit();
        let f = ExteriorField::rest(8, 32);
        let psi = TraceField::from_fn(32, 2.0 * PI, |_| 0.3);
        let jet = build_jet(&mesh, &f, &psi, 3, &p).unwrap();
        for j in 1..=3 {
            assert!(jet.zeta[j].iter().all(|&x| x == 0.0));
            assert!(jet.v[j].iter().all(|v| *v == [0.0, 0.0]));
            let r = check_compatibility(&mesh, &jet, &dtn, j, &p).unwrap();
            assert!(r.l2 < 1e-12);
        }
        assert!(build_jet(&mesh, &f, &psi, 4, &p).is_err());
    }

    #[test]
    fn strain_flow_jet() {
        let (mesh, _) = disk(16, 64);
        let p = Params::unit();
        let f = ExteriorField::from_fn(&mesh, |x| crate::swe::FlowState::new(0.0, [x[0], -x[1]]));
        let psi = TraceField::zeros(64, 2.0 * PI);
        let jet = build_jet(&mesh, &f, &psi, 1, &p).unwrap();
        for (k, x) in mesh.centroids().iter().enumerate() {
            // quadratic head, the centroid differences leave an O(h^2) error
            let tol = 0.05 * (1.0 + x[0].abs() + x[1].abs());
            assert!(jet.zeta[1][k].abs() < 1e-9, "{}", jet.zeta[1][k]);
            assert!((jet.v[1][k][0] + x[0]).abs() < tol && (jet.v[1][k][1] + x[1]).abs() < tol);
        }
    }

    #[test]
    fn incompatible_cosine() {
        let (mesh, dtn) = disk(8, 256);
        let p = Params::unit();
        let psi = TraceField::from_fn(256, 2.0 * PI, |s| s.cos());
        let jet = build_jet(&mesh, &ExteriorField::rest(8, 256), &psi, 1, &p).unwrap();
        let r = check_compatibility(&mesh, &jet, &dtn, 0, &p).unwrap();
        assert!((r.l2 - PI.sqrt()).abs() < 1e-6 * PI.sqrt());
    }

    #[test]
    fn order0_correction_cosine() {
        let (mesh, dtn) = disk(8, 128);
        let p = Params::unit();
        let psi = TraceField::from_fn(128, 2.0 * PI, |s| s.cos());
        let jet = build_jet(&mesh, &ExteriorField::rest(8, 128), &psi, 1, &p).unwrap();
        let c = order0_trace_correction(&mesh, &jet, &dtn, 0.5).unwrap();
        for (j, x) in c.normal.values.iter().enumerate() {
            let s = j as f64 * 2.0 * PI / 128.0;
            assert!((x + 5.0 / 9.0 * s.cos()).abs() < 1e-8);
        }
        let z = order0_trace_correction(&mesh, &jet, &dtn, 0.0).unwrap();
        assert_eq!(z.norm, 0.0);
    }

    #[test]
    fn stream_data_is_compatible() {
        let (mesh, dtn) = disk(32, 128);
        let p = Params::unit();
        let (f, psi) = stream_with_bump(&mesh, &dtn, [0.05, 0.0], Some((0.02, 0.5, [4.0, 0.0])), &p).unwrap();
        let jet = build_jet(&mesh, &f, &psi, 3, &p).unwrap();
        let tol = default_compat_tol(&mesh);
        for j in 0..3 {
            let r = check_compatibility(&mesh, &jet, &dtn, j, &p).unwrap();
            assert!(r.l2 < tol, "order {j}: {} vs {tol}", r.l2);
        }
    }
}
