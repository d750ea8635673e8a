//! Interior potential problem `div(h_i grad phi) = 0` under the obstacle and
//! the Dirichlet-to-Neumann operator `psi -> N.(h_i grad phi)|_Gamma`.
//!
//! Two backends are provided: a Fourier-Chebyshev solver for a disk with
//! radially symmetric depth, and a mapped finite-volume solver on a polar-like
//! grid for star-shaped curves and arbitrary smooth depth.

mod fd;
mod spectral;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, CurveSpec};
use crate::swe::Params;
use crate::trace::TraceField;

pub use fd::MappedFd;
pub use spectral::{chebyshev_matrix, gauss_legendre, SpectralDisk};

/// Water depth under the obstacle, `h_i = H0 + zeta_w`.
#[derive(Clone)]
pub enum DepthProfile {
    Constant(f64),
    /// `h(rho) = sum_k c_k rho^(2k)` about the bathymetry center.
    RadialPoly(Vec<f64>),
    /// Radial samples `(rho_k, h_k)`, interpolated by a monotone cubic.
    RadialTable(Vec<(f64, f64)>),
    Field(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl fmt::Debug for DepthProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepthProfile::Constant(h) => write!(f, "Constant({h})"),
            DepthProfile::RadialPoly(c) => write!(f, "RadialPoly({c:?})"),
            DepthProfile::RadialTable(t) => write!(f, "RadialTable({} samples)", t.len()),
            DepthProfile::Field(_) => write!(f, "Field(<fn>)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InteriorBathymetry {
    pub profile: DepthProfile,
    pub center: [f64; 2],
    pub c0: f64,
}

impl InteriorBathymetry {
    pub fn constant(h: f64, c0: f64) -> Self {
        Self { profile: DepthProfile::Constant(h), center: [0.0, 0.0], c0 }
    }

    pub fn radial_poly(coeffs: Vec<f64>, center: [f64; 2], c0: f64) -> Self {
        Self { profile: DepthProfile::RadialPoly(coeffs), center, c0 }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self.profile, DepthProfile::Field(_))
    }

    /// Depth as a function of the distance to the center (radial profiles only).
    pub fn radial(&self, rho: f64) -> Option<f64> {
        match &self.profile {
            DepthProfile::Constant(h) => Some(*h),
            DepthProfile::RadialPoly(c) => {
                let r2 = rho * rho;
                Some(c.iter().rev().fold(0.0, |acc, &ck| acc * r2 + ck))
            }
            DepthProfile::RadialTable(t) => Some(table_interp(t, rho)),
            DepthProfile::Field(_) => None,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match &self.profile {
            DepthProfile::Field(f) => f(x),
            _ => {
                let rho = (x[0] - self.center[0]).hypot(x[1] - self.center[1]);
                self.radial(rho).expect("radial profile")
            }
        }
    }

    /// Check the positivity floor at a set of points.
    pub fn check_floor(&self, points: impl IntoIterator<Item = [f64; 2]>) -> Result<()> {
        if !(self.c0 > 0.0) {
            return Err(Error::DepthFloor { value: self.c0, c0: self.c0 });
        }
        for x in points {
            let h = self.eval(x);
            if !(h >= self.c0) {
                return Err(Error::DepthFloor { value: h, c0: self.c0 });
            }
        }
        Ok(())
    }
}

fn table_interp(t: &[(f64, f64)], rho: f64) -> f64 {
    if t.len() == 1 || rho <= t[0].0 {
        return t[0].1;
    }
    let last = t[t.len() - 1];
    if rho >= last.0 {
        return last.1;
    }
    let k = t.partition_point(|p| p.0 <= rho) - 1;
    let (x0, y0) = t[k];
    let (x1, y1) = t[k + 1];
    let slope = |i: usize| -> f64 {
        if i == 0 || i + 1 == t.len() {
            let (a, b) = if i == 0 { (t[0], t[1]) } else { (t[i - 1], t[i]) };
            return (b.1 - a.1) / (b.0 - a.0);
        }
        let d0 = (t[i].1 - t[i - 1].1) / (t[i].0 - t[i - 1].0);
        let d1 = (t[i + 1].1 - t[i].1) / (t[i + 1].0 - t[i].0);
        if d0 * d1 <= 0.0 {
            0.0
        } else {
            2.0 / (1.0 / d0 + 1.0 / d1)
        }
    };
    let h = x1 - x0;
    let u = (rho - x0) / h;
    let (m0, m1) = (slope(k), slope(k + 1));
    (1.0 + 2.0 * u) * (1.0 - u).powi(2) * y0
        + u * (1.0 - u).powi(2) * h * m0
        + u * u * (3.0 - 2.0 * u) * y1
        + u * u * (u - 1.0) * h * m1
}

/// Which interior discretization to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteriorChoice {
    Spectral,
    FiniteDifference,
    /// Spectral for circles with radial depth, finite differences otherwise.
    Auto,
}

/// Discrete potential on the interior mesh.
#[derive(Debug, Clone)]
pub struct InteriorSolution {
    pub nodes: Vec<[f64; 2]>,
    pub phi: Vec<f64>,
    pub residual: f64,
}

/// Velocity and pressure reconstructed under the obstacle.
#[derive(Debug, Clone)]
pub struct InteriorFlow {
    pub nodes: Vec<[f64; 2]>,
    pub velocity: Vec<[f64; 2]>,
    pub pressure: Vec<f64>,
}

/// A ready-to-use interior solver bound to a curve and a depth.
#[derive(Debug, Clone)]
pub enum InteriorSolver {
    Spectral(SpectralDisk),
    Fd(MappedFd),
}

impl InteriorSolver {
    pub fn new(curve: &BoundaryCurve, bathy: &InteriorBathymetry, choice: InteriorChoice) -> Result<Self> {
        let disk_ok = matches!(curve.spec(), CurveSpec::Circle { .. }) && bathy.is_radial();
        match choice {
            InteriorChoice::Spectral => Ok(Self::Spectral(SpectralDisk::new(curve, bathy)?)),
            InteriorChoice::FiniteDifference => Ok(Self::Fd(MappedFd::new(curve, bathy, curve.n_s() / 4)?)),
            InteriorChoice::Auto if disk_ok => Ok(Self::Spectral(SpectralDisk::new(curve, bathy)?)),
            InteriorChoice::Auto => Ok(Self::Fd(MappedFd::new(curve, bathy, curve.n_s() / 4)?)),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Spectral(_) => "spectral",
            Self::Fd(_) => "fd",
        }
    }

    pub fn n_s(&self) -> usize {
        match self {
            Self::Spectral(s) => s.n_s(),
            Self::Fd(f) => f.n_s(),
        }
    }

    pub fn solve(&self, psi: &TraceField) -> Result<InteriorSolution> {
        if psi.len() != self.n_s() {
            return Err(Error::SizeMismatch { expected: self.n_s(), got: psi.len() });
        }
        match self {
            Self::Spectral(s) => Ok(s.solve(&psi.values)),
            Self::Fd(f) => f.solve(&psi.values),
        }
    }

    pub fn gradient(&self, phi: &[f64]) -> Result<Vec<[f64; 2]>> {
        match self {
            Self::Spectral(s) => s.gradient(phi),
            Self::Fd(f) => f.gradient(phi),
        }
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        match self {
            Self::Spectral(s) => s.nodes(),
            Self::Fd(f) => f.nodes(),
        }
    }

    /// Indices of the nodes lying on the contact curve, in trace order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        match self {
            Self::Spectral(s) => s.boundary_nodes(),
            Self::Fd(f) => f.boundary_nodes(),
        }
    }

    /// `int_I h_i grad(phi1) . grad(phi2)`.
    pub fn dirichlet_form(&self, phi1: &[f64], phi2: &[f64]) -> Result<f64> {
        match self {
            Self::Spectral(s) => s.dirichlet_form(phi1, phi2),
            Self::Fd(f) => f.dirichlet_form(phi1, phi2),
        }
    }

    /// Unsymmetrized DtN matrix, row-major.
    fn raw_dtn(&self) -> Result<Vec<f64>> {
        match self {
            Self::Spectral(s) => Ok(s.dtn_matrix()),
            Self::Fd(f) => f.dtn_matrix(),
        }
    }
}

/// Dense DtN matrix acting on nodal trace values, paired with trapezoid weights.
#[derive(Debug, Clone)]
pub struct DtnOperator {
    n_s: usize,
    length: f64,
    matrix: Vec<f64>,
    weights: Vec<f64>,
    presym_defect: f64,
    backend: &'static str,
}

impl DtnOperator {
    pub fn from_matrix(matrix: Vec<f64>, length: f64, backend: &'static str) -> Result<Self> {
        let n_s = (matrix.len() as f64).sqrt().round() as usize;
        if n_s * n_s != matrix.len() || n_s == 0 {
            return Err(Error::SizeMismatch { expected: n_s * n_s, got: matrix.len() });
        }
        let weights = vec![length / n_s as f64; n_s];
        let mut op = Self { n_s, length, matrix, weights, presym_defect: 0.0, backend };
        op.symmetrize();
        Ok(op)
    }

    /// Replace `M` by its weighted-symmetric part and remember the defect.
    fn symmetrize(&mut self) {
        let n = self.n_s;
        let scale = self.matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut defect = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                // with equal trapezoid weights W^-1 M^T W = M^T
                let wij = self.weights[i] * self.matrix[i * n + j];
                let wji = self.weights[j] * self.matrix[j * n + i];
                defect = defect.max((wij - wji).abs() / self.weights[i]);
                let avg = 0.5 * (wij + wji);
                self.matrix[i * n + j] = avg / self.weights[i];
                self.matrix[j * n + i] = avg / self.weights[j];
            }
        }
        self.presym_defect = defect / scale;
        // Averaging with the transpose moves the column-sum defect into the
        // row sums; a diagonal shift puts the constants back in the kernel.
        for i in 0..n {
            let row: f64 = self.matrix[i * n..(i + 1) * n].iter().sum();
            self.matrix[i * n + i] -= row;
        }
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn backend(&self) -> &'static str {
        self.backend
    }

    /// Relative size of the antisymmetric part removed at assembly.
    pub fn presym_defect(&self) -> f64 {
        self.presym_defect
    }

    pub fn apply_slice(&self, psi: &[f64], out: &mut [f64]) {
        let n = self.n_s;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[i * n..(i + 1) * n];
            *o = row.iter().zip(psi).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, psi: &TraceField) -> Result<TraceField> {
        if psi.len() != self.n_s {
            return Err(Error::SizeMismatch { expected: self.n_s, got: psi.len() });
        }
        let mut out = vec![0.0; self.n_s];
        self.apply_slice(&psi.values, &mut out);
        Ok(TraceField::new(out, psi.length))
    }

    /// `J_eps Lambda J_eps`, used by the regularized scheme.
    pub fn apply_smoothed(&self, psi: &TraceField, eps: f64) -> Result<TraceField> {
        if eps == 0.0 {
            return self.apply(psi);
        }
        Ok(self.apply(&psi.smooth_jeps(eps))?.smooth_jeps(eps))
    }

    /// Weighted pairing `<Lambda a, b>`.
    pub fn pairing(&self, a: &TraceField, b: &TraceField) -> Result<f64> {
        let la = self.apply(a)?;
        Ok(la.values.iter().zip(&b.values).zip(&self.weights).map(|((x, y), w)| w * x * y).sum())
    }

    /// Check the structural invariants; returns the measured defects
    /// `(row-sum defect, most negative eigenvalue)` relative to the largest eigenvalue.
    pub fn check_invariants(&self) -> Result<(f64, f64)> {
        let n = self.n_s;
        let m = DMatrix::from_row_slice(n, n, &self.matrix);
        let eig = SymmetricEigen::new(m);
        let lmax = eig.eigenvalues.max().max(1e-300);
        let lmin = eig.eigenvalues.min();
        let row_defect = (0..n)
            .map(|i| self.matrix[i * n..(i + 1) * n].iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
            / lmax;
        if !(row_defect <= 1e-10) {
            return Err(Error::DtnInvariant { what: "constant not in kernel", defect: row_defect });
        }
        let neg = (-lmin / lmax).max(0.0);
        if !(neg <= 1e-10) {
            return Err(Error::DtnInvariant { what: "not positive semidefinite", defect: neg });
        }
        Ok((row_defect, neg))
    }
}

/// Assemble the DtN operator once for a run and validate it.
pub fn assemble_dtn(curve: &BoundaryCurve, bathy: &InteriorBathymetry, choice: InteriorChoice) -> Result<DtnOperator> {
    let solver = InteriorSolver::new(curve, bathy, choice)?;
    assemble_from_solver(&solver, curve.length())
}

pub fn assemble_from_solver(solver: &InteriorSolver, length: f64) -> Result<DtnOperator> {
    let op = DtnOperator::from_matrix(solver.raw_dtn()?, length, solver.label())?;
    op.check_invariants()?;
    Ok(op)
}

/// Interior velocity `grad phi` and pressure
/// `P_atm - rho (phi_t + |grad phi|^2 / 2 + g zeta_w)` from the trace and its
/// time derivative.
pub fn recover_interior(
    solver: &InteriorSolver,
    bathy: &InteriorBathymetry,
    psi: &TraceField,
    psi_t: &TraceField,
    params: &Params,
) -> Result<InteriorFlow> {
    let phi = solver.solve(psi)?;
    let phi_t = solver.solve(psi_t)?;
    let velocity = solver.gradient(&phi.phi)?;
    let pressure = solver
        .nodes()
        .iter()
        .zip(&velocity)
        .zip(&phi_t.phi)
        .map(|((x, v), pt)| {
            let zeta_w = bathy.eval(*x) - params.h0;
            params.p_atm - params.rho * (pt + 0.5 * (v[0] * v[0] + v[1] * v[1]) + params.g * zeta_w)
        })
        .collect();
    Ok(InteriorFlow { nodes: solver.nodes().to_vec(), velocity, pressure })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_profiles() {
        let b = InteriorBathymetry::radial_poly(vec![2.0, -0.5], [1.0, 0.0], 0.1);
        assert!((b.eval([1.0, 1.0]) - 1.5).abs() < 1e-15);
        let t = InteriorBathymetry {
            profile: DepthProfile::RadialTable(vec![(0.0, 1.0), (0.5, 1.5), (1.0, 2.0)]),
            center: [0.0; 2],
            c0: 0.1,
        };
        assert!((t.eval([0.25, 0.0]) - 1.25).abs() < 1e-12);
        assert!(t.check_floor([[0.0, 0.0]]).is_ok());
        let low = InteriorBathymetry::constant(0.05, 0.1);
        assert!(matches!(low.check_floor([[0.0, 0.0]]), Err(Error::DepthFloor { .. })));
    }
}
