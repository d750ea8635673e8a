//! Monitored functionals: energies, mass, vorticity, subcriticality, the
//! boundary power balance and the weak-dissipativity probe.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::exterior::{ExteriorField, ExteriorSolver, SimState};
use crate::interior::DtnOperator;
use crate::mesh::ExteriorMesh;
use crate::swe::{Params, QuasilinearPack, FlowState};
use crate::trace::TraceField;

pub const CSV_HEADER: &str = "t,E_total,E_pot,E_kin,E_int,mass,max_vort,subcrit_margin,min_h,bflux_balance";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub total: f64,
    pub pot: f64,
    pub kin: f64,
    pub int: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: Energy,
    pub mass: f64,
    pub max_vort: f64,
    pub enstrophy: f64,
    pub subcrit_margin: f64,
    pub min_h: f64,
    pub bflux_balance: f64,
    /// Curve nodes where the trace velocity points out of the fluid domain (`N.v > 0`).
    pub outflow_nodes: usize,
}

impl DiagnosticsRecord {
    pub fn csv_line(&self) -> String {
        let e = &self.energy;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t, e.total, e.pot, e.kin, e.int, self.mass, self.max_vort, self.subcrit_margin, self.min_h, self.bflux_balance
        )
    }
}

/// `1/2 int g zeta^2 + 1/2 int h |v|^2 + 1/2 <psi, Lambda psi>`.
pub fn total_energy(mesh: &ExteriorMesh, dtn: &DtnOperator, field: &ExteriorField, psi: &TraceField, p: &Params) -> Result<Energy> {
    if field.u.len() != mesh.n_cells() {
        return Err(Error::SizeMismatch { expected: mesh.n_cells(), got: field.u.len() });
    }
    let (mut pot, mut kin) = (0.0, 0.0);
    for (c, a) in field.u.iter().zip(mesh.areas()) {
        let h = p.h0 + c[0];
        pot += 0.5 * p.g * c[0] * c[0] * a;
        kin += 0.5 * h * (c[1] * c[1] + c[2] * c[2]) * a;
    }
    let int = 0.5 * dtn.pairing(psi, psi)?;
    Ok(Energy { total: pot + kin + int, pot, kin, int })
}

/// `int_G B (N.(h v)) - int_G B Lambda psi` with `B = g zeta + |v|^2/2`, using
/// the interior traces the solver extrapolates to the curve.
pub fn boundary_power_balance(solver: &ExteriorSolver, state: &SimState) -> Result<f64> {
    let mesh = solver.mesh();
    let p = solver.params();
    let bt = solver.boundary_traces(&state.field.u, &state.psi.values)?;
    let lam = solver.dtn().apply(&state.psi)?;
    let mut acc = 0.0;
    for (j, tr) in bt.interior.iter().enumerate() {
        let n = mesh.gamma_normal(j);
        let b = p.g * tr[0] + 0.5 * (tr[1] * tr[1] + tr[2] * tr[2]);
        let flux = (p.h0 + tr[0]) * (n[0] * tr[1] + n[1] * tr[2]);
        acc += mesh.gamma_weight(j) * b * (flux - lam.values[j]);
    }
    Ok(acc)
}

pub fn record(solver: &ExteriorSolver, state: &SimState) -> Result<DiagnosticsRecord> {
    let mesh = solver.mesh();
    let p = solver.params();
    let f = &state.field;
    let energy = total_energy(mesh, solver.dtn(), f, &state.psi, p)?;
    let mass = mesh.integrate(&f.zeta());
    let vort = mesh.vorticity(&f.component(1), &f.component(2));
    let max_vort = vort.iter().fold(0.0f64, |a, w| a.max(w.abs()));
    let enstrophy = vort
        .iter()
        .zip(&f.u)
        .zip(mesh.areas())
        .map(|((w, c), a)| w * w / (p.h0 + c[0]) * a)
        .sum();
    let mut subcrit_margin = f64::INFINITY;
    let mut min_h = f64::INFINITY;
    for c in &f.u {
        let h = p.h0 + c[0];
        min_h = min_h.min(h);
        subcrit_margin = subcrit_margin.min(p.g * h - c[1] * c[1] - c[2] * c[2]);
    }
    let bt = solver.boundary_traces(&f.u, &state.psi.values)?;
    let outflow_nodes = bt
        .interior
        .iter()
        .enumerate()
        .filter(|(j, tr)| {
            let n = mesh.gamma_normal(*j);
            n[0] * tr[1] + n[1] * tr[2] > 0.0
        })
        .count();
    Ok(DiagnosticsRecord {
        t: state.t,
        energy,
        mass,
        max_vort,
        enstrophy,
        subcrit_margin,
        min_h,
        bflux_balance: boundary_power_balance(solver, state)?,
        outflow_nodes,
    })
}

/// Writes the diagnostics CSV.
pub struct CsvLog<W: Write> {
    out: W,
}

impl<W: Write> CsvLog<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn push(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", r.csv_line())?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parse a diagnostics CSV back into `(t, E_total, ..., bflux_balance)` rows.
pub fn read_csv(text: &str) -> Result<Vec<[f64; 10]>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Format(format!("unexpected diagnostics header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut row = [0.0; 10];
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 10 {
                return Err(Error::Format(format!("diagnostics row has {} fields", fields.len())));
            }
            for (r, f) in row.iter_mut().zip(fields) {
                *r = f.trim().parse().map_err(|_| Error::Format(format!("bad number {f:?}")))?;
            }
            Ok(row)
        })
        .collect()
}

/// Time samples of the boundary unknowns `u_check = Sigma(u) d_t u` and
/// `psi_check = d_t psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample {
    pub t: f64,
    pub u_check: Vec<[f64; 3]>,
    pub psi_check: TraceField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    /// `int_0^T int_G 2 u_check^I (N.u_check^II)`.
    pub boundary_form: f64,
    /// `E_int(psi_check)` at each sample.
    pub e_int: Vec<f64>,
    /// Centered `d/dt E_int(psi_check)` at the interior samples.
    pub e_int_rate: Vec<(f64, f64)>,
    /// Largest `|d/dt E_int - <Lambda psi_check, d_t psi_check>|`.
    pub identity_residual: f64,
    /// Largest `|<Lambda a, b> - <Lambda b, a>|` over consecutive samples.
    pub symmetry_residual: f64,
    /// `boundary_form + 2 (E_int(T) - E_int(0))`; vanishes when the boundary
    /// condition holds for the time-differentiated unknowns.
    pub balance: f64,
}

impl ProbeReport {
    pub fn b1_sign(&self) -> &'static str {
        if self.boundary_form > 0.0 {
            "positive"
        } else if self.boundary_form < 0.0 {
            "negative"
        } else {
            "zero"
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "boundary_form={:e}", self.boundary_form);
        let _ = writeln!(s, "b1_sign={}", self.b1_sign());
        let _ = writeln!(s, "e_int_first={:e}", self.e_int.first().copied().unwrap_or(0.0));
        let _ = writeln!(s, "e_int_last={:e}", self.e_int.last().copied().unwrap_or(0.0));
        let _ = writeln!(s, "identity_residual={:e}", self.identity_residual);
        let _ = writeln!(s, "symmetry_residual={:e}", self.symmetry_residual);
        let _ = writeln!(s, "balance={:e}", self.balance);
        s
    }
}

pub fn weak_dissipativity_probe(samples: &[ProbeSample], normals: &[[f64; 2]], weights: &[f64], dtn: &DtnOperator) -> Result<ProbeReport> {
    if samples.len() < 3 {
        return Err(Error::NotEnoughData(format!("probe needs at least 3 samples, got {}", samples.len())));
    }
    let form: Vec<f64> = samples
        .iter()
        .map(|s| {
            s.u_check
                .iter()
                .zip(normals)
                .zip(weights)
                .map(|((u, n), w)| 2.0 * w * u[0] * (n[0] * u[1] + n[1] * u[2]))
                .sum()
        })
        .collect();
    let boundary_form = samples.windows(2).zip(form.windows(2)).map(|(s, f)| 0.5 * (s[1].t - s[0].t) * (f[0] + f[1])).sum();
    let e_int: Vec<f64> = samples
        .iter()
        .map(|s| dtn.pairing(&s.psi_check, &s.psi_check).map(|x| 0.5 * x))
        .collect::<Result<_>>()?;
    let mut e_int_rate = Vec::new();
    let mut identity_residual = 0.0f64;
    for k in 1..samples.len() - 1 {
        let dt = samples[k + 1].t - samples[k - 1].t;
        let rate = (e_int[k + 1] - e_int[k - 1]) / dt;
        let dpsi = TraceField::new(
            samples[k + 1]
                .psi_check
                .values
                .iter()
                .zip(&samples[k - 1].psi_check.values)
                .map(|(a, b)| (a - b) / dt)
                .collect(),
            samples[k].psi_check.length,
        );
        let pairing = dtn.pairing(&samples[k].psi_check, &dpsi)?;
        identity_residual = identity_residual.max((rate - pairing).abs());
        e_int_rate.push((samples[k].t, rate));
    }
    let mut symmetry_residual = 0.0f64;
    for w in samples.windows(2) {
        let ab = dtn.pairing(&w[0].psi_check, &w[1].psi_check)?;
        let ba = dtn.pairing(&w[1].psi_check, &w[0].psi_check)?;
        symmetry_residual = symmetry_residual.max((ab - ba).abs());
    }
    let balance = boundary_form + 2.0 * (e_int[e_int.len() - 1] - e_int[0]);
    Ok(ProbeReport { samples: samples.len(), boundary_form, e_int, e_int_rate, identity_residual, symmetry_residual, balance })
}

/// Build probe samples from stored snapshots by centered time differences of
/// the curve traces (ghost states, which carry the boundary condition).
pub fn probe_samples(solver: &ExteriorSolver, states: &[SimState]) -> Result<Vec<ProbeSample>> {
    if states.len() < 3 {
        return Err(Error::NotEnoughData(format!("need at least 3 snapshots, got {}", states.len())));
    }
    let p = *solver.params();
    let traces: Vec<Vec<[f64; 3]>> = states
        .iter()
        .map(|s| solver.boundary_traces(&s.field.u, &s.psi.values).map(|b| b.ghost))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for k in 1..states.len() - 1 {
        let dt = states[k + 1].t - states[k - 1].t;
        if !(dt > 0.0) {
            return Err(Error::NotEnoughData("snapshot times must increase".into()));
        }
        let mut u_check = Vec::with_capacity(traces[k].len());
        for j in 0..traces[k].len() {
            let (a, b) = (traces[k + 1][j], traces[k - 1][j]);
            let du = [(a[0] - b[0]) / dt, (a[1] - b[1]) / dt, (a[2] - b[2]) / dt];
            let pack = QuasilinearPack::new(&FlowState::from_array(traces[k][j]), &p)?;
            let uc = pack.sigma * nalgebra::Vector3::from(du);
            u_check.push([uc[0], uc[1], uc[2]]);
        }
        let psi_check = TraceField::new(
            states[k + 1].psi.values.iter().zip(&states[k - 1].psi.values).map(|(a, b)| (a - b) / dt).collect(),
            states[k].psi.length,
        );
        out.push(ProbeSample { t: states[k].t, u_check, psi_check });
    }
    Ok(out)
}
