//! Run configuration, scenario construction, runs with artifacts and the
//! grid-convergence harness.
//!
//! Configuration files are flat `key = value` lines; `#` starts a comment.
//! Unknown or repeated keys are rejected, and every violation is reported at once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::compat::{self, init_from_potential, stream_with_bump};
use crate::diagnostics::{self, CsvLog, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::exterior::{ExteriorField, ExteriorSolver, Limiter, OuterBoundary, SimState, SolverConfig};
use crate::geometry::{BoundaryCurve, CurveSpec, TabulatedCurve};
use crate::interior::{assemble_dtn, DepthProfile, DtnOperator, InteriorBathymetry, InteriorChoice};
use crate::io;
use crate::mesh::ExteriorMesh;
use crate::swe::{FlowState, Params};
use crate::trace::TraceField;

#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InteriorKind {
    Constant(f64),
    /// Coefficients of `h(rho) = sum c_k rho^(2k)`.
    Radial(Vec<f64>),
    /// Two-column file of `(rho, h)` samples.
    Table(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialId {
    /// `phi = x1`
    Linear,
    /// `phi = (x1^2 - x2^2) / 2`
    Strain,
    /// `phi = sin(x1) cos(x2)`
    SinCos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Rest,
    /// Gaussian surface bump at `pulse`, fluid at rest.
    Gaussian,
    /// Gaussian ring `A exp(-(|x - c| - ring_radius)^2 / sigma^2)` about the curve center.
    Ring,
    /// Uniform stream plus an optional Gaussian bump, projected to be compatible.
    Stream,
    Potential(PotentialId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub curve: CurveKind,
    pub center: [f64; 2],
    pub n_s: usize,
    pub n_r: usize,
    /// Distance from the curve to the outer boundary; defaults to seven
    /// equivalent radii (outer boundary at eight obstacle radii for a disk).
    pub r_out: Option<f64>,
    pub params: Params,
    pub interior: InteriorKind,
    pub interior_floor: f64,
    pub interior_solver: InteriorChoice,
    pub initial: InitialKind,
    pub amplitude: f64,
    pub sigma: f64,
    pub pulse: [f64; 2],
    pub ring_radius: f64,
    pub stream: [f64; 2],
    pub potential_amp: f64,
    pub psi_amplitude: f64,
    pub psi_mode: usize,
    pub solver: SolverConfig,
    pub jet_order: usize,
    pub compat_tol: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            curve: CurveKind::Circle { radius: 1.0 },
            center: [0.0, 0.0],
            n_s: 256,
            n_r: 128,
            r_out: None,
            params: Params::default(),
            interior: InteriorKind::Constant(1.0),
            interior_floor: 1e-3,
            interior_solver: InteriorChoice::Auto,
            initial: InitialKind::Rest,
            amplitude: 0.05,
            sigma: 0.5,
            pulse: [3.0, 0.0],
            ring_radius: 3.0,
            stream: [0.0, 0.0],
            potential_amp: 0.05,
            psi_amplitude: 0.0,
            psi_mode: 1,
            solver: SolverConfig::default(),
            jet_order: 2,
            compat_tol: None,
            output_dir: None,
            snapshot_every: 0,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str, errs: &mut Vec<String>) -> Option<T> {
    match v.parse::<T>() {
        Ok(x) => Some(x),
        Err(_) => {
            errs.push(format!("{key}: cannot parse {v:?}"));
            None
        }
    }
}

fn parse_list(key: &str, v: &str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
    v.split(',').map(|t| parse_num::<f64>(key, t.trim(), errs)).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // relative file references are resolved against the config location
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let CurveKind::Tabulated { path } = &mut cfg.curve {
                fix(path);
            }
            if let InteriorKind::Table(path) = &mut cfg.interior {
                fix(path);
            }
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn check_files(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let CurveKind::Tabulated { path } = &self.curve {
            if !path.is_file() {
                errs.push(format!("curve_file {} does not exist", path.display()));
            }
        }
        if let InteriorKind::Table(path) = &self.interior {
            if !path.is_file() {
                errs.push(format!("interior_table {} does not exist", path.display()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Parse configuration text. File references are not checked here.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut errs = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errs.push(format!("line {}: expected `key = value`", ln + 1));
                continue;
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if kv.insert(k.clone(), v).is_some() {
                errs.push(format!("line {}: duplicate key {k}", ln + 1));
            }
        }
        let mut c = Self::default();
        let mut take = |k: &str| kv.remove(k);

        let curve = take("curve");
        let radius = take("radius");
        let (a, b) = (take("a"), take("b"));
        let curve_file = take("curve_file");
        match curve.as_deref() {
            None => errs.push("curve: missing (circle, ellipse or tabulated)".into()),
            Some("circle") => {
                let r = radius.map_or(Some(1.0), |v| parse_num("radius", &v, &mut errs));
                c.curve = CurveKind::Circle { radius: r.unwrap_or(1.0) };
            }
            Some("ellipse") => {
                let a = a.and_then(|v| parse_num("a", &v, &mut errs));
                let b = b.and_then(|v| parse_num("b", &v, &mut errs));
                match (a, b) {
                    (Some(a), Some(b)) => c.curve = CurveKind::Ellipse { a, b },
                    _ => errs.push("ellipse needs numeric `a` and `b`".into()),
                }
            }
            Some("tabulated") => match curve_file {
                Some(p) => c.curve = CurveKind::Tabulated { path: PathBuf::from(p) },
                None => errs.push("tabulated curve needs `curve_file`".into()),
            },
            Some(other) => errs.push(format!("curve: unknown kind {other:?}")),
        }

        macro_rules! num {
            ($key:expr, $slot:expr) => {
                if let Some(v) = take($key) {
                    if let Some(x) = parse_num($key, &v, &mut errs) {
                        $slot = x;
                    }
                }
            };
        }
        num!("center_x", c.center[0]);
        num!("center_y", c.center[1]);
        num!("n_s", c.n_s);
        num!("n_r", c.n_r);
        if let Some(v) = take("r_out") {
            c.r_out = parse_num("r_out", &v, &mut errs);
        }
        num!("g", c.params.g);
        num!("h0", c.params.h0);
        num!("rho", c.params.rho);
        num!("p_atm", c.params.p_atm);
        num!("c0_floor", c.solver.c0_floor);

        let depth = take("interior_depth");
        let coeffs = take("interior_coeffs");
        let table = take("interior_table");
        match take("interior").as_deref() {
            None | Some("constant") => {
                let h = depth.map_or(Some(c.params.h0), |v| parse_num("interior_depth", &v, &mut errs));
                c.interior = InteriorKind::Constant(h.unwrap_or(c.params.h0));
            }
            Some("radial") => match coeffs.and_then(|v| parse_list("interior_coeffs", &v, &mut errs)) {
                Some(cs) if !cs.is_empty() => c.interior = InteriorKind::Radial(cs),
                _ => errs.push("radial interior needs `interior_coeffs`".into()),
            },
            Some("table") => match table {
                Some(p) => c.interior = InteriorKind::Table(PathBuf::from(p)),
                None => errs.push("table interior needs `interior_table`".into()),
            },
            Some(other) => errs.push(format!("interior: unknown kind {other:?}")),
        }
        num!("interior_floor", c.interior_floor);
        match take("interior_solver").as_deref() {
            None | Some("auto") => c.interior_solver = InteriorChoice::Auto,
            Some("spectral") => c.interior_solver = InteriorChoice::Spectral,
            Some("fd") => c.interior_solver = InteriorChoice::FiniteDifference,
            Some(other) => errs.push(format!("interior_solver: unknown value {other:?}")),
        }

        let potential = take("potential");
        match take("initial").as_deref() {
            None | Some("rest") => c.initial = InitialKind::Rest,
            Some("gaussian") => c.initial = InitialKind::Gaussian,
            Some("ring") => c.initial = InitialKind::Ring,
            Some("stream") => c.initial = InitialKind::Stream,
            Some("potential") => match potential.as_deref() {
                None | Some("linear") => c.initial = InitialKind::Potential(PotentialId::Linear),
                Some("strain") => c.initial = InitialKind::Potential(PotentialId::Strain),
                Some("sincos") => c.initial = InitialKind::Potential(PotentialId::SinCos),
                Some(other) => errs.push(format!("potential: unknown id {other:?}")),
            },
            Some(other) => errs.push(format!("initial: unknown kind {other:?}")),
        }
        num!("amplitude", c.amplitude);
        num!("sigma", c.sigma);
        num!("pulse_x", c.pulse[0]);
        num!("pulse_y", c.pulse[1]);
        num!("ring_radius", c.ring_radius);
        num!("stream_u", c.stream[0]);
        num!("stream_v", c.stream[1]);
        num!("potential_amp", c.potential_amp);
        num!("psi_amplitude", c.psi_amplitude);
        num!("psi_mode", c.psi_mode);

        num!("cfl", c.solver.cfl);
        num!("order", c.solver.order);
        match take("limiter").as_deref() {
            None | Some("minmod") => c.solver.limiter = Limiter::Minmod,
            Some("none") => c.solver.limiter = Limiter::None,
            Some(other) => errs.push(format!("limiter: unknown value {other:?}")),
        }
        match take("outer").as_deref() {
            None | Some("wall") => c.solver.outer = OuterBoundary::Wall,
            Some("nonreflecting") => c.solver.outer = OuterBoundary::NonReflecting,
            Some(other) => errs.push(format!("outer: unknown value {other:?}")),
        }
        num!("eps", c.solver.eps);
        num!("h_min", c.solver.h_min);
        num!("t_end", c.solver.t_end);
        num!("output_every", c.solver.output_every);
        num!("deterministic", c.solver.deterministic);
        num!("jet_order", c.jet_order);
        if let Some(v) = take("compat_tol") {
            c.compat_tol = parse_num("compat_tol", &v, &mut errs);
        }
        if let Some(v) = take("output_dir") {
            c.output_dir = Some(PathBuf::from(v));
        }
        num!("snapshot_every", c.snapshot_every);
        num!("seed", c.seed);

        // keys that only make sense with another choice are still known keys
        for k in kv.keys() {
            errs.push(format!("unknown key {k:?}"));
        }
        if let Err(Error::Config(m)) = c.validate() {
            errs.push(m);
        }
        if errs.is_empty() {
            Ok(c)
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Range checks; run before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match &self.curve {
            CurveKind::Circle { radius } if !(*radius > 0.0) => errs.push(format!("radius must be positive, got {radius}")),
            CurveKind::Ellipse { a, b } if !(*a > 0.0 && *b > 0.0) => errs.push(format!("ellipse axes must be positive, got {a}, {b}")),
            _ => {}
        }
        if !self.n_s.is_power_of_two() || self.n_s < 8 {
            errs.push(format!("n_s must be a power of two >= 8, got {}", self.n_s));
        }
        if self.n_r < 3 {
            errs.push(format!("n_r must be at least 3, got {}", self.n_r));
        }
        if let Some(r) = self.r_out {
            if !(r > 0.0) {
                errs.push(format!("r_out must be positive, got {r}"));
            }
        }
        let p = &self.params;
        if !(p.g > 0.0) {
            errs.push(format!("g must be positive, got {}", p.g));
        }
        if !(p.h0 > 0.0) {
            errs.push(format!("h0 must be positive, got {}", p.h0));
        }
        if !(p.rho > 0.0) {
            errs.push(format!("rho must be positive, got {}", p.rho));
        }
        if !(self.interior_floor > 0.0) {
            errs.push(format!("interior_floor must be positive, got {}", self.interior_floor));
        }
        if let InteriorKind::Constant(h) = self.interior {
            if !(h >= self.interior_floor) {
                errs.push(format!("interior_depth {h} is below interior_floor {}", self.interior_floor));
            }
        }
        if !(self.sigma > 0.0) {
            errs.push(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.jet_order > compat::MAX_JET_ORDER {
            errs.push(format!("jet_order must be at most {}, got {}", compat::MAX_JET_ORDER, self.jet_order));
        }
        if let Some(t) = self.compat_tol {
            if !(t > 0.0) {
                errs.push(format!("compat_tol must be positive, got {t}"));
            }
        }
        if let Err(Error::Config(m)) = self.solver.validate() {
            errs.push(m);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Configuration text that parses back to `self`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.curve {
            CurveKind::Circle { radius } => {
                kv("curve", "circle".into());
                kv("radius", radius.to_string());
            }
            CurveKind::Ellipse { a, b } => {
                kv("curve", "ellipse".into());
                kv("a", a.to_string());
                kv("b", b.to_string());
            }
            CurveKind::Tabulated { path } => {
                kv("curve", "tabulated".into());
                kv("curve_file", path.display().to_string());
            }
        }
        kv("center_x", self.center[0].to_string());
        kv("center_y", self.center[1].to_string());
        kv("n_s", self.n_s.to_string());
        kv("n_r", self.n_r.to_string());
        if let Some(r) = self.r_out {
            kv("r_out", r.to_string());
        }
        kv("g", self.params.g.to_string());
        kv("h0", self.params.h0.to_string());
        kv("rho", self.params.rho.to_string());
        kv("p_atm", self.params.p_atm.to_string());
        kv("c0_floor", self.solver.c0_floor.to_string());
        match &self.interior {
            InteriorKind::Constant(h) => {
                kv("interior", "constant".into());
                kv("interior_depth", h.to_string());
            }
            InteriorKind::Radial(cs) => {
                kv("interior", "radial".into());
                kv("interior_coeffs", fmt_list(cs));
            }
            InteriorKind::Table(p) => {
                kv("interior", "table".into());
                kv("interior_table", p.display().to_string());
            }
        }
        kv("interior_floor", self.interior_floor.to_string());
        kv(
            "interior_solver",
            match self.interior_solver {
                InteriorChoice::Auto => "auto",
                InteriorChoice::Spectral => "spectral",
                InteriorChoice::FiniteDifference => "fd",
            }
            .into(),
        );
        let (init, pot) = match self.initial {
            InitialKind::Rest => ("rest", None),
            InitialKind::Gaussian => ("gaussian", None),
            InitialKind::Ring => ("ring", None),
            InitialKind::Stream => ("stream", None),
            InitialKind::Potential(PotentialId::Linear) => ("potential", Some("linear")),
            InitialKind::Potential(PotentialId::Strain) => ("potential", Some("strain")),
            InitialKind::Potential(PotentialId::SinCos) => ("potential", Some("sincos")),
        };
        kv("initial", init.into());
        if let Some(p) = pot {
            kv("potential", p.into());
        }
        kv("amplitude", self.amplitude.to_string());
        kv("sigma", self.sigma.to_string());
        kv("pulse_x", self.pulse[0].to_string());
        kv("pulse_y", self.pulse[1].to_string());
        kv("ring_radius", self.ring_radius.to_string());
        kv("stream_u", self.stream[0].to_string());
        kv("stream_v", self.stream[1].to_string());
        kv("potential_amp", self.potential_amp.to_string());
        kv("psi_amplitude", self.psi_amplitude.to_string());
        kv("psi_mode", self.psi_mode.to_string());
        let sv = &self.solver;
        kv("cfl", sv.cfl.to_string());
        kv("order", sv.order.to_string());
        kv("limiter", if sv.limiter == Limiter::Minmod { "minmod" } else { "none" }.into());
        kv("outer", if sv.outer == OuterBoundary::Wall { "wall" } else { "nonreflecting" }.into());
        kv("eps", sv.eps.to_string());
        kv("h_min", sv.h_min.to_string());
        kv("t_end", sv.t_end.to_string());
        kv("output_every", sv.output_every.to_string());
        kv("deterministic", sv.deterministic.to_string());
        kv("jet_order", self.jet_order.to_string());
        if let Some(t) = self.compat_tol {
            kv("compat_tol", t.to_string());
        }
        if let Some(d) = &self.output_dir {
            kv("output_dir", d.display().to_string());
        }
        kv("snapshot_every", self.snapshot_every.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    pub fn curve_spec(&self) -> Result<CurveSpec> {
        Ok(match &self.curve {
            CurveKind::Circle { radius } => CurveSpec::Circle { radius: *radius, center: self.center },
            CurveKind::Ellipse { a, b } => CurveSpec::Ellipse { a: *a, b: *b, center: self.center },
            CurveKind::Tabulated { path } => {
                let pts: Vec<[f64; 2]> = read_columns(path)?.into_iter().map(|(x, y)| [x, y]).collect();
                CurveSpec::Tabulated(TabulatedCurve::new(&pts)?)
            }
        })
    }

    pub fn bathymetry(&self) -> Result<InteriorBathymetry> {
        let profile = match &self.interior {
            InteriorKind::Constant(h) => DepthProfile::Constant(*h),
            InteriorKind::Radial(cs) => DepthProfile::RadialPoly(cs.clone()),
            InteriorKind::Table(p) => DepthProfile::RadialTable(read_columns(p)?),
        };
        Ok(InteriorBathymetry { profile, center: self.center, c0: self.interior_floor })
    }
}

/// Two whitespace- or comma-separated numeric columns; `#` comments allowed.
pub fn read_columns(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|t| t.parse().ok()).collect();
        match parsed.as_deref() {
            Some([x, y]) => out.push((*x, *y)),
            _ => return Err(Error::Format(format!("{}:{}: expected two numbers", path.display(), ln + 1))),
        }
    }
    Ok(out)
}

/// Everything a run needs, built from a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub curve: BoundaryCurve,
    pub bathy: InteriorBathymetry,
    pub mesh: Arc<ExteriorMesh>,
    pub dtn: Arc<DtnOperator>,
    pub solver: ExteriorSolver,
    pub initial: SimState,
}

pub fn initial_data(cfg: &ScenarioConfig, mesh: &ExteriorMesh, dtn: &DtnOperator) -> Result<(ExteriorField, TraceField)> {
    let p = &cfg.params;
    let a = cfg.amplitude;
    let s2 = cfg.sigma * cfg.sigma;
    let gauss = |x: [f64; 2]| a * (-((x[0] - cfg.pulse[0]).powi(2) + (x[1] - cfg.pulse[1]).powi(2)) / s2).exp();
    let (field, mut psi) = match cfg.initial {
        InitialKind::Rest => (ExteriorField::rest(mesh.n_r(), mesh.n_s()), TraceField::zeros(mesh.n_s(), mesh.curve_length())),
        InitialKind::Gaussian => (
            ExteriorField::from_fn(mesh, |x| FlowState::new(gauss(x), [0.0, 0.0])),
            TraceField::zeros(mesh.n_s(), mesh.curve_length()),
        ),
        InitialKind::Ring => {
            let c = cfg.center;
            let f = ExteriorField::from_fn(mesh, |x| {
                let rho = (x[0] - c[0]).hypot(x[1] - c[1]);
                FlowState::new(a * (-(rho - cfg.ring_radius).powi(2) / s2).exp(), [0.0, 0.0])
            });
            (f, TraceField::zeros(mesh.n_s(), mesh.curve_length()))
        }
        InitialKind::Stream => {
            let bump = (a != 0.0).then_some((a, cfg.sigma, cfg.pulse));
            stream_with_bump(mesh, dtn, cfg.stream, bump, p)?
        }
        InitialKind::Potential(id) => {
            let k = cfg.potential_amp;
            let phi: Vec<f64> = mesh
                .centroids()
                .iter()
                .map(|x| {
                    k * match id {
                        PotentialId::Linear => x[0],
                        PotentialId::Strain => 0.5 * (x[0] * x[0] - x[1] * x[1]),
                        PotentialId::SinCos => x[0].sin() * x[1].cos(),
                    }
                })
                .collect();
            let zeta: Vec<f64> = mesh.centroids().iter().map(|&x| gauss(x)).collect();
            init_from_potential(mesh, &zeta, &phi)?
        }
    };
    if cfg.psi_amplitude != 0.0 {
        let (l, m) = (mesh.curve_length(), cfg.psi_mode as f64);
        for (j, v) in psi.values.iter_mut().enumerate() {
            let s = j as f64 * mesh.ds();
            *v += cfg.psi_amplitude * (2.0 * std::f64::consts::PI * m * s / l).cos();
        }
    }
    Ok((field, psi))
}

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let curve = BoundaryCurve::new(cfg.curve_spec()?, cfg.n_s)?;
    let bathy = cfg.bathymetry()?;
    let dtn = Arc::new(assemble_dtn(&curve, &bathy, cfg.interior_solver)?);
    let r_out = cfg.r_out.unwrap_or(7.0 * curve.spec().equivalent_radius());
    let mesh = Arc::new(ExteriorMesh::new(&curve, cfg.n_r, r_out)?);
    let (field, psi) = initial_data(cfg, &mesh, &dtn)?;
    let mut solver = ExteriorSolver::new(mesh.clone(), dtn.clone(), cfg.params, cfg.solver.clone())?;
    if cfg.solver.eps > 0.0 {
        let jet = compat::build_jet(&mesh, &field, &psi, cfg.jet_order, &cfg.params)?;
        solver = solver.with_forcing(jet.forcing());
    }
    let initial = solver.initial_state(field, psi)?;
    Ok(Scenario { config: cfg.clone(), curve, bathy, mesh, dtn, solver, initial })
}

/// Process exit status for an error: 2 configuration, 3 solver abort, 4 invariant failure.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Io(_) | Error::Format(_) => 2,
        _ if e.is_solver_abort() => 3,
        _ => 4,
    }
}

fn abort_label(e: &Error) -> &'static str {
    match e.root() {
        Error::WetDry { .. } => "wet_dry",
        Error::Subcritical { .. } => "subcritical",
        Error::NonFinite { .. } | Error::TraceNonFinite { .. } => "non_finite",
        _ => "error",
    }
}

/// Ordered key-value run record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, k: impl Into<String>, v: impl ToString) {
        self.entries.push((k.into(), v.to_string()));
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.entries.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The configuration echoed under the `config.` prefix.
    pub fn config_text(&self) -> String {
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k} = {v}\n")))
            .collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self { entries }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub manifest: Manifest,
    pub records: Vec<DiagnosticsRecord>,
    pub csv: String,
    pub final_state: Option<SimState>,
    pub error: Option<Error>,
}

/// Build and run a scenario, writing diagnostics, snapshots and the manifest
/// into `output_dir` when one is configured.
pub fn run_scenario(cfg: &ScenarioConfig) -> RunReport {
    let started = Instant::now();
    let mut manifest = Manifest::default();
    for line in cfg.emit().lines() {
        if let Some((k, v)) = line.split_once('=') {
            manifest.push(format!("config.{}", k.trim()), v.trim());
        }
    }
    manifest.push("code_version", env!("CARGO_PKG_VERSION"));
    let sc = match build_scenario(cfg) {
        Ok(s) => s,
        Err(e) => {
            manifest.push("status", "setup_failed");
            manifest.push("reason", &e);
            let report = RunReport { exit_code: exit_code(&e), manifest, records: vec![], csv: String::new(), final_state: None, error: Some(e) };
            return finish_artifacts(cfg, report);
        }
    };
    manifest.push("interior_backend", sc.dtn.backend());
    manifest.push("dtn_presym_defect", sc.dtn.presym_defect());
    manifest.push("r_out", sc.mesh.r_out());

    let mut records = Vec::new();
    let mut log = CsvLog::new(Vec::new()).expect("in-memory writer");
    let mut state = sc.initial.clone();
    let snap_dir = cfg.output_dir.clone().filter(|_| cfg.snapshot_every > 0);
    let mut observe = |st: &SimState| -> Result<()> {
        let r = diagnostics::record(&sc.solver, st)?;
        log.push(&r)?;
        records.push(r);
        if let Some(dir) = &snap_dir {
            if st.step % cfg.snapshot_every == 0 {
                io::write_snapshot(&dir.join(format!("snap_{:06}.dwv", st.step)), st, &cfg.params)?;
            }
        }
        Ok(())
    };
    let prepared = match &snap_dir {
        Some(dir) => fs::create_dir_all(dir).map_err(Error::from),
        None => Ok(()),
    };
    let outcome = prepared.and_then(|_| observe(&state)).and_then(|_| sc.solver.run(&mut state, cfg.solver.t_end, &mut observe));
    let csv = String::from_utf8(log.into_inner()).expect("utf8 csv");
    manifest.push("steps", state.step);
    manifest.push("t_final", state.t);
    let drift = state
        .field
        .u
        .iter()
        .zip(&sc.initial.field.u)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .chain(state.psi.values.iter().zip(&sc.initial.psi.values).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max);
    manifest.push("max_state_drift", format!("{drift:e}"));
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        let e0 = first.energy.total;
        let rel = if e0 != 0.0 { (last.energy.total - e0) / e0 } else { last.energy.total - e0 };
        manifest.push("energy_drift", format!("{rel:e}"));
        manifest.push("mass_change", format!("{:e}", last.mass - first.mass));
    }
    let (code, err) = match outcome {
        Ok(_) => {
            manifest.push("status", "ok");
            (0, None)
        }
        Err(e) => {
            manifest.push("status", "aborted");
            manifest.push("abort", abort_label(&e));
            manifest.push("reason", &e);
            (exit_code(&e), Some(e))
        }
    };
    manifest.push("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    let report = RunReport { exit_code: code, manifest, records, csv, final_state: Some(state), error: err };
    finish_artifacts(cfg, report)
}

fn finish_artifacts(cfg: &ScenarioConfig, mut report: RunReport) -> RunReport {
    let Some(dir) = &cfg.output_dir else { return report };
    let write = || -> Result<()> {
        fs::create_dir_all(dir)?;
        if !report.csv.is_empty() {
            io::write_atomic(&dir.join("diagnostics.csv"), report.csv.as_bytes())?;
        }
        if let Some(st) = &report.final_state {
            io::write_snapshot(&dir.join("final.dwv"), st, &cfg.params)?;
        }
        io::write_atomic(&dir.join("manifest.txt"), report.manifest.to_text().as_bytes())
    };
    if let Err(e) = write() {
        if report.exit_code == 0 {
            report.exit_code = exit_code(&e);
        }
        report.error.get_or_insert(e);
    }
    report
}

/// One resolution level of a convergence study.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub n_r: usize,
    pub n_s: usize,
    pub field: ExteriorField,
    pub energy_drift: f64,
    pub max_vort: f64,
    pub compat0: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceColumn {
    pub name: &'static str,
    pub values: Vec<f64>,
    pub orders: Vec<f64>,
    /// `None` when every value sits at rounding level.
    pub fitted: Option<f64>,
}

impl ConvergenceColumn {
    fn new(name: &'static str, values: Vec<f64>, scale: f64) -> Self {
        let exact = values.iter().all(|v| v.abs() <= 1e-12 * scale.max(1.0));
        let orders = values.windows(2).map(|w| (w[0].abs() / w[1].abs()).log2()).collect();
        let fitted = if exact { None } else { Some(fit_order(&values)) };
        Self { name, values, orders, fitted }
    }

    pub fn fitted_label(&self) -> String {
        match self.fitted {
            None => "exact".into(),
            Some(p) => format!("{p:.3}"),
        }
    }
}

/// Least-squares slope of `-log2 |e_k|` against the level index.
pub fn fit_order(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let ys: Vec<f64> = errors.iter().map(|e| -e.abs().log2()).collect();
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub levels: Vec<LevelResult>,
    /// Successive solution differences restricted to the coarser grid.
    pub solution: ConvergenceColumn,
    pub energy_drift: ConvergenceColumn,
    pub max_vort: ConvergenceColumn,
    pub compat0: ConvergenceColumn,
}

impl ConvergenceTable {
    pub fn to_text(&self) -> String {
        let mut s = String::from("level  n_r  n_s  energy_drift  max_vort  compat0  sol_diff\n");
        for (k, l) in self.levels.iter().enumerate() {
            let d = self.solution.values.get(k).map_or("-".to_string(), |v| format!("{v:.3e}"));
            let _ = writeln!(
                s,
                "{k:>5} {:>4} {:>4}  {:.3e}  {:.3e}  {:.3e}  {d}",
                l.n_r, l.n_s, l.energy_drift, l.max_vort, l.compat0
            );
        }
        for c in [&self.solution, &self.energy_drift, &self.max_vort, &self.compat0] {
            let _ = writeln!(s, "order {} = {}", c.name, c.fitted_label());
        }
        s
    }
}

/// Average a field onto the grid with half the rings and half the columns.
pub fn restrict(fine: &ExteriorField) -> ExteriorField {
    let (n_r, n_s) = (fine.n_r / 2, fine.n_s / 2);
    let mut u = vec![[0.0; 3]; n_r * n_s];
    for i in 0..n_r {
        for j in 0..n_s {
            let mut acc = [0.0; 3];
            for ii in [2 * i, 2 * i + 1] {
                for (dj, w) in [(2 * fine.n_s + 2 * j - 1, 0.25), (2 * fine.n_s + 2 * j, 0.5), (2 * fine.n_s + 2 * j + 1, 0.25)] {
                    let c = fine.u[ii * fine.n_s + dj % fine.n_s];
                    for k in 0..3 {
                        acc[k] += 0.5 * w * c[k];
                    }
                }
            }
            u[i * n_s + j] = acc;
        }
    }
    ExteriorField { n_r, n_s, u }
}

/// Area-weighted `L^1` norm of the difference of two fields on one mesh.
pub fn l1_distance(mesh: &ExteriorMesh, a: &ExteriorField, b: &ExteriorField) -> f64 {
    a.u.iter()
        .zip(&b.u)
        .zip(mesh.areas())
        .map(|((x, y), area)| area * ((x[0] - y[0]).abs() + (x[1] - y[1]).abs() + (x[2] - y[2]).abs()))
        .sum()
}

/// Run `cfg` at `levels` resolutions, doubling `n_r` and `n_s` each time.
pub fn converge(cfg: &ScenarioConfig, levels: usize) -> Result<ConvergenceTable> {
    if levels < 3 {
        return Err(Error::Config(format!("convergence needs at least 3 levels, got {levels}")));
    }
    let mut results = Vec::new();
    let mut meshes = Vec::new();
    for k in 0..levels {
        let mut c = cfg.clone();
        c.n_r = cfg.n_r << k;
        c.n_s = cfg.n_s << k;
        c.output_dir = None;
        let sc = build_scenario(&c)?;
        let first = diagnostics::record(&sc.solver, &sc.initial)?;
        let mut state = sc.initial.clone();
        sc.solver.run(&mut state, c.solver.t_end, |_| Ok(()))?;
        let last = diagnostics::record(&sc.solver, &state)?;
        let e0 = first.energy.total;
        let energy_drift = if e0 != 0.0 { ((last.energy.total - e0) / e0).abs() } else { (last.energy.total - e0).abs() };
        let jet = compat::build_jet(&sc.mesh, &sc.initial.field, &sc.initial.psi, 1, &c.params)?;
        let compat0 = compat::check_compatibility(&sc.mesh, &jet, &sc.dtn, 0, &c.params)?.l2;
        results.push(LevelResult { n_r: c.n_r, n_s: c.n_s, field: state.field, energy_drift, max_vort: last.max_vort, compat0 });
        meshes.push(sc.mesh);
    }
    let diffs: Vec<f64> = (0..levels - 1)
        .map(|k| l1_distance(&meshes[k], &restrict(&results[k + 1].field), &results[k].field))
        .collect();
    let scale = l1_distance(&meshes[0], &results[0].field, &ExteriorField::rest(results[0].n_r, results[0].n_s));
    let col = |name, f: &dyn Fn(&LevelResult) -> f64| ConvergenceColumn::new(name, results.iter().map(f).collect(), 1.0);
    Ok(ConvergenceTable {
        solution: ConvergenceColumn::new("solution", diffs, scale),
        energy_drift: col("energy_drift", &|l| l.energy_drift),
        max_vort: col("max_vort", &|l| l.max_vort),
        compat0: col("compat0", &|l| l.compat0),
        levels: results,
    })
}
