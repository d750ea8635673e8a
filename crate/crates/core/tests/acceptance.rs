//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{observed_order, radial_symbol, report, sci, Radial1d};
use swdtn::compat::{self, GnorSystem};
use swdtn::diagnostics::total_energy;
use swdtn::exterior::{ExteriorField, Limiter, OuterBoundary, SimState};
use swdtn::geometry::{BoundaryCurve, CurveSpec};
use swdtn::interior::{assemble_dtn, InteriorBathymetry, InteriorChoice, SpectralDisk};
use swdtn::scenario::{build_scenario, InitialKind, Scenario, ScenarioConfig};
use swdtn::swe::{regularized_boundary_eigen, tangential_vector, Params};
use swdtn::trace::TraceField;

const DISK_SPECTRAL_TOL: f64 = 1e-6;
const FD_MIN_ORDER: f64 = 1.7;
const SYMMETRY_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-12;
const KERNEL_TOL: f64 = 1e-10;
const RADIAL_SYMBOL_TOL: f64 = 1e-8;
const REST_TOL: f64 = 1e-12;
const ENERGY_DRIFT_TOL: f64 = 5e-3;
const ENERGY_MIN_ORDER: f64 = 1.7;
const VORTICITY_MIN_ORDER: f64 = 1.7;
const RADIAL_FACTOR: f64 = 3.0;
const COMPAT_COSINE_REL: f64 = 0.02;
const GNOR_TOL: f64 = 1e-12;
const SLOPE_REL: f64 = 0.05;
const EPS_MIN_SLOPE: f64 = 0.8;
const LIPSCHITZ_FACTOR: f64 = 50.0;

fn unit_circle(n_s: usize) -> BoundaryCurve {
    BoundaryCurve::new(CurveSpec::Circle { radius: 1.0, center: [0.0, 0.0] }, n_s).unwrap()
}

fn disk_rel_error(op: &swdtn::interior::DtnOperator, n_s: usize, k: usize) -> f64 {
    let psi = TraceField::from_fn(n_s, 2.0 * PI, |s| (k as f64 * s).cos());
    let out = op.apply(&psi).unwrap();
    let num: f64 = out.values.iter().zip(&psi.values).map(|(a, b)| (a - k as f64 * b).powi(2)).sum();
    let den: f64 = psi.values.iter().map(|b| (k as f64 * b).powi(2)).sum();
    (num / den).sqrt()
}

/// Pulse scenario used by the energy and vorticity checks.
fn pulse_config(n: usize, t_end: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.params = Params::unit();
    c.n_r = n;
    c.n_s = n;
    c.initial = InitialKind::Gaussian;
    c.amplitude = 0.05;
    c.sigma = 1.0;
    c.pulse = [3.0, 0.0];
    c.solver.limiter = Limiter::None;
    c.solver.outer = OuterBoundary::Wall;
    c.solver.t_end = t_end;
    c
}

fn run_to(sc: &Scenario, t_end: f64) -> SimState {
    let mut st = sc.initial.clone();
    sc.solver.run(&mut st, t_end, |_| Ok(())).unwrap();
    st
}

/// `L^2` distance of two states: exterior cells by area, trace by arc length.
fn state_distance(sc: &Scenario, a: &SimState, b: &SimState) -> f64 {
    let areas = sc.mesh.areas();
    let ext: f64 = a.field.u.iter().zip(&b.field.u).zip(areas).map(|((x, y), w)| w * (0..3).map(|c| (x[c] - y[c]).powi(2)).sum::<f64>()).sum();
    let ds = sc.mesh.ds();
    let tr: f64 = a.psi.values.iter().zip(&b.psi.values).map(|(x, y)| ds * (x - y).powi(2)).sum();
    (ext + tr).sqrt()
}

#[test]
fn c01_dtn_disk_oracle() {
    let t0 = Instant::now();
    let n_s = 256;
    let op = assemble_dtn(&unit_circle(n_s), &InteriorBathymetry::constant(1.0, 0.5), InteriorChoice::Spectral).unwrap();
    let spectral = (1..=8).map(|k| disk_rel_error(&op, n_s, k)).fold(0.0, f64::max);
    let levels = [32usize, 64, 128];
    let fd: Vec<f64> = levels
        .iter()
        .map(|&n| {
            let op = assemble_dtn(&unit_circle(n), &InteriorBathymetry::constant(1.0, 0.5), InteriorChoice::FiniteDifference).unwrap();
            (1..=8).map(|k| disk_rel_error(&op, n, k)).fold(0.0, f64::max)
        })
        .collect();
    let order = observed_order(&fd);
    let secs = t0.elapsed().as_secs_f64();
    let ok = spectral <= DISK_SPECTRAL_TOL && order >= FD_MIN_ORDER && fd.windows(2).all(|w| w[1] < w[0]) && secs < 10.0;
    report(
        "1 dtn disk oracle",
        ok,
        &format!("spectral max rel err {spectral:.2e} (tol {DISK_SPECTRAL_TOL:e}); fd errors {} order {order:.2} (min {FD_MIN_ORDER}); {secs:.1}s", sci(&fd)),
    );
    assert!(ok);
}

fn random_smooth_trace(rng: &mut ChaCha8Rng, n: usize, length: f64) -> TraceField {
    let modes: Vec<(f64, f64)> = (1..=12).map(|m| (rng.gen_range(-1.0..1.0) / (m * m) as f64, rng.gen_range(0.0..2.0 * PI))).collect();
    let c0 = rng.gen_range(-1.0..1.0);
    let mut tf = TraceField::from_fn(n, length, |s| {
        c0 + modes.iter().enumerate().map(|(m, (a, ph))| a * ((m + 1) as f64 * 2.0 * PI * s / length + ph).cos()).sum::<f64>()
    });
    let norm = tf.l2_norm();
    tf.values.iter_mut().for_each(|x| *x /= norm);
    tf
}

#[test]
fn c02_dtn_operator_properties() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = [
        (
            "disk spectral",
            unit_circle(128),
            InteriorBathymetry::radial_poly(vec![1.0, 1.0], [0.0, 0.0], 0.5),
            InteriorChoice::Spectral,
        ),
        (
            "ellipse fd",
            BoundaryCurve::new(CurveSpec::Ellipse { a: 1.5, b: 1.0, center: [0.0, 0.0] }, 128).unwrap(),
            InteriorBathymetry::radial_poly(vec![2.0, -0.2], [0.0, 0.0], 0.5),
            InteriorChoice::FiniteDifference,
        ),
    ];
    let (mut sym, mut min_form, mut ker) = (0.0f64, f64::INFINITY, 0.0f64);
    for (_, curve, bathy, choice) in &cases {
        let op = assemble_dtn(curve, bathy, *choice).unwrap();
        let (n, len) = (curve.n_s(), curve.length());
        for _ in 0..100 {
            let a = random_smooth_trace(&mut rng, n, len);
            let b = random_smooth_trace(&mut rng, n, len);
            sym = sym.max((op.pairing(&a, &b).unwrap() - op.pairing(&b, &a).unwrap()).abs());
            min_form = min_form.min(op.pairing(&a, &a).unwrap());
        }
        let one = op.apply(&TraceField::from_fn(n, len, |_| 1.0)).unwrap();
        ker = ker.max(one.values.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = sym <= SYMMETRY_TOL && min_form >= -POSITIVITY_TOL && ker <= KERNEL_TOL && secs < 30.0;
    report(
        "2 dtn operator properties",
        ok,
        &format!("symmetry defect {sym:.2e}, min <L psi, psi> {min_form:.2e}, |L 1| {ker:.2e} over 200 traces; {secs:.1}s"),
    );
    assert!(ok);
}

#[test]
fn c03_radial_depth_symbol() {
    let profiles: [(&str, Vec<f64>); 2] = [("1+rho^2", vec![1.0, 1.0]), ("2-rho^2/2", vec![2.0, -0.5])];
    let mut worst = 0.0f64;
    for (_, coeffs) in &profiles {
        let bathy = InteriorBathymetry::radial_poly(coeffs.clone(), [0.0, 0.0], 0.5);
        let disk = SpectralDisk::new(&unit_circle(64), &bathy).unwrap();
        for k in 1..=6 {
            let oracle = radial_symbol(k, coeffs, 1.0);
            worst = worst.max((disk.symbol(k) - oracle).abs() / oracle.abs());
        }
    }
    let ok = worst <= RADIAL_SYMBOL_TOL;
    report("3 radial depth symbol", ok, &format!("max rel diff vs ODE oracle {worst:.2e} (tol {RADIAL_SYMBOL_TOL:e}), k=1..6, 2 profiles"));
    assert!(ok);
}

#[test]
fn c04_lake_at_rest() {
    let mut c = ScenarioConfig::default();
    c.params = Params::unit();
    c.n_r = 128;
    c.n_s = 256;
    let sc = build_scenario(&c).unwrap();
    let mut st = sc.initial.clone();
    let dt = sc.solver.cfl_dt(&st.field);
    sc.solver.run_steps(&mut st, 1000, dt).unwrap();
    let zmax = st.field.u.iter().fold(0.0f64, |m, u| m.max(u[0].abs()));
    let vmax = st.field.u.iter().fold(0.0f64, |m, u| m.max(u[1].hypot(u[2])));
    let pmax = st.psi.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let ok = zmax <= REST_TOL && vmax <= REST_TOL && pmax <= REST_TOL;
    report("4 lake at rest", ok, &format!("after 1000 steps max|zeta| {zmax:.1e}, max|v| {vmax:.1e}, max|psi| {pmax:.1e}"));
    assert!(ok);
}

#[test]
fn c05_energy_conservation() {
    let t0 = Instant::now();
    // one crossing of the annulus at the rest wave speed
    let t_end = 7.0;
    let drifts: Vec<f64> = [64usize, 128, 256]
        .iter()
        .map(|&n| {
            let sc = build_scenario(&pulse_config(n, t_end)).unwrap();
            let p = sc.config.params;
            let e0 = total_energy(&sc.mesh, &sc.dtn, &sc.initial.field, &sc.initial.psi, &p).unwrap().total;
            let st = run_to(&sc, t_end);
            let e1 = total_energy(&sc.mesh, &sc.dtn, &st.field, &st.psi, &p).unwrap().total;
            ((e1 - e0) / e0).abs()
        })
        .collect();
    let order = observed_order(&drifts);
    let secs = t0.elapsed().as_secs_f64();
    let ok = drifts[2] <= ENERGY_DRIFT_TOL && order >= ENERGY_MIN_ORDER && secs < 300.0;
    report(
        "5 energy conservation",
        ok,
        &format!("relative drift {} at n=64,128,256; fine {:.3e} (tol {ENERGY_DRIFT_TOL:e}), order {order:.2} (min {ENERGY_MIN_ORDER}); {secs:.0}s", sci(&drifts), drifts[2]),
    );
    assert!(ok);
}

#[test]
fn c06_vorticity_preservation() {
    let t_end = 2.0;
    let mut all = Vec::new();
    let mut inner = Vec::new();
    for n in [64usize, 128, 256] {
        let sc = build_scenario(&pulse_config(n, t_end)).unwrap();
        let st = run_to(&sc, t_end);
        let w = sc.mesh.vorticity(&st.field.component(1), &st.field.component(2));
        all.push(w.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        inner.push(w.iter().enumerate().filter(|(k, _)| (2..n - 2).contains(&(k / n))).fold(0.0f64, |m, (_, x)| m.max(x.abs())));
    }
    let order = observed_order(&all);
    let ok = all.windows(2).all(|w| w[1] < w[0]) && order >= VORTICITY_MIN_ORDER;
    report(
        "6 vorticity preservation",
        ok,
        &format!(
            "max|omega| {} order {order:.2} (min {VORTICITY_MIN_ORDER}); away from the first and last two rings {} order {:.2}",
            sci(&all),
            sci(&inner),
            observed_order(&inner)
        ),
    );
    assert!(ok);
}

#[test]
fn c07_radial_oracle() {
    let (n, t_end) = (128usize, 2.5);
    let mut c = ScenarioConfig::default();
    c.params = Params::unit();
    c.n_r = n;
    c.n_s = 2 * n;
    c.initial = InitialKind::Ring;
    c.amplitude = 0.05;
    c.sigma = 0.5;
    c.ring_radius = 3.0;
    c.solver.limiter = Limiter::None;
    c.solver.outer = OuterBoundary::Wall;
    let sc = build_scenario(&c).unwrap();
    let st = run_to(&sc, t_end);
    let r_out = 1.0 + sc.mesh.r_out();
    let ring_zeta = |i: usize| (0..c.n_s).map(|j| st.field.u[i * c.n_s + j][0]).sum::<f64>() / c.n_s as f64;

    let ring = |r: f64| 0.05 * (-(r - 3.0f64).powi(2) / 0.25).exp();
    let mut coarse = Radial1d::new(1.0, r_out, n, 1.0, 1.0, ring);
    coarse.run(t_end);
    let refine = 16;
    let mut fine = Radial1d::new(1.0, r_out, n * refine, 1.0, 1.0, ring);
    fine.run(t_end);
    let reference = fine.coarsen(refine);
    let l1 = |f: &dyn Fn(usize) -> f64| (0..n).map(|i| f(i).abs() * coarse.annulus_area(i)).sum::<f64>();
    let err_1d = l1(&|i| coarse.zeta[i] - reference[i]);
    let diff = l1(&|i| ring_zeta(i) - coarse.zeta[i]);
    let ok = diff <= RADIAL_FACTOR * err_1d;
    report(
        "7 radial oracle equivalence",
        ok,
        &format!("L1(2D ring mean - 1D) {diff:.3e}, 1D discretization error {err_1d:.3e}, ratio {:.2} (max {RADIAL_FACTOR})", diff / err_1d),
    );
    assert!(ok);
}

#[test]
fn c08_compatibility_toolkit() {
    let t0 = Instant::now();
    let mut c = ScenarioConfig::default();
    c.params = Params::unit();
    c.n_r = 32;
    c.n_s = 128;
    c.initial = InitialKind::Stream;
    c.stream = [0.05, 0.0];
    c.amplitude = 0.02;
    c.pulse = [4.0, 0.0];
    let sc = build_scenario(&c).unwrap();
    let p = c.params;
    let jet = compat::build_jet(&sc.mesh, &sc.initial.field, &sc.initial.psi, 3, &p).unwrap();
    let tol = compat::default_compat_tol(&sc.mesh);
    let residuals: Vec<f64> = (0..=2).map(|j| compat::check_compatibility(&sc.mesh, &jet, &sc.dtn, j, &p).unwrap().l2).collect();

    let mut r = ScenarioConfig::default();
    r.params = p;
    r.n_r = 8;
    r.n_s = 256;
    let rest = build_scenario(&r).unwrap();
    let psi = TraceField::from_fn(256, 2.0 * PI, |s| s.cos());
    let jet = compat::build_jet(&rest.mesh, &ExteriorField::rest(8, 256), &psi, 1, &p).unwrap();
    let cos0 = compat::check_compatibility(&rest.mesh, &jet, &rest.dtn, 0, &p).unwrap().l2;
    let rel = (cos0 - PI.sqrt()).abs() / PI.sqrt();
    let secs = t0.elapsed().as_secs_f64();
    let ok = residuals.iter().all(|&x| x < tol) && rel <= COMPAT_COSINE_REL && secs < 20.0;
    report(
        "8 compatibility toolkit",
        ok,
        &format!("stream data residuals {} (tol {tol:.2e}); cosine order-0 residual {cos0:.6} vs sqrt(pi) rel {rel:.1e}; {secs:.1}s", sci(&residuals)),
    );
    assert!(ok);
}

#[test]
fn c09_boundary_system_solvability() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut misclassified, mut unsolvable) = (0.0f64, 0usize, 0usize);
    for i in 0..10_000 {
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let n = [th.cos(), th.sin()];
        let tv = tangential_vector(n);
        let mut f = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if i % 2 == 0 {
            f -= f.dot(&tv) * tv;
        }
        let (s0, f_tilde) = if i % 3 == 0 {
            let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            (Some(a * a.transpose() + Matrix3::identity()), Some(rng.gen_range(-1.0..1.0)))
        } else {
            (None, None)
        };
        let sol = compat::solve_gnor_system(&GnorSystem { n, f, s0, f_tilde });
        let expect = f.dot(&tv).abs() <= 1e-12;
        if sol.solvable != expect {
            misclassified += 1;
        }
        if sol.solvable {
            let defect = (swdtn::swe::g_matrix(n) * sol.w - f).amax();
            worst = worst.max(defect);
            if let (Some(s), Some(ft)) = (s0, f_tilde) {
                worst = worst.max(((s * tv).dot(&sol.w) - ft).abs());
            }
        } else {
            unsolvable += 1;
        }
    }
    let ok = worst <= GNOR_TOL && misclassified == 0;
    report(
        "9 boundary system solvability",
        ok,
        &format!("10^4 instances, {unsolvable} unsolvable, misclassified {misclassified}, max defect {worst:.1e} (tol {GNOR_TOL:e})"),
    );
    assert!(ok);
}

#[test]
fn c10_regularized_boundary_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let eps = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1];
    let (mut worst, mut split_ok) = (0.0f64, true);
    for _ in 0..50 {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let s = a * a.transpose() + 0.1 * Matrix3::identity();
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let rep = regularized_boundary_eigen(&s, [th.cos(), th.sin()], &eps).unwrap();
        split_ok &= rep.positive.iter().all(|&p| p == 1) && rep.negative.iter().all(|&n| n == 2);
        worst = worst.max((rep.fitted_slope - rep.lambda0).abs() / rep.lambda0.abs());
    }
    let ok = split_ok && worst <= SLOPE_REL;
    report(
        "10 regularized boundary matrix",
        ok,
        &format!("50 SPD matrices, sign split (1+, 2-) {}, max rel slope error {worst:.2e} (tol {SLOPE_REL})", if split_ok { "held" } else { "broken" }),
    );
    assert!(ok);
}

#[test]
fn c11_eps_convergence() {
    let t0 = Instant::now();
    let t_end = 1.0;
    let base = |eps: f64| {
        let mut c = ScenarioConfig::default();
        c.params = Params::unit();
        c.n_r = 64;
        c.n_s = 128;
        c.initial = InitialKind::Stream;
        c.stream = [0.05, 0.0];
        c.amplitude = 0.02;
        c.sigma = 0.5;
        c.pulse = [3.0, 0.0];
        c.solver.limiter = Limiter::None;
        c.solver.eps = eps;
        c
    };
    let sc0 = build_scenario(&base(0.0)).unwrap();
    let ref_state = run_to(&sc0, t_end);
    let eps = [0.04, 0.02, 0.01];
    let dist: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let sc = build_scenario(&base(e)).unwrap();
            state_distance(&sc0, &run_to(&sc, t_end), &ref_state)
        })
        .collect();
    let slope = observed_order(&dist);
    let secs = t0.elapsed().as_secs_f64();
    let ok = slope >= EPS_MIN_SLOPE && secs < 600.0;
    report(
        "11 eps convergence",
        ok,
        &format!("L2 distance to eps=0 run {} at eps={eps:?}, slope {slope:.2} (min {EPS_MIN_SLOPE}); {secs:.0}s", sci(&dist)),
    );
    assert!(ok);
}

#[test]
fn c12_lipschitz_in_data() {
    let delta = 1e-4;
    let mut c = pulse_config(128, 7.0);
    c.n_s = 256;
    let sc = build_scenario(&c).unwrap();
    let mut other = sc.initial.clone();
    // a smooth perturbation of the surface, scaled to L2 size delta
    let bump: Vec<f64> = sc.mesh.centroids().iter().map(|x| (-((x[0] + 2.0).powi(2) + (x[1] - 1.5).powi(2))).exp()).collect();
    let norm = bump.iter().zip(sc.mesh.areas()).map(|(b, a)| a * b * b).sum::<f64>().sqrt();
    for (u, b) in other.field.u.iter_mut().zip(&bump) {
        u[0] += delta * b / norm;
    }
    let d0 = state_distance(&sc, &sc.initial, &other);
    let (mut a, mut b) = (sc.initial.clone(), other);
    let mut worst = d0;
    let dt_out = 0.25;
    let mut t: f64 = 0.0;
    while t < 7.0 - 1e-12 {
        t = (t + dt_out).min(7.0);
        sc.solver.run(&mut a, t, |_| Ok(())).unwrap();
        sc.solver.run(&mut b, t, |_| Ok(())).unwrap();
        worst = worst.max(state_distance(&sc, &a, &b));
    }
    let ok = worst <= LIPSCHITZ_FACTOR * delta;
    report(
        "12 stability in the data",
        ok,
        &format!("initial distance {d0:.3e}, max distance over one crossing {worst:.3e} = {:.2} delta (max {LIPSCHITZ_FACTOR})", worst / delta),
    );
    assert!(ok);
}
