//! Contact curve parametrization and the tubular chart around it.
//!
//! Curves are given by a raw periodic parameter `t` in `[0, 2pi)` and are
//! resampled at `n_s` nodes equally spaced in arc length. Arc length is
//! obtained by adaptive Gauss-Kronrod quadrature of the speed `|gamma'(t)|`,
//! inverted with a monotone cubic and polished by Newton steps.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::trace::fft_forward_inverse;

const TWO_PI: f64 = 2.0 * PI;

/// Parametric description of the contact curve, oriented counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSpec {
    Circle { radius: f64, center: [f64; 2] },
    Ellipse { a: f64, b: f64, center: [f64; 2] },
    Tabulated(TabulatedCurve),
}

/// Closed polyline smoothed by a periodic cubic spline in the point index.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCurve {
    points: Vec<[f64; 2]>,
    m2x: Vec<f64>,
    m2y: Vec<f64>,
}

impl TabulatedCurve {
    pub fn new(points: &[[f64; 2]]) -> Result<Self> {
        let mut pts = points.to_vec();
        if pts.len() < 4 {
            return Err(Error::InvalidCurve("need at least 4 tabulated points".into()));
        }
        if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidCurve("non-finite tabulated point".into()));
        }
        let mut spacing: Vec<f64> = pts.windows(2).map(|w| dist(w[0], w[1])).collect();
        spacing.sort_by(f64::total_cmp);
        let median = spacing[spacing.len() / 2];
        let gap = dist(pts[0], *pts.last().unwrap());
        if gap <= 1e-12 * median.max(1e-300) {
            pts.pop();
        } else if gap > 3.0 * median {
            return Err(Error::NotClosed { gap, spacing: median });
        }
        if pts.len() < 4 {
            return Err(Error::InvalidCurve("need at least 4 distinct points".into()));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        Ok(Self { m2x: periodic_spline_moments(&xs), m2y: periodic_spline_moments(&ys), points: pts })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn eval(&self, t: f64, deriv: usize) -> [f64; 2] {
        let m = self.points.len();
        let h = TWO_PI / m as f64;
        let tt = t.rem_euclid(TWO_PI);
        let k = ((tt / h).floor() as usize).min(m - 1);
        let k1 = (k + 1) % m;
        let a = (k as f64 + 1.0) * h - tt;
        let b = tt - k as f64 * h;
        let one = |y0: f64, y1: f64, m0: f64, m1: f64| match deriv {
            0 => {
                m0 * a.powi(3) / (6.0 * h)
                    + m1 * b.powi(3) / (6.0 * h)
                    + (y0 - m0 * h * h / 6.0) * a / h
                    + (y1 - m1 * h * h / 6.0) * b / h
            }
            1 => {
                -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - (y0 - m0 * h * h / 6.0) / h
                    + (y1 - m1 * h * h / 6.0) / h
            }
            _ => m0 * a / h + m1 * b / h,
        };
        let (p0, p1) = (self.points[k], self.points[k1]);
        [
            one(p0[0], p1[0], self.m2x[k], self.m2x[k1]),
            one(p0[1], p1[1], self.m2y[k], self.m2y[k1]),
        ]
    }
}

/// Second-derivative moments of the periodic interpolating cubic spline on a
/// uniform grid of spacing `2pi/m`. The cyclic system is circulant, so it is
/// diagonalized by the FFT.
fn periodic_spline_moments(y: &[f64]) -> Vec<f64> {
    let m = y.len();
    let h = TWO_PI / m as f64;
    let mut rhs: Vec<Complex64> = (0..m)
        .map(|k| {
            let v = 6.0 * (y[(k + 1) % m] - 2.0 * y[k] + y[(k + m - 1) % m]) / (h * h);
            Complex64::new(v, 0.0)
        })
        .collect();
    fft_forward_inverse(&mut rhs, false);
    for (n, c) in rhs.iter_mut().enumerate() {
        *c /= 4.0 + 2.0 * (TWO_PI * n as f64 / m as f64).cos();
    }
    fft_forward_inverse(&mut rhs, true);
    rhs.iter().map(|c| c.re / m as f64).collect()
}

impl CurveSpec {
    /// Position and derivatives with respect to the raw parameter.
    pub fn raw(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        match self {
            CurveSpec::Circle { radius, center } => {
                let (s, c) = t.sin_cos();
                (
                    [center[0] + radius * c, center[1] + radius * s],
                    [-radius * s, radius * c],
                    [-radius * c, -radius * s],
                )
            }
            CurveSpec::Ellipse { a, b, center } => {
                let (s, c) = t.sin_cos();
                ([center[0] + a * c, center[1] + b * s], [-a * s, b * c], [-a * c, -b * s])
            }
            CurveSpec::Tabulated(tab) => (tab.eval(t, 0), tab.eval(t, 1), tab.eval(t, 2)),
        }
    }

    fn speed(&self, t: f64) -> f64 {
        let (_, d, _) = self.raw(t);
        d[0].hypot(d[1])
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        match self {
            CurveSpec::Circle { radius, center } => {
                if !ok(*radius) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidCurve(format!("bad circle radius {radius}")));
                }
            }
            CurveSpec::Ellipse { a, b, center } => {
                if !ok(*a) || !ok(*b) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidCurve(format!("bad ellipse axes {a}, {b}")));
                }
            }
            CurveSpec::Tabulated(_) => {}
        }
        Ok(())
    }

    /// Smallest enclosing radius estimate used to size the exterior domain.
    pub fn equivalent_radius(&self) -> f64 {
        match self {
            CurveSpec::Circle { radius, .. } => *radius,
            CurveSpec::Ellipse { a, b, .. } => (a * b).sqrt(),
            CurveSpec::Tabulated(tab) => {
                let area = shoelace(tab.points()).abs();
                (area / PI).sqrt()
            }
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn shoelace(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    0.5 * (0..n)
        .map(|k| {
            let (a, b) = (p[k], p[(k + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

// 15-point Kronrod nodes on [0, 1] of the symmetric rule, with the embedded
// 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adaptive_gk(f, a, m, 0.5 * tol, depth - 1) + adaptive_gk(f, m, b, 0.5 * tol, depth - 1)
}

/// Frame of the curve at one arc-length position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: [f64; 2],
    /// Unit tangent `gamma'(s)`.
    pub tangent: [f64; 2],
    /// Outward unit normal, `n = -gamma'^perp`.
    pub normal: [f64; 2],
    pub kappa: f64,
}

/// Arc-length resampled contact curve with precomputed nodal frames.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    spec: CurveSpec,
    length: f64,
    t_nodes: Vec<f64>,
    points: Vec<CurvePoint>,
    // Breakpoints of the cumulative arc length S(t) and the monotone cubic
    // slopes of its inverse.
    brk_t: Vec<f64>,
    brk_s: Vec<f64>,
    brk_slope: Vec<f64>,
}

impl BoundaryCurve {
    pub fn new(spec: CurveSpec, n_s: usize) -> Result<Self> {
        if n_s < 8 || !n_s.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n_s));
        }
        spec.validate()?;
        let nb = (4 * n_s).max(256);
        let speed = |t: f64| spec.speed(t);
        let brk_t: Vec<f64> = (0..=nb).map(|b| TWO_PI * b as f64 / nb as f64).collect();
        let mut brk_s = vec![0.0; nb + 1];
        for b in 0..nb {
            let piece = adaptive_gk(&speed, brk_t[b], brk_t[b + 1], 1e-15, 30);
            brk_s[b + 1] = brk_s[b] + piece;
        }
        let length = brk_s[nb];
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidCurve("degenerate curve length".into()));
        }
        if (1..=nb).any(|b| brk_s[b] <= brk_s[b - 1]) {
            return Err(Error::InvalidCurve("curve has a stationary point".into()));
        }
        let brk_slope = pchip_slopes(&brk_s, &brk_t);
        let mut curve = Self {
            spec,
            length,
            t_nodes: Vec::new(),
            points: Vec::new(),
            brk_t,
            brk_s,
            brk_slope,
        };
        let ds = length / n_s as f64;
        curve.t_nodes = (0..n_s).map(|j| curve.param_of(j as f64 * ds)).collect();
        curve.points = curve.t_nodes.iter().map(|&t| curve.frame_raw(t)).collect();
        curve.nodal_curvature();
        curve.check_simple()?;
        Ok(curve)
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    pub fn n_s(&self) -> usize {
        self.points.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn ds(&self) -> f64 {
        self.length / self.n_s() as f64
    }

    pub fn nodes(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn node(&self, j: usize) -> &CurvePoint {
        &self.points[j % self.points.len()]
    }

    pub fn s_grid(&self) -> Vec<f64> {
        (0..self.n_s()).map(|j| j as f64 * self.ds()).collect()
    }

    pub fn max_abs_kappa(&self) -> f64 {
        self.points.iter().map(|p| p.kappa.abs()).fold(0.0, f64::max)
    }

    pub fn signed_area(&self) -> f64 {
        let xs: Vec<[f64; 2]> = self.points.iter().map(|p| p.x).collect();
        shoelace(&xs)
    }

    /// Frame at an arbitrary arc-length position (periodic in `s`).
    pub fn eval(&self, s: f64) -> CurvePoint {
        self.frame_raw(self.param_of(s))
    }

    fn arc_between(&self, t0: f64, t1: f64) -> f64 {
        let speed = |t: f64| self.spec.speed(t);
        adaptive_gk(&speed, t0, t1, 1e-15, 20)
    }

    /// Raw parameter of the point at arc length `s`.
    fn param_of(&self, s: f64) -> f64 {
        let turns = (s / self.length).floor();
        let sw = s - turns * self.length;
        let nb = self.brk_t.len() - 1;
        let b = match self.brk_s.binary_search_by(|v| v.total_cmp(&sw)) {
            Ok(i) => i.min(nb - 1),
            Err(i) => i.saturating_sub(1).min(nb - 1),
        };
        let mut t = hermite(
            self.brk_s[b],
            self.brk_s[b + 1],
            self.brk_t[b],
            self.brk_t[b + 1],
            self.brk_slope[b],
            self.brk_slope[b + 1],
            sw,
        );
        for _ in 0..4 {
            let resid = self.brk_s[b] + self.arc_between(self.brk_t[b], t) - sw;
            let dt = resid / self.spec.speed(t);
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        t + turns * TWO_PI
    }

    fn frame_raw(&self, t: f64) -> CurvePoint {
        let (x, d1, d2) = self.spec.raw(t);
        let sp = d1[0].hypot(d1[1]);
        let tangent = [d1[0] / sp, d1[1] / sp];
        CurvePoint {
            x,
            tangent,
            normal: [tangent[1], -tangent[0]],
            kappa: (d1[0] * d2[1] - d1[1] * d2[0]) / sp.powi(3),
        }
    }

    /// Replace the analytic nodal curvature by `-gamma'' . n` computed from the
    /// node positions: spectrally for analytic curves, by second differences
    /// for tabulated ones.
    fn nodal_curvature(&mut self) {
        let n = self.n_s();
        let ds = self.ds();
        let second: Vec<[f64; 2]> = match self.spec {
            CurveSpec::Tabulated(_) => (0..n)
                .map(|j| {
                    let (a, b, c) = (self.node(j + n - 1).x, self.points[j].x, self.node(j + 1).x);
                    [(a[0] - 2.0 * b[0] + c[0]) / (ds * ds), (a[1] - 2.0 * b[1] + c[1]) / (ds * ds)]
                })
                .collect(),
            _ => {
                let xs: Vec<f64> = self.points.iter().map(|p| p.x[0]).collect();
                let ys: Vec<f64> = self.points.iter().map(|p| p.x[1]).collect();
                let ddx = crate::trace::spectral_derivative(&xs, self.length, 2);
                let ddy = crate::trace::spectral_derivative(&ys, self.length, 2);
                ddx.into_iter().zip(ddy).map(|(a, b)| [a, b]).collect()
            }
        };
        for (p, g2) in self.points.iter_mut().zip(second) {
            p.kappa = -(g2[0] * p.normal[0] + g2[1] * p.normal[1]);
        }
    }

    fn check_simple(&self) -> Result<()> {
        let area = self.signed_area();
        if area <= 0.0 {
            return Err(Error::InvalidCurve(format!(
                "curve must be counterclockwise with positive area (got {area:.3e})"
            )));
        }
        let p: Vec<[f64; 2]> = self.points.iter().map(|q| q.x).collect();
        let n = p.len();
        for a in 0..n {
            for b in (a + 2)..n {
                if a == 0 && b == n - 1 {
                    continue;
                }
                if segments_cross(p[a], p[(a + 1) % n], p[b], p[(b + 1) % n]) {
                    return Err(Error::SelfIntersection(a, b));
                }
            }
        }
        Ok(())
    }
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Fritsch-Carlson slopes for a monotone cubic through `(x_k, y_k)`.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let h0 = x[k] - x[k - 1];
            let h1 = x[k + 1] - x[k];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let u = (x - x0) / h;
    let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
    let h10 = u * (1.0 - u) * (1.0 - u);
    let h01 = u * u * (3.0 - 2.0 * u);
    let h11 = u * u * (u - 1.0);
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Row-major scalar field on an `n_r x n_s` grid (ring index first).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    pub n_r: usize,
    pub n_s: usize,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(n_r: usize, n_s: usize) -> Self {
        Self { n_r, n_s, data: vec![0.0; n_r * n_s] }
    }

    pub fn from_fn(n_r: usize, n_s: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_r * n_s);
        for i in 0..n_r {
            for j in 0..n_s {
                data.push(f(i, j));
            }
        }
        Self { n_r, n_s, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_s + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_s + j] = v;
    }
}

/// Tubular coordinates `theta(r, s) = gamma(s) + r n(s)` on `|r| < r0`.
#[derive(Debug, Clone)]
pub struct TubularChart {
    curve: BoundaryCurve,
    r0: f64,
    r_grid: Vec<f64>,
    chi: Vec<f64>,
    jacobian: Field2,
}

impl TubularChart {
    /// Chart with the default half-width `0.5 / max|kappa|` and `2 n_half + 1`
    /// symmetric rings (the middle one is the curve itself).
    pub fn new(curve: BoundaryCurve, n_half: usize) -> Result<Self> {
        let kmax = curve.max_abs_kappa();
        let r0 = if kmax > 0.0 { 0.5 / kmax } else { curve.length() };
        Self::with_width(curve, r0, n_half)
    }

    pub fn with_width(curve: BoundaryCurve, r0: f64, n_half: usize) -> Result<Self> {
        let kmax = curve.max_abs_kappa();
        if !(r0 > 0.0) || r0 * kmax >= 1.0 {
            return Err(Error::InvalidCurve(format!(
                "chart width {r0:.3e} not below the focal distance 1/{kmax:.3e}"
            )));
        }
        if n_half == 0 {
            return Err(Error::GridMismatch("chart needs at least one ring per side".into()));
        }
        // Keep the outermost ring strictly inside the chart.
        let dr = 0.9 * r0 / n_half as f64;
        let r_grid: Vec<f64> = (0..=2 * n_half).map(|i| (i as f64 - n_half as f64) * dr).collect();
        let chi = r_grid.iter().map(|&r| cutoff(r, r0)).collect();
        let jacobian = Field2::from_fn(r_grid.len(), curve.n_s(), |i, j| {
            1.0 + r_grid[i] * curve.node(j).kappa
        });
        Ok(Self { curve, r0, r_grid, chi, jacobian })
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r_grid
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn jacobian(&self) -> &Field2 {
        &self.jacobian
    }

    pub fn point(&self, r: f64, s: f64) -> Result<[f64; 2]> {
        if !(r.abs() < self.r0) {
            return Err(Error::OutOfChart { r, r0: self.r0 });
        }
        let p = self.curve.eval(s);
        Ok([p.x[0] + r * p.normal[0], p.x[1] + r * p.normal[1]])
    }

    pub fn jacobian_at(&self, r: f64, s: f64) -> Result<f64> {
        if !(r.abs() < self.r0) {
            return Err(Error::OutOfChart { r, r0: self.r0 });
        }
        Ok(1.0 + r * self.curve.eval(s).kappa)
    }

    /// Inverse chart by Gauss-Newton, started from the nearest node.
    pub fn inverse(&self, x: [f64; 2]) -> Result<(f64, f64)> {
        let (j0, _) = self
            .curve
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, p)| (j, dist(p.x, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("curve has nodes");
        let mut s = j0 as f64 * self.curve.ds();
        let p = self.curve.node(j0);
        let mut r = (x[0] - p.x[0]) * p.normal[0] + (x[1] - p.x[1]) * p.normal[1];
        for _ in 0..50 {
            let p = self.curve.eval(s);
            let d = [x[0] - p.x[0] - r * p.normal[0], x[1] - p.x[1] - r * p.normal[1]];
            let dr = d[0] * p.normal[0] + d[1] * p.normal[1];
            let ds = (d[0] * p.tangent[0] + d[1] * p.tangent[1]) / (1.0 + r * p.kappa);
            r += dr;
            s += ds;
            if dr.abs() + ds.abs() < 1e-14 * (1.0 + r.abs() + s.abs()) {
                break;
            }
        }
        if !(r.abs() < self.r0) {
            return Err(Error::OutOfChart { r, r0: self.r0 });
        }
        Ok((r, s.rem_euclid(self.curve.length())))
    }

    /// Divergence of a vector field given by its components along `N` and
    /// `gamma'` on the chart grid, using `div f = J^-1 (d_r(J f_n) + d_s f_t)`.
    pub fn divergence(&self, f_nor: &Field2, f_tan: &Field2) -> Result<Field2> {
        let (nr, ns) = (self.r_grid.len(), self.curve.n_s());
        for f in [f_nor, f_tan] {
            if f.n_r != nr || f.n_s != ns {
                return Err(Error::GridMismatch(format!(
                    "field is {}x{}, chart is {nr}x{ns}",
                    f.n_r, f.n_s
                )));
            }
        }
        let dr = self.r_grid[1] - self.r_grid[0];
        let ds = self.curve.ds();
        let jf = Field2::from_fn(nr, ns, |i, j| self.jacobian.get(i, j) * f_nor.get(i, j));
        Ok(Field2::from_fn(nr, ns, |i, j| {
            let d_r = if i == 0 {
                (-3.0 * jf.get(0, j) + 4.0 * jf.get(1, j) - jf.get(2, j)) / (2.0 * dr)
            } else if i == nr - 1 {
                (3.0 * jf.get(i, j) - 4.0 * jf.get(i - 1, j) + jf.get(i - 2, j)) / (2.0 * dr)
            } else {
                (jf.get(i + 1, j) - jf.get(i - 1, j)) / (2.0 * dr)
            };
            let d_s = (f_tan.get(i, (j + 1) % ns) - f_tan.get(i, (j + ns - 1) % ns)) / (2.0 * ds);
            (d_r + d_s) / self.jacobian.get(i, j)
        }))
    }
}

/// Smooth monotone cutoff: 1 on `|r| <= r0/2`, 0 on `|r| >= r0`.
pub fn cutoff(r: f64, r0: f64) -> f64 {
    let bump = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = 0.5 * r0;
    let x = r.abs();
    if x <= a {
        1.0
    } else if x >= r0 {
        0.0
    } else {
        let (p, q) = (bump((r0 - x) / a), bump((x - a) / a));
        p / (p + q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize) -> BoundaryCurve {
        BoundaryCurve::new(CurveSpec::Circle { radius: 1.0, center: [0.0, 0.0] }, n).unwrap()
    }

    #[test]
    fn circle_nodes_are_exact() {
        let c = circle(64);
        assert!((c.length() - TWO_PI).abs() < 1e-13);
        for (j, p) in c.nodes().iter().enumerate() {
            let th = j as f64 * TWO_PI / 64.0;
            assert!((p.x[0] - th.cos()).abs() < 1e-13);
            assert!((p.x[1] - th.sin()).abs() < 1e-13);
            assert!((p.normal[0] - th.cos()).abs() < 1e-13);
            assert!((p.kappa - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ellipse_perimeter_and_spacing() {
        let spec = CurveSpec::Ellipse { a: 2.0, b: 1.0, center: [0.5, -0.25] };
        let c = BoundaryCurve::new(spec, 128).unwrap();
        // Ramanujan's second approximation is accurate to ~1e-5 relative here.
        let (a, b) = (2.0f64, 1.0f64);
        let h = ((a - b) / (a + b)).powi(2);
        let ram = PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()));
        assert!((c.length() - ram).abs() / ram < 1e-5);
        // Nodes are equally spaced in arc length: chord lengths of neighbouring
        // pairs agree with the chord of a short arc to high order.
        for j in 0..128 {
            let s0 = j as f64 * c.ds();
            let direct = c.eval(s0 + 0.5 * c.ds()).x;
            let p = c.node(j).x;
            let q = c.node(j + 1).x;
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            assert!(dist(direct, mid) < c.ds() * c.ds());
        }
    }

    #[test]
    fn ellipse_curvature_matches_closed_form() {
        let c = BoundaryCurve::new(CurveSpec::Ellipse { a: 1.5, b: 1.0, center: [0.0; 2] }, 256)
            .unwrap();
        for p in c.nodes() {
            let (x, y) = (p.x[0], p.x[1]);
            // kappa = ab / (b^2 x^2/a^2 + a^2 y^2/b^2)^{3/2} for x^2/a^2 + y^2/b^2 = 1
            let (a, b) = (1.5f64, 1.0f64);
            let k = a * b / (b * b * x * x / (a * a) + a * a * y * y / (b * b)).powf(1.5);
            assert!((p.kappa - k).abs() < 1e-9, "{} vs {}", p.kappa, k);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            BoundaryCurve::new(CurveSpec::Circle { radius: 1.0, center: [0.0; 2] }, 100),
            Err(Error::NotPowerOfTwo(100))
        ));
        let bowtie: Vec<[f64; 2]> = (0..64)
            .map(|k| {
                let t = TWO_PI * k as f64 / 64.0;
                [t.sin(), (2.0 * t).sin() * 0.5]
            })
            .collect();
        let tab = TabulatedCurve::new(&bowtie).unwrap();
        assert!(BoundaryCurve::new(CurveSpec::Tabulated(tab), 64).is_err());
        let open: Vec<[f64; 2]> = (0..40)
            .map(|k| {
                let t = PI * k as f64 / 40.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert!(matches!(TabulatedCurve::new(&open), Err(Error::NotClosed { .. })));
        let cw: Vec<[f64; 2]> = (0..64)
            .map(|k| {
                let t = -TWO_PI * k as f64 / 64.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let tab = TabulatedCurve::new(&cw).unwrap();
        assert!(matches!(
            BoundaryCurve::new(CurveSpec::Tabulated(tab), 64),
            Err(Error::InvalidCurve(_))
        ));
    }

    #[test]
    fn tabulated_circle_converges() {
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|k| {
                let t = TWO_PI * k as f64 / 200.0;
                [2.0 * t.cos(), 2.0 * t.sin()]
            })
            .collect();
        let c = BoundaryCurve::new(CurveSpec::Tabulated(TabulatedCurve::new(&pts).unwrap()), 128)
            .unwrap();
        assert!((c.length() - 4.0 * PI).abs() < 1e-6);
        for p in c.nodes() {
            assert!((p.kappa - 0.5).abs() < 5e-4, "{}", p.kappa);
        }
    }

    #[test]
    fn chart_roundtrip_and_jacobian() {
        let c = BoundaryCurve::new(CurveSpec::Ellipse { a: 1.3, b: 0.8, center: [0.0; 2] }, 64)
            .unwrap();
        let chart = TubularChart::new(c, 4).unwrap();
        let r0 = chart.r0();
        for &(r, s) in &[(0.0, 0.3), (0.4 * r0, 2.0), (-0.7 * r0, 5.1)] {
            let x = chart.point(r, s).unwrap();
            let (rr, ss) = chart.inverse(x).unwrap();
            assert!((rr - r).abs() < 1e-11);
            assert!((ss - s).abs() < 1e-10);
            // J = |d theta/dr x d theta/ds| by finite differences
            let h = 1e-6;
            let a = chart.point(r, s + h).unwrap();
            let b = chart.point(r, s - h).unwrap();
            let tan = [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)];
            let j = chart.jacobian_at(r, s).unwrap();
            assert!((tan[0].hypot(tan[1]) - j).abs() < 1e-7);
        }
        assert!(matches!(chart.point(1.1 * r0, 0.0), Err(Error::OutOfChart { .. })));
    }

    #[test]
    fn divergence_of_linear_field() {
        let c = BoundaryCurve::new(CurveSpec::Circle { radius: 1.0, center: [0.0; 2] }, 128).unwrap();
        let chart = TubularChart::new(c, 8).unwrap();
        let (nr, ns) = (chart.r_grid().len(), 128);
        // f = x: div = 2
        let comp = |i: usize, j: usize, nor: bool| {
            let r = chart.r_grid()[i];
            let p = chart.curve().node(j);
            let x = [p.x[0] + r * p.normal[0], p.x[1] + r * p.normal[1]];
            let e = if nor { p.normal } else { p.tangent };
            x[0] * e[0] + x[1] * e[1]
        };
        let fnor = Field2::from_fn(nr, ns, |i, j| comp(i, j, true));
        let ftan = Field2::from_fn(nr, ns, |i, j| comp(i, j, false));
        let div = chart.divergence(&fnor, &ftan).unwrap();
        for v in &div.data {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff(0.1, 1.0), 1.0);
        assert_eq!(cutoff(-0.5, 1.0), 1.0);
        assert_eq!(cutoff(1.0, 1.0), 0.0);
        let mut prev = 1.0;
        for k in 0..100 {
            let v = cutoff(0.5 + 0.005 * k as f64, 1.0);
            assert!(v <= prev);
            prev = v;
        }
    }
}
