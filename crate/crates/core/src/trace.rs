//! Periodic functions on the contact curve: Fourier transforms, tangential
//! derivatives, fractional Sobolev norms and the smoothing multiplier
//! `J_eps = (1 + eps |D|)^-1`.
//!
//! Fourier coefficients are normalized as `g_hat_n = FFT(g)_n / n_s`, and the
//! wavenumber of mode `n` is `2 pi n / L`. The Nyquist mode is kept by norms and
//! multipliers but dropped by odd-order derivatives so that they stay real.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized FFT (`inverse = false`) or its adjoint.
pub fn fft_forward_inverse(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse { p.plan_fft_inverse(buf.len()) } else { p.plan_fft_forward(buf.len()) };
        fft.process(buf);
    });
}

/// Signed integer frequency of FFT index `m` for length `n`.
#[inline]
pub fn signed_mode(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Apply a real Fourier multiplier `mult(signed mode)` to a real periodic
/// sequence.
pub fn apply_multiplier(values: &[f64], mult: impl Fn(i64) -> f64) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward_inverse(&mut buf, false);
    for (m, c) in buf.iter_mut().enumerate() {
        *c *= mult(signed_mode(m, n));
    }
    fft_forward_inverse(&mut buf, true);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Spectral derivative of order `order` of samples on a period of length `length`.
pub fn spectral_derivative(values: &[f64], length: f64, order: u32) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward_inverse(&mut buf, false);
    for (m, c) in buf.iter_mut().enumerate() {
        let k = signed_mode(m, n);
        if order % 2 == 1 && n % 2 == 0 && m == n / 2 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let ik = Complex64::new(0.0, 2.0 * PI * k as f64 / length);
        *c *= ik.powu(order);
    }
    fft_forward_inverse(&mut buf, true);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Real scalar samples at the equally spaced arc-length nodes of the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceField {
    pub values: Vec<f64>,
    pub length: f64,
}

/// Fourier coefficients of a trace, in FFT index order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpectrum {
    pub coeffs: Vec<Complex64>,
    pub length: f64,
}

impl TraceField {
    pub fn new(values: Vec<f64>, length: f64) -> Self {
        Self { values, length }
    }

    pub fn zeros(n: usize, length: f64) -> Self {
        Self { values: vec![0.0; n], length }
    }

    pub fn from_fn(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Self {
        let ds = length / n as f64;
        Self { values: (0..n).map(|j| f(j as f64 * ds)).collect(), length }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ds(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn spectrum(&self) -> TraceSpectrum {
        let n = self.values.len();
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_forward_inverse(&mut buf, false);
        for c in buf.iter_mut() {
            *c /= n as f64;
        }
        TraceSpectrum { coeffs: buf, length: self.length }
    }

    /// Tangential derivative `d/ds`.
    pub fn d_tan(&self) -> TraceField {
        Self { values: spectral_derivative(&self.values, self.length, 1), length: self.length }
    }

    /// `J_eps g = F^-1 [(1 + eps |2 pi n / L|)^-1 g_hat]`; the identity at `eps = 0`.
    pub fn smooth_jeps(&self, eps: f64) -> TraceField {
        if eps == 0.0 {
            return self.clone();
        }
        let l = self.length;
        let values = apply_multiplier(&self.values, |k| 1.0 / (1.0 + eps * (2.0 * PI * k as f64 / l).abs()));
        Self { values, length: self.length }
    }

    /// `H^s` norm `(L sum (1 + (2 pi n/L)^2)^s |g_hat_n|^2)^(1/2)`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let n = self.values.len();
        let spec = self.spectrum();
        let sum: f64 = spec
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let k = 2.0 * PI * signed_mode(m, n) as f64 / self.length;
                (1.0 + k * k).powf(s) * c.norm_sqr()
            })
            .sum();
        (self.length * sum).sqrt()
    }

    /// Trapezoidal `L^2` inner product on the curve.
    pub fn inner(&self, other: &TraceField) -> Result<f64> {
        if other.values.len() != self.values.len() {
            return Err(Error::SizeMismatch { expected: self.values.len(), got: other.values.len() });
        }
        Ok(self.ds() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn l2_norm(&self) -> f64 {
        (self.ds() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

impl TraceSpectrum {
    pub fn to_trace(&self) -> TraceField {
        let n = self.coeffs.len();
        let mut buf: Vec<Complex64> = self.coeffs.iter().map(|c| c * n as f64).collect();
        fft_forward_inverse(&mut buf, true);
        TraceField { values: buf.iter().map(|c| c.re / n as f64).collect(), length: self.length }
    }
}
