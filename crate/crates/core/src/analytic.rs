//! Closed-form gate dynamics.
//!
//! Under the sideband Hamiltonian the propagator factorizes into a
//! spin-dependent displacement `(F, G)` of the motional mode and a geometric
//! phase `A` on `J_y^2`. Everything the gate does to the two qubits after
//! tracing out a thermal mode follows from `(F, G, A)` and `nbar`.
//!
//! Times are in units of the gate time `T`; trap-frequency errors shift every
//! tone detuning by the same amount, `xi_i = n_i xi0 - dnu`.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::design::GateDesign;
use crate::error::{Error, Result};
use crate::special::{cardioid_hyp2f1, ln_factorial, ln_gamma};

/// Below this `|xi| T` a detuning is treated through its analytic limit.
pub const DEGENERATE_DETUNING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSetting {
    /// Relative gate-time error `dT / T`.
    pub dt_rel: f64,
    /// Trap-frequency error relative to the base detuning, `dnu / xi0`.
    pub dnu_rel: f64,
    /// Mean thermal phonon number of the initial motional state.
    pub nbar: f64,
}

impl ErrorSetting {
    pub fn new(dt_rel: f64, dnu_rel: f64, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) {
            return Err(Error::OutOfRange(format!("nbar = {nbar} must be >= 0")));
        }
        Ok(ErrorSetting { dt_rel, dnu_rel, nbar })
    }

    pub fn thermal(nbar: f64) -> Self {
        ErrorSetting {
            nbar,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub f: f64,
    pub g: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationQuad {
    pub p_ss: f64,
    pub p_sd: f64,
    pub p_ds: f64,
    pub p_dd: f64,
    pub fidelity: f64,
    pub purity: f64,
}

impl PopulationQuad {
    pub fn total(&self) -> f64 {
        self.p_ss + self.p_sd + self.p_ds + self.p_dd
    }

    /// Largest absolute population difference to `other`.
    pub fn max_population_diff(&self, other: &PopulationQuad) -> f64 {
        [
            self.p_ss - other.p_ss,
            self.p_sd - other.p_sd,
            self.p_ds - other.p_ds,
            self.p_dd - other.p_dd,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Per-tone detunings `n_i xi0 - dnu` in units of `1 / T`.
pub fn detunings(design: &GateDesign, dnu_rel: f64) -> Vec<f64> {
    let xi0 = design.detuning();
    design
        .tones()
        .as_slice()
        .iter()
        .map(|&n| (n as f64 - dnu_rel) * xi0)
        .collect()
}

/// `sin(u t) / u`, continuous through `u = 0`.
fn sin_over(u: f64, t: f64) -> f64 {
    let x = u * t;
    if x.abs() < DEGENERATE_DETUNING {
        t * (1.0 - x * x / 6.0)
    } else {
        (u * t).sin() / u
    }
}

/// `(1 - cos(u t)) / u`, continuous through `u = 0`.
fn one_minus_cos_over(u: f64, t: f64) -> f64 {
    let x = u * t;
    if (u.abs()) < DEGENERATE_DETUNING {
        0.5 * u * t * t * (1.0 - x * x / 12.0)
    } else {
        let s = (0.5 * x).sin();
        2.0 * s * s / u
    }
}

/// `int_0^t tau^p sin(b tau) d tau` for odd `p` by its power series in `b t`.
fn tau_power_sin_series(p: i32, b: f64, t: f64) -> f64 {
    let x = b * t;
    let mut coeff = x; // (-1)^m x^(2m+1) / (2m+1)!
    let mut sum = 0.0;
    for m in 0..60 {
        let term = coeff / (2 * m + p + 2) as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        coeff *= -x * x / ((2 * m + 2) as f64 * (2 * m + 3) as f64);
    }
    sum * t.powi(p + 1)
}

/// `int_0^t tau sin(b tau) d tau`.
fn tau_sin_integral(b: f64, t: f64) -> f64 {
    let x = b * t;
    if x.abs() < 1e-2 {
        let x2 = x * x;
        t * t * x * (1.0 / 3.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 840.0 - x2 / 45_360.0)))
    } else {
        (x.sin() - x * x.cos()) / (b * b)
    }
}

/// `int_0^t tau^3 sin(b tau) d tau`.
fn tau3_sin_integral(b: f64, t: f64) -> f64 {
    let x = b * t;
    if x.abs() < 1.0 {
        tau_power_sin_series(3, b, t)
    } else {
        let (s, c) = x.sin_cos();
        (-x * x * x * c + 3.0 * x * x * s + 6.0 * x * c - 6.0 * s) / (b * b * b * b)
    }
}

/// Above the degenerate threshold but below this `|a| t` the phase kernel
/// uses its small-`a` expansion, which avoids cancellation in the generic
/// difference formula.
const SMALL_DETUNING: f64 = 1e-3;

/// `int_0^t (sin(a tau) / a) sin(b tau) d tau`.
fn phase_kernel(a: f64, b: f64, t: f64) -> f64 {
    let at = (a * t).abs();
    if a.abs() < DEGENERATE_DETUNING {
        tau_sin_integral(b, t)
    } else if at < SMALL_DETUNING {
        tau_sin_integral(b, t) - a * a / 6.0 * tau3_sin_integral(b, t)
    } else {
        (sin_over(a - b, t) - sin_over(a + b, t)) / (2.0 * a)
    }
}

/// Spin-dependent displacement `(F, G)` at time `t`.
pub fn trajectory(design: &GateDesign, t: f64, dnu_rel: f64) -> (f64, f64) {
    let c = SQRT_2 * design.sideband_coupling();
    let xi = detunings(design, dnu_rel);
    let (mut f, mut g) = (0.0, 0.0);
    for (&r, &x) in design.amplitudes().iter().zip(&xi) {
        f -= c * r * sin_over(x, t);
        g += c * r * one_minus_cos_over(x, t);
    }
    (f, g)
}

/// Geometric phase `A(t) = -int_0^t F dG`, summed in closed form over all
/// tone pairs.
pub fn accumulated_phase(design: &GateDesign, t: f64, dnu_rel: f64) -> f64 {
    let c = SQRT_2 * design.sideband_coupling();
    let xi = detunings(design, dnu_rel);
    let r = design.amplitudes();
    let mut acc = 0.0;
    for i in 0..r.len() {
        for j in 0..r.len() {
            acc += r[i] * r[j] * phase_kernel(xi[i], xi[j], t);
        }
    }
    c * c * acc
}

pub fn trajectory_point(design: &GateDesign, t: f64, dnu_rel: f64) -> TrajectoryPoint {
    let (f, g) = trajectory(design, t, dnu_rel);
    TrajectoryPoint {
        t,
        f,
        g,
        a: accumulated_phase(design, t, dnu_rel),
    }
}

/// Thermal gate fidelity with the ideal maximally entangled state.
pub fn gate_fidelity(f: f64, g: f64, a: f64, nbar: f64) -> f64 {
    let x = (nbar + 0.5) * (f * f + g * g) / 2.0;
    (3.0 + (-4.0 * x).exp()) / 8.0 + (-x).exp() * (a + f * g / 2.0).sin() / 2.0
}

/// Purity of the reduced two-qubit state for displacement `(F, G)`.
///
/// `|SS>` has weights 1/4, 1/2, 1/4 on the `J_y` eigenvalues -1, 0, 1, and
/// the coherence between eigenvalues `m, m'` is damped by the thermal
/// overlap `exp(-(nbar + 1/2) (m - m')^2 (F^2 + G^2) / 2)`.
pub fn purity_from_trajectory(f: f64, g: f64, nbar: f64) -> f64 {
    let x = (nbar + 0.5) * (f * f + g * g) / 2.0;
    0.375 + 0.5 * (-2.0 * x).exp() + 0.125 * (-8.0 * x).exp()
}

/// Populations, fidelity and purity at nominal time `t` under `err`.
pub fn populations(design: &GateDesign, t: f64, err: &ErrorSetting) -> PopulationQuad {
    let time = (1.0 + err.dt_rel) * t;
    let p = trajectory_point(design, time, err.dnu_rel);
    let x = (err.nbar + 0.5) * (p.f * p.f + p.g * p.g) / 2.0;
    let phi = p.a + p.f * p.g / 2.0;
    let e1 = (-x).exp();
    let e4 = (-4.0 * x).exp();
    let side = (1.0 - e4) / 8.0;
    PopulationQuad {
        p_ss: (3.0 + e4 + 4.0 * e1 * phi.cos()) / 8.0,
        p_sd: side,
        p_ds: side,
        p_dd: (3.0 + e4 - 4.0 * e1 * phi.cos()) / 8.0,
        fidelity: gate_fidelity(p.f, p.g, p.a, err.nbar),
        purity: purity_from_trajectory(p.f, p.g, err.nbar),
    }
}

pub fn gate_purity(design: &GateDesign, t: f64, err: &ErrorSetting) -> f64 {
    let (f, g) = trajectory(design, (1.0 + err.dt_rel) * t, err.dnu_rel);
    purity_from_trajectory(f, g, err.nbar)
}

/// Radial coordinates of the Cardioid(1..N) trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialForm {
    pub r: f64,
    pub phi: f64,
    /// Symmetric-gauge phase `A + F G / 2`.
    pub a: f64,
}

/// Closed-form `(R, phi, a)` of Cardioid(1, ..., N) at time `t`.
pub fn radial_form(n: usize, t: f64) -> Result<RadialForm> {
    if !(1..=crate::design::CLOSED_FORM_MAX_TONES).contains(&n) {
        return Err(Error::OutOfRange(format!("radial form needs 1 <= N <= 20, got {n}")));
    }
    let nu = n as u32;
    let nf = n as f64;
    let half = PI * t;
    let radius_pref = (0.5 * (0.5 * PI.ln() + ln_factorial(nu - 1) - ln_gamma(nf + 0.5))).exp();
    let r = radius_pref * half.sin().abs().powi(nu as i32);
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let phi = sign * nf * half;
    let c = half.cos();
    let pref = 0.5 * (0.5 * PI.ln() + ln_factorial(nu) - ln_gamma(nf + 0.5)).exp();
    let a = FRAC_PI_4 - pref * c * cardioid_hyp2f1(nu, c * c)?;
    Ok(RadialForm { r, phi, a })
}

/// The carrier-coupling series exactly as printed: with
/// `x = (2 Omega sin(nu T) / nu) sum_i r_i sum_j (2 n_i eta Omega / nu)^j`
/// it returns `sum_n (-1)^n x^(2n) / (2n)!`.
///
/// `omega_over_nu` is the peak total Rabi frequency `Omega sum |r_i|` over
/// the trap frequency and `nu` is the trap frequency in units of `xi0`.
pub fn carrier_series(design: &GateDesign, omega_over_nu: f64, nu: f64, t: f64) -> Result<f64> {
    let ratio = 2.0 * (design.sideband_coupling() / design.detuning()) / nu;
    let mut inner = 0.0;
    for (&n, &r) in design.tones().as_slice().iter().zip(design.amplitudes()) {
        let q = n as f64 * ratio;
        if q.abs() >= 1.0 {
            return Err(Error::DivergentCarrierSeries(q));
        }
        inner += r / (1.0 - q);
    }
    let per_unit = omega_over_nu / design.total_amplitude();
    let nu_t = nu * design.detuning() * t;
    let x = 2.0 * per_unit * nu_t.sin() * inner;

    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..10_000u32 {
        let k = k as f64;
        term *= -x2 / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        sum += term;
        if term.abs() < 1e-14 {
            return Ok(sum);
        }
    }
    Err(Error::SeriesNonConvergence(10_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_cardioid, design_ms, ToneIndexSet};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn ms_closes() {
        let ms = design_ms();
        let (f, g) = trajectory(&ms, 1.0, 0.0);
        assert!(f.abs() < 1e-12 && g.abs() < 1e-12);
        assert!((accumulated_phase(&ms, 1.0, 0.0) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn ms_half_gate() {
        let ms = design_ms();
        let (f, g) = trajectory(&ms, 0.5, 0.0);
        assert!(f.abs() < 1e-12);
        assert!((g - SQRT_2).abs() < 1e-12);
        // pi * int_0^{1/2} sin^2(2 pi tau) d tau
        assert!((accumulated_phase(&ms, 0.5, 0.0) - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_identities() {
        assert!((gate_fidelity(0.0, 0.0, FRAC_PI_2, 3.0) - 1.0).abs() < 1e-15);
        let eps = 0.3;
        let v = gate_fidelity(0.0, 0.0, FRAC_PI_2 + eps, 0.4);
        assert!((v - (0.5 + eps.cos() / 2.0)).abs() < 1e-15);
        assert!((gate_fidelity(0.4, -0.2, 1.0, 1e6) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn populations_endpoints() {
        let c = design_cardioid(&ToneIndexSet::new(vec![2, 3]).unwrap()).unwrap();
        let err = ErrorSetting::thermal(2.0);
        let p0 = populations(&c, 0.0, &err);
        assert_eq!((p0.p_ss, p0.p_sd, p0.p_ds, p0.p_dd), (1.0, 0.0, 0.0, 0.0));
        let p1 = populations(&c, 1.0, &err);
        assert!((p1.p_ss - 0.5).abs() < 1e-12 && (p1.p_dd - 0.5).abs() < 1e-12);
        assert!(p1.p_sd.abs() < 1e-12);
        assert!((p1.purity - 1.0).abs() < 1e-12);
        let mid = populations(&c, 0.4, &err);
        assert!((mid.total() - 1.0).abs() < 1e-12);
        assert_eq!(mid.p_sd, mid.p_ds);
    }

    #[test]
    fn degenerate_detuning_limit() {
        // dnu_rel = 1 puts the MS tone exactly on resonance
        let ms = design_ms();
        let (f, g) = trajectory(&ms, 0.7, 1.0);
        let c = SQRT_2 * ms.sideband_coupling();
        assert!((f + c * 0.7).abs() < 1e-12);
        assert_eq!(g, 0.0);
        assert_eq!(accumulated_phase(&ms, 0.7, 1.0), 0.0);
    }

    fn quad(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        // composite Simpson, plenty for smooth integrands on [0, t]
        let n = 20_000;
        let h = t / n as f64;
        let mut s = f(0.0) + f(t);
        for k in 1..n {
            s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn kernel_branches_match_quadrature() {
        for &(a, b) in &[(0.0, 3.0), (5e-7, 3.0), (2e-6, 3.0), (5e-4, 12.0), (5e-4, 5e-4), (0.7, -2.0), (4.0, 4.0)] {
            let t = 0.9;
            let exact = quad(|x| if a == 0.0 { x } else { (a * x).sin() / a } * (b * x).sin(), t);
            let k = phase_kernel(a, b, t);
            assert!((k - exact).abs() < 1e-12, "a={a} b={b}: {k} vs {exact}");
        }
        for &b in &[1e-3, 0.5, 0.99, 1.01, 7.0] {
            let t = 1.0;
            assert!((tau3_sin_integral(b, t) - quad(|x| x * x * x * (b * x).sin(), t)).abs() < 1e-12);
            assert!((tau_sin_integral(b, t) - quad(|x| x * (b * x).sin(), t)).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_form_endpoints() {
        for n in 1..=8 {
            let end = radial_form(n, 1.0).unwrap();
            assert!(end.r.abs() < 1e-12);
            assert!((end.a - FRAC_PI_2).abs() < 1e-12, "N={n} a={}", end.a);
            let start = radial_form(n, 0.0).unwrap();
            assert!(start.a.abs() < 1e-12, "N={n} a={}", start.a);
        }
        assert!(radial_form(0, 0.5).is_err());
    }

    #[test]
    fn carrier_series_degenerate_values() {
        let ms = design_ms();
        assert_eq!(carrier_series(&ms, 0.0, 50.0, 1.0).unwrap(), 1.0);
        // nu T = 100 pi gives sin(nu T) ~ 0
        let v = carrier_series(&ms, 0.1, 50.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-20);
        assert!(matches!(
            carrier_series(&ms, 0.1, 0.5, 1.0),
            Err(Error::DivergentCarrierSeries(_))
        ));
    }
}
