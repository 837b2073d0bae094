//! Closed-form trajectory and phase against direct numerical quadrature.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use msgate::analytic::{self, radial_form};
use msgate::design::{design_antioid, design_cardioid, design_carnu, design_ms, GateDesign, ToneIndexSet};
use msgate::special::{gamma, hyp2f1_series};
use proptest::prelude::*;

const XI0: f64 = 2.0 * PI;
// c = sqrt(2) eta Omega with eta Omega = xi0 / 2
const C: f64 = SQRT_2 * PI;

fn tones(v: &[i64]) -> ToneIndexSet {
    ToneIndexSet::new(v.to_vec()).unwrap()
}

/// Adaptive Simpson with a Richardson correction.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

struct Drive {
    n: Vec<f64>,
    r: Vec<f64>,
    dnu: f64,
}

impl Drive {
    fn of(d: &GateDesign, dnu: f64) -> Self {
        Drive {
            n: d.tones().as_slice().iter().map(|&n| n as f64).collect(),
            r: d.amplitudes().to_vec(),
            dnu,
        }
    }

    fn xi(&self, i: usize) -> f64 {
        (self.n[i] - self.dnu) * XI0
    }

    /// dF/dt and dG/dt.
    fn velocity(&self, t: f64) -> (f64, f64) {
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..self.n.len() {
            c += self.r[i] * (self.xi(i) * t).cos();
            s += self.r[i] * (self.xi(i) * t).sin();
        }
        (-C * c, C * s)
    }

    /// F by its own quadrature of the velocity.
    fn f(&self, t: f64) -> f64 {
        simpson(&|u| self.velocity(u).0, 0.0, t, 1e-14)
    }

    fn g(&self, t: f64) -> f64 {
        simpson(&|u| self.velocity(u).1, 0.0, t, 1e-14)
    }

    /// F with the tone sums done in closed form, used inside the phase integral.
    fn f_exact(&self, t: f64) -> f64 {
        (0..self.n.len())
            .map(|i| {
                let xi = self.xi(i);
                if xi.abs() < 1e-300 {
                    -C * self.r[i] * t
                } else {
                    -C * self.r[i] * (xi * t).sin() / xi
                }
            })
            .sum()
    }

    /// A = -int F dG.
    fn phase(&self, t: f64) -> f64 {
        -simpson(&|u| self.f_exact(u) * self.velocity(u).1, 0.0, t, 1e-14)
    }
}

fn reference_designs() -> Vec<GateDesign> {
    vec![
        design_ms(),
        design_cardioid(&tones(&[2, 3])).unwrap(),
        design_antioid(&tones(&[2, 3])).unwrap(),
        design_carnu(&tones(&[2, 3, 7])).unwrap(),
        design_cardioid(&tones(&[2, 3, 7])).unwrap(),
        design_cardioid(&tones(&[2, 3, 7, 8])).unwrap(),
    ]
}

#[test]
fn ms_half_gate_point() {
    let (f, g) = analytic::trajectory(&design_ms(), 0.5, 0.0);
    assert!(f.abs() < 1e-15);
    assert!((g - SQRT_2).abs() < 1e-14);
}

#[test]
fn cardioid_detuned_trajectory_matches_quadrature() {
    let d = design_cardioid(&tones(&[2, 3])).unwrap();
    let q = Drive::of(&d, 0.05);
    let (f, g) = analytic::trajectory(&d, 1.0, 0.05);
    assert!(f.abs() + g.abs() > 1e-3);
    assert!((f - q.f(1.0)).abs() < 1e-9, "{f} vs {}", q.f(1.0));
    assert!((g - q.g(1.0)).abs() < 1e-9, "{g} vs {}", q.g(1.0));
}

#[test]
fn ms_half_gate_phase_matches_quadrature() {
    let d = design_ms();
    let a = analytic::accumulated_phase(&d, 0.5, 0.0);
    assert!((a - Drive::of(&d, 0.0).phase(0.5)).abs() < 1e-9);
}

#[test]
fn phase_at_gate_time_is_quarter_turn() {
    for d in reference_designs() {
        assert!((analytic::accumulated_phase(&d, 1.0, 0.0) - FRAC_PI_2).abs() < 1e-12, "{}", d.id());
    }
}

#[test]
fn phase_near_vanishing_detuning_matches_quadrature() {
    // shifts that put one tone exactly on, and very close to, resonance
    let d = design_cardioid(&tones(&[2, 3])).unwrap();
    for dnu in [2.0, 2.0 - 1e-9, 2.0 - 1e-7, 2.0 - 1e-5, 2.0 - 1e-3, 3.0 + 1e-6] {
        let q = Drive::of(&d, dnu);
        for t in [0.3, 1.0] {
            let a = analytic::accumulated_phase(&d, t, dnu);
            let err = (a - q.phase(t)).abs() / (1.0 + a.abs());
            assert!(err < 1e-9, "dnu={dnu} t={t}: {a} vs {}", q.phase(t));
        }
    }
}

#[test]
fn radial_form_matches_cardioid_trajectories() {
    for n in 1..=6usize {
        let d = if n == 1 {
            design_ms()
        } else {
            design_cardioid(&ToneIndexSet::consecutive(n).unwrap()).unwrap()
        };
        for k in 0..=200 {
            let t = k as f64 / 200.0;
            let p = analytic::trajectory_point(&d, t, 0.0);
            let rf = radial_form(n, t).unwrap();
            assert!((rf.r - p.f.hypot(p.g)).abs() < 1e-10, "N={n} t={t}");
            let back = rf.a - 0.25 * rf.r * rf.r * (2.0 * rf.phi).sin();
            assert!((back - p.a).abs() < 1e-10, "N={n} t={t}: {back} vs {}", p.a);
        }
    }
}

#[test]
fn radial_form_single_tone_envelope() {
    for k in 0..=50 {
        let t = k as f64 / 50.0;
        let expect = SQRT_2 * (XI0 * t / 2.0).sin().abs();
        assert!((radial_form(1, t).unwrap().r - expect).abs() < 1e-12);
    }
}

#[test]
fn radial_form_endpoints() {
    for n in 1..=8 {
        assert!(radial_form(n, 1.0).unwrap().r.abs() < 1e-12);
        assert!((radial_form(n, 1.0).unwrap().a - FRAC_PI_2).abs() < 1e-10);
        assert!(radial_form(n, 0.0).unwrap().a.abs() < 1e-12);
    }
}

#[test]
fn hypergeometric_gauss_sum() {
    for n in 1..8u32 {
        let b = 0.5 - n as f64;
        let expect = gamma(1.5) * gamma(n as f64 + 0.5) / gamma(n as f64 + 1.0);
        assert!((hyp2f1_series(b, 1.0).unwrap() - expect).abs() < 1e-12, "n={n}");
    }
    assert!((hyp2f1_series(-0.5, 1.0).unwrap() - PI / 4.0).abs() < 1e-13);
    assert_eq!(hyp2f1_series(-2.5, 0.0).unwrap(), 1.0);
}

#[test]
fn hypergeometric_matches_brute_force() {
    // 2F1(1/2, b; 3/2; z) = sum_k (b)_k z^k / (k! (2k + 1))
    let (b, z) = (0.5 - 3.0, 0.25);
    let (mut term, mut sum) = (1.0f64, 0.0f64);
    for k in 0..200 {
        sum += term / (2 * k + 1) as f64;
        term *= (b + k as f64) * z / (k + 1) as f64;
    }
    assert!((hyp2f1_series(b, z).unwrap() - sum).abs() < 1e-12);
}

fn any_design() -> impl Strategy<Value = GateDesign> {
    (0..reference_designs().len()).prop_map(|i| reference_designs()[i].clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_forms_match_quadrature(d in any_design(), t in 0.0f64..1.2, dnu in -0.1f64..0.1) {
        let q = Drive::of(&d, dnu);
        let p = analytic::trajectory_point(&d, t, dnu);
        prop_assert!((p.f - q.f(t)).abs() < 1e-9);
        prop_assert!((p.g - q.g(t)).abs() < 1e-9);
        prop_assert!((p.a - q.phase(t)).abs() < 1e-9, "{} vs {}", p.a, q.phase(t));
    }
}
