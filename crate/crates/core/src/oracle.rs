//! Brute-force Schrodinger integration of two qubits and one truncated
//! motional mode under the multi-tone drive.
//!
//! The state vector is indexed as `q * (n_max + 1) + k` with the spin pair
//! `q` in the order SS, SD, DS, DD (S is the `sigma_z = +1` state) and `k`
//! the Fock number. The Hamiltonian in the interaction picture is
//!
//! ```text
//! H(t) = -eta Omega J_y (f(t) a + f(t)* a^dag) + c(t) J_x,
//! f(t) = sum_i r_i exp(i xi_i t)
//! ```
//!
//! where `c(t)` is the off-resonant carrier drive and is zero in RWA mode.
//! Integration is classical fourth-order Runge-Kutta at a fixed step,
//! doubled until the reduced spin density matrix stops changing.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{ErrorSetting, PopulationQuad};
use crate::design::GateDesign;
use crate::error::{Error, Result};

/// Default population allowed in the two highest Fock levels.
pub const LEAKAGE_LIMIT: f64 = 1e-5;
/// Levels kept free above the highest initial Fock state.
pub const HEADROOM: usize = 5;
/// Thermal weight dropped by the ensemble cutoff.
pub const THERMAL_TAIL: f64 = 1e-6;
/// Largest thermal weight a capped ensemble may drop.
pub const CAPPED_TAIL: f64 = 1e-4;
/// Lamb-Dicke parameter used before snapping the trap frequency.
pub const NOMINAL_ETA: f64 = 0.05;
/// Fock cutoff used for carrier runs.
pub const CARRIER_N_MAX: usize = 20;

const MAX_DOUBLINGS: u32 = 14;
/// Initial `(||H|| + omega_max) dt`.
const INITIAL_PHASE_STEP: f64 = 0.5;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "rwa", alias = "rwa_sidebands_only")]
    RwaSidebandsOnly,
    #[serde(rename = "full", alias = "full_with_carrier")]
    FullWithCarrier,
}

/// How the off-resonant carrier coupling is modelled in full mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarrierModel {
    /// `2 Omega J_x sum_i r_i cos((nu + n_i xi0) t + phi_i)`.
    #[default]
    PerTone,
    /// `2 Omega (sum_i |r_i|) J_x cos(nu t + phi_0)`.
    SingleFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_max: usize,
    pub mode: Mode,
    /// Trap frequency in units of `xi0`.
    pub nu: f64,
    pub eta: f64,
    /// Largest change of any reduced density-matrix element accepted
    /// between a run and the run at half the step size.
    pub step_tolerance: f64,
    /// Largest population accepted in the two highest Fock levels at any
    /// reported time (thermally weighted for ensembles).
    pub leakage_limit: f64,
    pub carrier_model: CarrierModel,
    /// Per-tone carrier phases; empty means all zero.
    pub carrier_phases: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_max: 30,
            mode: Mode::RwaSidebandsOnly,
            nu: 100.0,
            eta: NOMINAL_ETA,
            step_tolerance: 1e-7,
            leakage_limit: LEAKAGE_LIMIT,
            carrier_model: CarrierModel::PerTone,
            carrier_phases: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn rwa(n_max: usize) -> Self {
        SimConfig {
            n_max,
            ..Default::default()
        }
    }

    /// Full-mode configuration with peak total Rabi frequency
    /// `omega_over_nu * nu`.
    ///
    /// The trap frequency is snapped so that `nu T = pi/2 (mod 2 pi)`, where
    /// the carrier displacement at gate end is largest, and `eta` is then
    /// chosen to keep `omega_over_nu` exact.
    pub fn for_carrier(design: &GateDesign, omega_over_nu: f64, n_max: usize) -> Result<Self> {
        if !(omega_over_nu > 0.0) {
            return Err(Error::OutOfRange(format!("omega_over_nu = {omega_over_nu} must be > 0")));
        }
        let total_rabi = design.sideband_coupling() * design.total_amplitude() / NOMINAL_ETA;
        let nominal = total_rabi / omega_over_nu;
        let k = ((nominal - FRAC_PI_2) / TAU).round().max(1.0);
        let nu = TAU * k + FRAC_PI_2;
        let eta = design.sideband_coupling() * design.total_amplitude() / (omega_over_nu * nu);
        let config = SimConfig {
            n_max,
            mode: Mode::FullWithCarrier,
            nu: nu / design.detuning(),
            eta,
            ..Default::default()
        };
        config.validate(design)?;
        Ok(config)
    }

    /// Rabi frequency per unit amplitude, `Omega = (eta Omega) / eta`.
    pub fn rabi_per_unit(&self, design: &GateDesign) -> f64 {
        design.sideband_coupling() / self.eta
    }

    /// Peak total Rabi frequency over the trap frequency.
    pub fn omega_over_nu(&self, design: &GateDesign) -> f64 {
        self.rabi_per_unit(design) * design.total_amplitude() / (self.nu * design.detuning())
    }

    pub fn validate(&self, design: &GateDesign) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::OutOfRange("n_max must be >= 1".into()));
        }
        if !(self.step_tolerance > 0.0) {
            return Err(Error::OutOfRange("step_tolerance must be > 0".into()));
        }
        if self.mode == Mode::FullWithCarrier {
            if !(self.eta > 0.0 && self.eta < 0.3) {
                return Err(Error::OutOfRange(format!("eta = {} outside (0, 0.3)", self.eta)));
            }
            if !(self.nu > 0.0) {
                return Err(Error::OutOfRange(format!("nu = {} must be > 0", self.nu)));
            }
            let want = match self.carrier_model {
                CarrierModel::PerTone => design.len(),
                CarrierModel::SingleFrequency => 1,
            };
            if !self.carrier_phases.is_empty() && self.carrier_phases.len() != want {
                return Err(Error::OutOfRange(format!(
                    "expected {want} carrier phases, got {}",
                    self.carrier_phases.len()
                )));
            }
        }
        Ok(())
    }
}

/// Pure state of spins and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub amplitudes: Vec<C>,
    pub n_max: usize,
    pub t: f64,
    /// Total RK4 steps of the accepted run.
    pub steps: usize,
    /// Population in the two highest Fock levels.
    pub leakage: f64,
    /// Largest such population seen since `t = 0`.
    pub peak_leakage: f64,
}

impl SimState {
    fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spin density matrix with the mode traced out.
    pub fn reduced_density(&self) -> Matrix4<C> {
        let d = self.dim();
        let psi = &self.amplitudes;
        Matrix4::from_fn(|q, p| {
            (0..d)
                .map(|k| psi[q * d + k] * psi[p * d + k].conj())
                .sum()
        })
    }

    pub fn populations(&self) -> PopulationQuad {
        quad_from_density(&self.reduced_density())
    }
}

/// Populations, fidelity with the ideal target and `Tr(rho^2)`.
pub fn quad_from_density(rho: &Matrix4<C>) -> PopulationQuad {
    let target = ideal_target_state();
    let fidelity = (target.adjoint() * rho * target)[(0, 0)].re;
    let purity = (rho * rho).trace().re;
    PopulationQuad {
        p_ss: rho[(0, 0)].re,
        p_sd: rho[(1, 1)].re,
        p_ds: rho[(2, 2)].re,
        p_dd: rho[(3, 3)].re,
        fidelity,
        purity,
    }
}

fn pauli_pair(single: [[C; 2]; 2]) -> Matrix4<C> {
    // (s (x) 1 + 1 (x) s) / 2 with index q = 2 q1 + q2
    Matrix4::from_fn(|q, p| {
        let (q1, q2, p1, p2) = (q / 2, q % 2, p / 2, p % 2);
        let mut v = C::new(0.0, 0.0);
        if q2 == p2 {
            v += single[q1][p1];
        }
        if q1 == p1 {
            v += single[q2][p2];
        }
        v * 0.5
    })
}

pub fn j_x() -> Matrix4<C> {
    let o = C::new(0.0, 0.0);
    let l = C::new(1.0, 0.0);
    pauli_pair([[o, l], [l, o]])
}

pub fn j_y() -> Matrix4<C> {
    let o = C::new(0.0, 0.0);
    let i = C::new(0.0, 1.0);
    pauli_pair([[o, -i], [i, o]])
}

/// `exp(-i (pi/2) J_y^2) |SS>` via the eigendecomposition of `J_y^2`.
pub fn ideal_target_state() -> Vector4<C> {
    let jy = j_y();
    let eig = SymmetricEigen::new(jy * jy);
    let v = eig.eigenvectors;
    let phases = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C::new(0.0, -FRAC_PI_2 * l).exp()));
    let u = v * phases * v.adjoint();
    u.column(0).into_owned()
}

struct Drive {
    coupling: f64,
    r: Vec<f64>,
    xi: Vec<f64>,
    carrier_amp: Vec<f64>,
    carrier_freq: Vec<f64>,
    carrier_phase: Vec<f64>,
    jx: [[C; 4]; 4],
    jy: [[C; 4]; 4],
}

fn to_array(m: &Matrix4<C>) -> [[C; 4]; 4] {
    let mut a = [[C::new(0.0, 0.0); 4]; 4];
    for (q, row) in a.iter_mut().enumerate() {
        for (p, v) in row.iter_mut().enumerate() {
            *v = m[(q, p)];
        }
    }
    a
}

impl Drive {
    fn new(design: &GateDesign, config: &SimConfig, dnu_rel: f64) -> Self {
        let xi0 = design.detuning();
        let tones: Vec<f64> = design.tones().as_slice().iter().map(|&n| n as f64).collect();
        let r = design.amplitudes().to_vec();
        let xi = tones.iter().map(|n| (n - dnu_rel) * xi0).collect();
        let (mut carrier_amp, mut carrier_freq) = (Vec::new(), Vec::new());
        if config.mode == Mode::FullWithCarrier {
            let omega = config.rabi_per_unit(design);
            let nu = config.nu * xi0;
            match config.carrier_model {
                CarrierModel::PerTone => {
                    carrier_amp = r.iter().map(|ri| 2.0 * omega * ri).collect();
                    carrier_freq = tones.iter().map(|n| nu + n * xi0).collect();
                }
                CarrierModel::SingleFrequency => {
                    carrier_amp = vec![2.0 * omega * design.total_amplitude()];
                    carrier_freq = vec![nu];
                }
            }
        }
        let carrier_phase = if config.carrier_phases.is_empty() {
            vec![0.0; carrier_amp.len()]
        } else {
            config.carrier_phases.clone()
        };
        Drive {
            coupling: design.sideband_coupling(),
            r,
            xi,
            carrier_amp,
            carrier_freq,
            carrier_phase,
            jx: to_array(&j_x()),
            jy: to_array(&j_y()),
        }
    }

    fn sideband(&self, t: f64) -> C {
        self.r
            .iter()
            .zip(&self.xi)
            .map(|(&r, &x)| C::from_polar(r, x * t))
            .sum()
    }

    fn carrier(&self, t: f64) -> f64 {
        self.carrier_amp
            .iter()
            .zip(&self.carrier_freq)
            .zip(&self.carrier_phase)
            .map(|((&a, &w), &p)| a * (w * t + p).cos())
            .sum()
    }

    /// Upper bound on `||H||` plus the fastest drive frequency.
    fn rate(&self, n_max: usize) -> f64 {
        let side: f64 = self.r.iter().map(|r| r.abs()).sum::<f64>() * self.coupling;
        let carrier: f64 = self.carrier_amp.iter().map(|a| a.abs()).sum();
        let w = self
            .xi
            .iter()
            .chain(&self.carrier_freq)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        side * 2.0 * ((n_max + 1) as f64).sqrt() + carrier + w
    }
}

struct Stepper<'a> {
    drive: &'a Drive,
    d: usize,
    sqrt_k: Vec<f64>,
    phi: Vec<C>,
    k: [Vec<C>; 4],
    tmp: Vec<C>,
}

impl<'a> Stepper<'a> {
    fn new(drive: &'a Drive, n_max: usize) -> Self {
        let d = n_max + 1;
        let dim = 4 * d;
        Stepper {
            drive,
            d,
            sqrt_k: (0..=d).map(|k| (k as f64).sqrt()).collect(),
            phi: vec![C::new(0.0, 0.0); dim],
            k: std::array::from_fn(|_| vec![C::new(0.0, 0.0); dim]),
            tmp: vec![C::new(0.0, 0.0); dim],
        }
    }

    /// `out = -i H(t) psi`.
    fn derivative(&mut self, t: f64, psi: &[C], which: usize) {
        let d = self.d;
        let f = self.drive.sideband(t);
        let fc = f.conj();
        let cx = self.drive.carrier(t);
        for q in 0..4 {
            let base = q * d;
            for k in 0..d {
                let mut v = C::new(0.0, 0.0);
                if k + 1 < d {
                    v += f * self.sqrt_k[k + 1] * psi[base + k + 1];
                }
                if k > 0 {
                    v += fc * self.sqrt_k[k] * psi[base + k - 1];
                }
                self.phi[base + k] = v;
            }
        }
        let g = -self.drive.coupling;
        let minus_i = C::new(0.0, -1.0);
        let out = &mut self.k[which];
        for q in 0..4 {
            for k in 0..d {
                let mut h = C::new(0.0, 0.0);
                for p in 0..4 {
                    let jy = self.drive.jy[q][p];
                    if jy.re != 0.0 || jy.im != 0.0 {
                        h += jy * g * self.phi[p * d + k];
                    }
                    if cx != 0.0 {
                        let jx = self.drive.jx[q][p];
                        if jx.re != 0.0 {
                            h += jx * cx * psi[p * d + k];
                        }
                    }
                }
                out[q * d + k] = minus_i * h;
            }
        }
    }

    fn step(&mut self, t: f64, dt: f64, psi: &mut [C]) {
        let half = 0.5 * dt;
        self.derivative(t, psi, 0);
        for (x, (p, k)) in self.tmp.iter_mut().zip(psi.iter().zip(&self.k[0])) {
            *x = p + k * half;
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.derivative(t + half, &tmp, 1);
        let mut tmp = tmp;
        for (x, (p, k)) in tmp.iter_mut().zip(psi.iter().zip(&self.k[1])) {
            *x = p + k * half;
        }
        self.derivative(t + half, &tmp, 2);
        for (x, (p, k)) in tmp.iter_mut().zip(psi.iter().zip(&self.k[2])) {
            *x = p + k * dt;
        }
        self.derivative(t + dt, &tmp, 3);
        self.tmp = tmp;
        let w = dt / 6.0;
        for (i, p) in psi.iter_mut().enumerate() {
            *p += (self.k[0][i] + (self.k[1][i] + self.k[2][i]) * 2.0 + self.k[3][i]) * w;
        }
    }

    fn top_population(&self, psi: &[C]) -> f64 {
        let d = self.d;
        let lo = d.saturating_sub(2);
        (0..4)
            .flat_map(|q| (lo..d).map(move |k| q * d + k))
            .map(|i| psi[i].norm_sqr())
            .sum()
    }
}

/// Integrate from `t = 0` through each checkpoint with `rate` steps per unit
/// time (at least one step per segment).
fn integrate(drive: &Drive, n_max: usize, fock: usize, times: &[f64], rate: f64) -> Vec<SimState> {
    let d = n_max + 1;
    let mut psi = vec![C::new(0.0, 0.0); 4 * d];
    psi[fock] = C::new(1.0, 0.0);
    let mut stepper = Stepper::new(drive, n_max);
    let mut t = 0.0;
    let mut steps = 0;
    let mut peak = stepper.top_population(&psi);
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = ((span * rate).ceil() as usize).max(1);
            let dt = span / n as f64;
            for s in 0..n {
                stepper.step(t + s as f64 * dt, dt, &mut psi);
                peak = peak.max(stepper.top_population(&psi));
            }
            steps += n;
            t = target;
        }
        out.push(SimState {
            amplitudes: psi.clone(),
            n_max,
            t: target,
            steps,
            leakage: stepper.top_population(&psi),
            peak_leakage: peak,
        });
    }
    out
}

fn max_density_change(a: &[SimState], b: &[SimState]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            (x.reduced_density() - y.reduced_density())
                .iter()
                .fold(0.0f64, |m, v| m.max(v.norm()))
        })
        .fold(0.0, f64::max)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::OutOfRange("no evolution times given".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::OutOfRange("evolution times must be finite, >= 0 and nondecreasing".into()));
    }
    Ok(())
}

/// Evolve with step doubling until converged; returns the states and the
/// accepted step rate.
fn converge(
    drive: &Drive,
    config: &SimConfig,
    fock: usize,
    times: &[f64],
) -> Result<(Vec<SimState>, f64)> {
    let mut rate = drive.rate(config.n_max) / INITIAL_PHASE_STEP;
    let mut prev = integrate(drive, config.n_max, fock, times, rate);
    for _ in 0..MAX_DOUBLINGS {
        rate *= 2.0;
        let next = integrate(drive, config.n_max, fock, times, rate);
        if max_density_change(&prev, &next) < config.step_tolerance {
            return Ok((next, rate));
        }
        prev = next;
    }
    Err(Error::StepNotConverged {
        tolerance: config.step_tolerance,
        steps: prev.last().map_or(0, |s| s.steps),
    })
}

fn check_fock(config: &SimConfig, fock: usize) -> Result<()> {
    if fock + HEADROOM > config.n_max {
        return Err(Error::InsufficientHeadroom {
            fock,
            n_max: config.n_max,
        });
    }
    Ok(())
}

/// Evolve `|SS> (x) |initial_fock>` to `t_end`.
pub fn evolve(design: &GateDesign, config: &SimConfig, initial_fock: usize, t_end: f64) -> Result<SimState> {
    let mut states = evolve_at(design, config, initial_fock, &[t_end], 0.0)?;
    Ok(states.pop().expect("one checkpoint"))
}

/// Evolve `|SS> (x) |initial_fock>` through the nondecreasing `times` with
/// every detuning shifted by `dnu_rel * xi0`.
pub fn evolve_at(
    design: &GateDesign,
    config: &SimConfig,
    initial_fock: usize,
    times: &[f64],
    dnu_rel: f64,
) -> Result<Vec<SimState>> {
    config.validate(design)?;
    check_times(times)?;
    check_fock(config, initial_fock)?;
    let drive = Drive::new(design, config, dnu_rel);
    let (states, _) = converge(&drive, config, initial_fock, times)?;
    let leakage = states.iter().fold(0.0f64, |m, s| m.max(s.leakage));
    if leakage > config.leakage_limit {
        return Err(Error::TruncationLeakage {
            leakage,
            n_max: config.n_max,
        });
    }
    Ok(states)
}

/// Truncated thermal distribution of initial Fock states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub nbar: f64,
    pub weights: Vec<f64>,
    /// Weight dropped before renormalization.
    pub discarded: f64,
}

impl ThermalEnsemble {
    /// Weights `nbar^n / (nbar + 1)^(n + 1)` up to the first `n` where the
    /// cumulative weight exceeds `1 - 1e-6`, renormalized.
    pub fn new(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::OutOfRange(format!("nbar = {nbar} must be >= 0")));
        }
        let ratio = nbar / (nbar + 1.0);
        let mut p = 1.0 / (nbar + 1.0);
        let mut weights = Vec::new();
        let mut cum = 0.0;
        loop {
            weights.push(p);
            cum += p;
            if cum > 1.0 - THERMAL_TAIL || p == 0.0 {
                break;
            }
            p *= ratio;
        }
        Ok(Self::renormalized(nbar, weights))
    }

    /// As [`ThermalEnsemble::new`] but never above `max_fock`, provided the
    /// weight dropped stays below [`CAPPED_TAIL`].
    pub fn capped(nbar: f64, max_fock: usize) -> Result<Self> {
        let full = Self::new(nbar)?;
        if full.cutoff() <= max_fock {
            return Ok(full);
        }
        let ratio = nbar / (nbar + 1.0);
        let discarded = ratio.powi(max_fock as i32 + 1);
        if discarded > CAPPED_TAIL {
            return Err(Error::EnsembleTruncation {
                discarded,
                cutoff: max_fock,
            });
        }
        let mut p = 1.0 / (nbar + 1.0);
        let weights = (0..=max_fock)
            .map(|_| {
                let w = p;
                p *= ratio;
                w
            })
            .collect();
        Ok(Self::renormalized(nbar, weights))
    }

    fn renormalized(nbar: f64, mut weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        ThermalEnsemble {
            nbar,
            weights,
            discarded: 1.0 - total,
        }
    }

    /// Highest Fock state in the ensemble.
    pub fn cutoff(&self) -> usize {
        self.weights.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalResult {
    pub populations: PopulationQuad,
    /// RK4 steps per initial Fock state.
    pub steps: usize,
    /// Thermally weighted population in the two highest Fock levels.
    pub leakage: f64,
    /// Thermally weighted peak of that population since `t = 0`.
    pub peak_leakage: f64,
    /// Largest `| ||psi|| - 1 |` over the ensemble.
    pub norm_drift: f64,
}

/// Thermal average at time `t` without control errors.
pub fn thermal_average(
    design: &GateDesign,
    config: &SimConfig,
    ens: &ThermalEnsemble,
    t: f64,
) -> Result<ThermalResult> {
    let mut out = thermal_average_times(design, config, ens, &[t], 0.0)?;
    Ok(out.pop().expect("one checkpoint"))
}

/// Thermal averages at nominal times `times` under `err`: the ensemble is
/// built from `err.nbar` and capped at `n_max - 5`, every time is stretched by
/// `1 + dt_rel` and every detuning shifted by `dnu_rel xi0`.
pub fn thermal_average_at(
    design: &GateDesign,
    config: &SimConfig,
    err: &ErrorSetting,
    times: &[f64],
) -> Result<Vec<ThermalResult>> {
    let ens = ThermalEnsemble::capped(err.nbar, config.n_max.saturating_sub(HEADROOM))?;
    let stretched: Vec<f64> = times.iter().map(|t| t * (1.0 + err.dt_rel)).collect();
    thermal_average_times(design, config, &ens, &stretched, err.dnu_rel)
}

pub fn thermal_average_times(
    design: &GateDesign,
    config: &SimConfig,
    ens: &ThermalEnsemble,
    times: &[f64],
    dnu_rel: f64,
) -> Result<Vec<ThermalResult>> {
    config.validate(design)?;
    check_times(times)?;
    let top = ens.cutoff();
    check_fock(config, top)?;
    let drive = Drive::new(design, config, dnu_rel);

    // the highest Fock state needs the finest step; reuse its rate for all
    let (top_states, rate) = converge(&drive, config, top, times)?;
    let mut runs: Vec<Vec<SimState>> = (0..top)
        .into_par_iter()
        .map(|n| integrate(&drive, config.n_max, n, times, rate))
        .collect();
    runs.push(top_states);

    let mut results = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let mut rho = Matrix4::<C>::zeros();
        let mut leakage = 0.0;
        let mut peak_leakage = 0.0;
        let mut norm_drift = 0.0f64;
        for (w, run) in ens.weights.iter().zip(&runs) {
            let s = &run[i];
            rho += s.reduced_density() * C::new(*w, 0.0);
            leakage += w * s.leakage;
            peak_leakage += w * s.peak_leakage;
            norm_drift = norm_drift.max((s.norm() - 1.0).abs());
        }
        if leakage > config.leakage_limit {
            return Err(Error::TruncationLeakage {
                leakage,
                n_max: config.n_max,
            });
        }
        results.push(ThermalResult {
            populations: quad_from_density(&rho),
            steps: runs[top][i].steps,
            leakage,
            peak_leakage,
            norm_drift,
        });
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierReport {
    pub omega_over_nu: f64,
    /// Trap frequency in units of `xi0`.
    pub nu: f64,
    pub eta: f64,
    pub rwa_fidelity: f64,
    pub full_fidelity: f64,
    pub infidelity: f64,
    pub steps: usize,
}

/// Fidelity lost at `t = T`, `nbar = 0` when the carrier term is switched
/// on with the given full-mode configuration.
pub fn carrier_report(design: &GateDesign, full: &SimConfig) -> Result<CarrierReport> {
    let rwa = SimConfig {
        mode: Mode::RwaSidebandsOnly,
        ..full.clone()
    };
    let a = evolve(design, &rwa, 0, 1.0)?;
    let b = evolve(design, full, 0, 1.0)?;
    let rwa_fidelity = a.populations().fidelity;
    let full_fidelity = b.populations().fidelity;
    Ok(CarrierReport {
        omega_over_nu: full.omega_over_nu(design),
        nu: full.nu,
        eta: full.eta,
        rwa_fidelity,
        full_fidelity,
        infidelity: rwa_fidelity - full_fidelity,
        steps: b.steps,
    })
}

/// `F(rwa) - F(full)` at `t = T`, `nbar = 0`, with the configuration of
/// [`SimConfig::for_carrier`].
pub fn carrier_infidelity_oracle(design: &GateDesign, omega_over_nu: f64) -> Result<f64> {
    let config = SimConfig::for_carrier(design, omega_over_nu, CARRIER_N_MAX)?;
    Ok(carrier_report(design, &config)?.infidelity)
}

/// Full-mode fidelity after rescaling the drive amplitude to its best value
/// at fixed `nu` and `eta`, searched over `[1 - span, 1 + span]`.
pub fn carrier_calibrated_fidelity(design: &GateDesign, full: &SimConfig, span: f64) -> Result<(f64, f64)> {
    let fid = |s: f64| -> Result<f64> {
        // laser power scales the sideband and carrier couplings together
        let scaled = design.with_drive_scale(s);
        Ok(evolve(&scaled, full, 0, 1.0)?.populations().fidelity)
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1.0 - span, 1.0 + span);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (fid(x1)?, fid(x2)?);
    for _ in 0..30 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = fid(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = fid(x2)?;
        }
    }
    Ok(if f1 > f2 { (x1, f1) } else { (x2, f2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::design_ms;

    #[test]
    fn target_state_is_bell_like() {
        let psi = ideal_target_state();
        assert!((psi.norm() - 1.0).abs() < 1e-14);
        assert!((psi[0].norm_sqr() - 0.5).abs() < 1e-12);
        assert!((psi[3].norm_sqr() - 0.5).abs() < 1e-12);
        assert!(psi[1].norm() < 1e-12 && psi[2].norm() < 1e-12);
    }

    #[test]
    fn spin_operators_commute_correctly() {
        let (jx, jy) = (j_x(), j_y());
        let jz = Matrix4::from_diagonal(&Vector4::new(1.0, 0.0, 0.0, -1.0).map(|x| C::new(x, 0.0)));
        let comm = jx * jy - jy * jx;
        let diff = comm - jz * C::new(0.0, 1.0);
        assert!(diff.norm() < 1e-14);
    }

    #[test]
    fn thermal_weights() {
        let e = ThermalEnsemble::new(0.0).unwrap();
        assert_eq!(e.weights, vec![1.0]);
        let e = ThermalEnsemble::new(0.17).unwrap();
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(e.discarded < THERMAL_TAIL);
        assert!(ThermalEnsemble::new(2.0).unwrap().cutoff() > 25);
        let c = ThermalEnsemble::capped(2.0, 25).unwrap();
        assert_eq!(c.cutoff(), 25);
        assert!(c.discarded < CAPPED_TAIL);
        assert!(matches!(
            ThermalEnsemble::capped(9.8, 25),
            Err(Error::EnsembleTruncation { .. })
        ));
    }

    #[test]
    fn headroom_is_enforced() {
        let cfg = SimConfig::rwa(10);
        assert!(matches!(
            evolve(&design_ms(), &cfg, 6, 1.0),
            Err(Error::InsufficientHeadroom { .. })
        ));
    }

    #[test]
    fn carrier_config_snaps_trap_phase() {
        let ms = design_ms();
        let cfg = SimConfig::for_carrier(&ms, 0.1, 20).unwrap();
        let nu_t = cfg.nu * ms.detuning();
        assert!(((nu_t - FRAC_PI_2) / TAU - ((nu_t - FRAC_PI_2) / TAU).round()).abs() < 1e-12);
        assert!((cfg.omega_over_nu(&ms) - 0.1).abs() < 1e-14);
        assert!((cfg.eta - NOMINAL_ETA).abs() < 0.01);
    }
}
