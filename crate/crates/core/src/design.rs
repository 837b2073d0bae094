//! Tone sets and amplitude vectors that close the phase-space trajectory.
//!
//! Every design uses normalized units: the gate time is `T = 1`, the base
//! detuning is `xi0 = 2 pi / T` and the sideband coupling is `eta Omega =
//! xi0 / 2`. Amplitudes satisfy `sum r_j^2 / n_j = 1`, which together with
//! integer tones closes the trajectory with an enclosed area of `pi / 2`.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, ErrorSetting};
use crate::error::{Error, Result};
use crate::nullspace::{integer_null_space, power_rows, to_f64};
use crate::special::{binomial, ln_factorial, ln_gamma};

/// Tolerance on `sum r^2 / n = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Ordered set of distinct nonzero harmonic multipliers of the base detuning.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToneIndexSet(Vec<i64>);

impl ToneIndexSet {
    pub fn new(tones: impl Into<Vec<i64>>) -> Result<Self> {
        let tones = tones.into();
        if tones.is_empty() {
            return Err(Error::EmptyToneSet);
        }
        let mut seen = BTreeSet::new();
        for &n in &tones {
            if n == 0 {
                return Err(Error::ZeroTone);
            }
            if !seen.insert(n) {
                return Err(Error::DuplicateTone(n));
            }
        }
        Ok(ToneIndexSet(tones))
    }

    /// The consecutive set `1, 2, ..., n`.
    pub fn consecutive(n: usize) -> Result<Self> {
        Self::new((1..=n as i64).collect::<Vec<_>>())
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ToneIndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ms,
    Cardioid,
    Antioid,
    CarNu,
    Custom,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Ms => "ms",
            Family::Cardioid => "cardioid",
            Family::Antioid => "antioid",
            Family::CarNu => "carnu",
            Family::Custom => "custom",
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Family::Ms => "MS",
            Family::Cardioid => "Cardioid",
            Family::Antioid => "Antioid",
            Family::CarNu => "CarNu",
            Family::Custom => "Custom",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(Family::Ms),
            "cardioid" => Ok(Family::Cardioid),
            "antioid" => Ok(Family::Antioid),
            "carnu" => Ok(Family::CarNu),
            "custom" => Ok(Family::Custom),
            other => Err(Error::Serialization(format!("unknown family `{other}`"))),
        }
    }
}

/// One multi-tone entangling gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignDoc", into = "DesignDoc")]
pub struct GateDesign {
    tones: ToneIndexSet,
    amplitudes: Vec<f64>,
    family: Family,
    /// Base detuning in units of `2 pi / T`.
    xi0: f64,
    /// `eta Omega` in units of `xi0`.
    eta_omega: f64,
}

impl GateDesign {
    fn from_parts(tones: ToneIndexSet, amplitudes: Vec<f64>, family: Family) -> Self {
        GateDesign {
            tones,
            amplitudes,
            family,
            xi0: 1.0,
            eta_omega: 0.5,
        }
    }

    /// Custom design from raw amplitudes, rescaled onto `sum r^2/n = 1`.
    pub fn custom(tones: ToneIndexSet, amplitudes: Vec<f64>) -> Result<Self> {
        if tones.len() != amplitudes.len() {
            return Err(Error::LengthMismatch {
                tones: tones.len(),
                amplitudes: amplitudes.len(),
            });
        }
        let r = normalize(tones.as_slice(), &amplitudes)?;
        Ok(Self::from_parts(tones, r, Family::Custom))
    }

    pub fn tones(&self) -> &ToneIndexSet {
        &self.tones
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.tones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tones.is_empty()
    }

    /// Human-readable identifier such as `MS` or `Cardioid(2,3)`.
    pub fn id(&self) -> String {
        match self.family {
            Family::Ms => "MS".to_string(),
            f => format!("{}({})", f.label(), self.tones),
        }
    }

    /// `sum r_j^2 / n_j`.
    pub fn normalization(&self) -> f64 {
        normalization_sum(self.tones.as_slice(), &self.amplitudes)
    }

    pub fn check_normalization(&self) -> Result<()> {
        let s = self.normalization();
        if (s - 1.0).abs() <= NORMALIZATION_TOL {
            Ok(())
        } else {
            Err(Error::NormalizationViolated(s))
        }
    }

    /// Base detuning as an angular frequency in units of `1 / T`.
    pub fn detuning(&self) -> f64 {
        TAU * self.xi0
    }

    /// `eta Omega` as an angular frequency in units of `1 / T`.
    pub fn sideband_coupling(&self) -> f64 {
        self.eta_omega * self.detuning()
    }

    /// Sum of amplitude magnitudes; the peak total Rabi frequency in units
    /// of the per-unit-amplitude Rabi frequency.
    pub fn total_amplitude(&self) -> f64 {
        self.amplitudes.iter().map(|r| r.abs()).sum()
    }

    /// Same tones and amplitudes with the whole drive scaled by `scale`.
    /// The result no longer satisfies the gate condition unless `scale == 1`.
    pub fn with_drive_scale(&self, scale: f64) -> Self {
        GateDesign {
            eta_omega: self.eta_omega * scale,
            ..self.clone()
        }
    }

    /// Global sign flip of every amplitude.
    pub fn negated(&self) -> Self {
        GateDesign {
            amplitudes: self.amplitudes.iter().map(|r| -r).collect(),
            ..self.clone()
        }
    }

    /// Replace the amplitudes without renormalizing.
    pub fn with_raw_amplitudes(&self, amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != self.len() {
            return Err(Error::LengthMismatch {
                tones: self.len(),
                amplitudes: amplitudes.len(),
            });
        }
        Ok(GateDesign {
            amplitudes,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Wire format: `{"family": string, "n": [int], "r": [float], "normalized": true}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignDoc {
    pub family: String,
    pub n: Vec<i64>,
    pub r: Vec<f64>,
    pub normalized: bool,
}

impl From<GateDesign> for DesignDoc {
    fn from(d: GateDesign) -> Self {
        DesignDoc {
            family: d.family.as_str().to_string(),
            n: d.tones.0,
            r: d.amplitudes,
            normalized: true,
        }
    }
}

impl TryFrom<DesignDoc> for GateDesign {
    type Error = Error;

    fn try_from(doc: DesignDoc) -> Result<Self> {
        let family: Family = doc.family.parse()?;
        let tones = ToneIndexSet::new(doc.n)?;
        if tones.len() != doc.r.len() {
            return Err(Error::LengthMismatch {
                tones: tones.len(),
                amplitudes: doc.r.len(),
            });
        }
        let r = if doc.normalized {
            let s = normalization_sum(tones.as_slice(), &doc.r);
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::NormalizationViolated(s));
            }
            doc.r
        } else {
            normalize(tones.as_slice(), &doc.r)?
        };
        Ok(GateDesign::from_parts(tones, r, family))
    }
}

fn normalization_sum(tones: &[i64], r: &[f64]) -> f64 {
    tones.iter().zip(r).map(|(&n, &r)| r * r / n as f64).sum()
}

fn normalize(tones: &[i64], v: &[f64]) -> Result<Vec<f64>> {
    let s = normalization_sum(tones, v);
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NotNormalizable(s));
    }
    let scale = s.sqrt().recip();
    Ok(v.iter().map(|x| x * scale).collect())
}

/// Normalize and fix the sign convention: last amplitude positive.
fn finalize(tones: &ToneIndexSet, v: &[f64], family: Family) -> Result<GateDesign> {
    let mut r = normalize(tones.as_slice(), v)?;
    if r.last().is_some_and(|&x| x < 0.0) {
        r.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(GateDesign::from_parts(tones.clone(), r, family))
}

/// A zero-sum combination of three tones, stored with two positive terms and
/// sorted in descending order, e.g. `[1, 1, -2]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub terms: [i64; 3],
    pub sum: i64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.terms[0])?;
        for &t in &self.terms[1..] {
            if t < 0 {
                write!(f, "-{}", -t)?;
            } else {
                write!(f, "+{t}")?;
            }
        }
        write!(f, "={}", self.sum)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub admissible: bool,
    pub violations: Vec<Violation>,
}

/// Canonical form of a signed triple: at least two positive terms, sorted
/// descending.
pub fn canonical_triple(mut terms: [i64; 3]) -> [i64; 3] {
    if terms.iter().filter(|&&t| t > 0).count() < 2 {
        terms.iter_mut().for_each(|t| *t = -*t);
    }
    terms.sort_unstable_by(|a, b| b.cmp(a));
    terms
}

/// Report every signed triple of tones (drawn with repetition) that sums to
/// zero. Such a combination means a third-order intermodulation product of
/// the drive lands on the sideband resonance.
pub fn validate_tone_set(tones: &ToneIndexSet) -> ValidationReport {
    let n = tones.as_slice();
    let mut found = BTreeSet::new();
    for i in 0..n.len() {
        for j in i..n.len() {
            for k in j..n.len() {
                // the overall sign is redundant, so fix the first sign
                for (s2, s3) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    if n[i] + s2 * n[j] + s3 * n[k] == 0 {
                        found.insert(canonical_triple([n[i], s2 * n[j], s3 * n[k]]));
                    }
                }
            }
        }
    }
    let violations: Vec<Violation> = found
        .into_iter()
        .map(|terms| Violation { terms, sum: 0 })
        .collect();
    ValidationReport {
        admissible: violations.is_empty(),
        violations,
    }
}

/// The standard two-tone MS gate: `n = (1)`, `r = (1)`.
pub fn design_ms() -> GateDesign {
    GateDesign::from_parts(ToneIndexSet(vec![1]), vec![1.0], Family::Ms)
}

fn unique_null_vector(rows: &[Vec<num_rational::BigRational>], ncols: usize) -> Result<Vec<f64>> {
    let basis = integer_null_space(rows, ncols);
    if basis.len() != 1 {
        return Err(Error::DegenerateNullSpace(basis.len()));
    }
    Ok(to_f64(&basis[0]))
}

/// Cardioid amplitudes: annihilate `sum r_j n_j^k` for `k = 0..N-2`, which
/// removes the first `N - 1` orders of the trajectory's timing-error response.
pub fn design_cardioid(tones: &ToneIndexSet) -> Result<GateDesign> {
    let n = tones.len();
    if n < 2 {
        return Err(Error::TooFewTones {
            family: "Cardioid",
            min: 2,
            got: n,
        });
    }
    let rows = power_rows(tones.as_slice(), 0..(n as i32 - 1));
    let v = unique_null_vector(&rows, n)?;
    finalize(tones, &v, Family::Cardioid)
}

/// Cardioid magnitudes with all signs equal.
pub fn design_antioid(tones: &ToneIndexSet) -> Result<GateDesign> {
    let card = design_cardioid(tones)?;
    let r = card.amplitudes.iter().map(|x| x.abs()).collect();
    Ok(GateDesign::from_parts(tones.clone(), r, Family::Antioid))
}

/// CarNu amplitudes: one timing row (`sum r_j = 0`) plus inverse-power rows
/// `sum r_j / n_j^i = 0` for `i = 1..N-2`. The inverse-power rows cancel the
/// first-order trap-frequency response of the trajectory.
pub fn design_carnu(tones: &ToneIndexSet) -> Result<GateDesign> {
    let n = tones.len();
    if n < 3 {
        return Err(Error::TooFewTones {
            family: "CarNu",
            min: 3,
            got: n,
        });
    }
    let mut rows = power_rows(tones.as_slice(), [0]);
    rows.extend(power_rows(tones.as_slice(), (1..=(n as i32 - 2)).map(|i| -i)));
    let v = unique_null_vector(&rows, n)?;
    finalize(tones, &v, Family::CarNu)
}

/// Build a named design. MS ignores `tones` unless it is given explicitly as
/// `[1]`; custom designs need amplitudes and cannot be built here.
pub fn design_family(family: Family, tones: &[i64]) -> Result<GateDesign> {
    match family {
        Family::Ms => {
            if tones.is_empty() || tones == [1] {
                Ok(design_ms())
            } else {
                Err(Error::OutOfRange(format!("MS uses tone 1 only, got {tones:?}")))
            }
        }
        Family::Cardioid => design_cardioid(&ToneIndexSet::new(tones.to_vec())?),
        Family::Antioid => design_antioid(&ToneIndexSet::new(tones.to_vec())?),
        Family::CarNu => design_carnu(&ToneIndexSet::new(tones.to_vec())?),
        Family::Custom => Err(Error::OutOfRange("custom designs need explicit amplitudes".into())),
    }
}

/// Step used for the central-difference quadratic prefactor in `dnu_rel`.
pub const PREFACTOR_STEP: f64 = 1e-4;

/// Quadratic coefficient of `1 - F_g` in `dnu_rel` at the nominal gate time.
pub fn detuning_prefactor(design: &GateDesign, nbar: f64) -> f64 {
    let h = PREFACTOR_STEP;
    let infid = |d: f64| {
        let err = ErrorSetting {
            dt_rel: 0.0,
            dnu_rel: d,
            nbar,
        };
        1.0 - analytic::populations(design, 1.0, &err).fidelity
    };
    (infid(h) + infid(-h) - 2.0 * infid(0.0)) / (2.0 * h * h)
}

/// CarNu by numerical minimization: search the two-dimensional family that
/// satisfies the timing rows `k = 0..N-3` for the smallest quadratic
/// detuning prefactor of the infidelity.
pub fn design_carnu_minimized(tones: &ToneIndexSet, nbar: f64) -> Result<GateDesign> {
    let n = tones.len();
    if n < 3 {
        return Err(Error::TooFewTones {
            family: "CarNu",
            min: 3,
            got: n,
        });
    }
    let rows = power_rows(tones.as_slice(), 0..(n as i32 - 2));
    let basis = integer_null_space(&rows, n);
    if basis.len() != 2 {
        return Err(Error::DegenerateNullSpace(basis.len()));
    }
    let u = to_f64(&basis[0]);
    let v = to_f64(&basis[1]);
    let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let candidate = |theta: f64| -> Option<GateDesign> {
        let mix: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(a, b)| theta.cos() * a / un + theta.sin() * b / vn)
            .collect();
        finalize(tones, &mix, Family::CarNu).ok()
    };
    let objective = |theta: f64| candidate(theta).map_or(f64::INFINITY, |d| detuning_prefactor(&d, nbar));

    const COARSE: usize = 360;
    let step = PI / COARSE as f64;
    let (best_k, _) = (0..COARSE)
        .map(|k| (k, objective(k as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (k, j)| if j < acc.1 { (k, j) } else { acc });

    // golden-section refinement inside the neighbouring coarse cells
    let (mut lo, mut hi) = ((best_k as f64 - 1.0) * step, (best_k as f64 + 1.0) * step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = objective(x2);
        }
    }
    candidate(0.5 * (lo + hi)).ok_or(Error::NotNormalizable(f64::NAN))
}

/// Largest `N` accepted by the closed-form Cardioid amplitudes.
pub const CLOSED_FORM_MAX_TONES: usize = 20;

/// Closed-form amplitudes of Cardioid(1, 2, ..., N):
/// `r_j = (-1)^(N-j) N!/2^N sqrt(2 sqrt(pi) / ((N-1)! Gamma(N+1/2))) C(N-1, j-1)`.
pub fn cardioid_closed_form_amplitudes(n: usize) -> Result<Vec<f64>> {
    if !(1..=CLOSED_FORM_MAX_TONES).contains(&n) {
        return Err(Error::OutOfRange(format!(
            "closed-form Cardioid needs 1 <= N <= {CLOSED_FORM_MAX_TONES}, got {n}"
        )));
    }
    let nu = n as u32;
    let nf = n as f64;
    let ln_pref = ln_factorial(nu) - nf * 2f64.ln()
        + 0.5 * (2f64.ln() + 0.5 * PI.ln() - ln_factorial(nu - 1) - ln_gamma(nf + 0.5));
    let pref = ln_pref.exp();
    Ok((1..=nu)
        .map(|j| {
            let sign = if (nu - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * pref * binomial(nu - 1, j - 1)
        })
        .collect())
}

/// Gate time of Cardioid(1..N) relative to MS at the same total Rabi
/// frequency: `N^2 / (2N - 1)`.
pub fn gate_time_ratio(n: u32) -> f64 {
    assert!(n >= 1, "gate_time_ratio needs at least one tone");
    let n = n as f64;
    n * n / (2.0 * n - 1.0)
}
