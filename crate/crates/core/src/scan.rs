//! Parameter sweeps over designs, scaling-exponent fits and quadratic
//! prefactors.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, ErrorSetting, PopulationQuad};
use crate::design::{design_family, Family, GateDesign};
use crate::error::{Error, Result};
use crate::oracle::{self, SimConfig};

/// Infidelities at or below this are excluded from log-log fits.
pub const INFIDELITY_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 5;
pub const DEFAULT_FIT_WINDOW: [f64; 2] = [1e-3, 1e-2];

/// CSV header of a scan table.
pub const CSV_COLUMNS: [&str; 11] = [
    "design", "family", "variable", "value", "engine", "fidelity", "purity", "pSS", "pSDDS", "pDD",
    "error_flag",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVariable {
    /// Relative gate-time error `dT / T`, evaluated at nominal `t = T`.
    Timing,
    /// Trap-frequency error `dnu / xi0`, evaluated at `t = T`.
    Detuning,
    /// Peak total Rabi frequency over the trap frequency, at `t = T`.
    Carrier,
    /// Time `t / T` without control errors.
    TimeEvolution,
}

impl ScanVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanVariable::Timing => "timing",
            ScanVariable::Detuning => "detuning",
            ScanVariable::Carrier => "carrier",
            ScanVariable::TimeEvolution => "time_evolution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Analytic,
    Oracle,
    Both,
}

/// A design given in full or by family and tones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DesignSpec {
    Full(GateDesign),
    Named {
        family: Family,
        #[serde(default)]
        n: Vec<i64>,
    },
}

impl DesignSpec {
    pub fn resolve(&self) -> Result<GateDesign> {
        match self {
            DesignSpec::Full(d) => Ok(d.clone()),
            DesignSpec::Named { family, n } => design_family(*family, n),
        }
    }
}

impl From<GateDesign> for DesignSpec {
    fn from(d: GateDesign) -> Self {
        DesignSpec::Full(d)
    }
}

fn default_window() -> [f64; 2] {
    DEFAULT_FIT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub variable: ScanVariable,
    pub grid: Vec<f64>,
    pub designs: Vec<DesignSpec>,
    #[serde(default)]
    pub nbar: f64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "default_window")]
    pub fit_window: [f64; 2],
    #[serde(default)]
    pub oracle: SimConfig,
}

impl ScanSpec {
    pub fn new(variable: ScanVariable, grid: Vec<f64>, designs: Vec<GateDesign>, nbar: f64) -> Self {
        ScanSpec {
            name: None,
            variable,
            grid,
            designs: designs.into_iter().map(DesignSpec::from).collect(),
            nbar,
            engine: Engine::Analytic,
            fit_window: DEFAULT_FIT_WINDOW,
            oracle: SimConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ScanSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidScan("grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScan("grid contains non-finite values".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScan("grid must be strictly increasing".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::InvalidScan("no designs".into()));
        }
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return Err(Error::InvalidScan(format!("nbar = {} must be >= 0", self.nbar)));
        }
        let [lo, hi] = self.fit_window;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidScan(format!("fit window [{lo}, {hi}] must satisfy 0 < lo < hi")));
        }
        match self.variable {
            ScanVariable::TimeEvolution if self.grid[0] < 0.0 => {
                Err(Error::InvalidScan("times must be >= 0".into()))
            }
            ScanVariable::Carrier if self.grid[0] <= 0.0 => {
                Err(Error::InvalidScan("omega_over_nu values must be > 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn resolve_designs(&self) -> Result<Vec<GateDesign>> {
        self.designs.iter().map(DesignSpec::resolve).collect()
    }
}

/// One line of a scan table. Numeric fields are `None` on failed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub design: String,
    pub family: String,
    pub variable: String,
    pub value: f64,
    pub engine: String,
    pub fidelity: Option<f64>,
    pub purity: Option<f64>,
    #[serde(rename = "pSS")]
    pub p_ss: Option<f64>,
    #[serde(rename = "pSDDS")]
    pub p_sdds: Option<f64>,
    #[serde(rename = "pDD")]
    pub p_dd: Option<f64>,
    pub error_flag: String,
}

impl ScanRow {
    fn from_result(design: &GateDesign, variable: ScanVariable, value: f64, engine: &str, r: &Result<PopulationQuad>) -> Self {
        let (q, flag) = match r {
            Ok(q) => (Some(*q), String::new()),
            Err(e) => (None, e.to_string()),
        };
        ScanRow {
            design: design.id(),
            family: design.family().as_str().to_string(),
            variable: variable.as_str().to_string(),
            value,
            engine: engine.to_string(),
            fidelity: q.map(|q| q.fidelity),
            purity: q.map(|q| q.purity),
            p_ss: q.map(|q| q.p_ss),
            p_sdds: q.map(|q| q.p_sd + q.p_ds),
            p_dd: q.map(|q| q.p_dd),
            error_flag: flag,
        }
    }

    fn diff(a: &ScanRow, b: &ScanRow) -> Self {
        let d = |x: Option<f64>, y: Option<f64>| Some((x? - y?).abs());
        let flag = match (a.error_flag.is_empty(), b.error_flag.is_empty()) {
            (true, true) => String::new(),
            _ => format!("{} failed", if a.error_flag.is_empty() { &b.engine } else { &a.engine }),
        };
        ScanRow {
            engine: "diff".to_string(),
            fidelity: d(a.fidelity, b.fidelity),
            purity: d(a.purity, b.purity),
            p_ss: d(a.p_ss, b.p_ss),
            p_sdds: d(a.p_sdds, b.p_sdds),
            p_dd: d(a.p_dd, b.p_dd),
            error_flag: flag,
            ..a.clone()
        }
    }

    pub fn infidelity(&self) -> Option<f64> {
        self.fidelity.map(|f| 1.0 - f)
    }

    pub fn impurity(&self) -> Option<f64> {
        self.purity.map(|p| 1.0 - p)
    }
}

fn analytic_point(design: &GateDesign, variable: ScanVariable, value: f64, nbar: f64) -> Result<PopulationQuad> {
    let err = |dt_rel, dnu_rel| ErrorSetting { dt_rel, dnu_rel, nbar };
    Ok(match variable {
        ScanVariable::Timing => analytic::populations(design, 1.0, &err(value, 0.0)),
        ScanVariable::Detuning => analytic::populations(design, 1.0, &err(0.0, value)),
        ScanVariable::TimeEvolution => analytic::populations(design, value, &err(0.0, 0.0)),
        ScanVariable::Carrier => {
            // sideband populations are unaffected; the fidelity column holds
            // the first-order carrier coupling factor
            let cfg = SimConfig::for_carrier(design, value, oracle::CARRIER_N_MAX)?;
            let mut q = analytic::populations(design, 1.0, &err(0.0, 0.0));
            q.fidelity = analytic::carrier_series(design, value, cfg.nu, 1.0)?;
            q
        }
    })
}

fn oracle_points(design: &GateDesign, spec: &ScanSpec, values: &[f64]) -> Vec<Result<PopulationQuad>> {
    let nbar = spec.nbar;
    let single = |cfg: &SimConfig, err: ErrorSetting, t: f64| -> Result<PopulationQuad> {
        let mut r = oracle::thermal_average_at(design, cfg, &err, &[t])?;
        Ok(r.pop().expect("one time").populations)
    };
    match spec.variable {
        ScanVariable::TimeEvolution => {
            match oracle::thermal_average_at(design, &spec.oracle, &ErrorSetting::thermal(nbar), values) {
                Ok(rs) => rs.into_iter().map(|r| Ok(r.populations)).collect(),
                Err(e) => values.iter().map(|_| Err(e.clone())).collect(),
            }
        }
        ScanVariable::Timing => values
            .par_iter()
            .map(|&v| single(&spec.oracle, ErrorSetting { dt_rel: v, dnu_rel: 0.0, nbar }, 1.0))
            .collect(),
        ScanVariable::Detuning => values
            .par_iter()
            .map(|&v| single(&spec.oracle, ErrorSetting { dt_rel: 0.0, dnu_rel: v, nbar }, 1.0))
            .collect(),
        ScanVariable::Carrier => values
            .par_iter()
            .map(|&v| {
                let base = SimConfig::for_carrier(design, v, spec.oracle.n_max)?;
                let cfg = SimConfig {
                    step_tolerance: spec.oracle.step_tolerance,
                    carrier_model: spec.oracle.carrier_model,
                    carrier_phases: spec.oracle.carrier_phases.clone(),
                    ..base
                };
                single(&cfg, ErrorSetting::thermal(nbar), 1.0)
            })
            .collect(),
    }
}

fn design_rows(design: &GateDesign, spec: &ScanSpec) -> Vec<ScanRow> {
    let var = spec.variable;
    let analytic_rows = || -> Vec<ScanRow> {
        spec.grid
            .iter()
            .map(|&v| ScanRow::from_result(design, var, v, "analytic", &analytic_point(design, var, v, spec.nbar)))
            .collect()
    };
    let oracle_rows = || -> Vec<ScanRow> {
        oracle_points(design, spec, &spec.grid)
            .iter()
            .zip(&spec.grid)
            .map(|(r, &v)| ScanRow::from_result(design, var, v, "oracle", r))
            .collect()
    };
    match spec.engine {
        Engine::Analytic => analytic_rows(),
        Engine::Oracle => oracle_rows(),
        Engine::Both => {
            let a = analytic_rows();
            let o = oracle_rows();
            a.into_iter()
                .zip(o)
                .flat_map(|(a, o)| {
                    let d = ScanRow::diff(&a, &o);
                    [a, o, d]
                })
                .collect()
        }
    }
}

/// Run a scan. Rows are ordered by design, then grid value, then engine
/// (analytic, oracle, diff) regardless of how the work was scheduled.
pub fn run_scan(spec: &ScanSpec) -> Result<Vec<ScanRow>> {
    spec.validate()?;
    let designs = spec.resolve_designs()?;
    let per_design: Vec<Vec<ScanRow>> = designs.par_iter().map(|d| design_rows(d, spec)).collect();
    Ok(per_design.into_iter().flatten().collect())
}

/// As [`run_scan`] on a dedicated pool of `threads` workers.
pub fn run_scan_with_threads(spec: &ScanSpec, threads: usize) -> Result<Vec<ScanRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidScan(e.to_string()))?;
    pool.install(|| run_scan(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitQuantity {
    Infidelity,
    Impurity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub design: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: [f64; 2],
}

fn engine_rows<'a>(rows: &'a [ScanRow], design: &str) -> Result<Vec<&'a ScanRow>> {
    let of_design: Vec<&ScanRow> = rows.iter().filter(|r| r.design == design).collect();
    if of_design.is_empty() {
        return Err(Error::UnknownDesign(design.to_string()));
    }
    // prefer analytic rows, fall back to oracle rows
    for engine in ["analytic", "oracle"] {
        let sel: Vec<&ScanRow> = of_design.iter().copied().filter(|r| r.engine == engine).collect();
        if !sel.is_empty() {
            return Ok(sel);
        }
    }
    Err(Error::UnknownDesign(design.to_string()))
}

/// Least-squares slope of `log(1 - F)` against `log|value|` over rows with
/// `|value|` inside `window`.
pub fn fit_scaling_exponent(rows: &[ScanRow], design: &str, window: [f64; 2]) -> Result<FitResult> {
    fit_quantity(rows, design, window, FitQuantity::Infidelity)
}

pub fn fit_quantity(rows: &[ScanRow], design: &str, window: [f64; 2], quantity: FitQuantity) -> Result<FitResult> {
    let sel = engine_rows(rows, design)?;
    let pts: Vec<(f64, f64)> = sel
        .iter()
        .filter(|r| r.value.abs() >= window[0] && r.value.abs() <= window[1])
        .filter_map(|r| {
            let y = match quantity {
                FitQuantity::Infidelity => r.infidelity()?,
                FitQuantity::Impurity => r.impurity()?,
            };
            (y > INFIDELITY_FLOOR).then(|| (r.value.abs().ln(), y.ln()))
        })
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints(pts.len()));
    }
    let (slope, intercept, r2) = linear_fit(&pts);
    Ok(FitResult {
        design: design.to_string(),
        slope,
        intercept,
        r2,
        window,
    })
}

fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Coefficient `c` of `1 - F ~ c x^2` at `x = 0`: central difference on the
/// innermost ring of a symmetric grid, Richardson-refined with the next
/// ring when there is one.
pub fn quadratic_prefactor(rows: &[ScanRow], design: &str) -> Result<f64> {
    quadratic_prefactor_of(rows, design, FitQuantity::Infidelity)
}

pub fn quadratic_prefactor_of(rows: &[ScanRow], design: &str, quantity: FitQuantity) -> Result<f64> {
    let sel = engine_rows(rows, design)?;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for r in sel {
        let y = match quantity {
            FitQuantity::Infidelity => r.infidelity(),
            FitQuantity::Impurity => r.impurity(),
        };
        match y {
            Some(y) => pts.push((r.value, y)),
            None => return Err(Error::InvalidScan(format!("row at {} failed: {}", r.value, r.error_flag))),
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = pts.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    let tol = 1e-12 * scale.max(1e-300);
    let find = |x: f64| pts.iter().find(|p| (p.0 - x).abs() <= tol).map(|p| p.1);
    let f0 = find(0.0).ok_or_else(|| Error::AsymmetricGrid("grid does not contain 0".into()))?;
    for p in &pts {
        if find(-p.0).is_none() {
            return Err(Error::AsymmetricGrid(format!("{} has no mirror value", p.0)));
        }
    }
    let mut rings: Vec<f64> = pts.iter().map(|p| p.0).filter(|&x| x > tol).collect();
    rings.dedup();
    let second = |h: f64| (find(h).unwrap() + find(-h).unwrap() - 2.0 * f0) / (2.0 * h * h);
    match rings.as_slice() {
        [] => Err(Error::AsymmetricGrid("need at least one nonzero ring".into())),
        [h] => Ok(second(*h)),
        [h1, h2, ..] => {
            let (c1, c2) = (second(*h1), second(*h2));
            Ok((h2 * h2 * c1 - h1 * h1 * c2) / (h2 * h2 - h1 * h1))
        }
    }
}

pub fn write_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ScanRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn to_json(rows: &[ScanRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)?)
}

/// Infidelity and impurity fits plus quadratic prefactors for every design
/// of an error scan; failures are recorded instead of raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub fits: Vec<FitResult>,
    pub purity_fits: Vec<FitResult>,
    pub prefactors: Vec<Prefactor>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prefactor {
    pub design: String,
    pub prefactor: f64,
}

pub fn summarize(spec: &ScanSpec, rows: &[ScanRow]) -> ScanSummary {
    let mut summary = ScanSummary {
        fits: Vec::new(),
        purity_fits: Vec::new(),
        prefactors: Vec::new(),
        failures: Vec::new(),
    };
    if !matches!(spec.variable, ScanVariable::Timing | ScanVariable::Detuning) {
        return summary;
    }
    let mut ids: Vec<String> = Vec::new();
    for r in rows {
        if !ids.contains(&r.design) {
            ids.push(r.design.clone());
        }
    }
    for id in &ids {
        match fit_quantity(rows, id, spec.fit_window, FitQuantity::Infidelity) {
            Ok(f) => summary.fits.push(f),
            Err(e) => summary.failures.push(format!("{id} infidelity fit: {e}")),
        }
        match fit_quantity(rows, id, spec.fit_window, FitQuantity::Impurity) {
            Ok(f) => summary.purity_fits.push(f),
            Err(e) => summary.failures.push(format!("{id} purity fit: {e}")),
        }
        match quadratic_prefactor(rows, id) {
            Ok(p) => summary.prefactors.push(Prefactor {
                design: id.clone(),
                prefactor: p,
            }),
            Err(e) => summary.failures.push(format!("{id} prefactor: {e}")),
        }
    }
    summary
}

/// `n` log-spaced magnitudes in `[lo, hi]`, mirrored about zero and with 0
/// included.
pub fn symmetric_log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mags: Vec<f64> = (0..n)
        .map(|k| {
            let s = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
            (lo.ln() + s * (hi.ln() - lo.ln())).exp()
        })
        .collect();
    let mut g: Vec<f64> = mags.iter().rev().map(|m| -m).collect();
    g.push(0.0);
    g.extend(mags);
    g
}
