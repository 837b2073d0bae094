//! Self-check suites run by `msgate verify`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, ErrorSetting};
use crate::design::{
    cardioid_closed_form_amplitudes, design_antioid, design_cardioid, design_carnu, design_ms,
    validate_tone_set, GateDesign, ToneIndexSet,
};
use crate::error::Result;
use crate::oracle::{self, SimConfig};
use crate::scan::{fit_scaling_exponent, run_scan, symmetric_log_grid, ScanSpec, ScanVariable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Quick,
    Full,
}

/// Deliberate defects used to check that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Scale every amplitude by 1.01 without renormalizing.
    BrokenNormalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: Level,
    pub fault: Option<Fault>,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn tones(v: &[i64]) -> ToneIndexSet {
    ToneIndexSet::new(v.to_vec()).expect("valid reference tones")
}

/// MS, Cardioid(1,2), Cardioid(2,3), Antioid(2,3), CarNu(2,3,7),
/// Cardioid(2,3,7) and Cardioid(2,3,7,8).
pub fn reference_designs() -> Vec<GateDesign> {
    vec![
        design_ms(),
        design_cardioid(&tones(&[1, 2])).expect("Cardioid(1,2)"),
        design_cardioid(&tones(&[2, 3])).expect("Cardioid(2,3)"),
        design_antioid(&tones(&[2, 3])).expect("Antioid(2,3)"),
        design_carnu(&tones(&[2, 3, 7])).expect("CarNu(2,3,7)"),
        design_cardioid(&tones(&[2, 3, 7])).expect("Cardioid(2,3,7)"),
        design_cardioid(&tones(&[2, 3, 7, 8])).expect("Cardioid(2,3,7,8)"),
    ]
}

fn inject(designs: Vec<GateDesign>, fault: Option<Fault>) -> Vec<GateDesign> {
    match fault {
        None => designs,
        Some(Fault::BrokenNormalization) => designs
            .into_iter()
            .map(|d| {
                let r = d.amplitudes().iter().map(|x| 1.01 * x).collect();
                d.with_raw_amplitudes(r).expect("same length")
            })
            .collect(),
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn normalization(designs: &[GateDesign]) -> CheckResult {
    let worst = designs
        .iter()
        .map(|d| (d.id(), (d.normalization() - 1.0).abs()))
        .fold((String::new(), 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    check(
        "normalization",
        worst.1 <= 1e-12,
        format!("max |sum r^2/n - 1| = {:.3e} ({})", worst.1, worst.0),
    )
}

fn closure(designs: &[GateDesign]) -> CheckResult {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for d in designs {
        let p = analytic::trajectory_point(d, 1.0, 0.0);
        let e = p.f.abs().max(p.g.abs()).max((p.a - FRAC_PI_2).abs());
        if e > worst {
            worst = e;
            at = d.id();
        }
    }
    check("closure", worst <= 1e-12, format!("max residual {worst:.3e} ({at})"))
}

fn closed_form() -> CheckResult {
    let mut worst = 0.0f64;
    for n in 2..=8usize {
        let solved = design_cardioid(&ToneIndexSet::consecutive(n).expect("consecutive"));
        let exact = cardioid_closed_form_amplitudes(n);
        match (solved, exact) {
            (Ok(s), Ok(e)) => {
                for (a, b) in s.amplitudes().iter().zip(&e) {
                    worst = worst.max((a - b).abs());
                }
            }
            _ => return check("closed_form_amplitudes", false, format!("N = {n} failed")),
        }
    }
    check("closed_form_amplitudes", worst <= 1e-9, format!("max deviation {worst:.3e}"))
}

fn admissibility() -> CheckResult {
    let bad = validate_tone_set(&tones(&[1, 2])).admissible;
    let good = validate_tone_set(&tones(&[2, 3, 7])).admissible;
    check(
        "admissibility",
        !bad && good,
        format!("{{1,2}} admissible = {bad}, {{2,3,7}} admissible = {good}"),
    )
}

fn exponents(designs: &[GateDesign]) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let grid = symmetric_log_grid(1e-3, 1e-2, 12);
    let find = |id: &str| designs.iter().find(|d| d.id() == id).cloned();
    let cases = [
        (ScanVariable::Timing, "MS", 2.0, 0.1),
        (ScanVariable::Timing, "CarNu(2,3,7)", 4.0, 0.2),
        (ScanVariable::Timing, "Cardioid(2,3,7)", 6.0, 0.3),
        (ScanVariable::Detuning, "MS", 2.0, 0.1),
        (ScanVariable::Detuning, "CarNu(2,3,7)", 2.0, 0.1),
    ];
    for (var, id, want, tol) in cases {
        let name = format!("{}_exponent_{id}", var.as_str());
        let Some(d) = find(id) else {
            out.push(check(&name, false, "design missing".into()));
            continue;
        };
        let spec = ScanSpec::new(var, grid.clone(), vec![d], 0.17);
        let res = run_scan(&spec).and_then(|rows| fit_scaling_exponent(&rows, id, spec.fit_window));
        out.push(match res {
            Ok(f) => check(&name, (f.slope - want).abs() <= tol, format!("slope {:.4} (want {want} +- {tol})", f.slope)),
            Err(e) => check(&name, false, e.to_string()),
        });
    }
    out
}

fn oracle_equivalence(designs: &[GateDesign]) -> CheckResult {
    let ids = ["MS", "Cardioid(2,3)", "Antioid(2,3)", "CarNu(2,3,7)"];
    let times = [0.25, 0.5, 0.75, 0.95, 1.0];
    let config = SimConfig::rwa(30);
    let mut worst = 0.0f64;
    for d in designs.iter().filter(|d| ids.contains(&d.id().as_str())) {
        for nbar in [0.0, 0.17, 2.0] {
            let err = ErrorSetting::thermal(nbar);
            let res: Result<Vec<_>> = oracle::thermal_average_at(d, &config, &err, &times);
            match res {
                Ok(rs) => {
                    for (t, r) in times.iter().zip(&rs) {
                        let a = analytic::populations(d, *t, &err);
                        worst = worst.max(a.max_population_diff(&r.populations));
                    }
                }
                Err(e) => return check("oracle_equivalence", false, format!("{} nbar={nbar}: {e}", d.id())),
            }
        }
    }
    check("oracle_equivalence", worst <= 1e-3, format!("max |dp| = {worst:.3e}"))
}

fn oracle_purity(designs: &[GateDesign]) -> CheckResult {
    let Some(d) = designs.iter().find(|d| d.id() == "Cardioid(2,3)") else {
        return check("oracle_purity", false, "design missing".into());
    };
    match oracle::thermal_average_at(d, &SimConfig::rwa(30), &ErrorSetting::thermal(0.17), &[1.0]) {
        Ok(r) => {
            let p = r[0].populations.purity;
            check("oracle_purity", (p - 1.0).abs() <= 1e-6, format!("purity {p:.9}"))
        }
        Err(e) => check("oracle_purity", false, e.to_string()),
    }
}

pub fn run_verify(level: Level, fault: Option<Fault>) -> VerifyReport {
    let designs = inject(reference_designs(), fault);
    let mut checks = vec![
        normalization(&designs),
        closure(&designs),
        closed_form(),
        admissibility(),
    ];
    checks.extend(exponents(&designs));
    if level == Level::Full {
        checks.push(oracle_equivalence(&designs));
        checks.push(oracle_purity(&designs));
    }
    VerifyReport {
        level,
        fault,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
