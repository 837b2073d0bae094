mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use msgate::design::{design_carnu_minimized, design_family, validate_tone_set, Family, GateDesign, ToneIndexSet};
use msgate::oracle::{Mode, SimConfig};
use msgate::scan::{self, Engine, ScanSpec, ScanVariable};
use msgate::verify::{self, Fault, Level};
use msgate::Error;

use manifest::RunManifest;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "msgate", version, about = "Design, simulate and verify multi-tone Molmer-Sorensen gates")]
struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Table format for evolve and scan outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Reserved; every computation is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for a gate design and write it as JSON.
    Design(DesignArgs),
    /// Population time series of a design file.
    Evolve(EvolveArgs),
    /// Run a scan spec and write tables and fits.
    Scan(ScanArgs),
    /// Run the self-check suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyArg {
    Ms,
    Cardioid,
    Antioid,
    Carnu,
    /// CarNu amplitudes found by minimizing the detuning prefactor.
    CarnuMin,
}

#[derive(Args, Debug, serde::Serialize)]
struct DesignArgs {
    #[arg(value_enum)]
    family: FamilyArg,
    /// Comma-separated tone indices, e.g. 2,3,7.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    tones: Vec<i64>,
    /// Write the design even if intermodulation products hit a sideband.
    #[arg(long)]
    allow_intermod: bool,
    /// Output file (default: <output-dir>/design_<family>_<tones>.json).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Mean phonon number used by carnu-min.
    #[arg(long, default_value_t = 0.17)]
    nbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum EngineArg {
    Analytic,
    Oracle,
    Both,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Analytic => Engine::Analytic,
            EngineArg::Oracle => Engine::Oracle,
            EngineArg::Both => Engine::Both,
        }
    }
}

#[derive(Args, Debug, serde::Serialize)]
struct EvolveArgs {
    /// Design JSON file.
    #[arg(long)]
    design: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Analytic)]
    engine: EngineArg,
    #[arg(long, default_value_t = 0.0)]
    nbar: f64,
    /// First time in units of T.
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    /// Last time in units of T.
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Explicit comma-separated times; overrides the range.
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    /// Fock cutoff of the oracle.
    #[arg(long, default_value_t = 30)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-7)]
    step_tolerance: f64,
    /// Include the off-resonant carrier term in the oracle.
    #[arg(long)]
    carrier: bool,
    /// Peak total Rabi frequency over trap frequency (carrier runs).
    #[arg(long)]
    omega_over_nu: Option<f64>,
    /// Trap frequency in units of the base detuning (carrier runs).
    #[arg(long)]
    nu: Option<f64>,
    /// Trap frequency nu / 2 pi in MHz (needs --gate-time-us).
    #[arg(long)]
    nu_mhz: Option<f64>,
    /// Gate time in microseconds.
    #[arg(long)]
    gate_time_us: Option<f64>,
    /// Lamb-Dicke parameter (carrier runs).
    #[arg(long)]
    eta: Option<f64>,
    /// Output file (default: <output-dir>/evolve.<format>).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, serde::Serialize)]
struct ScanArgs {
    /// Scan spec JSON file.
    spec: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum FaultArg {
    BrokenNormalization,
}

#[derive(Args, Debug, serde::Serialize)]
struct VerifyArgs {
    #[arg(value_enum, default_value_t = LevelArg::Quick)]
    level: LevelArg,
    /// Run the suites against a deliberately broken build.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum LevelArg {
    Quick,
    Full,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::EmptyToneSet
            | Error::ZeroTone
            | Error::DuplicateTone(_)
            | Error::TooFewTones { .. }
            | Error::LengthMismatch { .. }
            | Error::NormalizationViolated(_)
            | Error::OutOfRange(_)
            | Error::InvalidScan(_)
            | Error::AsymmetricGrid(_)
            | Error::UnknownDesign(_)
            | Error::Serialization(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn finish(mut manifest: RunManifest, outputs: Vec<PathBuf>) -> Result<(), Failure> {
    manifest.outputs = outputs;
    manifest.write_all().map_err(|e| Failure::usage(format!("writing manifest: {e}")))?;
    for out in &manifest.outputs {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn globals(cli: &Cli) -> Value {
    json!({
        "output_dir": cli.output_dir,
        "format": cli.format,
        "seed": cli.seed,
        "threads": cli.threads,
    })
}

fn cmd_design(cli: &Cli, args: &DesignArgs) -> Result<(), Failure> {
    let design = match args.family {
        FamilyArg::Ms => design_family(Family::Ms, &args.tones)?,
        FamilyArg::Cardioid => design_family(Family::Cardioid, &args.tones)?,
        FamilyArg::Antioid => design_family(Family::Antioid, &args.tones)?,
        FamilyArg::Carnu => design_family(Family::CarNu, &args.tones)?,
        FamilyArg::CarnuMin => design_carnu_minimized(&ToneIndexSet::new(args.tones.clone())?, args.nbar)?,
    };
    let report = validate_tone_set(design.tones());
    let violations: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    if !report.admissible && !args.allow_intermod {
        return Err(Failure::usage(format!(
            "tone set {{{}}} is inadmissible: {} (pass --allow-intermod to keep it)",
            design.tones(),
            violations.join(", ")
        )));
    }
    let mut doc = serde_json::to_value(&design).map_err(|e| Failure::usage(e.to_string()))?;
    doc["validation"] = json!({ "admissible": report.admissible, "violations": violations });
    let path = args.output.clone().unwrap_or_else(|| {
        let tones = design.tones().as_slice().iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-");
        cli.output_dir.join(format!("design_{}_{tones}.json", design.family().as_str()))
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::usage(e.to_string()))?;
    write_file(&path, text.as_bytes())?;
    println!("{}: n = {:?}, r = {:?}", design.id(), design.tones().as_slice(), design.amplitudes());
    finish(
        RunManifest::new("design", json!({ "global": globals(cli), "args": args })),
        vec![path],
    )
}

fn load_design(path: &Path) -> Result<GateDesign, Failure> {
    Ok(GateDesign::from_json(&read_file(path)?)?)
}

fn evolve_times(args: &EvolveArgs) -> Result<Vec<f64>, Failure> {
    if !args.times.is_empty() {
        return Ok(args.times.clone());
    }
    if args.points < 2 || !(args.t_end > args.t_start) {
        return Err(Failure::usage("need --points >= 2 and --t-end > --t-start"));
    }
    let n = args.points - 1;
    Ok((0..=n)
        .map(|k| args.t_start + (args.t_end - args.t_start) * k as f64 / n as f64)
        .collect())
}

fn oracle_config(design: &GateDesign, args: &EvolveArgs) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig {
        step_tolerance: args.step_tolerance,
        ..SimConfig::rwa(args.n_max)
    };
    if !args.carrier {
        return Ok(cfg);
    }
    if let Some(w) = args.omega_over_nu {
        cfg = SimConfig {
            step_tolerance: args.step_tolerance,
            ..SimConfig::for_carrier(design, w, args.n_max)?
        };
        return Ok(cfg);
    }
    let nu = match (args.nu, args.nu_mhz, args.gate_time_us) {
        (Some(nu), None, _) => nu,
        // nu / xi0 = (nu / 2 pi) T
        (None, Some(mhz), Some(us)) => mhz * us,
        _ => return Err(Failure::usage("carrier runs need --omega-over-nu, --nu, or --nu-mhz with --gate-time-us")),
    };
    let eta = args.eta.ok_or_else(|| Failure::usage("--nu and --nu-mhz need --eta"))?;
    cfg.mode = Mode::FullWithCarrier;
    cfg.nu = nu;
    cfg.eta = eta;
    cfg.validate(design)?;
    Ok(cfg)
}

fn write_table(cli: &Cli, path: &Path, rows: &[scan::ScanRow]) -> Result<(), Failure> {
    match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            scan::write_csv(rows, &mut buf)?;
            write_file(path, &buf)
        }
        Format::Json => write_file(path, scan::to_json(rows)?.as_bytes()),
    }
}

fn extension(cli: &Cli) -> &'static str {
    match cli.format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn report_flagged(rows: &[scan::ScanRow]) {
    let flagged = rows.iter().filter(|r| !r.error_flag.is_empty()).count();
    if flagged > 0 {
        eprintln!("warning: {flagged} of {} rows carry an error flag", rows.len());
    }
}

fn cmd_evolve(cli: &Cli, args: &EvolveArgs) -> Result<(), Failure> {
    let design = load_design(&args.design)?;
    let times = evolve_times(args)?;
    let oracle = oracle_config(&design, args)?;
    let spec = ScanSpec {
        name: Some("evolve".into()),
        variable: ScanVariable::TimeEvolution,
        grid: times,
        designs: vec![design.into()],
        nbar: args.nbar,
        engine: args.engine.into(),
        fit_window: scan::DEFAULT_FIT_WINDOW,
        oracle,
    };
    let rows = scan::run_scan(&spec)?;
    report_flagged(&rows);
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| cli.output_dir.join(format!("evolve.{}", extension(cli))));
    write_table(cli, &path, &rows)?;
    finish(
        RunManifest::new("evolve", json!({ "global": globals(cli), "args": args, "spec": spec })),
        vec![path],
    )
}

fn cmd_scan(cli: &Cli, args: &ScanArgs) -> Result<(), Failure> {
    let text = read_file(&args.spec)?;
    let spec = ScanSpec::from_json(&text).map_err(|e| {
        Failure::usage(format!("{e}\nusage: msgate scan <spec.json>; the spec needs a nonempty, strictly increasing grid"))
    })?;
    let rows = scan::run_scan(&spec)?;
    report_flagged(&rows);
    let stem = spec.name.clone().unwrap_or_else(|| {
        args.spec
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scan".into())
    });
    let table = cli.output_dir.join(format!("{stem}.{}", extension(cli)));
    write_table(cli, &table, &rows)?;
    let mut outputs = vec![table];
    if matches!(spec.variable, ScanVariable::Timing | ScanVariable::Detuning) {
        let summary = scan::summarize(&spec, &rows);
        for f in &summary.fits {
            println!("{}: slope {:.4} (r2 {:.6})", f.design, f.slope, f.r2);
        }
        for p in &summary.prefactors {
            println!("{}: quadratic prefactor {:.4e}", p.design, p.prefactor);
        }
        let fits = cli.output_dir.join(format!("{stem}_fits.json"));
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::usage(e.to_string()))?;
        write_file(&fits, text.as_bytes())?;
        outputs.push(fits);
    }
    finish(
        RunManifest::new("scan", json!({ "global": globals(cli), "spec_file": args.spec, "spec": spec })),
        outputs,
    )
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs) -> Result<(), Failure> {
    let level = match args.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let fault = args.inject_fault.map(|f| match f {
        FaultArg::BrokenNormalization => Fault::BrokenNormalization,
    });
    let report = verify::run_verify(level, fault);
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let name = match level {
        Level::Quick => "verify_quick.json",
        Level::Full => "verify_full.json",
    };
    let path = cli.output_dir.join(name);
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::usage(e.to_string()))?;
    write_file(&path, text.as_bytes())?;
    finish(
        RunManifest::new("verify", json!({ "global": globals(cli), "args": args })),
        vec![path],
    )?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("verification failed: {}", failed.join(", ")),
        })
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Design(a) => cmd_design(cli, a),
        Command::Evolve(a) => cmd_evolve(cli, a),
        Command::Scan(a) => cmd_scan(cli, a),
        Command::Verify(a) => cmd_verify(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
