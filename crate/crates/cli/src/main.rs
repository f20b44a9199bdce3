mod args;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use paritysim::calibration::{fit_readout, simulate_repeated_readout, FitOptions, NoiseParams, ReadoutRecords, PARAM_NAMES};
use paritysim::experiments::{
    nchv_bound, run_ghz_generation, run_nci, run_single_shot_ghz, run_zeno_study, BarRow, EngineConfig, NCHV_BOUND,
    NCHV_OBSERVABLES,
};
use paritysim::sequencer::{Engine, Mode};
use serde::Serialize;
use sha2::{Digest, Sha256};

use args::{CalibrateArgs, Cli, Command, Common, Format, ZenoArgs};
use report::{fixed, fixed_opt, RunManifest, TIMESTAMP_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => format!("usage error: {m}"),
            Failure::Config(m) => format!("config error: {m}"),
            Failure::Numerical(m) => format!("numerical error: {m}"),
        }
    }
}

impl From<paritysim::Error> for Failure {
    fn from(e: paritysim::Error) -> Self {
        use paritysim::Error as E;
        match e {
            E::Config { .. } | E::Probability { .. } | E::InvalidReadout(_) => Failure::Config(e.to_string()),
            E::TooFewSamples { .. } | E::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    match &cli.command {
        Command::Ghz(c) => ghz(c),
        Command::SingleShot(c) => single_shot(c),
        Command::Nci(c) => nci(c),
        Command::Zeno(z) => zeno(z),
        Command::Calibrate(a) => calibrate(a),
        Command::NchvBound(c) => nchv(c),
        Command::ValidateConfig(c) => validate(c),
    }
}

/// Config, manifest and engine settings shared by every subcommand.
struct Setup {
    params: NoiseParams,
    manifest: RunManifest,
    engine: EngineConfig,
}

fn setup(command: &str, c: &Common, mode: Option<Mode>) -> Outcome<Setup> {
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let engine: Engine = c.engine.into();
    if engine == Engine::Sampled && c.trials.is_none() {
        return Err(Failure::Usage("--engine sampled requires --trials".into()));
    }
    if c.trials == Some(0) {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    let (params, sha) = match &c.config {
        Some(path) => {
            let (p, h) = load(path)?;
            (p, Some(h))
        }
        None => (NoiseParams::default(), None),
    };
    let timestamp = match std::env::var(TIMESTAMP_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| Failure::Usage(format!("{TIMESTAMP_ENV}={v:?} is not a Unix time")))?,
        ),
        Err(_) => None,
    };
    let manifest = RunManifest {
        command: command.to_string(),
        config_path: c.config.as_ref().map(|p| p.display().to_string()),
        config_sha256: sha,
        seed: c.seed,
        engine: engine_name(engine).to_string(),
        mode: mode.map(|m| m.to_string()),
        trials: c.trials,
        timestamp,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(Setup {
        params,
        manifest,
        engine: EngineConfig {
            engine,
            trials: c.trials,
            seed: c.seed,
        },
    })
}

fn load(path: &Path) -> Outcome<(NoiseParams, String)> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let hash = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let text = String::from_utf8(bytes).map_err(|_| Failure::Config(format!("{} is not UTF-8", path.display())))?;
    let params = NoiseParams::from_toml_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    params.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok((params, hash))
}

fn engine_name(e: Engine) -> &'static str {
    match e {
        Engine::Exact => "exact",
        Engine::Sampled => "sampled",
    }
}

fn emit(c: &Common, body: String) -> Outcome<()> {
    match &c.out {
        Some(path) => write_file(path, body.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Usage(format!("writing report: {e}")))
        }
    }
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Outcome<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Renders a report in the requested format.
fn render<T: Serialize>(
    c: &Common,
    m: &RunManifest,
    result: &T,
    bars: &[BarRow],
    text: impl FnOnce() -> String,
) -> Outcome<()> {
    let body = match c.format {
        Format::Json => report::json(m, result),
        Format::Csv => report::csv(m, bars),
        Format::Text => text(),
    };
    emit(c, body)
}

fn ghz(c: &Common) -> Outcome<()> {
    let mode = c.mode.map_or(Mode::Branched, Mode::from);
    let s = setup("ghz", c, Some(mode))?;
    let r = run_ghz_generation(&s.params, mode, &s.engine)?;
    render(c, &s.manifest, &r, &r.bars(), || {
        let rows: Vec<Vec<String>> = r
            .branches
            .iter()
            .map(|b| {
                vec![
                    b.outcome.clone(),
                    fixed(b.probability),
                    fixed_opt(b.probability_se),
                    fixed(b.fidelity),
                    fixed_opt(b.fidelity_se),
                    fixed(b.raw_fidelity),
                ]
            })
            .collect();
        let footer = vec![
            format!("average fidelity {} ± {}", fixed(r.average_fidelity), fixed_opt(r.average_fidelity_se)),
            format!("average raw fidelity {}", fixed(r.average_raw_fidelity)),
            format!("best branch {}", r.best_branch),
        ];
        report::text(
            &s.manifest,
            &["outcome", "probability", "se", "fidelity", "se", "raw_fidelity"],
            &rows,
            &footer,
        )
    })
}

fn single_shot(c: &Common) -> Outcome<()> {
    let mode = c.mode.map_or(Mode::Branched, Mode::from);
    let s = setup("single-shot", c, Some(mode))?;
    let r = run_single_shot_ghz(&s.params, mode, &s.engine)?;
    render(c, &s.manifest, &r, &r.bars(), || {
        let rows: Vec<Vec<String>> = r
            .outcomes
            .iter()
            .map(|o| vec![o.label.clone(), fixed(o.value), fixed_opt(o.standard_error)])
            .collect();
        let mut footer: Vec<String> = ["P1", "P2", "P3", "P4"]
            .iter()
            .zip(r.parity_means)
            .map(|(l, v)| format!("<{l}> {}", fixed(v)))
            .collect();
        footer.push(format!("<P1 P2 P3 P4> {} ± {}", fixed(r.product), fixed_opt(r.standard_error)));
        report::text(&s.manifest, &["outcomes", "probability", "se"], &rows, &footer)
    })
}

fn nci(c: &Common) -> Outcome<()> {
    if c.mode == Some(args::ModeArg::Branched) {
        return Err(Failure::Usage("nci always runs the phase-echoed sequencer; drop --mode branched".into()));
    }
    let s = setup("nci", c, Some(Mode::Echoed))?;
    let r = run_nci(&s.params, &s.engine)?;
    render(c, &s.manifest, &r, &r.bars(), || {
        let rows: Vec<Vec<String>> = r
            .contexts
            .iter()
            .map(|x| vec![x.id.clone(), x.observables.join(" "), fixed(x.mean), fixed_opt(x.standard_error)])
            .collect();
        let mut footer = vec![format!("C = {} ± {}", fixed(r.c_value), fixed_opt(r.standard_error))];
        if let Some(p) = r.p_value {
            footer.push(format!("p-value (NCHV bound {NCHV_BOUND}) {p:.3e}"));
        }
        report::text(&s.manifest, &["context", "sequence", "mean", "se"], &rows, &footer)
    })
}

fn zeno(z: &ZenoArgs) -> Outcome<()> {
    let c = &z.common;
    let s = setup("zeno", c, None)?;
    let reports = z
        .measurements
        .iter()
        .map(|&m| run_zeno_study(&s.params, m, z.time_ms, &s.engine))
        .collect::<paritysim::Result<Vec<_>>>()?;
    let mut bars = Vec::new();
    if let Some(first) = reports.first() {
        bars.push(BarRow {
            label: "unmeasured".into(),
            value: first.fidelity_unmeasured,
            standard_error: first.fidelity_unmeasured_se,
        });
    }
    bars.extend(reports.iter().map(|r| BarRow {
        label: format!("m={}", r.measurements),
        value: r.fidelity_measured,
        standard_error: r.fidelity_measured_se,
    }));
    render(c, &s.manifest, &reports, &bars, || {
        let rows: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                vec![
                    r.measurements.to_string(),
                    fixed(r.fidelity_measured),
                    fixed_opt(r.fidelity_measured_se),
                    fixed(r.fidelity_unmeasured),
                    fixed_opt(r.fidelity_unmeasured_se),
                ]
            })
            .collect();
        report::text(
            &s.manifest,
            &["measurements", "fidelity", "se", "unmeasured", "se"],
            &rows,
            &[format!("total time {} ms", z.time_ms)],
        )
    })
}

#[derive(Serialize)]
struct CalibrationResult {
    source: String,
    /// Generating factors when the records were simulated.
    truth: Option<paritysim::instrument::ReadoutFactors>,
    fit: paritysim::calibration::FitReport,
}

fn calibrate(a: &CalibrateArgs) -> Outcome<()> {
    let c = &a.common;
    if c.engine != args::EngineArg::Exact {
        return Err(Failure::Usage("calibrate fits records; --engine does not apply".into()));
    }
    let s = setup("calibrate", c, None)?;
    let (records, source, truth) = match &a.records {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            (ReadoutRecords::read_csv(file)?, path.display().to_string(), None)
        }
        None => {
            let n = c.trials.unwrap_or(200_000);
            let recs = simulate_repeated_readout(&s.params, n, a.prepared, c.seed)?;
            if let Some(path) = &a.save_records {
                let mut buf = Vec::new();
                recs.write_csv(&mut buf)?;
                write_file(path, &buf)?;
            }
            (recs, "simulated".to_string(), s.params.readout.factors())
        }
    };
    let opts = FitOptions {
        restarts: a.restarts,
        seed: c.seed,
        ..FitOptions::default()
    };
    let fit = fit_readout(&records, &s.params.readout, s.params.init_fid, &opts)?;
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    let values = fit.as_array();
    let bars: Vec<BarRow> = PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| BarRow {
            label: name.to_string(),
            value: values[i],
            standard_error: fit.std_errors.map(|e| e[i]),
        })
        .collect();
    let result = CalibrationResult { source, truth, fit };
    render(c, &s.manifest, &result, &bars, || {
        let t = result.truth.map(|f| [f.q0, f.q1, f.f0, f.f1]);
        let rows: Vec<Vec<String>> = bars
            .iter()
            .enumerate()
            .map(|(i, b)| {
                vec![
                    b.label.clone(),
                    fixed(b.value),
                    fixed_opt(b.standard_error),
                    fixed_opt(t.map(|t| t[i])),
                ]
            })
            .collect();
        let mut footer = vec![
            format!("records {} ({})", result.fit.n_trials, result.source),
            format!("log-likelihood {:.6}", result.fit.log_likelihood),
            format!("converged {}", result.fit.converged),
        ];
        footer.extend(result.fit.warnings.iter().map(|w| format!("warning: {w}")));
        report::text(&s.manifest, &["parameter", "fit", "se", "truth"], &rows, &footer)
    })
}

fn nchv(c: &Common) -> Outcome<()> {
    let s = setup("nchv-bound", c, None)?;
    let r = nchv_bound();
    let bars: Vec<BarRow> = NCHV_OBSERVABLES
        .iter()
        .zip(r.assignment)
        .map(|(name, v)| BarRow {
            label: name.to_string(),
            value: v as f64,
            standard_error: None,
        })
        .collect();
    render(c, &s.manifest, &r, &bars, || {
        let mut out = s.manifest.text_header();
        out.push_str(&format!("{}\n", r.bound));
        for (name, v) in NCHV_OBSERVABLES.iter().zip(r.assignment) {
            out.push_str(&format!("{name} {v:+}\n"));
        }
        out
    })
}

fn validate(c: &Common) -> Outcome<()> {
    let Some(path) = &c.config else {
        return Err(Failure::Usage(format!(
            "validate-config needs --config or {}",
            paritysim::calibration::CONFIG_ENV
        )));
    };
    let s = setup("validate-config", c, None)?;
    #[derive(Serialize)]
    struct Valid {
        valid: bool,
        resolved: String,
    }
    let resolved = s.params.to_toml_string();
    let v = Valid { valid: true, resolved };
    render(c, &s.manifest, &v, &[], || {
        format!("{}ok {}\n{}", s.manifest.text_header(), path.display(), v.resolved)
    })
}
