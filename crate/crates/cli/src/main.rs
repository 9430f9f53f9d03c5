//! `slat`: batch front-end over the model library. One command per
//! process; reports are deterministic for a fixed config + flags + version,
//! and every run emits a manifest listing its outputs.
//!
//! Exit codes: 0 ok, 1 semantic or assertion failure, 2 I/O or parse
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use slat_core::config::{self, Diagnostic, GroupConfig, ModelConfig};
use slat_core::euclid::Assembled;
use slat_core::fingroup::{generation_check, run_identity_suite, SuiteBudget};
use slat_core::report::{
    eigenvalues_csv, rho_profile_csv, rho_profile_gnuplot, AlgebraReport, MourreReport,
    SpectralReport, ValidationReport, REPORT_SCHEMA_VERSION,
};
use slat_core::spectral;

#[derive(Parser)]
#[command(
    name = "slat",
    version,
    about = "semilattice-graded many-body Hamiltonian toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config (model or group) and print diagnostics.
    Validate { config: PathBuf },
    /// Full spectral report: gate, HVZ onset, thresholds, rho-hat, bound states.
    Spectrum {
        config: PathBuf,
        #[arg(long, default_value = "slat-out")]
        out: PathBuf,
        /// bound-state separation; defaults to 10x the refinement drift
        #[arg(long)]
        eps: Option<f64>,
    },
    /// HVZ onset and per-atom subsystem minima.
    Hvz {
        config: PathBuf,
        #[arg(long, default_value = "slat-out")]
        out: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Threshold set and rho-hat profile.
    Thresholds {
        config: PathBuf,
        #[arg(long, default_value = "slat-out")]
        out: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Mourre positivity check in a spectral window.
    Mourre {
        config: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "slat-out")]
        out: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Span-identity suite and generation check over a finite-group model.
    AlgebraVerify {
        config: PathBuf,
        #[arg(long, default_value = "slat-out")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    schema_version: u32,
    tool_version: String,
    command: String,
    config_path: String,
    config_sha256: String,
    wall_clock_seconds: f64,
    outputs: Vec<String>,
}

struct Run {
    started: Instant,
    command: String,
    config_path: PathBuf,
    config_sha256: String,
    out_dir: PathBuf,
    outputs: Vec<String>,
}

impl Run {
    fn new(command: &str, config_path: &Path, raw: &[u8], out_dir: &Path) -> Result<Self, String> {
        fs::create_dir_all(out_dir)
            .map_err(|e| format!("cannot create output dir {}: {e}", out_dir.display()))?;
        let hash = Sha256::digest(raw);
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Run {
            started: Instant::now(),
            command: command.to_string(),
            config_path: config_path.to_path_buf(),
            config_sha256: hex,
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, contents: &str) -> Result<(), String> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        text.push('\n');
        self.emit(name, &text)
    }

    fn finish(mut self) -> Result<(), String> {
        let manifest = RunManifest {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config_path: self.config_path.display().to_string(),
            config_sha256: self.config_sha256.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs.clone(),
        };
        let path = self.out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }
}

#[derive(Serialize)]
struct ErrorObject<'a> {
    error: &'a str,
    detail: String,
}

fn fail(kind: &str, detail: impl Into<String>, code: u8) -> ExitCode {
    let obj = ErrorObject {
        error: kind,
        detail: detail.into(),
    };
    eprintln!("{}", serde_json::to_string(&obj).expect("error object"));
    ExitCode::from(code)
}

fn read_config(path: &Path) -> Result<(Vec<u8>, String), ExitCode> {
    let raw = match fs::read(path) {
        Ok(r) => r,
        Err(e) => return Err(fail("io", format!("{}: {e}", path.display()), 2)),
    };
    let text = match String::from_utf8(raw.clone()) {
        Ok(t) => t,
        Err(e) => return Err(fail("parse", e.to_string(), 2)),
    };
    Ok((raw, text))
}

fn is_group_config(text: &str) -> Result<bool, ExitCode> {
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Err(fail("parse", e.to_string(), 2)),
    };
    Ok(value.get("cyclic_orders").is_some())
}

fn print_diagnostics(diags: &[Diagnostic]) {
    let report = ValidationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        ok: false,
        diagnostics: diags.to_vec(),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report"));
}

fn load_model(path: &Path) -> Result<(Vec<u8>, Assembled), ExitCode> {
    let (raw, text) = read_config(path)?;
    let cfg = match ModelConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return Err(fail("parse", e.to_string(), 2)),
    };
    match config::validate_model(&cfg) {
        Ok(asm) => Ok((raw, asm)),
        Err(diags) => {
            print_diagnostics(&diags);
            Err(ExitCode::from(1))
        }
    }
}

fn cmd_validate(path: &Path) -> ExitCode {
    let (_, text) = match read_config(path) {
        Ok(v) => v,
        Err(c) => return c,
    };
    let group = match is_group_config(&text) {
        Ok(g) => g,
        Err(c) => return c,
    };
    let diags = if group {
        match GroupConfig::from_json(&text) {
            Ok(cfg) => config::validate_group(&cfg).err().unwrap_or_default(),
            Err(e) => return fail("parse", e.to_string(), 2),
        }
    } else {
        match ModelConfig::from_json(&text) {
            Ok(cfg) => config::validate_model(&cfg).err().unwrap_or_default(),
            Err(e) => return fail("parse", e.to_string(), 2),
        }
    };
    let ok = diags.is_empty();
    let report = ValidationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        ok,
        diagnostics: diags,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report"));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_spectral(
    command: &str,
    path: &Path,
    out: &Path,
    eps: Option<f64>,
    with_rho_files: bool,
) -> ExitCode {
    let (raw, asm) = match load_model(path) {
        Ok(v) => v,
        Err(c) => return c,
    };
    let data = match spectral::compute_spectral(&asm, eps) {
        Ok(d) => d,
        Err(e) => return fail("spectral", e.to_string(), 1),
    };
    let mut run = match Run::new(command, path, &raw, out) {
        Ok(r) => r,
        Err(e) => return fail("io", e, 2),
    };
    let report = SpectralReport::new(command, data);
    let result = (|| -> Result<(), String> {
        run.emit_json(&format!("{command}.json"), &report)?;
        if with_rho_files {
            run.emit("rho.csv", &rho_profile_csv(&report.data.rho.profile))?;
            run.emit("rho.dat", &rho_profile_gnuplot(&report.data.rho.profile))?;
        }
        run.emit(
            "bound_states.csv",
            &eigenvalues_csv("bound_state", &report.data.bound_states),
        )?;
        run.finish()
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail("io", e, 2),
    }
}

fn cmd_mourre(path: &Path, lambda: f64, delta: f64, out: &Path, eps: Option<f64>) -> ExitCode {
    let (raw, asm) = match load_model(path) {
        Ok(v) => v,
        Err(c) => return c,
    };
    let gate = match spectral::refinement_gate(&asm) {
        Ok(g) => g,
        Err(e) => return fail("spectral", e.to_string(), 1),
    };
    let eps = eps.unwrap_or_else(|| spectral::default_eps(&gate));
    let data = match spectral::mourre_check(&asm, lambda, delta, eps) {
        Ok(d) => d,
        Err(e) => return fail("spectral", e.to_string(), 1),
    };
    let tau = match spectral::threshold_set_numeric(&asm, eps) {
        Ok(t) => t,
        Err(e) => return fail("spectral", e.to_string(), 1),
    };
    let lambdas = spectral::default_lambda_grid(&tau, 1001);
    let rho = match spectral::rho_hat_numeric(&asm, &lambdas, eps) {
        Ok(r) => r,
        Err(e) => return fail("spectral", e.to_string(), 1),
    };
    let mut run = match Run::new("mourre", path, &raw, out) {
        Ok(r) => r,
        Err(e) => return fail("io", e, 2),
    };
    let report = MourreReport::new(data);
    let result = (|| -> Result<(), String> {
        run.emit_json("mourre.json", &report)?;
        run.emit("rho.csv", &rho_profile_csv(&rho.profile))?;
        run.emit("rho.dat", &rho_profile_gnuplot(&rho.profile))?;
        run.finish()
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail("io", e, 2),
    }
}

fn cmd_algebra_verify(path: &Path, out: &Path) -> ExitCode {
    let (raw, text) = match read_config(path) {
        Ok(v) => v,
        Err(c) => return c,
    };
    let cfg = match GroupConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return fail("parse", e.to_string(), 2),
    };
    let binding = match config::validate_group(&cfg) {
        Ok(b) => b,
        Err(diags) => {
            print_diagnostics(&diags);
            return ExitCode::from(1);
        }
    };
    let group = binding
        .group(&binding.layout().ids[0])
        .expect("bound")
        .parent()
        .clone();
    // exhaustive for small groups, strided subsample near the order cap
    let budget = if group.order() > 16 {
        SuiteBudget {
            max_pairs: 12,
            max_triples: 24,
            max_ef_per_triple: 2,
            max_morita_pairs: 6,
        }
    } else {
        SuiteBudget::default()
    };
    let mut checks = match run_identity_suite(&group, &budget) {
        Ok(c) => c,
        Err(e) => return fail("algebra", e.to_string(), 1),
    };
    match generation_check(&binding) {
        Ok(c) => checks.push(c),
        Err(e) => return fail("algebra", e.to_string(), 1),
    }
    // grading product law over the bound lattice, plus the component
    // overlaps (measured, not asserted)
    let assembled = match slat_core::fingroup::assemble_c(&binding) {
        Ok(a) => a,
        Err(e) => return fail("algebra", e.to_string(), 1),
    };
    match assembled.product_law() {
        Ok(entries) => {
            for (e, f, ok, diag) in entries {
                checks.push(slat_core::fingroup::IdentityCheck {
                    name: "grading_product_law".to_string(),
                    context: format!("C({e}) . C({f})"),
                    pass: ok,
                    diag,
                });
            }
        }
        Err(e) => return fail("algebra", e.to_string(), 1),
    }
    let overlaps = match assembled.component_overlaps() {
        Ok(o) => o,
        Err(e) => return fail("algebra", e.to_string(), 1),
    };
    let report = AlgebraReport::new(cfg.cyclic_orders.clone(), checks, overlaps);
    let mut run = match Run::new("algebra-verify", path, &raw, out) {
        Ok(r) => r,
        Err(e) => return fail("io", e, 2),
    };
    let pass = report.pass;
    let result = (|| -> Result<(), String> {
        run.emit_json("algebra.json", &report)?;
        run.finish()
    })();
    match result {
        Ok(()) if pass => ExitCode::SUCCESS,
        Ok(()) => fail(
            "algebra",
            "at least one identity failed; see algebra.json",
            1,
        ),
        Err(e) => fail("io", e, 2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Spectrum { config, out, eps } => {
            cmd_spectral("spectrum", &config, &out, eps, true)
        }
        Command::Hvz { config, out, eps } => cmd_spectral("hvz", &config, &out, eps, false),
        Command::Thresholds { config, out, eps } => {
            cmd_spectral("thresholds", &config, &out, eps, true)
        }
        Command::Mourre {
            config,
            lambda,
            delta,
            out,
            eps,
        } => cmd_mourre(&config, lambda, delta, &out, eps),
        Command::AlgebraVerify { config, out } => cmd_algebra_verify(&config, &out),
    }
}
