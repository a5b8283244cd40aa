//! Subcommands behind the command-line entry point.
//!
//! Exit codes: 0 pass, 1 property failed, 2 usage or configuration error,
//! 3 numerical divergence.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::decay::{self, DecayFit};
use crate::error::{Error, Result};
use crate::functionals::{self, CertificateReport, DissipationReport, EnergySample, Equivalence, LemmaConstants};
use crate::kernel::{certify_condition_h, certify_hyp1, CertReport};
use crate::mms;
use crate::solver::{self, RunOutput};
use crate::trace;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Exit code and the report that was written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
}

impl Outcome {
    fn error(e: &Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        Self { code, report: json!({ "error": e.to_string() }) }
    }
}

fn resolve(out: &Path, configured: &Option<String>, default: &str) -> PathBuf {
    let name = configured.as_deref().unwrap_or(default);
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn finish(code: i32, report: Value, path: &Path) -> Outcome {
    match write_json(path, &report) {
        Ok(()) => Outcome { code, report },
        Err(e) => Outcome::error(&e),
    }
}

/// Hereditary-kernel certification.
pub fn cmd_check_kernel(cfg: &RunConfig, out: &Path) -> Outcome {
    let path = resolve(out, &cfg.outputs.report_path, "check_kernel.json");
    let k = match cfg.kernel() {
        Ok(k) => k,
        Err(e) => return Outcome::error(&e),
    };
    let hyp1 = match certify_hyp1(&k, cfg.certify.samples) {
        Ok(r) => r,
        Err(e) => return Outcome::error(&e),
    };
    let condition_h = match (cfg.modulus, cfg.certify.condition_h) {
        (Some(h), true) => {
            let s_max = cfg.certify.s_max.unwrap_or_else(|| k.default_horizon());
            Some(certify_condition_h(&k, &h, s_max, 1e-10).map_err(|e| e.to_string()))
        }
        _ => None,
    };
    let code = if hyp1.passed { EXIT_PASS } else { EXIT_FAILED };
    let report = json!({
        "hyp1": hyp1,
        "failed_clauses": hyp1.failed_clauses(),
        "condition_h": condition_h.map(|r| match r {
            Ok(c) => to_value(&c),
            Err(e) => json!({ "error": e }),
        }),
    });
    finish(code, report, &path)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub warnings: Vec<String>,
    pub failure: Option<String>,
    pub samples: usize,
    pub history_records: usize,
    pub ell: f64,
    pub e0: f64,
    pub m0: f64,
    pub hyp1: Option<CertReport>,
    pub condition_h: Option<CertReport>,
    pub certificate: Option<CertificateReport>,
    pub lemma_constants: Option<LemmaConstants>,
    pub equivalence: Option<Equivalence>,
    pub equivalence_error: Option<String>,
    pub dissipation: DissipationReport,
    /// per-step tolerance `10 dt (dx^2 + dt) (1 + E(0))`
    pub dissipation_tolerance: f64,
    pub dissipation_passed: bool,
    pub min_i: f64,
    pub decay: Option<DecayFit>,
    pub final_exact_error: Option<f64>,
}

/// A completed (or diverged) simulation with its post-processing.
pub struct Simulation {
    pub output: RunOutput,
    pub report: SimulationReport,
}

/// Runs the configured simulation and every analysis that applies to it.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let grid = cfg.grid()?;
    let k = cfg.kernel()?;
    let solver_cfg = cfg.solver()?;
    let modulus = match cfg.modulus {
        Some(_) => Some(cfg.modulus()?),
        None => None,
    };
    let (history, y1) = cfg.initial_data(&grid)?;
    let mut output = solver::run(&solver_cfg, &grid, &k, &history, &y1, &cfg.run)?;
    let forced = solver_cfg.forced();
    let trace = &mut output.trace;
    let e0 = trace.first().map_or(0.0, |s| s.e);

    let eps2 = cfg.fit.eps2;
    let eps1 = cfg.fit.eps1.unwrap_or_else(|| functionals::fit_eps1(trace, eps2));
    functionals::refill_lyapunov(trace, eps1, eps2)?;
    let (equivalence, equivalence_error) = match functionals::equivalence_fit(trace, eps1, eps2) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let dissipation = functionals::dissipation_check(trace, forced);
    let tol = 10.0 * solver_cfg.dt * (grid.dx().powi(2) + solver_cfg.dt) * (1.0 + e0);
    let dissipation_passed = dissipation.skipped || dissipation.max_increase <= tol;

    let p = solver_cfg.p;
    let ell = k.ell();
    let certificate = trace
        .first()
        .filter(|_| p > 2.0)
        .map(|first| functionals::certificate(&grid, first, &history.at(0.0), ell, p, cfg.fit.exponent_variant));
    let m0 = history.m0();
    let lemma_constants = if p > 2.0 && ell > 0.0 && ell < 1.0 {
        let nu = cfg.fit.nu.unwrap_or(0.5 * (1.0 - ell));
        functionals::lemma_constants(nu, ell, p, e0, m0, cfg.fit.c_embed, cfg.fit.c_nu).ok()
    } else {
        None
    };

    let decay = match modulus {
        Some(h) if !forced && output.failure.is_none() => match decay::fit_bound(trace, &h) {
            Ok(fit) => {
                decay::fill_bound(trace, &fit);
                Some(fit)
            }
            Err(e) => {
                log::warn!("decay fit skipped: {e}");
                None
            }
        },
        _ => None,
    };

    let (hyp1, condition_h) = if cfg.certify.hyp1 {
        let hyp1 = certify_hyp1(&k, cfg.certify.samples).ok();
        let ch = match (modulus, cfg.certify.condition_h) {
            (Some(h), true) => {
                let s_max = cfg.certify.s_max.unwrap_or_else(|| k.default_horizon());
                certify_condition_h(&k, &h, s_max, 1e-10).ok()
            }
            _ => None,
        };
        (hyp1, ch)
    } else {
        (None, None)
    };

    let report = SimulationReport {
        warnings: output.warnings.clone(),
        failure: output.failure.as_ref().map(|e| e.to_string()),
        samples: trace.len(),
        history_records: output.history_records,
        ell,
        e0,
        m0,
        hyp1,
        condition_h,
        certificate,
        lemma_constants,
        equivalence,
        equivalence_error,
        dissipation,
        dissipation_tolerance: tol,
        dissipation_passed,
        min_i: trace.iter().map(|s| s.i).fold(f64::INFINITY, f64::min),
        decay,
        final_exact_error: trace.last().and_then(|s| s.exact_error),
    };
    Ok(Simulation { output, report })
}

fn write_simulation(cfg: &RunConfig, out: &Path, sim: &Simulation, default_report: &str) -> Result<Value> {
    trace::save_trace(&resolve(out, &cfg.outputs.trace_path, "trace.csv"), &sim.output.trace)?;
    let report = to_value(&sim.report);
    write_json(&resolve(out, &cfg.outputs.report_path, default_report), &report)?;
    Ok(report)
}

/// Simulation with trace and report output.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Outcome {
    let sim = match simulate(cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::error(&e),
    };
    let report = match write_simulation(cfg, out, &sim, "report.json") {
        Ok(r) => r,
        Err(e) => return Outcome::error(&e),
    };
    let code = if sim.output.failure.is_some() {
        EXIT_DIVERGED
    } else if !sim.report.dissipation_passed {
        EXIT_FAILED
    } else {
        EXIT_PASS
    };
    Outcome { code, report }
}

/// Whether a fit verifies a non-trivially decaying bound.
pub fn decay_verified(fit: &DecayFit) -> bool {
    fit.max_violation <= 1e-12 * fit.kappa1 && !fit.non_decaying
}

/// Simulation (or a stored trace) followed by the decay-bound fit.
pub fn cmd_verify_decay(cfg: &RunConfig, out: &Path) -> Outcome {
    let path = resolve(out, &cfg.outputs.report_path, "verify_decay.json");
    let h = match cfg.modulus() {
        Ok(h) => h,
        Err(e) => return Outcome::error(&e),
    };
    let trace: Vec<EnergySample>;
    let mut sim_report = Value::Null;
    if let Some(input) = &cfg.inputs.trace_path {
        trace = match trace::load_trace(Path::new(input)) {
            Ok(t) => t,
            Err(e) => return Outcome::error(&e),
        };
    } else {
        let sim = match simulate(cfg) {
            Ok(s) => s,
            Err(e) => return Outcome::error(&e),
        };
        match write_simulation(cfg, out, &sim, "report.json") {
            Ok(r) => sim_report = r,
            Err(e) => return Outcome::error(&e),
        }
        if let Some(f) = &sim.output.failure {
            return finish(EXIT_DIVERGED, json!({ "error": f.to_string(), "simulation": sim_report }), &path);
        }
        trace = sim.output.trace;
    }
    match decay::fit_bound(&trace, &h) {
        Ok(fit) => {
            let verified = decay_verified(&fit);
            let report = json!({ "verified": verified, "fit": fit, "simulation": sim_report });
            finish(if verified { EXIT_PASS } else { EXIT_FAILED }, report, &path)
        }
        Err(Error::DegenerateFit(msg)) => {
            finish(EXIT_FAILED, json!({ "verified": false, "degenerate": msg }), &path)
        }
        Err(e) => Outcome::error(&e),
    }
}

/// Convergence study against a manufactured solution.
pub fn cmd_mms(cfg: &RunConfig, out: &Path) -> Outcome {
    let spec = match &cfg.mms {
        Some(s) => s,
        None => return Outcome::error(&Error::Config("missing `mms` section".into())),
    };
    let k = match cfg.kernel() {
        Ok(k) => k,
        Err(e) => return Outcome::error(&e),
    };
    let report = match mms::mms_study(&spec.manufactured, &k, &spec.plan) {
        Ok(r) => r,
        Err(e) => return Outcome::error(&e),
    };
    let mut table = String::from("study,n,dx,dt,error,order\n");
    for (name, rows) in [("spatial", &report.spatial), ("temporal", &report.temporal)] {
        for r in rows.iter() {
            let order = r.order.map_or(String::new(), |o| format!("{o:?}"));
            table.push_str(&format!("{name},{},{:?},{:?},{:?},{order}\n", r.n, r.dx, r.dt, r.error));
        }
    }
    let table_path = out.join("mms_table.csv");
    if let Err(e) = std::fs::create_dir_all(out).and_then(|_| std::fs::write(&table_path, table)) {
        return Outcome::error(&e.into());
    }
    let code = if report.passed { EXIT_PASS } else { EXIT_FAILED };
    finish(code, to_value(&report), &resolve(out, &cfg.outputs.report_path, "mms_report.json"))
}

/// Cross product of kernels, exponents and amplitudes, simulated concurrently.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Outcome {
    let spec = match &cfg.sweep {
        Some(s) => s,
        None => return Outcome::error(&Error::Config("missing `sweep` section".into())),
    };
    if spec.kernels.is_empty() || spec.p.is_empty() || spec.amplitudes.is_empty() {
        return Outcome::error(&Error::Config("sweep lists must be nonempty".into()));
    }
    let mut cells = Vec::new();
    for kernel in &spec.kernels {
        for &p in &spec.p {
            for &amp in &spec.amplitudes {
                cells.push((kernel.clone(), p, amp));
            }
        }
    }
    let run_cell = |(i, (kernel, p, amp)): (usize, &(crate::kernel::KernelFamily, f64, f64))| {
        let mut child = cfg.clone();
        child.sweep = None;
        child.kernel = Some(kernel.clone());
        if let Some(s) = child.solver.as_mut() {
            s.p = *p;
        }
        child.initial.y0_modes = vec![*amp];
        child.outputs = Default::default();
        let dir = out.join(format!("cell_{i:03}"));
        let outcome = cmd_simulate(&child, &dir);
        json!({
            "index": i,
            "kernel": kernel,
            "p": p,
            "amplitude": amp,
            "exit": outcome.code,
            "dir": dir.display().to_string(),
        })
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => return Outcome::error(&Error::Config(e.to_string())),
    };
    let results: Vec<Value> = pool.install(|| cells.par_iter().enumerate().map(run_cell).collect());
    let codes: Vec<i64> = results.iter().map(|r| r["exit"].as_i64().unwrap_or(2)).collect();
    let code = if codes.iter().any(|&c| c >= 2) {
        EXIT_USAGE
    } else if codes.contains(&1) {
        EXIT_FAILED
    } else {
        EXIT_PASS
    };
    let report = json!({ "cells": results, "exit_matrix": codes });
    finish(code, report, &resolve(out, &cfg.outputs.report_path, "sweep_report.json"))
}
