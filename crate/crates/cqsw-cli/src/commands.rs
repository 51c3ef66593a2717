//! One function per subcommand; each produces a fixed-header CSV, a run
//! manifest, and a list of failed run assertions (empty on success).

use std::path::{Path, PathBuf};

use serde_json::json;

use cqsw_core::cq::{
    conditional_q_entropy, cqsw_rate, holevo_information, shannon_entropy, CqEnsemble,
};
use cqsw_core::coding::{
    all_sequences, build_channel_code, exact_code_metrics, greedy_cover, CodeParams, CqswCode,
};
use cqsw_core::linalg::von_neumann_entropy;
use cqsw_core::sim::{
    bb84_measurement_compression, bb84_oneshot, converse_audit, gentle_measurement_check,
    run_trials,
};
use cqsw_core::typicality::{typical_projector, typical_set};
use cqsw_core::{Caps, Error, Result};

use crate::ensemble_file::resolve_ensemble;
use crate::output::{
    config_hash, emit, fmt_bool, fmt_float, fmt_opt, fmt_str, Csv, Manifest, CSV_VERSION,
};
use crate::{CandidatePool, Command, Mode};

/// Execute a subcommand; the returned list holds failed run assertions.
pub fn run(command: Command) -> Result<Vec<String>> {
    match command {
        Command::Rates { ensemble, seed, out } => rates(&ensemble.ensemble, seed, out.out),
        Command::Typical { ensemble, n, delta, seed, caps, out } => {
            typical(&ensemble.ensemble, n, delta, seed, caps.to_caps(), out.out)
        }
        Command::BuildCode {
            ensemble,
            n,
            delta,
            epsilon,
            seed,
            candidates,
            eta,
            save_code,
            caps,
            out,
        } => build_code(
            &ensemble.ensemble,
            n,
            delta,
            epsilon,
            seed,
            candidates,
            eta,
            save_code,
            caps.to_caps(),
            out.out,
        ),
        Command::Cover {
            ensemble,
            n,
            delta,
            epsilon,
            seed,
            eta,
            drop_reserved,
            save_code,
            caps,
            out,
        } => cover(
            &ensemble.ensemble,
            n,
            delta,
            epsilon,
            seed,
            eta,
            drop_reserved,
            save_code,
            caps.to_caps(),
            out.out,
        ),
        Command::Simulate { ensemble, n, delta, epsilon, seed, trials, mode, code, caps, out } => {
            simulate(
                &ensemble.ensemble,
                n,
                delta,
                epsilon,
                seed,
                trials,
                mode,
                code,
                caps.to_caps(),
                out.out,
            )
        }
        Command::ConverseAudit { ensemble, n, delta, epsilon, seed, trials, code, caps, out } => {
            converse_cmd(
                &ensemble.ensemble,
                n,
                delta,
                epsilon,
                seed,
                trials,
                code,
                caps.to_caps(),
                out.out,
            )
        }
        Command::Bb84Oneshot { seed, out } => bb84_oneshot_cmd(seed, out.out),
        Command::Bb84MeasureSim { seed, out } => bb84_measure_sim_cmd(seed, out.out),
    }
}

fn rates(ensemble_arg: &str, seed: u64, out: Option<PathBuf>) -> Result<Vec<String>> {
    let (e, source) = resolve_ensemble(ensemble_arg)?;
    let canonical = format!("v={CSV_VERSION}|cmd=rates|ensemble={source}|seed={seed}");
    let hash = config_hash(&canonical);

    let h_x = shannon_entropy(e.probs())?;
    let chi = holevo_information(&e)?;
    let h_x_given_q = cqsw_rate(&e)?;
    let h_q = von_neumann_entropy(&e.average_state())?;
    let h_q_given_x = conditional_q_entropy(&e)?;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "ensemble",
        "h_x",
        "chi",
        "h_x_given_q",
        "h_q",
        "h_q_given_x",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "rates".into(),
        seed.to_string(),
        hash.clone(),
        fmt_str(ensemble_arg),
        fmt_float(h_x),
        fmt_float(chi),
        fmt_float(h_x_given_q),
        fmt_float(h_q),
        fmt_float(h_q_given_x),
    ]);
    let manifest = Manifest::new("rates", seed, &hash, &source, json!({}));
    emit(&csv, &manifest, out.as_deref())?;
    Ok(Vec::new())
}

fn typical(
    ensemble_arg: &str,
    n: usize,
    delta: f64,
    seed: u64,
    caps: Caps,
    out: Option<PathBuf>,
) -> Result<Vec<String>> {
    let (e, source) = resolve_ensemble(ensemble_arg)?;
    let canonical = format!(
        "v={CSV_VERSION}|cmd=typical|ensemble={source}|n={n}|delta={delta}|seed={seed}|caps={},{}",
        caps.max_dense_dim, caps.max_enumeration
    );
    let hash = config_hash(&canonical);

    let t = typical_set(e.probs(), n, delta, &caps)?;
    let p = typical_projector(&e.average_state(), n, delta, &caps)?;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "ensemble",
        "n",
        "delta",
        "delta_prime",
        "set_size",
        "set_prob",
        "projector_rank",
        "projector_capture",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "typical".into(),
        seed.to_string(),
        hash.clone(),
        fmt_str(ensemble_arg),
        n.to_string(),
        fmt_float(delta),
        fmt_float(t.delta_prime()),
        t.len().to_string(),
        fmt_float(t.total_prob()),
        p.subspace_dim().to_string(),
        fmt_float(p.captured_probability()),
    ]);
    let manifest = Manifest::new(
        "typical",
        seed,
        &hash,
        &source,
        json!({ "n": n, "delta": delta, "caps": caps }),
    );
    emit(&csv, &manifest, out.as_deref())?;
    Ok(Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn build_code(
    ensemble_arg: &str,
    n: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
    candidates: CandidatePool,
    eta: f64,
    save_code: Option<PathBuf>,
    caps: Caps,
    out: Option<PathBuf>,
) -> Result<Vec<String>> {
    let (e, source) = resolve_ensemble(ensemble_arg)?;
    let pool_name = match candidates {
        CandidatePool::Typical => "typical",
        CandidatePool::All => "all",
    };
    let canonical = format!(
        "v={CSV_VERSION}|cmd=build-code|ensemble={source}|n={n}|delta={delta}|epsilon={epsilon}\
         |seed={seed}|candidates={pool_name}|eta={eta}|caps={},{}",
        caps.max_dense_dim, caps.max_enumeration
    );
    let hash = config_hash(&canonical);

    let pool = match candidates {
        CandidatePool::Typical => typical_set(e.probs(), n, delta, &caps)?.members().to_vec(),
        CandidatePool::All => all_sequences(e.len(), n, &caps)?,
    };
    let mut params = CodeParams::new(epsilon, delta);
    params.eta = eta;
    params.caps = caps;
    let code = build_channel_code(&e, &params, &pool, seed)?;

    if let Some(path) = &save_code {
        write_json(path, &code)?;
    }

    // the packing-argument rate is asymptotic: reported, never asserted
    let chi = holevo_information(&e)?;
    let rate_bound = chi - delta;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "ensemble",
        "n",
        "delta",
        "epsilon",
        "eta",
        "candidates",
        "code_size",
        "code_rate",
        "max_error",
        "asymptotic_rate_bound",
        "rate_meets_asymptotic_bound",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "build-code".into(),
        seed.to_string(),
        hash.clone(),
        fmt_str(ensemble_arg),
        n.to_string(),
        fmt_float(delta),
        fmt_float(epsilon),
        fmt_float(eta),
        pool_name.into(),
        code.len().to_string(),
        fmt_float(code.rate()),
        fmt_float(code.max_error()),
        fmt_float(rate_bound),
        fmt_bool(code.rate() >= rate_bound),
    ]);
    let manifest = Manifest::new(
        "build-code",
        seed,
        &hash,
        &source,
        json!({
            "n": n, "delta": delta, "epsilon": epsilon, "eta": eta,
            "candidates": pool_name, "caps": caps,
            "save_code": save_code.as_ref().map(|p| p.display().to_string()),
        }),
    );
    emit(&csv, &manifest, out.as_deref())?;
    Ok(Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn cover(
    ensemble_arg: &str,
    n: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
    eta: f64,
    drop_reserved: bool,
    save_code: Option<PathBuf>,
    caps: Caps,
    out: Option<PathBuf>,
) -> Result<Vec<String>> {
    let (e, source) = resolve_ensemble(ensemble_arg)?;
    let canonical = format!(
        "v={CSV_VERSION}|cmd=cover|ensemble={source}|n={n}|delta={delta}|epsilon={epsilon}\
         |seed={seed}|eta={eta}|drop_reserved={drop_reserved}|caps={},{}",
        caps.max_dense_dim, caps.max_enumeration
    );
    let hash = config_hash(&canonical);

    let mut params = CodeParams::new(epsilon, delta);
    params.eta = eta;
    params.drop_reserved_if_exact = drop_reserved;
    params.caps = caps;
    let (code, summary) = greedy_cover(&e, n, &params, seed)?;

    if let Some(path) = &save_code {
        write_json(path, &code)?;
    }

    let sizes: Vec<String> = code.codes().iter().map(|c| c.len().to_string()).collect();
    let residual_ok = summary.residual_prob <= summary.residual_bound + 1e-9;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "ensemble",
        "n",
        "delta",
        "epsilon",
        "eta",
        "num_codes",
        "m",
        "rate",
        "code_sizes",
        "max_codeword_error",
        "typical_prob",
        "residual_prob",
        "residual_bound",
        "residual_ok",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "cover".into(),
        seed.to_string(),
        hash.clone(),
        fmt_str(ensemble_arg),
        n.to_string(),
        fmt_float(delta),
        fmt_float(epsilon),
        fmt_float(eta),
        code.codes().len().to_string(),
        code.m().to_string(),
        fmt_float(code.rate()),
        fmt_str(&sizes.join(";")),
        fmt_float(code.max_codeword_error()),
        fmt_float(summary.typical_prob),
        fmt_float(summary.residual_prob),
        fmt_float(summary.residual_bound),
        fmt_bool(residual_ok),
    ]);
    let manifest = Manifest::new(
        "cover",
        seed,
        &hash,
        &source,
        json!({
            "n": n, "delta": delta, "epsilon": epsilon, "eta": eta,
            "drop_reserved": drop_reserved, "caps": caps,
            "save_code": save_code.as_ref().map(|p| p.display().to_string()),
        }),
    );
    emit(&csv, &manifest, out.as_deref())?;

    let mut failures = Vec::new();
    if !residual_ok {
        failures.push(format!(
            "cover residual {} exceeds bound {}",
            summary.residual_prob, summary.residual_bound
        ));
    }
    Ok(failures)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    ensemble_arg: &str,
    n: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
    trials: usize,
    mode: Mode,
    code_path: Option<PathBuf>,
    caps: Caps,
    out: Option<PathBuf>,
) -> Result<Vec<String>> {
    let (e, source) = resolve_ensemble(ensemble_arg)?;
    let code_source = match &code_path {
        None => "built".to_string(),
        Some(p) => format!("file:{}", read_to_string(p)?),
    };
    let canonical = format!(
        "v={CSV_VERSION}|cmd=simulate|ensemble={source}|n={n}|delta={delta}|epsilon={epsilon}\
         |seed={seed}|trials={trials}|mode={}|code={code_source}|caps={},{}",
        mode.as_str(),
        caps.max_dense_dim,
        caps.max_enumeration
    );
    let hash = config_hash(&canonical);

    let code = obtain_code(&e, n, delta, epsilon, seed, &code_path, &caps)?;

    let exact = if mode != Mode::Mc {
        match exact_code_metrics(&code, &e, &caps) {
            Ok(m) => Some(m),
            Err(err @ Error::EnumerationCap { .. }) => {
                if mode == Mode::Exact {
                    return Err(err);
                }
                eprintln!("note: {err}; reporting Monte Carlo estimates only");
                None
            }
            Err(other) => return Err(other),
        }
    } else {
        None
    };
    let stats = if mode != Mode::Exact { Some(run_trials(&code, &e, trials, seed)?) } else { None };

    // disturbance against both the design epsilon and the realized deficit
    let delta_measured = exact.map(|m| m.delta).or(stats.as_ref().map(|s| s.delta_hat));
    let eps_hat = code.max_codeword_error();
    let gentle_design = delta_measured
        .map(|d| gentle_measurement_check(epsilon, d))
        .transpose()?;
    let gentle_measured = delta_measured
        .map(|d| gentle_measurement_check(eps_hat, d))
        .transpose()?;

    let p_e = exact.map(|m| m.p_e).or(stats.as_ref().map(|s| s.p_e_hat)).unwrap_or(0.0);
    let ledger = converse_audit(&code, &e, p_e, exact.is_some(), &caps)?;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "ensemble",
        "n",
        "delta",
        "epsilon",
        "trials",
        "mode",
        "m",
        "rate",
        "p_e_exact",
        "delta_exact",
        "p_e_hat",
        "p_e_se",
        "delta_hat",
        "delta_se",
        "eps_hat",
        "gentle_bound_design",
        "gentle_pass_design",
        "gentle_bound_measured",
        "gentle_pass_measured",
        "converse_verdict",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "simulate".into(),
        seed.to_string(),
        hash.clone(),
        fmt_str(ensemble_arg),
        n.to_string(),
        fmt_float(delta),
        fmt_float(epsilon),
        trials.to_string(),
        mode.as_str().into(),
        code.m().to_string(),
        fmt_float(code.rate()),
        fmt_opt(exact.map(|m| m.p_e)),
        fmt_opt(exact.map(|m| m.delta)),
        fmt_opt(stats.as_ref().map(|s| s.p_e_hat)),
        fmt_opt(stats.as_ref().map(|s| s.p_e_se)),
        fmt_opt(stats.as_ref().map(|s| s.delta_hat)),
        fmt_opt(stats.as_ref().map(|s| s.delta_se)),
        fmt_float(eps_hat),
        fmt_opt(gentle_design.as_ref().map(|g| g.bound)),
        gentle_design.as_ref().map(|g| fmt_bool(g.pass)).unwrap_or_default(),
        fmt_opt(gentle_measured.as_ref().map(|g| g.bound)),
        gentle_measured.as_ref().map(|g| fmt_bool(g.pass)).unwrap_or_default(),
        fmt_bool(ledger.verdict),
    ]);
    let manifest = Manifest::new(
        "simulate",
        seed,
        &hash,
        &source,
        json!({
            "n": n, "delta": delta, "epsilon": epsilon, "trials": trials,
            "mode": mode.as_str(), "caps": caps,
            "code": code_path.as_ref().map(|p| p.display().to_string()),
        }),
    );
    emit(&csv, &manifest, out.as_deref())?;

    let mut failures = Vec::new();
    if let Some(g) = &gentle_measured {
        if !g.pass {
            failures.push(format!(
                "gentle-measurement bound violated: Delta {} > {}",
                g.delta, g.bound
            ));
        }
    }
    if !ledger.verdict {
        failures.push(format!(
            "converse floor violated: {} < {}",
            ledger.head, ledger.floor
        ));
    }
    Ok(failures)
}

#[allow(clippy::too_many_arguments)]
fn converse_cmd(
    ensemble_arg: &str,
    n: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
    trials: usize,
    code_path: Option<PathBuf>,
    caps: Caps,
    out: Option<PathBuf>,
) -> Result<Vec<String>> {
    let (e, source) = resolve_ensemble(ensemble_arg)?;
    let code_source = match &code_path {
        None => "built".to_string(),
        Some(p) => format!("file:{}", read_to_string(p)?),
    };
    let canonical = format!(
        "v={CSV_VERSION}|cmd=converse-audit|ensemble={source}|n={n}|delta={delta}\
         |epsilon={epsilon}|seed={seed}|trials={trials}|code={code_source}|caps={},{}",
        caps.max_dense_dim, caps.max_enumeration
    );
    let hash = config_hash(&canonical);

    let code = obtain_code(&e, n, delta, epsilon, seed, &code_path, &caps)?;

    let (p_e, p_e_source, exact_terms) = match exact_code_metrics(&code, &e, &caps) {
        Ok(m) => (m.p_e, "exact", true),
        Err(Error::EnumerationCap { .. }) => {
            let stats = run_trials(&code, &e, trials, seed)?;
            (stats.p_e_hat, "mc", false)
        }
        Err(other) => return Err(other),
    };
    let ledger = converse_audit(&code, &e, p_e, exact_terms, &caps)?;

    let chain = ledger.chain.as_deref().unwrap_or(&[]);
    let line = |k: usize| chain.get(k).map(|l| l.value);

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "ensemble",
        "n",
        "rate",
        "p_e",
        "p_e_source",
        "h_x",
        "chi",
        "fano_bound",
        "head",
        "floor",
        "line_mutual",
        "line_identity",
        "line_fano_input",
        "line_fano_bound",
        "omitted_reason",
        "verdict",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "converse-audit".into(),
        seed.to_string(),
        hash.clone(),
        fmt_str(ensemble_arg),
        n.to_string(),
        fmt_float(ledger.rate),
        fmt_float(ledger.p_e),
        p_e_source.into(),
        fmt_float(ledger.h_x),
        fmt_float(ledger.chi),
        fmt_float(ledger.fano_bound),
        fmt_float(ledger.head),
        fmt_float(ledger.floor),
        fmt_opt(line(0)),
        fmt_opt(line(1)),
        fmt_opt(line(2)),
        fmt_opt(line(3)),
        fmt_str(ledger.omitted_reason.as_deref().unwrap_or("")),
        fmt_bool(ledger.verdict),
    ]);
    let manifest = Manifest::new(
        "converse-audit",
        seed,
        &hash,
        &source,
        json!({
            "n": n, "delta": delta, "epsilon": epsilon, "trials": trials,
            "caps": caps, "code": code_path.as_ref().map(|p| p.display().to_string()),
        }),
    );
    emit(&csv, &manifest, out.as_deref())?;

    let mut failures = Vec::new();
    if !ledger.verdict {
        failures.push(format!("converse floor violated: {} < {}", ledger.head, ledger.floor));
    }
    Ok(failures)
}

fn bb84_oneshot_cmd(seed: u64, out: Option<PathBuf>) -> Result<Vec<String>> {
    let canonical = format!("v={CSV_VERSION}|cmd=bb84-oneshot|seed={seed}");
    let hash = config_hash(&canonical);
    let r = bb84_oneshot()?;
    let pass = (r.rate - 1.0).abs() <= 1e-10
        && r.p_e.abs() <= 1e-10
        && r.delta.abs() <= 1e-10
        && (r.h_x - 2.0).abs() <= 1e-10
        && (r.chi - 1.0).abs() <= 1e-10
        && (r.h_x_given_q - 1.0).abs() <= 1e-10;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "rate",
        "p_e",
        "delta",
        "h_x",
        "chi",
        "h_x_given_q",
        "pass",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "bb84-oneshot".into(),
        seed.to_string(),
        hash.clone(),
        fmt_float(r.rate),
        fmt_float(r.p_e),
        fmt_float(r.delta),
        fmt_float(r.h_x),
        fmt_float(r.chi),
        fmt_float(r.h_x_given_q),
        fmt_bool(pass),
    ]);
    let manifest = Manifest::new("bb84-oneshot", seed, &hash, "builtin:bb84", json!({}));
    emit(&csv, &manifest, out.as_deref())?;

    if pass {
        Ok(Vec::new())
    } else {
        Ok(vec![format!(
            "one-shot figures off: rate {} P_e {} Delta {}",
            r.rate, r.p_e, r.delta
        )])
    }
}

fn bb84_measure_sim_cmd(seed: u64, out: Option<PathBuf>) -> Result<Vec<String>> {
    let canonical = format!("v={CSV_VERSION}|cmd=bb84-measure-sim|seed={seed}");
    let hash = config_hash(&canonical);
    let r = bb84_measurement_compression()?;

    let mut csv = Csv::new(vec![
        "csv_version",
        "subcommand",
        "seed",
        "config_hash",
        "direct_bits",
        "sim_communication_bits",
        "shared_random_bits",
        "p_outcome_0",
        "p_outcome_1",
        "p_outcome_plus",
        "p_outcome_minus",
        "max_prob_deviation",
        "max_state_deviation",
        "identical",
    ]);
    csv.push(vec![
        CSV_VERSION.into(),
        "bb84-measure-sim".into(),
        seed.to_string(),
        hash.clone(),
        fmt_float(r.direct_communication_bits),
        fmt_float(r.simulated_communication_bits),
        fmt_float(r.shared_randomness_bits),
        fmt_float(r.direct_probs[0]),
        fmt_float(r.direct_probs[1]),
        fmt_float(r.direct_probs[2]),
        fmt_float(r.direct_probs[3]),
        fmt_float(r.max_prob_deviation),
        fmt_float(r.max_state_deviation),
        fmt_bool(r.identical),
    ]);
    let manifest = Manifest::new("bb84-measure-sim", seed, &hash, "builtin:bb84", json!({}));
    emit(&csv, &manifest, out.as_deref())?;

    if r.identical {
        Ok(Vec::new())
    } else {
        Ok(vec![format!(
            "simulated measurement deviates: probs {} states {}",
            r.max_prob_deviation, r.max_state_deviation
        )])
    }
}

fn obtain_code(
    e: &CqEnsemble,
    n: usize,
    delta: f64,
    epsilon: f64,
    seed: u64,
    code_path: &Option<PathBuf>,
    caps: &Caps,
) -> Result<CqswCode> {
    match code_path {
        None => {
            let mut params = CodeParams::new(epsilon, delta);
            params.caps = *caps;
            Ok(greedy_cover(e, n, &params, seed)?.0)
        }
        Some(path) => {
            let content = read_to_string(path)?;
            let code: CqswCode = serde_json::from_str(&content)
                .map_err(|err| Error::InvalidParameter(format!("{}: {err}", path.display())))?;
            if code.n() != n {
                return Err(Error::InvalidParameter(format!(
                    "code file has blocklength {}, run asked for {n}",
                    code.n()
                )));
            }
            for c in code.codes() {
                c.verify_errors(e)?;
            }
            Ok(code)
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("reading {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, body)
        .map_err(|e| Error::InvalidParameter(format!("writing {}: {e}", path.display())))
}
