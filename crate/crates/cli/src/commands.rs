use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use resmono_core::catalysis;
use resmono_core::convert::{self, DecideOptions, Outcome, DECISION_TOL};
use resmono_core::io::{self, complex_rows, StateDocument};
use resmono_core::limits;
use resmono_core::monotones::{self, Monotone};
use resmono_core::oracle::{self, OracleBudget};
use resmono_core::state::{self, DensityMatrix, PureState};
use resmono_core::{Error, TheorySpec};

use crate::{Cli, Command};

/// A rendered result and the process exit code that goes with it.
pub struct Output {
    pub value: Value,
    pub exit: u8,
}

impl Output {
    fn ok(value: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            value: to_value(value)?,
            exit: 0,
        })
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Input(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Input(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn to_value(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Input(format!("cannot serialise output: {e}")))
}

/// Inline JSON if the argument looks like a JSON object, a file path
/// otherwise.
fn read_document(arg: &str, what: &str) -> Result<String, CliError> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        return Ok(arg.to_string());
    }
    std::fs::read_to_string(Path::new(arg))
        .map_err(|e| CliError::Input(format!("cannot read {what} document '{arg}': {e}")))
}

fn load_theory(arg: &str) -> Result<TheorySpec, CliError> {
    Ok(io::parse_theory(&read_document(arg, "theory")?)?)
}

fn load_state(arg: &str) -> Result<DensityMatrix, CliError> {
    Ok(io::parse_state(&read_document(arg, "state")?)?)
}

/// Parses a state and gives it the theory's tensor factorisation when the
/// document does not specify one.
fn load_state_for(arg: &str, th: &TheorySpec) -> Result<DensityMatrix, CliError> {
    let rho = load_state(arg)?;
    let factors = th.state_factors();
    if rho.factors().len() == 1 && factors.len() > 1 && rho.dim() == th.dim() {
        return Ok(rho.with_factor_dims(factors)?);
    }
    Ok(rho)
}

fn budget(cli: &Cli, restarts: usize, max_iters: usize, depth: usize) -> Result<OracleBudget, CliError> {
    let tol = match cli.tol {
        None => OracleBudget::default().tol,
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => return Err(CliError::Input(format!("--tol must be positive, got {t}"))),
    };
    if restarts == 0 {
        return Err(CliError::Input("--restarts must be at least 1".into()));
    }
    Ok(OracleBudget {
        max_iters,
        restarts,
        tol,
        depth,
    })
}

fn default_budget(cli: &Cli) -> Result<OracleBudget, CliError> {
    let d = OracleBudget::default();
    budget(cli, d.restarts, d.max_iters, d.depth)
}

fn amplitudes(psi: &PureState) -> Value {
    let a = psi.amplitudes();
    Value::Array(a.iter().map(|z| json!({"re": z.re, "im": z.im})).collect())
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Eval { theory, state } => eval(theory, state),
        Command::Decide { theory, from, to } => decide(cli, theory, from, to),
        Command::Oracle {
            theory,
            from,
            to,
            restarts,
            max_iters,
            depth,
            emit_channel,
        } => run_oracle(cli, theory, from, to, budget(cli, *restarts, *max_iters, *depth)?, *emit_channel),
        Command::Catalysis {
            from,
            to,
            n,
            m,
            emit_trace,
        } => run_catalysis(cli, from, to, *n, *m, *emit_trace),
        Command::Theorem1 {
            theory,
            state,
            monotones,
        } => theorem1(cli, theory, state, monotones.as_deref()),
        Command::TotalOrder { theory, samples } => total_order(cli, theory, *samples),
        Command::Validate { state, theory } => validate(state.as_deref(), theory.as_deref()),
    }
}

fn eval(theory: &str, state: &str) -> Result<Output, CliError> {
    let th = load_theory(theory)?;
    let rho = load_state_for(state, &th)?;
    let mut reports = to_value(monotones::evaluate_all(&rho, &th)?)?;
    if let Value::Array(items) = &mut reports {
        for item in items {
            item["tolerance"] = json!(monotones::SUPPORT_TOL);
        }
    }
    Output::ok(reports)
}

fn decide(cli: &Cli, theory: &str, from: &str, to: &str) -> Result<Output, CliError> {
    let th = load_theory(theory)?;
    let rho = load_state_for(from, &th)?;
    let sigma = load_state_for(to, &th)?;
    let opts = DecideOptions {
        budget: default_budget(cli)?,
        seed: cli.seed,
    };
    let verdict = convert::decide(&th, &rho, &sigma, &opts)?;
    let exit = if verdict.outcome == Outcome::Undecided { 2 } else { 0 };
    Ok(Output {
        value: to_value(&verdict)?,
        exit,
    })
}

fn run_oracle(
    cli: &Cli,
    theory: &str,
    from: &str,
    to: &str,
    budget: OracleBudget,
    emit_channel: bool,
) -> Result<Output, CliError> {
    let th = load_theory(theory)?;
    let rho = load_state_for(from, &th)?;
    let sigma = load_state_for(to, &th)?;
    let out = oracle::min_residual(&rho, &sigma, &th, &budget, cli.seed)?;
    let mut value = json!({
        "theory": th,
        "residual": out.residual,
        "converged": out.converged,
        "iterations": out.iterations,
        "restarts_used": out.restarts_used,
        "tolerance": budget.tol,
        "seed": cli.seed,
        "budget": budget,
    });
    if emit_channel {
        value["channel"] = json!({
            "in_dim": out.choi.in_dim(),
            "out_dim": out.choi.out_dim(),
            "choi": complex_rows(out.choi.matrix()),
        });
    }
    Output::ok(value)
}

fn run_catalysis(cli: &Cli, from: &str, to: &str, n: usize, m: usize, emit_trace: bool) -> Result<Output, CliError> {
    let rho = load_state(from)?;
    let sigma = load_state(to)?;
    let budget = default_budget(cli)?;
    let (summary, catalyst, trace) = catalysis::simulate(&rho, &sigma, n, m, &budget, cli.seed)?;
    let mut value = to_value(summary)?;
    value["tolerance"] = json!(budget.tol);
    value["seed"] = json!(cli.seed);
    if emit_trace {
        value["trace"] = json!({
            "catalyst": StateDocument::from_density(&catalyst.state),
            "gamma": StateDocument::from_density(&catalyst.gamma),
            "mu1": StateDocument::from_density(&trace.mu1),
            "mu2": StateDocument::from_density(&trace.mu2),
            "final_state": StateDocument::from_density(&trace.final_state),
            "system_state": StateDocument::from_density(&trace.system_state()),
            "catalyst_state": StateDocument::from_density(&trace.catalyst_state()),
        });
    }
    Output::ok(value)
}

fn theorem1(cli: &Cli, theory: &str, state: &str, names: Option<&[String]>) -> Result<Output, CliError> {
    let th = load_theory(theory)?;
    let rho = load_state_for(state, &th)?;
    let list: Vec<Monotone> = match names {
        Some(names) => names
            .iter()
            .map(|n| Monotone::from_name(n.trim()))
            .collect::<Result<_, _>>()?,
        None => monotones::monotones_for(&th)
            .into_iter()
            .filter(|m| m.continuous())
            .collect(),
    };
    let (phi_f, phi_perp) = limits::boundary_pair(&th).ok_or_else(|| {
        Error::Unsupported(format!("{} has no boundary pair of pure states", th.name()))
    })?;
    let budget = default_budget(cli)?;
    let found = limits::find_defeating_epsilon(&list, &rho, &th, &phi_f, &phi_perp)?;
    let blocked = match &found.psi {
        Some(psi) => Some(limits::verify_blocked(&rho, psi, &th, &budget, cli.seed)?),
        None => None,
    };
    Output::ok(json!({
        "theory": th,
        "monotones": list.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "epsilon": found.epsilon,
        "dominated": found.dominated,
        "entries": found.entries,
        "psi": found.psi.as_ref().map(amplitudes),
        "blocked": blocked,
        "tolerance": budget.tol,
        "seed": cli.seed,
    }))
}

fn total_order(cli: &Cli, theory: &str, samples: usize) -> Result<Output, CliError> {
    let th = load_theory(theory)?;
    let report = limits::check_total_order(&th, samples, cli.seed)?;
    let mut value = to_value(report)?;
    value["theory"] = to_value(&th)?;
    value["tolerance"] = json!(DECISION_TOL);
    value["seed"] = json!(cli.seed);
    Output::ok(value)
}

fn validate(state: Option<&str>, theory: Option<&str>) -> Result<Output, CliError> {
    let mut value = json!({ "valid": true, "tolerance": state::STATE_TOL });
    let th = match theory {
        Some(t) => {
            let th = load_theory(t)?;
            value["theory"] = to_value(&th)?;
            Some(th)
        }
        None => None,
    };
    if let Some(s) = state {
        let text = read_document(s, "state")?;
        let rho = match io::parse_state(&text) {
            Ok(rho) => rho,
            Err(e) => {
                eprintln!("error: {e}");
                let invariant = match &e {
                    Error::InvalidState { invariant, .. } => Some(*invariant),
                    _ => None,
                };
                return Ok(Output {
                    value: json!({
                        "valid": false,
                        "tolerance": state::STATE_TOL,
                        "invariant": invariant,
                        "message": e.to_string(),
                    }),
                    exit: 1,
                });
            }
        };
        if let Some(th) = &th {
            if rho.dim() != th.dim() {
                return Err(Error::Dimension(format!(
                    "state has dimension {}, theory {} has {}",
                    rho.dim(),
                    th.name(),
                    th.dim()
                ))
                .into());
            }
        }
        let eigenvalues = rho.eigenvalues();
        value["state"] = json!({
            "dim": rho.dim(),
            "factors": rho.factors(),
            "eigenvalues": eigenvalues,
            "purity": eigenvalues.iter().map(|l| l * l).sum::<f64>(),
            "bloch": if rho.is_qubit() { Some(state::bloch_from_density(&rho)?.as_array()) } else { None },
        });
        if let Some(th) = &th {
            value["free"] = json!(th.is_free(&rho)?);
        }
    }
    Output::ok(value)
}
