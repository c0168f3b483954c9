//! Batch runner around the `gapdyn` library: integrate configured
//! scenarios, audit the runs, execute the self-validation battery, and
//! export conjugate tables.
//!
//! Exit codes: 0 all invariants held; 1 the run completed but logged
//! violations (or the energy ledger failed to close); 2 configuration or
//! schema problem; 3 the stepper gave up mid-run (partial outputs are
//! still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gapdyn::{
    energy_audit, integrate, run_validation, tol, AuditReport, ConvexSpec, DissipationLaw,
    ExtReal, HamiltonianModel, IntegrateOptions, Mutation, PhaseVector, RunOutcome, RunStatus,
    StateLayout, Trajectory,
};
use serde::{Deserialize, Serialize};

/// Bumped whenever a CSV column order or metadata field changes.
const SCHEMA_VERSION: u32 = 1;

const EXIT_OK: u8 = 0;
const EXIT_VIOLATIONS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_STEP: u8 = 3;

#[derive(Parser)]
#[command(name = "gapdyn", version, about = "Dissipative Hamiltonian scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario config; write trajectory CSV, audit JSON
    /// and run-metadata JSON into the output directory.
    Run(RunArgs),
    /// Execute the self-validation battery and report per-suite results.
    Validate(ValidateArgs),
    /// Tabulate the numerical conjugate of a one-dimensional shape next
    /// to its closed form.
    Conjugate(ConjugateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario description (JSON, one scenario per file)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Also write the summary as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
    /// Fault to inject, for checking that the battery can fail:
    /// `none` or `mis-signed-polar`
    #[arg(long, default_value = "none")]
    mutation: Mutation,
    /// Base seed for the sampled suites (the GAPDYN_SEED environment
    /// variable takes precedence)
    #[arg(long, default_value_t = 0x00C0_FFEE)]
    seed: u64,
}

#[derive(Args)]
struct ConjugateArgs {
    /// Inline JSON or a path to a JSON file describing the shape
    #[arg(long)]
    spec: String,
    /// Dual grid endpoints
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    range: Vec<f64>,
    /// Number of grid nodes
    #[arg(long)]
    samples: usize,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

/// One scenario per file; unknown fields are rejected so that typos
/// cannot silently fall back to defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioConfig {
    name: String,
    model: HamiltonianModel,
    law: DissipationLaw,
    initial: PhaseVector,
    t0: f64,
    t_end: f64,
    dt: f64,
    /// Per-step information-content budget; defaults to the library's
    /// per-unit-time rate scaled by `dt`.
    #[serde(default)]
    residual_budget: Option<f64>,
    /// Contact restitution coefficient; meaningful for contact laws only.
    #[serde(default)]
    restitution: f64,
    /// Seed echoed into the metadata so sampled post-processing can be
    /// reproduced; the integrator itself is deterministic.
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    outputs: OutputNames,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputNames {
    #[serde(default = "default_trajectory_name")]
    trajectory: String,
    #[serde(default = "default_audit_name")]
    audit: String,
    #[serde(default = "default_metadata_name")]
    metadata: String,
}

fn default_trajectory_name() -> String {
    "trajectory.csv".into()
}

fn default_audit_name() -> String {
    "audit.json".into()
}

fn default_metadata_name() -> String {
    "metadata.json".into()
}

impl Default for OutputNames {
    fn default() -> Self {
        OutputNames {
            trajectory: default_trajectory_name(),
            audit: default_audit_name(),
            metadata: default_metadata_name(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Validate(args) => cmd_validate(&args),
        Command::Conjugate(args) => cmd_conjugate(&args),
    };
    ExitCode::from(code)
}

// --- run ----------------------------------------------------------------

fn cmd_run(args: &RunArgs) -> u8 {
    let config = match load_config(&args.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    let seed = match resolve_seed(config.seed.unwrap_or(0)) {
        Ok(seed) => seed,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("config error: cannot create `{}`: {e}", args.out.display());
        return EXIT_CONFIG;
    }

    let opts = options_from(&config);
    let outcome = match integrate(&config.model, &config.law, &config.initial, &opts) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };

    let audit = match write_outputs(&args.out, &config, seed, &opts, &outcome) {
        Ok(audit) => audit,
        Err(e) => {
            eprintln!("output error: {e:#}");
            return EXIT_STEP;
        }
    };

    let traj = &outcome.trajectory;
    match &outcome.status {
        RunStatus::Aborted { time, reason } => {
            eprintln!(
                "scenario {}: aborted at t = {time:.6} after {} steps: {reason}",
                config.name,
                traj.steps()
            );
            println!("partial outputs written to {}", args.out.display());
            EXIT_STEP
        }
        RunStatus::Completed => {
            println!(
                "scenario {}: completed {} steps over t = {} .. {}",
                config.name,
                traj.steps(),
                opts.t_start,
                opts.t_end
            );
            println!(
                "dissipated {:.6e}, impact losses {:.6e}, ledger defect {:.3e} (closed: {})",
                traj.total_dissipated(),
                traj.total_impact_loss(),
                audit.ledger_defect,
                audit.ledger_closed
            );
            println!("outputs written to {}", args.out.display());
            for violation in &outcome.violations {
                eprintln!("violation: {violation}");
            }
            if !audit.passed {
                eprintln!(
                    "violation: audit failed ({} flagged steps, ledger closed: {})",
                    audit.flagged_steps, audit.ledger_closed
                );
            }
            if outcome.violations.is_empty() && audit.passed {
                EXIT_OK
            } else {
                EXIT_VIOLATIONS
            }
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading `{}`", path.display()))?;
    let config: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    check_config(&config)?;
    Ok(config)
}

fn check_config(config: &ScenarioConfig) -> Result<()> {
    config.model.validate().map_err(|e| anyhow!("field `model`: {e}"))?;
    let n = config.model.dim();
    config
        .law
        .validate_for_dim(n)
        .map_err(|e| anyhow!("field `law`: {e}"))?;
    if matches!(config.law, DissipationLaw::Separable { .. }) {
        bail!(
            "field `law`: no stepper ships for general separable laws; express the \
             mechanism as viscous, plastic, damage or contact"
        );
    }
    if !law_fits_layout(&config.law, &config.model) {
        bail!(
            "field `law`: `{}` does not apply to model `{}` (state layout {:?})",
            config.law.name(),
            config.model.name(),
            config.model.layout()
        );
    }
    PhaseVector::new(config.initial.q().to_vec(), config.initial.p().to_vec())
        .map_err(|e| anyhow!("field `initial`: {e}"))?;
    if config.initial.dim() != n {
        bail!(
            "field `initial`: {} coordinate pair(s), model `{}` needs {n}",
            config.initial.dim(),
            config.model.name()
        );
    }
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        bail!("field `dt`: must be positive and finite, got {}", config.dt);
    }
    if !(config.t_end > config.t0) {
        bail!(
            "field `t_end`: time window is empty ({} .. {})",
            config.t0,
            config.t_end
        );
    }
    if let Some(budget) = config.residual_budget {
        if !(budget > 0.0 && budget.is_finite()) {
            bail!("field `residual_budget`: must be positive and finite, got {budget}");
        }
    }
    if !(0.0..=1.0).contains(&config.restitution) {
        bail!(
            "field `restitution`: must lie in [0, 1], got {}",
            config.restitution
        );
    }
    options_from(config).validate().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Laws are tied to the state layout their stepper understands; a plastic
/// law on a plain oscillator has no internal variable to flow into.
fn law_fits_layout(law: &DissipationLaw, model: &HamiltonianModel) -> bool {
    match law {
        DissipationLaw::Pure => true,
        DissipationLaw::Viscous { .. } | DissipationLaw::Contact { .. } => {
            model.layout() == StateLayout::Plain
        }
        DissipationLaw::Plastic { .. } => model.layout() == StateLayout::Internal,
        DissipationLaw::Damage { .. } => model.layout() == StateLayout::Damage,
        DissipationLaw::Separable { .. } => false,
    }
}

fn options_from(config: &ScenarioConfig) -> IntegrateOptions {
    let mut opts = IntegrateOptions::new(config.t0, config.t_end, config.dt);
    if let Some(budget) = config.residual_budget {
        opts.residual_budget = budget;
    }
    opts.restitution = config.restitution;
    opts
}

fn resolve_seed(fallback: u64) -> Result<u64> {
    match std::env::var("GAPDYN_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| anyhow!("GAPDYN_SEED must be an unsigned integer, got `{text}`")),
        Err(std::env::VarError::NotPresent) => Ok(fallback),
        Err(e) => Err(anyhow!("GAPDYN_SEED: {e}")),
    }
}

fn write_outputs(
    out_dir: &Path,
    config: &ScenarioConfig,
    seed: u64,
    opts: &IntegrateOptions,
    outcome: &RunOutcome,
) -> Result<AuditReport> {
    let trajectory_path = out_dir.join(&config.outputs.trajectory);
    write_trajectory_csv(&trajectory_path, &config.model, &outcome.trajectory)
        .with_context(|| format!("writing `{}`", trajectory_path.display()))?;

    let audit = energy_audit(&config.model, &outcome.trajectory)?;
    let audit_path = out_dir.join(&config.outputs.audit);
    fs::write(&audit_path, serde_json::to_string_pretty(&audit)? + "\n")
        .with_context(|| format!("writing `{}`", audit_path.display()))?;

    let metadata = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "generator": { "name": "gapdyn-cli", "version": env!("CARGO_PKG_VERSION") },
        "scenario": config,
        "seed": seed,
        "restitution": opts.restitution,
        "scheme": {
            "stepper": "semi-implicit first order: momentum update at the frozen \
                        configuration, then configuration at the new momentum; the \
                        dissipative mechanism is resolved by a closed-form proximal \
                        substep (viscous prox, plastic return map, damage threshold \
                        clip, contact velocity projection)",
            "certificates": "every step records its deviation from Hamiltonian flow \
                             and the information content of that deviation; a run \
                             aborts when a non-exempt step exceeds residual_budget",
            "impacts": "impacts faster than the impact-speed threshold may carry \
                        restitution losses; they are exempt from the budget but \
                        logged as violations",
        },
        "tolerances": {
            "residual_budget": opts.residual_budget,
            "fixed_point": tol::FIXED_POINT,
            "membership": tol::MEMBERSHIP,
            "penetration": tol::PENETRATION,
            "boundary_band": tol::BOUNDARY_BAND,
            "impact_speed": tol::IMPACT_SPEED,
            "ledger_relative": tol::LEDGER_RELATIVE,
        },
        "status": outcome.status,
        "steps_planned": opts.steps(),
        "steps_completed": outcome.trajectory.steps(),
        "t_reached": outcome.trajectory.times.last(),
        "violations": outcome.violations,
        "outputs": config.outputs,
    });
    let metadata_path = out_dir.join(&config.outputs.metadata);
    fs::write(&metadata_path, serde_json::to_string_pretty(&metadata)? + "\n")
        .with_context(|| format!("writing `{}`", metadata_path.display()))?;
    Ok(audit)
}

/// Column order is part of the format contract (`schema_version`): node
/// time and state, the deviation certified for the step that arrived at
/// the node (zeros on the first row), the energy, and the step's
/// information content.
fn header_for(layout: StateLayout) -> &'static str {
    match layout {
        StateLayout::Plain => "t,q,p,eta_q,eta_p,H,I_residual",
        StateLayout::Internal => "t,q,q_i,p,p_i,eta_q,eta_q_i,eta_p,eta_p_i,H,I_residual",
        StateLayout::Damage => "t,q,d,p,r,eta_q,eta_d,eta_p,eta_r,H,I_residual",
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn ext(x: ExtReal) -> String {
    if x.is_finite() {
        num(x.value())
    } else {
        "inf".into()
    }
}

fn write_trajectory_csv(
    path: &Path,
    model: &HamiltonianModel,
    traj: &Trajectory,
) -> Result<()> {
    let n = model.dim();
    let mut text = String::with_capacity(64 * (traj.states.len() + 1));
    text.push_str(header_for(model.layout()));
    text.push('\n');
    for (k, z) in traj.states.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(3 + 4 * n);
        row.push(num(traj.times[k]));
        row.extend(z.q().iter().map(|&x| num(x)));
        row.extend(z.p().iter().map(|&x| num(x)));
        match k.checked_sub(1) {
            Some(step) => {
                let eta = &traj.etas[step];
                row.extend(eta.q().iter().map(|&x| num(x)));
                row.extend(eta.p().iter().map(|&x| num(x)));
                row.push(num(traj.energies[k]));
                row.push(ext(traj.residuals[step]));
            }
            None => {
                row.extend(std::iter::repeat(num(0.0)).take(2 * n));
                row.push(num(traj.energies[k]));
                row.push(num(0.0));
            }
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

// --- validate -------------------------------------------------------------

fn cmd_validate(args: &ValidateArgs) -> u8 {
    let seed = match resolve_seed(args.seed) {
        Ok(seed) => seed,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let summary = match run_validation(seed, args.mutation) {
        Ok(summary) => summary,
        Err(e) => {
            eprintln!("validation runner failed: {e}");
            return EXIT_STEP;
        }
    };
    for suite in &summary.suites {
        println!(
            "{} {:<22} {}",
            if suite.passed { "PASS" } else { "FAIL" },
            suite.name,
            suite.detail
        );
    }
    let passed = summary.suites.iter().filter(|s| s.passed).count();
    println!(
        "validation: {passed}/{} suites passed (seed {seed}, mutation {})",
        summary.suites.len(),
        mutation_label(args.mutation)
    );
    if let Some(path) = &args.json {
        let text = match serde_json::to_string_pretty(&summary) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("output error: {e}");
                return EXIT_STEP;
            }
        };
        if let Err(e) = fs::write(path, text + "\n") {
            eprintln!("output error: writing `{}`: {e}", path.display());
            return EXIT_STEP;
        }
    }
    if summary.passed {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

fn mutation_label(mutation: Mutation) -> &'static str {
    match mutation {
        Mutation::None => "none",
        Mutation::MisSignedPolar => "mis-signed-polar",
    }
}

// --- conjugate ------------------------------------------------------------

fn cmd_conjugate(args: &ConjugateArgs) -> u8 {
    let text = if Path::new(&args.spec).exists() {
        match fs::read_to_string(&args.spec) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("config error: reading `{}`: {e}", args.spec);
                return EXIT_CONFIG;
            }
        }
    } else {
        args.spec.clone()
    };
    let spec: ConvexSpec = match serde_json::from_str(&text) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("config error: shape spec: {e}");
            return EXIT_CONFIG;
        }
    };
    let (lo, hi) = (args.range[0], args.range[1]);
    let table = match spec.numerical_conjugate(lo, hi, args.samples) {
        Ok(table) => table,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let closed_form = spec.polar().ok();

    let mut text = String::from("y,phi_star_numeric,phi_star_closed_form,abs_diff\n");
    let mut max_diff: Option<f64> = None;
    for (y, value) in table.ys.iter().zip(&table.values) {
        let closed = closed_form
            .as_ref()
            .and_then(|polar| polar.eval(&[*y]).ok());
        let (closed_cell, diff_cell) = match closed {
            Some(cv) => {
                let diff = match (value.is_finite(), cv.is_finite()) {
                    (true, true) => Some((value.value() - cv.value()).abs()),
                    (false, false) => Some(0.0),
                    _ => None,
                };
                if let Some(d) = diff {
                    max_diff = Some(max_diff.map_or(d, |m: f64| m.max(d)));
                }
                (ext(cv), diff.map_or("inf".into(), num))
            }
            None => (String::new(), String::new()),
        };
        text.push_str(&format!("{},{},{},{}\n", num(*y), ext(*value), closed_cell, diff_cell));
    }
    if let Err(e) = fs::write(&args.out, text) {
        eprintln!("output error: writing `{}`: {e}", args.out.display());
        return EXIT_STEP;
    }
    match max_diff {
        Some(d) => println!(
            "wrote {} rows to {}; max |numeric - closed form| = {d:.3e}",
            table.ys.len(),
            args.out.display()
        ),
        None => println!(
            "wrote {} rows to {}; no closed form available for comparison",
            table.ys.len(),
            args.out.display()
        ),
    }
    EXIT_OK
}
