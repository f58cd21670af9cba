use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use memstring::basis_diag;
use memstring::config::{config_from_value, ControlSpec, RunConfig, TargetSpec};
use memstring::moment::{self, TargetState};
use memstring::quasi_exp;
use memstring::simulator;
use memstring::sturm_liouville::{self, EigenSystem};
use memstring::QuasiExpFamily;
use memstring::TimeGrid;

use crate::artifacts::{write_csv, write_json};
use crate::{Args, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] memstring::Error),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("non-finite value headed for {0}")]
    NonFinite(String),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) | CliError::Io(..) => "validation",
            CliError::Core(e) if e.is_validation() => "validation",
            _ => "numerical",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class() {
            "validation" => 1,
            _ => 2,
        }
    }
}

/// Apply a dotted-key override like `kernel.a=0.2` onto the raw JSON value.
fn apply_override(value: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' is not KEY=VALUE")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut node = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Usage(format!(
                "override key '{key}' has an empty segment"
            )));
        }
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Usage(format!("override key '{key}' descends into a non-object"))
        })?;
        if i == parts.len() - 1 {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Ok(())
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let config_path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Io(config_path.display().to_string(), e))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(memstring::Error::Parse(e.to_string())))?;
    for s in &args.set {
        apply_override(&mut value, s)?;
    }
    let config = config_from_value(value)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Io(args.out.display().to_string(), e))?;

    match args.threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(args, &config))
        }
        Some(_) => Err(CliError::Usage("--threads must be positive".into())),
        None => dispatch(args, &config),
    }
}

fn dispatch(args: &Args, config: &RunConfig) -> Result<(), CliError> {
    match args.command {
        Command::Eig => cmd_eig(&args.out, config),
        Command::Quasi => cmd_quasi(&args.out, config),
        Command::Gram => cmd_gram(&args.out, config),
        Command::Synthesize => cmd_synthesize(&args.out, config),
        Command::Simulate => cmd_simulate(&args.out, config),
        Command::Observe => cmd_observe(&args.out, config),
        Command::ObserveScan => cmd_observe_scan(&args.out, config, args.seed),
        Command::Roundtrip => cmd_roundtrip(&args.out, config),
    }
}

fn solve(config: &RunConfig) -> Result<EigenSystem, CliError> {
    Ok(sturm_liouville::solve_eigensystem(
        &config.medium,
        config.n_modes,
    )?)
}

fn families_for(
    config: &RunConfig,
    eig: &EigenSystem,
) -> Result<(Vec<QuasiExpFamily>, TimeGrid), CliError> {
    let families = quasi_exp::build_families(eig, &config.kernel, config.horizon, config.dt)?;
    let grid = families[0].grid;
    Ok((families, grid))
}

/// Resolve the configured target into eigen-coefficients; shorter coefficient
/// lists are zero-padded to the mode count.
fn resolve_target(config: &RunConfig, eig: &EigenSystem) -> Result<TargetState, CliError> {
    match &config.target {
        TargetSpec::Zero => Ok(TargetState::zero(eig.n_modes())),
        TargetSpec::Coefficients { v0, v1 } => {
            let m = eig.n_modes();
            if v0.len() > m || v1.len() > m {
                return Err(CliError::Core(memstring::Error::Validation {
                    field: "target".into(),
                    message: format!("more target coefficients than modes ({} > {m})", v0.len()),
                }));
            }
            let mut v0 = v0.clone();
            let mut v1 = v1.clone();
            v0.resize(m, 0.0);
            v1.resize(m, 0.0);
            Ok(TargetState::from_coefficients(v0, v1)?)
        }
        TargetSpec::Spatial { v0, v1 } => {
            let f0 = v0.build(config.medium.length, "target.v0")?;
            let f1 = v1.build(config.medium.length, "target.v1")?;
            Ok(TargetState::from_functions(
                eig,
                |x| f0.eval(x),
                |x| f1.eval(x),
            )?)
        }
    }
}

fn reference_control(config: &RunConfig, grid: &TimeGrid) -> Result<Vec<f64>, CliError> {
    let spec = config.control.clone().unwrap_or(ControlSpec::Sine {
        amplitude: 1.0,
        frequency: std::f64::consts::PI,
    });
    Ok(spec.samples_on(grid)?)
}

fn cmd_eig(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let gaps = sturm_liouville::asymptotic_gap(&eig);
    write_csv(
        &out.join("eig.csv"),
        &[
            "n",
            "lambda",
            "re_omega",
            "im_omega",
            "phi0",
            "kappa",
            "gap_to_asymptote",
        ],
        (0..eig.n_modes()).map(|n| {
            vec![
                (n + 1) as f64,
                eig.lambdas[n],
                eig.omegas[n].re,
                eig.omegas[n].im,
                eig.phi0s[n],
                eig.kappas[n],
                gaps[n],
            ]
        }),
    )
}

fn cmd_quasi(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, grid) = families_for(config, &eig)?;
    let nu = config.kernel.nu();
    for (n, fam) in families.iter().enumerate() {
        let (ref_plus, ref_minus) = quasi_exp::asymptotic_reference(fam.omega, nu, &grid);
        let path = out.join(format!("quasi_mode_{:02}.csv", n + 1));
        write_csv(
            &path,
            &[
                "t",
                "c_re",
                "c_im",
                "s_re",
                "s_im",
                "e_plus_re",
                "e_plus_im",
                "e_minus_re",
                "e_minus_im",
                "ref_plus_re",
                "ref_plus_im",
                "ref_minus_re",
                "ref_minus_im",
                "err_plus",
                "err_minus",
            ],
            (0..grid.len()).map(|j| {
                vec![
                    grid.time(j),
                    fam.c[j].re,
                    fam.c[j].im,
                    fam.s[j].re,
                    fam.s[j].im,
                    fam.e_plus[j].re,
                    fam.e_plus[j].im,
                    fam.e_minus[j].re,
                    fam.e_minus[j].im,
                    ref_plus[j].re,
                    ref_plus[j].im,
                    ref_minus[j].re,
                    ref_minus[j].im,
                    (fam.e_plus[j] - ref_plus[j]).norm(),
                    (fam.e_minus[j] - ref_minus[j]).norm(),
                ]
            }),
        )?;
    }
    Ok(())
}

fn cmd_gram(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, _) = families_for(config, &eig)?;
    let spec = basis_diag::gram_spectrum(&families);
    write_json(
        &out.join("gram.json"),
        &json!({
            "T": spec.horizon,
            "n_modes": spec.n_modes,
            "singular_values": spec.singular_values,
            "condition": spec.condition,
            "smallest": spec.smallest,
        }),
    )
}

fn cmd_synthesize(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, grid) = families_for(config, &eig)?;
    let target = resolve_target(config, &eig)?;
    let problem = moment::build_moment_problem(&eig, &families, &target)?;
    let solution = moment::synthesize_control(&problem, &config.kernel, config.svd_cutoff)?;

    write_csv(
        &out.join("g.csv"),
        &["t", "value"],
        (0..grid.len()).map(|j| vec![grid.time(j), solution.g[j]]),
    )?;
    write_csv(
        &out.join("f.csv"),
        &["t", "value"],
        (0..grid.len()).map(|j| vec![grid.time(j), solution.f[j]]),
    )?;
    write_json(
        &out.join("report.json"),
        &json!({
            "gram_condition": solution.gram_condition,
            "max_residual": solution.max_residual,
            "cutoff": solution.svd_cutoff_used,
            "modes": eig.n_modes(),
            "rank": solution.rank,
            "zero_modes": solution.zero_modes,
        }),
    )
}

fn cmd_simulate(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, grid) = families_for(config, &eig)?;
    let control = config
        .control
        .as_ref()
        .ok_or_else(|| CliError::Usage("simulate needs a 'control' entry in the config".into()))?
        .samples_on(&grid)?;
    let traj = simulator::simulate_forward(&eig, &families, &config.kernel, &control, &grid)?;

    write_csv(
        &out.join("trajectory.csv"),
        &["t", "y_norm_h1_sq", "ydot_norm_h_sq"],
        (0..grid.len()).map(|j| {
            let snap = traj.snapshot(j);
            vec![snap.t, snap.y_norm_h1_sq, snap.ydot_norm_h_sq]
        }),
    )?;
    let (a_t, adot_t) = traj.terminal();
    write_csv(
        &out.join("terminal.csv"),
        &["n", "a_T", "adot_T"],
        (0..a_t.len()).map(|n| vec![(n + 1) as f64, a_t[n], adot_t[n]]),
    )
}

fn cmd_observe(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, grid) = families_for(config, &eig)?;
    let data = resolve_target(config, &eig)?;
    let dual = simulator::simulate_dual(&eig, &families, &data.v0, &data.v1)?;
    write_csv(
        &out.join("trace.csv"),
        &["t", "v0t"],
        (0..grid.len()).map(|j| vec![grid.time(j), dual.trace[j]]),
    )
}

fn cmd_observe_scan(out: &Path, config: &RunConfig, seed: u64) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, _) = families_for(config, &eig)?;
    let report = basis_diag::observability_scan(&eig, &families, config.scan_samples, seed)?;
    write_json(
        &out.join("scan.json"),
        &json!({
            "T": report.horizon,
            "n_modes": report.n_modes,
            "n_samples": report.ratios.len(),
            "min_ratio": report.min_ratio,
            "max_ratio": report.max_ratio,
            "rayleigh_min": report.rayleigh_min,
            "rayleigh_max": report.rayleigh_max,
            "seed": report.seed,
        }),
    )
}

fn cmd_roundtrip(out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let eig = solve(config)?;
    let (families, grid) = families_for(config, &eig)?;
    let f_ref = reference_control(config, &grid)?;
    let reference = simulator::simulate_forward(&eig, &families, &config.kernel, &f_ref, &grid)?;
    let (v0, v1) = reference.terminal();
    let target = TargetState::from_coefficients(v0, v1)?;

    let problem = moment::build_moment_problem(&eig, &families, &target)?;
    let solution = moment::synthesize_control(&problem, &config.kernel, config.svd_cutoff)?;
    let replay = simulator::simulate_forward(&eig, &families, &config.kernel, &solution.f, &grid)?;
    let report = simulator::verify_terminal(&replay, &target);

    write_json(
        &out.join("roundtrip.json"),
        &json!({
            "e0": report.e0,
            "e1": report.e1,
            "e0_is_absolute": report.e0_is_absolute,
            "e1_is_absolute": report.e1_is_absolute,
            "gram_condition": solution.gram_condition,
            "max_residual": solution.max_residual,
            "cutoff": solution.svd_cutoff_used,
            "modes": eig.n_modes(),
        }),
    )
}
