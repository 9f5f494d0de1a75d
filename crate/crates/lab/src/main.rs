use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use hardy_core::atoms::{
    make_approx_atom, make_atom, make_molecule, validate_approx_atom, validate_atom,
    validate_molecule, AtomCandidate, ValidationReport,
};
use hardy_core::czop::{apply_operator, l2_norm_estimate, validate_kernel};
use hardy_core::decompose::{decompose_molecule, reconstruct};
use hardy_core::{Ball, GridSpec};

use hardy_lab::config::ExperimentConfig;
use hardy_lab::experiments;
use hardy_lab::gridio;
use hardy_lab::report::{EnvStamp, RunReport};

/// Numerical laboratory for weighted local Hardy spaces: atom and molecule
/// validation, annular decompositions, singular integral operators and the
/// theorem-level experiment suites.
#[derive(Parser)]
#[command(name = "hardy-lab", version, about)]
struct Cli {
    /// Config file (TOML); built-in defaults are used when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the base grid spacing
    #[arg(long, global = true)]
    grid_h: Option<f64>,

    /// Output directory (default out/<experiment>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run only the report row with this id
    #[arg(long, global = true)]
    only: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) an atom and run the atom validators
    VerifyAtom {
        /// Load a candidate from <base>.gfn / <base>.json instead of generating
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ball radius for the generated candidate
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Moment fill for an approximate atom (0 = classical)
        #[arg(long, default_value_t = 0.0)]
        moment_fill: f64,
    },
    /// Generate (or load) a molecule and run the molecule validator
    VerifyMolecule {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 0.5)]
        tail_fill: f64,
    },
    /// Decompose a molecule into shell atoms plus a residual
    Decompose {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        #[arg(long, default_value_t = 0.5)]
        tail_fill: f64,
    },
    /// Apply the singular integral operator to a generated atom
    ApplyCz {
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
    },
    /// Run an experiment suite
    Run {
        /// One of the known experiment ids, or "all"
        experiment: String,
    },
    /// Summarize a previously written run directory
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli_config: &Option<PathBuf>, experiment: &str, seed: Option<u64>, grid_h: Option<f64>) -> Result<ExperimentConfig> {
    let mut cfg = match cli_config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(experiment),
    };
    if cfg.experiment.is_empty() {
        cfg.experiment = experiment.to_string();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = grid_h {
        cfg.grid_h = h;
    }
    Ok(cfg)
}

fn out_dir(cli: &Option<PathBuf>, name: &str) -> PathBuf {
    cli.clone().unwrap_or_else(|| PathBuf::from("out").join(name))
}

fn validation_to_report(experiment: &str, cfg: &ExperimentConfig, v: &ValidationReport) -> RunReport {
    let mut report = RunReport::new(
        experiment,
        EnvStamp { grid_h: cfg.grid_h, k_max: cfg.family.k_max, scale_count: 0, seed: cfg.seed },
    );
    for (i, row) in v.rows.iter().enumerate() {
        report.push(
            format!("{experiment}/{i:03}-{}", row.condition),
            row.detail.clone(),
            row.measured,
            row.budget,
            row.pass || !row.counted,
            if row.counted { "" } else { "advisory reading" },
        );
    }
    for note in &v.notes {
        report.stat(format!("note: {note}"), 0.0);
    }
    report
}

fn dispatch(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::VerifyAtom { input, radius, moment_fill } => {
            let cfg = load_config(&cli.config, "verify-atom", cli.seed, cli.grid_h)?;
            let candidate = match input {
                Some(base) => gridio::read_candidate(base)?,
                None => {
                    let params = cfg.params.build(cfg.dim)?;
                    let omega = cfg.weight.build(cfg.dim)?;
                    let ball = Ball::new([0.0, 0.0], *radius)?;
                    let spec = GridSpec::centered_1d(0.0, 2.0 * radius, cfg.grid_h.min(radius / 64.0))?;
                    if *moment_fill > 0.0 && *radius < 1.0 {
                        make_approx_atom(&spec, &ball, &params, &omega, cfg.seed, *moment_fill)?
                            .candidate
                    } else {
                        make_atom(&spec, &ball, &params, &omega, cfg.seed)?
                    }
                }
            };
            let verdict = if *moment_fill > 0.0 {
                validate_approx_atom(&candidate, cfg.budgets.c_control)?
            } else {
                validate_atom(&candidate)?
            };
            let report = validation_to_report("verify-atom", &cfg, &verdict);
            finish(&cli, &cfg, candidate_into_files(&cli, &cfg, &candidate)?, report)
        }
        Command::VerifyMolecule { input, radius, tail_fill } => {
            let cfg = load_config(&cli.config, "verify-molecule", cli.seed, cli.grid_h)?;
            let candidate = match input {
                Some(base) => gridio::read_candidate(base)?,
                None => build_molecule(&cfg, *radius, *tail_fill)?,
            };
            let verdict = validate_molecule(&candidate, cfg.budgets.c_control, cfg.family.k_max)?;
            let report = validation_to_report("verify-molecule", &cfg, &verdict);
            finish(&cli, &cfg, candidate_into_files(&cli, &cfg, &candidate)?, report)
        }
        Command::Decompose { input, radius, tail_fill } => {
            let cfg = load_config(&cli.config, "decompose", cli.seed, cli.grid_h)?;
            let candidate = match input {
                Some(base) => gridio::read_candidate(base)?,
                None => build_molecule(&cfg, *radius, *tail_fill)?,
            };
            let d = decompose_molecule(&candidate, cfg.family.k_max, cfg.budgets.c_control)?;
            let (_, err) = reconstruct(&d)?;
            let dir = out_dir(&cli.out, "decompose");
            std::fs::create_dir_all(&dir)?;
            // coefficient table
            let mut csv = String::from("k,t_k,s_k\n");
            for (i, atom) in d.atoms.iter().enumerate() {
                let s_k = d
                    .sup_atoms
                    .iter()
                    .find(|s| s.k as usize == i)
                    .map(|s| s.coeff)
                    .unwrap_or(0.0);
                csv.push_str(&format!("{},{},{}\n", atom.k, atom.coeff, s_k));
            }
            std::fs::write(dir.join("coefficients.csv"), csv)?;
            for atom in &d.atoms {
                gridio::write_gridfunction(
                    &atom.candidate.f,
                    &dir.join(format!("atom-{:02}.gfn", atom.k)),
                )?;
            }
            gridio::write_gridfunction(&d.residual.f, &dir.join("residual.gfn"))?;
            let manifest = serde_json::json!({
                "ball_radius": d.ball.radius,
                "k_max": cfg.family.k_max,
                "c_t": d.c_t,
                "c_s": d.c_s,
                "sum_t_p": d.sum_t_p,
                "sum_t_p_closed_form": d.sum_t_p_closed_form(),
                "sum_s_p": d.sum_s_p,
                "biorthogonality_residual": d.biortho_residual_max,
                "gram_condition": d.gram_cond_max,
                "dual_uniform_constant": d.dual_uniform_constant,
                "shell_poly_bound_constant": d.poly_bound_constant,
                "reconstruction_error": err,
            });
            std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
            println!(
                "decomposed into {} shell atoms + {} corrections; reconstruction error {err:.3e}",
                d.atoms.len(),
                d.sup_atoms.len()
            );
            println!("wrote {}", dir.display());
            Ok(err <= 1e-3)
        }
        Command::ApplyCz { radius } => {
            let cfg = load_config(&cli.config, "apply-cz", cli.seed, cli.grid_h)?;
            let params = cfg.params.build(cfg.dim)?;
            let omega = cfg.weight.build(cfg.dim)?;
            let ball = Ball::new([0.0, 0.0], *radius)?;
            let spec = GridSpec::centered_1d(0.0, 2.0 * radius + 4.0 * cfg.grid_h, cfg.grid_h)?;
            let atom = make_atom(&spec, &ball, &params, &omega, cfg.seed)?;
            let kernel = cfg.kernel.build(cfg.dim, cfg.params.mu, cfg.params.delta)?;
            let validation = validate_kernel(&kernel, 4.0, cfg.grid_h, 400, cfg.seed);
            let image = hardy_core::czop::atom_image_report(
                &kernel,
                &validation,
                &atom,
                cfg.params.lambda,
                cfg.family.k_annuli,
                cfg.budgets.c_operator,
            )?;
            let norm_spec = GridSpec::new(1, [-4.0, 0.0], [4.0, 0.0], cfg.grid_h)?;
            let l2 = l2_norm_estimate(&kernel, &validation, &norm_spec, 30, cfg.seed)?;
            let dir = out_dir(&cli.out, "apply-cz");
            std::fs::create_dir_all(&dir)?;
            gridio::write_gridfunction(&image.image.f, &dir.join("image.gfn"))?;
            let mut moments = String::from("alpha,measured,unit_budget\n");
            for (a, m, unit) in &image.moment_rows {
                moments.push_str(&format!("\"{a}\",{m},{unit}\n"));
            }
            std::fs::write(dir.join("moments.csv"), moments)?;
            let tf_small = apply_operator(&kernel, &validation, &atom.f, &atom.f.spec)?;
            gridio::write_gridfunction(&tf_small, &dir.join("image-on-input-grid.gfn"))?;
            let report = validation_to_report("apply-cz", &cfg, &image.validation);
            let manifest = serde_json::json!({
                "kernel": cfg.kernel.family,
                "mu": cfg.params.mu,
                "delta": cfg.params.delta,
                "lambda": image.lambda,
                "molecule_ball_radius": image.molecule_ball.radius,
                "l2_operator_norm_est": l2,
                "kernel_c_size": validation.c_size,
                "kernel_c_smooth": validation.c_smooth,
            });
            std::fs::write(dir.join("operator.json"), serde_json::to_string_pretty(&manifest)?)?;
            println!("{}", report.render());
            report.write(&dir)?;
            Ok(report.pass())
        }
        Command::Run { experiment } => {
            if experiment == "all" {
                let mut all_pass = true;
                for id in experiments::EXPERIMENTS {
                    let cfg = load_config(&cli.config, id, cli.seed, cli.grid_h)?;
                    let report = experiments::run(&cfg, cli.only.as_deref())?;
                    // one subdirectory per suite
                    let dir = match &cli.out {
                        Some(base) => base.join(id),
                        None => out_dir(&cli.out, id),
                    };
                    report.write(&dir)?;
                    print!("{}", report.render());
                    all_pass &= report.pass();
                }
                return Ok(all_pass);
            }
            let mut cfg = load_config(&cli.config, experiment, cli.seed, cli.grid_h)?;
            cfg.experiment = experiment.clone();
            let report = experiments::run(&cfg, cli.only.as_deref())?;
            let dir = out_dir(&cli.out, experiment);
            report.write(&dir)?;
            print!("{}", report.render());
            Ok(report.pass())
        }
        Command::Report => {
            let dir = cli
                .out
                .clone()
                .context("report needs --out pointing at a run directory")?;
            let report = RunReport::read(&dir)?;
            print!("{}", report.render());
            Ok(report.pass())
        }
    }
}

fn build_molecule(cfg: &ExperimentConfig, radius: f64, tail_fill: f64) -> Result<AtomCandidate> {
    let params = cfg.params.build(cfg.dim)?;
    let omega = cfg.weight.build(cfg.dim)?;
    let h = cfg.grid_h;
    let r = ((radius / h).round().max(32.0)) * h;
    let ball = Ball::new([0.0, 0.0], r)?;
    let half = r * 2f64.powi(cfg.family.k_max as i32);
    let spec = GridSpec::new(1, [-half, 0.0], [half, 0.0], h)?;
    Ok(make_molecule(&spec, &ball, &params, &omega, cfg.seed, tail_fill)?)
}

fn candidate_into_files(cli: &Cli, cfg: &ExperimentConfig, c: &AtomCandidate) -> Result<PathBuf> {
    let dir = out_dir(&cli.out, &cfg.experiment);
    std::fs::create_dir_all(&dir)?;
    gridio::write_candidate(c, &cfg.weight, cfg.seed, &dir.join("candidate"))?;
    Ok(dir)
}

fn finish(cli: &Cli, _cfg: &ExperimentConfig, dir: PathBuf, mut report: RunReport) -> Result<bool> {
    if let Some(id) = &cli.only {
        report.retain_only(id);
        if report.rows.is_empty() {
            anyhow::bail!("no row with id '{id}'");
        }
    }
    print!("{}", report.render());
    report.write(&dir)?;
    Ok(report.pass())
}
