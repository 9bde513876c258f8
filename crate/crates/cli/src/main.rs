mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use imsmc_core::harness::{
    self, compute_metrics, export_csv, import_csv, metric_options, parse_value_list, run_setup,
    ControllerKind, ExperimentConfig, Metrics,
};
use imsmc_core::linalg;
use imsmc_core::surface::{default_delta_grid, design_g_lmi, stability_block_max_eigenvalue, verify_quadratic_stability, LmiOptions};
use imsmc_core::HarnessError;

#[derive(Parser)]
#[command(name = "imsmc", version, about = "Sliding mode control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Robust,
    Imsmc,
}

impl From<Kind> for ControllerKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Robust => ControllerKind::Robust,
            Kind::Imsmc => ControllerKind::Imsmc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Design the sliding-surface gain from the LMI and print its certificate.
    DesignG { config: PathBuf },
    /// Run one experiment and write its trajectory as CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the controller kind from the config.
        #[arg(long, value_enum)]
        controller: Option<Kind>,
    },
    /// Run the robust and the input-mapping controllers and tabulate metrics.
    Compare { config: PathBuf },
    /// Run the invariant suite.
    Verify { config: PathBuf },
    /// Run the experiment over a list of values for one config key.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. `plant.delta`.
        #[arg(long)]
        param: String,
        /// Comma-separated TOML values, e.g. `0.4, 0.8, 2.0`.
        #[arg(long)]
        values: String,
    },
    /// Render per-column line charts of a trajectory CSV as SVG.
    Plot {
        csv: PathBuf,
        /// Output file; defaults to the CSV path with an `.svg` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated column names; defaults to every numeric column.
        #[arg(long)]
        columns: Option<String>,
    },
}

fn fmt_row(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_matrix(m: &imsmc_core::nalgebra::DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| fmt_row(&m.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    format!("[{}]", rows.join(", "))
}

fn metrics_line(label: &str, m: &Metrics) -> String {
    format!(
        "{label:<8} {:>13} {:>17} {:>18.3e} {:>17.6} {:>12.3e}",
        m.settling_time,
        m.band_entry_time.map_or("-".to_string(), |k| k.to_string()),
        m.max_band_violation,
        m.chattering_index,
        m.compensator_increment_bound,
    )
}

const METRICS_HEADER: &str =
    "         settling_time  band_entry_time  max_band_violation  chattering_index  delta_hat";

fn design_g(config: PathBuf) -> Result<bool> {
    let setup = ExperimentConfig::from_path(&config)?.validate()?;
    let sol = design_g_lmi(&setup.rf, &LmiOptions::default()).map_err(HarnessError::from)?;
    let block_max = stability_block_max_eigenvalue(&setup.rf, &sol);
    let grid = default_delta_grid(&setup.rf, 21, setup.seed);
    let stab = verify_quadratic_stability(&setup.rf, &sol.surface(), &grid);
    println!("G = {}", fmt_matrix(&sol.g));
    println!("R1 = {}", fmt_matrix(&sol.r1));
    println!("Rg = {}", fmt_matrix(&sol.rg));
    println!("gamma = {:.6}", sol.gamma);
    println!("lmi_max_eigenvalue = {block_max:.6e}");
    println!(
        "stability: max spectral radius {:.6} over {} samples ({})",
        stab.max_radius,
        grid.len(),
        if stab.stable { "stable" } else { "NOT stable" }
    );
    let r1_min = linalg::min_sym_eigenvalue(&sol.r1);
    Ok(block_max < -LmiOptions::default().margin_tol && r1_min > 0.0 && stab.stable)
}

fn run(config: PathBuf, out: PathBuf, controller: Option<Kind>) -> Result<bool> {
    let setup = ExperimentConfig::from_path(&config)?.validate()?;
    let kind = controller.map_or(setup.kind, Into::into);
    let log = run_setup(&setup, kind)?;
    export_csv(&log, &out)?;
    let m = compute_metrics(&log, &metric_options(&setup));
    println!("wrote {} rows to {}", log.len(), out.display());
    println!("{METRICS_HEADER}");
    println!("{}", metrics_line(label(kind), &m));
    Ok(true)
}

fn label(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Robust => "robust",
        ControllerKind::Imsmc => "imsmc",
    }
}

fn compare(config: PathBuf) -> Result<bool> {
    let setup = ExperimentConfig::from_path(&config)?.validate()?;
    let opts = metric_options(&setup);
    println!("{METRICS_HEADER}");
    for kind in [ControllerKind::Robust, ControllerKind::Imsmc] {
        let m = compute_metrics(&run_setup(&setup, kind)?, &opts);
        println!("{}", metrics_line(label(kind), &m));
    }
    Ok(true)
}

fn verify(config: PathBuf) -> Result<bool> {
    let cfg = ExperimentConfig::from_path(&config)?;
    let report = harness::verify(&cfg)?;
    for c in &report.checks {
        println!(
            "[{}] {}::{} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.module,
            c.name,
            c.detail
        );
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", report.checks.len());
    Ok(report.all_passed())
}

fn sweep(config: PathBuf, param: String, values: String) -> Result<bool> {
    let cfg = ExperimentConfig::from_path(&config)?;
    let values = parse_value_list(&values)
        .map_err(|m| HarnessError::config("--values", m))?;
    let points = harness::sweep(&cfg, &param, &values);
    println!("{:<12} {}", param, &METRICS_HEADER[9..]);
    let mut first_err = None;
    for p in points {
        match p.result {
            Ok(m) => println!("{}", metrics_line(&format!("{:<12}", p.value), &m)),
            Err(e) => {
                println!("{:<12} error: {e}", p.value);
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(true),
    }
}

fn plot_cmd(csv: PathBuf, out: Option<PathBuf>, columns: Option<String>) -> Result<bool> {
    let log = import_csv(&csv)?;
    if log.is_empty() {
        bail!("{} holds no rows", csv.display());
    }
    let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let wanted: Option<Vec<String>> =
        columns.map(|c| c.split(',').map(|s| s.trim().to_string()).collect());
    let svg = plot::render(&text, wanted.as_deref())?;
    let out = out.unwrap_or_else(|| csv.with_extension("svg"));
    std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DesignG { config } => design_g(config),
        Command::Run { config, out, controller } => run(config, out, controller),
        Command::Compare { config } => compare(config),
        Command::Verify { config } => verify(config),
        Command::Sweep { config, param, values } => sweep(config, param, values),
        Command::Plot { csv, out, columns } => plot_cmd(csv, out, columns),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e
                .downcast_ref::<HarnessError>()
                .is_some_and(HarnessError::is_config);
            ExitCode::from(if is_config { 2 } else { 1 })
        }
    }
}
