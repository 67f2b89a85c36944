//! Command-line runner: reproducible simulation, optimisation and sizing
//! runs driven by a TOML configuration, with CSV/JSON outputs and optional
//! SVG charts.

mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bess_core::config::RunConfig;
use bess_core::controller::PenaltyBounds;
use bess_core::degradation::{rainflow, DegradationState};
use bess_core::error::CoreError;
use bess_core::optimizer::{chance_upper_bound, run_lifetime, sizing_sweep, Termination, YearInputs};
use bess_core::simulation::{run_fcr, FcrContext};

#[derive(Parser)]
#[command(
    name = "bess",
    version,
    about = "Battery storage simulation, chance-constrained controller tuning and sizing for frequency containment reserve"
)]
struct Cli {
    /// TOML run configuration; built-in defaults (synthetic data) when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 keeps the automatic choice.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Render SVG charts next to the data outputs.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop run over a number of days with the configured controller.
    Simulate {
        /// Days to simulate (taken from the start of the frequency pool).
        #[arg(long, default_value_t = 1)]
        days: usize,
    },
    /// Multi-year chance-constrained controller tuning.
    Optimize,
    /// NPV surface over rated energy and C-rate.
    Sweep {
        /// Comma-separated rated energies in MWh (overrides the config).
        #[arg(long, value_delimiter = ',')]
        energies_mwh: Option<Vec<f64>>,
        /// Comma-separated C-rates (overrides the config).
        #[arg(long, value_delimiter = ',')]
        c_rates: Option<Vec<f64>>,
        /// Comma-separated investment cost levels in EUR/kWh.
        #[arg(long, value_delimiter = ',')]
        costs: Option<Vec<f64>>,
    },
    /// Rainflow cycle extraction from a SoC trace CSV (column `soc`).
    Rainflow {
        #[arg(long)]
        input: PathBuf,
        /// Cell capacity for the throughput accounting, ampere-hours.
        #[arg(long, default_value_t = 2.05)]
        capacity_ah: f64,
    },
    /// Binomial upper confidence bound on a violation probability.
    CheckBound {
        #[arg(long)]
        violations: u64,
        #[arg(long)]
        samples: u64,
        #[arg(long, default_value_t = 0.001)]
        beta: f64,
    },
}

/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 infeasible optimisation.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Config(_) | CoreError::InvalidParams(_)) => 2,
        Some(CoreError::Data { .. } | CoreError::Io { .. }) => 3,
        Some(CoreError::Prequalification(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

struct Session {
    cfg: RunConfig,
    base: PathBuf,
    out_dir: PathBuf,
    config_path: Option<PathBuf>,
    svg: bool,
}

fn open_session(cli: &Cli) -> Result<Session> {
    let (cfg, base) = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?;
            let base = path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            (cfg, base)
        }
        None => (RunConfig::default_config(), PathBuf::from(".")),
    };
    let mut cfg = cfg;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.clone();
    }
    if cfg.run.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.jobs)
            .build_global()
            .ok();
    }
    let out_dir = cfg.run.out_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    Ok(Session {
        cfg,
        base,
        out_dir,
        config_path: cli.config.clone(),
        svg: cli.svg,
    })
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::CheckBound {
            violations,
            samples,
            beta,
        } => {
            let bound = chance_upper_bound(*violations, *samples, *beta)?;
            println!("{bound:.10}");
            if cli.out.is_some() {
                let session = open_session(&cli)?;
                output::write_manifest(&session, "check-bound")?;
                output::write_json(
                    &session.out_dir.join("bound.json"),
                    &serde_json::json!({
                        "violations": violations,
                        "samples": samples,
                        "beta": beta,
                        "upper_bound": bound,
                    }),
                )?;
            }
            Ok(0)
        }
        Command::Rainflow { input, capacity_ah } => {
            let session = cli.out.as_ref().map(|_| open_session(&cli)).transpose()?;
            cmd_rainflow(input, *capacity_ah, session.as_ref())
        }
        Command::Simulate { days } => {
            let session = open_session(&cli)?;
            cmd_simulate(&session, *days)
        }
        Command::Optimize => {
            let session = open_session(&cli)?;
            cmd_optimize(&session)
        }
        Command::Sweep {
            energies_mwh,
            c_rates,
            costs,
        } => {
            let session = open_session(&cli)?;
            cmd_sweep(&session, energies_mwh, c_rates, costs)
        }
    }
}

fn cmd_rainflow(input: &Path, capacity_ah: f64, session: Option<&Session>) -> Result<u8> {
    let mut reader = csv::Reader::from_path(input).map_err(|e| CoreError::Data {
        path: input.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CoreError::Data {
            path: input.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let soc_col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("soc"))
        .unwrap_or(0);
    let mut soc = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoreError::Data {
            path: input.display().to_string(),
            line: idx + 2,
            message: e.to_string(),
        })?;
        let value: f64 = record
            .get(soc_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| CoreError::Data {
                path: input.display().to_string(),
                line: idx + 2,
                message: format!("bad soc value: {e}"),
            })?;
        soc.push(value);
    }
    let records = rainflow(&soc, capacity_ah);
    let render = |mut writer: csv::Writer<Box<dyn std::io::Write>>| -> Result<()> {
        writer.write_record(["soc_av", "dod_pct", "q_cum_ah", "weight"])?;
        for rec in &records {
            writer.write_record([
                format!("{}", rec.soc_av),
                format!("{}", rec.dod_pct),
                format!("{}", rec.q_cum_ah),
                match rec.weight {
                    bess_core::degradation::CycleWeight::Half => "half".to_string(),
                    bess_core::degradation::CycleWeight::Full => "full".to_string(),
                },
            ])?;
        }
        writer.flush()?;
        Ok(())
    };
    render(csv::Writer::from_writer(Box::new(std::io::stdout())))?;
    if let Some(session) = session {
        output::write_manifest(session, "rainflow")?;
        let path = session.out_dir.join("records.csv");
        let file = std::fs::File::create(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        render(csv::Writer::from_writer(Box::new(file)))?;
    }
    Ok(0)
}

fn cmd_simulate(session: &Session, days: usize) -> Result<u8> {
    let cfg = &session.cfg;
    let bess = cfg.build_bess(&session.base)?;
    let rules = cfg.build_rules(&bess)?;
    let params = cfg.build_controller()?;
    let scenario = cfg.build_scenario(&session.base)?;
    let pool = cfg.build_pool(&session.base)?;
    let degr = DegradationState::new(bess.cell.r0, bess.cell.r1);
    let prequal = bess_core::bess::doppelhoecker_test(&bess, &degr, rules.r_w)?;
    let bounds: PenaltyBounds<f64> = prequal.bounds();

    // Contiguous days from the pool start (day id k*96 starts at k days).
    let mut delta_f = Vec::with_capacity(days * pool.day_len());
    let mut buf = Vec::new();
    for k in 0..days.max(1) {
        let id = (k * 96) % pool.day_sample_count();
        pool.day_into(id, &mut buf);
        delta_f.extend_from_slice(&buf);
    }

    let ctx = FcrContext {
        bess: &bess,
        degr: &degr,
        rules: &rules,
        params: &params,
        bounds: &bounds,
    };
    let run = run_fcr(&ctx, &delta_f, params.soc_0, true);
    let records = run.records.as_deref().unwrap_or(&[]);

    output::write_manifest(session, "simulate")?;
    let trace_path = session.out_dir.join("trace.csv");
    output::write_trace_csv(&trace_path, records)?;

    let cycles = rainflow(&run.soc_trace, degr.capacity_ah(bess.cell.capacity_ah));
    let throughput_ah = cycles.last().map(|c| c.q_cum_ah).unwrap_or(0.0);
    let elec_cost =
        bess_core::economics::electricity_cost(&run.economics, &scenario, |b| b, 0);
    let summary = serde_json::json!({
        "days": days,
        "steps": run.soc_trace.len(),
        "penalty_fraction": run.penalty_fraction,
        "cycle_count": cycles.len(),
        "throughput_ah": throughput_ah,
        "grid_in_wh": run.economics.grid_in_wh,
        "grid_out_wh": run.economics.grid_out_wh,
        "electricity_cost_eur": elec_cost,
        "clipped_steps": run.clipped_steps,
        "soc_bounds_30min": { "min": bounds.soc_min, "max": bounds.soc_max },
        "prequal_discharged_wh": prequal.discharged_energy_wh,
    });
    output::write_json(&session.out_dir.join("summary.json"), &summary)?;

    if session.svg {
        svg::soc_chart(
            &session.out_dir.join("trace.svg"),
            records,
            bounds.soc_min,
            bounds.soc_max,
        )?;
    }
    println!(
        "simulated {} steps over {days} day(s): penalty fraction {:.6}, {} cycles, costs {:.2} EUR",
        run.soc_trace.len(),
        run.penalty_fraction,
        cycles.len(),
        elec_cost
    );
    Ok(0)
}

fn cmd_optimize(session: &Session) -> Result<u8> {
    let cfg = &session.cfg;
    let bess = cfg.build_bess(&session.base)?;
    let rules = cfg.build_rules(&bess)?;
    let ageing = cfg.build_ageing();
    let scenario = cfg.build_scenario(&session.base)?;
    let pool = cfg.build_pool(&session.base)?;
    let opt = cfg.build_optimizer()?;
    let inputs = YearInputs {
        bess: &bess,
        ageing: &ageing,
        scenario: &scenario,
        pool: &pool,
        rules,
        cfg: &opt,
        master_seed: cfg.run.seed,
    };
    let run = run_lifetime(&inputs)?;

    output::write_manifest(session, "optimize")?;
    output::write_json(&session.out_dir.join("years.json"), &run.years)?;
    let lifetime = serde_json::json!({
        "termination": run.termination,
        "k_max": run.lifetime.k_max,
        "service_years": run.lifetime.service_years,
        "discounted_net_revenue_eur": run.lifetime.discounted_net_revenue_eur,
        "years": run.lifetime.years,
    });
    output::write_json(&session.out_dir.join("lifetime.json"), &lifetime)?;
    output::write_optimize_log(&session.out_dir.join("log.csv"), &run.logs)?;

    for year in &run.years {
        println!(
            "year {}: eps {:.6} ({}), capacity {:.4}, x = (k_p {:.3}, soc_0 {:.3}, o_d {:.3}, db_p {:.3})",
            year.year_k,
            year.eps_k,
            if year.feasible { "ok" } else { "infeasible" },
            year.capacity_after,
            year.x_hat.k_p,
            year.x_hat.soc_0,
            year.x_hat.o_d,
            year.x_hat.db_p,
        );
    }
    println!(
        "terminated: {:?} after {} year(s), discounted net revenue {:.0} EUR",
        run.termination, run.lifetime.k_max, run.lifetime.discounted_net_revenue_eur
    );
    if matches!(run.termination, Termination::Infeasible) && run.lifetime.k_max == 0 {
        return Ok(4);
    }
    Ok(0)
}

fn cmd_sweep(
    session: &Session,
    energies_mwh: &Option<Vec<f64>>,
    c_rates: &Option<Vec<f64>>,
    costs: &Option<Vec<f64>>,
) -> Result<u8> {
    let cfg = &session.cfg;
    let mut spec = cfg.build_sweep_spec();
    if let Some(e) = energies_mwh {
        spec.energies_wh = e.iter().map(|e| e * 1.0e6).collect();
    }
    if let Some(c) = c_rates {
        spec.c_rates = c.clone();
    }
    if let Some(costs) = costs {
        spec.cost_eur_per_kwh = costs.clone();
    }
    if spec.energies_wh.is_empty() || spec.c_rates.is_empty() {
        return Err(CoreError::Config("sweep grid must be non-empty".into()).into());
    }
    let cell = cfg.build_cell()?;
    let ocv = cfg.build_ocv(&session.base)?;
    let inverter = cfg.build_inverter(&session.base)?;
    let ageing = cfg.build_ageing();
    let scenario = cfg.build_scenario(&session.base)?;
    let pool = cfg.build_pool(&session.base)?;
    let opt = cfg.build_optimizer()?;

    let points = sizing_sweep(
        &cell,
        &ocv,
        &inverter,
        cfg.run.dt_s,
        &ageing,
        &scenario,
        &pool,
        &opt,
        &spec,
        cfg.run.seed,
    )?;

    output::write_manifest(session, "sweep")?;
    output::write_sweep_csv(&session.out_dir.join("sweep.csv"), &spec, &points)?;
    output::write_json(&session.out_dir.join("sweep.json"), &points)?;

    // Mark the max-NPV cell per cost level.
    let mut best = Vec::new();
    for (ci, &cost) in spec.cost_eur_per_kwh.iter().enumerate() {
        if let Some(p) = points
            .iter()
            .max_by(|a, b| a.npv_eur[ci].total_cmp(&b.npv_eur[ci]))
        {
            best.push(serde_json::json!({
                "cost_eur_per_kwh": cost,
                "e_rated_mwh": p.e_rated_wh / 1.0e6,
                "c_rate": p.c_rate,
                "npv_eur": p.npv_eur[ci],
            }));
            println!(
                "max NPV at {cost} EUR/kWh: {:.1} MWh / {:.1}C -> {:.0} EUR",
                p.e_rated_wh / 1.0e6,
                p.c_rate,
                p.npv_eur[ci]
            );
        }
    }
    output::write_json(
        &session.out_dir.join("sweep_summary.json"),
        &serde_json::json!({ "max_npv": best }),
    )?;

    if session.svg {
        svg::npv_chart(&session.out_dir.join("sweep.svg"), &spec, &points)?;
    }
    Ok(0)
}
