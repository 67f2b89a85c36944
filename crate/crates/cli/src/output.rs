//! Output writers: run manifest, trace CSV, optimisation log and the sweep
//! table. Everything lands under the configured output directory.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use bess_core::bess::StepRecord;
use bess_core::optimizer::{IterLogRow, SweepPoint, SweepSpec};

use crate::Session;

/// FNV-1a 64-bit hash, used to fingerprint the configuration.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Every command drops a manifest with the seed, config fingerprint and
/// version so results can be reproduced.
pub fn write_manifest(session: &Session, command: &str) -> Result<()> {
    let config_hash = match &session.config_path {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("hashing config {}", path.display()))?;
            format!("{:016x}", fnv1a64(&bytes))
        }
        None => "builtin-defaults".to_string(),
    };
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": session.cfg.run.seed,
        "jobs": session.cfg.run.jobs,
        "dt_s": session.cfg.run.dt_s,
        "config": session.config_path.as_ref().map(|p| p.display().to_string()),
        "config_fnv1a64": config_hash,
    });
    write_json(&session.out_dir.join("manifest.json"), &manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Per-step decomposition trace.
pub fn write_trace_csv(path: &Path, records: &[StepRecord<f64>]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    writer.write_record([
        "t",
        "delta_f",
        "p_grid",
        "p_rech",
        "p_od",
        "p_hvac",
        "i_cell",
        "v_bat",
        "soc",
        "temperature",
    ])?;
    for r in records {
        writer.write_record([
            format!("{}", r.t_s),
            format!("{}", r.delta_f_hz),
            format!("{}", r.p_grid_w),
            format!("{}", r.p_rech_w),
            format!("{}", r.p_od_w),
            format!("{}", r.p_hvac_w),
            format!("{}", r.i_cell_a),
            format!("{}", r.v_bat_v),
            format!("{}", r.soc),
            format!("{}", r.temperature_c),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Optimisation log: one row per evolution step, per year.
pub fn write_optimize_log(path: &Path, logs: &[Vec<IterLogRow>]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    writer.write_record([
        "year",
        "iteration",
        "best_objective",
        "population_std",
        "penalty_set_len",
    ])?;
    for (year, rows) in logs.iter().enumerate() {
        for row in rows {
            writer.write_record([
                format!("{year}"),
                format!("{}", row.iteration),
                format!("{}", row.best_objective),
                format!("{}", row.population_std),
                format!("{}", row.penalty_set_len),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Sweep table: one row per grid point, NPV columns per cost level.
pub fn write_sweep_csv(path: &Path, spec: &SweepSpec, points: &[SweepPoint]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec![
        "c_rate".to_string(),
        "e_rated_mwh".to_string(),
        "status".to_string(),
        "k_max".to_string(),
        "service_years".to_string(),
        "revenue_eur".to_string(),
    ];
    for cost in &spec.cost_eur_per_kwh {
        header.push(format!("npv_eur_at_{cost}"));
    }
    writer.write_record(&header)?;
    for p in points {
        let mut row = vec![
            format!("{}", p.c_rate),
            format!("{}", p.e_rated_wh / 1.0e6),
            p.status.clone(),
            format!("{}", p.k_max),
            format!("{:.3}", p.service_years),
            format!("{:.2}", p.discounted_net_revenue_eur),
        ];
        for npv in &p.npv_eur {
            row.push(format!("{npv:.2}"));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
