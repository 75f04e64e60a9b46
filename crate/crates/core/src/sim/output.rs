//! CSV and manifest files written after a batch of runs.
//!
//! `run_<scheme>_<seed>.csv` columns: `seed, slot, exchange, power, sum_se,
//! min_snr`, then per link `k = 1..K`: `snr_k, sinr_k, layer_k, res_az_k,
//! res_el_k`, then `t_msi, t_pro`. SNR values are linear, angles in radians,
//! times in seconds. Run files and summaries are deterministic; measured
//! processing times go to `timing.csv` only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::channel::outage_probability;
use crate::error::Result;

use super::config::{Scheme, SimConfig};
use super::{MetricsRecord, RunOutput};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_run_csv(path: &Path, records: &[MetricsRecord], k: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["seed", "slot", "exchange", "power", "sum_se", "min_snr"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=k {
        for c in ["snr", "sinr", "layer", "res_az", "res_el"] {
            header.push(format!("{c}_{i}"));
        }
    }
    header.push("t_msi".into());
    header.push("t_pro".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.seed.to_string(),
            r.slot.to_string(),
            (r.exchange as u8).to_string(),
            r.power.to_string(),
            r.sum_se.to_string(),
            r.min_snr.to_string(),
        ];
        for i in 0..k {
            row.push(r.snr[i].to_string());
            row.push(r.sinr[i].to_string());
            row.push(r.layers[i].to_string());
            row.push(r.residual[i].azimuth.to_string());
            row.push(r.residual[i].elevation.to_string());
        }
        row.push(r.t_msi.to_string());
        row.push(r.t_pro.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeRow {
    pub scheme: Scheme,
    pub power: f64,
    pub mean_sum_se: f64,
    pub records: usize,
}

/// Mean sum SE per scheme and power over every slot of every run.
pub fn summarize_se(outputs: &[RunOutput]) -> Vec<SeRow> {
    let mut acc: BTreeMap<(Scheme, u64), (f64, usize)> = BTreeMap::new();
    for o in outputs {
        for r in &o.records {
            let e = acc.entry((o.scheme, r.power.to_bits())).or_default();
            e.0 += r.sum_se;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((scheme, p), (s, n))| SeRow {
            scheme,
            power: f64::from_bits(p),
            mean_sum_se: s / n as f64,
            records: n,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutageRow {
    pub scheme: Scheme,
    pub power: f64,
    pub threshold_db: f64,
    pub outage: f64,
}

/// Fraction of slots whose smallest link SNR is below each threshold.
pub fn summarize_outage(outputs: &[RunOutput], thresholds_db: &[f64]) -> Vec<OutageRow> {
    let mut acc: BTreeMap<(Scheme, u64), Vec<f64>> = BTreeMap::new();
    for o in outputs {
        for r in &o.records {
            acc.entry((o.scheme, r.power.to_bits())).or_default().push(r.min_snr);
        }
    }
    let mut th: Vec<f64> = thresholds_db.to_vec();
    th.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for ((scheme, p), v) in acc {
        for &t in &th {
            out.push(OutageRow {
                scheme,
                power: f64::from_bits(p),
                threshold_db: t,
                outage: outage_probability(&v, 10f64.powf(t / 10.0)),
            });
        }
    }
    out
}

#[derive(Serialize)]
struct TimingRow {
    scheme: Scheme,
    seed: u64,
    local_e: f64,
    local_t: f64,
    t_msi: f64,
    t_tra: f64,
    t_pro: f64,
    total_e: f64,
    total_t: f64,
    t_ave: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes run CSVs, SE and outage summaries, timing and a manifest into
/// `dir`. Returns the written paths.
pub fn emit_outputs(outputs: &[RunOutput], config: &SimConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for o in outputs {
        let p = dir.join(format!("run_{}_{}.csv", o.scheme, o.seed));
        write_run_csv(&p, &o.records, config.k)?;
        files.push(p);
    }
    let p = dir.join("summary_se.csv");
    write_rows(&p, &summarize_se(outputs))?;
    files.push(p);
    let p = dir.join("summary_outage.csv");
    write_rows(&p, &summarize_outage(outputs, &config.thresholds_db))?;
    files.push(p);
    let timing: Vec<TimingRow> = outputs
        .iter()
        .map(|o| TimingRow {
            scheme: o.scheme,
            seed: o.seed,
            local_e: o.timing.local_e,
            local_t: o.timing.local_t,
            t_msi: o.latency.t_msi,
            t_tra: o.latency.t_tra,
            t_pro: o.latency.t_pro,
            total_e: o.latency.total_e,
            total_t: o.latency.total_t,
            t_ave: o.latency.average,
        })
        .collect();
    let p = dir.join("timing.csv");
    write_rows(&p, &timing)?;
    files.push(p);

    let mut schemes: Vec<String> = Vec::new();
    for o in outputs {
        if !schemes.contains(&o.scheme.to_string()) {
            schemes.push(o.scheme.to_string());
        }
    }
    let mut seeds: Vec<u64> = outputs.iter().map(|o| o.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut run = toml::Table::new();
    run.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    run.insert("schemes".into(), schemes.into());
    run.insert("seeds".into(), seeds.iter().map(|&s| toml::Value::Integer(s as i64)).collect::<Vec<_>>().into());
    let names: Vec<String> = files
        .iter()
        .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    run.insert("files".into(), names.into());
    let mut root = toml::Table::new();
    root.insert("run".into(), run.into());
    root.insert("config".into(), toml::Value::try_from(config)?);
    let p = dir.join("manifest.toml");
    std::fs::write(&p, toml::to_string(&root)?)?;
    files.push(p);
    Ok(files)
}
