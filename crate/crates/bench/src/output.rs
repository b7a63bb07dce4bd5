//! Result tables. Floats are written with 17 significant digits so a table
//! reproduces the run bit for bit.

use std::io::Write;

use anyhow::Result;
use ehmc::RunReport;
use serde::Serialize;

use crate::experiment::{Experiment, ResultRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

const LEAD: [&str; 13] = [
    "model",
    "sampler",
    "p0",
    "rep",
    "seed",
    "status",
    "error",
    "eps",
    "mean_batch",
    "median_batch",
    "l_fixed",
    "warmup_grad_calls",
    "learn_grad_calls",
];

const GROUP_FIELDS: [&str; 4] = ["min_ess", "min_ess_per_grad", "esjd", "esjd_per_grad"];

pub fn csv_header(groups: &[String]) -> Vec<String> {
    let mut h: Vec<String> = LEAD.iter().map(|s| s.to_string()).collect();
    h.extend(RunReport::CSV_HEADER.iter().map(|s| s.to_string()));
    for g in groups {
        h.extend(GROUP_FIELDS.iter().map(|f| format!("{g}_{f}")));
    }
    h
}

fn csv_record(row: &ResultRow, groups: &[String]) -> Vec<String> {
    let opt_f = |x: Option<f64>| x.map(float).unwrap_or_default();
    let opt_u = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut r = vec![
        row.model.clone(),
        row.sampler.to_string(),
        row.p0.to_string(),
        row.rep.to_string(),
        row.seed.to_string(),
        if row.ok { "ok" } else { "failed" }.to_string(),
        row.error.clone().unwrap_or_default(),
        opt_f(row.eps),
        opt_f(row.mean_batch),
        opt_u(row.median_batch.map(|v| v as u64)),
        opt_u(row.l_fixed.map(|v| v as u64)),
        opt_u(row.warmup_grad_calls),
        opt_u(row.learn_grad_calls),
    ];
    match &row.report {
        Some(rep) => r.extend(rep.csv_row()),
        None => r.extend(std::iter::repeat_n(String::new(), RunReport::CSV_HEADER.len())),
    }
    for g in groups {
        match row.groups.iter().find(|m| &m.group == g) {
            Some(m) => r.extend([m.min_ess, m.min_ess_per_grad, m.esjd, m.esjd_per_grad].map(float)),
            None => r.extend(std::iter::repeat_n(String::new(), GROUP_FIELDS.len())),
        }
    }
    r
}

pub fn write_csv<W: Write>(exp: &Experiment, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header(&exp.group_names))?;
    for row in &exp.rows {
        out.write_record(csv_record(row, &exp.group_names))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(exp: &Experiment, mut w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        spec: &'a crate::experiment::ExperimentSpec,
        rows: &'a [ResultRow],
    }
    serde_json::to_writer_pretty(
        &mut w,
        &Doc {
            spec: &exp.spec,
            rows: &exp.rows,
        },
    )?;
    writeln!(w)?;
    Ok(())
}

pub fn write(exp: &Experiment, format: Format, w: impl Write) -> Result<()> {
    match format {
        Format::Csv => write_csv(exp, w),
        Format::Json => write_json(exp, w),
    }
}
