//! Tables across replications: the mean and sample sd over replications of
//! the best (over p0) minimum ESS per gradient, and median curves against p0.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use anyhow::{bail, Context, Result};

use crate::output::float;

/// Name of the pseudo-group covering all coordinates.
pub const ALL: &str = "all";

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub model: String,
    pub sampler: String,
    pub group: String,
    pub p0: f64,
    pub rep: usize,
    pub min_ess: f64,
    pub min_ess_per_grad: f64,
    pub esjd: f64,
    pub esjd_per_grad: f64,
}

/// Reads a results table; failed rows are skipped.
pub fn observations_from_csv<R: Read>(r: R) -> Result<Vec<Observation>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).with_context(|| format!("missing column '{name}'"));
    let (model, sampler, p0, rep, status) = (col("model")?, col("sampler")?, col("p0")?, col("rep")?, col("status")?);
    let mut groups = vec![(ALL.to_string(), [col("min_ess")?, col("min_ess_per_grad")?, col("esjd")?, col("esjd_per_grad")?])];
    for h in header.iter() {
        if let Some(g) = h.strip_suffix("_min_ess_per_grad") {
            groups.push((
                g.to_string(),
                [col(&format!("{g}_min_ess"))?, col(h)?, col(&format!("{g}_esjd"))?, col(&format!("{g}_esjd_per_grad"))?],
            ));
        }
    }

    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if &rec[status] != "ok" {
            continue;
        }
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().with_context(|| format!("row {}: bad number '{}' in column '{}'", line + 2, &rec[k], &header[k]))
        };
        for (g, [a, b, c, d]) in &groups {
            out.push(Observation {
                model: rec[model].to_string(),
                sampler: rec[sampler].to_string(),
                group: g.clone(),
                p0: num(p0)?,
                rep: rec[rep].parse().with_context(|| format!("row {}: bad replication index", line + 2))?,
                min_ess: num(*a)?,
                min_ess_per_grad: num(*b)?,
                esjd: num(*c)?,
                esjd_per_grad: num(*d)?,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub sampler: String,
    pub group: String,
    pub reps: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub model: String,
    pub sampler: String,
    pub group: String,
    pub p0: f64,
    pub reps: usize,
    pub median_min_ess: f64,
    pub median_esjd: f64,
    pub median_min_ess_per_grad: f64,
    pub median_esjd_per_grad: f64,
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

type Key = (String, String, String);

pub fn summarize(obs: &[Observation]) -> Result<(Vec<SummaryRow>, Vec<CurveRow>)> {
    if obs.is_empty() {
        bail!("no successful rows to summarize");
    }
    // p0 > 0, so the bit pattern orders like the value.
    let mut best: BTreeMap<Key, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut curves: BTreeMap<(Key, u64), Vec<&Observation>> = BTreeMap::new();
    for o in obs {
        let key = (o.model.clone(), o.sampler.clone(), o.group.clone());
        let slot = best.entry(key.clone()).or_default().entry(o.rep).or_insert(f64::NEG_INFINITY);
        *slot = slot.max(o.min_ess_per_grad);
        curves.entry((key, o.p0.to_bits())).or_default().push(o);
    }
    let summary = best
        .into_iter()
        .map(|((model, sampler, group), reps)| {
            let vals: Vec<f64> = reps.into_values().collect();
            let (mean, sd) = mean_sd(&vals);
            SummaryRow {
                model,
                sampler,
                group,
                reps: vals.len(),
                mean,
                sd,
            }
        })
        .collect();
    let curves = curves
        .into_iter()
        .map(|(((model, sampler, group), p0), os)| {
            let med = |f: fn(&Observation) -> f64| median(&os.iter().map(|o| f(o)).collect::<Vec<_>>());
            CurveRow {
                model,
                sampler,
                group,
                p0: f64::from_bits(p0),
                reps: os.len(),
                median_min_ess: med(|o| o.min_ess),
                median_esjd: med(|o| o.esjd),
                median_min_ess_per_grad: med(|o| o.min_ess_per_grad),
                median_esjd_per_grad: med(|o| o.esjd_per_grad),
            }
        })
        .collect();
    Ok((summary, curves))
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "sampler", "group", "reps", "mean_max_min_ess_per_grad", "sd_max_min_ess_per_grad"])?;
    for r in rows {
        out.write_record([r.model.clone(), r.sampler.clone(), r.group.clone(), r.reps.to_string(), float(r.mean), float(r.sd)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "model",
        "sampler",
        "group",
        "p0",
        "reps",
        "median_min_ess",
        "median_esjd",
        "median_min_ess_per_grad",
        "median_esjd_per_grad",
    ])?;
    for r in rows {
        out.write_record([
            r.model.clone(),
            r.sampler.clone(),
            r.group.clone(),
            r.p0.to_string(),
            r.reps.to_string(),
            float(r.median_min_ess),
            float(r.median_esjd),
            float(r.median_min_ess_per_grad),
            float(r.median_esjd_per_grad),
        ])?;
    }
    out.flush()?;
    Ok(())
}
