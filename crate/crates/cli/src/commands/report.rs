use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use bpr_core::analysis::mean_std;
use bpr_core::io::{fmt_f64, write_atomic};

use crate::args::ReportArgs;
use crate::failure::usage;
use crate::summary::{CurvePoint, RunSummary};

fn resolve(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("summary.json")
    } else {
        input.to_path_buf()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// `(variant, step, mean, std, n)` rows: per step, statistics over the seeds
/// that recorded it. Steps ascend within each variant.
pub fn curve_rows(summaries: &[RunSummary], pick: impl Fn(&crate::summary::SeedRow) -> &[CurvePoint]) -> Vec<(String, u64, f64, f64, usize)> {
    let mut out = Vec::new();
    for s in summaries {
        let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for row in &s.seeds {
            for p in pick(row) {
                by_step.entry(p.step).or_default().push(p.value);
            }
        }
        for (step, values) in by_step {
            let (m, sd) = mean_std(&values).expect("non-empty by construction");
            out.push((s.label.clone(), step, m, sd, values.len()));
        }
    }
    out
}

fn curve_csv(rows: &[(String, u64, f64, f64, usize)]) -> String {
    let mut csv = String::from("variant,step,mean,std,n\n");
    for (v, step, m, sd, n) in rows {
        let _ = writeln!(csv, "{v},{step},{},{},{n}", fmt_f64(*m), fmt_f64(*sd));
    }
    csv
}

/// Comparison table as `(markdown, csv)`.
pub fn comparison(summaries: &[RunSummary]) -> (String, String) {
    let mut md = String::from(
        "| variant | algorithm | seeds | final mean | final std | final IQM | normalized IQM | reached threshold | median steps to threshold | median final ED |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    let mut csv = String::from(
        "variant,algorithm,seeds,final_mean,final_std,final_iqm,normalized_iqm,reached_threshold,median_steps_to_threshold,median_final_ed\n",
    );
    for s in summaries {
        let a = &s.aggregate;
        let algo = serde_json::to_value(s.algorithm)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            md,
            "| {} | {algo} | {} | {:.4} | {:.4} | {:.4} | {} | {}/{} | {} | {} |",
            s.label,
            a.n_seeds,
            a.final_return_mean,
            a.final_return_std,
            a.final_return_iqm,
            opt(a.normalized_iqm),
            a.seeds_reaching_threshold,
            a.n_seeds,
            opt(a.steps_to_threshold_median),
            opt(a.final_effective_dimension_median),
        );
        let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{algo},{},{},{},{},{},{},{},{}",
            s.label,
            a.n_seeds,
            fmt_f64(a.final_return_mean),
            fmt_f64(a.final_return_std),
            fmt_f64(a.final_return_iqm),
            cell(a.normalized_iqm),
            a.seeds_reaching_threshold,
            cell(a.steps_to_threshold_median),
            cell(a.final_effective_dimension_median),
        );
    }
    (md, csv)
}

pub fn load_all(inputs: &[PathBuf]) -> Result<Vec<RunSummary>> {
    let summaries = inputs
        .iter()
        .map(|p| RunSummary::load(&resolve(p)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = summaries.first() {
        if let Some(other) = summaries.iter().find(|s| s.task != first.task) {
            return Err(usage(format!(
                "summaries mix tasks ({} is {}, {} is {}); compare runs of one task at a time",
                first.label,
                first.task.name(),
                other.label,
                other.task.name()
            )));
        }
    }
    Ok(summaries)
}

pub fn run(args: &ReportArgs, root: Option<&Path>) -> Result<PathBuf> {
    let summaries = load_all(&args.inputs)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| root.unwrap_or(Path::new("bpr-output")).join("report"));
    let (md, csv) = comparison(&summaries);
    write_atomic(&out.join("comparison.md"), md.as_bytes())?;
    write_atomic(&out.join("comparison.csv"), csv.as_bytes())?;
    let lc = curve_rows(&summaries, |r| &r.learning_curve);
    write_atomic(&out.join("learning_curves.csv"), curve_csv(&lc).as_bytes())?;
    let ed = curve_rows(&summaries, |r| &r.effective_dimension_trace);
    write_atomic(&out.join("effective_dimension.csv"), curve_csv(&ed).as_bytes())?;
    print!("{md}");
    Ok(out)
}
