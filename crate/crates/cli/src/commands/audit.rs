use std::path::Path;

use anyhow::Result;
use bpr_core::analysis::{audit_counterexample, run_counterexample_audit};
use bpr_core::environments::build_counterexample_with_reward;
use bpr_core::io::{to_json_pretty, write_json};

use crate::args::AuditArgs;
use crate::audit::{run_suites, FullAudit, AUDIT_SCHEMA_VERSION};
use crate::failure::AuditFailed;

/// Configurations per invariant suite.
pub const SUITE_CASES: usize = 100;

pub fn collect(perturb_reward: Option<f64>) -> Result<FullAudit> {
    let counterexample = match perturb_reward {
        Some(r) => audit_counterexample(&build_counterexample_with_reward(r))?,
        None => run_counterexample_audit()?,
    };
    let suites = run_suites(SUITE_CASES)?;
    let passed = counterexample.passed && suites.iter().all(|s| s.passed);
    Ok(FullAudit {
        schema_version: AUDIT_SCHEMA_VERSION,
        counterexample,
        suites,
        passed,
    })
}

pub fn run(args: &AuditArgs, root: Option<&Path>) -> Result<()> {
    let report = collect(args.perturb_reward)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| root.unwrap_or(Path::new("bpr-output")).join("audit.json"));
    write_json(&out, &report)?;
    if args.json {
        print!("{}", to_json_pretty(&report)?);
    } else {
        for item in &report.counterexample.items {
            let verdict = if item.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {:<24} expected {:.12} got {:.12}", item.name, item.expected, item.actual);
        }
        for s in &report.suites {
            let verdict = if s.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {:<40} {} cases, {} failures, worst {:.3e}", s.name, s.cases, s.failures, s.worst);
        }
    }
    if !report.passed {
        let failing: Vec<&str> = report
            .counterexample
            .failures()
            .map(|i| i.name.as_str())
            .chain(report.suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()))
            .collect();
        return Err(AuditFailed {
            detail: serde_json::json!({ "failed": failing }).to_string(),
        }
        .into());
    }
    Ok(())
}
