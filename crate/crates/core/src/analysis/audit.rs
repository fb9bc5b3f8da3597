use serde::{Deserialize, Serialize};

use crate::environments::{
    build_counterexample, estimate_behavior_tabular, evaluate_on_empirical_collapsed_model, evaluate_policy_exact,
    Counterexample, TabularPolicy,
};
use crate::{Error, Result};

/// Absolute tolerance on every audited value.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditItem {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub passed: bool,
}

impl AuditItem {
    fn new(name: &str, expected: f64, actual: f64) -> Self {
        Self {
            name: name.to_string(),
            expected,
            actual,
            passed: (expected - actual).abs() <= AUDIT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub items: Vec<AuditItem>,
    /// `π(a|z)` of the greedy policy on the collapsed model, per collapsed state.
    pub greedy_policy: Vec<Vec<f64>>,
    /// True-environment value of the greedy policy is strictly below `J(π_β̂)`.
    pub greedy_worse_than_behavior: bool,
    pub passed: bool,
}

impl AuditReport {
    pub fn failures(&self) -> impl Iterator<Item = &AuditItem> {
        self.items.iter().filter(|i| !i.passed)
    }
}

/// Collapsed-state policy playing action `a0` with probability `p0` at `z`.
fn collapsed_policy(p0: f64) -> Result<TabularPolicy> {
    TabularPolicy::from_rows(&[vec![p0, 1.0 - p0], vec![0.5, 0.5]])
}

/// Lift a collapsed policy back to original states through the collapse map.
fn lift(ce: &Counterexample, pi: &TabularPolicy) -> Result<TabularPolicy> {
    let rows: Vec<Vec<f64>> = (0..ce.collapse.n_original())
        .map(|s| pi.row(ce.collapse.apply(s)).to_vec())
        .collect();
    TabularPolicy::from_rows(&rows)
}

/// Greedy optimization on the collapsed empirical model: the best
/// deterministic policy over non-terminal collapsed states, first in
/// enumeration order on ties. Policies using unseen actions are skipped.
pub fn greedy_collapsed_policy(ce: &Counterexample) -> Result<(TabularPolicy, f64)> {
    let nz = ce.collapse.n_collapsed();
    let na = ce.mdp.n_actions();
    let open: Vec<usize> = (0..nz).filter(|&z| !ce.collapse.terminal()[z]).collect();
    let total = na.pow(open.len() as u32);
    let mut best: Option<(TabularPolicy, f64)> = None;
    for code in 0..total {
        let mut rows = vec![vec![1.0 / na as f64; na]; nz];
        let mut c = code;
        for &z in &open {
            rows[z] = vec![0.0; na];
            rows[z][c % na] = 1.0;
            c /= na;
        }
        let pi = TabularPolicy::from_rows(&rows)?;
        let j = match evaluate_on_empirical_collapsed_model(&ce.dataset, &ce.collapse, &pi, ce.mdp.gamma()) {
            Ok(j) => j,
            Err(Error::UndefinedModel(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(_, b)| j > *b) {
            best = Some((pi, j));
        }
    }
    best.ok_or_else(|| Error::UndefinedModel("no deterministic policy is supported by the data".into()))
}

/// Audit the standard counterexample.
pub fn run_counterexample_audit() -> Result<AuditReport> {
    audit_counterexample(&build_counterexample())
}

/// Reproduce the counterexample values on `ce` and confirm that greedy
/// optimization on the collapsed model picks `a0` and does worse than the
/// behavior estimate in the true environment.
pub fn audit_counterexample(ce: &Counterexample) -> Result<AuditReport> {
    let (ns, na) = (ce.mdp.n_states(), ce.mdp.n_actions());
    let behavior_hat = estimate_behavior_tabular(&ce.dataset, ns, na)?.policy;
    let j_true = |pi: &TabularPolicy| evaluate_policy_exact(&ce.mdp, pi).map(|e| e.j);
    let j_bpr = |p0: f64| -> Result<f64> {
        evaluate_on_empirical_collapsed_model(&ce.dataset, &ce.collapse, &collapsed_policy(p0)?, ce.mdp.gamma())
    };
    let j_behavior_hat = j_true(&behavior_hat)?;
    let (greedy, _) = greedy_collapsed_policy(ce)?;
    let j_greedy = j_true(&lift(ce, &greedy)?)?;

    let items = vec![
        AuditItem::new("J(pi_beta_hat)", 0.25, j_behavior_hat),
        AuditItem::new("J_bpr(pi(a0|z)=1)", 1.0 / 3.0, j_bpr(1.0)?),
        AuditItem::new("J_bpr(pi(a1|z)=1)", 0.0, j_bpr(0.0)?),
        AuditItem::new("J_bpr(pi(a0|z)=0.5)", 0.25, j_bpr(0.5)?),
        AuditItem::new("greedy pi(a0|z)", 1.0, greedy.prob(0, 0)),
        AuditItem::new("J(greedy)", 0.0, j_greedy),
    ];
    let greedy_worse_than_behavior = j_greedy < j_behavior_hat;
    let passed = greedy_worse_than_behavior && items.iter().all(|i| i.passed);
    Ok(AuditReport {
        greedy_policy: (0..greedy.n_states()).map(|z| greedy.row(z).to_vec()).collect(),
        items,
        greedy_worse_than_behavior,
        passed,
    })
}
