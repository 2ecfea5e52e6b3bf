use std::fmt::Write;

use ctxdep::{AnalysisReport, ComparisonReport};

const MAX_LISTED: usize = 25;

pub fn render(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "global alpha {} over {} comparison(s); divergences in {}",
        report.alpha,
        report.comparisons.len(),
        report.units
    );
    for c in &report.comparisons {
        comparison(&mut s, c);
    }
    s
}

fn comparison(s: &mut String, c: &ComparisonReport) {
    let agg = &c.aggregate;
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "[{}] contexts {} | local alpha {:.6}",
        c.comparison_id,
        c.contexts.join(", "),
        c.alpha_local
    );
    let verdict = if c.detected {
        "context dependence detected"
    } else {
        "no context dependence detected"
    };
    let _ = writeln!(s, "  verdict: {verdict}");
    let _ = writeln!(
        s,
        "  aggregate: N_sigma = {:.3} vs threshold {:.3} (LLR {:.3}, k = {}, p = {:.3e}){}",
        agg.n_sigma,
        agg.n_sigma_threshold,
        agg.llr,
        agg.k,
        agg.p,
        if agg.triggered { " -> significant" } else { "" }
    );
    let _ = writeln!(
        s,
        "  rejected circuits: {} of {} (p < {:.3e})",
        c.rejected_count,
        c.circuits.len(),
        c.p_threshold
    );
    let rejected: Vec<&str> = c.rejected().map(|r| r.id.as_str()).collect();
    for id in rejected.iter().take(MAX_LISTED) {
        let _ = writeln!(s, "    {id}");
    }
    if rejected.len() > MAX_LISTED {
        let _ = writeln!(s, "    ... and {} more", rejected.len() - MAX_LISTED);
    }
    match c.max_sstvd {
        Some(v) => {
            let _ = writeln!(s, "  max SSTVD: {v:.6}");
        }
        None if c.contexts.len() == 2 => {
            let _ = writeln!(s, "  max SSTVD: none (no significant circuit)");
        }
        None => {}
    }
    if let Some(v) = c.max_sstvd_per_gate {
        let _ = writeln!(s, "  max SSTVD per gate: {v:.6}");
    }
    if !c.skipped.is_empty() {
        let _ = writeln!(s, "  skipped circuits: {}", c.skipped.len());
    }
}
