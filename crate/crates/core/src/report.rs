//! CSV/JSON report files.
//!
//! `metrics.csv` is long format with header `step,recommender,metric,mean,std`,
//! UTF-8 with LF endings, numbers rounded to 6 significant digits.
//! `summary.json` holds final-step values per arm plus the effective config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::network::node_attributes_csv;
use crate::par::Execution;
use crate::sim::{ArmResult, EnsembleStats, Metric};

pub const METRICS_HEADER: &str = "step,recommender,metric,mean,std";

/// Formats `v` with 6 significant digits, `%g` style.
pub fn fmt_sig6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" { "0".into() } else { t.to_string() }
    } else {
        s
    }
}

/// Long-format metrics table for labelled ensembles.
pub fn metrics_csv(stats: &[(&str, &EnsembleStats)]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    let steps = stats.iter().map(|(_, s)| s.steps).max().unwrap_or(0);
    for step in 0..steps {
        for (label, s) in stats {
            if step >= s.steps {
                continue;
            }
            for metric in Metric::ALL {
                let series = s.series(metric);
                let _ = writeln!(
                    out,
                    "{},{label},{},{},{}",
                    step + 1,
                    metric.name(),
                    fmt_sig6(series.mean[step]),
                    fmt_sig6(series.std[step]),
                );
            }
        }
    }
    out
}

fn json_number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Final-step summary with config echo.
pub fn summary_json(cfg: &SimConfig, master_seed: u64, stats: &[(&str, &EnsembleStats)]) -> Result<String> {
    let mut arms = Map::new();
    for (label, s) in stats {
        let mut metrics = Map::new();
        if s.steps > 0 {
            let last = s.steps - 1;
            for metric in Metric::ALL {
                let series = s.series(metric);
                metrics.insert(
                    metric.name().to_string(),
                    json!({
                        "mean": json_number(series.mean[last]),
                        "std": json_number(series.std[last]),
                        "std_defined": series.std_defined(last),
                    }),
                );
            }
        }
        arms.insert(
            label.to_string(),
            json!({ "runs": s.runs, "steps": s.steps, "final": metrics }),
        );
    }
    let config = serde_json::to_value(cfg).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let doc = json!({
        "master_seed": master_seed,
        "arms": arms,
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `metrics.csv`, `summary.json` and `config.toml` into `out_dir`,
/// plus `graph_final_<arm>.edgelist` and node attributes when `dump_graph`.
/// Returns the written paths.
pub fn emit_reports(
    results: &[ArmResult],
    cfg: &SimConfig,
    master_seed: u64,
    out_dir: &Path,
    dump_graph: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stats: Vec<(&str, &EnsembleStats)> = results.iter().map(|r| (r.arm.label.as_str(), &r.stats)).collect();
    let mut written = vec![
        write(out_dir.join("metrics.csv"), &metrics_csv(&stats))?,
        write(out_dir.join("summary.json"), &summary_json(cfg, master_seed, &stats)?)?,
        write(out_dir.join("config.toml"), &cfg.to_toml())?,
    ];
    if dump_graph {
        for r in results {
            let st = &r.first_run;
            written.push(write(
                out_dir.join(format!("graph_final_{}.edgelist", r.arm.label)),
                &st.graph.to_edgelist(),
            )?);
            written.push(write(
                out_dir.join(format!("graph_final_{}.nodes.csv", r.arm.label)),
                &node_attributes_csv(&st.opinions(), &st.resilience()),
            )?);
            let measures = st.network_measures(Execution::Sequential);
            let text = serde_json::to_string_pretty(&measures).map_err(|e| Error::InvalidInput(e.to_string()))?;
            written.push(write(out_dir.join(format!("network_{}.json", r.arm.label)), &text)?);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.123456789), "0.123457");
        assert_eq!(fmt_sig6(294.0), "294");
        assert_eq!(fmt_sig6(-0.5), "-0.5");
        assert_eq!(fmt_sig6(123456789.0), "1.23457e8");
        assert_eq!(fmt_sig6(0.0000123456), "1.23456e-5");
        assert_eq!(fmt_sig6(0.000123456), "0.000123456");
        assert_eq!(fmt_sig6(f64::NAN), "NaN");
        assert_eq!(fmt_sig6(9.9999996), "10");
    }

    #[test]
    fn empty_stats_header_only() {
        assert_eq!(metrics_csv(&[]), format!("{METRICS_HEADER}\n"));
        let empty = EnsembleStats::from_traces(&[]);
        assert_eq!(metrics_csv(&[("x", &empty)]), format!("{METRICS_HEADER}\n"));
    }
}
