//! CSV, JSON and `key=value` renderings of the reports written by the CLI.

use serde::Serialize;

use crate::costvolume::Histogram;
use crate::metrics::{ArdPoint, ClassRate, MetricReport};
use crate::reconstruction::{GradCheckReport, LossBreakdown};

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
}

/// `{v:?}` keeps full precision and round-trips through `parse::<f64>()`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

/// `bin_lo,bin_hi,proportion` for the 30 bins, then a `summary,<underflow>,<overflow>` row.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut rows: Vec<Vec<String>> = h
        .proportions
        .iter()
        .enumerate()
        .map(|(i, p)| vec![num(h.bin_edges[i]), num(h.bin_edges[i + 1]), num(*p)])
        .collect();
    rows.push(vec!["summary".into(), h.underflow.to_string(), h.overflow.to_string()]);
    csv_string(&["bin_lo", "bin_hi", "proportion"], rows)
}

/// `metric,value` rows: `d1`, `bad_<t>` per extra threshold, then `gd` when defined.
pub fn metrics_csv(r: &MetricReport) -> String {
    let mut rows = vec![vec!["d1".to_string(), num(r.d1)]];
    rows.extend(r.bad.iter().map(|(t, v)| vec![format!("bad_{t}"), num(*v)]));
    if let Some(gd) = r.gd {
        rows.push(vec!["gd".into(), num(gd)]);
    }
    csv_string(&["metric", "value"], rows)
}

/// `k,ard,count`; empty bins leave `ard` blank.
pub fn ard_csv(points: &[ArdPoint]) -> String {
    csv_string(
        &["k", "ard", "count"],
        points
            .iter()
            .map(|p| vec![num(p.k), p.ard.map(num).unwrap_or_default(), p.count.to_string()]),
    )
}

pub fn mr_csv(rates: &[ClassRate]) -> String {
    csv_string(
        &["class", "mr"],
        rates.iter().map(|r| vec![r.name.clone(), num(r.rate)]),
    )
}

pub fn loss_lines(b: &LossBreakdown) -> String {
    b.entries().iter().map(|(k, v)| format!("{k}={}\n", num(*v))).collect()
}

pub fn gradcheck_lines(r: &GradCheckReport) -> String {
    format!(
        "probes={}\nexcluded={}\nmax_rel_error={}\nmean_rel_error={}\n",
        r.probes,
        r.excluded,
        num(r.max_rel_error),
        num(r.mean_rel_error)
    )
}
