//! Report emission: a plain-text summary table and a machine-readable
//! CSV, one row per model, sorted by descending routing quality.

use std::path::{Path, PathBuf};

use super::bench::LatencyTable;
use super::{EvalError, EvalReport};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| format!("{v:.2}"))
}

/// Reports sorted by descending gqr_score, ties kept in input order.
fn sorted<'a>(reports: &'a [EvalReport]) -> Vec<&'a EvalReport> {
    let mut out: Vec<&EvalReport> = reports.iter().collect();
    out.sort_by(|a, b| b.gqr_score.partial_cmp(&a.gqr_score).unwrap());
    out
}

fn latency_for<'a>(latency: &'a [LatencyTable], label: &str) -> Option<&'a LatencyTable> {
    latency.iter().find(|t| t.label == label)
}

/// Writes `report.txt` (human summary) and `report.csv` (one row per
/// model: the data behind an accuracy/latency/size tradeoff plot) into
/// `dir`. Returns the two paths.
pub fn emit_report(
    reports: &[EvalReport],
    latency: &[LatencyTable],
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), EvalError> {
    let dir = dir.as_ref();
    if reports.is_empty() {
        return Err(EvalError::EmptySet("reports".into()));
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows = sorted(reports);

    let txt_path = dir.join("report.txt");
    let mut text = String::new();
    {
        use std::fmt::Write;

        // Per-set columns follow the first report's set order; all
        // reports over one benchmark share the same sets.
        let set_names: Vec<&String> = rows[0].per_set.keys().collect();
        write!(text, "{:<24}", "model").unwrap();
        for name in &set_names {
            write!(text, " {:>12}", truncate(name, 12)).unwrap();
        }
        writeln!(text, " {:>10} {:>8} {:>8} {:>8} {:>7}", "unsafe_avg", "ood_acc", "id_acc", "gqr", "errors")
            .unwrap();
        for r in &rows {
            write!(text, "{:<24}", truncate(&r.label, 24)).unwrap();
            for name in &set_names {
                match r.per_set.get(*name) {
                    Some(v) => write!(text, " {v:>12.2}").unwrap(),
                    None => write!(text, " {:>12}", "").unwrap(),
                }
            }
            writeln!(
                text,
                " {:>10} {:>8.2} {:>8.2} {:>8.2} {:>7}",
                fmt_opt(r.unsafe_avg),
                r.ood_accuracy,
                r.id_accuracy,
                r.gqr_score,
                r.error_count,
            )
            .unwrap();
        }
    }
    std::fs::write(&txt_path, text).map_err(io_err(&txt_path))?;

    let csv_path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => EvalError::Io { path: csv_path.clone(), source },
        other => EvalError::InvalidConfig(format!("csv: {other:?}")),
    })?;
    let write = |w: &mut csv::Writer<std::fs::File>, record: &[String]| -> Result<(), EvalError> {
        w.write_record(record).map_err(|e| EvalError::InvalidConfig(format!("csv: {e}")))
    };
    write(
        &mut w,
        &[
            "label".into(),
            "id_accuracy".into(),
            "ood_accuracy".into(),
            "unsafe_avg".into(),
            "gqr_score".into(),
            "latency_s_batch1".into(),
            "size_on_disk_bytes".into(),
        ],
    )?;
    for r in &rows {
        let lat = latency_for(latency, &r.label);
        write(
            &mut w,
            &[
                r.label.clone(),
                format!("{:.2}", r.id_accuracy),
                format!("{:.2}", r.ood_accuracy),
                fmt_opt(r.unsafe_avg),
                format!("{:.2}", r.gqr_score),
                lat.and_then(|t| t.at_batch(1)).map_or_else(String::new, |s| format!("{s:.9}")),
                lat.map_or_else(String::new, |t| t.size_on_disk.to_string()),
            ],
        )?;
    }
    w.flush().map_err(io_err(&csv_path))?;
    Ok((txt_path, csv_path))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
