use super::{Aggregate, BenchRun};

pub const COLUMNS: [&str; 9] = ["Scenario", "Method", "V_s", "V_a", "V_f", "V_e", "V", "Iter", "Time(s)"];

/// Marker for a method that failed on every seed.
pub const FAILED: &str = "-";

/// Scientific notation with three significant digits, e.g. `1.23e-4`.
pub fn sci(v: f64) -> String {
    format!("{v:.2e}")
}

fn row(a: &Aggregate) -> Vec<String> {
    let mut cells = vec![a.scenario.clone(), a.method.label().to_string()];
    match &a.mean {
        Some((e, iters, secs)) => {
            cells.extend([e.smooth, e.align, e.attach, e.ergodic, e.total].map(sci));
            cells.push(format!("{iters:.0}"));
            cells.push(sci(*secs));
        }
        None => cells.extend(std::iter::repeat_n(FAILED.to_string(), 7)),
    }
    cells
}

/// Seed-averaged comparison table as CSV and as aligned text.
pub fn emit_table(runs: &[BenchRun]) -> (String, String) {
    let rows: Vec<Vec<String>> = runs.iter().flat_map(|r| r.aggregate()).map(|a| row(&a)).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");

    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut text = line(COLUMNS.to_vec());
    text.push('\n');
    text.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    text.push('\n');
    for r in &rows {
        text.push_str(&line(r.iter().map(String::as_str).collect()));
        text.push('\n');
    }
    (csv, text)
}
