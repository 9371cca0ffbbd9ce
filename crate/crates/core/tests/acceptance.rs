//! Runs every acceptance criterion as its verify suite at the default
//! resolution and prints one line per criterion.

use std::io::Write;
use std::time::{Duration, Instant};

use cuspeta::cli::{find_suite, Context, ResolutionLevel};

/// Suite name, short description, wall-clock limit in seconds (None where no limit is stated).
const CRITERIA: [(&str, &str, Option<u64>); 12] = [
    ("fredholm", "Fredholm determinant oracle", Some(1)),
    ("winding", "winding integrality", Some(10)),
    ("cartan", "Cartan normalization", Some(60)),
    ("star", "star algebra", Some(30)),
    ("susdet", "suspended determinant", Some(60)),
    ("trace-defect", "trace defect", Some(60)),
    ("ddtr", "doubly regularized trace", Some(10)),
    ("eta-oracles", "eta oracles", Some(30)),
    ("eta-multiplicativity", "multiplicativity of eta", Some(60)),
    ("lifted-det", "lifted determinant identity", None),
    ("trivialize", "trivialization experiment", Some(300)),
    ("periodicity", "periodicity comparison", Some(120)),
];

#[test]
fn acceptance() {
    let ctx = Context { level: ResolutionLevel::Default, seed: 0 };
    let mut failed = Vec::new();
    for (k, (name, what, limit)) in CRITERIA.iter().enumerate() {
        let suite = find_suite(name).expect("criterion has a suite");
        let start = Instant::now();
        let out = (suite.run)(&ctx);
        let took = start.elapsed();
        let bad: Vec<_> = out.records.iter().filter(|r| !r.pass).collect();
        let in_time = limit.map_or(true, |s| took <= Duration::from_secs(s));
        let ok = !out.records.is_empty() && bad.is_empty() && in_time;
        let limit = limit.map_or("no limit".to_string(), |s| format!("limit {s} s"));
        // written past the test harness capture so the lines show in every run
        let mut line = format!(
            "criterion {:>2} {:<28} {}  {}/{} checks  {:.2} s ({limit}{})",
            k + 1,
            what,
            if ok { "PASS" } else { "FAIL" },
            out.records.len() - bad.len(),
            out.records.len(),
            took.as_secs_f64(),
            if in_time { "" } else { ", over" },
        );
        for r in &bad {
            line += &format!("\n    failed {}: computed {} expected {} tol {:e} {}", r.name, r.computed, r.expected, r.tolerance, r.note.as_deref().unwrap_or(""));
        }
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        if !ok {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
