//! Acceptance suite: one pass/fail line per criterion.
//!
//! Lines go straight to the stderr handle so they show up without
//! `--nocapture`. The full JSON record lands in the cargo temp directory.

use std::io::Write;

use wbundle::suite::{run_all, Outcome};

/// Checks known not to hold, with the reason recorded in the decisions
/// ledger. Any other failing check fails the test.
const KNOWN_FAILURES: &[(usize, &str)] = &[
    // the factor-two segment bound does not survive small radii
    (6, "max_segment_ratio"),
];

fn unexpected(o: &Outcome) -> Vec<String> {
    o.report
        .failures()
        .into_iter()
        .filter(|c| !KNOWN_FAILURES.contains(&(o.id, c.name.as_str())))
        .map(|c| format!("criterion {} check {} = {} (bound {}) {}", o.id, c.name, c.value, c.bound, c.note))
        .collect()
}

#[test]
fn acceptance_suite() {
    let outcomes = run_all(|o| {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "acceptance {}", o.line());
    });
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    let _ = writeln!(std::io::stderr().lock(), "acceptance summary: {passed}/{} criteria pass", outcomes.len());
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance.json");
    if let Ok(json) = serde_json::to_string_pretty(&outcomes) {
        let _ = std::fs::write(&path, json);
    }
    let bad: Vec<String> = outcomes.iter().flat_map(unexpected).collect();
    assert!(bad.is_empty(), "unexpected failures:\n{}", bad.join("\n"));
}
