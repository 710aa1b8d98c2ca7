//! The full acceptance suite as one test target; prints one pass/fail line
//! per criterion (visible with `cargo test -- --nocapture`).

use chaoslab_harness::acceptance::run_suite;

#[test]
fn acceptance_criteria() {
    let results = run_suite(false);
    let mut failures = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.pass {
            failures.push(r.line());
        }
    }
    assert_eq!(results.len(), 11);
    assert!(
        failures.is_empty(),
        "failed criteria:\n{}",
        failures.join("\n")
    );
}
