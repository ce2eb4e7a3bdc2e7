//! The release gate: every named check from the verification suite must
//! pass. One line is printed per criterion so the summary is readable in CI
//! logs (`cargo test --test acceptance -- --nocapture`).

use taxsim::verify::run_all;

#[test]
fn acceptance_criteria() {
    let results = run_all();
    let mut failures = 0usize;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {:<28} {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    assert_eq!(
        failures,
        0,
        "{failures} of {} acceptance criteria failed",
        results.len()
    );
}
