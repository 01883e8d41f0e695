//! The twelve acceptance criteria, one line each.

use mzlab::battery::{run_criterion, CRITERIA};

#[test]
fn acceptance_battery() {
    let mut failed = Vec::new();
    for (id, _, _) in CRITERIA {
        let r = run_criterion(id);
        println!("{}", r.line());
        if !r.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
