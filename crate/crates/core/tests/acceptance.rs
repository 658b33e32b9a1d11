use std::process::ExitCode;

use dimorph::acceptance::{format_line, run, CRITERIA};

/// Criteria known not to hold for the model as stated. Criterion 1 asks for
/// exponential extinction at the persistence threshold, where the totals
/// decay like 1 / t instead. It is still run and reported as FAIL; the target
/// fails only if a verdict differs from this list.
const EXPECTED_FAILURES: &[u8] = &[1];

fn main() -> ExitCode {
    let mut failed = 0;
    let mut surprises = Vec::new();
    for (id, _, _) in CRITERIA {
        let verdict = run(id).expect("listed criterion");
        println!("{}", format_line(&verdict));
        if !verdict.passed {
            failed += 1;
        }
        if verdict.passed == EXPECTED_FAILURES.contains(&id) {
            surprises.push(id);
        }
    }
    println!("{}/{} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if surprises.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected verdicts for criteria {surprises:?}");
        ExitCode::FAILURE
    }
}
