//! Acceptance suite: one pass/fail line per criterion, non-zero exit on
//! any failure.

use rankhom::suite::run_criteria;

fn main() {
    let outcomes = run_criteria(&[], |o| {
        println!(
            "criterion {} {}: {} ({}; {:.1}s)",
            o.id,
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            o.seconds
        );
    });
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
