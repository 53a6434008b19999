use std::process::ExitCode;

use blochlab::experiments::acceptance::{Acceptance, CRITERIA};

fn main() -> ExitCode {
    let a = Acceptance::new(1.0);
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        let r = a.run(*id);
        println!("{r}");
        if !r.passed {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
