//! Runs every acceptance criterion and prints one PASS/FAIL line per check.

use sobolev_lab::reproduce::{run, ReproduceOptions};

fn main() {
    let start = std::time::Instant::now();
    let outcomes = run(&ReproduceOptions::default(), |o| println!("{}", o.line()));
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {} failed, {:.1}s total",
        outcomes.len() - failed,
        failed,
        start.elapsed().as_secs_f64()
    );
    if start.elapsed().as_secs_f64() > 600.0 {
        println!("FAIL total runtime exceeds 600s");
        std::process::exit(1);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
