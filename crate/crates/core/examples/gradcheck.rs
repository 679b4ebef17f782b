//! Runs the finite-difference gradient suite over every registered check.

use graphnorm::gradcheck::gradcheck_suite;
use graphnorm::Result;

fn main() -> Result<()> {
    let report = gradcheck_suite(None, 2, 0)?;
    print!("{}", report.to_csv());
    println!(
        "{} of {} checks pass at tolerance {:e}",
        report.entries.len() - report.failures().count(),
        report.entries.len(),
        report.tolerance
    );
    Ok(())
}
