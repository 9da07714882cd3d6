//! Builds a run from key = value text and executes it.

use thouless_pump::cli::{run, RunConfig};

const TEXT: &str = "
# Chern numbers with modulated tunneling
experiment = chern
tunneling = sine-modulated
time_samples = 120
";

fn main() -> thouless_pump::error::Result<()> {
    let mut cfg = RunConfig::from_text(TEXT)?;
    cfg.output = std::env::temp_dir().join("thouless-pump-example");
    print!("{}", cfg.to_text());
    let report = run(&cfg)?;
    for line in &report.summary {
        println!("{line}");
    }
    println!("files: {}", report.files.join(", "));
    Ok(())
}
