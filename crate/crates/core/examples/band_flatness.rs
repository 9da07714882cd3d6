//! Width-to-gap ratio of each band along the cycle.

use std::io::stdout;

use thouless_pump::model::ModelParams;
use thouless_pump::spectrum::{default_time_grid, solve_bands};

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams::default();
    let bands = solve_bands(&p, &default_time_grid(p.period(), 24))?;
    let report = bands.flatness();
    for m in 0..3 {
        let worst = report.ratio_series(m).into_iter().fold(0.0, f64::max);
        eprintln!("band {}: max width/gap {worst:.3e}", m + 1);
    }
    report.write_tsv(&mut stdout().lock(), |t| p.phase(t))
}
