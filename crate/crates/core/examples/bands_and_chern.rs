//! Band structure over one cycle and the Chern numbers of the three bands.

use thouless_pump::model::{ModelParams, TunnelingMode};
use thouless_pump::spectrum::{default_time_grid, solve_bands};

fn main() -> thouless_pump::error::Result<()> {
    for mode in [TunnelingMode::Uniform, TunnelingMode::SineModulated] {
        let p = ModelParams::default().with_tunneling(mode);
        let bands = solve_bands(&p, &default_time_grid(p.period(), 240))?;
        let c = bands.chern_numbers()?;
        println!("{mode:?}: C = {c:?}");

        let first = &bands.slices[0];
        for m in 0..bands.bands() {
            let e = first.band(m);
            let (lo, hi) = e
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            println!("  band {}: [{lo:.4}, {hi:.4}] at t = 0", m + 1);
        }
    }
    Ok(())
}
