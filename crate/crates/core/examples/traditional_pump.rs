//! One cycle of plain pumping on a short ring at a faster ramp.

use thouless_pump::dynamics::{run_protocol, EvolveOptions, InitialState, Protocol};
use thouless_pump::model::ModelParams;

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams {
        cells: 11,
        omega: 0.02,
        ..ModelParams::default()
    };
    let traj = run_protocol(
        &p,
        Protocol::Traditional,
        1,
        &InitialState::default_for(&p),
        &EvolveOptions::default(),
    )?;
    println!("dt {:.3e}, {} steps", traj.dt, traj.steps);
    for s in traj.samples.iter().step_by(40) {
        println!(
            "t/T {:.2}  dP {:+.4}  D_W {:.4}",
            s.t / traj.period(),
            s.delta_p,
            s.d_w
        );
    }
    println!(
        "lowest top-band population {:.5}",
        traj.min_band_population()
    );
    Ok(())
}
