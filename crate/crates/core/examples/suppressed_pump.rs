//! Sine-modulated tunneling keeps the packet on a single Wannier state.

use thouless_pump::dynamics::{run_protocol, EvolveOptions, InitialState, Protocol};
use thouless_pump::model::ModelParams;

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams {
        cells: 9,
        ..ModelParams::default()
    };
    let traj = run_protocol(
        &p,
        Protocol::Suppressed,
        1,
        &InitialState::default_for(&p),
        &EvolveOptions::default(),
    )?;
    let last = traj.final_sample();
    let best = last
        .projections
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("projections");
    println!("dP {:+.5}  max D_W {:.4}", last.delta_p, traj.max_d_w());
    println!("largest projection {} = {:.5}", best.0, best.1);
    Ok(())
}
