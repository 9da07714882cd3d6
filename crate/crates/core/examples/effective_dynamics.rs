//! Pumping under the full and the effective Hamiltonian side by side.

use thouless_pump::dynamics::{EvolveOptions, InitialState};
use thouless_pump::effective::compare_effective;
use thouless_pump::model::ModelParams;

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams {
        cells: 11,
        omega: 0.02,
        ..ModelParams::default()
    };
    let cmp = compare_effective(
        &p,
        &InitialState::default_for(&p),
        1,
        &EvolveOptions::default(),
    )?;
    println!("max |dP diff|  {:.4}", cmp.max_delta_p_diff);
    println!("max |D_W diff| {:.4}", cmp.max_d_w_diff);
    println!("final overlap  {:.5}", cmp.final_fidelity);
    Ok(())
}
