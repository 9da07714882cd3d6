//! Berry and dynamical phases of the top band after one cycle, and the
//! spread they imply for a packet started in a single Wannier state.

use thouless_pump::dynamics::accumulate_phases;
use thouless_pump::model::ModelParams;
use thouless_pump::spectrum::{default_time_grid, solve_bands};
use thouless_pump::wannier::{maximally_localize, predict_dispersion};

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams::default();
    let bands = solve_bands(&p, &default_time_grid(p.period(), 2400))?;
    let rec = accumulate_phases(&bands, 2)?;

    println!("# k\tX_b\tX_d\txi");
    for i in 0..rec.ks.len() {
        println!(
            "{:.6}\t{:.6}\t{:.6}\t{:.6}",
            rec.ks[i], rec.x_b[i], rec.x_d[i], rec.xi[i]
        );
    }

    let predicted = predict_dispersion(&rec.gamma, p.q)?;
    let (_, spread, _) = maximally_localize(&bands.slices[0], 2)?;
    eprintln!(
        "Chern {}; predicted D_W(T)^2 - Omega_I = {predicted:.4}",
        rec.chern
    );
    eprintln!("so D_W(T) ~ {:.4}", (predicted + spread.omega_i).sqrt());
    Ok(())
}
