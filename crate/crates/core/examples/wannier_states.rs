//! Maximally localized Wannier states at t = 0 and their spread.

use thouless_pump::model::ModelParams;
use thouless_pump::spectrum::bands_at;
use thouless_pump::wannier::{maximally_localize, refine_spread};

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams::default();
    let slice = bands_at(&p, 0.0);
    for m in 0..3 {
        let (w, spread, theta) = maximally_localize(&slice, m)?;
        println!(
            "band {} cell {}: center {:.6}  D_W {:.6}  Omega_I {:.6}  Omega_D {:.1e}",
            m + 1,
            w.cell,
            spread.center,
            spread.d_w,
            spread.omega_i,
            spread.omega_d
        );
        // gradient descent on the raw spread should not improve on the gauge
        let r = refine_spread(&slice, m, w.cell, &theta, 1e-12, 200)?;
        println!(
            "  refined Omega {:.9} after {} iterations",
            r.omega, r.iterations
        );
    }
    Ok(())
}
