//! Two cycles at the reference parameters, plain and with the Hamiltonian
//! negated in the second cycle. Takes a few minutes.

use thouless_pump::dynamics::{run_protocol, EvolveOptions, InitialState, Protocol};
use thouless_pump::model::ModelParams;

fn main() -> thouless_pump::error::Result<()> {
    let p = ModelParams::default();
    let opts = EvolveOptions::default();
    let init = InitialState::default_for(&p);

    for protocol in [Protocol::Traditional, Protocol::Echo] {
        let traj = run_protocol(&p, protocol, 2, &init, &opts)?;
        let t = traj.period();
        let (one, two) = (traj.sample_at(t), traj.sample_at(2.0 * t));
        println!(
            "{:12} dP(2T) {:+.4}  D_W(T) {:.4}  D_W(2T) {:.4}  max D_W {:.4}",
            protocol.name(),
            two.delta_p,
            one.d_w,
            two.d_w,
            traj.max_d_w()
        );
        if let Some(c7) = traj.final_sample().projection("mlws_7") {
            println!("{:12} projection on mlws_7 {c7:.5}", "");
        }
    }
    Ok(())
}
