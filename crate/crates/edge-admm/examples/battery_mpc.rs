//! Receding-horizon control of the six-node storage network.
//!
//! `cargo run --release --example battery_mpc -- [steps] [out.csv]`

use std::fs::File;
use std::time::Instant;

use edge_admm::battery::{mpc_loop_with, reference_network, DemandProfile, MpcParams};

fn main() -> edge_admm::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(200, |s| s.parse().expect("steps must be an integer"));
    let out = args.next();

    let network = reference_network(MpcParams::default())?;
    let demand = DemandProfile::reference();
    let start = Instant::now();
    let log = mpc_loop_with(&network, &demand, steps, |k, rows| {
        if k % 20 == 0 {
            let r = rows[0];
            let soc: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.soc)).collect();
            println!(
                "t={:>6.1}  demand={:>8.2}  delivered={:>8.2}  W1={:.2e}  soc=[{}]",
                r.t,
                r.demand,
                r.delivered,
                r.step_residual,
                soc.join(", ")
            );
        }
    })?;
    println!(
        "{steps} steps in {:.1}s, max tracking error {:.3e} (max |demand| {:.1})",
        start.elapsed().as_secs_f64(),
        log.max_tracking_error(),
        log.max_abs_demand()
    );
    println!("final soc {:?}", log.final_soc);
    if let Some(path) = out {
        log.write_csv(File::create(&path).expect("cannot create output file"))?;
        println!("wrote {path}");
    }
    Ok(())
}
