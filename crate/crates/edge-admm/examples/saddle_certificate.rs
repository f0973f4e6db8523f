//! Centralized ADMM on the compact form: saddle certificate and the bound/descent inequalities.
use edge_admm::oracle::{lyapunov_series, CentralizedAdmm, INEQUALITY_SLACK};
use edge_admm::scenario::{suite_instance, SuiteOptions};

fn main() -> edge_admm::Result<()> {
    let opts = SuiteOptions::default();
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let inst = suite_instance(&opts, k)?;
    let spec = &inst.spec;
    println!(
        "instance {k}: {} agents, dimension {}, {} edges",
        spec.agent_count(),
        spec.dim(),
        spec.graph.edge_count()
    );
    let admm = CentralizedAdmm::new(spec, opts.rho)?;
    let cert = admm.certificate(1e-12, 200_000)?;
    println!("objective {:.12}  kkt {:?}", cert.objective, cert.kkt);

    let hist = admm.trajectory(admm.initial_state()?, 60)?;
    let rep = lyapunov_series(&hist, &cert, &admm.problem, opts.rho);
    for (k, v) in rep.v.iter().enumerate().step_by(10) {
        println!("k={k:>3}  V={v:.6e}");
    }
    println!(
        "worst violations: lower bound {:.2e}, upper bound {:.2e}, descent {:.2e}; hold within {:.0e}: {}",
        rep.max_lower_bound(),
        rep.max_upper_bound(),
        rep.max_descent(),
        INEQUALITY_SLACK,
        rep.holds(INEQUALITY_SLACK)
    );
    Ok(())
}
