//! Distributed solve of the bundled four-agent scenario against the centralized ground truth.
use edge_admm::admm::{run, RunOptions};
use edge_admm::graph::unstack;
use edge_admm::oracle::{kkt_check, solve_centralized};
use edge_admm::scenario::{parse_scenario, RunFlags, Scenario, FOUR_AGENT_EXAMPLE};

fn main() -> edge_admm::Result<()> {
    let Scenario::EdgeAgreement(sc) = parse_scenario(FOUR_AGENT_EXAMPLE, "four_agents.toml")? else {
        unreachable!("bundled file is an edge-agreement scenario")
    };
    let spec = sc.build(&RunFlags::default())?;
    let truth = solve_centralized(&spec)?;
    let reference = unstack(&truth.x, spec.dim());
    let out = run(&spec, RunOptions { init: Some(sc.initial_values(&spec)?), reference: Some(reference.clone()) })?;

    for r in out.trace.records.iter().filter(|r| r.k % 25 == 0 || r.k == out.iterations) {
        println!("k={:>4}  W1={:.3e}  W2={:.3e}  f={:.9}", r.k, r.w1, r.w2.unwrap_or(f64::NAN), r.objective);
    }
    println!("converged {} after {} iterations", out.converged, out.iterations);
    for (i, (z, x)) in out.z().iter().zip(&reference).enumerate() {
        println!("agent {}: z = {:.9?}  ground truth {:.9?}", i + 1, z.as_slice(), x.as_slice());
    }
    println!("objective {:.9}, ground truth {:.9}", spec.objective(&out.z()), truth.objective);
    println!("ground truth KKT {:?}", kkt_check(&truth, &spec)?);
    Ok(())
}
