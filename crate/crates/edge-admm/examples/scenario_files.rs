//! Parsing, validating and running scenario files; outputs go to a temporary directory.
use edge_admm::scenario::{parse_scenario, run_loaded, RunFlags, ScenarioOutcome, FOUR_AGENT_EXAMPLE};

fn main() -> edge_admm::Result<()> {
    let broken = "schema_version = 1\nkind = \"edge-agreement\"\nagents = \"four\"\n";
    match parse_scenario(broken, "broken.toml") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("unexpectedly accepted"),
    }

    let out = std::env::temp_dir().join(format!("edge-admm-example-{}", std::process::id()));
    let flags = RunFlags { out: out.clone(), quiet: true, ..RunFlags::default() };
    let sc = parse_scenario(FOUR_AGENT_EXAMPLE, "four_agents.toml")?;
    let outcome = run_loaded(&sc, &flags)?;
    if let ScenarioOutcome::Edge(s) = &outcome {
        println!("{}: converged {} in {} iterations, objective {:.9}", s.name, s.converged, s.iterations, s.objective);
    }
    println!("exit code {}", outcome.exit_code());
    let mut files: Vec<_> = std::fs::read_dir(&out)
        .map_err(|e| edge_admm::Error::Config(e.to_string()))?
        .filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    files.sort();
    println!("wrote {files:?} to {}", out.display());
    Ok(())
}
