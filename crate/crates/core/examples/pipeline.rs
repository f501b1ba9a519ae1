//! Runs every stage (phantom, labelled data, oracle, agent, tracking,
//! evaluation) from a config file and writes the artifacts with their
//! manifests.
//!
//! ```sh
//! cargo run --release --example pipeline -- configs/pipeline-smoke.toml /tmp/run
//! ```

use std::path::PathBuf;

use tractoracle::pipeline::{run_pipeline, Config};

fn main() -> tractoracle::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(p) => Config::load(p.as_ref())?,
        None => Config::from_toml(include_str!("../../../configs/pipeline-smoke.toml"))?,
    };
    let dir = args.next().map_or_else(
        || std::env::temp_dir().join("tractoracle-run"),
        PathBuf::from,
    );
    println!("config {} seeds {:?}", &cfg.hash()[..12], cfg.seeds());
    let rep = run_pipeline(&cfg, None, &dir)?;
    print!("{}", rep.to_text());
    let mut names: Vec<_> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    println!("artifacts in {}: {names:?}", dir.display());
    Ok(())
}
