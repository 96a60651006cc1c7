//! Runs every pipeline stage into a directory, the same way the `hdsa run`
//! command does. Pass an output directory as the first argument.

use std::path::PathBuf;

use hdsa::config::parse_entries;
use hdsa::{Pipeline, RunConfig};

fn main() -> hdsa::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("hdsa-benchmark"));
    let text = include_str!("benchmark.cfg");
    let mut entries = parse_entries(text)?;
    entries.push(("run.out_dir".into(), out.display().to_string()));
    let pipeline = Pipeline::new(RunConfig::from_entries(&entries)?)?;
    for record in pipeline.run()? {
        println!("{:<13} {:.3}s", record.stage.name(), record.wall_time_s);
    }
    let report = std::fs::read_to_string(out.join("report.json"))?;
    let report: serde_json::Value = serde_json::from_str(&report)?;
    println!("improvement ratio: {}", report["improvement_ratio"]);
    println!("artifacts in {}", out.display());
    Ok(())
}
