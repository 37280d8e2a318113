//! A full run over a manifest: records, summary table, metadata and
//! heatmaps, then a second run that reuses every record.

use shapcheck::runner::{run, BackendSpec, RunConfig, RunMeasure};

fn main() -> shapcheck::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::temp_dir().join("shapcheck-dataset-run");
    let mut config = RunConfig::new(BackendSpec::MockLinear, dir.join("foil.jsonl"), &out);
    config.fixture = Some(dir.join("linear.json"));
    config.measures = vec![RunMeasure::MmShap];
    config.budget = 512;
    config.limit = 4;
    config.repeat = 2;
    config.heatmaps = true;
    config.fresh = true;

    let first = run(&config)?;
    println!("computed {} records, {} heatmaps", first.computed, first.heatmaps.len());
    print!("{}", std::fs::read_to_string(&first.summary)?);

    config.fresh = false;
    let second = run(&config)?;
    println!("second run: computed {}, reused {}", second.computed, second.reused);
    println!("output in {}", out.display());
    Ok(())
}
