//! Foil-benchmark scores: caption and foil precision, their average, and
//! pairwise ranking accuracy.

use shapcheck::mock::ScriptedModel;
use shapcheck::runner::bench_sample;
use shapcheck::tasks::{compute_metrics, load_manifest, Judgement, MetricRecord, Setting};
use shapcheck::{Bridge, Session};

fn cell(setting: Setting, correct: usize, total: usize) -> impl Iterator<Item = MetricRecord> {
    (0..total).map(move |i| MetricRecord {
        sample_id: i.to_string(),
        setting,
        judgement: if i < correct { Judgement::Correct } else { Judgement::Incorrect },
    })
}

fn main() -> shapcheck::Result<()> {
    let table: Vec<MetricRecord> = cell(Setting::AlignmentCaption, 71, 100)
        .chain(cell(Setting::AlignmentFoil, 47, 100))
        .collect();
    let s = compute_metrics(&table);
    println!("stored outcomes: p_c {:?}  p_f {:?}  acc {:?}", s.p_c, s.p_f, s.acc);

    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let bridge = Bridge::new(ScriptedModel::from_json_file(&dir.join("bench.json"))?);
    let session = Session::new(&bridge);
    let mut records = Vec::new();
    for sample in load_manifest(&dir.join("foil.jsonl"))? {
        records.extend(bench_sample(&session, &sample, 0)?.metrics);
    }
    let s = compute_metrics(&records);
    println!(
        "scripted model:  p_c {:?}  p_f {:?}  acc {:?}  acc_r {:?}",
        s.p_c, s.p_f, s.acc, s.acc_r
    );
    Ok(())
}
