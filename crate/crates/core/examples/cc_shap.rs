//! CC-SHAP between a model's answer and its post-hoc or chain-of-thought
//! explanation.

use shapcheck::ccshap::{self, cc_shap, ContributionVector, ExplanationMode, Similarity};
use shapcheck::mock::LinearLogitModel;
use shapcheck::tasks::{FoilSample, ManifestSample, TaskItem, TaskSetting};
use shapcheck::types::Outcome;
use shapcheck::{Bridge, Session};

fn main() -> shapcheck::Result<()> {
    let a = ContributionVector::new(vec![0.4, -0.1, 0.2], vec![0, 1, 2])?;
    let b = ContributionVector::new(vec![-0.4, 0.1, -0.2], vec![0, 1, 2])?;
    println!("identical vectors: {:+.3}", cc_shap(&a, &a, Similarity::Cosine)?.value);
    println!("opposite vectors:  {:+.3}", cc_shap(&a, &b, Similarity::Cosine)?.value);

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/linear.json");
    let bridge = Bridge::new(LinearLogitModel::from_json_file(path.as_ref())?);
    let mut session = Session::new(&bridge);
    session.shapley.budget = 512;

    let sample = ManifestSample::Foil(FoilSample {
        id: "park".into(),
        image: "img/park.jpg".into(),
        caption: "There are no people on the bench.".into(),
        foil: "There are people on the bench.".into(),
        phenomenon: "existence".into(),
    });
    let item = TaskItem::from_manifest(&sample, TaskSetting::Pairwise, 0).remove(0);
    for mode in [ExplanationMode::PostHoc, ExplanationMode::Cot] {
        let record = ccshap::measure(&session, &item, mode, Similarity::Cosine);
        match (&record.outcome, &record.details) {
            (Outcome::Score { value, .. }, Some(d)) => println!(
                "{:<22} CC-SHAP {value:+.3}  T-SHAP answer {:.1}%  explanation {:.1}%",
                record.measure.label(),
                100.0 * d.prediction_t_shap.unwrap_or(f64::NAN),
                100.0 * d.explanation_t_shap.unwrap_or(f64::NAN)
            ),
            (other, _) => println!("{:<22} {other:?}", record.measure.label()),
        }
    }
    Ok(())
}
