//! Per-token Shapley values for a multi-token generation, checked against
//! coalition enumeration on the linear mock.

use shapcheck::mock::{closed_form_shapley, LinearLogitModel};
use shapcheck::shapley::{attribute, ShapleyConfig};
use shapcheck::{Bridge, GenerationEpisode, MultimodalInput};

fn main() -> shapcheck::Result<()> {
    let model = LinearLogitModel::new(vec![0.8, -0.4, 0.3], vec![0.5, -0.2, 0.1, 0.9], -0.1).with_output_len(3);
    let bridge = Bridge::new(model.clone());

    let prompt = ["Is", "it", "sunny?"];
    let output = bridge.generate_text(&prompt.join(" "), "img/beach.jpg", 3, Default::default(), Some(2))?;
    let input = MultimodalInput::build(prompt.to_vec(), 2, "img/beach.jpg")?;
    let episode = GenerationEpisode::new(input, output.clone())?;

    let attribution = attribute(&episode, &bridge, &ShapleyConfig::default())?;
    println!("output tokens: {output:?}");
    println!("estimator: {} ({} evaluations)", attribution.provenance.estimator, attribution.provenance.evaluations);
    for (t, row) in attribution.matrix.phi.iter().enumerate() {
        let oracle = closed_form_shapley(&model, 3, 4, &output[t])?;
        let gap = row.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("token {t} {:>3}: phi = {:?}", output[t].trim(), rounded(row));
        println!("  max |phi - enumeration| = {gap:.2e}, efficiency gap = {:.2e}", attribution.matrix.efficiency_gap(t));
    }
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
