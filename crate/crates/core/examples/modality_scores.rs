//! T-SHAP and V-SHAP of a model that uses both modalities and of one that
//! ignores the image, under ratio and raw aggregation.

use shapcheck::mmshap::{score_episode, AggregationMode};
use shapcheck::mock::{LinearLogitModel, TextOnlyModel};
use shapcheck::shapley::{attribute, ShapleyConfig};
use shapcheck::{Backend, Bridge, GenerationEpisode, ModalityScore, MultimodalInput};

fn report(name: &str, backend: impl Backend + 'static) -> shapcheck::Result<()> {
    let bridge = Bridge::new(backend);
    let words: Vec<String> = "USER: Is there a dog? ASSISTANT: (".split(' ').map(String::from).collect();
    let output = bridge.generate_text(&words.join(" "), "img/park.jpg", 1, Default::default(), Some(3))?;
    let episode = GenerationEpisode::new(MultimodalInput::build(words, 3, "img/park.jpg")?, output)?;
    let phi = attribute(&episode, &bridge, &ShapleyConfig::default())?.matrix;
    for mode in [AggregationMode::Ratio, AggregationMode::Raw] {
        match score_episode(&phi, &episode.input, mode)?.1 {
            ModalityScore::Defined { t_shap, v_shap, .. } => {
                println!("{name:<10} {mode:?}: T-SHAP {:5.1}%  V-SHAP {:5.1}%", 100.0 * t_shap, 100.0 * v_shap)
            }
            ModalityScore::Degenerate => println!("{name:<10} {mode:?}: undefined (no contributions)"),
        }
    }
    Ok(())
}

fn main() -> shapcheck::Result<()> {
    let text = vec![0.1, 0.6, -0.3, 0.2, 0.9, 0.0, -0.1];
    let image = vec![0.4, -0.2, 0.7, 0.1, 0.3, -0.5, 0.2, 0.6, 0.05];
    report("both", LinearLogitModel::new(text.clone(), image, 0.2))?;
    report("text-only", TextOnlyModel::new(text, 0.2))?;
    report("constant", LinearLogitModel::new(vec![], vec![], 0.2))?;
    Ok(())
}
