//! Error of the sampled kernel estimator against exact values as the
//! coalition budget grows, on a 20-feature linear model.

use shapcheck::mock::{closed_form_shapley, LinearLogitModel};
use shapcheck::shapley::{attribute, ShapleyConfig};
use shapcheck::{Bridge, GenerationEpisode, MultimodalInput};

fn main() -> shapcheck::Result<()> {
    let text: Vec<f64> = (0..11).map(|i| ((i as f64) * 1.3).sin()).collect();
    let image: Vec<f64> = (0..9).map(|i| ((i as f64) * 0.7 + 1.0).cos() * 0.8).collect();
    let model = LinearLogitModel::new(text, image, 0.1);
    let words: Vec<String> = (0..11).map(|i| format!("w{i}")).collect();
    let episode = GenerationEpisode::new(MultimodalInput::build(words, 3, "img")?, vec!["A".into()])?;
    let exact = closed_form_shapley(&model, 11, 9, "A")?;
    let bridge = Bridge::new(model);

    println!("p = 20 features, 2^20 coalitions for exact enumeration");
    for budget in [512, 2048, 8192] {
        let seeds = 5;
        let mut mse = 0.0;
        for seed in 0..seeds {
            let phi = attribute(&episode, &bridge, &ShapleyConfig { budget, seed })?.matrix;
            mse += phi.phi[0].iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / exact.len() as f64;
        }
        println!("budget {budget:>5}: mean squared error {:.3e}", mse / seeds as f64);
    }
    Ok(())
}
