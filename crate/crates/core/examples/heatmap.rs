//! SVG heatmap of text-token and image-patch contributions.

use shapcheck::runner::{render_heatmap, HeatmapData};

fn main() -> shapcheck::Result<()> {
    let data = HeatmapData {
        title: "Is there a dog on the bench?".into(),
        tokens: "Is there a dog on the bench?".split(' ').map(String::from).collect(),
        text_values: vec![0.01, 0.05, 0.0, 0.3, -0.02, 0.0, -0.1],
        grid_side: 4,
        patch_values: (0..16).map(|k| ((k as f64) * 0.9).sin() * 0.05).collect(),
    };
    let svg = render_heatmap(&data)?;
    let path = std::env::temp_dir().join("shapcheck-heatmap.svg");
    std::fs::write(&path, &svg)?;
    println!("wrote {} ({} bytes, {} patch cells)", path.display(), svg.len(), data.patch_values.len());
    Ok(())
}
