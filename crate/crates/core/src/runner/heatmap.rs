//! SVG heatmaps of per-feature contributions.
//!
//! Blue marks positive contributions, red negative ones. Each file shows
//! two panels: one scaled by the largest magnitude overall, and one with
//! text and image each scaled by their own largest magnitude.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contributions laid out the way they are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapData {
    pub title: String,
    pub tokens: Vec<String>,
    pub text_values: Vec<f64>,
    pub grid_side: usize,
    /// Row-major over the patch grid.
    pub patch_values: Vec<f64>,
}

impl HeatmapData {
    fn check(&self) -> Result<()> {
        if self.tokens.len() != self.text_values.len() {
            return Err(Error::invalid(format!(
                "{} tokens for {} text contributions",
                self.tokens.len(),
                self.text_values.len()
            )));
        }
        if self.grid_side == 0 || self.patch_values.len() != self.grid_side * self.grid_side {
            return Err(Error::invalid(format!(
                "{} patch contributions do not fill a {}x{} grid",
                self.patch_values.len(),
                self.grid_side,
                self.grid_side
            )));
        }
        if self.text_values.iter().chain(&self.patch_values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("heatmap values must be finite"));
        }
        Ok(())
    }
}

pub const NEUTRAL: &str = "#ffffff";

/// Fill colour for `value` scaled by `scale` (the largest magnitude shown).
pub fn color(value: f64, scale: f64) -> String {
    if scale == 0.0 || value == 0.0 {
        return NEUTRAL.to_string();
    }
    let a = (value.abs() / scale).min(1.0);
    let fade = (255.0 * (1.0 - a)).round() as u8;
    if value > 0.0 {
        format!("#{fade:02x}{fade:02x}ff")
    } else {
        format!("#ff{fade:02x}{fade:02x}")
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const CELL: usize = 32;
const TOKEN_W: usize = 90;
const TOKEN_H: usize = 22;
const TOKENS_PER_ROW: usize = 8;

fn panel(out: &mut String, data: &HeatmapData, y0: usize, label: &str, text_scale: f64, image_scale: f64) -> usize {
    let _ = writeln!(out, r##"<text x="10" y="{}" font-size="14" font-weight="bold">{}</text>"##, y0 + 16, escape(label));
    let grid_y = y0 + 26;
    let n = data.grid_side;
    let _ = writeln!(out, r##"<g class="patches" transform="translate(10,{grid_y})">"##);
    for (k, v) in data.patch_values.iter().enumerate() {
        let (r, c) = (k / n, k % n);
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}" stroke="#888" stroke-width="1"><title>patch ({r},{c}): {v:.6}</title></rect>"##,
            c * CELL,
            r * CELL,
            color(*v, image_scale)
        );
    }
    let _ = writeln!(out, "</g>");
    let strip_y = grid_y + n * CELL + 12;
    let _ = writeln!(out, r##"<g class="tokens" transform="translate(10,{strip_y})">"##);
    for (i, (tok, v)) in data.tokens.iter().zip(&data.text_values).enumerate() {
        let (r, c) = (i / TOKENS_PER_ROW, i % TOKENS_PER_ROW);
        let (x, y) = (c * TOKEN_W, r * TOKEN_H);
        let _ = writeln!(
            out,
            r##"<rect x="{x}" y="{y}" width="{}" height="{}" fill="{}" stroke="#ccc"><title>{}: {v:.6}</title></rect><text x="{}" y="{}" font-size="11">{}</text>"##,
            TOKEN_W - 2,
            TOKEN_H - 2,
            color(*v, text_scale),
            escape(tok),
            x + 3,
            y + 14,
            escape(&tok.chars().take(12).collect::<String>())
        );
    }
    let _ = writeln!(out, "</g>");
    let rows = data.tokens.len().div_ceil(TOKENS_PER_ROW).max(1);
    strip_y + rows * TOKEN_H + 10
}

/// Renders both panels into one SVG document.
pub fn render_heatmap(data: &HeatmapData) -> Result<String> {
    data.check()?;
    let global = max_abs(&data.text_values).max(max_abs(&data.patch_values));
    let width = (TOKENS_PER_ROW * TOKEN_W).max(data.grid_side * CELL) + 20;
    let mut body = String::new();
    let _ = writeln!(body, r##"<text x="10" y="18" font-size="15">{}</text>"##, escape(&data.title));
    let y = panel(&mut body, data, 28, "raw", global, global);
    let y = panel(
        &mut body,
        data,
        y,
        "per-modality",
        max_abs(&data.text_values),
        max_abs(&data.patch_values),
    );
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{y}\" font-family=\"sans-serif\">\n{body}</svg>\n"
    ))
}

pub fn write_heatmap(data: &HeatmapData, path: &Path) -> Result<()> {
    let svg = render_heatmap(data)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(side: usize, patches: Vec<f64>) -> HeatmapData {
        HeatmapData {
            title: "t".into(),
            tokens: vec!["Where".into(), "is".into()],
            text_values: vec![0.5, -0.25],
            grid_side: side,
            patch_values: patches,
        }
    }

    fn patch_rects(svg: &str) -> usize {
        let start = svg.find(r##"<g class="patches""##).unwrap();
        let end = start + svg[start..].find("</g>").unwrap();
        svg[start..end].matches("<rect").count()
    }

    #[test]
    fn grid_sizes() {
        let svg = render_heatmap(&data(6, vec![0.1; 36])).unwrap();
        assert_eq!(patch_rects(&svg), 36);
        assert!(svg.contains(r##"x="160" y="160""##));
        let svg = render_heatmap(&data(4, vec![0.1; 16])).unwrap();
        assert_eq!(patch_rects(&svg), 16);
        assert!(!svg.contains(r##"x="128" y="0""##));
    }

    #[test]
    fn zero_vector_is_neutral() {
        let mut d = data(2, vec![0.0; 4]);
        d.text_values = vec![0.0, 0.0];
        let svg = render_heatmap(&d).unwrap();
        let fills: Vec<&str> = svg.match_indices("fill=\"#").map(|(i, _)| &svg[i + 6..i + 13]).collect();
        assert!(!fills.is_empty());
        assert!(fills.iter().all(|f| *f == NEUTRAL));
    }

    #[test]
    fn geometry_mismatch() {
        assert!(matches!(render_heatmap(&data(3, vec![0.0; 4])), Err(Error::InvalidInput(_))));
        let mut d = data(2, vec![0.0; 4]);
        d.tokens.pop();
        assert!(render_heatmap(&d).is_err());
    }

    #[test]
    fn colour_scale() {
        assert_eq!(color(1.0, 1.0), "#0000ff");
        assert_eq!(color(-1.0, 1.0), "#ff0000");
        assert_eq!(color(0.0, 1.0), NEUTRAL);
        assert_eq!(color(0.5, 0.0), NEUTRAL);
    }
}
