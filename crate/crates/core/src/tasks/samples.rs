//! Benchmark samples and JSONL manifests.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// A caption paired with a minimally edited foil that no longer fits the image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoilSample {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub image: String,
    pub caption: String,
    pub foil: String,
    #[serde(default)]
    pub phenomenon: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSample {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub image: String,
    pub question: String,
    /// Accepted answers; empty for multiple-choice questions without a key.
    #[serde(default)]
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestSample {
    Foil(FoilSample),
    Qa(QaSample),
}

impl ManifestSample {
    pub fn id(&self) -> &str {
        match self {
            ManifestSample::Foil(s) => &s.id,
            ManifestSample::Qa(s) => &s.id,
        }
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

/// Parses a JSONL manifest; blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestSample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: ManifestSample = serde_json::from_str(line)
            .map_err(|e| Error::Manifest(format!("line {}: {e}", n + 1)))?;
        check(&sample).map_err(|m| Error::Manifest(format!("line {}: {m}", n + 1)))?;
        out.push(sample);
    }
    if out.is_empty() {
        return Err(Error::Manifest("manifest has no samples".into()));
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestSample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

fn check(sample: &ManifestSample) -> std::result::Result<(), String> {
    match sample {
        ManifestSample::Foil(s) => {
            if s.caption.trim().is_empty() || s.foil.trim().is_empty() {
                return Err(format!("sample {}: caption and foil must be non-empty", s.id));
            }
            if s.caption == s.foil {
                return Err(format!("sample {}: foil equals caption", s.id));
            }
        }
        ManifestSample::Qa(s) => {
            if s.question.trim().is_empty() {
                return Err(format!("sample {}: empty question", s.id));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_kinds() {
        let text = r#"{"id": 1, "image": "a.jpg", "caption": "two dogs", "foil": "three dogs", "phenomenon": "counting"}

{"id": "q7", "image": "b.jpg", "question": "Where is the horse?", "answers": ["on sidewalk"]}
"#;
        let samples = parse_manifest(text).unwrap();
        assert_eq!(samples.len(), 2);
        assert!(matches!(&samples[0], ManifestSample::Foil(f) if f.id == "1"));
        assert!(matches!(&samples[1], ManifestSample::Qa(q) if q.answers == ["on sidewalk"]));
    }

    #[test]
    fn rejects_bad_lines() {
        let same = r#"{"id": "x", "image": "a", "caption": "c", "foil": "c"}"#;
        assert!(matches!(parse_manifest(same), Err(Error::Manifest(m)) if m.contains("line 1")));
        assert!(matches!(parse_manifest("{not json"), Err(Error::Manifest(_))));
        assert!(matches!(parse_manifest("\n\n"), Err(Error::Manifest(_))));
        assert_eq!(Error::Manifest(String::new()).exit_code(), 3);
    }
}
