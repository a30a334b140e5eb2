use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-slide index of artifact files. Paths are relative to the manifest's
/// directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideManifest {
    pub slide_id: String,
    pub raster: PathBuf,
    pub grid: PathBuf,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub caption_ids: Vec<String>,
    #[serde(default)]
    pub qa_ids: Vec<String>,
}

impl SlideManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Parses and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<SlideManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: SlideManifest = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        m.raster = resolve(&m.raster);
        m.grid = resolve(&m.grid);
        m.embeddings = m.embeddings.as_ref().map(resolve);
        for p in [Some(&m.raster), Some(&m.grid), m.embeddings.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::MissingInput(p.clone()));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// Loads several manifests, rejecting duplicate slide ids.
pub fn load_dataset(paths: &[PathBuf]) -> Result<Vec<SlideManifest>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let m = SlideManifest::load(p)?;
        if !seen.insert(m.slide_id.clone()) {
            return Err(Error::usage(format!("duplicate slide id {}", m.slide_id)));
        }
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_checks_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.ppm"), b"x").unwrap();
        let m = SlideManifest {
            slide_id: "s1".into(),
            raster: "s.ppm".into(),
            grid: "s.grid".into(),
            embeddings: None,
            caption_ids: vec![],
            qa_ids: vec!["q1".into()],
        };
        let mp = dir.path().join("s1.toml");
        m.save(&mp).unwrap();
        assert!(matches!(SlideManifest::load(&mp), Err(Error::MissingInput(_))));
        std::fs::write(dir.path().join("s.grid"), b"x").unwrap();
        let loaded = SlideManifest::load(&mp).unwrap();
        assert_eq!(loaded.raster, dir.path().join("s.ppm"));
        assert!(load_dataset(&[mp.clone(), mp]).is_err());
    }
}
