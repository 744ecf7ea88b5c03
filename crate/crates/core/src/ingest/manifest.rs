//! Tab-separated dataset manifests: `entity_id<TAB>view<TAB>path`.

use std::path::{Path, PathBuf};

use super::{features::is_feature_file, pnm};
use crate::binio;
use crate::error::{Error, Result};
use crate::View;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub entity_id: String,
    pub view: View,
    pub path: PathBuf,
}

/// Images of one entity in one view, in manifest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityGroup {
    pub entity_id: String,
    pub paths: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parses manifest text. Relative paths are resolved against `base`.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("manifest line {}", lineno + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(ctx(), "expected 3 tab-separated fields"));
            }
            let entity_id = fields[0].trim();
            if entity_id.is_empty() {
                return Err(Error::parse(ctx(), "empty entity id"));
            }
            let view = match fields[1].trim() {
                "1" => View::One,
                "2" => View::Two,
                other => return Err(Error::parse(ctx(), format!("view must be 1 or 2, got {other:?}"))),
            };
            let raw = Path::new(fields[2].trim());
            if raw.as_os_str().is_empty() {
                return Err(Error::parse(ctx(), "empty path"));
            }
            let path = if raw.is_absolute() { raw.to_path_buf() } else { base.join(raw) };
            entries.push(ManifestEntry {
                entity_id: entity_id.to_string(),
                view,
                path,
            });
        }
        Ok(DatasetManifest { entries })
    }

    /// Entities of a view grouped by id, ordered by first appearance.
    pub fn groups(&self, view: View) -> Vec<EntityGroup> {
        let mut out: Vec<EntityGroup> = Vec::new();
        for e in self.entries.iter().filter(|e| e.view == view) {
            match out.iter_mut().find(|g| g.entity_id == e.entity_id) {
                Some(g) => g.paths.push(e.path.clone()),
                None => out.push(EntityGroup {
                    entity_id: e.entity_id.clone(),
                    paths: vec![e.path.clone()],
                }),
            }
        }
        out
    }

    /// Checks that every file exists and that each view has one resolution.
    pub fn validate(&self) -> Result<()> {
        for view in [View::One, View::Two] {
            let mut expected: Option<(usize, usize)> = None;
            for e in self.entries.iter().filter(|e| e.view == view) {
                let dims = file_dimensions(&e.path)?;
                match expected {
                    None => expected = Some(dims),
                    Some(exp) if exp != dims => {
                        return Err(Error::ResolutionMismatch {
                            view: view.number(),
                            expected: exp,
                            found: dims,
                            path: e.path.clone(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Pixel size for images, patch-grid size for pre-extracted feature files.
fn file_dimensions(path: &Path) -> Result<(usize, usize)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = binio::read_file(path)?;
    if is_feature_file(path) {
        let set = super::features::decode_feature_matrix(&bytes)?;
        Ok((set.grid_width, set.grid_height))
    } else {
        pnm::pnm_dimensions(&bytes)
    }
}

/// Reads, parses and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest = DatasetManifest::parse(&text, base)?;
    manifest.validate()?;
    Ok(manifest)
}
