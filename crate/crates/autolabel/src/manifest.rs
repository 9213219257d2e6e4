//! Dataset manifests: one record per line,
//! `<image path> <mask path or -> <label or ->`, paths relative to the
//! manifest's directory. Blank lines and `#` comments are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use autolabel_core::{Image, Mask};

use crate::error::{Error, Result};
use crate::pnm;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory the record paths are relative to.
    pub root: PathBuf,
    pub records: Vec<Record>,
}

fn optional(field: &str) -> Option<&str> {
    (field != "-").then_some(field)
}

impl Manifest {
    pub fn parse(text: &str, root: &Path, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [image, mask, label] = fields[..] else {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            };
            let label = optional(label)
                .map(|l| l.parse::<usize>())
                .transpose()
                .map_err(|_| Error::parse(origin, i + 1, format!("bad label {label:?}")))?;
            records.push(Record {
                image: PathBuf::from(image),
                mask: optional(mask).map(PathBuf::from),
                label,
            });
        }
        Ok(Manifest {
            root: root.to_path_buf(),
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &root, path)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let mask = r
                .mask
                .as_ref()
                .map_or_else(|| "-".to_string(), |m| m.display().to_string());
            let label = r.label.map_or_else(|| "-".to_string(), |l| l.to_string());
            writeln!(out, "{} {} {}", r.image.display(), mask, label).expect("writing to a String");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

/// A manifest record with its files loaded.
#[derive(Debug, Clone)]
pub struct Entry {
    /// Image file stem; names output masks.
    pub name: String,
    pub image: Image,
    pub mask: Option<Mask>,
    pub label: Option<usize>,
}

pub fn load_entries(manifest: &Manifest) -> Result<Vec<Entry>> {
    let mut names = std::collections::HashSet::new();
    manifest
        .records
        .iter()
        .map(|r| {
            let image_path = manifest.root.join(&r.image);
            let name = r
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Invalid(format!("no file name in {}", r.image.display())))?;
            if !names.insert(name.clone()) {
                return Err(Error::Invalid(format!("duplicate image name {name:?} in manifest")));
            }
            let image = pnm::load_image(&image_path)?;
            let mask = match &r.mask {
                Some(m) => {
                    let mask_path = manifest.root.join(m);
                    let mask = pnm::load_mask(&mask_path)?;
                    if mask.dims() != image.dims() {
                        return Err(Error::Invalid(format!(
                            "{}: mask is {:?} but image is {:?}",
                            mask_path.display(),
                            mask.dims(),
                            image.dims()
                        )));
                    }
                    Some(mask)
                }
                None => None,
            };
            Ok(Entry {
                name,
                image,
                mask,
                label: r.label,
            })
        })
        .collect()
}
