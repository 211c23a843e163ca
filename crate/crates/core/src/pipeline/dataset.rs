//! Dataset manifest and the validated, lazily loading dataset handle.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{check_map, read_annotations, read_fixations, read_map};
use crate::saliency::{default_sigma, gt_map_from_fixations, usm_mean, FixationSet, SaliencyMap};
use crate::selection::ObjectAnnotation;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub d1: usize,
    pub d2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Training,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub id: String,
    pub role: Role,
}

/// A map raster for one `(person, image)`; `path` points at the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRecord {
    pub person: String,
    pub image: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsmRecord {
    pub image: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum UsmSource {
    /// Mean of the training persons' maps.
    #[default]
    Mean,
    Provided {
        maps: Vec<UsmRecord>,
    },
}

fn default_psm_kind() -> String {
    "predicted".into()
}

/// On-disk description of a dataset. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub images: Vec<ImageRecord>,
    pub persons: Vec<PersonRecord>,
    /// Training persons' maps (all images) and optional target GT maps.
    #[serde(default)]
    pub psms: Vec<MapRecord>,
    #[serde(default)]
    pub fixations: Vec<PathBuf>,
    #[serde(default)]
    pub annotations: Vec<PathBuf>,
    #[serde(default)]
    pub usm: UsmSource,
    /// Provenance label of the training persons' maps: `predicted` or `ground_truth`.
    #[serde(default = "default_psm_kind")]
    pub psm_kind: String,
}

/// Why target data was read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Training,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetAccess {
    pub person: String,
    pub image: String,
    pub purpose: Purpose,
}

/// Validated dataset. Map rasters are read on demand; every read of target-person
/// data goes through [`Dataset::target_gt`] and is recorded.
#[derive(Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    dims: BTreeMap<String, (usize, usize)>,
    psm_paths: BTreeMap<(String, String), PathBuf>,
    usm_paths: BTreeMap<String, PathBuf>,
    fixations: BTreeMap<(String, String), FixationSet>,
    annotations: Vec<ObjectAnnotation>,
    access: Mutex<Vec<TargetAccess>>,
}

fn invalid(path: &Path, message: impl ToString) -> Error {
    Error::validation(path, message)
}

/// Parses and validates a manifest and everything it references.
pub fn ingest(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&text).map_err(|e| Error::parse(manifest_path, e))?;
    let root = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    Dataset::from_manifest(manifest, root, manifest_path)
}

impl Dataset {
    pub fn from_manifest(
        manifest: DatasetManifest,
        root: PathBuf,
        manifest_path: &Path,
    ) -> Result<Self> {
        let mp = manifest_path;
        if manifest.version != MANIFEST_VERSION {
            return Err(invalid(
                mp,
                format!(
                    "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                    manifest.version
                ),
            ));
        }
        if !matches!(manifest.psm_kind.as_str(), "predicted" | "ground_truth") {
            return Err(invalid(
                mp,
                format!(
                    "psm_kind must be predicted or ground_truth, got {:?}",
                    manifest.psm_kind
                ),
            ));
        }
        let mut dims = BTreeMap::new();
        for img in &manifest.images {
            if img.d1 == 0 || img.d2 == 0 {
                return Err(invalid(mp, format!("image {} has an empty extent", img.id)));
            }
            if dims.insert(img.id.clone(), (img.d1, img.d2)).is_some() {
                return Err(invalid(mp, format!("duplicate image id {}", img.id)));
            }
        }
        if dims.is_empty() {
            return Err(invalid(mp, "manifest lists no images"));
        }
        let mut roles = BTreeMap::new();
        for p in &manifest.persons {
            if roles.insert(p.id.clone(), p.role).is_some() {
                return Err(invalid(mp, format!("duplicate person id {}", p.id)));
            }
        }

        let mut psm_paths = BTreeMap::new();
        for rec in &manifest.psms {
            if !roles.contains_key(&rec.person) {
                return Err(invalid(
                    mp,
                    format!(
                        "map {} names unknown person {}",
                        rec.path.display(),
                        rec.person
                    ),
                ));
            }
            let Some(&d) = dims.get(&rec.image) else {
                return Err(invalid(
                    mp,
                    format!(
                        "map {} names unknown image {}",
                        rec.path.display(),
                        rec.image
                    ),
                ));
            };
            let path = root.join(&rec.path);
            if !path.exists() {
                return Err(invalid(&path, "referenced map file does not exist"));
            }
            check_map(&path, Some(d))?;
            if psm_paths
                .insert((rec.person.clone(), rec.image.clone()), path)
                .is_some()
            {
                return Err(invalid(
                    mp,
                    format!("two maps for person {} image {}", rec.person, rec.image),
                ));
            }
        }
        for (person, role) in &roles {
            if *role != Role::Training {
                continue;
            }
            if let Some(img) = dims
                .keys()
                .find(|i| !psm_paths.contains_key(&(person.clone(), (*i).clone())))
            {
                return Err(invalid(
                    mp,
                    format!("training person {person} has no map for image {img}"),
                ));
            }
        }

        let mut usm_paths = BTreeMap::new();
        if let UsmSource::Provided { maps } = &manifest.usm {
            for rec in maps {
                let Some(&d) = dims.get(&rec.image) else {
                    return Err(invalid(
                        mp,
                        format!(
                            "USM {} names unknown image {}",
                            rec.path.display(),
                            rec.image
                        ),
                    ));
                };
                let path = root.join(&rec.path);
                if !path.exists() {
                    return Err(invalid(&path, "referenced USM file does not exist"));
                }
                check_map(&path, Some(d))?;
                usm_paths.insert(rec.image.clone(), path);
            }
            if let Some(img) = dims.keys().find(|i| !usm_paths.contains_key(*i)) {
                return Err(invalid(mp, format!("provided USM missing for image {img}")));
            }
        }

        let mut fixations = BTreeMap::new();
        for rel in &manifest.fixations {
            let path = root.join(rel);
            if !path.exists() {
                return Err(invalid(&path, "referenced fixation file does not exist"));
            }
            for (key, set) in read_fixations(&path)? {
                if !roles.contains_key(&key.0) {
                    return Err(invalid(
                        &path,
                        format!("fixations for unknown person {}", key.0),
                    ));
                }
                let Some(&(d1, d2)) = dims.get(&key.1) else {
                    return Err(invalid(
                        &path,
                        format!("fixations for unknown image {}", key.1),
                    ));
                };
                if let Some(p) = set
                    .points
                    .iter()
                    .find(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x < d2 as f64 && p.y < d1 as f64))
                {
                    return Err(invalid(
                        &path,
                        format!(
                            "fixation ({}, {}) of person {} lies outside {d1}x{d2} image {}",
                            p.x, p.y, key.0, key.1
                        ),
                    ));
                }
                match fixations.entry(key) {
                    Entry::Vacant(v) => {
                        v.insert(set);
                    }
                    Entry::Occupied(mut o) => o.get_mut().points.extend(set.points),
                }
            }
        }

        let mut annotations = Vec::new();
        for rel in &manifest.annotations {
            let path = root.join(rel);
            if !path.exists() {
                return Err(invalid(&path, "referenced annotation file does not exist"));
            }
            for a in read_annotations(&path)? {
                let Some(&(d1, d2)) = dims.get(&a.image_id) else {
                    return Err(invalid(
                        &path,
                        format!("annotation for unknown image {}", a.image_id),
                    ));
                };
                if !a.bbox().fits(d1, d2) {
                    return Err(invalid(
                        &path,
                        format!(
                            "box {:?} does not fit {d1}x{d2} image {}",
                            a.bbox(),
                            a.image_id
                        ),
                    ));
                }
                annotations.push(a);
            }
        }

        Ok(Dataset {
            root,
            manifest,
            dims,
            psm_paths,
            usm_paths,
            fixations,
            annotations,
            access: Mutex::new(Vec::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    /// Image ids in sorted order.
    pub fn image_ids(&self) -> Vec<String> {
        self.dims.keys().cloned().collect()
    }

    pub fn image_dims(&self, image: &str) -> Result<(usize, usize)> {
        self.dims
            .get(image)
            .copied()
            .ok_or_else(|| Error::Missing(format!("image {image}")))
    }

    fn persons_with(&self, role: Role) -> Vec<String> {
        self.manifest
            .persons
            .iter()
            .filter(|p| p.role == role)
            .map(|p| p.id.clone())
            .collect()
    }

    /// Training person ids in manifest order.
    pub fn training_persons(&self) -> Vec<String> {
        self.persons_with(Role::Training)
    }

    /// Target person ids in manifest order.
    pub fn target_persons(&self) -> Vec<String> {
        self.persons_with(Role::Target)
    }

    pub fn annotations(&self) -> &[ObjectAnnotation] {
        &self.annotations
    }

    fn role(&self, person: &str) -> Option<Role> {
        self.manifest
            .persons
            .iter()
            .find(|p| p.id == person)
            .map(|p| p.role)
    }

    /// A training person's map for an image.
    pub fn training_psm(&self, person: &str, image: &str) -> Result<SaliencyMap> {
        if self.role(person) != Some(Role::Training) {
            return Err(Error::InvalidArgument(format!(
                "{person} is not a training person"
            )));
        }
        let path = self
            .psm_paths
            .get(&(person.to_string(), image.to_string()))
            .ok_or_else(|| Error::Missing(format!("map of person {person} image {image}")))?;
        SaliencyMap::new(read_map(path)?)
    }

    /// Training persons' maps for an image, in training-person order.
    pub fn training_psms(&self, image: &str) -> Result<Vec<SaliencyMap>> {
        self.training_persons()
            .iter()
            .map(|p| self.training_psm(p, image))
            .collect()
    }

    /// USM of an image: provided map or mean of training persons' maps.
    pub fn usm(&self, image: &str) -> Result<SaliencyMap> {
        match self.usm_paths.get(image) {
            Some(path) => SaliencyMap::new(read_map(path)?),
            None => usm_mean(&self.training_psms(image)?),
        }
    }

    /// Whether GT for a target can be built without reading it.
    pub fn has_target_gt(&self, person: &str, image: &str) -> bool {
        let key = (person.to_string(), image.to_string());
        self.psm_paths.contains_key(&key) || self.fixations.contains_key(&key)
    }

    /// A target person's GT map: a provided map if present, otherwise built from
    /// fixations with `sigma` (default width / 25). The read is logged.
    pub fn target_gt(
        &self,
        person: &str,
        image: &str,
        purpose: Purpose,
        sigma: Option<f64>,
    ) -> Result<SaliencyMap> {
        if self.role(person) != Some(Role::Target) {
            return Err(Error::InvalidArgument(format!(
                "{person} is not a target person"
            )));
        }
        let (d1, d2) = self.image_dims(image)?;
        self.access
            .lock()
            .expect("access log poisoned")
            .push(TargetAccess {
                person: person.into(),
                image: image.into(),
                purpose,
            });
        let key = (person.to_string(), image.to_string());
        if let Some(path) = self.psm_paths.get(&key) {
            return SaliencyMap::new(read_map(path)?);
        }
        match self.fixations.get(&key) {
            Some(f) => gt_map_from_fixations(f, d1, d2, sigma.unwrap_or_else(|| default_sigma(d2))),
            None => Err(Error::Missing(format!(
                "GT of target {person} on image {image}"
            ))),
        }
    }

    /// Every target-data read so far, in order.
    pub fn access_log(&self) -> Vec<TargetAccess> {
        self.access.lock().expect("access log poisoned").clone()
    }

    /// Distinct `(person, image)` pairs read for a purpose.
    pub fn accessed(&self, purpose: Purpose) -> BTreeSet<(String, String)> {
        self.access_log()
            .into_iter()
            .filter(|a| a.purpose == purpose)
            .map(|a| (a.person, a.image))
            .collect()
    }
}
