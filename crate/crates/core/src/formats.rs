//! On-disk formats shared by the synthetic generator and the dataset loader.
//!
//! * Map raster: a JSON sidecar
//!   `{"version":1,"d1":..,"d2":..,"dtype":"f32","normalization":..,"data":"<file>"}`
//!   next to a raw little-endian f32 raster (`d1 * d2` values, row-major).
//!   `data` is resolved relative to the sidecar's directory.
//! * Fixations: CSV with header `image_id,person_id,x,y` (x = column, y = row).
//! * Configs: TOML (`.toml`) or JSON (anything else).
//! * Annotations: JSON lines of `{"image_id":..,"category":..,"row":..,"col":..,"h":..,"w":..}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::{Fixation, FixationSet};
use crate::selection::ObjectAnnotation;

/// Reads a TOML (`.toml`) or JSON (anything else) config file.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

pub const MAP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub version: u32,
    pub d1: usize,
    pub d2: usize,
    pub dtype: String,
    /// `max`, `sum`, or `none`.
    pub normalization: String,
    pub data: String,
}

/// Writes `<stem>.json` and `<stem>.f32` into `dir`; returns the sidecar path.
pub fn write_map(
    dir: &Path,
    stem: &str,
    values: &Array2<f64>,
    normalization: &str,
) -> Result<PathBuf> {
    let (d1, d2) = values.dim();
    let raster_name = format!("{stem}.f32");
    let mut bytes = Vec::with_capacity(d1 * d2 * 4);
    for v in values.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let raster = dir.join(&raster_name);
    fs::write(&raster, bytes).map_err(|e| Error::io(&raster, e))?;
    let sidecar = MapSidecar {
        version: MAP_FORMAT_VERSION,
        d1,
        d2,
        dtype: "f32".into(),
        normalization: normalization.into(),
        data: raster_name,
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_sidecar(path: &Path) -> Result<MapSidecar> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let sc: MapSidecar = serde_json::from_slice(&text).map_err(|e| Error::parse(path, e))?;
    if sc.version != MAP_FORMAT_VERSION {
        return Err(Error::validation(
            path,
            format!("unsupported map version {}", sc.version),
        ));
    }
    if sc.dtype != "f32" {
        return Err(Error::validation(
            path,
            format!("unsupported dtype {:?}", sc.dtype),
        ));
    }
    Ok(sc)
}

pub fn raster_path(sidecar_path: &Path, sc: &MapSidecar) -> PathBuf {
    sidecar_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&sc.data)
}

/// Checks the raster length against the sidecar without decoding it.
pub fn check_map(path: &Path, expect: Option<(usize, usize)>) -> Result<MapSidecar> {
    let sc = read_sidecar(path)?;
    if let Some((d1, d2)) = expect {
        if (sc.d1, sc.d2) != (d1, d2) {
            return Err(Error::validation(
                path,
                format!("map is {}x{}, image is {d1}x{d2}", sc.d1, sc.d2),
            ));
        }
    }
    let raster = raster_path(path, &sc);
    let len = fs::metadata(&raster)
        .map_err(|e| Error::io(&raster, e))?
        .len() as usize;
    let expected = sc.d1 * sc.d2 * 4;
    if len != expected {
        return Err(Error::validation(
            &raster,
            format!(
                "raster has {len} bytes, expected {expected} ({}x{} f32)",
                sc.d1, sc.d2
            ),
        ));
    }
    Ok(sc)
}

pub fn read_map(path: &Path) -> Result<Array2<f64>> {
    let sc = check_map(path, None)?;
    let raster = raster_path(path, &sc);
    let bytes = fs::read(&raster).map_err(|e| Error::io(&raster, e))?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Array2::from_shape_vec((sc.d1, sc.d2), values).map_err(|e| Error::parse(&raster, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationRecord {
    pub image_id: String,
    pub person_id: String,
    pub x: f64,
    pub y: f64,
}

pub fn write_fixations(path: &Path, sets: &[FixationSet]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    // header comes from the first serialized record
    if sets.iter().all(|s| s.points.is_empty()) {
        w.write_record(["image_id", "person_id", "x", "y"])?;
    }
    for s in sets {
        for p in &s.points {
            w.serialize(FixationRecord {
                image_id: s.image_id.clone(),
                person_id: s.person_id.clone(),
                x: p.x,
                y: p.y,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fixations grouped by `(person, image)`, in file order within each group.
pub fn read_fixations(path: &Path) -> Result<BTreeMap<(String, String), FixationSet>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = r.headers().map_err(|e| Error::parse(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "person_id", "x", "y"] {
        return Err(Error::validation(
            path,
            format!("fixation header must be image_id,person_id,x,y, got {headers:?}"),
        ));
    }
    let mut out: BTreeMap<(String, String), FixationSet> = BTreeMap::new();
    for (line, rec) in r.deserialize::<FixationRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?;
        out.entry((rec.person_id.clone(), rec.image_id.clone()))
            .or_insert_with(|| FixationSet {
                image_id: rec.image_id.clone(),
                person_id: rec.person_id.clone(),
                points: Vec::new(),
            })
            .points
            .push(Fixation { x: rec.x, y: rec.y });
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, anns: &[ObjectAnnotation]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for a in anns {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Vec<ObjectAnnotation>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let a = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        out.push(a);
    }
    Ok(out)
}
