//! Seeded synthetic data.
//!
//! Persons look at images through `K` latent component maps, each a separable
//! Gaussian blob. Person `p`'s map for image `n` is
//! `max_norm(clamp(max_norm(sum_k m_pk g_nk C_k + c_n B) + noise))`, where `m_p`
//! is the person's mixing vector, `g_n` the image's component activations and
//! `B` a centre-bias map shared by everyone. Targets prefer components
//! differently from the training persons, so averaging over training persons is
//! biased while a linear read-out of their maps is not.
//!
//! A second generator plants a known CP weight tensor and produces regression
//! data from it directly.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_config, write_annotations, write_fixations, write_map};
use crate::pipeline::{
    DatasetManifest, ImageRecord, MapRecord, PersonRecord, Role, UsmSource, MANIFEST_VERSION,
};
use crate::regression::TrainingSet;
use crate::saliency::{Fixation, FixationSet, SaliencyMap};
use crate::selection::ObjectAnnotation;
use crate::tensor::{contract_leading, CpFactors, DenseTensor};

pub const MAX_COMPONENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Latent-component persons with heterogeneous preferences.
    Heterogeneous,
    /// Training maps are random inputs; target maps come from a planted CP weight.
    Planted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub kind: SynthKind,
    /// Training persons `P`.
    pub persons: usize,
    pub targets: usize,
    /// Images `N`.
    pub images: usize,
    /// Object categories `J`.
    pub categories: usize,
    /// Native map shape `(d1, d2)`.
    pub shape: (usize, usize),
    /// Latent components `K`.
    pub components: usize,
    /// Pixel noise std `sigma_n`.
    pub noise: f64,
    /// Planted CP rank `R*`.
    pub planted_rank: usize,
    /// Fixations sampled per target map.
    pub fixations_per_map: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kind: SynthKind::Heterogeneous,
            persons: 5,
            targets: 2,
            images: 80,
            categories: 4,
            shape: (64, 48),
            components: 6,
            noise: 0.02,
            planted_rank: 2,
            fixations_per_map: 2000,
        }
    }
}

impl SynthConfig {
    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: SynthConfig = read_config(path)?;
        cfg.validate().map_err(|e| Error::validation(path, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("persons", self.persons),
            ("targets", self.targets),
            ("images", self.images),
            ("categories", self.categories),
            ("components", self.components),
            ("planted_rank", self.planted_rank),
            ("shape.0", self.shape.0),
            ("shape.1", self.shape.1),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if self.components > MAX_COMPONENTS {
            return Err(Error::InvalidArgument(format!(
                "at most {MAX_COMPONENTS} latent components, got {}",
                self.components
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(
                "noise must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A separable Gaussian blob component and the box around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub map: Array2<f64>,
    pub center: (f64, f64),
    pub spread: f64,
}

impl Component {
    /// `+-2 spread` around the centre, clipped to the map.
    pub fn bbox(&self, d1: usize, d2: usize) -> (usize, usize, usize, usize) {
        let lo = |c: f64| (c - 2.0 * self.spread).floor().max(0.0) as usize;
        let hi = |c: f64, n: usize| ((c + 2.0 * self.spread).ceil() as usize + 1).min(n);
        let (r0, c0) = (lo(self.center.0), lo(self.center.1));
        let (r1, c1) = (hi(self.center.0, d1), hi(self.center.1, d2));
        (r0, c0, r1 - r0, c1 - c0)
    }
}

fn blob(d1: usize, d2: usize, center: (f64, f64), spread: f64) -> Array2<f64> {
    let g = |x: f64, c: f64| (-0.5 * ((x - c) / spread).powi(2)).exp();
    Array2::from_shape_fn((d1, d2), |(i, j)| {
        g(i as f64, center.0) * g(j as f64, center.1)
    })
}

/// Latent components plus one mixing vector per person (training first, then targets).
#[derive(Debug, Clone, PartialEq)]
pub struct PersonModel {
    pub components: Vec<Component>,
    pub center_bias: Array2<f64>,
    pub person_ids: Vec<String>,
    pub target_ids: Vec<String>,
    /// Mixing vectors of training persons.
    pub mixing: Vec<Vec<f64>>,
    pub target_mixing: Vec<Vec<f64>>,
}

fn preference(rng: &mut ChaCha8Rng, k: usize, favourite: usize, base: f64) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let v = base * rng.random::<f64>();
            if j == favourite {
                v + 1.0
            } else {
                v
            }
        })
        .collect()
}

/// Components and mixing vectors. Training persons favour components in turn;
/// each target strongly favours one component and nearly ignores the rest.
pub fn generate_persons(cfg: &SynthConfig) -> Result<PersonModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d1, d2) = cfg.shape;
    let (f1, f2) = (d1 as f64, d2 as f64);
    let components = (0..cfg.components)
        .map(|_| {
            let spread = (0.06 + 0.06 * rng.random::<f64>()) * f1.min(f2);
            let center = (
                f1 * (0.15 + 0.7 * rng.random::<f64>()),
                f2 * (0.15 + 0.7 * rng.random::<f64>()),
            );
            Component {
                map: blob(d1, d2, center, spread.max(0.5)),
                center,
                spread: spread.max(0.5),
            }
        })
        .collect();
    let center_bias = blob(
        d1,
        d2,
        ((f1 - 1.0) / 2.0, (f2 - 1.0) / 2.0),
        0.3 * f1.min(f2),
    );
    let k = cfg.components;
    let mixing = (0..cfg.persons)
        .map(|p| preference(&mut rng, k, p % k, 0.6))
        .collect();
    let target_mixing = (0..cfg.targets)
        .map(|_| {
            let fav = rng.random_range(0..k);
            preference(&mut rng, k, fav, 0.1)
        })
        .collect();
    Ok(PersonModel {
        components,
        center_bias,
        person_ids: (0..cfg.persons).map(|p| format!("p{p:02}")).collect(),
        target_ids: (0..cfg.targets).map(|t| format!("t{t:02}")).collect(),
        mixing,
        target_mixing,
    })
}

/// Per-image component activations and centre-bias weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub id: String,
    pub activations: Vec<f64>,
    pub center_weight: f64,
}

/// Each component is present with probability one half (at least one per image).
pub fn generate_images(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SynthImage> {
    (0..cfg.images)
        .map(|n| {
            let mut activations: Vec<f64> = (0..cfg.components)
                .map(|_| {
                    let on = rng.random::<f64>() < 0.5;
                    let a = 0.3 + 0.7 * rng.random::<f64>();
                    if on {
                        a
                    } else {
                        0.0
                    }
                })
                .collect();
            if activations.iter().all(|&a| a == 0.0) {
                let k = rng.random_range(0..cfg.components);
                activations[k] = 0.3 + 0.7 * rng.random::<f64>();
            }
            SynthImage {
                id: format!("img{n:04}"),
                activations,
                center_weight: 0.2 * rng.random::<f64>(),
            }
        })
        .collect()
}

/// One person's map on one image.
pub fn render_psm(
    model: &PersonModel,
    image: &SynthImage,
    mixing: &[f64],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SaliencyMap> {
    let mut m = model.center_bias.mapv(|v| v * image.center_weight);
    for ((c, &g), &w) in model.components.iter().zip(&image.activations).zip(mixing) {
        m.scaled_add(g * w, &c.map);
    }
    let clean = SaliencyMap::new(m)?.max_normalized();
    if noise == 0.0 {
        return Ok(clean);
    }
    let dist = Normal::new(0.0, noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noisy = clean.values().mapv(|v| v + dist.sample(rng));
    Ok(SaliencyMap::from_clamped(noisy)?.max_normalized())
}

/// Objects of an image: one box per active component, category `(k mod J) + 1`.
pub fn image_annotations(
    cfg: &SynthConfig,
    model: &PersonModel,
    image: &SynthImage,
) -> Vec<ObjectAnnotation> {
    let (d1, d2) = cfg.shape;
    model
        .components
        .iter()
        .zip(&image.activations)
        .enumerate()
        .filter(|(_, (_, &g))| g > 0.0)
        .map(|(k, (c, _))| {
            let (row, col, h, w) = c.bbox(d1, d2);
            ObjectAnnotation {
                image_id: image.id.clone(),
                category: (k % cfg.categories) as u32 + 1,
                row,
                col,
                h,
                w,
            }
        })
        .collect()
}

fn uniform_factor(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, rank), || 0.2 + 0.8 * rng.random::<f64>())
}

/// Planted rank-`R*` weight of shape `P x d1 x d2 x d1 x d2` with entries of
/// each factor in `[0.2, 1)`, scaled so predictions are O(1).
pub fn planted_weights(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<CpFactors> {
    let (d1, d2) = cfg.shape;
    let r = cfg.planted_rank;
    if r > cfg.persons.min(d1).min(d2) {
        return Err(Error::InvalidArgument(format!(
            "planted rank {r} exceeds the smallest extent of {}x{}x{}",
            cfg.persons, d1, d2
        )));
    }
    let mut a1 = uniform_factor(rng, cfg.persons, r);
    // the input loading sums P*d1*d2 terms
    a1 /= (cfg.persons * d1 * d2) as f64;
    CpFactors::new(vec![
        a1,
        uniform_factor(rng, d1, r),
        uniform_factor(rng, d2, r),
        uniform_factor(rng, d1, r),
        uniform_factor(rng, d2, r),
    ])
}

/// `I = images` random inputs in `[0, 1)`, targets `<X_i, W*>_3 + noise` clamped at 0.
pub fn plant_regression_instance(cfg: &SynthConfig) -> Result<(TrainingSet, CpFactors)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = planted_weights(cfg, &mut rng)?;
    let (inputs, targets) = planted_samples(cfg, &w, cfg.images, &mut rng)?;
    let persons = (0..cfg.persons).map(|p| format!("p{p:02}")).collect();
    Ok((TrainingSet::with_persons(inputs, targets, persons)?, w))
}

/// Fresh `(inputs, targets)` from a planted weight.
pub fn planted_samples(
    cfg: &SynthConfig,
    w: &CpFactors,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DenseTensor, DenseTensor)> {
    let (d1, d2) = cfg.shape;
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for _ in 0..count {
        let x = DenseTensor::new(
            vec![cfg.persons, d1, d2],
            (0..cfg.persons * d1 * d2)
                .map(|_| rng.random::<f64>())
                .collect(),
        )?;
        let y = contract_leading(&x, w, 3)?;
        let values = y
            .values()
            .iter()
            .map(|v| {
                let e = if cfg.noise > 0.0 {
                    noise.sample(rng)
                } else {
                    0.0
                };
                (v + e).max(0.0)
            })
            .collect();
        ys.push(DenseTensor::new(vec![d1, d2], values)?);
        xs.push(x);
    }
    Ok((DenseTensor::stack(&xs)?, DenseTensor::stack(&ys)?))
}

/// Inverse-CDF sampling of pixel locations proportional to map mass.
/// Fixations sit at pixel centres.
pub fn sample_fixations(
    psm: &SaliencyMap,
    count: usize,
    seed: u64,
    image_id: &str,
    person_id: &str,
) -> Result<FixationSet> {
    if psm.is_all_zero() {
        return Err(Error::InvalidArgument(
            "cannot sample fixations from an all-zero map".into(),
        ));
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "fixation count must be at least 1".into(),
        ));
    }
    let d2 = psm.d2();
    let mut cdf = Vec::with_capacity(psm.values().len());
    let mut acc = 0.0;
    for &v in psm.values().iter() {
        acc += v;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            // first index with cdf > u; skips zero-mass pixels
            let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            Fixation {
                x: (idx % d2) as f64 + 0.5,
                y: (idx / d2) as f64 + 0.5,
            }
        })
        .collect();
    Ok(FixationSet {
        image_id: image_id.into(),
        person_id: person_id.into(),
        points,
    })
}

fn write_person_maps(
    dir: &Path,
    person: &str,
    maps: &[(String, SaliencyMap)],
    records: &mut Vec<MapRecord>,
) -> Result<()> {
    for (image, map) in maps {
        let stem = format!("{person}_{image}");
        write_map(dir, &stem, map.values(), "max")?;
        records.push(MapRecord {
            person: person.into(),
            image: image.clone(),
            path: PathBuf::from("maps").join(format!("{stem}.json")),
        });
    }
    Ok(())
}

/// Writes a complete dataset (manifest, maps, fixations, annotations) into `dir`
/// and returns the manifest path. Target persons get both GT maps and fixations.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let maps_dir = dir.join("maps");
    fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;
    let (d1, d2) = cfg.shape;

    let (training, targets, annotations, image_ids) = match cfg.kind {
        SynthKind::Heterogeneous => heterogeneous_maps(cfg)?,
        SynthKind::Planted => planted_maps(cfg)?,
    };

    let mut psms = Vec::new();
    for (person, maps) in &training {
        write_person_maps(&maps_dir, person, maps, &mut psms)?;
    }
    let mut fixation_sets = Vec::new();
    for (t, (person, maps)) in targets.iter().enumerate() {
        write_person_maps(&maps_dir, person, maps, &mut psms)?;
        for (n, (image, map)) in maps.iter().enumerate() {
            let seed =
                cfg.seed ^ (((t as u64) << 32) | n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            fixation_sets.push(sample_fixations(
                map,
                cfg.fixations_per_map,
                seed,
                image,
                person,
            )?);
        }
    }
    write_fixations(&dir.join("fixations.csv"), &fixation_sets)?;
    write_annotations(&dir.join("annotations.jsonl"), &annotations)?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        images: image_ids
            .iter()
            .map(|id| ImageRecord {
                id: id.clone(),
                d1,
                d2,
            })
            .collect(),
        persons: training
            .iter()
            .map(|(id, _)| PersonRecord {
                id: id.clone(),
                role: Role::Training,
            })
            .chain(targets.iter().map(|(id, _)| PersonRecord {
                id: id.clone(),
                role: Role::Target,
            }))
            .collect(),
        psms,
        fixations: vec![PathBuf::from("fixations.csv")],
        annotations: vec![PathBuf::from("annotations.jsonl")],
        usm: UsmSource::Mean,
        psm_kind: "ground_truth".into(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

type PersonMaps = Vec<(String, Vec<(String, SaliencyMap)>)>;
type Generated = (PersonMaps, PersonMaps, Vec<ObjectAnnotation>, Vec<String>);

fn heterogeneous_maps(cfg: &SynthConfig) -> Result<Generated> {
    let model = generate_persons(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let images = generate_images(cfg, &mut rng);
    let mut render = |ids: &[String], mixing: &[Vec<f64>]| -> Result<PersonMaps> {
        ids.iter()
            .zip(mixing)
            .map(|(id, m)| {
                let maps = images
                    .iter()
                    .map(|img| {
                        Ok((
                            img.id.clone(),
                            render_psm(&model, img, m, cfg.noise, &mut rng)?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((id.clone(), maps))
            })
            .collect()
    };
    let training = render(&model.person_ids, &model.mixing)?;
    let targets = render(&model.target_ids, &model.target_mixing)?;
    let annotations = images
        .iter()
        .flat_map(|img| image_annotations(cfg, &model, img))
        .collect();
    Ok((
        training,
        targets,
        annotations,
        images.into_iter().map(|i| i.id).collect(),
    ))
}

fn planted_maps(cfg: &SynthConfig) -> Result<Generated> {
    let (d1, d2) = cfg.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = (0..cfg.targets)
        .map(|_| planted_weights(cfg, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let image_ids: Vec<String> = (0..cfg.images).map(|n| format!("img{n:04}")).collect();
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut inputs = Vec::with_capacity(cfg.images);
    for _ in 0..cfg.images {
        inputs.push(DenseTensor::new(
            vec![cfg.persons, d1, d2],
            (0..cfg.persons * d1 * d2)
                .map(|_| rng.random::<f64>())
                .collect(),
        )?);
    }
    let training = (0..cfg.persons)
        .map(|p| {
            let maps = image_ids
                .iter()
                .zip(&inputs)
                .map(|(id, x)| {
                    let s = x.slice_leading(p)?;
                    Ok((
                        id.clone(),
                        SaliencyMap::from_vec(d1, d2, s.values().to_vec())?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((format!("p{p:02}"), maps))
        })
        .collect::<Result<PersonMaps>>()?;
    let targets = weights
        .iter()
        .enumerate()
        .map(|(t, w)| {
            let maps = image_ids
                .iter()
                .zip(&inputs)
                .map(|(id, x)| {
                    let y = contract_leading(x, w, 3)?;
                    let values = y
                        .values()
                        .iter()
                        .map(|v| {
                            let e = if cfg.noise > 0.0 {
                                noise.sample(&mut rng)
                            } else {
                                0.0
                            };
                            v + e
                        })
                        .collect();
                    let arr = Array2::from_shape_vec((d1, d2), values)
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
                    Ok((id.clone(), SaliencyMap::from_clamped(arr)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((format!("t{t:02}"), maps))
        })
        .collect::<Result<PersonMaps>>()?;
    let annotations = image_ids
        .iter()
        .map(|id| {
            let h = rng.random_range(1..=d1);
            let w = rng.random_range(1..=d2);
            ObjectAnnotation {
                image_id: id.clone(),
                category: rng.random_range(0..cfg.categories) as u32 + 1,
                row: rng.random_range(0..=d1 - h),
                col: rng.random_range(0..=d2 - w),
                h,
                w,
            }
        })
        .collect();
    Ok((training, targets, annotations, image_ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::cross_correlation;
    use crate::regression::objective_of;

    fn small() -> SynthConfig {
        SynthConfig {
            persons: 3,
            targets: 1,
            images: 6,
            shape: (12, 10),
            components: 3,
            noise: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn identical_mixing_gives_identical_maps() {
        let cfg = small();
        let model = generate_persons(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let images = generate_images(&cfg, &mut rng);
        for img in &images {
            let a = render_psm(&model, img, &model.mixing[0], 0.0, &mut rng).unwrap();
            let b = render_psm(&model, img, &model.mixing[0], 0.0, &mut rng).unwrap();
            assert_eq!(a, b);
            assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn single_component_maps_are_perfectly_correlated() {
        let cfg = SynthConfig {
            components: 1,
            ..small()
        };
        let mut model = generate_persons(&cfg).unwrap();
        model.center_bias.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = &generate_images(&cfg, &mut rng)[0];
        let a = render_psm(&model, img, &model.mixing[0], 0.0, &mut rng).unwrap();
        let b = render_psm(&model, img, &model.mixing[1], 0.0, &mut rng).unwrap();
        assert!((cross_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_maps_stay_in_unit_range() {
        let cfg = SynthConfig {
            noise: 0.2,
            ..small()
        };
        let model = generate_persons(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for img in generate_images(&cfg, &mut rng) {
            let m = render_psm(&model, &img, &model.mixing[2], cfg.noise, &mut rng).unwrap();
            assert!(m.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn noiseless_plant_has_zero_objective() {
        let cfg = SynthConfig {
            images: 5,
            shape: (4, 3),
            ..small()
        };
        let (data, w) = plant_regression_instance(&cfg).unwrap();
        assert!(objective_of(&w, &data, 0.0).unwrap() < 1e-24);
        let again = plant_regression_instance(&cfg).unwrap();
        assert_eq!(again.0.targets(), data.targets());
        assert_eq!(again.1, w);
    }

    #[test]
    fn point_mass_fixations() {
        let mut v = Array2::zeros((4, 5));
        v[[2, 3]] = 1.0;
        let m = SaliencyMap::new(v).unwrap();
        let f = sample_fixations(&m, 50, 1, "i", "p").unwrap();
        assert!(f.points.iter().all(|p| p.x == 3.5 && p.y == 2.5));
        assert!(sample_fixations(&SaliencyMap::zeros(2, 2).unwrap(), 5, 1, "i", "p").is_err());
    }

    #[test]
    fn uniform_quadrants_within_three_sigma() {
        let m = SaliencyMap::new(Array2::from_elem((8, 6), 1.0)).unwrap();
        let n = 100_000;
        let f = sample_fixations(&m, n, 1, "i", "p").unwrap();
        let mut counts = [0usize; 4];
        for p in &f.points {
            counts[(p.y >= 4.0) as usize * 2 + (p.x >= 3.0) as usize] += 1;
        }
        let expect = n as f64 / 4.0;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sd, "{counts:?}");
        }
        assert_eq!(f, sample_fixations(&m, n, 1, "i", "p").unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig {
            components: 9,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            images: 0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            noise: -1.0,
            ..small()
        }
        .validate()
        .is_err());
    }
}
