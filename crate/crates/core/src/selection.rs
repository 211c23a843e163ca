//! Adaptive common-image selection.
//!
//! Each annotated object gets a PSM variance across training persons, each
//! image the sum over categories of its per-category maxima, and the common
//! images are picked to cover as many object categories as possible, preferring
//! high-variance images.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::{crop, BBox, SaliencyMap};

/// One detected object: category `category` inside `bbox` of image `image_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub image_id: String,
    pub category: u32,
    pub row: usize,
    pub col: usize,
    pub h: usize,
    pub w: usize,
}

impl ObjectAnnotation {
    pub fn bbox(&self) -> BBox {
        BBox {
            row: self.row,
            col: self.col,
            h: self.h,
            w: self.w,
        }
    }
}

/// Mean squared deviation from the person-mean map over the crop:
/// `q = 1/(h w P) * sum_p sum_px (S_p - mean_p S_p)^2`.
pub fn object_variance(crops: &[SaliencyMap]) -> Result<f64> {
    if crops.len() < 2 {
        log::warn!(
            "object variance needs at least two persons, got {}",
            crops.len()
        );
        return Ok(0.0);
    }
    let dims = crops[0].dims();
    if let Some(c) = crops.iter().find(|c| c.dims() != dims) {
        return Err(Error::ShapeMismatch(format!(
            "crop {:?} vs {:?}",
            c.dims(),
            dims
        )));
    }
    let p = crops.len() as f64;
    let mut mean = ndarray::Array2::<f64>::zeros(dims);
    for c in crops {
        mean += c.values();
    }
    mean /= p;
    let sum_sq: f64 = crops
        .iter()
        .map(|c| {
            c.values()
                .iter()
                .zip(mean.iter())
                .map(|(v, m)| (v - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(sum_sq / ((dims.0 * dims.1) as f64 * p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    /// Sum of `per_category`.
    pub total: f64,
    /// Largest instance variance per category present in the image.
    pub per_category: BTreeMap<u32, f64>,
}

/// Scores every image in `psms` (image id -> one map per training person).
///
/// Annotations for images outside `psms` are ignored; images without
/// annotations score zero.
pub fn image_scores(
    annotations: &[ObjectAnnotation],
    psms: &BTreeMap<String, Vec<SaliencyMap>>,
) -> Result<BTreeMap<String, ImageScore>> {
    let persons = psms.values().map(Vec::len).max().unwrap_or(0);
    let mut scores: BTreeMap<String, ImageScore> = psms
        .keys()
        .map(|id| {
            (
                id.clone(),
                ImageScore {
                    total: 0.0,
                    per_category: BTreeMap::new(),
                },
            )
        })
        .collect();
    for ann in annotations {
        let Some(maps) = psms.get(&ann.image_id) else {
            continue;
        };
        if maps.len() != persons {
            return Err(Error::Missing(format!(
                "image {} has PSMs for {} of {persons} persons",
                ann.image_id,
                maps.len()
            )));
        }
        let crops = maps
            .iter()
            .map(|m| crop(m, ann.bbox()))
            .collect::<Result<Vec<_>>>()?;
        let q = object_variance(&crops)?;
        let entry = scores
            .get_mut(&ann.image_id)
            .expect("scores cover every PSM image");
        let slot = entry.per_category.entry(ann.category).or_insert(q);
        *slot = slot.max(q);
    }
    for s in scores.values_mut() {
        s.total = s.per_category.values().sum();
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Chosen image ids in pick order.
    pub chosen: Vec<String>,
    /// `q̄_n` of every candidate image.
    pub scores: BTreeMap<String, f64>,
    pub covered: BTreeSet<u32>,
}

/// Node budget of the exact coverage search.
const COVERAGE_SEARCH_BUDGET: usize = 2_000_000;

struct Candidate<'a> {
    id: &'a str,
    score: f64,
    categories: BTreeSet<u32>,
}

/// Greedy preference: more newly covered categories, then higher score, then smaller id.
fn better(a: (usize, f64, &str), b: (usize, f64, &str)) -> bool {
    match a.0.cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.1.total_cmp(&b.1) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a.2 < b.2,
        },
    }
}

fn greedy_fill(
    cands: &[Candidate<'_>],
    chosen: &mut Vec<usize>,
    covered: &mut BTreeSet<u32>,
    count: usize,
) {
    while chosen.len() < count {
        let mut best: Option<(usize, (usize, f64, &str))> = None;
        for (i, c) in cands.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let key = (c.categories.difference(covered).count(), c.score, c.id);
            if best.is_none_or(|(_, k)| better(key, k)) {
                best = Some((i, key));
            }
        }
        let (i, _) = best.expect("count never exceeds candidate count");
        covered.extend(cands[i].categories.iter().copied());
        chosen.push(i);
    }
}

/// Branch and bound over distinct category signatures for the largest union
/// reachable with `slots` images. Returns candidate indices, or `None` when
/// there are too many categories to encode or the best found is no better
/// than `floor`.
fn max_coverage(cands: &[Candidate<'_>], slots: usize, floor: usize) -> Option<Vec<usize>> {
    let all: BTreeSet<u32> = cands
        .iter()
        .flat_map(|c| c.categories.iter().copied())
        .collect();
    if all.len() > 128 || all.len() <= floor {
        return None;
    }
    let bit: BTreeMap<u32, u32> = all
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect();
    // best representative per signature: highest score, then smallest id
    let mut reps: BTreeMap<u128, usize> = BTreeMap::new();
    for (i, c) in cands.iter().enumerate() {
        let mask = c
            .categories
            .iter()
            .fold(0u128, |m, c| m | (1u128 << bit[c]));
        if mask == 0 {
            continue;
        }
        let keep = match reps.get(&mask) {
            Some(&j) => better((0, c.score, c.id), (0, cands[j].score, cands[j].id)),
            None => true,
        };
        if keep {
            reps.insert(mask, i);
        }
    }
    let mut sigs: Vec<(u128, usize)> = reps.into_iter().collect();
    sigs.sort_by(|a, b| {
        b.0.count_ones()
            .cmp(&a.0.count_ones())
            .then(cands[b.1].score.total_cmp(&cands[a.1].score))
            .then(cands[a.1].id.cmp(cands[b.1].id))
    });
    // suffix unions for the bound
    let mut suffix = vec![0u128; sigs.len() + 1];
    for i in (0..sigs.len()).rev() {
        suffix[i] = suffix[i + 1] | sigs[i].0;
    }

    struct Search<'s> {
        sigs: &'s [(u128, usize)],
        suffix: &'s [u128],
        full: u32,
        best: u32,
        best_set: Vec<usize>,
        nodes: usize,
    }
    impl Search<'_> {
        fn go(&mut self, start: usize, slots: usize, covered: u128, picked: &mut Vec<usize>) {
            self.nodes += 1;
            let c = covered.count_ones();
            if c > self.best {
                self.best = c;
                self.best_set = picked.clone();
            }
            if slots == 0 || self.best == self.full || self.nodes > COVERAGE_SEARCH_BUDGET {
                return;
            }
            for i in start..self.sigs.len() {
                if (covered | self.suffix[i]).count_ones() <= self.best {
                    return;
                }
                let mask = self.sigs[i].0;
                if mask & !covered == 0 {
                    continue;
                }
                picked.push(self.sigs[i].1);
                self.go(i + 1, slots - 1, covered | mask, picked);
                picked.pop();
                if self.best == self.full || self.nodes > COVERAGE_SEARCH_BUDGET {
                    return;
                }
            }
        }
    }
    let mut search = Search {
        sigs: &sigs,
        suffix: &suffix,
        full: all.len() as u32,
        best: floor as u32,
        best_set: Vec::new(),
        nodes: 0,
    };
    search.go(0, slots, 0, &mut Vec::new());
    if search.nodes > COVERAGE_SEARCH_BUDGET {
        log::warn!("coverage search budget exhausted; keeping best found");
    }
    (!search.best_set.is_empty()).then_some(search.best_set)
}

/// Picks `count` common images.
///
/// The base rule is greedy: repeatedly take the unchosen image maximizing
/// (newly covered categories, score), ties to the smaller id. Greedy coverage
/// can fall short of the optimum (e.g. `{1,2}, {1,3}, {2,4}` with two slots),
/// so a bounded exact search over category signatures runs afterwards; if it
/// finds a larger coverage, its images are taken first and the remaining slots
/// are filled by the greedy rule.
pub fn select_common_images(
    scores: &BTreeMap<String, ImageScore>,
    annotations: &[ObjectAnnotation],
    count: usize,
) -> Result<SelectionResult> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "must select at least one image".into(),
        ));
    }
    if count > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {count} common images from {} candidates",
            scores.len()
        )));
    }
    let mut categories: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for a in annotations {
        if scores.contains_key(&a.image_id) {
            categories
                .entry(&a.image_id)
                .or_default()
                .insert(a.category);
        }
    }
    let cands: Vec<Candidate<'_>> = scores
        .iter()
        .map(|(id, s)| Candidate {
            id,
            score: s.total,
            categories: categories.remove(id.as_str()).unwrap_or_default(),
        })
        .collect();

    let mut chosen = Vec::new();
    let mut covered = BTreeSet::new();
    greedy_fill(&cands, &mut chosen, &mut covered, count);

    if let Some(mut exact) = max_coverage(&cands, count, covered.len()) {
        exact.sort_by(|&a, &b| {
            cands[b]
                .score
                .total_cmp(&cands[a].score)
                .then(cands[a].id.cmp(cands[b].id))
        });
        log::info!(
            "greedy covered {} categories; exact search raised it",
            covered.len()
        );
        covered = exact
            .iter()
            .flat_map(|&i| cands[i].categories.iter().copied())
            .collect();
        chosen = exact;
        greedy_fill(&cands, &mut chosen, &mut covered, count);
    }

    Ok(SelectionResult {
        chosen: chosen.iter().map(|&i| cands[i].id.to_string()).collect(),
        scores: scores.iter().map(|(k, v)| (k.clone(), v.total)).collect(),
        covered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ann(image: &str, category: u32) -> ObjectAnnotation {
        ObjectAnnotation {
            image_id: image.into(),
            category,
            row: 0,
            col: 0,
            h: 1,
            w: 1,
        }
    }

    fn scored(entries: &[(&str, f64)]) -> BTreeMap<String, ImageScore> {
        entries
            .iter()
            .map(|&(id, total)| {
                (
                    id.to_string(),
                    ImageScore {
                        total,
                        per_category: BTreeMap::new(),
                    },
                )
            })
            .collect()
    }

    #[test]
    fn variance_hand_case() {
        let s1 = SaliencyMap::new(array![[1.0, 0.0]]).unwrap();
        let s2 = SaliencyMap::new(array![[0.0, 1.0]]).unwrap();
        assert!((object_variance(&[s1, s2]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn variance_edge_cases() {
        let s = SaliencyMap::new(array![[0.3, 0.6], [0.1, 0.0]]).unwrap();
        assert!(
            object_variance(&[s.clone(), s.clone(), s.clone()])
                .unwrap()
                .abs()
                < 1e-15
        );
        assert_eq!(object_variance(std::slice::from_ref(&s)).unwrap(), 0.0);
        let other = SaliencyMap::new(array![[0.3, 0.6]]).unwrap();
        assert!(object_variance(&[s, other]).is_err());
    }

    #[test]
    fn variance_scales_quadratically() {
        let a = SaliencyMap::new(array![[0.2, 0.9, 0.1]]).unwrap();
        let b = SaliencyMap::new(array![[0.5, 0.4, 0.0]]).unwrap();
        let q = object_variance(&[a.clone(), b.clone()]).unwrap();
        let scale = |m: &SaliencyMap| SaliencyMap::new(m.values() * 3.0).unwrap();
        let q3 = object_variance(&[scale(&a), scale(&b)]).unwrap();
        assert!((q3 - 9.0 * q).abs() < 1e-12);
    }

    #[test]
    fn scores_take_max_instance_and_sum_categories() {
        let hi = SaliencyMap::new(array![[1.0, 0.0, 0.0, 0.0]]).unwrap();
        let lo = SaliencyMap::new(array![[0.0, 0.0, 0.0, 0.0]]).unwrap();
        let mut psms = BTreeMap::new();
        psms.insert("a".to_string(), vec![hi.clone(), lo.clone()]);
        psms.insert("empty".to_string(), vec![hi, lo]);
        let mk = |col: usize, w: usize, category: u32| ObjectAnnotation {
            image_id: "a".into(),
            category,
            row: 0,
            col,
            h: 1,
            w,
        };
        // instances of category 1: q=0.25 (col 0 width 1) and q=0.0625 (width 4)
        let anns = vec![mk(0, 4, 1), mk(0, 1, 1), mk(1, 3, 2), ann("elsewhere", 9)];
        let s = image_scores(&anns, &psms).unwrap();
        assert_eq!(s["a"].per_category[&1], 0.25);
        assert_eq!(s["a"].per_category[&2], 0.0);
        assert_eq!(s["a"].total, 0.25);
        assert_eq!(s["empty"].total, 0.0);
    }

    #[test]
    fn missing_person_psm_is_an_error() {
        let m = SaliencyMap::new(array![[1.0]]).unwrap();
        let mut psms = BTreeMap::new();
        psms.insert("a".to_string(), vec![m.clone(), m.clone()]);
        psms.insert("b".to_string(), vec![m]);
        assert!(matches!(
            image_scores(&[ann("b", 1)], &psms),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn coverage_beats_score() {
        let scores = scored(&[("A", 0.9), ("B", 0.8), ("C", 0.1)]);
        let anns = [ann("A", 1), ann("B", 1), ann("C", 2)];
        let r = select_common_images(&scores, &anns, 2).unwrap();
        assert_eq!(r.chosen, vec!["A", "C"]);
        assert_eq!(r.covered, BTreeSet::from([1, 2]));
    }

    #[test]
    fn all_images_when_count_is_n() {
        let scores = scored(&[("A", 0.0), ("B", 0.5), ("C", 0.1)]);
        let r = select_common_images(&scores, &[], 3).unwrap();
        let set: BTreeSet<_> = r.chosen.iter().cloned().collect();
        assert_eq!(set.len(), 3);
        assert!(select_common_images(&scores, &[], 4).is_err());
        assert!(select_common_images(&scores, &[], 0).is_err());
    }

    #[test]
    fn exact_search_fixes_greedy_shortfall() {
        let scores = scored(&[("A", 0.9), ("B", 0.1), ("C", 0.1)]);
        let anns = [
            ann("A", 1),
            ann("A", 2),
            ann("B", 1),
            ann("B", 3),
            ann("C", 2),
            ann("C", 4),
        ];
        let r = select_common_images(&scores, &anns, 2).unwrap();
        assert_eq!(r.covered.len(), 4);
        assert_eq!(r.chosen, vec!["B", "C"]);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let scores = scored(&[("b", 0.5), ("a", 0.5), ("c", 0.5)]);
        let r = select_common_images(&scores, &[], 2).unwrap();
        assert_eq!(r.chosen, vec!["a", "b"]);
    }
}
