mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::rng;
use psmtr_core::selection::{select_common_images, ImageScore, ObjectAnnotation};
use rand::Rng;

fn annotation(image: &str, category: u32) -> ObjectAnnotation {
    ObjectAnnotation {
        image_id: image.into(),
        category,
        row: 0,
        col: 0,
        h: 1,
        w: 1,
    }
}

/// Largest number of categories any `count` images cover, by enumerating subsets.
fn exhaustive_coverage(cats: &[BTreeSet<u32>], count: usize) -> usize {
    let n = cats.len();
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == count)
        .map(|m| {
            (0..n)
                .filter(|i| m & (1 << i) != 0)
                .flat_map(|i| cats[i].iter().copied())
                .collect::<BTreeSet<_>>()
                .len()
        })
        .max()
        .unwrap_or(0)
}

struct Instance {
    scores: BTreeMap<String, ImageScore>,
    annotations: Vec<ObjectAnnotation>,
    cats: Vec<BTreeSet<u32>>,
    count: usize,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=10);
    let j = rng.random_range(1..=4u32);
    let count = rng.random_range(1..=3.min(n));
    let mut scores = BTreeMap::new();
    let mut annotations = Vec::new();
    let mut cats = Vec::new();
    for i in 0..n {
        let id = format!("img{i}");
        let mut set = BTreeSet::new();
        for c in 1..=j {
            if rng.random::<f64>() < 0.35 {
                set.insert(c);
                annotations.push(annotation(&id, c));
            }
        }
        let total = rng.random::<f64>();
        scores.insert(
            id,
            ImageScore {
                total,
                per_category: BTreeMap::new(),
            },
        );
        cats.push(set);
    }
    Instance {
        scores,
        annotations,
        cats,
        count,
    }
}

#[test]
fn coverage_matches_exhaustive_search() {
    for seed in 0..300 {
        let inst = random_instance(seed);
        let r = select_common_images(&inst.scores, &inst.annotations, inst.count).unwrap();
        assert_eq!(r.chosen.len(), inst.count);
        let unique: BTreeSet<_> = r.chosen.iter().collect();
        assert_eq!(unique.len(), inst.count);
        assert_eq!(
            r.covered.len(),
            exhaustive_coverage(&inst.cats, inst.count),
            "seed {seed}"
        );
    }
}

#[test]
fn no_annotations_falls_back_to_scores() {
    let mut scores = BTreeMap::new();
    for (id, s) in [("a", 0.1), ("b", 0.9), ("c", 0.5)] {
        scores.insert(
            id.to_string(),
            ImageScore {
                total: s,
                per_category: BTreeMap::new(),
            },
        );
    }
    let r = select_common_images(&scores, &[], 2).unwrap();
    assert_eq!(r.chosen, vec!["b", "c"]);
    assert!(r.covered.is_empty());
}

#[test]
fn count_bounds() {
    let mut scores = BTreeMap::new();
    scores.insert(
        "a".to_string(),
        ImageScore {
            total: 0.0,
            per_category: BTreeMap::new(),
        },
    );
    assert!(select_common_images(&scores, &[], 0).is_err());
    assert!(select_common_images(&scores, &[], 2).is_err());
    assert_eq!(
        select_common_images(&scores, &[], 1).unwrap().chosen,
        vec!["a"]
    );
}
