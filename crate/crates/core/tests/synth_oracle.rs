mod common;

use std::collections::HashSet;

use common::*;
use gradrec::direction::{build_class_sets, build_direction, SnrOptions};
use gradrec::eval::generate_intensity_datasets;
use gradrec::synth::{generate_synthetic, SyntheticSpec};

#[test]
fn within_level_cosine_beats_cross_level() {
    let s = Setup::new(600, 1);
    let alpha = s.alpha();
    let products = s.synth.catalog.products();
    let levels = s.synth.oracle.levels.clone();
    let mut sum = vec![vec![0.0; levels.len()]; levels.len()];
    let mut cnt = vec![vec![0usize; levels.len()]; levels.len()];
    let lvl = |id: &str| levels.iter().position(|&l| l == alpha[id]).unwrap();
    for i in 0..products.len() {
        for j in (i + 1)..products.len() {
            let (a, b) = (lvl(&products[i].id), lvl(&products[j].id));
            let c = cos64(
                products[i].image_vec.as_slice(),
                products[j].image_vec.as_slice(),
            );
            let (a, b) = (a.min(b), a.max(b));
            sum[a][b] += c;
            cnt[a][b] += 1;
        }
    }
    let mean = |a: usize, b: usize| sum[a][b] / cnt[a][b] as f64;
    for a in 0..levels.len() {
        for b in (a + 1)..levels.len() {
            assert!(mean(a, a) > mean(a, b), "level {a} vs {b}");
            assert!(mean(b, b) > mean(a, b), "level {b} vs {a}");
        }
    }
}

#[test]
fn projection_on_planted_direction_tracks_alpha() {
    let s = Setup::new(600, 2);
    let d = s.planted();
    let alpha = s.alpha();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in s.synth.catalog.products() {
        let v: Vec<f64> = p.image_vec.to_f64();
        xs.push(v.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>());
        ys.push(alpha[&p.id]);
    }
    let r = cos_f64(
        &xs.iter()
            .map(|x| x - xs.iter().sum::<f64>() / xs.len() as f64)
            .collect::<Vec<_>>(),
        &ys.iter()
            .map(|y| y - ys.iter().sum::<f64>() / ys.len() as f64)
            .collect::<Vec<_>>(),
    );
    assert!(r > 0.99, "pearson {r}");
}

#[test]
fn prompt_retrieval_is_pure() {
    let s = Setup::new(600, 3);
    let alpha = s.alpha();
    for level in [-1.0, 0.0, 1.0] {
        let hits = s
            .index
            .retrieve_by_prompt(s.bank(), &prompt(level), 100)
            .unwrap();
        assert_eq!(hits.len(), 100);
        let pure = hits
            .iter()
            .filter(|h| alpha[&h.product_id] == level)
            .count();
        assert!(pure >= 90, "level {level}: {pure}/100");
    }
    let all = s
        .index
        .retrieve_by_prompt(s.bank(), &prompt(0.0), 600)
        .unwrap();
    let ids: HashSet<_> = all.iter().map(|h| h.product_id.clone()).collect();
    assert_eq!(ids.len(), 600);
}

#[test]
fn intensity_datasets_sizes_and_overlap() {
    let s = Setup::new(600, 4);
    let (neg, neu, pos) = (prompt(-1.0), prompt(0.0), prompt(1.0));
    let ds = generate_intensity_datasets(&s.index, s.bank(), &neg, &neu, &pos, 100).unwrap();
    for l in gradrec::eval::DatasetLabel::ALL {
        assert_eq!(ds.get(l).len(), 100);
    }
    let same = generate_intensity_datasets(&s.index, s.bank(), &neu, &neu, &neu, 100).unwrap();
    assert_eq!(same.negative, same.neutral);
    assert_eq!(same.overlap.negative_neutral, 100);
    assert_eq!(same.overlap.neutral_positive, 100);
}

#[test]
fn class_sets_come_from_different_levels() {
    let s = Setup::new(600, 5);
    let alpha = s.alpha();
    let sets = build_class_sets(&s.index, s.bank(), &prompt(0.0), &prompt(1.0), 100, 100).unwrap();
    let majority = |ids: &[String]| {
        let mut counts = std::collections::BTreeMap::new();
        for id in ids {
            *counts.entry((alpha[id] * 100.0) as i64).or_insert(0) += 1;
        }
        counts.into_iter().max_by_key(|(_, c)| *c).unwrap().0
    };
    let p = &sets.provenance;
    assert_eq!((p.m, p.n), (100, 100));
    assert_eq!(majority(&p.neutral_ids), 0);
    assert_eq!(majority(&p.exemplar_ids), 100);

    let same = build_class_sets(&s.index, s.bank(), &prompt(0.0), &prompt(0.0), 100, 100).unwrap();
    assert_eq!(same.provenance.overlap, 100);
    assert!(same.provenance.overlap_warning);
}

#[test]
fn direction_recovers_planted_and_swap_is_nearly_antisymmetric() {
    let s = Setup::new(600, 6);
    let opts = SnrOptions::default();
    let d = build_direction(
        &s.index,
        s.bank(),
        &prompt(0.0),
        &prompt(1.0),
        100,
        100,
        &opts,
    )
    .unwrap();
    let planted = s.planted();
    let c = cos_f64(&d.v_c.to_f64(), &planted);
    assert!(c >= 0.9, "cosine {c}");

    // swapping the roles changes which set supplies the noise estimate, so
    // the result is only approximately the negation
    let swapped = build_direction(
        &s.index,
        s.bank(),
        &prompt(1.0),
        &prompt(0.0),
        100,
        100,
        &opts,
    )
    .unwrap();
    let anti = -cos_f64(&swapped.v_c.to_f64(), &d.v_c.to_f64());
    assert!(anti > 0.9, "swap cosine {anti}");
}

#[test]
fn direction_is_the_two_step_composition() {
    let s = Setup::new(600, 7);
    let opts = SnrOptions::default();
    let whole = build_direction(
        &s.index,
        s.bank(),
        &prompt(0.0),
        &prompt(1.0),
        100,
        100,
        &opts,
    )
    .unwrap();
    let sets = build_class_sets(&s.index, s.bank(), &prompt(0.0), &prompt(1.0), 100, 100).unwrap();
    let parts = gradrec::direction::snr_direction(&sets, &opts).unwrap();
    assert_eq!(whole, parts);
}

#[test]
fn generator_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::standard(200, 9);
    for name in ["a", "b"] {
        let synth = generate_synthetic(&spec).unwrap();
        gradrec::synth::write_synthetic(&synth, dir.path().join(name)).unwrap();
    }
    for ext in ["grvec", "grmeta.jsonl", "grprompt.jsonl", "oracle.json"] {
        let a = std::fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext}");
    }
}
