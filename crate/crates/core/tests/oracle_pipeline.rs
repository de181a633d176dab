use std::collections::{BTreeMap, HashMap};

use segpipe_core::cv_ensemble::{evaluate_fold, hard_vote, make_folds, prob_average};
use segpipe_core::io::{load_image, load_mask};
use segpipe_core::scorer::{ConstantScorer, OracleScorer};
use segpipe_core::synthetic::{generate_dataset, DomainSpec, RandomShapes, SyntheticSpec};
use segpipe_core::tiling::{run_inference, run_inference_parallel, threshold, InferenceParams, DEFAULT_THRESHOLD};
use segpipe_core::{BinaryMask, ProbMap};

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        domains: (0..2)
            .map(|i| DomainSpec {
                name: format!("site{i}"),
                texture_seed: i,
                count: 2,
            })
            .collect(),
        height: 700,
        width: 900,
        random_shapes: Some(RandomShapes {
            per_image: [1, 2],
            radius: [40.0, 150.0],
            ellipse_prob: 0.5,
        }),
        ..SyntheticSpec::default()
    }
}

#[test]
fn oracle_inference_recovers_truth_and_ensembles_agree() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&spec(), dir.path()).unwrap();
    let plan = make_folds(&manifest).unwrap();
    assert_eq!(plan.folds.len(), 2);

    let truths: BTreeMap<String, BinaryMask> = manifest
        .entries
        .iter()
        .map(|e| (e.image_id.clone(), load_mask(manifest.mask_path(e)).unwrap()))
        .collect();
    let lookup: HashMap<String, BinaryMask> = truths.clone().into_iter().collect();
    let params = InferenceParams::default();

    for fold in &plan.folds {
        let mut members: Vec<BTreeMap<String, ProbMap<f32>>> = vec![BTreeMap::new(); 3];
        for id in &fold.valid_ids {
            let image = load_image(manifest.image_path(manifest.entry(id).unwrap())).unwrap();
            for (seed, member) in members.iter_mut().enumerate() {
                let mut scorers: Vec<_> = (0..3)
                    .map(|_| OracleScorer::<f32>::new(lookup.clone(), 0.3, seed as u64).unwrap())
                    .collect();
                let map = run_inference_parallel(&image, id, &mut scorers, &params).unwrap();
                member.insert(id.clone(), map);
            }
        }
        let per_member: Vec<BTreeMap<String, BinaryMask>> = members
            .iter()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), threshold(v, DEFAULT_THRESHOLD as f32))).collect())
            .collect();
        let fold_truth: BTreeMap<_, _> = fold.valid_ids.iter().map(|id| (id.clone(), truths[id].clone())).collect();

        for m in &per_member {
            let report = evaluate_fold::<f64>(m, &fold_truth).unwrap();
            assert_eq!(report.challenge_score, 1.0);
        }
        for id in &fold.valid_ids {
            let voted = hard_vote(&[per_member[0][id].clone(), per_member[1][id].clone(), per_member[2][id].clone()]).unwrap();
            assert_eq!(&voted, &truths[id]);
            let maps: Vec<_> = members.iter().map(|m| m[id].clone()).collect();
            assert_eq!(&threshold(&prob_average(&maps).unwrap(), 0.5), &truths[id]);
        }
    }
}

#[test]
fn constant_scorer_on_generated_image() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&spec(), dir.path()).unwrap();
    let image = load_image(manifest.image_path(&manifest.entries[0])).unwrap();
    let mut s = ConstantScorer::new(0.3f64).unwrap();
    let map = run_inference(&image, "x", &mut s, &InferenceParams::default()).unwrap();
    assert!(map.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    assert_eq!(threshold(&map, 0.5).count_ones(), 0);
}
