//! Property tests against brute-force references.

use lesion_core::ensemble::{aggregate_average, aggregate_majority, EnsembleInput, EnsembleMember};
use lesion_core::fusion::{
    fit_priors, fuse, AgeBinning, ClassMeanConfidence, ConfidenceKey, MetadataRecord, Sex,
};
use lesion_core::metrics::{balanced_accuracy, binary_auc, confusion_matrix, macro_auc};
use lesion_core::openset::{detect_unknown, fit_entropy_profile, EntropyProfile, Step5Mode};
use lesion_core::taxonomy::{LabeledRecord, ProbabilityRecord, ProbabilityVector};
use lesion_core::{class_weights, cosine_similarity, shannon_entropy};
use proptest::prelude::*;

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter_map("non-zero mass", |raw| {
        let s: f64 = raw.iter().sum();
        (s > 1e-3).then(|| raw.iter().map(|v| v / s).collect())
    })
}

fn pv(values: Vec<f64>) -> ProbabilityVector<f64> {
    let n = values.len();
    ProbabilityVector::new(values, n).unwrap()
}

fn labeled_set(n_classes: usize, max_len: usize) -> impl Strategy<Value = Vec<LabeledRecord<f64>>> {
    prop::collection::vec((distribution(n_classes), 0..n_classes), 1..=max_len).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (p, l))| LabeledRecord::new(format!("s{i}"), pv(p), l).unwrap())
            .collect()
    })
}

/// Naive reference: group by (predicted, hit?) and aggregate each group.
fn brute_force_group(
    records: &[LabeledRecord<f64>],
    class: usize,
    hit: bool,
) -> Option<(usize, f64, f64, Vec<f64>)> {
    let members: Vec<&LabeledRecord<f64>> = records
        .iter()
        .filter(|r| {
            let p = r.probs.as_slice();
            let mut arg = 0;
            for i in 0..p.len() {
                if p[i] > p[arg] {
                    arg = i;
                }
            }
            arg == class && (r.true_label == class) == hit
        })
        .collect();
    if members.is_empty() {
        return None;
    }
    let entropies: Vec<f64> = members
        .iter()
        .map(|r| {
            -r.probs
                .as_slice()
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.log2())
                .sum::<f64>()
        })
        .collect();
    let n = members.len() as f64;
    let mean = entropies.iter().sum::<f64>() / n;
    let max = entropies.iter().cloned().fold(0.0, f64::max);
    let k = members[0].probs.len();
    let probs = (0..k)
        .map(|c| members.iter().map(|r| r.probs.as_slice()[c]).sum::<f64>() / n)
        .collect();
    Some((members.len(), mean, max, probs))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn profile_matches_group_by_oracle(records in labeled_set(4, 50)) {
        let profile = fit_entropy_profile(&records).unwrap();
        for c in 0..4 {
            let class = profile.class(c).unwrap();
            for (group, hit) in [(&class.hit, true), (&class.miss, false)] {
                match (group, brute_force_group(&records, c, hit)) {
                    (None, None) => {}
                    (Some(g), Some((count, mean, max, probs))) => {
                        prop_assert_eq!(g.count, count);
                        prop_assert!((g.mean_entropy - mean).abs() <= 1e-12);
                        prop_assert!((g.max_entropy - max).abs() <= 1e-12);
                        prop_assert!(g.mean_entropy <= g.max_entropy + 1e-15);
                        prop_assert!(g.max_entropy <= 2.0 + 1e-12);
                        let s: f64 = g.mean_probs.iter().sum();
                        prop_assert!((s - 1.0).abs() <= 1e-6);
                        for (a, b) in g.mean_probs.iter().zip(&probs) {
                            prop_assert!((a - b).abs() <= 1e-12);
                        }
                    }
                    (got, want) => prop_assert!(false, "group mismatch {:?} vs {:?}", got, want),
                }
            }
        }
    }

    #[test]
    fn detection_is_monotone_in_thresholds(
        records in labeled_set(3, 40),
        probe in distribution(3),
        factor in 0.0f64..1.0,
    ) {
        let profile = fit_entropy_profile(&records).unwrap();
        let lowered = EntropyProfile::from_classes(
            profile
                .classes()
                .iter()
                .cloned()
                .map(|mut class| {
                    for group in [&mut class.hit, &mut class.miss].into_iter().flatten() {
                        group.mean_entropy *= factor;
                        group.max_entropy *= factor;
                    }
                    class
                })
                .collect(),
        );
        let record = ProbabilityRecord::new("probe", pv(probe)).unwrap();
        let before = detect_unknown(&record, &profile, Step5Mode::Conjunctive).unwrap();
        let after = detect_unknown(&record, &lowered, Step5Mode::Conjunctive).unwrap();
        prop_assert!(!before.is_unknown || after.is_unknown);
        prop_assert!(after.stage_reached >= before.stage_reached);
        prop_assert_eq!(&before, &detect_unknown(&record, &profile, Step5Mode::Conjunctive).unwrap());
    }

    #[test]
    fn unknown_only_when_flagged(records in labeled_set(3, 30), probe in distribution(3)) {
        let profile = fit_entropy_profile(&records).unwrap();
        let record = ProbabilityRecord::new("probe", pv(probe)).unwrap();
        for mode in [Step5Mode::Conjunctive, Step5Mode::Standalone] {
            let d = detect_unknown(&record, &profile, mode).unwrap();
            prop_assert_eq!(d.is_unknown, d.stage_reached == lesion_core::DecisionStage::FlaggedUnknown);
        }
    }

    #[test]
    fn entropy_zero_iff_one_hot(p in distribution(5), hot in 0usize..5) {
        let is_one_hot = p.iter().filter(|&&v| v > 0.0).count() == 1;
        prop_assert_eq!(shannon_entropy(&p) == 0.0, is_one_hot);
        let mut one_hot = vec![0.0; 5];
        one_hot[hot] = 1.0;
        prop_assert_eq!(shannon_entropy(&one_hot), 0.0);
    }

    #[test]
    fn cosine_scale_invariant(x in distribution(8), y in distribution(8), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * b).collect();
        let base = cosine_similarity(&x, &y).unwrap();
        prop_assert!((cosine_similarity(&xs, &ys).unwrap() - base).abs() <= 1e-12);
    }

    #[test]
    fn averaging_properties(
        rows in prop::collection::vec(prop::collection::vec(distribution(4), 2..5), 1..6),
        rotation in 0usize..5,
    ) {
        // rows[s][m] is member m's vector for sample s; use the shortest member count.
        let n_members = rows.iter().map(Vec::len).min().unwrap();
        let members: Vec<EnsembleMember<f64>> = (0..n_members)
            .map(|m| {
                EnsembleMember::new(
                    format!("m{m}"),
                    rows.iter()
                        .enumerate()
                        .map(|(s, r)| ProbabilityRecord::new(format!("s{s}"), pv(r[m].clone())).unwrap())
                        .collect(),
                )
            })
            .collect();
        let mut permuted = members.clone();
        permuted.rotate_left(rotation % n_members);
        permuted.reverse();

        let avg = aggregate_average(&EnsembleInput::new(members.clone()).unwrap()).unwrap();
        let avg_perm = aggregate_average(&EnsembleInput::new(permuted).unwrap()).unwrap();
        prop_assert_eq!(&avg, &avg_perm);

        for (s, out) in avg.iter().enumerate() {
            let p = out.probs.as_slice();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for c in 0..4 {
                let lo = rows[s][..n_members].iter().map(|v| v[c]).fold(f64::MAX, f64::min);
                let hi = rows[s][..n_members].iter().map(|v| v[c]).fold(f64::MIN, f64::max);
                prop_assert!(p[c] >= lo - 1e-12 && p[c] <= hi + 1e-12);
            }
        }

        let identical: Vec<EnsembleMember<f64>> = (0..3)
            .map(|m| EnsembleMember::new(format!("m{m}"), members[0].records.clone()))
            .collect();
        let votes = aggregate_majority(&EnsembleInput::new(identical).unwrap());
        let mut sorted = members[0].records.clone();
        sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        for (vote, rec) in votes.iter().zip(&sorted) {
            prop_assert_eq!(vote.label, rec.predicted());
            prop_assert_eq!(vote.votes, 3);
        }
    }

    #[test]
    fn balanced_accuracy_invariant_to_class_duplication(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
        class in 0usize..4,
        k in 2usize..5,
    ) {
        let base = confusion_matrix(4, pairs.iter().copied()).unwrap();
        let mut expanded = pairs.clone();
        for &(t, p) in &pairs {
            if t == class {
                for _ in 1..k {
                    expanded.push((t, p));
                }
            }
        }
        let dup = confusion_matrix(4, expanded).unwrap();
        let a: f64 = balanced_accuracy(&base).unwrap();
        let b: f64 = balanced_accuracy(&dup).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a <= 1.0);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(
        scored in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
    ) {
        let scores: Vec<f64> = scored.iter().map(|s| s.0).collect();
        let positive: Vec<bool> = scored.iter().map(|s| s.1).collect();
        let transformed: Vec<f64> = scores.iter().map(|&x| (3.0 * x).exp() + x * x * x).collect();
        let a = binary_auc(&scores, &positive);
        let b = binary_auc(&transformed, &positive);
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn macro_auc_invariant_under_halving(records in labeled_set(3, 40)) {
        prop_assume!(records.iter().any(|r| r.true_label != records[0].true_label));
        // Halve every score and park the remaining mass in a fourth class that
        // is never a true label (and therefore skipped).
        let transformed: Vec<LabeledRecord<f64>> = records
            .iter()
            .map(|r| {
                let mut q: Vec<f64> = r.probs.as_slice().iter().map(|&v| v * 0.5).collect();
                q.push(1.0 - q.iter().sum::<f64>());
                LabeledRecord::new(r.sample_id.clone(), pv(q), r.true_label).unwrap()
            })
            .collect();
        let a = macro_auc(&records).unwrap();
        let b = macro_auc(&transformed).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn weights_reverse_count_order(counts in prop::collection::vec(1u64..100_000, 1..10)) {
        let w: Vec<f64> = class_weights(&counts).unwrap();
        let total: u64 = counts.iter().sum();
        let weighted: f64 = counts.iter().zip(&w).map(|(&n, &wi)| n as f64 * wi).sum();
        prop_assert!((weighted - total as f64).abs() <= 1e-6 * total as f64);
        for i in 0..counts.len() {
            for j in 0..counts.len() {
                if counts[i] < counts[j] {
                    prop_assert!(w[i] > w[j]);
                }
            }
        }
    }

    #[test]
    fn fusion_stays_within_top_two(
        rows in prop::collection::vec(
            (0.0f64..90.0, any::<bool>(), 0usize..3, 0usize..4),
            1..40,
        ),
        probe in distribution(4),
        age in prop::option::of(0.0f64..90.0),
        sex in prop::option::of(any::<bool>()),
        region in prop::option::of(0usize..4),
        gate in 0.0f64..1.0,
    ) {
        let regions = ["torso", "head/neck", "lower extremity", "palms/soles"];
        let sex_of = |b: bool| if b { Sex::Female } else { Sex::Male };
        let training: Vec<(MetadataRecord<f64>, usize)> = rows
            .iter()
            .enumerate()
            .map(|(i, &(age, s, r, label))| {
                (
                    MetadataRecord {
                        sample_id: format!("t{i}"),
                        age: Some(age),
                        sex: Some(sex_of(s)),
                        region: Some(regions[r].to_string()),
                    },
                    label,
                )
            })
            .collect();
        let priors = fit_priors(&training, 4, AgeBinning::default()).unwrap();
        let conf = ClassMeanConfidence {
            key: ConfidenceKey::Predicted,
            mean_top_prob: vec![Some(gate); 4],
            support: vec![1; 4],
        };
        let record = ProbabilityRecord::new("x", pv(probe)).unwrap();
        let meta = MetadataRecord {
            sample_id: "x".into(),
            age,
            sex: sex.map(sex_of),
            region: region.map(|r| regions[r].to_string()),
        };
        let top = record.probs.top_k(2).unwrap();
        let r = fuse(&record, &meta, &priors, &conf).unwrap();
        prop_assert!(r.final_label == top[0].0 || r.final_label == top[1].0);
        if !r.applied {
            prop_assert_eq!(r.final_label, record.predicted());
        }
        if top[0].1 >= gate {
            prop_assert!(!r.applied);
        }
        prop_assert_eq!(&r, &fuse(&record, &meta, &priors, &conf).unwrap());

        for table in [&priors.female_age, &priors.male_age, &priors.female_region, &priors.male_region] {
            for (col, &n) in table.columns.iter().zip(&table.support) {
                let s: f64 = col.iter().sum();
                if n > 0 {
                    prop_assert!((s - 1.0).abs() <= 1e-9);
                } else {
                    prop_assert_eq!(s, 0.0);
                }
            }
        }
    }

    #[test]
    fn equal_boosts_never_flip(p in distribution(4), boost in 0.0f64..1.0) {
        // Every condition sees the same class mix, so both candidates get the same prior.
        let training: Vec<(MetadataRecord<f64>, usize)> = (0..4)
            .map(|label| {
                (
                    MetadataRecord {
                        sample_id: format!("t{label}"),
                        age: Some(45.0),
                        sex: Some(Sex::Male),
                        region: Some("torso".into()),
                    },
                    label,
                )
            })
            .collect();
        let priors = fit_priors(&training, 4, AgeBinning::default()).unwrap();
        let conf = ClassMeanConfidence {
            key: ConfidenceKey::Predicted,
            mean_top_prob: vec![Some(1.0 + boost); 4],
            support: vec![1; 4],
        };
        let record = ProbabilityRecord::new("x", pv(p)).unwrap();
        let meta = MetadataRecord {
            sample_id: "x".into(),
            age: Some(47.0),
            sex: Some(Sex::Male),
            region: Some("torso".into()),
        };
        let r = fuse(&record, &meta, &priors, &conf).unwrap();
        prop_assert!(r.applied);
        prop_assert_eq!(r.final_label, record.predicted());
    }
}
