use super::*;

// 1 x 4 strip; patch 0 is the entrance
fn strip() -> SceneConfig {
    SceneConfig::new(40, 10, 10).with_entrances([0])
}

fn s(track_id: u64, patches: &[usize], label: Label) -> TrainingSample {
    TrainingSample {
        track_id,
        route: PatchRoute::new(patches.iter().copied()).unwrap(),
        label,
    }
}

const II: Label = Label::Abnormal(AbnormalityType::II);

#[test]
fn labels_parse_and_print() {
    for text in ["normal", "I", "II", "III"] {
        assert_eq!(text.parse::<Label>().unwrap().to_string(), text);
    }
    assert!(matches!(
        "IV".parse::<Label>(),
        Err(NtbError::UnknownLabel(_))
    ));
}

#[test]
fn init_three_routes_share_an_edge() {
    let samples = vec![
        s(1, &[0, 1], Label::Normal),
        s(2, &[1, 0], Label::Normal),
        s(3, &[0, 1, 2], Label::Normal),
    ];
    let (_, net) = init_weights(&samples, &strip(), &TrainingConfig::default());
    assert!((net.energy(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(net.energy(1, 2), 1.0);
    assert_eq!(net.energy(2, 3), DEFAULT_LARGE_VALUE);
    assert_eq!(net.energy(3, 3), 0.0);
}

#[test]
fn init_counts_revisits_once() {
    let tw = ImpactWeights::initial(&[s(1, &[0, 1, 0], Label::Normal)]);
    assert_eq!(tw.activity_correlation()[&(0, 1)], 1.0);
}

#[test]
fn equivalent_patches_are_free() {
    let mut scene = strip();
    scene.equivalence_sets = vec![[1usize, 3].into_iter().collect()];
    let (_, net) = init_weights(
        &[s(1, &[0, 1], Label::Normal)],
        &scene,
        &TrainingConfig::default(),
    );
    assert_eq!(net.energy(1, 3), 0.0);
    assert_eq!(net.energy(0, 2), DEFAULT_LARGE_VALUE);
}

#[test]
fn tiny_correlation_maps_to_large_value() {
    let cfg = TrainingConfig::default();
    assert_eq!(energy_from_correlation(0.0, &cfg), cfg.large_value);
    assert_eq!(energy_from_correlation(1e-7, &cfg), cfg.large_value);
    assert_eq!(energy_from_correlation(4.0, &cfg), 0.25);
}

#[test]
fn multipliers() {
    let fa = Outcome::FalseAlarm {
        energy: 10.0,
        threshold: 8.0,
    };
    assert!((fa.multiplier() - 1.2).abs() < 1e-15);
    let miss = Outcome::Miss {
        energy: 6.0,
        threshold: 8.0,
    };
    assert_eq!(miss.multiplier(), 0.875);
    assert_eq!(Outcome::Correct.multiplier(), 1.0);
}

fn steps(v: &[(f64, f64)]) -> RouteEnergies {
    RouteEnergies {
        steps: v.iter().map(|&(e, m)| (e, m, true)).collect(),
    }
}

#[test]
fn false_alarm_prefers_criterion_one() {
    let rules = DetectionRules::new(8.0, 2.0);
    // criterion 2 fires first at step 1, but the final energy exceeds T1
    let e = steps(&[(0.0, 0.0), (5.0, 1.0), (10.0, 6.0)]);
    assert_eq!(
        outcome(Label::Normal, &e, &rules),
        Outcome::FalseAlarm {
            energy: 10.0,
            threshold: 8.0
        }
    );
    let e = steps(&[(0.0, 0.0), (5.0, 1.0), (6.0, 6.0)]);
    assert_eq!(
        outcome(Label::Normal, &e, &rules),
        Outcome::FalseAlarm {
            energy: 5.0,
            threshold: 2.0
        }
    );
}

#[test]
fn miss_uses_closest_threshold() {
    let rules = DetectionRules::new(10.0, 2.0);
    // E/T1 = 0.6, best E/T2 = 3/4
    let e = steps(&[(0.0, 0.0), (3.0, 2.0), (6.0, 5.0)]);
    assert_eq!(
        outcome(II, &e, &rules),
        Outcome::Miss {
            energy: 3.0,
            threshold: 4.0
        }
    );
    // E/T1 = 0.9 wins
    let e = steps(&[(0.0, 0.0), (9.0, 5.0)]);
    assert_eq!(
        outcome(II, &e, &rules),
        Outcome::Miss {
            energy: 9.0,
            threshold: 10.0
        }
    );
}

#[test]
fn correct_samples_keep_weights() {
    let samples = vec![s(1, &[0, 1], Label::Normal)];
    let cfg = TrainingConfig::default();
    let (tw, net) = init_weights(&samples, &strip(), &cfg);
    let maps = route_maps_for_samples(&net, &strip(), &samples).unwrap();
    let e = vec![RouteEnergies::compute(&samples[0].route, &net, &maps).unwrap()];
    let rules = DetectionRules::new(5.0, 2.0);
    let (next, next_net, out) = update_weights(&samples, &tw, &e, &rules, &strip(), &cfg);
    assert_eq!(out, vec![Outcome::Correct]);
    assert_eq!(next, tw);
    assert_eq!(next_net, net);
}

#[test]
fn single_normal_converges_immediately() {
    let m = train(
        &[s(1, &[0, 1, 2], Label::Normal)],
        &strip(),
        &TrainingConfig::default(),
    )
    .unwrap();
    assert!(m.converged);
    assert_eq!(m.iterations(), 1);
    assert_eq!(m.log[0].err_fa, 0.0);
}

// Normal traffic walks 0-1-2-3; the abnormal route oscillates on the same
// patches, so only criterion 2 or a tight T1 can catch it.
fn toy_corpus() -> Vec<TrainingSample> {
    let mut v: Vec<TrainingSample> = (0..6).map(|k| s(k, &[0, 1, 2, 3], Label::Normal)).collect();
    v.push(s(6, &[0, 1, 2], Label::Normal));
    v.push(s(10, &[0, 1, 2, 1, 2, 1, 2, 3], II));
    v.push(s(11, &[0, 1, 0, 1, 0, 1, 2], II));
    v
}

fn training_errors(m: &TrainedAbnormalityModel, samples: &[TrainingSample]) -> usize {
    samples
        .iter()
        .filter(|s| {
            let v = crate::detect::detect(&s.route, m).unwrap();
            v.verdict.is_abnormal() != s.label.is_abnormal()
        })
        .count()
}

#[test]
fn separable_toy_reaches_zero_training_error() {
    let samples = toy_corpus();
    let m = train(&samples, &strip(), &TrainingConfig::default()).unwrap();
    assert!(m.converged);
    assert_eq!(training_errors(&m, &samples), 0);
    assert!(m.t1 > 0.0 && m.alpha >= 1.0);
}

#[test]
fn training_is_deterministic() {
    let samples = toy_corpus();
    let cfg = TrainingConfig::default();
    assert_eq!(
        train(&samples, &strip(), &cfg).unwrap(),
        train(&samples, &strip(), &cfg).unwrap()
    );
}

#[test]
fn weights_stay_in_range_every_iteration() {
    let samples = toy_corpus();
    let scene = strip();
    let cfg = TrainingConfig {
        max_iters: 1,
        ..TrainingConfig::default()
    };
    let (mut tw, mut net) = init_weights(&samples, &scene, &cfg);
    for _ in 0..20 {
        let maps = route_maps_for_samples(&net, &scene, &samples).unwrap();
        let e = evaluate_all(&samples, &net, &maps).unwrap();
        let c = update_thresholds(&samples, &e, None, &cfg);
        let rules = DetectionRules::new(c.t1, c.alpha);
        let (next, next_net, _) = update_weights(&samples, &tw, &e, &rules, &scene, &cfg);
        assert!(next.min_weight().unwrap() >= cfg.epsilon);
        for i in 0..net.node_count() {
            for j in 0..net.node_count() {
                let v = next_net.energy(i, j);
                assert!(if i == j {
                    v == 0.0
                } else {
                    v > 0.0 && v <= cfg.large_value
                });
            }
        }
        tw = next;
        net = next_net;
    }
}

#[test]
fn updates_move_energy_in_the_right_direction() {
    let samples = vec![s(1, &[0, 1, 2], Label::Normal), s(2, &[0, 1, 2, 3], II)];
    let scene = strip();
    let cfg = TrainingConfig::default();
    let (tw, net) = init_weights(&samples, &scene, &cfg);
    let maps = route_maps_for_samples(&net, &scene, &samples).unwrap();
    let e = evaluate_all(&samples, &net, &maps).unwrap();
    // flag everything: the normal is a false alarm
    let (_, cheaper, out) = update_weights(
        &samples,
        &tw,
        &e,
        &DetectionRules::new(0.5, 1.0),
        &scene,
        &cfg,
    );
    assert!(matches!(out[0], Outcome::FalseAlarm { .. }));
    for (i, j) in samples[0].route.transitions() {
        assert!(cheaper.energy(i, j) <= net.energy(i, j));
    }
    // flag nothing: the abnormal one is a miss
    let (_, dearer, out) = update_weights(
        &samples,
        &tw,
        &e,
        &DetectionRules::new(100.0, 10.0),
        &scene,
        &cfg,
    );
    assert!(matches!(out[1], Outcome::Miss { .. }));
    for (i, j) in samples[1].route.transitions() {
        assert!(dearer.energy(i, j) >= net.energy(i, j));
    }
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(matches!(
        train(&[], &strip(), &TrainingConfig::default()),
        Err(NtbError::EmptyInput(_))
    ));
}

#[test]
fn out_of_grid_route_is_rejected() {
    let r = train(
        &[s(1, &[0, 9], Label::Normal)],
        &strip(),
        &TrainingConfig::default(),
    );
    assert!(matches!(r, Err(NtbError::IndexOutOfRange { index: 9, .. })));
}

struct Indifferent;

impl ProbabilityClassifier for Indifferent {
    fn fit(&mut self, _: &[[f64; 2]], _: &[bool]) -> Result<()> {
        Ok(())
    }

    // always "normal" with zero confidence
    fn predict(&self, _: &[f64; 2]) -> (bool, f64) {
        (false, 0.0)
    }
}

#[test]
fn zero_confidence_leaves_weights_alone() {
    let samples = toy_corpus();
    let m = train_with_classifier(
        &samples,
        &strip(),
        &mut Indifferent,
        &TrainingConfig::default(),
    )
    .unwrap();
    assert!(m.converged);
    assert_eq!(m.iterations(), 1);
    assert_eq!(m.weights, ImpactWeights::initial(&samples));
}

#[test]
fn classifier_loop_is_no_worse_than_rules_on_toy() {
    let samples = toy_corpus();
    let cfg = TrainingConfig::default();
    let rule_model = train(&samples, &strip(), &cfg).unwrap();
    let mut clf = LogisticProbabilityClassifier::default();
    let clf_model = train_with_classifier(&samples, &strip(), &mut clf, &cfg).unwrap();
    let maps = route_maps_for_samples(&clf_model.network, &strip(), &samples).unwrap();
    let wrong = samples
        .iter()
        .filter(|s| {
            let e = RouteEnergies::compute(&s.route, &clf_model.network, &maps).unwrap();
            clf.predict(&energy_features(&e, cfg.large_value)).0 != s.label.is_abnormal()
        })
        .count();
    let n = samples.len() as f64;
    assert!(wrong as f64 / n <= training_errors(&rule_model, &samples) as f64 / n + 0.05);
}

#[test]
fn energy_feature_ratio_rules() {
    let f = |e, m| energy_features(&steps(&[(e, m)]), 1e6);
    assert_eq!(f(0.0, 0.0), [0.0, 1.0]);
    assert_eq!(f(2.0, 0.0), [2.0, 1e6]);
    assert_eq!(f(3.0, 2.0), [3.0, 1.5]);
}

#[test]
fn config_json_round_trip() {
    let cfg: TrainingConfig = serde_json::from_str(r#"{"max_iters": 7}"#).unwrap();
    assert_eq!(cfg.max_iters, 7);
    assert_eq!(cfg.tol, 1e-4);
    assert!(serde_json::from_str::<TrainingConfig>(r#"{"bogus": 1}"#).is_err());
}
