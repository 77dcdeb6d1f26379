use super::*;
use crate::heuristics::parse;
use crate::llm::{ChatReply, LlmError, MockLlm};
use crate::pool::{BuildMetadata, PoolEntry};
use crate::problems::{enumerate_obpp_subclasses, feature_vector, ProblemKind, FEATURE_DIM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const PROGRAMS: [&str; 6] = ["item", "fill", "-index", "remaining", "item * fill", "-(remaining - item)"];

fn pool_from(keys: &[SubclassKey]) -> HeuristicPool {
    let mut pool = HeuristicPool::new(ProblemKind::Obpp, BuildMetadata::default());
    for (i, key) in keys.iter().enumerate() {
        let program = parse(PROGRAMS[i % PROGRAMS.len()], ProblemKind::Obpp).unwrap();
        pool.insert(PoolEntry { key: *key, program, fitness_pre_ns: -1.0, fitness_post_ns: -1.0, ns_source: None, queries_used: 0 })
            .unwrap();
    }
    pool
}

fn sample_keys(n: usize, stride: usize) -> Vec<SubclassKey> {
    enumerate_obpp_subclasses().into_iter().step_by(stride).take(n).map(Into::into).collect()
}

struct Garbage;
impl LlmClient for Garbage {
    fn complete(&self, _: &[ChatMessage]) -> Result<ChatReply, LlmError> {
        Ok(ChatReply { text: "no idea".into(), prompt_tokens: 0, completion_tokens: 0 })
    }
}

struct Down;
impl LlmClient for Down {
    fn complete(&self, _: &[ChatMessage]) -> Result<ChatReply, LlmError> {
        Err(LlmError::Transport { attempts: 1, message: "refused".into() })
    }
}

#[test]
fn preselect_identity_and_order() {
    let keys = sample_keys(40, 97);
    let pool = pool_from(&keys);
    let target = keys[7];
    let set = preselect_key(&target, &pool, 3).unwrap();
    assert_eq!(set.entries[0].key, target);
    assert_eq!(set.entries[0].distance, 0.0);
    assert_eq!(set.len(), 3);

    let all = preselect_key(&target, &pool, 1000).unwrap();
    assert_eq!(all.len(), pool.len());
    assert!(all.entries.windows(2).all(|w| w[0].distance <= w[1].distance));
    assert_eq!(preselect_key(&target, &pool, 0), Err(SelectionError::ZeroK));

    let mut reversed = keys.clone();
    reversed.reverse();
    let other = pool_from(&reversed);
    // same keys, different insertion order and programs: same keys and distances
    let a: Vec<_> = preselect_key(&target, &pool, 10).unwrap().entries.iter().map(|c| (c.key, c.distance)).collect();
    let b: Vec<_> = preselect_key(&target, &other, 10).unwrap().entries.iter().map(|c| (c.key, c.distance)).collect();
    assert_eq!(a, b);
}

#[test]
fn closest_and_random() {
    let keys = sample_keys(10, 311);
    let pool = pool_from(&keys);
    let set = preselect_key(&keys[2], &pool, 4).unwrap();
    let closest = select_closest(&set).unwrap();
    assert_eq!(closest.chosen_key, keys[2]);
    assert_eq!(closest.queries_used, 0);
    assert_eq!(select_closest(&preselect_key(&keys[2], &pool, 9).unwrap()).unwrap().chosen_key, keys[2]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ids = set.distinct_ids().len();
    let mut counts = vec![0f64; ids];
    let draws = 100_000;
    for _ in 0..draws {
        let o = select_random(&set, &mut rng).unwrap();
        assert!(set.contains_id(&o.heuristic_id));
        counts[set.distinct_ids().iter().position(|i| *i == o.heuristic_id).unwrap()] += 1.0;
    }
    let expected = draws as f64 / ids as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    assert!(1.0 - ChiSquared::new((ids - 1) as f64).unwrap().cdf(chi2) > 0.01);

    let one = CandidateSet { entries: set.entries[..1].to_vec() };
    assert_eq!(select_random(&one, &mut rng).unwrap().heuristic_id, set.entries[0].heuristic_id);
    let empty = CandidateSet { entries: vec![] };
    assert_eq!(select_closest(&empty), Err(SelectionError::NoCandidates));
}

#[test]
fn llm_selection_paths() {
    let keys = sample_keys(10, 311);
    let pool = pool_from(&keys);
    let set = preselect_key(&keys[4], &pool, 3).unwrap();
    let mock = MockLlm::new(0, 0.0).unwrap();
    let o = select_llm(&set, &pool, "target", &mock, 3).unwrap();
    assert_eq!((o.queries_used, o.fallback, o.chosen_key), (1, false, keys[4]));

    let g = select_llm(&set, &pool, "target", &Garbage, 2).unwrap();
    assert_eq!((g.queries_used, g.fallback), (3, true));
    assert_eq!(g.heuristic_id, select_closest(&set).unwrap().heuristic_id);

    let d = select_llm(&set, &pool, "target", &Down, 2).unwrap();
    assert!(d.fallback);
    assert_eq!(d.queries_used, 1);
}

#[test]
fn zero_model_is_uniform_and_shift_invariant() {
    let ids: Vec<String> = (0..4).map(|i| format!("h{i}")).collect();
    let m = ClassifierModel::zeros(ids.clone(), 8);
    let p = classifier_forward(&m, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    assert!(classifier_forward(&m, &[1.0]).is_err());

    let mut a = ClassifierModel::init(ids, 16, 3);
    let x = [0.3, -1.0, 0.5, 2.0, -0.7];
    let before = classifier_forward(&a, &x).unwrap();
    for b in a.b2.iter_mut() {
        *b += 123.0;
    }
    let after = classifier_forward(&a, &x).unwrap();
    for (u, v) in before.iter().zip(&after) {
        assert!((u - v).abs() < 1e-12);
    }
    let huge = classifier_forward(&a, &[1e6, -1e6, 1e6, 1e6, -1e6]).unwrap();
    assert!(huge.iter().all(|v| v.is_finite()));
    assert!((huge.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn model_file_round_trip() {
    let m = ClassifierModel::init(vec!["a".into(), "b".into()], 8, 1);
    let back = ClassifierModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    let bad = m.to_json().replace("\"schema_version\":1", "\"schema_version\":7");
    assert!(matches!(ClassifierModel::from_json(&bad), Err(ClassifierError::Version { found: 7, .. })));
    assert!(ClassifierModel::from_json("[]").is_err());
}

#[test]
fn training_rejects_bad_input() {
    let ids = vec!["a".to_string()];
    assert!(matches!(train_classifier(&[], &ids, &TrainConfig::default()), Err(ClassifierError::EmptyDataset)));
    let data = vec![(FeatureVector([0.0; FEATURE_DIM]), "zzz".to_string())];
    assert!(matches!(train_classifier(&data, &ids, &TrainConfig::default()), Err(ClassifierError::UnknownLabel(_))));
}

#[test]
fn classifier_masked_to_candidates() {
    let keys = sample_keys(12, 211);
    let pool = pool_from(&keys);
    let ids = pool.heuristic_ids();
    let model = ClassifierModel::init(ids, 16, 9);
    let stats = pool.stats().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let key = keys[rng.gen_range(0..keys.len())];
        let k = rng.gen_range(1..=5);
        let set = preselect_key(&key, &pool, k).unwrap();
        let x = standardize(&feature_vector(&key), stats);
        let o = select_classifier(&model, &set, &x).unwrap();
        assert!(set.contains_id(&o.heuristic_id));
        assert!(!o.fallback);
    }

    let set = preselect_key(&keys[0], &pool, 1).unwrap();
    let x = FeatureVector([0.0; FEATURE_DIM]);
    assert_eq!(select_classifier(&model, &set, &x).unwrap().heuristic_id, set.entries[0].heuristic_id);

    let stranger = ClassifierModel::init(vec!["unknown".into()], 4, 0);
    let o = select_classifier(&stranger, &set, &x).unwrap();
    assert!(o.fallback);
}

fn blobs(per_class: usize, seed: u64) -> Vec<(FeatureVector, String)> {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let centres = [[3.0, 0.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0, 0.0], [0.0, 0.0, 3.0, 0.0, 0.0]];
    let mut out = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let mut x = *centre;
            for v in x.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            out.push((FeatureVector(x), format!("c{c}")));
        }
    }
    out
}

#[test]
fn gradient_matches_finite_differences() {
    let ids: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
    let model = ClassifierModel::init(ids, 6, 11);
    let batch: Vec<_> = blobs(2, 5).iter().take(5).enumerate().map(|(i, (x, _))| (x.0, i % 3)).collect();
    let (_, grad) = loss_and_gradient(&model, &batch);
    let params = model.params();
    let eps = 1e-5;
    for j in 0..params.len() {
        let mut probe = model.clone();
        let mut p = params.clone();
        p[j] += eps;
        probe.set_params(&p);
        let up = loss_and_gradient(&probe, &batch).0;
        p[j] -= 2.0 * eps;
        probe.set_params(&p);
        let down = loss_and_gradient(&probe, &batch).0;
        let numeric = (up - down) / (2.0 * eps);
        let scale = numeric.abs().max(grad[j].abs()).max(1e-7);
        assert!((numeric - grad[j]).abs() / scale < 1e-4 || (numeric - grad[j]).abs() < 1e-9, "param {j}: {numeric} vs {}", grad[j]);
    }
}

#[test]
fn separable_classes_are_learned() {
    let data = blobs(40, 2);
    let ids: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
    let config = TrainConfig { epochs: 200, ..Default::default() };
    let out = train_classifier(&data, &ids, &config).unwrap();
    assert_eq!(out.losses.len(), 200);
    assert!(out.losses[..10].windows(2).all(|w| w[1] < w[0]), "{:?}", &out.losses[..10]);
    let correct = data
        .iter()
        .filter(|(x, label)| {
            let p = classifier_forward(&out.model, &x.0).unwrap();
            let arg = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            out.model.ids[arg] == *label
        })
        .count();
    assert!(correct as f64 / data.len() as f64 >= 0.99);

    let again = train_classifier(&data, &ids, &config).unwrap();
    assert_eq!(again.model, out.model);
}

#[test]
fn dataset_labels_follow_pool() {
    let keys = sample_keys(3, 500);
    let pool = pool_from(&keys);
    let instances: Vec<_> = keys.iter().map(|k| crate::problems::generate_instance(k, 1).unwrap()).collect();
    let data = build_dataset(&pool, &instances).unwrap();
    for ((_, label), key) in data.iter().zip(&keys) {
        assert_eq!(*label, pool.lookup(key).unwrap().program.id);
    }
    let stray = crate::problems::generate_instance(&sample_keys(1, 1)[0], 0).unwrap();
    let lone = pool_from(&keys[1..2]);
    assert!(matches!(build_dataset(&lone, &[stray]), Err(ClassifierError::NotInPool(_))));
}
