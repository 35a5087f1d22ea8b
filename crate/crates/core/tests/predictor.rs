use clickbb::miner::ActionRepresentation;
use clickbb::predictor::{
    margin_pair_loss, pair_batch_loss_and_grads, predict, sample_pairs, train_predictor, PredictorHyper,
    PredictorParams, TrainPair,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rep(user: &str, week: u32, label: bool, scores: Vec<f64>) -> ActionRepresentation {
    ActionRepresentation {
        user_id: user.into(),
        week_index: week,
        dropout_label: label,
        scores,
    }
}

fn values_mut(p: &mut PredictorParams) -> Vec<&mut f64> {
    p.layers
        .iter_mut()
        .flat_map(|l| l.weights.data.iter_mut().chain(l.bias.iter_mut()))
        .collect()
}

fn values(p: &PredictorParams) -> Vec<f64> {
    p.layers
        .iter()
        .flat_map(|l| l.weights.data.iter().chain(l.bias.iter()).copied())
        .collect()
}

#[test]
fn pair_loss_gradient_matches_finite_differences() {
    const STEP: f64 = 1e-5;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 6;
        let weeks: Vec<ActionRepresentation> = (0..4)
            .map(|w| rep("u", w, w == 3, (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()))
            .collect();
        let pairs: Vec<TrainPair> = sample_pairs(&weeks, seed);
        let params = PredictorParams::init_with_hidden(dim, &[7, 5, 3], seed + 10);
        // a margin above 1 keeps every pair inside the hinge's linear part
        let margin = 1.5;
        let (_, grads) = pair_batch_loss_and_grads(&params, &pairs, margin).unwrap();
        let analytic = values(&grads);
        let count = analytic.len();
        let mut numeric = Vec::with_capacity(count);
        for k in 0..count {
            let mut plus = params.clone();
            *values_mut(&mut plus)[k] += STEP;
            let mut minus = params.clone();
            *values_mut(&mut minus)[k] -= STEP;
            let lp = pair_batch_loss_and_grads(&plus, &pairs, margin).unwrap().0;
            let lm = pair_batch_loss_and_grads(&minus, &pairs, margin).unwrap().0;
            numeric.push((lp - lm) / (2.0 * STEP));
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(scale > 0.0);
        assert!(diff / scale < 1e-4, "seed {seed}: relative error {}", diff / scale);
    }
}

/// Users whose positive week scores high on the first coordinate.
fn separable(users: usize, seed: u64) -> Vec<ActionRepresentation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for u in 0..users {
        for w in 1..=5u32 {
            let positive = w == 4;
            let mut scores: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..0.5)).collect();
            if positive {
                scores[0] += 0.5;
            }
            out.push(rep(&format!("u{u:03}"), w, positive, scores));
        }
    }
    out
}

#[test]
fn training_is_deterministic_and_loss_falls() {
    let data = separable(40, 1);
    let hyper = PredictorHyper {
        max_epochs: 20,
        patience: 100,
        seed: 5,
        ..PredictorHyper::default()
    };
    let (p1, log1) = train_predictor(&data, &hyper).unwrap();
    let (p2, log2) = train_predictor(&data, &hyper).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(log1, log2);
    assert_eq!(log1.pairs, 40 * 4);
    assert_eq!(log1.epoch_losses.len(), 20);
    assert!(log1.epoch_losses[19] < log1.epoch_losses[0], "{:?}", log1.epoch_losses);

    let pos = predict(&p1, &data[3].scores).unwrap();
    let neg = predict(&p1, &data[0].scores).unwrap();
    assert!(pos > neg);
}

#[test]
fn patience_stops_training() {
    let data = separable(10, 2);
    let hyper = PredictorHyper {
        max_epochs: 500,
        patience: 2,
        min_improvement: 10.0,
        ..PredictorHyper::default()
    };
    let (_, log) = train_predictor(&data, &hyper).unwrap();
    assert!(log.converged);
    // the first epoch always improves on the initial infinite best
    assert_eq!(log.epoch_losses.len(), 3);
}

#[test]
fn predictions_lie_strictly_inside_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let params = PredictorParams::init(12, seed);
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let p = predict(&params, &x).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, predict(&params, &x).unwrap());
    }
}

proptest! {
    #[test]
    fn margin_loss_depends_only_on_gap(pp in 0.0f64..1.0, pn in 0.0f64..1.0, shift in -0.5f64..0.5, margin in 0.01f64..1.0) {
        let l = margin_pair_loss(pp, pn, margin);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, pp - pn >= margin);
        let shifted = margin_pair_loss(pp + shift, pn + shift, margin);
        prop_assert!((l - shifted).abs() < 1e-12);
    }

    #[test]
    fn pairs_are_positive_negative_same_user(labels in prop::collection::vec(any::<bool>(), 1..12), seed in any::<u64>()) {
        let weeks: Vec<ActionRepresentation> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| rep("only", i as u32 + 1, l, vec![i as f64]))
            .collect();
        let pairs = sample_pairs(&weeks, seed);
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assert_eq!(pairs.len(), pos * (labels.len() - pos));
        for p in &pairs {
            prop_assert!(p.pos.dropout_label && !p.neg.dropout_label);
            prop_assert_eq!(&p.pos.user_id, &p.neg.user_id);
        }
        prop_assert_eq!(pairs, sample_pairs(&weeks, seed));
    }
}
