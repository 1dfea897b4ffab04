use pilae::data::{load_model, parse_idx_images, parse_idx_labels, save_model, DataError, Dataset};
use pilae::layer::{planned_width, LayerConfig, WidthRule};
use pilae::pipeline::{evaluate, train_model, TrainConfig};
use pilae::readout::HeadKind;
use pilae::stack::{grow_stack, transform, StackConfig, StopReason};
use pilae::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn low_rank_data(d: usize, n: usize, r: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0));
    let b = Matrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    a.matmul(&b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stop_reason_matches_trace(
        d in 4usize..14,
        n in 6usize..30,
        seed in any::<u64>(),
        eps_exp in -12i32..0,
        max_depth in 1usize..5,
        min_width in 1usize..6,
        beta in 0.5f64..1.0,
    ) {
        let x = low_rank_data(d, n, d.min(n).max(2) - 1, seed);
        let cfg = StackConfig {
            layer: LayerConfig { width_rule: WidthRule::Decay { beta }, ..LayerConfig::default() },
            epsilon: 10f64.powi(eps_exp),
            max_depth,
            min_width,
        };
        let net = grow_stack(&x, &cfg).unwrap();
        let log = net.growth.as_ref().unwrap();
        prop_assert!(net.depth() >= 1);
        prop_assert_eq!(log.layers.len(), net.depth());
        let distances: Vec<f64> = log.layers.iter().map(|l| l.identity_distance).collect();
        // no earlier layer met a stopping rule
        for l in &log.layers[..net.depth() - 1] {
            prop_assert!(l.identity_distance >= cfg.epsilon);
        }
        let last = log.layers.last().unwrap();
        match log.stop_reason {
            StopReason::Epsilon => prop_assert!(last.identity_distance < cfg.epsilon, "{:?}", distances),
            StopReason::MaxDepth => {
                prop_assert_eq!(net.depth(), max_depth);
                prop_assert!(last.identity_distance >= cfg.epsilon);
            }
            StopReason::MinWidth => {
                prop_assert!(net.depth() < max_depth);
                let (_, next) = planned_width(&cfg.layer, last.feature_rank, last.width, n).unwrap();
                prop_assert!(next < min_width);
            }
        }
        for (i, l) in log.layers.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&l.rank_ratio));
            if i > 0 {
                prop_assert_eq!(l.input_dim, log.layers[i - 1].width);
                if beta < 1.0 && l.input_dim >= 2 {
                    prop_assert!(l.width < l.input_dim);
                }
            }
        }
    }
}

#[test]
fn growth_is_bit_identical() {
    let x = low_rank_data(12, 40, 9, 5);
    let cfg = StackConfig {
        layer: LayerConfig { width_rule: WidthRule::Decay { beta: 0.8 }, ..LayerConfig::default() },
        epsilon: 1e-300,
        max_depth: 3,
        min_width: 1,
    };
    let a = grow_stack(&x, &cfg).unwrap();
    let b = grow_stack(&x, &cfg).unwrap();
    assert_eq!(a.encoders, b.encoders);
    assert_eq!(a.growth, b.growth);
    assert_eq!(transform(&a, &x).unwrap(), transform(&b, &x).unwrap());
    assert_eq!(a.widths(), vec![9, 7, 5]);
}

#[test]
fn saved_model_scores_the_same() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 120;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let x = Matrix::from_fn(5, n, |i, j| {
        let centre = if i == labels[j] { 4.0 } else { 0.0 };
        centre + rng.random_range(-0.3..0.3)
    });
    let data = Dataset {
        x,
        labels,
        classes: 3,
        name: "blobs".into(),
        metadata: Default::default(),
    };
    for head in [HeadKind::Shln, HeadKind::Softmax, HeadKind::Cascade] {
        let cfg = TrainConfig {
            stack: StackConfig { max_depth: 2, min_width: 1, ..StackConfig::default() },
            head,
            ..TrainConfig::default()
        };
        let (net, outcome) = train_model(&data, &cfg).unwrap();
        assert!(outcome.train_accuracy > 0.95, "{head}: {}", outcome.train_accuracy);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pilae");
        save_model(&net, net.readout.as_ref(), &path).unwrap();
        let (back, loaded_head) = load_model(&path).unwrap();
        assert_eq!(loaded_head.as_ref().map(|h| h.kind), Some(head));
        assert_eq!(evaluate(&back, &data).unwrap(), evaluate(&net, &data).unwrap());
    }
}

#[test]
fn idx_errors_are_distinct() {
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
    images.extend([0u8, 255, 128, 64, 1, 2, 3, 4]);
    let m = parse_idx_images(&images, "img").unwrap();
    assert_eq!(m.shape(), (4, 2));
    assert_eq!(m[(1, 0)], 1.0);

    let mut bad = images.clone();
    bad[3] = 1;
    assert!(matches!(parse_idx_images(&bad, "img"), Err(DataError::BadMagic { .. })));
    assert!(matches!(
        parse_idx_images(&images[..images.len() - 1], "img"),
        Err(DataError::Truncated { .. })
    ));
    let labels = [0u8, 0, 8, 1, 0, 0, 0, 2, 7, 3];
    assert_eq!(parse_idx_labels(&labels, "lbl").unwrap(), vec![7, 3]);
    assert!(matches!(parse_idx_labels(&images, "lbl"), Err(DataError::BadMagic { .. })));
}
