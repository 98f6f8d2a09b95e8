//! Paired comparison on a planted-epistasis task: a classifier initialised
//! from the trained encoder stack against a randomly initialised network of
//! identical architecture, fine-tuned under the same budget.

use epistack::metrics::{auc_rank, ScoredLabels};
use epistack::net::{
    init_network, train, Activation, CostKind, LayerSpec, TrainConfig, TrainOptions,
};
use epistack::sae::{init_classifier_from_stack, stack_train, SparseAeConfig};
use epistack::simdata::{generate, split, EpistasisModel, SimSpec};
use ndarray::{Array2, Axis};

fn dosage_design(ds: &epistack::Dataset) -> Array2<f64> {
    let mut design = Array2::zeros((ds.n_samples(), ds.n_variants()));
    for v in 0..ds.n_variants() {
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            design[(s, v)] = call.dosage().map(|d| d as f64).unwrap_or(0.0);
        }
    }
    design
}

fn valid_auc_for_seed(seed: u64) -> (f64, f64) {
    let spec = SimSpec {
        n_samples: 800,
        n_variants: 30,
        maf_range: (0.1, 0.4),
        n_marginal: 2,
        marginal_odds_ratio: 1.5,
        n_epistatic_pairs: 8,
        epistasis_model: EpistasisModel::Xor,
        epistatic_odds_ratio: 4.0,
        base_prevalence: 0.5,
        missing_rate: 0.0,
        seed,
    };
    let (ds, _) = generate(&spec).unwrap();
    let design = dosage_design(&ds);
    let splits = split(&ds, (0.5, 0.25, 0.25), seed).unwrap();
    let labels = ds.labels();
    let pick = |rows: &[usize]| -> (Array2<f64>, Vec<u8>) {
        (
            design.select(Axis(0), rows),
            rows.iter().map(|&i| labels[i].unwrap()).collect(),
        )
    };
    let (train_x, train_l) = pick(&splits.train);
    let (valid_x, valid_l) = pick(&splits.valid);

    let ae_config = SparseAeConfig {
        hidden_size: 0,
        // a fifth of twenty hidden units active keeps the codes informative
        sparsity_target: 0.2,
        sparsity_weight: 1.0,
        base: TrainConfig {
            learning_rate: 0.1,
            epochs_max: 300,
            hidden_dropout: 0.0,
            input_dropout: 0.0,
            batch_size: None,
            seed,
            cost: CostKind::SquaredError,
            ..TrainConfig::default()
        },
    };
    let stack = stack_train(&train_x, &[20], &[ae_config]).unwrap();

    let head = vec![
        LayerSpec::new(10, Activation::Rectifier),
        LayerSpec::new(2, Activation::Sigmoid),
    ];
    let pretrained = init_classifier_from_stack(&stack, 1, &head, seed ^ 0xbeef).unwrap();
    // same architecture, same seed budget, no pretraining
    let random = init_network::<f64>(30, pretrained.layers(), seed ^ 0xbeef).unwrap();

    let config = TrainConfig {
        learning_rate: 0.05,
        weight_decay: 1e-3,
        momentum_start: 0.9,
        momentum_ramp: 1.0,
        momentum_stable: 0.9,
        epochs_max: 300,
        hidden_dropout: 0.0,
        early_stop_patience: 30,
        batch_size: Some(128),
        seed,
        cost: CostKind::CrossEntropy,
        ..TrainConfig::default()
    };
    let auc_of = |params| {
        let (best, _) = train(
            params,
            &train_x,
            &train_l,
            &valid_x,
            &valid_l,
            &config,
            TrainOptions::default(),
        )
        .unwrap();
        let scores = best.predict(&valid_x).unwrap();
        auc_rank(&ScoredLabels::new(scores.to_vec(), valid_l.clone()).unwrap()).unwrap()
    };
    (auc_of(pretrained), auc_of(random))
}

#[test]
fn stack_initialisation_beats_random_initialisation_on_average() {
    let mut pretrained_sum = 0.0;
    let mut random_sum = 0.0;
    for seed in 1..=5u64 {
        let (pre, rand) = valid_auc_for_seed(seed);
        println!("seed {seed}: pretrained {pre:.4}, random {rand:.4}");
        pretrained_sum += pre;
        random_sum += rand;
    }
    let pretrained = pretrained_sum / 5.0;
    let random = random_sum / 5.0;
    assert!(
        pretrained > random,
        "pretrained mean {pretrained:.4} vs random mean {random:.4}"
    );
}
