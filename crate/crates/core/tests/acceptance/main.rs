//! Acceptance criteria, one test per criterion. Each prints a single
//! `criterion N PASS|FAIL` line to stdout, bypassing the test harness's
//! output capture, and then asserts.
//!
//! The MNIST criteria train for tens of minutes and are ignored by default:
//! `cargo test -p snn-core --test acceptance -- --ignored`.

mod properties;

use std::io::Write;
use std::panic;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snn_core::audit;
use snn_core::backward::{dense_delta_oracle, train_step, StepParams};
use snn_core::datasets::{self, default_cache_dir, DatasetName, DatasetSpec, EncodedDataset};
use snn_core::encoding::SpikeTime;
use snn_core::forward::run_forward;
use snn_core::hwmodel::{layer_cycles, network_cycles};
use snn_core::network::{InitConfig, Layer, Matrix};
use snn_core::training::{evaluate, sparsity_report, train, TrainConfig};
use snn_core::{Fixed, Network, NumericMode, Real};

fn report(id: u32, what: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id:>2} {verdict}  {what}: {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {id} failed: {what}: {detail}");
}

fn dataset(name: DatasetName, split_seed: u64, t_max: u32) -> (EncodedDataset, EncodedDataset) {
    let spec = DatasetSpec::builtin(name, &default_cache_dir());
    if spec.files.iter().any(|f| !spec.path(f).exists()) {
        datasets::fetch(&spec).expect("dataset download");
    }
    let (train_set, test_set) = datasets::load(&spec, split_seed).expect("dataset loads");
    (train_set.encode(t_max).unwrap(), test_set.encode(t_max).unwrap())
}

fn digits() -> &'static (EncodedDataset, EncodedDataset) {
    static DIGITS: OnceLock<(EncodedDataset, EncodedDataset)> = OnceLock::new();
    DIGITS.get_or_init(|| dataset(DatasetName::Digits, 0, 15))
}

/// Hyperparameters of one training run; the Digits values match the
/// shipped example configs.
#[derive(Debug, Clone)]
struct Recipe {
    layers: &'static [usize],
    thresholds: &'static [f64],
    t_max: u32,
    init: InitConfig,
    train: TrainConfig,
}

fn digits_recipe(layers: &'static [usize]) -> Recipe {
    let deep = layers.len() > 3;
    Recipe {
        layers,
        thresholds: if deep { &DEEP_THRESHOLDS } else { &[4.0, 6.234] },
        t_max: 15,
        init: InitConfig {
            low: -0.16,
            high: 0.446,
            seed: 1,
        },
        train: TrainConfig {
            epochs: 60,
            lr: 0.047,
            gamma: 7,
            seed: 1,
            lr_decay: Some(0.92),
            backward_threshold_factor: 3.0,
            eval_every: 60,
            ..TrainConfig::default()
        },
    }
}

const DEEP_THRESHOLDS: [f64; 3] = [4.0, 4.0, 6.234];

struct Outcome {
    accuracy: f64,
    seconds: f64,
}

fn run<N: NumericMode>(mode: N, r: &Recipe, data: &(EncodedDataset, EncodedDataset)) -> (Network<N>, Outcome) {
    let started = Instant::now();
    let mut net = Network::init(mode, r.layers, r.thresholds, r.t_max, r.init).unwrap();
    train(&mut net, &data.0, None, &r.train).unwrap();
    let seconds = started.elapsed().as_secs_f64();
    let accuracy = evaluate(&net, &data.1, r.train.gamma).unwrap().accuracy;
    (net, Outcome { accuracy, seconds })
}

fn deep_real() -> &'static Outcome {
    static OUT: OnceLock<Outcome> = OnceLock::new();
    OUT.get_or_init(|| run(Real, &digits_recipe(&[64, 20, 20, 10]), digits()).1)
}

#[test]
fn criterion_01_digits_64_20_10_real() {
    let (_, o) = run(Real, &digits_recipe(&[64, 20, 10]), digits());
    let pass = o.accuracy >= 0.975 && o.seconds < 120.0;
    report(
        1,
        "Digits 64-20-10 real, accuracy >= 97.5% in < 2 min",
        pass,
        &format!("accuracy {:.2}%, {:.1}s", 100.0 * o.accuracy, o.seconds),
    );
}

#[test]
fn criterion_02_digits_64_20_20_10_real() {
    let o = deep_real();
    let pass = o.accuracy >= 0.970 && o.seconds < 180.0;
    report(
        2,
        "Digits 64-20-20-10 real, accuracy >= 97.0% in < 3 min",
        pass,
        &format!("accuracy {:.2}%, {:.1}s", 100.0 * o.accuracy, o.seconds),
    );
}

#[test]
fn criterion_03_digits_fixed_point_matches_real() {
    let (_, fixed) = run(Fixed::default(), &digits_recipe(&[64, 20, 20, 10]), digits());
    let real = deep_real();
    let gap = 100.0 * (real.accuracy - fixed.accuracy);
    report(
        3,
        "Digits 64-20-20-10 fixed point within 1.5 pp of real",
        gap.abs() <= 1.5,
        &format!(
            "fixed {:.2}%, real {:.2}%, gap {gap:.2} pp{}",
            100.0 * fixed.accuracy,
            100.0 * real.accuracy,
            if real.accuracy < 0.2 { " (both near chance)" } else { "" }
        ),
    );
}

fn mnist_recipe(layers: &'static [usize]) -> Recipe {
    Recipe {
        layers,
        thresholds: if layers.len() > 3 { &MNIST_DEEP_THRESHOLDS } else { &MNIST_THRESHOLDS },
        t_max: 255,
        init: InitConfig {
            low: MNIST_INIT.0,
            high: MNIST_INIT.1,
            seed: 1,
        },
        train: TrainConfig {
            epochs: MNIST_EPOCHS,
            lr: MNIST_LR,
            gamma: 3,
            seed: 1,
            eval_every: MNIST_EPOCHS,
            ..TrainConfig::default()
        },
    }
}

const MNIST_THRESHOLDS: [f64; 2] = [2.0, 4.0];
const MNIST_DEEP_THRESHOLDS: [f64; 3] = [2.0, 2.0, 4.0];
const MNIST_INIT: (f64, f64) = (-0.05, 0.1);
const MNIST_LR: f64 = 0.01;
const MNIST_EPOCHS: usize = 50;

fn mnist() -> &'static (EncodedDataset, EncodedDataset) {
    static MNIST: OnceLock<(EncodedDataset, EncodedDataset)> = OnceLock::new();
    MNIST.get_or_init(|| dataset(DatasetName::Mnist, 0, 255))
}

#[test]
#[ignore = "long-running: full MNIST training"]
fn criterion_04_mnist_784_400_10_real() {
    let (_, o) = run(Real, &mnist_recipe(&[784, 400, 10]), mnist());
    report(
        4,
        "MNIST 784-400-10 real, accuracy >= 96.5%",
        o.accuracy >= 0.965,
        &format!("accuracy {:.2}%, {:.0}s", 100.0 * o.accuracy, o.seconds),
    );
}

#[test]
#[ignore = "long-running: MNIST 10k-sample smoke run"]
fn criterion_04_mnist_smoke_subset() {
    let (full_train, test) = mnist();
    let spec = DatasetSpec::builtin(DatasetName::Mnist, &default_cache_dir());
    let (raw_train, _) = datasets::load(&spec, 0).unwrap();
    let subset = raw_train.stratified_subset(10_000, 1).unwrap().encode(255).unwrap();
    assert_eq!(subset.input_size(), full_train.input_size());
    let data = (subset, test.clone());
    let (_, o) = run(Real, &mnist_recipe(&[784, 400, 10]), &data);
    report(
        4,
        "MNIST 784-400-10 real on a 10k subset, accuracy >= 92% in < 10 min",
        o.accuracy >= 0.92 && o.seconds < 600.0,
        &format!("accuracy {:.2}%, {:.0}s", 100.0 * o.accuracy, o.seconds),
    );
}

#[test]
#[ignore = "long-running: full MNIST training"]
fn criteria_05_06_mnist_784_400_400_10_accuracy_and_sparsity() {
    let (net, o) = run(Real, &mnist_recipe(&[784, 400, 400, 10]), mnist());
    let accuracy_pass = o.accuracy >= 0.955;
    let sparsity = sparsity_report(&net, &mnist().1).unwrap();
    let least = sparsity.least_active_class();
    let sparsity_pass = (sparsity.percentage - 75.0).abs() <= 5.0 && least == Some(1);
    let _ = panic::catch_unwind(|| {
        report(
            5,
            "MNIST 784-400-400-10 real, accuracy >= 95.5%",
            accuracy_pass,
            &format!("accuracy {:.2}%, {:.0}s", 100.0 * o.accuracy, o.seconds),
        )
    });
    let _ = panic::catch_unwind(|| {
        report(
            6,
            "active synapses 75% +- 5 pp, class 1 least active",
            sparsity_pass,
            &format!(
                "{:.2}% of {} synapses, least active class {least:?}",
                sparsity.percentage, sparsity.total_synapses
            ),
        )
    });
    assert!(accuracy_pass && sparsity_pass);
}

#[test]
fn criterion_07_multiplication_audit() {
    let (train_set, _) = digits();
    let samples = &train_set.inputs[..200];
    let real = Network::init(Real, &[64, 20, 20, 10], &DEEP_THRESHOLDS, 15, InitConfig::symmetric(0.5, 3)).unwrap();
    let deep_fixed = Network::init(Fixed::default(), &[64, 20, 20, 10], &DEEP_THRESHOLDS, 15, InitConfig {
        low: -0.16,
        high: 0.446,
        seed: 3,
    })
    .unwrap();
    // the shallow net keeps updating every layer, so the product count is non-trivial
    let mut fixed = Network::init(Fixed::default(), &[64, 20, 10], &[4.0, 6.234], 15, InitConfig {
        low: -0.16,
        high: 0.446,
        seed: 1,
    })
    .unwrap();

    audit::reset();
    for x in samples {
        run_forward(&real, x).unwrap();
        run_forward(&deep_fixed, x).unwrap();
        run_forward(&fixed, x).unwrap();
    }
    let forward = audit::snapshot();

    let params = StepParams::new(&fixed, 0.047, 7, 3.0).unwrap();
    audit::reset();
    let mut expected_products = 0u64;
    for (x, &label) in samples.iter().zip(&train_set.labels) {
        let out = train_step(&mut fixed, x, label, &params).unwrap();
        // one delta x lr product per neuron that has a nonzero delta and at
        // least one earlier presynaptic spike
        for (l, deltas) in out.backward.effective_deltas.iter().enumerate() {
            let pre = &out.forward.spike_times[l];
            let post = &out.forward.spike_times[l + 1];
            expected_products += deltas
                .iter()
                .zip(post)
                .filter(|(&d, t)| d != 0 && pre.iter().any(|p| p.step < t.step))
                .count() as u64;
        }
    }
    let training = audit::snapshot();
    let pass = forward.total() == 0
        && training.float_muls == 0
        && training.int_scalar_products == expected_products
        && expected_products > 0;
    report(
        7,
        "no multiplications in the forward pass; fixed-point training multiplies only delta x lr",
        pass,
        &format!(
            "forward {} muls; training {} float muls, {} integer products (expected {expected_products})",
            forward.total(),
            training.float_muls,
            training.int_scalar_products
        ),
    );
}

#[test]
fn criterion_08_cycle_model() {
    let anchors = [
        layer_cycles(64, 4).unwrap(),
        layer_cycles(20, 4).unwrap(),
        network_cycles(&[64, 20, 10], 4).unwrap(),
    ];
    let all_ceil = (1..=1024usize).all(|n| layer_cycles(n, 4).unwrap() == ((n + 3) / 4) as u64);
    report(
        8,
        "layer_cycles(64,4)=16, layer_cycles(20,4)=5, network 64-20-10 = 21, ceil(n/4) for n in 1..=1024",
        anchors == [16, 5, 21] && all_ceil,
        &format!("anchors {anchors:?}, ceil(n/4) holds: {all_ceil}"),
    );
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Network<Real>, Vec<SpikeTime>, usize, f64) {
    let t_max = 15;
    let mut layer = |fan_in: usize, size: usize| {
        let data = (0..fan_in * size).map(|_| rng.gen_range(-0.4..1.0)).collect();
        Layer {
            weights: Matrix::from_vec(size, fan_in, data).unwrap(),
            thresholds: (0..size).map(|_| rng.gen_range(0.5..2.0)).collect(),
        }
    };
    let layers = vec![layer(5, 5), layer(5, 5)];
    let net = Network::from_layers(Real, t_max, 5, layers).unwrap();
    let input = (0..5).map(|_| SpikeTime::fired(rng.gen_range(0..=t_max))).collect();
    (net, input, rng.gen_range(0..5), rng.gen_range(0.001..0.5))
}

#[test]
fn criterion_09_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut exact_outputs = 0;
    let (mut agree, mut compared) = (0u32, 0u32);
    for _ in 0..200 {
        let (mut net, input, label, lr) = random_instance(&mut rng);
        let before = net.clone();
        let params = StepParams::new(&net, lr, 1, 1.0).unwrap();
        let out = train_step(&mut net, &input, label, &params).unwrap();

        let trace = run_forward(&before, &input).unwrap();
        let hidden_t = &trace.spike_times[1];
        let out_t = &trace.spike_times[2];
        let times: Vec<Option<u32>> = out_t.iter().map(|s| s.fired.then_some(s.step)).collect();
        let targets = properties::brute_force_targets(&times, label, 1, 15);
        let deltas: Vec<f64> = targets
            .iter()
            .zip(out_t)
            .map(|(&tt, s)| -((tt as f64 - s.step as f64) / 15.0) / 15.0)
            .collect();
        let w0 = &before.layers()[1].weights;
        let w1 = &net.layers()[1].weights;
        let matches = (0..5).all(|j| {
            (0..5).all(|i| {
                let expected = if hidden_t[i].step < out_t[j].step && deltas[j] != 0.0 {
                    w0.get(j, i) + lr * deltas[j]
                } else {
                    w0.get(j, i)
                };
                w1.get(j, i) == expected
            })
        });
        exact_outputs += matches as u32;

        let oracle = dense_delta_oracle(&deltas, w0, hidden_t, out_t).unwrap();
        for (o, s) in oracle.iter().zip(&out.backward.effective_deltas[0]) {
            if *o != 0.0 {
                compared += 1;
                agree += (o.signum() == s.signum() && *s != 0.0) as u32;
            }
        }
    }
    let rate = agree as f64 / compared.max(1) as f64;
    report(
        9,
        "200 random 5-5-5 instances: exact output updates, hidden delta signs agree >= 90%",
        exact_outputs == 200 && rate >= 0.90 && compared > 0,
        &format!("{exact_outputs}/200 exact; signs agree on {agree}/{compared} ({:.1}%)", 100.0 * rate),
    );
}

#[test]
fn criterion_10_property_suites() {
    let mut failed = Vec::new();
    let suites = properties::suites();
    for (name, suite) in &suites {
        if panic::catch_unwind(suite).is_err() {
            failed.push(*name);
        }
    }
    report(
        10,
        "property suites",
        failed.is_empty(),
        &if failed.is_empty() {
            format!("all {} suites pass", suites.len())
        } else {
            format!("failing: {}", failed.join(", "))
        },
    );
}

#[test]
fn repeated_training_on_one_sample_does_not_increase_loss() {
    let (train_set, _) = digits();
    let r = digits_recipe(&[64, 20, 10]);
    let mut net = Network::init(Real, r.layers, r.thresholds, r.t_max, r.init).unwrap();
    let params = StepParams::new(&net, r.train.lr, r.train.gamma, r.train.backward_threshold_factor).unwrap();
    let (x, label) = (&train_set.inputs[0], train_set.labels[0]);
    let losses: Vec<f64> = (0..10)
        .map(|_| train_step(&mut net, x, label, &params).unwrap().loss)
        .collect();
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss rose: {losses:?}");
    }
}
