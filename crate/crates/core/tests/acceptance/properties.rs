use std::path::Path;

use proptest::prelude::*;
use snn_core::backward::{backward_layer, compute_target_times, deltas_to_backward_spikes};
use snn_core::encoding::{encode_pixel, EncodingConfig, SpikeTime};
use snn_core::fixedpoint::{add_sat_raw, FixedPoint, QFormat, Rounding};
use snn_core::forward::run_forward;
use snn_core::hwmodel::{export_bram, import_bram, quantize_network, BramImage};
use snn_core::model_io;
use snn_core::network::{InitConfig, Polarity};
use snn_core::{AnyNetwork, Fixed, Network, Real};

/// Target rule written out case by case, independent of the library.
pub fn brute_force_targets(times: &[Option<u32>], label: usize, gamma: u32, t_max: u32) -> Vec<u32> {
    let clamp = |t: i64| t.max(0).min(t_max as i64) as u32;
    let fired: Vec<u32> = times.iter().flatten().copied().collect();
    if fired.is_empty() {
        return (0..times.len())
            .map(|j| if j == label { clamp(t_max as i64 - gamma as i64) } else { t_max })
            .collect();
    }
    let t_min = *fired.iter().min().unwrap() as i64;
    let g = gamma as i64;
    let mut out = Vec::new();
    for (j, t) in times.iter().enumerate() {
        let t = t.unwrap_or(t_max) as i64;
        let target = if j == label {
            t_min - g
        } else if t < t_min + g {
            t_min + g
        } else {
            t
        };
        out.push(clamp(target));
    }
    out
}

fn target_times_exhaustive_three_outputs() {
    let t_max = 7u32;
    // Each output either fires at 0..=7 or stays silent.
    let states: Vec<Option<u32>> = (0..=t_max).map(Some).chain([None]).collect();
    let mut cases = 0;
    for a in &states {
        for b in &states {
            for c in &states {
                let times = [*a, *b, *c];
                let spikes: Vec<SpikeTime> = times
                    .iter()
                    .map(|t| t.map_or(SpikeTime::placeholder(t_max), SpikeTime::fired))
                    .collect();
                for label in 0..3 {
                    for gamma in 1..=t_max + 1 {
                        let got = compute_target_times(&spikes, label, gamma, t_max).unwrap();
                        let want = brute_force_targets(&times, label, gamma, t_max);
                        assert_eq!(got.targets, want, "times {times:?} label {label} gamma {gamma}");
                        cases += 1;
                    }
                }
            }
        }
    }
    assert_eq!(cases, 9 * 9 * 9 * 3 * 8);
}

fn small_real_net(sizes: Vec<usize>, seed: u64, t_max: u32) -> Network<Real> {
    let thresholds: Vec<f64> = sizes[1..].iter().map(|_| 0.8).collect();
    Network::init(Real, &sizes, &thresholds, t_max, InitConfig { low: -0.4, high: 0.9, seed }).unwrap()
}

fn arch() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..7, 2..5)
}

proptest! {
    fn encoding_is_monotone_and_exact(i_max in 1u32..300, t_max in 1u32..300, a in 0u32..300, b in 0u32..300) {
        let cfg = EncodingConfig::new(i_max, t_max).unwrap();
        let (lo, hi) = (a.min(b) % (i_max + 1), a.max(b) % (i_max + 1));
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let t_lo = encode_pixel(lo, cfg).unwrap();
        let t_hi = encode_pixel(hi, cfg).unwrap();
        prop_assert!(t_lo.fired && t_hi.fired);
        prop_assert!(t_hi.step <= t_lo.step);
        prop_assert!(t_lo.step <= t_max);
        let exact = ((i_max - lo) as u128 * t_max as u128) / i_max as u128;
        prop_assert_eq!(t_lo.step as u128, exact);
        prop_assert_eq!(encode_pixel(i_max, cfg).unwrap().step, 0);
        prop_assert_eq!(encode_pixel(0, cfg).unwrap().step, t_max);
        prop_assert!(encode_pixel(i_max + 1, cfg).is_err());
    }

    fn larger_backward_delta_spikes_no_later(x in -1.0f64..1.0, y in -1.0f64..1.0, t_max in 1u32..256) {
        let spikes = deltas_to_backward_spikes(&[x, y], t_max);
        prop_assert!(spikes.len() <= 2);
        for s in &spikes {
            prop_assert!(s.tau <= t_max);
            let d = [x, y][s.neuron];
            let expected = if d > 0.0 { Polarity::Positive } else { Polarity::Negative };
            prop_assert_eq!(s.polarity, expected);
        }
        let tau = |n: usize| spikes.iter().find(|s| s.neuron == n).map(|s| s.tau);
        if x.signum() == y.signum() && x.abs() > y.abs() {
            match (tau(0), tau(1)) {
                (Some(a), Some(b)) => prop_assert!(a <= b),
                (None, Some(_)) => prop_assert!(false, "larger delta emitted nothing"),
                _ => {}
            }
        }
    }

    fn forward_fires_at_most_once_at_first_crossing(sizes in arch(), seed in any::<u64>(), t_max in 1u32..20, raw in prop::collection::vec(0u32..20, 7)) {
        let net = small_real_net(sizes.clone(), seed, t_max);
        let input: Vec<SpikeTime> = (0..sizes[0]).map(|i| SpikeTime::fired(raw[i] % (t_max + 1))).collect();
        let trace = run_forward(&net, &input).unwrap();
        prop_assert_eq!(trace.spike_times.len(), sizes.len());
        for (l, layer) in net.layers().iter().enumerate() {
            let pre = &trace.spike_times[l];
            let post = &trace.spike_times[l + 1];
            prop_assert_eq!(post.len(), sizes[l + 1]);
            for j in 0..layer.size() {
                // Reference: cumulative sum of weights of inputs spiking at or before t.
                let mut first = None;
                for t in 0..=t_max {
                    let v: f64 = (0..layer.fan_in())
                        .filter(|&i| pre[i].fired && pre[i].step <= t)
                        .map(|i| layer.weights.get(j, i))
                        .sum();
                    if v >= layer.thresholds[j] - 1e-12 && first.is_none() {
                        first = Some(t);
                    }
                }
                match (first, post[j]) {
                    (Some(t), s) => {
                        prop_assert!(s.fired);
                        prop_assert_eq!(s.step, t);
                    }
                    (None, s) => {
                        prop_assert!(!s.fired);
                        prop_assert_eq!(s.step, t_max);
                    }
                }
            }
        }
    }

    fn backward_neurons_spike_at_most_once(seed in any::<u64>(), n_upper in 1usize..6, n in 1usize..6, t_max in 2u32..16, taus in prop::collection::vec((0u32..16, any::<bool>()), 6), times in prop::collection::vec(0u32..16, 12)) {
        let net = small_real_net(vec![n, n_upper], seed, t_max);
        let w = &net.layers()[0].weights;
        let upper: Vec<_> = (0..n_upper)
            .map(|k| snn_core::backward::SignedBackwardSpike {
                neuron: k,
                tau: taus[k].0 % (t_max + 1),
                polarity: if taus[k].1 { Polarity::Positive } else { Polarity::Negative },
            })
            .collect();
        let lower: Vec<SpikeTime> = (0..n).map(|i| SpikeTime::fired(times[i] % (t_max + 1))).collect();
        let upper_t: Vec<SpikeTime> = (0..n_upper).map(|k| SpikeTime::fired(times[6 + k] % (t_max + 1))).collect();
        let thresholds = vec![0.3; n];
        let (potentials, spikes) = backward_layer(&Real, &upper, w, &lower, &upper_t, &thresholds, t_max).unwrap();
        prop_assert_eq!(potentials.len(), n);
        let mut seen = vec![false; n];
        for s in &spikes {
            prop_assert!(!seen[s.neuron], "neuron {} spiked twice", s.neuron);
            seen[s.neuron] = true;
            prop_assert!(s.tau <= t_max);
        }
        // A neuron whose final potential is beyond threshold must have spiked.
        for i in 0..n {
            if potentials[i].abs() > 0.3 + 1e-12 {
                prop_assert!(seen[i]);
            }
        }
    }

    fn fixed_point_round_trip_and_saturation(int_bits in 1u8..10, frac_bits in 0u8..12, raw in any::<i32>(), x in -2000.0f64..2000.0) {
        prop_assume!((int_bits + frac_bits) as u32 >= QFormat::MIN_WIDTH);
        let f = QFormat::new(int_bits, frac_bits).unwrap();
        let raw = (raw as i64).clamp(f.min_raw(), f.max_raw());
        let v = FixedPoint::from_raw(raw, f);
        prop_assert_eq!(FixedPoint::from_real(v.to_real(), f, Rounding::NearestEven).raw() as i64, raw);
        let q = FixedPoint::from_real(x, f, Rounding::NearestEven);
        if x > f.max_value() {
            prop_assert_eq!(q.raw() as i64, f.max_raw());
        } else if x < f.min_value() {
            prop_assert_eq!(q.raw() as i64, f.min_raw());
        } else {
            prop_assert!((q.to_real() - x).abs() <= f.ulp() / 2.0);
        }
        let t = FixedPoint::from_real(x, f, Rounding::Truncate);
        if x >= f.min_value() && x <= f.max_value() {
            prop_assert!((t.to_real() - x).abs() < f.ulp());
            prop_assert!(t.to_real().abs() <= x.abs());
        }
    }

    fn saturating_add_matches_clamped_sum(a in any::<i32>(), b in any::<i32>()) {
        let f = QFormat::Q5_7;
        let a = (a as i64).clamp(f.min_raw(), f.max_raw()) as i32;
        let b = (b as i64).clamp(f.min_raw(), f.max_raw()) as i32;
        let s = add_sat_raw(a, b, f);
        prop_assert_eq!(s, add_sat_raw(b, a, f));
        prop_assert_eq!(s as i64, (a as i64 + b as i64).clamp(f.min_raw(), f.max_raw()));
    }

    fn bram_export_import_identity(sizes in arch(), seed in any::<u64>()) {
        let sizes: Vec<usize> = sizes.iter().map(|s| s * 3).collect();
        let real = Network::init(Real, &sizes, &vec![1.0; sizes.len() - 1], 15, InitConfig::symmetric(20.0, seed)).unwrap();
        let (fixed, _) = quantize_network(&real, Fixed::default()).unwrap();
        let images = export_bram(&fixed).unwrap();
        prop_assert_eq!(images.len(), sizes[1..].iter().sum::<usize>());
        let p = Path::new("img");
        let reread: Vec<BramImage> = images
            .iter()
            .map(|img| {
                let b = BramImage::from_bytes(&img.to_bytes(), p).unwrap();
                let h = BramImage::from_hex(&img.to_hex(), img.layer, img.neuron, p).unwrap();
                assert_eq!(b, h);
                b
            })
            .collect();
        prop_assert_eq!(&reread, &images);
        prop_assert_eq!(import_bram(&reread, &fixed).unwrap(), fixed);
    }

    fn model_file_round_trip(sizes in arch(), seed in any::<u64>(), fixed in any::<bool>()) {
        let real = small_real_net(sizes, seed, 15);
        let net: AnyNetwork = if fixed {
            quantize_network(&real, Fixed::default()).unwrap().0.into()
        } else {
            real.into()
        };
        let bytes = model_io::to_bytes(&net);
        let back = model_io::from_bytes(&bytes, Path::new("m")).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(model_io::to_bytes(&back), bytes);
    }
}

/// Every property suite, by name.
pub fn suites() -> Vec<(&'static str, fn())> {
    vec![
        ("target times, exhaustive C=3 t_max=7", target_times_exhaustive_three_outputs),
        ("encoding monotonicity", encoding_is_monotone_and_exact),
        ("backward temporal coding", larger_backward_delta_spikes_no_later),
        ("forward single spike", forward_fires_at_most_once_at_first_crossing),
        ("backward single spike", backward_neurons_spike_at_most_once),
        ("fixed-point round trip and saturation", fixed_point_round_trip_and_saturation),
        ("saturating add", saturating_add_matches_clamped_sum),
        ("BRAM export/import identity", bram_export_import_identity),
        ("model file round trip", model_file_round_trip),
    ]
}
