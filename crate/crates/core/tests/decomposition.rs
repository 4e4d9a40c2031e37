mod oracles;

use ppg_shape::decomposition::{
    build_lower_envelope, decompose, find_extrema, subtract_envelope, DecompositionParams, Pulse,
};
use ppg_shape::SampledSignal;
use proptest::prelude::*;

/// Signals drawn from a small set of levels so that ties and flat runs
/// show up often.
fn signal() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec((-4i32..=4).prop_map(f64::from), 3..150),
        prop::collection::vec(-10.0f64..10.0, 3..150),
    ]
}

fn sampled(z: &[f64]) -> SampledSignal {
    SampledSignal::new(z.to_vec(), 64.0, 0.0).unwrap()
}

proptest! {
    #[test]
    fn extrema_match_window_scan(z in signal(), radius in 1usize..12) {
        let e = find_extrema(&sampled(&z), radius).unwrap();
        let (minima, maxima) = oracles::extrema(&z, radius);
        prop_assert_eq!(e.minima_indices(), minima);
        prop_assert_eq!(e.maxima.iter().map(|m| m.index).collect::<Vec<_>>(), maxima);
    }

    #[test]
    fn envelope_matches_global_extension(z in signal(), radius in 1usize..12) {
        let s = sampled(&z);
        let minima = find_extrema(&s, radius).unwrap().minima_indices();
        let env = build_lower_envelope(&s, &minima).unwrap();
        prop_assert_eq!(env.knot_indices(), &oracles::envelope_knots(&z, &minima)[..]);
        for (v, l) in z.iter().zip(env.sample_values()) {
            prop_assert!(*v >= l - 1e-12 * v.abs().max(1.0));
        }
        for &k in &minima {
            prop_assert_eq!(env.sample_values()[k], z[k]);
        }
    }

    #[test]
    fn shifted_signal_is_non_negative(z in signal(), radius in 1usize..12) {
        let s = sampled(&z);
        let minima = find_extrema(&s, radius).unwrap().minima_indices();
        let env = build_lower_envelope(&s, &minima).unwrap();
        prop_assert!(subtract_envelope(&s, &env).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pulses_rebuild_the_signal(z in prop::collection::vec(-10.0f64..10.0, 3..150), radius in 1usize..8) {
        let params = DecompositionParams { radius, min_pulse_len: 1 };
        let Ok(d) = decompose(&sampled(&z), params) else {
            // Only an all-flat shifted signal has nothing to keep.
            return Ok(());
        };
        let envelope = d.envelope.sample_values();
        let scale = z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut covered = 0;
        for p in &d.pulses.pulses {
            covered += p.len();
            if let Pulse::Normalized(n) = p {
                prop_assert!(n.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
                prop_assert_eq!(n.values[n.max_offset], 1.0);
                for (j, v) in n.values.iter().enumerate() {
                    let k = n.start + j;
                    let rebuilt = envelope[k] + n.amplitude * v;
                    prop_assert!((rebuilt - z[k]).abs() <= 1e-12 * scale, "sample {}: {} vs {}", k, rebuilt, z[k]);
                }
            }
        }
        prop_assert_eq!(covered, z.len() - 1);
        prop_assert!((d.pulses.total_duration() - (z.len() - 1) as f64 / 64.0).abs() < 1e-9);
    }
}

#[test]
fn shallow_minimum_example() {
    let z = [0.0, 5.0, -1.0, 5.0, -2.0, 5.0, 0.0];
    let e = find_extrema(&sampled(&z), 2).unwrap();
    assert_eq!(e.minima_indices(), vec![0, 4, 6]);
    assert_eq!(oracles::extrema(&z, 2).0, vec![0, 4, 6]);

    let z = [0.0, 5.0, -1.5, 5.0, -2.0, 5.0, 0.0];
    let s = sampled(&z);
    let env = build_lower_envelope(&s, &[0, 4, 6]).unwrap();
    assert_eq!(env.knot_indices(), &[0, 2, 4, 6]);
}
