#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spadcorr::correlator::{accumulate, CorrelationAccumulator, WindowConfig};
use spadcorr::epr::{v_min, MethodResult};
use spadcorr::optics::{
    conditional_variance, map_sensor_to_object, momentum_to_sensor, position_widths, predict_epr, AxisWidths,
    DoubleGaussianModel, ObjectCoordinate, OpticalMapping,
};
use spadcorr::sensor::Frame;
use spadcorr::SensorGeometry;

fn widths() -> impl Strategy<Value = AxisWidths> {
    (0.1f64..200.0, 0.1f64..200.0).prop_map(|(a, b)| AxisWidths { sigma_plus: a, sigma_minus: b })
}

fn frames(count: usize, g: SensorGeometry, bins: u16) -> impl Strategy<Value = Vec<Frame>> {
    any::<u64>().prop_map(move |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count as u32).map(|i| common::random_frame(&mut rng, i, g, bins, 12)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pure_state_never_beats_the_uncertainty_bound(x in widths(), y in widths()) {
        let model = DoubleGaussianModel::new(x, y).unwrap();
        for (p, w) in predict_epr(&model).iter().zip([x, y]) {
            prop_assert!(p.v_min <= 0.25 * (1.0 + 1e-12));
            let expected = (w.sigma_plus * w.sigma_minus).powi(2) / (w.sigma_plus.powi(2) + w.sigma_minus.powi(2)).powi(2);
            prop_assert!((p.v_min - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn targets_round_trip_through_the_model(x in widths()) {
        let (a, b) = if x.sigma_plus <= x.sigma_minus { (x.sigma_plus, x.sigma_minus) } else { (x.sigma_minus, x.sigma_plus) };
        prop_assume!(b / a > 1.0 + 1e-3);
        let model = DoubleGaussianModel::new(AxisWidths { sigma_plus: a, sigma_minus: b }, AxisWidths { sigma_plus: a, sigma_minus: b }).unwrap();
        let p = predict_epr(&model)[0];
        let back = AxisWidths::from_conditional_targets(p.delta_pos_um, p.delta_mom).unwrap();
        prop_assert!((back.sigma_plus - a).abs() < 1e-6 * a);
        prop_assert!((back.sigma_minus - b).abs() < 1e-6 * b);
    }

    #[test]
    fn position_widths_invert(x in widths(), y in widths()) {
        let model = DoubleGaussianModel::new(x, y).unwrap();
        let [px, _] = position_widths(&model);
        let back = px.to_momentum();
        prop_assert!((back.sigma_plus - x.sigma_plus).abs() < 1e-9 * x.sigma_plus);
        prop_assert!((back.sigma_minus - x.sigma_minus).abs() < 1e-9 * x.sigma_minus);
    }

    #[test]
    fn density_is_exchange_symmetric(x in widths(), y in widths(), q in prop::array::uniform4(-50.0f64..50.0)) {
        let m = DoubleGaussianModel::new(x, y).unwrap();
        let a = m.density([q[0], q[1]], [q[2], q[3]]);
        let b = m.density([q[2], q[3]], [q[0], q[1]]);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b));
        prop_assert!(a <= 1.0);
    }

    #[test]
    fn conditional_variance_is_bracketed(a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let v = conditional_variance(a, b);
        let m2 = a.min(b).powi(2);
        prop_assert!(v >= m2 * (1.0 - 1e-12) && v <= 2.0 * m2 * (1.0 + 1e-12));
        prop_assert!((v - conditional_variance(b, a)).abs() <= 1e-12 * v);
    }

    #[test]
    fn far_field_mapping_inverts(f in 10.0f64..500.0, lambda in 400.0f64..1600.0, q in prop::array::uniform2(-30.0f64..30.0)) {
        let m = OpticalMapping::far_field(f, lambda);
        match map_sensor_to_object(momentum_to_sensor(q, &m), &m) {
            ObjectCoordinate::Momentum(back) => {
                prop_assert!((back[0] - q[0]).abs() < 1e-9 * (1.0 + q[0].abs()));
                prop_assert!((back[1] - q[1]).abs() < 1e-9 * (1.0 + q[1].abs()));
            }
            ObjectCoordinate::Position(_) => prop_assert!(false, "far field must map to momentum"),
        }
    }

    #[test]
    fn reported_v_is_recomputable(dx in 1.0f64..200.0, dq in 0.1f64..20.0) {
        let r = MethodResult::from_variances(dx * dx, dq * dq);
        prop_assert!((r.recomputed_v() - r.v_min).abs() <= 1e-12 * r.v_min);
        prop_assert_eq!(r.violated, v_min(dx * dx, dq * dq).1);
        prop_assert_eq!(r.violated, r.v_min < 0.25);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn g2_and_dt_are_symmetric(fs in frames(30, SensorGeometry::new(8, 6), 64)) {
        let g = SensorGeometry::new(8, 6);
        let acc = accumulate(&fs, g, 64, WindowConfig { window: 5, shift: Some(20) }).unwrap();
        let n = g.n_pixels();
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(acc.g2()[a * n + b], acc.g2()[b * n + a]);
                prop_assert_eq!(acc.g2_shifted().unwrap()[a * n + b], acc.g2_shifted().unwrap()[b * n + a]);
            }
            prop_assert_eq!(acc.g2()[a * n + a], 0);
        }
        let dt = acc.dt_hist();
        for i in 0..dt.len() {
            prop_assert_eq!(dt[i], dt[dt.len() - 1 - i]);
        }
    }

    #[test]
    fn counts_are_conserved(fs in frames(30, SensorGeometry::new(8, 6), 64)) {
        let g = SensorGeometry::new(8, 6);
        let w = WindowConfig { window: 5, shift: Some(20) };
        let acc = accumulate(&fs, g, 64, w).unwrap();
        let events: u64 = fs.iter().map(|f| f.events.len() as u64).sum();
        let ordered_pairs: u64 = fs.iter().map(|f| (f.events.len() * f.events.len().saturating_sub(1)) as u64).sum();
        prop_assert_eq!(acc.g1().iter().sum::<u64>(), events);
        prop_assert_eq!(acc.dt_hist().iter().sum::<u64>(), ordered_pairs);
        let offset = 63i64;
        let in_window: u64 = acc.dt_hist().iter().enumerate().filter(|(i, _)| (*i as i64 - offset).abs() <= 5).map(|(_, c)| c).sum();
        let in_shift: u64 = acc.dt_hist().iter().enumerate().filter(|(i, _)| (15..=25).contains(&(*i as i64 - offset).abs())).map(|(_, c)| c).sum();
        prop_assert_eq!(acc.g2().iter().sum::<u64>(), in_window);
        prop_assert_eq!(acc.g2_shifted().unwrap().iter().sum::<u64>(), in_shift);
    }

    #[test]
    fn merging_any_split_equals_one_pass(fs in frames(40, SensorGeometry::new(8, 6), 64), k in 0usize..=40) {
        let g = SensorGeometry::new(8, 6);
        let w = WindowConfig::default();
        let whole = accumulate(&fs, g, 64, w).unwrap();
        let left = accumulate(&fs[..k], g, 64, w).unwrap();
        let right = accumulate(&fs[k..], g, 64, w).unwrap();
        prop_assert_eq!(&left.clone().merge(right.clone()).unwrap(), &whole);
        prop_assert_eq!(&right.merge(left).unwrap(), &whole);
    }

    #[test]
    fn empty_frames_only_advance_the_frame_count(fs in frames(10, SensorGeometry::new(8, 6), 64), extra in 0u64..1000) {
        let g = SensorGeometry::new(8, 6);
        let w = WindowConfig::default();
        let mut acc = accumulate(&fs, g, 64, w).unwrap();
        let before: CorrelationAccumulator = acc.clone();
        acc.add_empty_frames(extra);
        prop_assert_eq!(acc.n_frames(), before.n_frames() + extra);
        prop_assert_eq!(acc.g2(), before.g2());
    }
}
