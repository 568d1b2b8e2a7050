use std::f64::consts::TAU;

use nalgebra::Vector3;
use proptest::prelude::*;

use volsplit_core::decomposition::{contouring_errors, dynamic_errors, thermal_offset, total_error};
use volsplit_core::kinematics::{dkt, dkt_with_errors, link_jacobian};
use volsplit_core::metrics::{fit_power_law_1d, mean_norm_percentages};
use volsplit_core::signal_io::{load_signals, resample, write_signals, CsvSchema};
use volsplit_core::virtual_machine::{servo_response, SecondOrder, ServoParams};
use volsplit_core::{DeviationMatrix, JointPose, LinkErrorVector, MachineGeometry, SignalSet};

fn pose() -> impl Strategy<Value = JointPose> {
    (-200.0..200.0, -200.0..200.0, -200.0..200.0, -60.0..60.0, -360.0..360.0)
        .prop_map(|(x, y, z, a, c)| JointPose::from_degrees(x, y, z, a, c).unwrap())
}

fn link_errors(max_angle: f64) -> impl Strategy<Value = LinkErrorVector> {
    (prop::array::uniform7(-max_angle..max_angle), -0.05..0.05).prop_map(|(a, y)| {
        let mut v = [0.0; 8];
        v[..7].copy_from_slice(&a);
        v[7] = y;
        LinkErrorVector(v)
    })
}

fn deviation(n: usize) -> impl Strategy<Value = DeviationMatrix> {
    prop::collection::vec(prop::array::uniform3(-0.05..0.05), n)
        .prop_map(|rows| DeviationMatrix::from_arrays(&rows).unwrap())
}

fn joints(rate: f64, axes: [Vec<f64>; 5]) -> SignalSet {
    SignalSet::joints(rate, 0.0, axes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linearisation_error_is_second_order(p in pose(), dq in link_errors(2e-4)) {
        let g = MachineGeometry::default();
        let exact = dkt_with_errors(&p, &g, &dq).unwrap() - dkt(&p, &g).unwrap();
        let linear = link_jacobian(&p, &g).unwrap() * dq.as_vector();
        let angle = dq.0[..7].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Curvature terms scale with angle² times the lever arm, and the
        // rotations also act on δy_C.
        let bound = 20.0 * angle * angle * 1000.0 + 10.0 * angle * dq.y_c().abs() + 1e-12;
        prop_assert!((exact - linear).norm() <= bound, "{} > {}", (exact - linear).norm(), bound);
    }

    #[test]
    fn rotary_axes_are_periodic(p in pose(), ka in -2i32..=2, kc in -2i32..=2) {
        let g = MachineGeometry::default();
        let shifted = JointPose { a: p.a + ka as f64 * TAU, c: p.c + kc as f64 * TAU, ..p };
        prop_assert!((dkt(&p, &g).unwrap() - dkt(&shifted, &g).unwrap()).norm() < 1e-9);
        let j0 = link_jacobian(&p, &g).unwrap();
        let j1 = link_jacobian(&shifted, &g).unwrap();
        prop_assert!((j0 - j1).amax() < 1e-9);
    }

    #[test]
    fn resampling_is_idempotent(data in prop::collection::vec(-100.0..100.0f64, 4..60), cycle in 1usize..8) {
        let rate = 1000.0 / cycle as f64;
        let axes: [Vec<f64>; 5] = std::array::from_fn(|i| data.iter().map(|v| v * (i + 1) as f64).collect());
        let set = joints(rate, axes);
        let once = resample(&set, 1000.0).unwrap();
        let twice = resample(&once, 1000.0).unwrap();
        prop_assert_eq!(&once, &twice);
        for (k, v) in data.iter().enumerate() {
            prop_assert!((once.channels()[0].data[k * cycle] - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn resampling_reproduces_ramps(slope in -50.0..50.0f64, offset in -10.0..10.0f64, n in 3usize..40) {
        let axes: [Vec<f64>; 5] = std::array::from_fn(|_| (0..n).map(|k| offset + slope * k as f64 * 0.003).collect());
        let fine = resample(&joints(1.0 / 0.003, axes), 10_000.0).unwrap();
        for (k, v) in fine.channels()[2].data.iter().enumerate() {
            let t = k as f64 / 10_000.0;
            prop_assert!((v - (offset + slope * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn contributions_reconstruct_total_error(
        (chi, chi_enc, chi_nom, link, motion) in (3usize..40).prop_flat_map(|n| (deviation(n), deviation(n), deviation(n), deviation(n), deviation(n)))
    ) {
        let contouring = contouring_errors(&chi_enc, &chi_nom).unwrap();
        let (_, thermal) = thermal_offset(&chi, &chi_enc, &link, &motion).unwrap();
        let dynamic = dynamic_errors(&chi, &chi_enc, &link, &motion, &thermal).unwrap();
        let sum = &(&(&(&contouring + &link) + &motion) + &thermal) + &dynamic;
        prop_assert!(sum.max_abs_diff(&total_error(&chi, &chi_nom).unwrap()) <= 1e-12);
        // The thermal offset leaves δd with zero mean.
        prop_assert!(dynamic.mean().amax() <= 1e-12);
    }

    #[test]
    fn shares_sum_to_100(ms in (2usize..30).prop_flat_map(|n| prop::array::uniform5(deviation(n)))) {
        let shares = mean_norm_percentages([&ms[0], &ms[1], &ms[2], &ms[3], &ms[4]]).unwrap();
        prop_assert!((shares.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        prop_assert!(shares.iter().all(|s| (0.0..=100.0).contains(s)));
    }

    #[test]
    fn power_law_scales(
        rms in prop::collection::vec(0.1..10.0f64, 6),
        gain in 0.01..100.0f64,
        feed_scale in 0.1..10.0f64,
    ) {
        let feeds: [f64; 6] = [1000.0, 1800.0, 3240.0, 5832.0, 10498.0, 18896.0];
        let base = fit_power_law_1d(&feeds, &rms).unwrap();
        let scaled_rms: Vec<f64> = rms.iter().map(|v| v * gain).collect();
        let up = fit_power_law_1d(&feeds, &scaled_rms).unwrap();
        prop_assert!((up.kappa / (gain * base.kappa) - 1.0).abs() < 1e-9);
        prop_assert!((up.exponent - base.exponent).abs() < 1e-9);
        prop_assert!((up.r_squared - base.r_squared).abs() < 1e-9);

        let scaled_feeds: Vec<f64> = feeds.iter().map(|f| f * feed_scale).collect();
        let moved = fit_power_law_1d(&scaled_feeds, &rms).unwrap();
        prop_assert!((moved.exponent - base.exponent).abs() < 1e-9);
        prop_assert!((moved.kappa * feed_scale.powf(base.exponent) / base.kappa - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_power_law_is_recovered(kappa in 1e-4..1.0f64, exponent in 0.2..2.0f64) {
        let feeds: [f64; 6] = [1000.0, 1800.0, 3240.0, 5832.0, 10498.0, 18896.0];
        let rms: Vec<f64> = feeds.iter().map(|f| kappa * f.powf(exponent)).collect();
        let fit = fit_power_law_1d(&feeds, &rms).unwrap();
        prop_assert!((fit.kappa / kappa - 1.0).abs() < 1e-9);
        prop_assert!((fit.exponent - exponent).abs() < 1e-12);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn servo_is_linear(
        u in prop::collection::vec(-5.0..5.0f64, 20..80),
        v in prop::collection::vec(-5.0..5.0f64, 20..80),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        second in any::<bool>(),
    ) {
        let n = u.len().min(v.len());
        let make = |x: &dyn Fn(usize) -> f64| joints(1000.0, std::array::from_fn(|_| (0..n).map(x).collect()));
        let servo = ServoParams {
            second_order: second.then_some(SecondOrder {
                natural_frequency_hz: [30.0; 5],
                damping: [0.8; 5],
            }),
            feedforward: 0.5,
            ..ServoParams::first_order(35.0)
        };
        let yu = servo_response(&make(&|k| u[k]), &servo).unwrap();
        let yv = servo_response(&make(&|k| v[k]), &servo).unwrap();
        let yc = servo_response(&make(&|k| a * u[k] + b * v[k]), &servo).unwrap();
        for k in 0..n {
            let want = a * yu.channels()[0].data[k] + b * yv.channels()[0].data[k];
            prop_assert!((yc.channels()[0].data[k] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn signal_files_round_trip(data in prop::collection::vec(-1e3..1e3f64, 2..30)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("joints.csv");
        let set = joints(10_000.0, std::array::from_fn(|i| data.iter().map(|v| v / (i + 1) as f64).collect()));
        write_signals(&path, &set).unwrap();
        let back = load_signals(&path, CsvSchema::Joints).unwrap();
        for (a, b) in set.channels().iter().zip(back.channels()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300));
            }
        }
    }
}

#[test]
fn zero_link_errors_leave_nominal_kinematics() {
    let g = MachineGeometry::default();
    let p = JointPose::from_degrees(12.0, -40.0, 7.0, 25.0, -70.0).unwrap();
    let a = dkt(&p, &g).unwrap();
    let b = dkt_with_errors(&p, &g, &LinkErrorVector::zero()).unwrap();
    assert_eq!(a, b);
    assert_eq!(Vector3::zeros(), b - a);
}
