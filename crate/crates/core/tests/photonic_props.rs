use std::f64::consts::TAU;

use proptest::prelude::*;
use rns_photonic::photonic::{
    detect_phase, detector_power_for_snr, detector_power_from_laser, digit_phase_shifts, link_loss,
    link_loss_on, mdpu_phase, mmu_phase, required_laser_power, residue_bits, DeviceSpecs, LossPath,
    NoiseParams, PhaseDetector,
};

fn modulus() -> impl Strategy<Value = u64> {
    prop_oneof![
        Just(15u64),
        Just(16),
        Just(17),
        Just(31),
        Just(32),
        Just(33),
        Just(63),
        Just(64),
        Just(65)
    ]
}

fn vectors() -> impl Strategy<Value = (u64, Vec<u64>, Vec<u64>)> {
    (modulus(), 1usize..=64).prop_flat_map(|(m, n)| {
        (
            Just(m),
            prop::collection::vec(0..m, n),
            prop::collection::vec(0..m, n),
        )
    })
}

proptest! {
    #[test]
    fn noiseless_detection_equals_modular_dot((m, xs, ws) in vectors()) {
        let specs = DeviceSpecs::default();
        let noise = NoiseParams::default();
        let phase = mdpu_phase(&xs, &ws, m).unwrap();
        prop_assert!((0.0..TAU).contains(&phase));
        let want = xs.iter().zip(&ws).map(|(x, w)| (x * w) as u128).sum::<u128>() % m as u128;
        let got = detect_phase(phase, detector_power_for_snr(m, &noise, &specs), m, &noise, &specs).unwrap();
        prop_assert_eq!(got as u128, want);
    }

    #[test]
    fn mmu_phase_is_product_mod_m(m in modulus(), x in 0u64..65, w in 0u64..65) {
        prop_assume!(x < m && w < m);
        let unit = TAU / m as f64;
        let total: f64 = digit_phase_shifts(x, w, m).iter().sum();
        prop_assert!((total / unit - (x * w) as f64).abs() < 1e-6);
        prop_assert_eq!(digit_phase_shifts(x, w, m).len() as u32, residue_bits(m));
        let wrapped = mmu_phase(x, w, m);
        prop_assert!((wrapped / unit - ((x * w) % m) as f64).abs() < 1e-6 || (x * w) % m == 0 && (TAU - wrapped) / unit < 1e-6);
    }

    #[test]
    fn laser_power_grows_with_group(m in modulus(), g in 1usize..64) {
        let s = DeviceSpecs::default();
        let n = NoiseParams::default();
        prop_assert!(required_laser_power(m, g + 1, &s, &n) > required_laser_power(m, g, &s, &n));
        prop_assert!(link_loss_on(g, m, &s, LossPath::WorstCase) <= link_loss_on(g, m, &s, LossPath::Average));
        prop_assert!(link_loss_on(g, m, &s, LossPath::Average) <= link_loss_on(g, m, &s, LossPath::AllCoupled));
        let p = required_laser_power(m, g, &s, &n);
        let back = detector_power_from_laser(p, m, g, &s);
        prop_assert!((back / detector_power_for_snr(m, &n, &s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_power_meets_snr(m in 2u64..200) {
        let s = DeviceSpecs::default();
        let n = NoiseParams::default();
        let det = PhaseDetector::new(detector_power_for_snr(m, &n, &s), m, &n, &s).unwrap();
        prop_assert!((det.snr() / m as f64 - 1.0).abs() < 1e-9);
        let below = PhaseDetector::new(0.9 * detector_power_for_snr(m, &n, &s), m, &n, &s).unwrap();
        prop_assert!(below.snr() < m as f64);
    }
}

#[test]
fn link_loss_at_reference_group() {
    let s = DeviceSpecs::default();
    let l = link_loss(16, 33, &s);
    // 16 x (shifter 0.919 dB + 12 through-port MRRs + 2 bends) + coupler
    let expected = 0.2 + 16.0 * (1.6 * 0.5746 + 12.0 * 0.02 + 2.0 * 0.01);
    assert!((l - expected).abs() < 0.01, "{l} vs {expected}");
}

#[test]
fn invalid_operands_rejected() {
    assert!(mdpu_phase(&[1, 2], &[3], 33).is_err());
    assert!(mdpu_phase(&[33], &[1], 33).is_err());
    let s = DeviceSpecs::default();
    let n = NoiseParams::default();
    assert!(PhaseDetector::new(0.0, 33, &n, &s).is_err());
    assert!(PhaseDetector::new(f64::NAN, 33, &n, &s).is_err());
}
