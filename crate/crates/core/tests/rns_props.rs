mod common;

use proptest::prelude::*;
use rns_photonic::rns::{
    fold_fermat, fold_mersenne, min_k, mod_inverse, range_sufficient, ModulusSet, ResidueTensor,
};
use rns_photonic::Error;

fn k_and_value() -> impl Strategy<Value = (u32, i64)> {
    (2u32..=12).prop_flat_map(|k| {
        let psi = (((1i64 << (3 * k)) - (1i64 << k)) - 1) / 2;
        (Just(k), -psi..=psi)
    })
}

proptest! {
    #[test]
    fn round_trip_matches_bruteforce_crt((k, x) in k_and_value()) {
        let set = ModulusSet::special(k).unwrap();
        let r = set.forward_convert(x).unwrap();
        prop_assert_eq!(&r, &set.forward_convert_special(x).unwrap());
        for (ri, m) in r.iter().zip(set.moduli()) {
            prop_assert_eq!(*ri as i64, x.rem_euclid(*m as i64));
        }
        prop_assert_eq!(set.reverse_convert_crt(&r).unwrap(), x);
        prop_assert_eq!(set.reverse_convert_special(&r).unwrap(), x);
        if k <= 6 {
            prop_assert_eq!(common::crt_bruteforce(&r, set.moduli()), x);
        }
    }

    #[test]
    fn residue_arithmetic_is_homomorphic(k in 3u32..=8, a in -500i64..500, b in -500i64..500) {
        let set = ModulusSet::special(k).unwrap();
        prop_assume!((a * b).abs() <= set.psi() && (a + b).abs() <= set.psi());
        let ra = set.forward_convert(a).unwrap();
        let rb = set.forward_convert(b).unwrap();
        let prod: Vec<u64> = ra.iter().zip(&rb).zip(set.moduli()).map(|((x, y), m)| x * y % m).collect();
        let sum: Vec<u64> = ra.iter().zip(&rb).zip(set.moduli()).map(|((x, y), m)| (x + y) % m).collect();
        prop_assert_eq!(set.reverse_convert_special(&prod).unwrap(), a * b);
        prop_assert_eq!(set.reverse_convert_special(&sum).unwrap(), a + b);
    }

    #[test]
    fn residue_mac_recovers_dot(k in 5u32..=8, xs in prop::collection::vec((-15i64..=15, -15i64..=15), 1..16)) {
        let set = ModulusSet::special(k).unwrap();
        let a: Vec<Vec<u64>> = xs.iter().map(|(x, _)| set.forward_convert(*x).unwrap()).collect();
        let b: Vec<Vec<u64>> = xs.iter().map(|(_, y)| set.forward_convert(*y).unwrap()).collect();
        let dot: i64 = xs.iter().map(|(x, y)| x * y).sum();
        let r = set.residue_mac(&a, &b).unwrap();
        prop_assert_eq!(set.reverse_convert_special(&r).unwrap(), dot);
    }

    #[test]
    fn folds_match_remainder(v in any::<u64>(), k in 2u32..=20) {
        prop_assert_eq!(fold_mersenne(v, k), v % ((1u64 << k) - 1));
        prop_assert_eq!(fold_fermat(v, k), v % ((1u64 << k) + 1));
    }

    #[test]
    fn inverse_is_inverse(a in 1u64..10_000, m in 2u64..10_000) {
        match mod_inverse(a, m) {
            Some(t) => prop_assert_eq!((a as u128 * t as u128) % m as u128, 1),
            None => prop_assert!(gcd(a, m) != 1),
        }
    }

    #[test]
    fn min_k_is_tight(b_m in 1u32..=10, log_g in 0u32..=8) {
        let g = 1usize << log_g;
        let k = min_k(b_m, g);
        let need = 2.0 * (b_m as f64 + 1.0) + (g as f64).log2() - 1.0;
        let bits = |k: u32| (((1u128 << (3 * k)) - (1u128 << k)) as f64).log2();
        prop_assert!(bits(k) >= need);
        prop_assert!(k == 2 || bits(k - 1) < need);
        prop_assert!(range_sufficient(k, b_m, g) && !(k > 2 && range_sufficient(k - 1, b_m, g)));
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[test]
fn out_of_range_and_bad_residues_rejected() {
    let set = ModulusSet::special(5).unwrap();
    assert!(matches!(
        set.forward_convert(set.psi() + 1),
        Err(Error::OutOfRange { .. })
    ));
    assert!(matches!(
        set.reverse_convert_crt(&[31, 0, 0]),
        Err(Error::InvalidResidue { .. })
    ));
    assert!(matches!(
        set.reverse_convert_special(&[1, 2]),
        Err(Error::ResidueCount { .. })
    ));
    assert!(matches!(ModulusSet::special(1), Err(Error::InvalidK(1))));
    assert!(ModulusSet::new(&[6, 9]).is_err());
}

#[test]
fn general_set_agrees_with_special() {
    let special = ModulusSet::special(4).unwrap();
    let general = ModulusSet::new(&[15, 16, 17]).unwrap();
    assert_eq!(special.crt_weights(), general.crt_weights());
    for x in -special.psi()..=special.psi() {
        let r = general.forward_convert(x).unwrap();
        assert_eq!(
            special.reverse_convert_special(&r).unwrap(),
            general.reverse_convert_crt(&r).unwrap()
        );
    }
}

#[test]
fn residue_tensor_matvec() {
    let set = ModulusSet::special(5).unwrap();
    let w = [3i64, -2, 7, 1, 0, -5];
    let x = [4i64, -1, 2];
    let wt = ResidueTensor::from_integers(&set, 2, 3, &w).unwrap();
    let xt = ResidueTensor::from_integers(&set, 1, 3, &x).unwrap();
    let y = wt.matvec(&set, &xt).unwrap().to_integers(&set);
    assert_eq!(y, vec![3 * 4 + 2 + 14, 4 - 10]);
}
