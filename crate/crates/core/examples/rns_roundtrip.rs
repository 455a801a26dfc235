//! Residue conversion on the special moduli set and the range check that
//! picks `k` for a BFP format.

use rns_photonic::rns::{min_k, ModulusSet};

fn main() -> rns_photonic::Result<()> {
    let set = ModulusSet::special(5)?;
    println!(
        "moduli {:?}, M = {}, psi = {}",
        set.moduli(),
        set.range(),
        set.psi()
    );
    for w in set.crt_weights() {
        println!("  M_i = {:5}  T_i = {:2}", w.partial_product, w.inverse);
    }
    for x in [0, 1, -1, 12345, -16367, set.psi()] {
        let r = set.forward_convert_special(x)?;
        let back = set.reverse_convert_special(&r)?;
        println!("{x:>7} -> {r:?} -> {back}");
        assert_eq!(back, set.reverse_convert_crt(&r)?);
    }
    // products add and multiply residue-wise
    let a = set.forward_convert(-37)?;
    let b = set.forward_convert(215)?;
    let p: Vec<u64> = a
        .iter()
        .zip(&b)
        .zip(set.moduli())
        .map(|((x, y), m)| x * y % m)
        .collect();
    println!("-37 * 215 = {}", set.reverse_convert_special(&p)?);
    for b_m in 3..=5 {
        println!("b_m = {b_m}, g = 16 -> smallest k = {}", min_k(b_m, 16));
    }
    Ok(())
}
