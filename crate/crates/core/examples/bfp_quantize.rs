//! Block floating point: one shared exponent per group, integer mantissas.

use rns_photonic::bfp::{mantissa_dot, quantization_error_bound, BfpGroup, Rounding};

fn main() -> rns_photonic::Result<()> {
    let x = [0.83, -0.41, 0.07, 0.0, -0.999, 0.5, 0.26, -0.13];
    for b_m in [2, 4, 8] {
        let g = BfpGroup::quantize(&x, b_m, Rounding::TowardZero)?;
        println!(
            "b_m = {b_m}: exponent {}, mantissas {:?}, error bound {:.4}",
            g.shared_exponent(),
            g.mantissas(),
            quantization_error_bound(&g)
        );
        println!("  dequantized {:?}", g.dequantize());
    }
    let a = BfpGroup::quantize(&x, 4, Rounding::TowardZero)?;
    let w = BfpGroup::quantize(
        &[0.5, 0.25, -1.0, 2.0, 0.125, -0.5, 1.5, 0.75],
        4,
        Rounding::TowardZero,
    )?;
    let dot = mantissa_dot(&a, &w);
    println!(
        "integer dot {dot} at scale 2^{} = {}",
        a.scale_exponent() + w.scale_exponent(),
        dot as f64 * 2f64.powi(a.scale_exponent() + w.scale_exponent())
    );
    Ok(())
}
