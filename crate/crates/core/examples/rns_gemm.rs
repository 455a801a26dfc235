//! A tiled RNS GEMM in ideal and noisy mode against its oracles.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rns_photonic::gemm::{dequantized_product, full_precision, EngineConfig, GemmEngine};

fn main() -> rns_photonic::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Array2::from_shape_fn((48, 100), |_| rng.gen_range(-1.0..1.0));
    let b = Array2::from_shape_fn((100, 20), |_| rng.gen_range(-1.0..1.0));
    let cfg = EngineConfig::new(4, 16);
    let engine = GemmEngine::new(cfg)?;
    let out = engine.gemm(a.view(), b.view())?;
    let oracle = dequantized_product(a.view(), b.view(), cfg.format())?;
    let exact = full_precision(a.view(), b.view());
    let max = |x: &Array2<f64>, y: &Array2<f64>| {
        x.iter()
            .zip(y)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
    };
    let plan = &out.diagnostics.plan;
    println!(
        "moduli {:?}, {} tiles, {:.1}% useful",
        engine.moduli_set().moduli(),
        plan.tiles(),
        100.0 * plan.useful_fraction()
    );
    println!(
        "ideal vs dequantized oracle: max diff {:e}",
        max(&out.output, &oracle)
    );
    println!(
        "ideal vs full precision:     max diff {:.4}",
        max(&out.output, &exact)
    );
    for margin in [1.0, 4.0] {
        let noisy = GemmEngine::new(cfg.with_noise(margin, 3))?.gemm(a.view(), b.view())?;
        println!(
            "noisy, margin {margin}: {} of {} residues wrong, max diff {:.4}",
            noisy.diagnostics.residue_mismatches,
            noisy.diagnostics.residue_detections,
            max(&noisy.output, &oracle)
        );
    }
    let bad = EngineConfig::new(4, 16).with_k(4).validate();
    println!("k = 4 with b_m = 4, g = 16: {}", bad.unwrap_err());
    Ok(())
}
