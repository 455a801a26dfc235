//! Residue mis-detection rate against laser power margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rns_photonic::photonic::{
    detector_power_for_snr, mdpu_phase, DeviceSpecs, NoiseParams, PhaseDetector,
};
use rns_photonic::rns::modular_dot;

fn main() -> rns_photonic::Result<()> {
    let specs = DeviceSpecs::default();
    let noise = NoiseParams::default();
    let m = 33;
    let trials = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for margin in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let det = PhaseDetector::new(
            margin * detector_power_for_snr(m, &noise, &specs),
            m,
            &noise,
            &specs,
        )?;
        let mut errors = 0;
        for _ in 0..trials {
            let xs: Vec<u64> = (0..16).map(|_| rng.gen_range(0..m)).collect();
            let ws: Vec<u64> = (0..16).map(|_| rng.gen_range(0..m)).collect();
            let phase = mdpu_phase(&xs, &ws, m)?;
            if det.detect_noisy(phase, &mut rng) != modular_dot(&xs, &ws, m) {
                errors += 1;
            }
        }
        println!(
            "margin {margin:>3}: SNR {:6.1}, {errors:6} errors in {trials} ({:.2e})",
            det.snr(),
            errors as f64 / trials as f64
        );
    }
    Ok(())
}
