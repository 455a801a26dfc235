//! Modular multiplication as optical phase: digit-serial shifts in one MMU,
//! accumulation along an MDPU, quadrature read-out.

use std::f64::consts::TAU;

use rns_photonic::photonic::{
    detect_phase, detector_power_for_snr, digit_phase_shifts, link_loss, mdpu_phase, mmu_length,
    required_laser_power, shifter_length, DeviceSpecs, NoiseParams,
};
use rns_photonic::rns::modular_dot;

fn main() -> rns_photonic::Result<()> {
    let specs = DeviceSpecs::default();
    let noise = NoiseParams::default();
    let m = 33;
    let unit = TAU / m as f64;
    let shifts: Vec<f64> = digit_phase_shifts(0b101, 0b011, m)
        .iter()
        .map(|p| p / unit)
        .collect();
    println!(
        "x = 101b, w = 011b: per-digit phases {shifts:?} unit phases, sum {}",
        shifts.iter().sum::<f64>()
    );
    println!("(5 * 3) mod 33 = 15");

    let xs = [3, 17, 32, 8, 0, 21];
    let ws = [30, 2, 9, 11, 5, 32];
    let phase = mdpu_phase(&xs, &ws, m)?;
    let power = detector_power_for_snr(m, &noise, &specs);
    let got = detect_phase(phase, power, m, &noise, &specs)?;
    println!(
        "MDPU phase {phase:.4} rad -> residue {got}, integer reference {}",
        modular_dot(&xs, &ws, m)
    );

    println!(
        "shifter length {:.4} mm, MMU length {:.4} mm",
        shifter_length(m, &specs),
        mmu_length(m, &specs)
    );
    for g in [4, 8, 16, 32] {
        println!(
            "g = {g:2}: link loss {:6.2} dB, laser {:.3} mW per channel",
            link_loss(g, m, &specs),
            1e3 * required_laser_power(m, g, &specs, &noise)
        );
    }
    Ok(())
}
