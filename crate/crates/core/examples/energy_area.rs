//! Energy per MAC, peak power and area at the default configuration.

use rns_photonic::perf::energy::{
    area_report, cycle_energy, steady_state_energy_per_mac, streaming_power,
};
use rns_photonic::perf::AcceleratorConfig;

fn main() -> rns_photonic::Result<()> {
    let cfg = AcceleratorConfig::default();
    println!("k = {}, moduli = {:?}", cfg.k(), cfg.moduli()?.moduli());
    println!("energy per cycle per unit (pJ):");
    for (name, v) in &cycle_energy(&cfg)?.components {
        println!("  {name:<12} {v:10.3}");
    }
    println!(
        "steady-state energy/MAC: {:.4} pJ",
        steady_state_energy_per_mac(&cfg)?
    );
    let p = streaming_power(&cfg)?;
    println!("peak power: {:.2} W", p.total);
    for (name, s) in p.shares() {
        println!("  {name:<12} {:6.2}%", 100.0 * s);
    }
    let a = area_report(&cfg)?;
    println!(
        "area: photonic {:.1} mm^2, electronic {:.1} mm^2, total {:.1} mm^2, stacked {:.1} mm^2",
        a.photonic.total, a.electronic.total, a.total_mm2, a.stacked_mm2
    );
    for (name, v) in a.photonic.components.iter().chain(&a.electronic.components) {
        println!("  {name:<12} {v:9.3} mm^2");
    }
    Ok(())
}
