//! Photonic training step against systolic arrays sized for equal energy
//! per MAC or equal area.

use rns_photonic::perf::{
    compare, energy_report, AcceleratorConfig, IsoMode, Schedule, SystolicConfig, WorkloadSpec,
};

fn main() -> rns_photonic::Result<()> {
    let cfg = AcceleratorConfig::default();
    let sys = SystolicConfig::default();
    for name in ["alexnet", "resnet18"] {
        let w = WorkloadSpec::preset(name)?;
        let photonic = energy_report(&w, Schedule::Opt2, &cfg)?;
        println!("{name}: photonic step {:.3} ms", photonic.latency_ns * 1e-6);
        for f in &sys.formats {
            for mode in [IsoMode::IsoEnergy, IsoMode::IsoArea] {
                if mode == IsoMode::IsoArea && f.mm2_per_mac.is_none() {
                    continue;
                }
                let c = compare(&w, Schedule::Opt2, &photonic, &f.name, mode, &sys, &cfg)?;
                println!(
                    "  {:<6} {:<10} {:>8.2} arrays  speedup {:>8.2}x  EDP {:>9.2}x",
                    c.format,
                    format!("{mode:?}"),
                    c.arrays,
                    c.speedup,
                    c.edp_ratio
                );
            }
        }
    }
    Ok(())
}
