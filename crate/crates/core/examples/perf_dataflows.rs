//! Per-layer latency of a training step under each dataflow schedule.

use rns_photonic::perf::latency::spatial_utilization;
use rns_photonic::perf::{
    training_step_latency, AcceleratorConfig, Dataflow, Schedule, WorkloadSpec,
};

fn main() -> rns_photonic::Result<()> {
    let cfg = AcceleratorConfig::default();
    let w = WorkloadSpec::preset("alexnet")?;
    let schedules = [
        Schedule::Fixed(Dataflow::Df1),
        Schedule::Fixed(Dataflow::Df2),
        Schedule::Opt1,
        Schedule::Opt2,
    ];
    let results: Vec<_> = schedules
        .iter()
        .map(|&s| training_step_latency(&w, s, &cfg))
        .collect::<Result<_, _>>()?;
    print!("{:<8}", "layer");
    for s in &schedules {
        print!(" {:>10}", s.label());
    }
    println!("   (us)");
    let layers: Vec<Vec<(String, u64)>> = results.iter().map(|r| r.per_layer_ps()).collect();
    for i in 0..layers[0].len() {
        print!("{:<8}", layers[0][i].0);
        for l in &layers {
            print!(" {:>10.1}", l[i].1 as f64 * 1e-6);
        }
        println!();
    }
    for (s, r) in schedules.iter().zip(&results) {
        println!(
            "{:>5}: {:.3} ms, utilization {:.2}%",
            s.label(),
            r.total_ns() * 1e-6,
            100.0 * spatial_utilization(r, &cfg)?
        );
    }
    Ok(())
}
