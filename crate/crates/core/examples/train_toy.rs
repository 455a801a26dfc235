//! Trains a small MLP through the RNS engine next to a full-precision twin.

use rns_photonic::gemm::EngineConfig;
use rns_photonic::training::data::DatasetConfig;
use rns_photonic::training::{train_toy, NetConfig};

fn main() -> rns_photonic::Result<()> {
    let data = DatasetConfig::default();
    let net = NetConfig::default();
    for b_m in [1, 2, 4, 8] {
        let r = train_toy(&data, &net, &EngineConfig::new(b_m, 16), 15, 11)?;
        let last = r.last().expect("at least one epoch");
        println!(
            "b_m = {b_m}: validation accuracy {:.3} (full precision {:.3}), loss {:.4} ({:.4})",
            last.engine_val_acc, last.fp_val_acc, last.engine_val_loss, last.fp_val_loss
        );
    }
    Ok(())
}
