//! DNN workloads as ordered layer shapes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::{conv_as_gemm, linear_as_gemm, ConvShape, LinearShape};

/// The three GEMMs of one training step of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GemmRole {
    /// `O = W X`.
    Forward,
    /// `dX = W^T dO`.
    InputGrad,
    /// `dW = dO X^T`.
    WeightGrad,
}

impl GemmRole {
    pub const ALL: [GemmRole; 3] = [GemmRole::Forward, GemmRole::InputGrad, GemmRole::WeightGrad];

    pub fn as_str(&self) -> &'static str {
        match self {
            GemmRole::Forward => "forward",
            GemmRole::InputGrad => "input_grad",
            GemmRole::WeightGrad => "weight_grad",
        }
    }
}

/// `(M x K) (K x N)` product dims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl GemmDims {
    pub fn new(m: usize, k: usize, n: usize) -> Self {
        Self { m, k, n }
    }

    pub fn macs(&self) -> u64 {
        self.m as u64 * self.k as u64 * self.n as u64
    }

    /// Dims of the three training GEMMs for forward dims `(M, K, N)`:
    /// forward `(M, K, N)`, input gradient `(K, M, N)`, weight gradient
    /// `(M, N, K)`.
    pub fn training(self) -> [(GemmRole, GemmDims); 3] {
        let GemmDims { m, k, n } = self;
        [
            (GemmRole::Forward, GemmDims::new(m, k, n)),
            (GemmRole::InputGrad, GemmDims::new(k, m, n)),
            (GemmRole::WeightGrad, GemmDims::new(m, n, k)),
        ]
    }
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

/// One layer of a workload file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Square-kernel convolution.
    Conv {
        name: String,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        h_out: usize,
        w_out: usize,
        /// Identical consecutive layers.
        #[serde(default = "one", skip_serializing_if = "is_one")]
        repeat: usize,
    },
    Linear {
        name: String,
        inputs: usize,
        outputs: usize,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        repeat: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. } | LayerSpec::Linear { name, .. } => name,
        }
    }

    pub fn repeat(&self) -> usize {
        match self {
            LayerSpec::Conv { repeat, .. } | LayerSpec::Linear { repeat, .. } => *repeat,
        }
    }

    /// Forward GEMM dims at `batch`.
    pub fn gemm_dims(&self, batch: usize) -> GemmDims {
        let (m, k, n) = match *self {
            LayerSpec::Conv {
                c_in,
                c_out,
                kernel,
                h_out,
                w_out,
                ..
            } => conv_as_gemm(
                &ConvShape {
                    c_in,
                    c_out,
                    k_h: kernel,
                    k_w: kernel,
                    h_out,
                    w_out,
                },
                batch,
            ),
            LayerSpec::Linear {
                inputs, outputs, ..
            } => linear_as_gemm(&LinearShape { inputs, outputs }, batch),
        };
        GemmDims::new(m, k, n)
    }

    fn validate(&self) -> Result<()> {
        let dims: Vec<usize> = match *self {
            LayerSpec::Conv {
                c_in,
                c_out,
                kernel,
                h_out,
                w_out,
                repeat,
                ..
            } => vec![c_in, c_out, kernel, h_out, w_out, repeat],
            LayerSpec::Linear {
                inputs,
                outputs,
                repeat,
                ..
            } => vec![inputs, outputs, repeat],
        };
        if dims.contains(&0) {
            return Err(Error::Schema(format!(
                "layer '{}' has a zero dimension",
                self.name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    pub batch: usize,
    pub layers: Vec<LayerSpec>,
}

pub const PRESETS: [&str; 4] = ["alexnet", "resnet18", "resnet50", "vgg16"];

impl WorkloadSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let w: Self =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("workload: {e}")))?;
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// A bundled workload by name.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "alexnet" => include_str!("../../workloads/alexnet.json"),
            "resnet18" => include_str!("../../workloads/resnet18.json"),
            "resnet50" => include_str!("../../workloads/resnet50.json"),
            "vgg16" => include_str!("../../workloads/vgg16.json"),
            other => {
                return Err(Error::Config(format!(
                    "unknown workload preset '{other}' (available: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Self::from_json_str(text)
    }

    /// A preset name or a path to a workload file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESETS.contains(&name_or_path) {
            Self::preset(name_or_path)
        } else {
            Self::load(name_or_path)
        }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Schema("workload batch must be positive".into()));
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    /// Layers with `repeat` expanded, named `name`, `name#2`, ...
    pub fn expanded(&self) -> Vec<(String, GemmDims)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            let dims = layer.gemm_dims(self.batch);
            for r in 0..layer.repeat() {
                let name = if r == 0 {
                    layer.name().to_string()
                } else {
                    format!("{}#{}", layer.name(), r + 1)
                };
                out.push((name, dims));
            }
        }
        out
    }

    /// MACs of one full training step (three GEMMs per layer).
    pub fn training_macs(&self) -> u64 {
        self.expanded().iter().map(|(_, d)| 3 * d.macs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load() {
        for p in PRESETS {
            let w = WorkloadSpec::preset(p).unwrap();
            assert_eq!(w.name, p);
            assert_eq!(w.batch, 256);
        }
        assert!(WorkloadSpec::preset("lenet").is_err());
        assert_eq!(
            WorkloadSpec::preset("resnet18").unwrap().expanded().len(),
            21
        );
        assert_eq!(
            WorkloadSpec::preset("resnet50").unwrap().expanded().len(),
            54
        );
        assert_eq!(WorkloadSpec::preset("vgg16").unwrap().expanded().len(), 16);
    }

    #[test]
    fn training_dims() {
        let d = GemmDims::new(64, 576, 3136).training();
        assert_eq!(d[1].1, GemmDims::new(576, 64, 3136));
        assert_eq!(d[2].1, GemmDims::new(64, 3136, 576));
        assert!(d.iter().all(|(_, g)| g.macs() == 64 * 576 * 3136));
    }

    #[test]
    fn schema_errors() {
        assert!(WorkloadSpec::from_json_str(
            r#"{"name":"x","batch":1,"layers":[{"kind":"pool"}]}"#
        )
        .is_err());
        assert!(WorkloadSpec::from_json_str(
            r#"{"name":"x","batch":1,"layers":[{"kind":"linear","name":"a","inputs":0,"outputs":2}]}"#
        )
        .is_err());
        assert!(WorkloadSpec::from_json_str(
            r#"{"name":"x","batch":1,"layers":[{"kind":"linear","name":"a","inputs":3,"outputs":2,"extra":1}]}"#
        )
        .is_err());
        let ok = WorkloadSpec::from_json_str(
            r#"{"name":"x","batch":2,"layers":[{"kind":"linear","name":"a","inputs":3,"outputs":2}]}"#,
        )
        .unwrap();
        assert_eq!(ok.layers[0].gemm_dims(2), GemmDims::new(2, 3, 2));
    }
}
