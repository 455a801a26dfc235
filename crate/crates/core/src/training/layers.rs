//! Layers whose GEMMs run through a pluggable backend.
//!
//! Activations are `features x batch`, one sample per column, so every
//! layer computes `O = W X` with the weight matrix on the left.

use std::cell::Cell;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::{ConvShape, EngineConfig, GemmEngine};

/// Where layer GEMMs are evaluated.
#[derive(Debug)]
pub enum Backend {
    /// Plain `f64` products.
    FullPrecision,
    /// The BFP + RNS engine. Noisy engines draw a fresh seed per GEMM.
    Rns {
        engine: Box<GemmEngine>,
        calls: Cell<u64>,
    },
}

impl Backend {
    pub fn rns(cfg: EngineConfig) -> Result<Self> {
        Ok(Backend::Rns {
            engine: Box::new(GemmEngine::new(cfg)?),
            calls: Cell::new(0),
        })
    }

    pub fn matmul(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Backend::FullPrecision => {
                if a.ncols() != b.nrows() {
                    return Err(Error::Shape(format!(
                        "inner dimensions differ: {:?} times {:?}",
                        a.dim(),
                        b.dim()
                    )));
                }
                Ok(a.dot(&b))
            }
            Backend::Rns { engine, calls } => {
                let n = calls.get();
                calls.set(n + 1);
                let seed = engine
                    .config()
                    .seed
                    .wrapping_add(n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                Ok(engine.gemm_seeded(a, b, seed)?.output)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => x.mapv(|v| v.max(0.0)),
            Activation::Identity => x.clone(),
        }
    }

    /// `upstream * f'(pre)`.
    pub fn backprop(&self, pre: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => {
                let mut g = upstream.clone();
                g.zip_mut_with(pre, |d, &p| {
                    if p <= 0.0 {
                        *d = 0.0
                    }
                });
                g
            }
            Activation::Identity => upstream.clone(),
        }
    }
}

/// Stride-1 convolution over `(channels, height, width)` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub padding: usize,
    pub h_in: usize,
    pub w_in: usize,
}

impl Conv2d {
    pub fn output_hw(&self) -> (usize, usize) {
        (
            self.h_in + 2 * self.padding + 1 - self.kernel,
            self.w_in + 2 * self.padding + 1 - self.kernel,
        )
    }

    pub fn shape(&self) -> ConvShape {
        let (h_out, w_out) = self.output_hw();
        ConvShape {
            c_in: self.c_in,
            c_out: self.c_out,
            k_h: self.kernel,
            k_w: self.kernel,
            h_out,
            w_out,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.kernel == 0 {
            return Err(Error::Config("convolution dims must be positive".into()));
        }
        if self.h_in + 2 * self.padding < self.kernel || self.w_in + 2 * self.padding < self.kernel
        {
            return Err(Error::Config(
                "convolution kernel larger than padded input".into(),
            ));
        }
        Ok(())
    }

    /// Unfolds `x` (`c_in h w x batch`) into `(c_in k k) x (batch h_out w_out)`.
    pub fn im2col(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (h_out, w_out) = self.output_hw();
        let batch = x.ncols();
        let k = self.kernel;
        let p = self.padding as isize;
        let mut cols = Array2::zeros((self.c_in * k * k, batch * h_out * w_out));
        for b in 0..batch {
            for c in 0..self.c_in {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = (c * k + ky) * k + kx;
                        for oy in 0..h_out {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= self.h_in as isize {
                                continue;
                            }
                            for ox in 0..w_out {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= self.w_in as isize {
                                    continue;
                                }
                                let src = (c * self.h_in + iy as usize) * self.w_in + ix as usize;
                                cols[[row, (b * h_out + oy) * w_out + ox]] = x[[src, b]];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Conv2d::im2col`]: scatters column gradients back onto
    /// the input layout.
    pub fn col2im(&self, cols: &Array2<f64>, batch: usize) -> Array2<f64> {
        let (h_out, w_out) = self.output_hw();
        let k = self.kernel;
        let p = self.padding as isize;
        let mut x = Array2::zeros((self.c_in * self.h_in * self.w_in, batch));
        for b in 0..batch {
            for c in 0..self.c_in {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = (c * k + ky) * k + kx;
                        for oy in 0..h_out {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= self.h_in as isize {
                                continue;
                            }
                            for ox in 0..w_out {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= self.w_in as isize {
                                    continue;
                                }
                                let dst = (c * self.h_in + iy as usize) * self.w_in + ix as usize;
                                x[[dst, b]] += cols[[row, (b * h_out + oy) * w_out + ox]];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    /// `c_out x (batch hw)` GEMM output to `(c_out hw) x batch` features.
    fn pack_features(&self, y: &Array2<f64>, batch: usize) -> Array2<f64> {
        let (h, w) = self.output_hw();
        let hw = h * w;
        Array2::from_shape_fn((self.c_out * hw, batch), |(f, b)| {
            y[[f / hw, b * hw + f % hw]]
        })
    }

    fn unpack_features(&self, f: &Array2<f64>) -> Array2<f64> {
        let (h, w) = self.output_hw();
        let hw = h * w;
        let batch = f.ncols();
        Array2::from_shape_fn((self.c_out, batch * hw), |(c, j)| {
            f[[c * hw + j % hw, j / hw]]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Linear { inputs: usize, outputs: usize },
    Conv(Conv2d),
}

/// One layer with full-precision master parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    /// `outputs x fan_in` (`c_out x c_in k k` for convolutions).
    pub weights: Array2<f64>,
    /// One bias per output feature (per channel for convolutions).
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Values a layer keeps for its backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    /// Layer input, `features x batch`.
    pub input: Array2<f64>,
    /// Unfolded input for convolutions.
    pub cols: Option<Array2<f64>>,
    /// Pre-activation output.
    pub pre: Array2<f64>,
}

impl Layer {
    /// He-normal weights and zero bias.
    pub fn new<R: Rng>(kind: LayerKind, activation: Activation, rng: &mut R) -> Result<Self> {
        let (rows, fan_in) = match kind {
            LayerKind::Linear { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::Config("linear dims must be positive".into()));
                }
                (outputs, inputs)
            }
            LayerKind::Conv(c) => {
                c.validate()?;
                (c.c_out, c.c_in * c.kernel * c.kernel)
            }
        };
        let init = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        Ok(Self {
            kind,
            weights: Array2::from_shape_simple_fn((rows, fan_in), || init.sample(rng)),
            bias: Array1::zeros(rows),
            activation,
        })
    }

    pub fn input_features(&self) -> usize {
        match self.kind {
            LayerKind::Linear { inputs, .. } => inputs,
            LayerKind::Conv(c) => c.c_in * c.h_in * c.w_in,
        }
    }

    pub fn output_features(&self) -> usize {
        match self.kind {
            LayerKind::Linear { outputs, .. } => outputs,
            LayerKind::Conv(c) => {
                let (h, w) = c.output_hw();
                c.c_out * h * w
            }
        }
    }

    /// Returns the activated output and the backward cache.
    pub fn forward(
        &self,
        x: ArrayView2<'_, f64>,
        backend: &Backend,
    ) -> Result<(Array2<f64>, LayerCache)> {
        if x.nrows() != self.input_features() {
            return Err(Error::Shape(format!(
                "layer expects {} input features, got {}",
                self.input_features(),
                x.nrows()
            )));
        }
        let (pre, cols) = match self.kind {
            LayerKind::Linear { .. } => {
                let mut o = backend.matmul(self.weights.view(), x)?;
                o += &self.bias.view().insert_axis(Axis(1));
                (o, None)
            }
            LayerKind::Conv(c) => {
                let cols = c.im2col(x);
                let mut y = backend.matmul(self.weights.view(), cols.view())?;
                y += &self.bias.view().insert_axis(Axis(1));
                (c.pack_features(&y, x.ncols()), Some(cols))
            }
        };
        let out = self.activation.apply(&pre);
        Ok((
            out,
            LayerCache {
                input: x.to_owned(),
                cols,
                pre,
            },
        ))
    }

    /// Gradients `(dX, dW, db)` from the gradient w.r.t. this layer's
    /// activated output.
    pub fn backward(
        &self,
        cache: &LayerCache,
        upstream: &Array2<f64>,
        backend: &Backend,
    ) -> Result<(Array2<f64>, Array2<f64>, Array1<f64>)> {
        let d_pre = self.activation.backprop(&cache.pre, upstream);
        match self.kind {
            LayerKind::Linear { .. } => {
                let dw = backend.matmul(d_pre.view(), cache.input.t())?;
                let dx = backend.matmul(self.weights.t(), d_pre.view())?;
                let db = d_pre.sum_axis(Axis(1));
                Ok((dx, dw, db))
            }
            LayerKind::Conv(c) => {
                let cols = cache
                    .cols
                    .as_ref()
                    .ok_or_else(|| Error::Shape("convolution cache lacks unfolded input".into()))?;
                let dy = c.unpack_features(&d_pre);
                let dw = backend.matmul(dy.view(), cols.t())?;
                let dcols = backend.matmul(self.weights.t(), dy.view())?;
                let db = dy.sum_axis(Axis(1));
                Ok((c.col2im(&dcols, cache.input.ncols()), dw, db))
            }
        }
    }
}

/// Reference convolution by direct summation, for cross-checking im2col.
pub fn conv_direct(
    c: &Conv2d,
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    x: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (h_out, w_out) = c.output_hw();
    let k = c.kernel;
    let batch = x.ncols();
    let mut out = Array2::zeros((c.c_out * h_out * w_out, batch));
    for b in 0..batch {
        for co in 0..c.c_out {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut acc = bias[co];
                    for ci in 0..c.c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy + ky) as isize - c.padding as isize;
                                let ix = (ox + kx) as isize - c.padding as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= c.h_in as isize
                                    || ix >= c.w_in as isize
                                {
                                    continue;
                                }
                                let w = weights[[co, (ci * k + ky) * k + kx]];
                                acc +=
                                    w * x[[(ci * c.h_in + iy as usize) * c.w_in + ix as usize, b]];
                            }
                        }
                    }
                    out[[(co * h_out + oy) * w_out + ox, b]] = acc;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv() -> Conv2d {
        Conv2d {
            c_in: 2,
            c_out: 3,
            kernel: 3,
            padding: 1,
            h_in: 5,
            w_in: 4,
        }
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = conv();
        let layer = Layer::new(LayerKind::Conv(c), Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((2 * 5 * 4, 3), || rng.gen_range(-1.0..1.0));
        let (out, _) = layer.forward(x.view(), &Backend::FullPrecision).unwrap();
        let want = conv_direct(&c, &layer.weights, &layer.bias, x.view());
        assert!((&out - &want).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = conv();
        let x = Array2::from_shape_simple_fn((40, 2), || rng.gen_range(-1.0..1.0));
        let cols = c.im2col(x.view());
        let y = Array2::from_shape_simple_fn(cols.dim(), || rng.gen_range(-1.0..1.0));
        let lhs: f64 = (&cols * &y).sum();
        let rhs: f64 = (&x * &c.col2im(&y, 2)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn relu_backprop_masks() {
        let pre = ndarray::array![[-1.0, 2.0], [0.0, 3.0]];
        let up = ndarray::array![[5.0, 5.0], [5.0, 5.0]];
        let g = Activation::Relu.backprop(&pre, &up);
        assert_eq!(g, ndarray::array![[0.0, 5.0], [0.0, 5.0]]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Layer::new(
            LayerKind::Linear {
                inputs: 3,
                outputs: 2,
            },
            Activation::Relu,
            &mut rng,
        )
        .unwrap();
        let x = Array2::zeros((4, 1));
        assert!(l.forward(x.view(), &Backend::FullPrecision).is_err());
    }
}
