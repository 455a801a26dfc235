//! Small classification datasets.
//!
//! Samples are stored one per row of `features`. Image sets keep their
//! `(channels, height, width)` so convolutional layers can unflatten them.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGE_MAGIC: &[u8; 4] = b"RNSI";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// `(channels, height, width)` for image data.
    pub image_shape: Option<(usize, usize, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            image_shape: self.image_shape,
        }
    }

    /// Shuffled train / validation split.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must lie in [0, 1), got {val_fraction}"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = (self.len() as f64 * val_fraction).round() as usize;
        let (val, train) = idx.split_at(n_val);
        Ok((self.subset(train), self.subset(val)))
    }
}

/// Which dataset to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Isotropic Gaussian clusters centered `separation` from the origin.
    Blobs {
        samples: usize,
        classes: usize,
        dim: usize,
        /// Distance of the centers from the origin.
        separation: f64,
        std_dev: f64,
    },
    /// Two interleaved half circles.
    Moons { samples: usize, noise: f64 },
    /// 1-channel square images of horizontal (class 0) or vertical
    /// (class 1) bars with pixel noise.
    Bars {
        samples: usize,
        size: usize,
        noise: f64,
    },
    /// Image set in the binary format of [`write_image_set`].
    ImageFile { path: String },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            samples: 400,
            classes: 2,
            dim: 8,
            separation: 4.0,
            std_dev: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn build(&self, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            DatasetConfig::Blobs {
                samples,
                classes,
                dim,
                separation,
                std_dev,
            } => gaussian_blobs(samples, classes, dim, separation, std_dev, &mut rng),
            DatasetConfig::Moons { samples, noise } => moons(samples, noise, &mut rng),
            DatasetConfig::Bars {
                samples,
                size,
                noise,
            } => bars(samples, size, noise, &mut rng),
            DatasetConfig::ImageFile { ref path } => load_image_set(path),
        }
    }
}

fn check_positive(what: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{what} must be positive")));
    }
    Ok(())
}

fn normal(std_dev: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std_dev)
        .map_err(|e| Error::Config(format!("invalid noise level {std_dev}: {e}")))
}

pub fn gaussian_blobs<R: Rng>(
    samples: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    std_dev: f64,
    rng: &mut R,
) -> Result<Dataset> {
    check_positive("samples", samples)?;
    check_positive("dim", dim)?;
    if classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    // Centers on distinct coordinate axes when there are enough dimensions,
    // otherwise random directions.
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            if classes <= dim {
                (0..dim)
                    .map(|d| if d == c { separation } else { 0.0 })
                    .collect()
            } else {
                let v: Vec<f64> = (0..dim).map(|_| unit.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x / norm * separation).collect()
            }
        })
        .collect();
    let spread = normal(std_dev)?;
    let mut features = Array2::zeros((samples, dim));
    let mut labels = Vec::with_capacity(samples);
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let c = i % classes;
        for (x, mu) in row.iter_mut().zip(&centers[c]) {
            *x = mu + spread.sample(rng);
        }
        labels.push(c);
    }
    Ok(Dataset {
        features,
        labels,
        classes,
        image_shape: None,
    })
}

pub fn moons<R: Rng>(samples: usize, noise: f64, rng: &mut R) -> Result<Dataset> {
    check_positive("samples", samples)?;
    let jitter = normal(noise)?;
    let mut features = Array2::zeros((samples, 2));
    let mut labels = Vec::with_capacity(samples);
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let c = i % 2;
        let t = rng.gen_range(0.0..PI);
        let (x, y) = if c == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        row[0] = x + jitter.sample(rng);
        row[1] = y + jitter.sample(rng);
        labels.push(c);
    }
    Ok(Dataset {
        features,
        labels,
        classes: 2,
        image_shape: None,
    })
}

pub fn bars<R: Rng>(samples: usize, size: usize, noise: f64, rng: &mut R) -> Result<Dataset> {
    check_positive("samples", samples)?;
    if size < 2 {
        return Err(Error::Config("bar images need size >= 2".into()));
    }
    let jitter = normal(noise)?;
    let mut features = Array2::zeros((samples, size * size));
    let mut labels = Vec::with_capacity(samples);
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let c = i % 2;
        let line = rng.gen_range(0..size);
        for y in 0..size {
            for x in 0..size {
                let on = if c == 0 { y == line } else { x == line };
                row[y * size + x] = if on { 1.0 } else { 0.0 } + jitter.sample(rng);
            }
        }
        labels.push(c);
    }
    Ok(Dataset {
        features,
        labels,
        classes: 2,
        image_shape: Some((1, size, size)),
    })
}

/// Writes an image set: magic `RNSI`, then little-endian `u32` count,
/// channels, height, width and classes, then per sample one label byte and
/// `channels * height * width` pixel bytes. Pixels are clamped to `[0, 1]`
/// and stored as `round(255 p)`.
pub fn write_image_set(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let (c, h, w) = data
        .image_shape
        .ok_or_else(|| Error::Config("dataset has no image shape".into()))?;
    if data.classes > 256 {
        return Err(Error::Config(
            "image sets support at most 256 classes".into(),
        ));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(IMAGE_MAGIC)?;
    for v in [data.len(), c, h, w, data.classes] {
        let v = u32::try_from(v)
            .map_err(|_| Error::Config("image set header field overflows u32".into()))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for (row, &label) in data.features.outer_iter().zip(&data.labels) {
        out.write_all(&[label as u8])?;
        let pixels: Vec<u8> = row
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.write_all(&pixels)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_image_set(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != IMAGE_MAGIC {
        return Err(Error::Schema(format!(
            "{} is not an image set",
            path.display()
        )));
    }
    let mut header = [0usize; 5];
    for h in header.iter_mut() {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *h = u32::from_le_bytes(b) as usize;
    }
    let [count, c, h, w, classes] = header;
    let pixels = c * h * w;
    if count == 0 || pixels == 0 || classes < 2 {
        return Err(Error::Schema(
            "image set header has empty dimensions".into(),
        ));
    }
    let mut features = Array2::zeros((count, pixels));
    let mut labels = Vec::with_capacity(count);
    let mut buf = vec![0u8; pixels + 1];
    for mut row in features.outer_iter_mut() {
        input.read_exact(&mut buf)?;
        let label = buf[0] as usize;
        if label >= classes {
            return Err(Error::Schema(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        labels.push(label);
        for (x, &p) in row.iter_mut().zip(&buf[1..]) {
            *x = p as f64 / 255.0;
        }
    }
    Ok(Dataset {
        features,
        labels,
        classes,
        image_shape: Some((c, h, w)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let cfg = DatasetConfig::default();
        let a = cfg.build(1).unwrap();
        let b = cfg.build(1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 400);
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 200);
        assert_ne!(a, cfg.build(2).unwrap());
    }

    #[test]
    fn split_sizes() {
        let d = DatasetConfig::Moons {
            samples: 100,
            noise: 0.1,
        }
        .build(0)
        .unwrap();
        let (tr, va) = d.split(0.25, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (75, 25));
        assert!(d.split(1.0, 0).is_err());
    }

    #[test]
    fn image_round_trip() {
        let d = DatasetConfig::Bars {
            samples: 10,
            size: 6,
            noise: 0.0,
        }
        .build(4)
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bars.bin");
        write_image_set(&path, &d).unwrap();
        let back = load_image_set(&path).unwrap();
        assert_eq!(back, d);
        std::fs::write(&path, b"nope").unwrap();
        assert!(load_image_set(&path).is_err());
    }

    #[test]
    fn rejects_degenerate_configs() {
        let cfg = DatasetConfig::Blobs {
            samples: 10,
            classes: 1,
            dim: 2,
            separation: 1.0,
            std_dev: 1.0,
        };
        assert!(cfg.build(0).is_err());
        assert!(DatasetConfig::Moons {
            samples: 0,
            noise: 0.1
        }
        .build(0)
        .is_err());
    }
}
