use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::decode::{builtin_decoders, DecoderRegistry, GrayImage};
use crate::data::index::DatasetIndex;
use crate::error::{Error, Result};
use crate::graph::INPUT_SHAPE;
use crate::tensor::Tensor;

/// Side length of every model input.
pub const SAMPLE_SIDE: usize = INPUT_SHAPE[0];

/// A normalized `(224, 224, 1)` image with values in `[0, 1]` and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub pixels: Tensor<f32>,
    pub label: usize,
}

impl ImageSample {
    /// Wraps pixels after checking the shape and range.
    pub fn new(pixels: Tensor<f32>, label: usize) -> Result<Self> {
        check_pixels(&pixels)?;
        Ok(ImageSample { pixels, label })
    }
}

fn check_pixels(pixels: &Tensor<f32>) -> Result<()> {
    if pixels.dims() != INPUT_SHAPE {
        return Err(Error::Data(format!(
            "sample has dims {:?}, expected {:?}",
            pixels.dims(),
            INPUT_SHAPE
        )));
    }
    if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Bilinear resampling with corner pixels aligned: output pixel `x` samples
/// source position `x * (w_in - 1) / (w_out - 1)`.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Vec<f32> {
    let scale = |n_in: usize, n_out: usize| {
        if n_out > 1 {
            (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        }
    };
    let (sx, sy) = (scale(img.width, out_w), scale(img.height, out_h));
    let axis = |i: usize, s: f64, n_in: usize| {
        let pos = i as f64 * s;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, sx, img.width)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, img.height);
        for &(x0, x1, fx) in &cols {
            let top = img.at(x0, y0) as f64 * (1.0 - fx) + img.at(x1, y0) as f64 * fx;
            let bottom = img.at(x0, y1) as f64 * (1.0 - fx) + img.at(x1, y1) as f64 * fx;
            out.push((top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    out
}

/// Decodes, resizes and normalizes one image file.
pub fn load_sample(path: &Path, class_index: usize) -> Result<ImageSample> {
    load_sample_with(builtin_decoders(), path, class_index)
}

pub fn load_sample_with(decoders: &DecoderRegistry, path: &Path, class_index: usize) -> Result<ImageSample> {
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let decoder = decoders
        .for_path(path)
        .ok_or_else(|| decode_err("no decoder for this file extension".into()))?;
    let bytes = fs::read(path).map_err(|e| decode_err(e.to_string()))?;
    let img = decoder.decode(&bytes).map_err(decode_err)?;
    let mut pixels = resize_bilinear(&img, SAMPLE_SIDE, SAMPLE_SIDE);
    for v in &mut pixels {
        *v /= img.max_value;
    }
    let t = Tensor::from_vec(&INPUT_SHAPE, pixels)?;
    check_pixels(&t).map_err(|e| decode_err(e.to_string()))?;
    Ok(ImageSample {
        pixels: t,
        label: class_index,
    })
}

/// Random access to labelled samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> usize;

    fn load(&self, i: usize) -> Result<ImageSample>;
}

impl SampleSource for [ImageSample] {
    fn len(&self) -> usize {
        <[ImageSample]>::len(self)
    }

    fn label(&self, i: usize) -> usize {
        self[i].label
    }

    fn load(&self, i: usize) -> Result<ImageSample> {
        Ok(self[i].clone())
    }
}

impl SampleSource for Vec<ImageSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn label(&self, i: usize) -> usize {
        self[i].label
    }

    fn load(&self, i: usize) -> Result<ImageSample> {
        Ok(self[i].clone())
    }
}

impl SampleSource for DatasetIndex {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn label(&self, i: usize) -> usize {
        self.entries[i].1
    }

    fn load(&self, i: usize) -> Result<ImageSample> {
        let (path, label) = &self.entries[i];
        load_sample(path, *label)
    }
}

/// Sample order for one epoch: a shuffle keyed by `(seed, epoch)`, cut into
/// batches with the short final batch kept.
pub fn batch_order(len: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::arg("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Lazily loaded batches of one epoch.
pub struct Batches<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    order: std::vec::IntoIter<Vec<usize>>,
}

impl<S: SampleSource + ?Sized> Iterator for Batches<'_, S> {
    type Item = Result<Vec<ImageSample>>;

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.order.next()?;
        Some(idx.into_iter().map(|i| self.source.load(i)).collect())
    }
}

pub fn batches<S: SampleSource + ?Sized>(
    source: &S,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Batches<'_, S>> {
    Ok(Batches {
        source,
        order: batch_order(source.len(), batch_size, seed, epoch)?.into_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: usize, height: usize, pixels: Vec<f32>) -> GrayImage {
        GrayImage {
            width,
            height,
            pixels,
            max_value: 255.0,
        }
    }

    #[test]
    fn resize_keeps_corners() {
        let img = gray(2, 2, vec![0.0, 100.0, 50.0, 150.0]);
        let out = resize_bilinear(&img, 4, 4);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[3], 100.0);
        assert_eq!(out[12], 50.0);
        assert_eq!(out[15], 150.0);
    }

    #[test]
    fn order_is_a_permutation() {
        let b = batch_order(10, 4, 3, 1).unwrap();
        let sizes: Vec<usize> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(batch_order(3, 0, 0, 0).is_err());
    }
}
