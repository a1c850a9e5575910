//! Synthetic four-class dataset: one bright ellipse per image, placed in the
//! upper or lower half and lying horizontally or vertically, over a noisy
//! dark background.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::decode::encode_pgm;
use crate::data::index::{index_dataset, DatasetIndex};
use crate::data::sample::{ImageSample, SAMPLE_SIDE};
use crate::error::Result;
use crate::graph::INPUT_SHAPE;
use crate::tensor::Tensor;

/// Class directory names, already in lexicographic (label) order.
pub const TOY_CLASSES: [&str; 4] = ["lower_horizontal", "lower_vertical", "upper_horizontal", "upper_vertical"];

/// 8-bit pixels of image `index` of class `class`.
pub fn toy_image(class: usize, index: usize, seed: u64) -> Vec<u8> {
    assert!(class < TOY_CLASSES.len(), "toy class {class} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 32) | index as u64);
    let side = SAMPLE_SIDE as f64;
    let upper = class >= 2;
    let vertical = class % 2 == 1;

    let cx = side / 2.0 + rng.random_range(-30.0..30.0);
    let cy = if upper { side * 0.27 } else { side * 0.73 } + rng.random_range(-14.0..14.0);
    let long = rng.random_range(42.0..60.0);
    let short = rng.random_range(14.0..22.0);
    let (ax, ay) = if vertical { (short, long * 0.8) } else { (long, short) };
    let tilt: f64 = rng.random_range(-0.2..0.2);
    let (sin, cos) = tilt.sin_cos();
    let level = rng.random_range(0.65..0.95);
    let background = rng.random_range(0.05..0.2);
    let noise = Normal::new(0.0, 0.06).expect("positive std");

    let mut out = Vec::with_capacity(SAMPLE_SIDE * SAMPLE_SIDE);
    for y in 0..SAMPLE_SIDE {
        for x in 0..SAMPLE_SIDE {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
            let r = (u / ax).powi(2) + (v / ay).powi(2);
            // Soft edge over the outer tenth of the radius.
            let inside = ((1.1 - r) / 0.2).clamp(0.0, 1.0);
            let value = background + (level - background) * inside + noise.sample(&mut rng);
            out.push((value.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

fn to_sample(pixels: &[u8], label: usize) -> ImageSample {
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    ImageSample {
        pixels: Tensor::from_vec(&INPUT_SHAPE, data).expect("toy image has the input extent"),
        label,
    }
}

/// `per_class` images of each class, grouped by class.
pub fn toy_samples(per_class: usize, seed: u64) -> Vec<ImageSample> {
    (0..TOY_CLASSES.len())
        .flat_map(|c| (0..per_class).map(move |i| to_sample(&toy_image(c, i, seed), c)))
        .collect()
}

/// Writes the toy set as `<root>/<class>/<nnnn>.pgm` and indexes it. The
/// indexed files load to exactly the pixels of [`toy_samples`].
pub fn write_toy_dataset(root: &Path, per_class: usize, seed: u64) -> Result<DatasetIndex> {
    for (c, name) in TOY_CLASSES.iter().enumerate() {
        let dir = root.join(name);
        fs::create_dir_all(&dir)?;
        for i in 0..per_class {
            let pgm = encode_pgm(SAMPLE_SIDE, SAMPLE_SIDE, &toy_image(c, i, seed));
            fs::write(dir.join(format!("{i:04}.pgm")), pgm)?;
        }
    }
    index_dataset(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        assert_eq!(toy_image(1, 3, 9), toy_image(1, 3, 9));
        assert_ne!(toy_image(1, 3, 9), toy_image(1, 4, 9));
        assert_ne!(toy_image(1, 3, 9), toy_image(1, 3, 10));
    }

    #[test]
    fn ellipse_sits_in_its_half() {
        for c in 0..4 {
            let img = toy_image(c, 0, 1);
            let half = img.len() / 2;
            let top: u64 = img[..half].iter().map(|&p| p as u64).sum();
            let bottom: u64 = img[half..].iter().map(|&p| p as u64).sum();
            assert_eq!(top > bottom, c >= 2, "class {c}");
        }
    }
}
