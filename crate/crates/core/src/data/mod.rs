//! Dataset discovery, image decoding and batching.

pub mod decode;
pub mod index;
pub mod sample;
pub mod toy;

pub use decode::{DecoderRegistry, GrayImage, ImageDecoder, PgmDecoder, RasterDecoder};
pub use index::{index_dataset, index_dataset_with, split, write_manifest, DatasetIndex};
pub use sample::{
    batch_order, batches, load_sample, load_sample_with, resize_bilinear, Batches, ImageSample,
    SampleSource, SAMPLE_SIDE,
};
pub use toy::{toy_samples, write_toy_dataset, TOY_CLASSES};
