//! Raster decoders, selected by file extension.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use image::{DynamicImage, ImageReader};

/// A decoded single-channel raster holding raw luminance in `[0, max_value]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub max_value: f32,
}

impl GrayImage {
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// One way of turning file bytes into a [`GrayImage`].
pub trait ImageDecoder: Send + Sync {
    fn name(&self) -> &'static str;

    /// Lowercase extensions this decoder claims, without the dot.
    fn extensions(&self) -> &[&'static str];

    fn decode(&self, bytes: &[u8]) -> Result<GrayImage, String>;
}

/// Binary (`P5`) and plain (`P2`) portable graymaps, 8 or 16 bits.
#[derive(Debug, Default, Clone, Copy)]
pub struct PgmDecoder;

impl ImageDecoder for PgmDecoder {
    fn name(&self) -> &'static str {
        "pgm"
    }

    fn extensions(&self) -> &[&'static str] {
        &["pgm"]
    }

    fn decode(&self, bytes: &[u8]) -> Result<GrayImage, String> {
        parse_pgm(bytes)
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str, String> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("unexpected end of header".into());
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| "header is not ASCII".into())
    }

    fn number(&mut self, what: &str) -> Result<usize, String> {
        let t = self.token()?;
        t.parse().map_err(|_| format!("bad {what} `{t}`"))
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?.to_string();
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(format!("not a graymap (magic `{other}`)")),
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let max_value = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero image extent".into());
    }
    if max_value == 0 || max_value > 65535 {
        return Err(format!("maxval {max_value} outside 1..=65535"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| "image extent overflows".to_string())?;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = h.pos + 1;
        let wide = max_value > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(start..start + need)
            .ok_or_else(|| format!("raster truncated: need {need} bytes"))?;
        if wide {
            pixels.extend(raster.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]]) as usize));
        } else {
            pixels.extend(raster.iter().map(|&p| p as usize));
        }
    } else {
        for _ in 0..count {
            pixels.push(h.number("sample")?);
        }
    }
    if let Some(v) = pixels.iter().find(|&&v| v > max_value) {
        return Err(format!("sample {v} exceeds maxval {max_value}"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: pixels.into_iter().map(|v| v as f32).collect(),
        max_value: max_value as f32,
    })
}

/// Common raster formats through the `image` crate. Color input is reduced
/// to luminance `0.299 R + 0.587 G + 0.114 B`.
#[derive(Debug, Default, Clone, Copy)]
pub struct RasterDecoder;

impl ImageDecoder for RasterDecoder {
    fn name(&self) -> &'static str {
        "raster"
    }

    fn extensions(&self) -> &[&'static str] {
        &["png", "jpg", "jpeg", "bmp"]
    }

    fn decode(&self, bytes: &[u8]) -> Result<GrayImage, String> {
        let img = ImageReader::new(std::io::Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| e.to_string())?
            .decode()
            .map_err(|e| e.to_string())?;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let luma = |r: f32, g: f32, b: f32| 0.299 * r + 0.587 * g + 0.114 * b;
        let (pixels, max_value) = match img {
            DynamicImage::ImageLuma8(g) => (g.into_raw().into_iter().map(f32::from).collect(), 255.0),
            DynamicImage::ImageLumaA8(g) => (g.pixels().map(|p| f32::from(p[0])).collect(), 255.0),
            DynamicImage::ImageLuma16(g) => (g.into_raw().into_iter().map(f32::from).collect(), 65535.0),
            DynamicImage::ImageLumaA16(g) => (g.pixels().map(|p| f32::from(p[0])).collect(), 65535.0),
            DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
                let rgb = img.to_rgb16();
                let px = rgb
                    .pixels()
                    .map(|p| luma(f32::from(p[0]), f32::from(p[1]), f32::from(p[2])))
                    .collect();
                (px, 65535.0)
            }
            other => {
                let rgb = other.to_rgb8();
                let px = rgb
                    .pixels()
                    .map(|p| luma(f32::from(p[0]), f32::from(p[1]), f32::from(p[2])))
                    .collect();
                (px, 255.0)
            }
        };
        Ok(GrayImage {
            width,
            height,
            pixels,
            max_value,
        })
    }
}

/// Decoders keyed by file extension.
#[derive(Clone, Default)]
pub struct DecoderRegistry {
    decoders: Vec<Arc<dyn ImageDecoder>>,
}

impl DecoderRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Native graymaps plus the `image` crate adapter.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(PgmDecoder));
        r.register(Arc::new(RasterDecoder));
        r
    }

    /// Later registrations take precedence for the extensions they claim.
    pub fn register(&mut self, decoder: Arc<dyn ImageDecoder>) {
        self.decoders.insert(0, decoder);
    }

    pub fn for_extension(&self, ext: &str) -> Option<&Arc<dyn ImageDecoder>> {
        let ext = ext.to_ascii_lowercase();
        self.decoders
            .iter()
            .find(|d| d.extensions().contains(&ext.as_str()))
    }

    pub fn for_path(&self, path: &Path) -> Option<&Arc<dyn ImageDecoder>> {
        self.for_extension(path.extension()?.to_str()?)
    }

    pub fn supports(&self, path: &Path) -> bool {
        self.for_path(path).is_some()
    }

    pub fn extensions(&self) -> Vec<&'static str> {
        let mut v: Vec<&'static str> = self.decoders.iter().flat_map(|d| d.extensions().iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

impl std::fmt::Debug for DecoderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.decoders.iter().map(|d| d.name()).collect();
        f.debug_struct("DecoderRegistry").field("decoders", &names).finish()
    }
}

pub(crate) fn builtin_decoders() -> &'static DecoderRegistry {
    static REG: OnceLock<DecoderRegistry> = OnceLock::new();
    REG.get_or_init(DecoderRegistry::builtin)
}

/// Encodes an 8-bit binary graymap.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count must match extent");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_and_plain_graymaps() {
        let img = parse_pgm(&encode_pgm(2, 1, &[7, 255])).unwrap();
        assert_eq!((img.width, img.height, img.max_value), (2, 1, 255.0));
        assert_eq!(img.pixels, vec![7.0, 255.0]);

        let plain = b"P2\n# comment\n2 2\n15\n0 3\n15 9\n";
        let img = parse_pgm(plain).unwrap();
        assert_eq!(img.pixels, vec![0.0, 3.0, 15.0, 9.0]);
        assert_eq!(img.max_value, 15.0);
    }

    #[test]
    fn sixteen_bit_graymap() {
        let mut bytes = b"P5 1 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x02]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img.pixels, vec![258.0]);
    }

    #[test]
    fn malformed_graymaps() {
        assert!(parse_pgm(b"P6 1 1 255\n\0\0\0").is_err());
        assert!(parse_pgm(b"P5 2 2 255\n\0").is_err());
        assert!(parse_pgm(b"P2 1 1 10\n11").is_err());
        assert!(parse_pgm(b"P5 0 1 255\n").is_err());
    }

    #[test]
    fn registry_lookup() {
        let r = DecoderRegistry::builtin();
        assert_eq!(r.for_path(Path::new("a/b.PGM")).unwrap().name(), "pgm");
        assert_eq!(r.for_path(Path::new("x.jpeg")).unwrap().name(), "raster");
        assert!(r.for_path(Path::new("notes.txt")).is_none());
        assert_eq!(r.extensions(), vec!["bmp", "jpeg", "jpg", "pgm", "png"]);
    }
}
