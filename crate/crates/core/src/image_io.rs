//! Raster containers, 8-bit file I/O and the luma/chroma conversion.
//!
//! [`ImageBuf`] holds display-range samples in `[0, 1]`; [`BandBuf`] holds
//! signed single-channel data such as Laplacian bands and is never clamped.
//!
//! The colour transform is full-range BT.601:
//!
//! ```text
//! Y  = 0.299 R + 0.587 G + 0.114 B
//! Cb = 0.5 + (B - Y) / 1.772
//! Cr = 0.5 + (R - Y) / 1.402
//! ```

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;
const CB_SCALE: f64 = 2.0 * (1.0 - KB);
const CR_SCALE: f64 = 2.0 * (1.0 - KR);

/// Row-major, channel-interleaved raster with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    /// Builds an image, rejecting samples outside `[0, 1]` (and NaN).
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_shape(width, height, channels, data.len())?;
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "image sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every sample into `[0, 1]`. NaN becomes 0.
    pub fn from_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        Self::check_shape(width, height, channels, data.len())?;
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_clamped(width, height, channels, vec![value; width * height * channels])
    }

    /// Interleaves planes into one image, clamping to `[0, 1]`.
    pub fn from_planes(planes: &[BandBuf]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidParameter("no planes given".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some(p) = planes.iter().find(|p| p.width != w || p.height != h) {
            return Err(Error::SizeMismatch(format!(
                "plane {}x{} vs {}x{}",
                p.width, p.height, w, h
            )));
        }
        let c = planes.len();
        let mut data = vec![0.0; w * h * c];
        for (ch, plane) in planes.iter().enumerate() {
            for (i, v) in plane.data.iter().enumerate() {
                data[i * c + ch] = *v;
            }
        }
        Self::from_clamped(w, h, c, data)
    }

    fn check_shape(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
        if channels != 1 && channels != 3 {
            return Err(Error::ChannelCount {
                expected: 3,
                actual: channels,
            });
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image has zero size".into()));
        }
        if len != width * height * channels {
            return Err(Error::SizeMismatch(format!(
                "{len} samples for {width}x{height}x{channels}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies one channel out as a signed plane.
    pub fn plane(&self, c: usize) -> BandBuf {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        BandBuf {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn planes(&self) -> Vec<BandBuf> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Luma plane: the image itself when grey, Y of Y'CbCr when colour.
    pub fn luma(&self) -> BandBuf {
        if self.channels == 1 {
            return self.plane(0);
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| luma_of(p[0], p[1], p[2]))
            .collect();
        BandBuf {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Single-channel signed raster (band images, residuals, intermediate planes).
#[derive(Clone, Debug, PartialEq)]
pub struct BandBuf {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl BandBuf {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} samples for {width}x{height} band",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped into the raster (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yi * self.width + xi]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BandBuf {
        BandBuf {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &BandBuf, f: impl Fn(f64, f64) -> f64) -> Result<BandBuf> {
        if self.size() != other.size() {
            return Err(Error::SizeMismatch(format!(
                "{:?} vs {:?}",
                self.size(),
                other.size()
            )));
        }
        Ok(BandBuf {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Grey image view of the plane, clamped into `[0, 1]`.
    pub fn to_image(&self) -> ImageBuf {
        ImageBuf::from_clamped(self.width, self.height, 1, self.data.clone())
            .expect("band shape is always valid")
    }
}

#[inline]
fn luma_of(r: f64, g: f64, b: f64) -> f64 {
    // Weights sum to one, so expanding around G keeps grey pixels exact.
    g + KR * (r - g) + KB * (b - g)
}

/// Full-range BT.601 RGB to Y'CbCr, all three outputs in `[0, 1]`.
pub fn rgb_to_ycbcr(img: &ImageBuf) -> Result<ImageBuf> {
    if img.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            actual: img.channels,
        });
    }
    let mut out = Vec::with_capacity(img.data.len());
    for p in img.data.chunks_exact(3) {
        let (r, g, b) = (p[0], p[1], p[2]);
        let y = luma_of(r, g, b);
        out.push(y);
        out.push(0.5 + (b - y) / CB_SCALE);
        out.push(0.5 + (r - y) / CR_SCALE);
    }
    ImageBuf::from_clamped(img.width, img.height, 3, out)
}

/// Unclamped inverse transform of a single pixel.
#[inline]
pub fn ycbcr_to_rgb_pixel(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let r = y + CR_SCALE * (cr - 0.5);
    let b = y + CB_SCALE * (cb - 0.5);
    let g = y - (KR * (r - y) + KB * (b - y)) / KG;
    [r, g, b]
}

/// Inverse of [`rgb_to_ycbcr`]; out-of-gamut results are clamped.
pub fn ycbcr_to_rgb(img: &ImageBuf) -> Result<ImageBuf> {
    if img.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            actual: img.channels,
        });
    }
    let mut out = Vec::with_capacity(img.data.len());
    for p in img.data.chunks_exact(3) {
        out.extend_from_slice(&ycbcr_to_rgb_pixel(p[0], p[1], p[2]));
    }
    ImageBuf::from_clamped(img.width, img.height, 3, out)
}

/// Reads an 8-bit PNG or a binary PGM/PPM (P5/P6, maxval 255).
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuf> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageBuf> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(Error::UnsupportedFormat(
            "expected a PNG or binary PGM/PPM file".into(),
        ))
    }
}

fn from_bytes(width: usize, height: usize, channels: usize, raw: &[u8]) -> Result<ImageBuf> {
    let data = raw.iter().map(|b| f64::from(*b) / 255.0).collect();
    ImageBuf::new(width, height, channels, data)
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuf> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::PngDecode(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(format!("{depth:?} PNG")));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG colour type {other:?}"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::PngDecode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::PngDecode(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let row = w * channels;
    let mut raw = Vec::with_capacity(row * h);
    for line in buf.chunks(info.line_size).take(h) {
        raw.extend_from_slice(&line[..row]);
    }
    from_bytes(w, h, channels, &raw)
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageBuf> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments before each header number
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n')) {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader("missing header number".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader("header number out of range".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedBitDepth(format!("maxval {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(Error::MalformedHeader("zero image size".into()));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::MalformedHeader(
            "expected whitespace after maxval".into(),
        ));
    }
    pos += 1;
    let need = w * h * channels;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::MalformedHeader(format!("raster shorter than {need} bytes")))?;
    from_bytes(w, h, channels, raster)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `round(sample * 255)`; the format follows the file extension
/// (`.png`, `.pgm`, `.ppm`, `.pnm`).
pub fn save_image(img: &ImageBuf, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img)?,
        "pgm" if img.channels != 1 => {
            return Err(Error::ChannelCount {
                expected: 1,
                actual: img.channels,
            })
        }
        "ppm" if img.channels != 3 => {
            return Err(Error::ChannelCount {
                expected: 3,
                actual: img.channels,
            })
        }
        "pgm" | "ppm" | "pnm" => encode_pnm(img),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "cannot write extension {other:?}"
            )))
        }
    };
    fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_pnm(img: &ImageBuf) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| quantize(*v)));
    out
}

pub fn encode_png(img: &ImageBuf) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::PngEncode(e.to_string()))?;
        let raw: Vec<u8> = img.data.iter().map(|v| quantize(*v)).collect();
        writer
            .write_image_data(&raw)
            .map_err(|e| Error::PngEncode(e.to_string()))?;
    }
    Ok(out)
}
