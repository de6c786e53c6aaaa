//! Planar images, grayscale forward operators and raster file I/O.
//!
//! Intensities are kept as `f64` in nominal range `[0, 1]`. Quantization to
//! 8 bits happens only when writing a file.

use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Multi-channel raster stored plane by plane, each plane row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if rows < 2 || cols < 2 {
            return Err(Error::TooSmall { rows, cols });
        }
        if data.len() != channels * rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{rows}x{cols} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value at index {i}")));
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn filled(channels: usize, rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(channels, rows, cols, vec![value; channels * rows * cols])
    }

    /// Constant RGB image.
    pub fn solid_rgb(rows: usize, cols: usize, rgb: [f64; 3]) -> Result<Self> {
        let n = rows * cols;
        let mut data = Vec::with_capacity(3 * n);
        for c in rgb {
            data.extend(std::iter::repeat_n(c, n));
        }
        Self::new(3, rows, cols, data)
    }

    pub fn from_planes(planes: &[Vec<f64>], rows: usize, cols: usize) -> Result<Self> {
        let data = planes.iter().flatten().copied().collect();
        Self::new(planes.len(), rows, cols, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[c * self.plane_len() + r * self.cols + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.rows == other.rows && self.cols == other.cols
    }

    /// Per-channel mean value.
    pub fn channel_means(&self) -> Vec<f64> {
        (0..self.channels)
            .map(|c| self.plane(c).iter().sum::<f64>() / self.plane_len() as f64)
            .collect()
    }

    /// Crops one trailing row and/or column (centered crop to even size).
    pub fn crop_even(&self) -> Result<Image> {
        let rows = self.rows & !1;
        let cols = self.cols & !1;
        if rows == self.rows && cols == self.cols {
            return Ok(self.clone());
        }
        let r0 = (self.rows - rows) / 2;
        let c0 = (self.cols - cols) / 2;
        let mut data = Vec::with_capacity(self.channels * rows * cols);
        for c in 0..self.channels {
            for r in 0..rows {
                let start = c * self.plane_len() + (r + r0) * self.cols + c0;
                data.extend_from_slice(&self.data[start..start + cols]);
            }
        }
        Image::new(self.channels, rows, cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(
            self.channels,
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Linear color-to-gray forward operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrayOp {
    /// `(R + G + B) / 3`
    #[default]
    Mean,
    /// Luma with the coefficients `(0.299, 0.58, 0.114)`; they sum to 0.993.
    Luma,
    /// Rec. 601 luma `(0.299, 0.587, 0.114)`.
    LumaCorrected,
}

impl GrayOp {
    pub fn weights(self) -> [f64; 3] {
        match self {
            GrayOp::Mean => [1.0 / 3.0; 3],
            GrayOp::Luma => [0.299, 0.58, 0.114],
            GrayOp::LumaCorrected => [0.299, 0.587, 0.114],
        }
    }

    pub fn apply(self, rgb: [f64; 3]) -> f64 {
        let w = self.weights();
        w[0] * rgb[0] + w[1] * rgb[1] + w[2] * rgb[2]
    }

    pub fn name(self) -> &'static str {
        match self {
            GrayOp::Mean => "mean",
            GrayOp::Luma => "luma",
            GrayOp::LumaCorrected => "luma-corrected",
        }
    }
}

impl std::str::FromStr for GrayOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(GrayOp::Mean),
            "luma" => Ok(GrayOp::Luma),
            "luma-corrected" => Ok(GrayOp::LumaCorrected),
            other => Err(Error::invalid(format!("unknown gray op {other:?}"))),
        }
    }
}

/// Projects an RGB image to one channel with `op`.
pub fn to_gray(img: &Image, op: GrayOp) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: img.channels(),
        });
    }
    let w = op.weights();
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = (0..img.plane_len())
        .map(|i| w[0] * r[i] + w[1] * g[i] + w[2] * b[i])
        .collect();
    Image::new(1, img.rows(), img.cols(), data)
}

pub fn clamp(img: &Image, lo: f64, hi: f64) -> Result<Image> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::invalid(format!("clamp range [{lo}, {hi}] is empty")));
    }
    img.map(|v| v.clamp(lo, hi))
}

/// Maps an intensity to a byte: `round(clamp(v, 0, 1) * 255)`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(b: u8) -> f64 {
    b as f64 / 255.0
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Reads a binary PGM/PPM (maxval 255) or an 8-bit gray/RGB PNG.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path.as_ref())?;
    decode_raster(&bytes)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(Error::format("not a binary PGM/PPM or PNG file"))
    }
}

/// Writes `img` as PNG when the extension is `.png`, otherwise as PGM (1
/// channel) or PPM (3 channels). The file is written to a temporary sibling
/// and renamed into place.
pub fn save_raster(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        encode_png(img)?
    } else {
        encode_pnm(img)
    };
    write_atomic(path, &bytes)
}

/// Write-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn interleaved_bytes(img: &Image) -> Vec<u8> {
    let n = img.plane_len();
    let mut out = Vec::with_capacity(n * img.channels());
    for i in 0..n {
        for c in 0..img.channels() {
            out.push(quantize(img.plane(c)[i]));
        }
    }
    out
}

fn from_interleaved(channels: usize, rows: usize, cols: usize, px: &[u8]) -> Result<Image> {
    let n = rows * cols;
    let mut data = vec![0.0; channels * n];
    for (i, chunk) in px.chunks_exact(channels).take(n).enumerate() {
        for (c, &b) in chunk.iter().enumerate() {
            data[c * n + i] = dequantize(b);
        }
    }
    Image::new(channels, rows, cols, data)
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(interleaved_bytes(img));
    out
}

fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comment lines between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format("truncated PNM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("malformed PNM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("malformed PNM header value"))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format("malformed PNM header terminator")),
    }
    let [cols, rows, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval} (need 255)")));
    }
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("PNM dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::format(format!(
            "truncated PNM payload: {} of {need} bytes",
            payload.len()
        )));
    }
    from_interleaved(channels, rows, cols, &payload[..need])
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.cols() as u32, img.rows() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::format(format!("PNG encode: {e}")))?;
        w.write_image_data(&interleaved_bytes(img))
            .map_err(|e| Error::format(format!("PNG encode: {e}")))?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let dec = png::Decoder::new(Cursor::new(bytes));
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::format(format!("PNG decode: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(format!("PNG decode: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(format!(
            "unsupported PNG bit depth {:?}",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::format(format!("unsupported PNG color type {other:?}"))),
    };
    let (rows, cols) = (info.height as usize, info.width as usize);
    let mut px = Vec::with_capacity(rows * cols * channels);
    for r in 0..rows {
        let line = &buf[r * info.line_size..];
        px.extend_from_slice(&line[..cols * channels]);
    }
    from_interleaved(channels, rows, cols, &px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_of_constant_pixel() {
        let img = Image::solid_rgb(2, 2, [0.3, 0.6, 0.9]).unwrap();
        let y = to_gray(&img, GrayOp::Mean).unwrap();
        for &v in y.data() {
            assert!((v - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn literal_luma_of_white_is_0_993() {
        let img = Image::solid_rgb(2, 2, [1.0, 1.0, 1.0]).unwrap();
        let y = to_gray(&img, GrayOp::Luma).unwrap();
        assert!((y.data()[0] - 0.993).abs() < 1e-15);
        let y = to_gray(&img, GrayOp::LumaCorrected).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_of_gray_is_identity() {
        for c in [0.0, 0.17, 0.5, 1.0] {
            let img = Image::solid_rgb(2, 4, [c, c, c]).unwrap();
            let y = to_gray(&img, GrayOp::Mean).unwrap();
            assert!(y.data().iter().all(|&v| (v - c).abs() < 1e-15));
        }
    }

    #[test]
    fn to_gray_rejects_single_channel() {
        let img = Image::filled(1, 2, 2, 0.5).unwrap();
        assert!(matches!(
            to_gray(&img, GrayOp::Mean),
            Err(Error::ChannelCount { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn image_rejects_non_finite_and_tiny() {
        assert!(Image::new(1, 2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(matches!(
            Image::new(1, 1, 4, vec![0.0; 4]),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn clamp_basics() {
        let img = Image::new(1, 2, 2, vec![-0.2, 0.5, 1.7, 1.0]).unwrap();
        let c = clamp(&img, 0.0, 1.0).unwrap();
        assert_eq!(c.data(), &[0.0, 0.5, 1.0, 1.0]);
        assert!(clamp(&img, 1.0, 0.0).is_err());
    }

    #[test]
    fn quantization_endpoints() {
        assert_eq!(quantize(dequantize(255)), 255);
        assert_eq!(dequantize(255), 1.0);
        assert!((dequantize(128) - 0.50196).abs() < 1e-5);
        assert_eq!(dequantize(128), 128.0 / 255.0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(-0.3), 0);
    }

    #[test]
    fn pnm_header_is_bit_exact() {
        let img = Image::new(1, 2, 3, vec![0.0, 1.0, 0.5, 0.2, 0.4, 1.0]).unwrap();
        let bytes = encode_pnm(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 255, 128, 51, 102, 255]);
    }

    #[test]
    fn pnm_errors() {
        assert!(matches!(decode_raster(b"P6\n2 2\n65535\n"), Err(Error::Format(_))));
        assert!(matches!(decode_raster(b"P6\n2 2\n255\n\x01\x02"), Err(Error::Format(_))));
        assert!(matches!(decode_raster(b"P6\n2 x\n255\n"), Err(Error::Format(_))));
        assert!(matches!(decode_raster(b"GIF89a"), Err(Error::Format(_))));
    }

    #[test]
    fn pnm_accepts_comments() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 51, 102]);
        let img = decode_raster(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn crop_even_centers() {
        let img = Image::new(1, 3, 3, (0..9).map(|v| v as f64 / 10.0).collect()).unwrap();
        let c = img.crop_even().unwrap();
        assert_eq!((c.rows(), c.cols()), (2, 2));
        assert_eq!(c.data(), &[0.0, 0.1, 0.3, 0.4]);
    }

    fn grid_image(channels: usize) -> impl Strategy<Value = Image> {
        (2usize..7, 2usize..7).prop_flat_map(move |(r, c)| {
            prop::collection::vec(any::<u8>(), channels * r * c).prop_map(move |b| {
                Image::new(channels, r, c, b.into_iter().map(dequantize).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn raster_round_trip_on_grid(img in grid_image(3), gray in grid_image(1)) {
            let dir = tempfile::tempdir().unwrap();
            for (im, name) in [(&img, "a.ppm"), (&img, "a.png"), (&gray, "g.pgm"), (&gray, "g.png")] {
                let p = dir.path().join(name);
                save_raster(im, &p).unwrap();
                prop_assert_eq!(&load_raster(&p).unwrap(), im);
            }
        }

        #[test]
        fn to_gray_is_linear(
            a in prop::collection::vec(-1.0f64..2.0, 12),
            b in prop::collection::vec(-1.0f64..2.0, 12),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            for op in [GrayOp::Mean, GrayOp::Luma, GrayOp::LumaCorrected] {
                let ia = Image::new(3, 2, 2, a.clone()).unwrap();
                let ib = Image::new(3, 2, 2, b.clone()).unwrap();
                let mix = Image::new(3, 2, 2, a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
                let lhs = to_gray(&mix, op).unwrap();
                let ga = to_gray(&ia, op).unwrap();
                let gb = to_gray(&ib, op).unwrap();
                for i in 0..4 {
                    let rhs = alpha * ga.data()[i] + beta * gb.data()[i];
                    prop_assert!((lhs.data()[i] - rhs).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn clamp_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 16)) {
            let img = Image::new(1, 4, 4, v).unwrap();
            let once = clamp(&img, 0.0, 1.0).unwrap();
            prop_assert_eq!(clamp(&once, 0.0, 1.0).unwrap(), once.clone());
            prop_assert!(once.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
