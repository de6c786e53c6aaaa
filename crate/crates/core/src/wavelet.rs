//! Single-level orthonormal Haar transform and the 12-channel RGB wavelet
//! stack.
//!
//! For each non-overlapping 2x2 block `[[a, b], [c, d]]`:
//!
//! ```text
//! cA = ((a + b) + (c + d)) / 2     cH = ((a + b) - (c + d)) / 2
//! cV = ((a - b) + (c - d)) / 2     cD = ((a - b) - (c - d)) / 2
//! ```
//!
//! The matrix is symmetric and orthogonal, so the inverse applies the same
//! butterfly again.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imaging::{GrayOp, Image};

/// Row-major real grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Sub-band index within one color's four bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    A = 0,
    H = 1,
    V = 2,
    D = 3,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::A, Band::H, Band::V, Band::D];
    pub const DETAIL: [Band; 3] = [Band::H, Band::V, Band::D];
}

/// The four Haar sub-bands of one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBands {
    pub ca: Grid,
    pub ch: Grid,
    pub cv: Grid,
    pub cd: Grid,
}

impl WaveletBands {
    pub fn rows(&self) -> usize {
        self.ca.rows
    }

    pub fn cols(&self) -> usize {
        self.ca.cols
    }

    pub fn band(&self, b: Band) -> &Grid {
        match b {
            Band::A => &self.ca,
            Band::H => &self.ch,
            Band::V => &self.cv,
            Band::D => &self.cd,
        }
    }

    fn check(&self) -> Result<()> {
        let (r, c) = (self.ca.rows, self.ca.cols);
        if [&self.ch, &self.cv, &self.cd]
            .iter()
            .any(|g| g.rows != r || g.cols != c)
        {
            return Err(Error::shape("wavelet bands differ in size"));
        }
        Ok(())
    }

    /// Bands as a `[4, rows, cols]` buffer.
    pub fn to_vec(&self) -> Vec<f64> {
        Band::ALL
            .iter()
            .flat_map(|&b| self.band(b).data.iter().copied())
            .collect()
    }

    pub fn from_vec(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        let n = rows * cols;
        if data.len() != 4 * n {
            return Err(Error::shape(format!("{} values for 4x{rows}x{cols} bands", data.len())));
        }
        let g = |k: usize| Grid::new(rows, cols, data[k * n..(k + 1) * n].to_vec());
        Ok(Self {
            ca: g(0)?,
            ch: g(1)?,
            cv: g(2)?,
            cd: g(3)?,
        })
    }
}

fn check_even(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 2 {
        return Err(Error::TooSmall { rows, cols });
    }
    if !rows.is_multiple_of(2) || !cols.is_multiple_of(2) {
        return Err(Error::OddDimensions { rows, cols });
    }
    Ok(())
}

/// Forward transform of a row-major `rows x cols` plane.
pub fn dwt2_haar(plane: &[f64], rows: usize, cols: usize) -> Result<WaveletBands> {
    check_even(rows, cols)?;
    if plane.len() != rows * cols {
        return Err(Error::shape(format!("{} values for a {rows}x{cols} plane", plane.len())));
    }
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = [
        Grid::zeros(hr, hc),
        Grid::zeros(hr, hc),
        Grid::zeros(hr, hc),
        Grid::zeros(hr, hc),
    ];
    for i in 0..hr {
        let top = &plane[2 * i * cols..(2 * i + 1) * cols];
        let bot = &plane[(2 * i + 1) * cols..(2 * i + 2) * cols];
        for j in 0..hc {
            let (a, b) = (top[2 * j], top[2 * j + 1]);
            let (c, d) = (bot[2 * j], bot[2 * j + 1]);
            let k = i * hc + j;
            out[0].data[k] = ((a + b) + (c + d)) / 2.0;
            out[1].data[k] = ((a + b) - (c + d)) / 2.0;
            out[2].data[k] = ((a - b) + (c - d)) / 2.0;
            out[3].data[k] = ((a - b) - (c - d)) / 2.0;
        }
    }
    let [ca, ch, cv, cd] = out;
    Ok(WaveletBands { ca, ch, cv, cd })
}

/// Inverse transform; returns a row-major plane of `2*rows x 2*cols`.
pub fn idwt2_haar(bands: &WaveletBands) -> Result<Grid> {
    bands.check()?;
    let (hr, hc) = (bands.rows(), bands.cols());
    let cols = 2 * hc;
    let mut out = Grid::zeros(2 * hr, cols);
    for i in 0..hr {
        for j in 0..hc {
            let k = i * hc + j;
            let (ca, ch, cv, cd) = (
                bands.ca.data[k],
                bands.ch.data[k],
                bands.cv.data[k],
                bands.cd.data[k],
            );
            out.data[2 * i * cols + 2 * j] = ((ca + ch) + (cv + cd)) / 2.0;
            out.data[2 * i * cols + 2 * j + 1] = ((ca + ch) - (cv + cd)) / 2.0;
            out.data[(2 * i + 1) * cols + 2 * j] = ((ca - ch) + (cv - cd)) / 2.0;
            out.data[(2 * i + 1) * cols + 2 * j + 1] = ((ca - ch) - (cv - cd)) / 2.0;
        }
    }
    Ok(out)
}

pub const STACK_CHANNELS: usize = 12;

/// Twelve half-resolution channels `[cA_R, cH_R, cV_R, cD_R, cA_G, ..., cD_B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletStack {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WaveletStack {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != STACK_CHANNELS * rows * cols {
            return Err(Error::shape(format!(
                "{} values for a 12x{rows}x{cols} stack",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; STACK_CHANNELS * rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channel_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Flattened length (`12 * rows * cols`).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn index(color: usize, band: Band) -> usize {
        color * 4 + band as usize
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.channel_len();
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.channel_len();
        &mut self.data[ch * n..(ch + 1) * n]
    }

    pub fn band(&self, color: usize, band: Band) -> &[f64] {
        self.channel(Self::index(color, band))
    }

    pub fn color_bands(&self, color: usize) -> WaveletBands {
        let n = self.channel_len();
        WaveletBands::from_vec(self.rows, self.cols, &self.data[4 * color * n..4 * (color + 1) * n])
            .expect("stack layout")
    }

    /// Applies the gray operator across colors, band by band: `F(X)`.
    pub fn project(&self, op: GrayOp) -> WaveletBands {
        let w = op.weights();
        let n = self.channel_len();
        let mut out = vec![0.0; 4 * n];
        for b in Band::ALL {
            let dst = &mut out[b as usize * n..(b as usize + 1) * n];
            for (color, &wc) in w.iter().enumerate() {
                for (d, &s) in dst.iter_mut().zip(self.band(color, b)) {
                    *d += wc * s;
                }
            }
        }
        WaveletBands::from_vec(self.rows, self.cols, &out).expect("stack layout")
    }
}

/// RGB image to wavelet stack.
pub fn stack(img: &Image) -> Result<WaveletStack> {
    if img.channels() != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: img.channels(),
        });
    }
    check_even(img.rows(), img.cols())?;
    let per_color =
        Exec::default().try_map(3, |c| dwt2_haar(img.plane(c), img.rows(), img.cols()))?;
    let data = per_color.iter().flat_map(|b| b.to_vec()).collect();
    WaveletStack::from_vec(img.rows() / 2, img.cols() / 2, data)
}

/// Inverse of [`stack`].
pub fn unstack(x: &WaveletStack) -> Result<Image> {
    let planes = (0..3)
        .map(|c| idwt2_haar(&x.color_bands(c)).map(|g| g.data))
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(&planes, 2 * x.rows(), 2 * x.cols())
}

/// Haar bands of a grayscale image, `W(y)`.
pub fn gray_wavelet(y: &Image) -> Result<WaveletBands> {
    if y.channels() != 1 {
        return Err(Error::ChannelCount {
            expected: 1,
            got: y.channels(),
        });
    }
    dwt2_haar(y.plane(0), y.rows(), y.cols())
}

const TENSOR_MAGIC: &[u8; 4] = b"WACM";
pub const TENSOR_VERSION: u32 = 1;

/// Serializes a dense tensor: magic, version (u32), rank (u32), dims (u64
/// each), then little-endian `f64` values.
pub fn encode_tensor(dims: &[usize], data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * dims.len() + 8 * data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = crate::codec::Reader::new(bytes);
    if r.take(4)? != TENSOR_MAGIC {
        return Err(Error::format("bad tensor magic"));
    }
    let version = r.u32()?;
    if version != TENSOR_VERSION {
        return Err(Error::format(format!("unsupported tensor version {version}")));
    }
    let rank = r.u32()? as usize;
    let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("tensor dimensions overflow"))?;
    let data = r.f64s(count)?;
    r.finish()?;
    Ok((dims, data))
}

pub fn save_stack(x: &WaveletStack, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_tensor(&[STACK_CHANNELS, x.rows, x.cols], &x.data);
    crate::imaging::write_atomic(path.as_ref(), &bytes)
}

pub fn save_bands(b: &WaveletBands, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_tensor(&[4, b.rows(), b.cols()], &b.to_vec());
    crate::imaging::write_atomic(path.as_ref(), &bytes)
}

/// A tensor file holding either a 12-channel stack or 4 gray bands.
#[derive(Debug, Clone, PartialEq)]
pub enum WaveletTensor {
    Stack(WaveletStack),
    Bands(WaveletBands),
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<WaveletTensor> {
    let (dims, data) = decode_tensor(&fs::read(path)?)?;
    match dims.as_slice() {
        [12, r, c] => Ok(WaveletTensor::Stack(WaveletStack::from_vec(*r, *c, data)?)),
        [4, r, c] => Ok(WaveletTensor::Bands(WaveletBands::from_vec(*r, *c, &data)?)),
        other => Err(Error::format(format!("unexpected tensor dims {other:?}"))),
    }
}
