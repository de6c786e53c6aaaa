//! Model file: magic `WACMMDL`, version (u32), kind tag (u8: 0 Parzen,
//! 1 MLP), resolution as three u64 `(rows, cols, channels)`, then the
//! payload. Parzen payload: point count and dimension (u64) followed by the
//! points. MLP payload: layer count (u64), widths (u64 each), parameters.
//! All reals are little-endian `f64`.

use std::fs;
use std::path::Path;

use crate::codec::{put_f64s, put_u64, Reader};
use crate::error::{Error, Result};
use crate::imaging::write_atomic;

use super::{Dataset, MlpScore, ParzenScore, ScoreModel};

const MAGIC: &[u8; 7] = b"WACMMDL";
pub const MODEL_VERSION: u32 = 1;

/// Shape of the vectors a model was built for; `rows * cols * channels` must
/// equal the model dimension. Stack models use `(H/2, W/2, 12)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Resolution {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl Resolution {
    pub fn stack(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            channels: crate::wavelet::STACK_CHANNELS,
        }
    }

    /// Resolution for plain vectors of length `dim`.
    pub fn flat(dim: usize) -> Self {
        Self {
            rows: 1,
            cols: 1,
            channels: dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Parzen(ParzenScore),
    Mlp(MlpScore),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Parzen(_) => "parzen",
            AnyModel::Mlp(_) => "mlp",
        }
    }
}

impl ScoreModel for AnyModel {
    fn dim(&self) -> usize {
        match self {
            AnyModel::Parzen(m) => m.dim(),
            AnyModel::Mlp(m) => m.dim(),
        }
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        match self {
            AnyModel::Parzen(m) => m.score_into(x, sigma, out),
            AnyModel::Mlp(m) => m.score_into(x, sigma, out),
        }
    }
}

/// A model together with the resolution recorded in its file.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub resolution: Resolution,
    pub model: AnyModel,
}

impl StoredModel {
    pub fn new(resolution: Resolution, model: AnyModel) -> Result<Self> {
        if resolution.dim() != model.dim() {
            return Err(Error::shape(format!(
                "resolution {resolution:?} does not match model dimension {}",
                model.dim()
            )));
        }
        Ok(Self { resolution, model })
    }
}

impl ScoreModel for StoredModel {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        self.model.score_into(x, sigma, out)
    }
}

pub fn encode_model(m: &StoredModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(match m.model {
        AnyModel::Parzen(_) => 0,
        AnyModel::Mlp(_) => 1,
    });
    put_u64(&mut out, m.resolution.rows);
    put_u64(&mut out, m.resolution.cols);
    put_u64(&mut out, m.resolution.channels);
    match &m.model {
        AnyModel::Parzen(p) => {
            let d = p.dataset();
            put_u64(&mut out, d.len());
            put_u64(&mut out, d.dim());
            put_f64s(&mut out, d.as_slice());
        }
        AnyModel::Mlp(n) => {
            put_u64(&mut out, n.widths().len());
            for &w in n.widths() {
                put_u64(&mut out, w);
            }
            put_f64s(&mut out, n.params());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<StoredModel> {
    let mut r = Reader::new(bytes);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::format("not a model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::format(format!("unsupported model version {version}")));
    }
    let kind = r.u8()?;
    let resolution = Resolution {
        rows: r.usize()?,
        cols: r.usize()?,
        channels: r.usize()?,
    };
    let model = match kind {
        0 => {
            let n = r.usize()?;
            let dim = r.usize()?;
            let count = n
                .checked_mul(dim)
                .ok_or_else(|| Error::format("dataset size overflows"))?;
            AnyModel::Parzen(ParzenScore::new(Dataset::new(dim, r.f64s(count)?)?))
        }
        1 => {
            let layers = r.usize()?;
            if layers > 64 {
                return Err(Error::format(format!("{layers} layers is not plausible")));
            }
            let widths = (0..layers).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let count = widths
                .windows(2)
                .try_fold(0usize, |acc, w| {
                    w[0].checked_add(1)
                        .and_then(|i| i.checked_mul(w[1]))
                        .and_then(|n| acc.checked_add(n))
                })
                .ok_or_else(|| Error::format("parameter count overflows"))?;
            AnyModel::Mlp(MlpScore::from_parts(widths, r.f64s(count)?)?)
        }
        k => return Err(Error::format(format!("unknown model kind {k}"))),
    };
    r.finish()?;
    StoredModel::new(resolution, model)
}

pub fn save_model(m: &StoredModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(m))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StoredModel> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpScore::new(12, &[16, 16], &mut rng).unwrap();
        let m = StoredModel::new(Resolution::stack(1, 1), AnyModel::Mlp(net)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save_model(&m, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, m);
        for _ in 0..100 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..2.0)).collect();
            let sigma = rng.random_range(0.01..1.0);
            let (a, b) = (m.score(&x, sigma).unwrap(), back.score(&x, sigma).unwrap());
            assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn parzen_round_trip() {
        let d = Dataset::from_points(&[[0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.7, 0.8]]).unwrap();
        let m = StoredModel::new(
            Resolution { rows: 1, cols: 2, channels: 2 },
            AnyModel::Parzen(ParzenScore::new(d)),
        )
        .unwrap();
        assert_eq!(decode_model(&encode_model(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_bad_files() {
        let d = Dataset::from_points(&[[0.1, 0.2]]).unwrap();
        let m = StoredModel::new(Resolution::flat(2), AnyModel::Parzen(ParzenScore::new(d))).unwrap();
        let mut bytes = encode_model(&m);
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_model(&m);
        bytes[7] = 9;
        assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_model(&m);
        bytes.pop();
        assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
        assert!(StoredModel::new(Resolution::stack(2, 2), m.model.clone()).is_err());
    }
}
