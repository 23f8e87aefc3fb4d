use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::config::ReservoirConfig;
use super::eigen::spectral_radius;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"R2DE";
const VERSION: u16 = 1;

/// SHA-256 of a reservoir's serialized blob. Features are only comparable
/// when they were produced under the same fingerprint.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::parse("fingerprint", e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::parse("fingerprint", "expected 32 bytes"))?;
        Ok(Fingerprint(arr))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Fingerprint::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Frozen random reservoir shared by every fit.
///
/// `wx` couples a point to its left neighbor's state, `wy` to the state
/// above; both are `n × n` row-major. `win` is the `n`-vector input weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    n: usize,
    rho: f64,
    input_scale: f64,
    seed: u64,
    wx: Vec<f64>,
    wy: Vec<f64>,
    win: Vec<f64>,
    fingerprint: Fingerprint,
}

/// Samples `wx`, `wy` i.i.d. uniform on [-1, 1] and rescales each to spectral
/// radius `rho`; `win` is uniform on `[-input_scale, input_scale]`.
pub fn build_reservoir(config: &ReservoirConfig) -> Result<ReservoirWeights> {
    config.validate()?;
    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |len: usize, scale: f64| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
    };
    let wx = draw(n * n, 1.0);
    let wy = draw(n * n, 1.0);
    let win = draw(n, config.input_scale);
    let wx = scale_to_radius(wx, n, config.rho)?;
    let wy = scale_to_radius(wy, n, config.rho)?;
    Ok(ReservoirWeights::assemble(
        n,
        config.rho,
        config.input_scale,
        config.seed,
        wx,
        wy,
        win,
    ))
}

fn scale_to_radius(mut m: Vec<f64>, n: usize, rho: f64) -> Result<Vec<f64>> {
    if n == 1 {
        if m[0] == 0.0 {
            return Err(Error::SpectralRadius("zero 1x1 reservoir".into()));
        }
        m[0] = rho.copysign(m[0]);
        return Ok(m);
    }
    let radius = spectral_radius(&m, n)?;
    if !(radius > 0.0) {
        return Err(Error::SpectralRadius(format!("degenerate radius {radius}")));
    }
    let factor = rho / radius;
    m.iter_mut().for_each(|v| *v *= factor);
    Ok(m)
}

impl ReservoirWeights {
    /// Wraps explicit matrices, e.g. hand-fixed weights in tests.
    pub fn from_parts(wx: Vec<f64>, wy: Vec<f64>, win: Vec<f64>) -> Result<Self> {
        let n = win.len();
        if n == 0 || wx.len() != n * n || wy.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: format!("two {n}x{n} matrices"),
                found: format!("{} and {} entries", wx.len(), wy.len()),
            });
        }
        let rho = spectral_radius(&wx, n)?.max(spectral_radius(&wy, n)?);
        let input_scale = win.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self::assemble(n, rho, input_scale, 0, wx, wy, win))
    }

    fn assemble(
        n: usize,
        rho: f64,
        input_scale: f64,
        seed: u64,
        wx: Vec<f64>,
        wy: Vec<f64>,
        win: Vec<f64>,
    ) -> Self {
        let mut w = ReservoirWeights {
            n,
            rho,
            input_scale,
            seed,
            wx,
            wy,
            win,
            fingerprint: Fingerprint([0; 32]),
        };
        w.fingerprint = Fingerprint(Sha256::digest(w.to_blob()).into());
        w
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn wx(&self) -> &[f64] {
        &self.wx
    }

    pub fn wy(&self) -> &[f64] {
        &self.wy
    }

    pub fn win(&self) -> &[f64] {
        &self.win
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn feature_len(&self) -> usize {
        2 * self.n + 1
    }

    /// The same reservoir with the horizontal and vertical matrices exchanged.
    pub fn swapped(&self) -> ReservoirWeights {
        Self::assemble(
            self.n,
            self.rho,
            self.input_scale,
            self.seed,
            self.wy.clone(),
            self.wx.clone(),
            self.win.clone(),
        )
    }

    /// Layout: `"R2DE" | version u16 | n u32 | rho f64 | input_scale f64 |
    /// seed u64 | wx | wy | win`, all little-endian, matrices row-major f64.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + 8 * (2 * self.n * self.n + self.n));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&self.rho.to_le_bytes());
        out.extend_from_slice(&self.input_scale.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in self.wx.iter().chain(&self.wy).chain(&self.win) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let mut rd = crate::codec::Reader::new(bytes);
        if rd.take(4)? != MAGIC {
            return Err(Error::Format("missing R2DE magic".into()));
        }
        let version = rd.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported reservoir blob version {version}")));
        }
        let n = rd.u32()? as usize;
        let rho = rd.f64()?;
        let input_scale = rd.f64()?;
        let seed = rd.u64()?;
        let wx = rd.f64_vec(n * n)?;
        let wy = rd.f64_vec(n * n)?;
        let win = rd.f64_vec(n)?;
        rd.finish()?;
        if n == 0 || wx.iter().chain(&wy).chain(&win).any(|v| !v.is_finite()) {
            return Err(Error::Format("reservoir blob holds invalid weights".into()));
        }
        Ok(Self::assemble(n, rho, input_scale, seed, wx, wy, win))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_blob()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_blob(&bytes)
    }
}
