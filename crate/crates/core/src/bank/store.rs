use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::patch::{extract_patches, Origin, PatchSpec};
use super::threshold::{calibrate_threshold, Calibration, CalibrationSource};
use crate::codec::{put_string, Reader};
use crate::error::{Error, Result};
use crate::gpr::BScanFrame;
use crate::reservoir::{fit_patch, DynamicFeature, Fingerprint, ReservoirWeights};

const MAGIC: &[u8; 4] = b"RBNK";
const VERSION: u16 = 1;

/// Where a bank entry came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub frame_id: String,
    pub origin: Origin,
}

impl Provenance {
    fn sort_key(&self) -> (&str, usize, usize) {
        (&self.frame_id, self.origin.y, self.origin.x)
    }
}

/// Features of non-target patches, frozen after construction.
///
/// Vectors are stored contiguously, `dim` values per entry, in provenance
/// order `(frame_id, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    dim: usize,
    vectors: Vec<f64>,
    provenance: Vec<Provenance>,
    fingerprint: Fingerprint,
    spec: PatchSpec,
    lambda: f64,
    beta: Option<f64>,
}

/// Fits every sliding-window patch of every frame. Frame order does not
/// matter; entries are sorted by provenance before the bank is frozen.
pub fn build_bank(
    frames: &[BScanFrame],
    w: &ReservoirWeights,
    spec: &PatchSpec,
    lambda: f64,
) -> Result<FeatureBank> {
    if frames.is_empty() {
        return Err(Error::EmptyBank);
    }
    spec.validate()?;
    let jobs: Vec<(Provenance, crate::gpr::Grid)> = frames
        .iter()
        .map(|f| {
            extract_patches(f, spec).map(|ps| {
                ps.into_iter()
                    .map(|(origin, patch)| {
                        (
                            Provenance {
                                frame_id: f.id.clone(),
                                origin,
                            },
                            patch,
                        )
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut fitted: Vec<(Provenance, DynamicFeature)> = jobs
        .into_par_iter()
        .map(|(prov, patch)| fit_patch(&patch, w, lambda).map(|f| (prov, f)))
        .collect::<Result<_>>()?;
    fitted.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));

    let dim = w.feature_len();
    let mut vectors = Vec::with_capacity(fitted.len() * dim);
    let mut provenance = Vec::with_capacity(fitted.len());
    for (prov, f) in fitted {
        vectors.extend_from_slice(f.as_vector());
        provenance.push(prov);
    }
    Ok(FeatureBank {
        dim,
        vectors,
        provenance,
        fingerprint: w.fingerprint(),
        spec: *spec,
        lambda,
        beta: None,
    })
}

#[inline]
fn squared_distance_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut acc = 0.0;
    // partial sums only grow, so abandoning once past the bound keeps the min exact
    for (chunk_a, chunk_b) in a.chunks(8).zip(b.chunks(8)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            let d = x - y;
            acc += d * d;
        }
        if acc >= bound {
            return acc;
        }
    }
    acc
}

impl FeatureBank {
    /// Assembles a bank from raw vectors, e.g. when merging or in tests.
    pub fn from_vectors(
        vectors: Vec<Vec<f64>>,
        provenance: Vec<Provenance>,
        fingerprint: Fingerprint,
        spec: PatchSpec,
        lambda: f64,
    ) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).ok_or(Error::EmptyBank)?;
        if vectors.iter().any(|v| v.len() != dim) || provenance.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} vectors of length {dim} with provenance", vectors.len()),
                found: "ragged input".into(),
            });
        }
        let mut entries: Vec<(Provenance, Vec<f64>)> = provenance.into_iter().zip(vectors).collect();
        entries.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));
        let (provenance, vectors): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        Ok(FeatureBank {
            dim,
            vectors: vectors.concat(),
            provenance,
            fingerprint,
            spec,
            lambda,
            beta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn spec(&self) -> PatchSpec {
        self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Calibrated threshold, if one was attached.
    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = Some(beta);
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn provenance(&self, i: usize) -> &Provenance {
        &self.provenance[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Provenance, &[f64])> {
        self.provenance.iter().zip(self.vectors.chunks_exact(self.dim))
    }

    /// Minimum Euclidean distance from `query` to any entry.
    pub fn nearest_distance(&self, query: &[f64]) -> Result<f64> {
        self.nearest_excluding(query, |_| false)
    }

    /// As [`nearest_distance`](Self::nearest_distance), skipping entries for
    /// which `skip(index)` holds. Returns infinity when everything is skipped.
    pub fn nearest_excluding(&self, query: &[f64], skip: impl Fn(usize) -> bool) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyBank);
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: format!("feature of length {}", self.dim),
                found: format!("length {}", query.len()),
            });
        }
        let mut best = f64::INFINITY;
        for (i, v) in self.vectors.chunks_exact(self.dim).enumerate() {
            if skip(i) {
                continue;
            }
            let d = squared_distance_bounded(query, v, best);
            if d < best {
                best = d;
            }
        }
        Ok(best.sqrt())
    }

    /// Nearest-neighbor distance of every entry to the rest of the bank.
    pub fn leave_one_out_scores(&self) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                self.nearest_excluding(self.vector(i), |j| j == i)
                    .expect("dimensions agree")
            })
            .collect()
    }

    /// Nearest-neighbor distance of every entry to entries of other frames.
    pub fn leave_one_frame_out_scores(&self) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let own = &self.provenance[i].frame_id;
                self.nearest_excluding(self.vector(i), |j| &self.provenance[j].frame_id == own)
                    .expect("dimensions agree")
            })
            .collect()
    }

    /// Held-out scores of the bank's own entries.
    pub fn calibration_scores(&self, source: CalibrationSource) -> Vec<f64> {
        match source {
            CalibrationSource::LeaveOneOut => self.leave_one_out_scores(),
            CalibrationSource::LeaveOneFrameOut => self.leave_one_frame_out_scores(),
        }
    }

    /// Derives β from held-out scores and stores it in the bank.
    pub fn calibrate(&mut self, method: Calibration, source: CalibrationSource) -> Result<f64> {
        let beta = calibrate_threshold(&self.calibration_scores(source), method)?;
        self.beta = Some(beta);
        Ok(beta)
    }

    /// Greedy farthest-point subsample of `size` entries, seeded at the
    /// first entry in provenance order.
    pub fn coreset(&self, size: usize) -> FeatureBank {
        if size >= self.len() || size == 0 {
            return self.clone();
        }
        let mut chosen = vec![0usize];
        let mut dist: Vec<f64> = (0..self.len())
            .map(|j| squared_distance_bounded(self.vector(0), self.vector(j), f64::INFINITY))
            .collect();
        while chosen.len() < size {
            let (next, _) = dist
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
            chosen.push(next);
            for (j, d) in dist.iter_mut().enumerate() {
                let nd = squared_distance_bounded(self.vector(next), self.vector(j), *d);
                if nd < *d {
                    *d = nd;
                }
            }
        }
        chosen.sort_unstable();
        FeatureBank {
            dim: self.dim,
            vectors: chosen.iter().flat_map(|&i| self.vector(i).to_vec()).collect(),
            provenance: chosen.iter().map(|&i| self.provenance[i].clone()).collect(),
            fingerprint: self.fingerprint,
            spec: self.spec,
            lambda: self.lambda,
            beta: self.beta,
        }
    }

    /// Layout: `"RBNK" | version u16 | fingerprint [32] | win_x u32 | win_y u32 |
    /// stride u32 | lambda f64 | has_beta u8 | beta f64 | dim u32 | count u64 |
    /// count × (frame_id str | origin x u32 | origin y u32 | dim × f64)`,
    /// little-endian, strings as `u32 length | utf-8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.vectors.len() * 8 + self.len() * 24);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.0);
        out.extend_from_slice(&(self.spec.win_x as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.win_y as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.stride as u32).to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        out.push(u8::from(self.beta.is_some()));
        out.extend_from_slice(&self.beta.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (prov, v) in self.iter() {
            put_string(&mut out, &prov.frame_id);
            out.extend_from_slice(&(prov.origin.x as u32).to_le_bytes());
            out.extend_from_slice(&(prov.origin.y as u32).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        if rd.take(4)? != MAGIC {
            return Err(Error::Format("missing RBNK magic".into()));
        }
        let version = rd.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported bank version {version}")));
        }
        let fingerprint = Fingerprint(rd.take(32)?.try_into().unwrap());
        let spec = PatchSpec {
            win_x: rd.u32()? as usize,
            win_y: rd.u32()? as usize,
            stride: rd.u32()? as usize,
        };
        spec.validate()?;
        let lambda = rd.f64()?;
        let has_beta = rd.take(1)?[0] != 0;
        let beta = rd.f64()?;
        let dim = rd.u32()? as usize;
        let count = rd.u64()? as usize;
        if dim == 0 || count == 0 {
            return Err(Error::Format("empty bank".into()));
        }
        let mut vectors = Vec::with_capacity(count.min(1 << 24) * dim);
        let mut provenance = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let frame_id = rd.string()?;
            let x = rd.u32()? as usize;
            let y = rd.u32()? as usize;
            provenance.push(Provenance {
                frame_id,
                origin: Origin { x, y },
            });
            vectors.extend(rd.f64_vec(dim)?);
        }
        rd.finish()?;
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("bank holds non-finite features".into()));
        }
        Ok(FeatureBank {
            dim,
            vectors,
            provenance,
            fingerprint,
            spec,
            lambda,
            beta: has_beta.then_some(beta),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Nearest-normal distance of a feature fitted under the bank's reservoir.
pub fn anomaly_score(feature: &DynamicFeature, bank: &FeatureBank) -> Result<f64> {
    match feature.fingerprint() {
        Some(fp) if fp == bank.fingerprint => bank.nearest_distance(feature.as_vector()),
        other => Err(Error::FingerprintMismatch {
            bank: bank.fingerprint.to_hex(),
            query: other.map_or_else(|| "unknown".to_owned(), |f| f.to_hex()),
        }),
    }
}
