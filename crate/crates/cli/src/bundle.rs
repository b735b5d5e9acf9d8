//! Simulated data on disk: `bundle.json` plus the POVM q-matrix as raw
//! little-endian `f64` (row-major, `M × d`).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use regcert_core::bloch::{BlochVector, HermitianBasis};
use regcert_core::tomography::{CountData, PovmModel, TomographyModel};

use crate::config::{PovmKind, Seeds};
use crate::error::{CliError, Result};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const Q_FILE: &str = "povm_q.f64le";
const FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub format: u32,
    pub version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub dim_hilbert: usize,
    pub n_outcomes: usize,
    pub povm: PovmKind,
    pub povm_t: Vec<f64>,
    pub povm_q_file: String,
    /// `[rows, cols]` of the q-matrix.
    pub povm_q_shape: [usize; 2],
    pub true_state: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct DataBundle {
    pub meta: BundleMeta,
    pub basis: HermitianBasis,
    pub povm: PovmModel,
    pub true_state: BlochVector,
    pub counts: CountData,
}

impl DataBundle {
    pub fn new(
        config_hash: String,
        seeds: Seeds,
        kind: PovmKind,
        basis: HermitianBasis,
        povm: PovmModel,
        true_state: BlochVector,
        counts: CountData,
    ) -> Self {
        let meta = BundleMeta {
            format: FORMAT,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seeds,
            dim_hilbert: basis.dim_hilbert(),
            n_outcomes: povm.n_outcomes(),
            povm: kind,
            povm_t: povm.t().iter().copied().collect(),
            povm_q_file: Q_FILE.to_string(),
            povm_q_shape: [povm.q().nrows(), povm.q().ncols()],
            true_state: true_state.coords().iter().copied().collect(),
            counts: counts.counts().to_vec(),
        };
        Self {
            meta,
            basis,
            povm,
            true_state,
            counts,
        }
    }

    pub fn model(&self) -> Result<TomographyModel> {
        Ok(TomographyModel::new(
            self.basis.clone(),
            self.povm.clone(),
            self.counts.clone(),
        )?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let q = self.povm.q();
        let mut bytes = Vec::with_capacity(q.len() * 8);
        for i in 0..q.nrows() {
            for j in 0..q.ncols() {
                bytes.extend_from_slice(&q[(i, j)].to_le_bytes());
            }
        }
        let q_path = dir.join(&self.meta.povm_q_file);
        std::fs::write(&q_path, bytes).map_err(CliError::io(&q_path))?;
        let json = serde_json::to_string_pretty(&self.meta).expect("bundle serializes");
        let path = dir.join(BUNDLE_FILE);
        std::fs::write(&path, json + "\n").map_err(CliError::io(&path))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(BUNDLE_FILE);
        let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let meta: BundleMeta = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::schema(&path, format!("{}: {}", e.path(), e.inner())))?;
        if meta.format != FORMAT {
            return Err(CliError::schema(
                &path,
                format!("unsupported bundle format {}", meta.format),
            ));
        }
        let q_path = dir.join(&meta.povm_q_file);
        let bytes = std::fs::read(&q_path).map_err(CliError::io(&q_path))?;
        let [rows, cols] = meta.povm_q_shape;
        if bytes.len() != rows * cols * 8 {
            return Err(CliError::schema(
                &q_path,
                format!(
                    "expected {} bytes for a {rows} x {cols} matrix, found {}",
                    rows * cols * 8,
                    bytes.len()
                ),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let q = DMatrix::from_row_slice(rows, cols, &values);
        let basis = HermitianBasis::new(meta.dim_hilbert)?;
        let povm = PovmModel::from_parts(&basis, DVector::from_vec(meta.povm_t.clone()), q)?;
        if meta.counts.len() != povm.n_outcomes() {
            return Err(CliError::schema(
                &path,
                format!(
                    "{} counts for {} outcomes",
                    meta.counts.len(),
                    povm.n_outcomes()
                ),
            ));
        }
        Ok(Self {
            true_state: BlochVector::from_vec(meta.true_state.clone()),
            counts: CountData::new(meta.counts.clone()),
            basis,
            povm,
            meta,
        })
    }
}
