//! Versioned binary model container plus a JSON metadata sidecar.
//!
//! Layout (all integers little-endian):
//! magic `ESNT` | u32 version | u64 seed | u32 config-JSON length | config
//! JSON | u32 input_dim | u32 layer count | per layer: u32 size, u8
//! activation | weights then biases as little-endian f64 in layer order,
//! weights row-major.

use super::{Activation, LayerSpec, NetworkParams, TrainConfig};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"ESNT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("container is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Sidecar document describing a serialized model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub input_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub config: TrainConfig,
    /// Input column identifiers (variant ids for genotype models).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_ids: Vec<String>,
    /// Per-column imputation means used to build the design matrix.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub impute_means: Vec<f64>,
    /// Decision threshold selected on the validation split, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_threshold: Option<f64>,
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Rectifier => 0,
        Activation::Sigmoid => 1,
        Activation::Linear => 2,
    }
}

fn activation_from_code(c: u8) -> Result<Activation, ModelIoError> {
    match c {
        0 => Ok(Activation::Rectifier),
        1 => Ok(Activation::Sigmoid),
        2 => Ok(Activation::Linear),
        other => Err(ModelIoError::Corrupt(format!("activation code {other}"))),
    }
}

/// Write the binary container and its `.json` sidecar (at `path` + ".json").
pub fn save_model<F: Scalar>(
    params: &NetworkParams<F>,
    metadata: &ModelMetadata,
    path: &Path,
) -> Result<(), ModelIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&metadata.seed.to_le_bytes())?;
    let config_json = serde_json::to_vec(&metadata.config)?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;
    w.write_all(&(params.input_dim as u32).to_le_bytes())?;
    w.write_all(&(params.layers.len() as u32).to_le_bytes())?;
    for spec in &params.layers {
        w.write_all(&(spec.size as u32).to_le_bytes())?;
        w.write_all(&[activation_code(spec.activation)])?;
    }
    for (weights, biases) in params.weights.iter().zip(&params.biases) {
        for &v in weights.iter() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        for &v in biases.iter() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()?;

    let sidecar = path.with_extension(match path.extension() {
        Some(e) => format!("{}.json", e.to_string_lossy()),
        None => "json".to_string(),
    });
    let mut meta_file = BufWriter::new(File::create(sidecar)?);
    serde_json::to_writer_pretty(&mut meta_file, metadata)?;
    meta_file.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelIoError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ModelIoError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64, ModelIoError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Load a model container; weights convert from stored f64 into `F`.
pub fn load_model<F: Scalar>(path: &Path) -> Result<(NetworkParams<F>, u64, TrainConfig), ModelIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(ModelIoError::BadVersion(version));
    }
    let seed = read_u64(&mut r)?;
    let config_len = read_u32(&mut r)? as usize;
    let mut config_json = vec![0u8; config_len];
    r.read_exact(&mut config_json)?;
    let config: TrainConfig = serde_json::from_slice(&config_json)?;

    let input_dim = read_u32(&mut r)? as usize;
    let n_layers = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let size = read_u32(&mut r)? as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        layers.push(LayerSpec::new(size, activation_from_code(code[0])?));
    }
    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    let mut fan_in = input_dim;
    for spec in &layers {
        let mut w = Array2::<F>::zeros((spec.size, fan_in));
        for v in w.iter_mut() {
            *v = F::from_f64_lossy(read_f64(&mut r)?);
        }
        let mut b = Array1::<F>::zeros(spec.size);
        for v in b.iter_mut() {
            *v = F::from_f64_lossy(read_f64(&mut r)?);
        }
        weights.push(w);
        biases.push(b);
        fan_in = spec.size;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(ModelIoError::Corrupt("trailing bytes".into()));
    }
    let params = NetworkParams::from_parts(input_dim, layers, weights, biases)
        .map_err(|e| ModelIoError::Corrupt(e.to_string()))?;
    Ok((params, seed, config))
}

/// Load only the sidecar metadata for a model path.
pub fn load_metadata(path: &Path) -> Result<ModelMetadata, ModelIoError> {
    let sidecar = path.with_extension(match path.extension() {
        Some(e) => format!("{}.json", e.to_string_lossy()),
        None => "json".to_string(),
    });
    Ok(serde_json::from_reader(BufReader::new(File::open(sidecar)?))?)
}
