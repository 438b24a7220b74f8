//! Binary tensor/token formats: little-endian payload plus a JSON sidecar
//! `{"shape": [...], "dtype": ...}` next to it. Token ids are 32-bit,
//! tensor values 64-bit.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    dtype: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    s.into()
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for &v in tensor.data() {
        file.write_all(&v.to_le_bytes())?;
    }
    let sidecar = Sidecar {
        shape: tensor.shape().to_vec(),
        dtype: "f64le".into(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.dtype != "f64le" {
        return Err(Error::InvalidArgument(format!(
            "tensor file dtype {} (want f64le)",
            sidecar.dtype
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument(
            "tensor file not 8-byte aligned".into(),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(sidecar.shape, data)
}

/// Save every parameter tensor of the model into `dir`, one
/// `<name>.bin` + sidecar pair per tensor, plus the config as JSON.
pub fn save_model(model: &crate::trainer::Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("model_config.json"),
        serde_json::to_string_pretty(&model.config)?,
    )?;
    for p in model.params() {
        write_tensor(&dir.join(format!("{}.bin", p.name)), &p.value)?;
    }
    Ok(())
}

/// Load parameters saved by [`save_model`] into a freshly built model with
/// the same config. Shapes are checked tensor by tensor.
pub fn load_model(dir: &Path, seed: u64) -> Result<crate::trainer::Model> {
    let config: crate::trainer::ModelConfig =
        serde_json::from_str(&fs::read_to_string(dir.join("model_config.json"))?)?;
    let mut model = crate::trainer::Model::new(config, seed)?;
    for i in 0..model.params().len() {
        let name = model.params()[i].name.clone();
        let tensor = read_tensor(&dir.join(format!("{name}.bin")))?;
        if tensor.shape() != model.params()[i].value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: saved {:?} vs model {:?}",
                tensor.shape(),
                model.params()[i].value.shape()
            )));
        }
        model.params_mut()[i].value = tensor;
    }
    Ok(model)
}

/// Token dataset: little-endian u32 ids, sidecar `{"shape": [n]}`.
pub fn save_tokens(path: &Path, tokens: &[u32]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for &t in tokens {
        file.write_all(&t.to_le_bytes())?;
    }
    let sidecar = Sidecar {
        shape: vec![tokens.len()],
        dtype: "u32le".into(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_tokens(path: &Path) -> Result<Vec<u32>> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.dtype != "u32le" {
        return Err(Error::InvalidArgument(format!(
            "token file dtype {} (want u32le)",
            sidecar.dtype
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidArgument(
            "token file not 4-byte aligned".into(),
        ));
    }
    let tokens: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let expect: usize = sidecar.shape.iter().product();
    if tokens.len() != expect {
        return Err(Error::InvalidArgument(format!(
            "token file length {} vs sidecar shape {:?}",
            tokens.len(),
            sidecar.shape
        )));
    }
    Ok(tokens)
}
