//! Model persistence.
//!
//! A checkpoint is one file: a JSON manifest (format version, configuration
//! snapshot, template store, vocabulary lists, aspect map, standardization
//! statistics) followed by named tensor blobs in sorted-name order, stored
//! as little-endian 32-bit floats. Loading and re-saving reproduces the file
//! byte for byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::logs::{EmbeddingTable, Template, TemplateStore};
use crate::model::{Model, ModelArch, OrDetector, Variant};
use crate::pipeline::{Artifacts, Detector, Standardization};

const MAGIC: &[u8; 4] = b"HKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub templates: Vec<Template>,
    pub sim_threshold: f64,
    pub max_depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingSnapshot {
    pub dim: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Sorted token vocabulary; vectors live in the `embed.tokens` blob.
    pub tokens: Vec<String>,
    /// Sorted n-gram vocabulary; vectors live in the `embed.subwords` blob.
    pub subwords: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkingSnapshot {
    pub t_steps: usize,
    pub stride: usize,
    pub step_ms: u64,
    pub l_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub variant: Variant,
    /// Snapshot of the run configuration that produced the model.
    pub config: RunConfig,
    /// `(model key, resolved architecture)`; one entry, or two for the
    /// OR-composed variant.
    pub archs: Vec<(String, ModelArch)>,
    pub template_store: StoreSnapshot,
    /// SHA-256 of the serialized template array.
    pub template_store_hash: String,
    pub embeddings: EmbeddingSnapshot,
    pub standardization: Standardization,
    pub aspect_map: crate::model::AspectMap,
    pub column_order: Vec<usize>,
    pub chunking: ChunkingSnapshot,
}

/// A loaded or about-to-be-saved checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub detector: Detector,
    pub artifacts: Artifacts,
}

pub fn template_store_hash(templates: &[Template]) -> String {
    let json = serde_json::to_string(templates).expect("template json");
    hex_digest(json.as_bytes())
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex_digest(&std::fs::read(path)?))
}

impl Checkpoint {
    pub fn build(detector: Detector, artifacts: Artifacts, config: RunConfig) -> Self {
        let archs = detector
            .models()
            .iter()
            .map(|(key, m)| (key.to_string(), m.arch.clone()))
            .collect();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            variant: detector.variant(),
            config,
            archs,
            template_store: StoreSnapshot {
                templates: artifacts.store.templates().to_vec(),
                sim_threshold: artifacts.store.sim_threshold,
                max_depth: artifacts.store.max_depth,
            },
            template_store_hash: template_store_hash(artifacts.store.templates()),
            embeddings: EmbeddingSnapshot {
                dim: artifacts.embeddings.dim,
                n_min: artifacts.embeddings.n_min,
                n_max: artifacts.embeddings.n_max,
                tokens: artifacts.embeddings.token_vectors.keys().cloned().collect(),
                subwords: artifacts.embeddings.subword_vectors.keys().cloned().collect(),
            },
            standardization: artifacts.stats.clone(),
            aspect_map: artifacts.aspect_map.clone(),
            column_order: artifacts.column_order.clone(),
            chunking: ChunkingSnapshot {
                t_steps: artifacts.t_steps,
                stride: artifacts.stride,
                step_ms: artifacts.step_ms,
                l_max: artifacts.l_max,
            },
        };
        Self { manifest, detector, artifacts }
    }

    fn tensor_blobs(&self) -> BTreeMap<String, Array2<f64>> {
        let mut blobs = BTreeMap::new();
        for (key, model) in self.detector.models() {
            for (name, value) in model.params.iter() {
                blobs.insert(format!("{key}.{name}"), value.clone());
            }
        }
        let table = &self.artifacts.embeddings;
        blobs.insert("embed.tokens".into(), vectors_to_matrix(&table.token_vectors, table.dim));
        blobs.insert(
            "embed.subwords".into(),
            vectors_to_matrix(&table.subword_vectors, table.dim),
        );
        blobs
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let blobs = self.tensor_blobs();
        let mut out = Vec::with_capacity(manifest.len() + 1024);
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(manifest.len() as u64).to_le_bytes())?;
        out.write_all(&manifest)?;
        out.write_all(&(blobs.len() as u64).to_le_bytes())?;
        for (name, tensor) in &blobs {
            let name_bytes = name.as_bytes();
            out.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
            out.write_all(name_bytes)?;
            let (rows, cols) = tensor.dim();
            out.write_all(&(rows as u32).to_le_bytes())?;
            out.write_all(&(cols as u32).to_le_bytes())?;
            for v in tensor.iter() {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cursor.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut cursor)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let manifest_len = read_u64(&mut cursor)? as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        cursor.read_exact(&mut manifest_bytes)?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;

        let n_tensors = read_u64(&mut cursor)? as usize;
        let mut blobs: BTreeMap<String, Array2<f64>> = BTreeMap::new();
        for _ in 0..n_tensors {
            let name_len = read_u16(&mut cursor)? as usize;
            let mut name = vec![0u8; name_len];
            cursor.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("non-utf8 tensor name".into()))?;
            let rows = read_u32(&mut cursor)? as usize;
            let cols = read_u32(&mut cursor)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 4];
            for _ in 0..rows * cols {
                cursor.read_exact(&mut buf)?;
                data.push(f32::from_le_bytes(buf) as f64);
            }
            let tensor = Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
            blobs.insert(name, tensor);
        }

        // Reassemble the embedding table.
        let snap = &manifest.embeddings;
        let token_matrix = blobs
            .remove("embed.tokens")
            .ok_or_else(|| Error::Checkpoint("missing embed.tokens".into()))?;
        let subword_matrix = blobs
            .remove("embed.subwords")
            .ok_or_else(|| Error::Checkpoint("missing embed.subwords".into()))?;
        let embeddings = EmbeddingTable {
            dim: snap.dim,
            token_vectors: matrix_to_vectors(&snap.tokens, &token_matrix)?,
            subword_vectors: matrix_to_vectors(&snap.subwords, &subword_matrix)?,
            n_min: snap.n_min,
            n_max: snap.n_max,
        };

        // Template store from exported templates.
        let store = TemplateStore::from_templates(
            manifest.template_store.templates.clone(),
            manifest.template_store.sim_threshold,
            manifest.template_store.max_depth,
        );
        if template_store_hash(store.templates()) != manifest.template_store_hash {
            return Err(Error::Checkpoint("template store hash mismatch".into()));
        }

        let artifacts = Artifacts {
            store,
            embeddings,
            stats: manifest.standardization.clone(),
            aspect_map: manifest.aspect_map.clone(),
            column_order: manifest.column_order.clone(),
            t_steps: manifest.chunking.t_steps,
            stride: manifest.chunking.stride,
            step_ms: manifest.chunking.step_ms,
            l_max: manifest.chunking.l_max,
        };

        // Models: rebuild against the stored architectures, then install the
        // tensors (shape-checked against the arch-derived parameter set).
        let mut models = Vec::new();
        for (key, arch) in &manifest.archs {
            let mut model = Model::new(arch.clone(), 0)?;
            let names: Vec<String> = model.params.names().cloned().collect();
            for name in names {
                let blob_name = format!("{key}.{name}");
                let tensor = blobs.remove(&blob_name).ok_or_else(|| {
                    Error::Checkpoint(format!("missing tensor {blob_name}"))
                })?;
                let slot = model.params.get_mut(&name);
                if slot.dim() != tensor.dim() {
                    return Err(Error::Checkpoint(format!(
                        "tensor {blob_name} has shape {:?}, manifest arch expects {:?}",
                        tensor.dim(),
                        slot.dim()
                    )));
                }
                *slot = tensor;
            }
            models.push((key.clone(), model));
        }
        if !blobs.is_empty() {
            return Err(Error::Checkpoint(format!(
                "unexpected tensors in file: {:?}",
                blobs.keys().collect::<Vec<_>>()
            )));
        }

        let detector = match manifest.variant {
            Variant::WoF => {
                let mut wom = None;
                let mut wol = None;
                for (key, model) in models {
                    match key.as_str() {
                        "wom" => wom = Some(model),
                        "wol" => wol = Some(model),
                        other => {
                            return Err(Error::Checkpoint(format!("unexpected model key {other}")))
                        }
                    }
                }
                Detector::Or(OrDetector {
                    logs_only: wom
                        .ok_or_else(|| Error::Checkpoint("missing logs-only model".into()))?,
                    metrics_only: wol
                        .ok_or_else(|| Error::Checkpoint("missing metrics-only model".into()))?,
                })
            }
            _ => {
                let (_, model) = models
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Checkpoint("checkpoint holds no model".into()))?;
                Detector::Single(model)
            }
        };

        Ok(Self { manifest, detector, artifacts })
    }
}

fn vectors_to_matrix(map: &BTreeMap<String, Vec<f64>>, dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((map.len(), dim));
    for (row, vec) in map.values().enumerate() {
        for (c, &v) in vec.iter().enumerate() {
            out[[row, c]] = v;
        }
    }
    out
}

fn matrix_to_vectors(
    names: &[String],
    matrix: &Array2<f64>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if names.len() != matrix.nrows() {
        return Err(Error::Checkpoint(format!(
            "{} vocabulary entries but {} vector rows",
            names.len(),
            matrix.nrows()
        )));
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), matrix.row(i).to_vec()))
        .collect())
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AspectMap;

    fn tiny_artifacts() -> Artifacts {
        let mut store = TemplateStore::default();
        store.parse_event(&["worker".into(), "started".into()]);
        store.parse_event(&["job".into(), "NUM".into(), "done".into()]);
        store.freeze();
        let corpus = vec![
            vec!["worker".to_string(), "started".to_string()],
            vec!["job".to_string(), "NUM".to_string(), "done".to_string()],
        ];
        let embeddings = crate::logs::train_embeddings(
            &corpus,
            &crate::logs::EmbeddingConfig { dim: 4, epochs: 1, ..Default::default() },
            1,
        )
        .unwrap();
        Artifacts {
            store,
            embeddings,
            stats: Standardization {
                names: vec!["m0".into(), "m1".into()],
                means: vec![1.5, -0.25],
                stds: vec![2.0, 1.0],
            },
            aspect_map: AspectMap::from_json(r#"{"a": ["m0"], "b": ["m1"]}"#).unwrap(),
            column_order: vec![0, 1],
            t_steps: 4,
            stride: 4,
            step_ms: 1000,
            l_max: 3,
        }
    }

    fn tiny_model(variant: Variant, embed_dim: usize) -> Model {
        let arch = ModelArch {
            variant,
            embed_dim,
            d_model: 4,
            n_heads: 1,
            d_ff: 6,
            log_layers: 1,
            repr_dim: 4,
            l_max: 3,
            t_steps: 4,
            aspects: vec![("a".into(), 1), ("b".into(), 1)],
            intra_channels: vec![2],
            inter_channels: vec![3],
            head_hidden: vec![5],
            kernel: 2,
        };
        Model::new(arch, 3).unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let artifacts = tiny_artifacts();
        let detector = Detector::Single(tiny_model(Variant::Full, 4));
        let ckpt = Checkpoint::build(detector, artifacts, RunConfig::default());
        let bytes = ckpt.to_bytes().unwrap();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        let bytes_again = loaded.to_bytes().unwrap();
        assert_eq!(bytes, bytes_again, "save → load → save must be byte-identical");
    }

    #[test]
    fn loaded_model_predicts_like_the_original() {
        let artifacts = tiny_artifacts();
        let model = tiny_model(Variant::Full, 4);
        let input = crate::model::ChunkInput {
            log_embed: Array2::from_elem((3, 4), 0.2),
            log_mask: vec![true, true, false],
            metrics: Array2::from_elem((4, 2), 0.5),
        };
        let want = model.predict(&input).unwrap();
        let ckpt = Checkpoint::build(Detector::Single(model), artifacts, RunConfig::default());
        let loaded = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        let got = loaded.detector.predict(&input).unwrap();
        // f32 storage rounds the weights, so agreement is to f32 precision.
        assert_eq!(want.label, got.label);
        assert!((want.p_abnormal - got.p_abnormal).abs() < 1e-5);
    }

    #[test]
    fn or_detector_roundtrips() {
        let artifacts = tiny_artifacts();
        let or = Detector::Or(crate::model::OrDetector {
            logs_only: tiny_model(Variant::WoM, 4),
            metrics_only: tiny_model(Variant::WoL, 4),
        });
        let ckpt = Checkpoint::build(or, artifacts, RunConfig::default());
        let loaded = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(loaded.manifest.variant, Variant::WoF);
        assert_eq!(loaded.detector.models().len(), 2);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let artifacts = tiny_artifacts();
        let ckpt = Checkpoint::build(
            Detector::Single(tiny_model(Variant::Full, 4)),
            artifacts,
            RunConfig::default(),
        );
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn manifest_reports_store_hash() {
        let artifacts = tiny_artifacts();
        let hash = template_store_hash(artifacts.store.templates());
        let ckpt = Checkpoint::build(
            Detector::Single(tiny_model(Variant::Full, 4)),
            artifacts,
            RunConfig::default(),
        );
        assert_eq!(ckpt.manifest.template_store_hash, hash);
        assert_eq!(hash.len(), 64);
    }
}
