//! Weight containers: manifest + blob serialization for the classifier and
//! U-Net, with a JSON layer-spec section sufficient to rebuild the network.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blob::{BlobEntry, BlobReader, BlobWriter};
use crate::error::{Error, Result};

use super::network::{Classifier, UNet};
use super::{BatchNormState, ConvBlock, FilterParams, LayerSpec};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerEntry {
    pub spec: LayerSpec,
    pub bn: Vec<BatchNormState>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeadSpec {
    pub out_spins: Vec<i32>,
    pub in_spins: Vec<i32>,
    pub out_channels: usize,
    pub in_channels: usize,
    pub bandwidth: usize,
    pub n_anchor: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub format_version: u32,
    pub kind: String,
    #[serde(rename = "type")]
    pub net_type: String,
    pub input_spins: Vec<i32>,
    pub output_spins: Vec<i32>,
    pub output_channels: usize,
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub head_bias: Vec<f64>,
    #[serde(default)]
    pub head: Option<HeadSpec>,
    pub blobs: Vec<BlobEntry>,
}

impl WeightsManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&json)?)
    }
}

fn anchors_shape(params: &FilterParams) -> Vec<usize> {
    let d = params.anchors().dim();
    vec![d.0, d.1, d.2, d.3, d.4, 2]
}

fn anchors_to_f32(params: &FilterParams) -> Vec<f32> {
    let mut out = Vec::with_capacity(params.anchors().len() * 2);
    for z in params.anchors().iter() {
        out.push(z.re as f32);
        out.push(z.im as f32);
    }
    out
}

fn anchors_from_f32(params: &mut FilterParams, shape: &[usize], data: &[f32]) -> Result<()> {
    let expect = anchors_shape(params);
    if shape != expect.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "anchor blob has shape {shape:?}, architecture wants {expect:?}"
        )));
    }
    for (i, z) in params.anchors_mut().iter_mut().enumerate() {
        *z = Complex64::new(data[2 * i] as f64, data[2 * i + 1] as f64);
    }
    Ok(())
}

fn save_blocks(writer: &mut BlobWriter, blocks: &[ConvBlock]) -> Result<()> {
    for (i, block) in blocks.iter().enumerate() {
        writer.write_f32(
            &format!("layer{i}/anchors"),
            &anchors_shape(&block.params),
            anchors_to_f32(&block.params),
        )?;
    }
    Ok(())
}

fn load_blocks(reader: &BlobReader, layers: &[LayerEntry]) -> Result<Vec<ConvBlock>> {
    let mut blocks = Vec::with_capacity(layers.len());
    for (i, entry) in layers.iter().enumerate() {
        entry.spec.validate()?;
        let mut params = FilterParams::zeros(
            &entry.spec.out_spins,
            &entry.spec.in_spins,
            entry.spec.out_channels,
            entry.spec.in_channels,
            entry.spec.bandwidth,
            entry.spec.n_anchor,
        );
        let (shape, data) = reader.read_f32(&format!("layer{i}/anchors"))?;
        anchors_from_f32(&mut params, &shape, &data)?;
        if entry.bn.len() != entry.spec.out_spins.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer {i} has {} batch-norm states for {} output spins",
                entry.bn.len(),
                entry.spec.out_spins.len()
            )));
        }
        for bn in &entry.bn {
            if bn.channels() != entry.spec.out_channels {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} batch norm has {} channels, spec wants {}",
                    bn.channels(),
                    entry.spec.out_channels
                )));
            }
        }
        blocks.push(ConvBlock {
            spec: entry.spec.clone(),
            params,
            bn: entry.bn.clone(),
        });
    }
    Ok(blocks)
}

pub fn save_classifier(dir: &Path, net: &Classifier) -> Result<WeightsManifest> {
    std::fs::create_dir_all(dir)?;
    let mut writer = BlobWriter::create(dir, "weights.bin")?;
    save_blocks(&mut writer, &net.blocks)?;
    let (rows, cols) = net.head_weight.dim();
    writer.write_f32(
        "head/weight",
        &[rows, cols],
        net.head_weight.iter().map(|&v| v as f32),
    )?;
    let manifest = WeightsManifest {
        format_version: 1,
        kind: "weights".to_string(),
        net_type: "classifier".to_string(),
        input_spins: net.input_spins.clone(),
        output_spins: vec![],
        output_channels: super::network::CLASSIFIER_CLASSES,
        layers: net
            .blocks
            .iter()
            .map(|b| LayerEntry {
                spec: b.spec.clone(),
                bn: b.bn.clone(),
            })
            .collect(),
        head_bias: net.head_bias.clone(),
        head: None,
        blobs: writer.finish()?,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

pub fn load_classifier(dir: &Path) -> Result<Classifier> {
    let manifest = WeightsManifest::load(dir)?;
    if manifest.net_type != "classifier" {
        return Err(Error::Manifest(format!(
            "expected classifier weights, found '{}'",
            manifest.net_type
        )));
    }
    let reader = BlobReader::new(dir, manifest.blobs.clone());
    let blocks = load_blocks(&reader, &manifest.layers)?;
    let (shape, data) = reader.read_f32("head/weight")?;
    if shape.len() != 2 || shape[0] != manifest.head_bias.len() {
        return Err(Error::ShapeMismatch(format!(
            "head weight has shape {shape:?}, bias has {} entries",
            manifest.head_bias.len()
        )));
    }
    let head_weight =
        Array2::from_shape_vec((shape[0], shape[1]), data.iter().map(|&v| v as f64).collect())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(Classifier {
        blocks,
        head_weight,
        head_bias: manifest.head_bias.clone(),
        input_spins: manifest.input_spins.clone(),
    })
}

pub fn save_unet(dir: &Path, net: &UNet) -> Result<WeightsManifest> {
    std::fs::create_dir_all(dir)?;
    let mut writer = BlobWriter::create(dir, "weights.bin")?;
    save_blocks(&mut writer, &net.blocks)?;
    writer.write_f32(
        "head/anchors",
        &anchors_shape(&net.head),
        anchors_to_f32(&net.head),
    )?;
    let manifest = WeightsManifest {
        format_version: 1,
        kind: "weights".to_string(),
        net_type: "unet".to_string(),
        input_spins: net.input_spins.clone(),
        output_spins: net.output_spins.clone(),
        output_channels: net.output_channels,
        layers: net
            .blocks
            .iter()
            .map(|b| LayerEntry {
                spec: b.spec.clone(),
                bn: b.bn.clone(),
            })
            .collect(),
        head_bias: vec![],
        head: Some(HeadSpec {
            out_spins: net.head.out_spins().to_vec(),
            in_spins: net.head.in_spins().to_vec(),
            out_channels: net.head.out_channels(),
            in_channels: net.head.in_channels(),
            bandwidth: net.head.bandwidth(),
            n_anchor: net.head.n_anchor(),
        }),
        blobs: writer.finish()?,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

pub fn load_unet(dir: &Path) -> Result<UNet> {
    let manifest = WeightsManifest::load(dir)?;
    if manifest.net_type != "unet" {
        return Err(Error::Manifest(format!(
            "expected unet weights, found '{}'",
            manifest.net_type
        )));
    }
    let reader = BlobReader::new(dir, manifest.blobs.clone());
    let blocks = load_blocks(&reader, &manifest.layers)?;
    let head_spec = manifest
        .head
        .as_ref()
        .ok_or_else(|| Error::Manifest("unet weights are missing the head spec".into()))?;
    let mut head = FilterParams::zeros(
        &head_spec.out_spins,
        &head_spec.in_spins,
        head_spec.out_channels,
        head_spec.in_channels,
        head_spec.bandwidth,
        head_spec.n_anchor,
    );
    let (shape, data) = reader.read_f32("head/anchors")?;
    anchors_from_f32(&mut head, &shape, &data)?;
    Ok(UNet {
        blocks,
        head,
        input_spins: manifest.input_spins.clone(),
        output_spins: manifest.output_spins.clone(),
        output_channels: manifest.output_channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;

    #[test]
    fn classifier_weights_round_trip() {
        let mut rng = testing::seeded_rng(40);
        let mut net = Classifier::new(&[1], &mut rng).unwrap();
        net.quantize_f32();
        net.head_weight.mapv_inplace(|v| v as f32 as f64);
        let dir = tempfile::tempdir().unwrap();
        save_classifier(dir.path(), &net).unwrap();
        let loaded = load_classifier(dir.path()).unwrap();
        assert_eq!(loaded.parameter_count(), net.parameter_count());
        assert_eq!(loaded.input_spins, net.input_spins);
        for (a, b) in loaded.blocks.iter().zip(net.blocks.iter()) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.params.anchors(), b.params.anchors());
        }
        assert_eq!(loaded.head_weight, net.head_weight);
    }

    #[test]
    fn unet_weights_round_trip() {
        let mut rng = testing::seeded_rng(41);
        let mut net = UNet::new(&[0], &[1], 1, &mut rng).unwrap();
        net.quantize_f32();
        let dir = tempfile::tempdir().unwrap();
        save_unet(dir.path(), &net).unwrap();
        let loaded = load_unet(dir.path()).unwrap();
        assert_eq!(loaded.parameter_count(), net.parameter_count());
        assert_eq!(loaded.head.anchors(), net.head.anchors());
        assert_eq!(loaded.output_spins, net.output_spins);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = testing::seeded_rng(42);
        let net = Classifier::new(&[0], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = save_classifier(dir.path(), &net).unwrap();
        // tamper: claim a different anchor count in layer 0
        manifest.layers[0].spec.n_anchor += 1;
        manifest.save(dir.path()).unwrap();
        assert!(matches!(
            load_classifier(dir.path()),
            Err(Error::ShapeMismatch(_))
        ));
        // wrong container kind
        let mut rng = testing::seeded_rng(43);
        let unet = UNet::new(&[0], &[1], 1, &mut rng).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        save_unet(dir2.path(), &unet).unwrap();
        assert!(load_classifier(dir2.path()).is_err());
    }
}
