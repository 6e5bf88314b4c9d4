//! The two reference architectures: a six-layer classifier over spins {0, 1}
//! and a six-layer U-Net for dense prediction.
//!
//! Classifier: channels 16, 16, 20, 24, 28, 32 with anchor counts
//! 6, 6, 4, 4, 3, 3, pooling every two layers (B = 32 → 4), batch norm at
//! every layer, and a rotation-invariant head: the spherical mean of the
//! spin-0 channels concatenated with the mean magnitude of the spin-1
//! channels, mapped affinely to 10 logits.
//!
//! U-Net: channels 16, 32, 32, 32, 32, 16 with anchor counts 6, 4, 3, 3, 4, 6,
//! pooling in the first two layers and nearest-neighbor upsampling in the
//! last two. Both decoder layers concatenate the first encoder stage's
//! features, upsampled to the decoder's working resolution; a one-anchor
//! spectral projection maps the final 16 channels to the target (3-channel
//! spin-0 image or 1-channel spin-1 vector field).

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spectral::{spin_conv, FeatureMap};
use crate::transform::magnitude_integral;

use super::{
    concat_channels, conv_layer_forward, upsample_aligned, BatchNormState, FilterParams,
    ForwardContext, LayerSpec, Precision,
};

use std::f64::consts::PI;

/// One convolutional layer: spec, anchored filter weights, and per-spin
/// batch-norm state.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub spec: LayerSpec,
    pub params: FilterParams,
    pub bn: Vec<BatchNormState>,
}

impl ConvBlock {
    fn random<R: Rng + ?Sized>(rng: &mut R, spec: LayerSpec) -> Self {
        let params = FilterParams::random(
            rng,
            &spec.out_spins,
            &spec.in_spins,
            spec.out_channels,
            spec.in_channels,
            spec.bandwidth,
            spec.n_anchor,
        );
        let bn = spec
            .out_spins
            .iter()
            .map(|_| BatchNormState::identity(spec.out_channels))
            .collect();
        ConvBlock { spec, params, bn }
    }

    fn forward(&mut self, input: &FeatureMap, ctx: &ForwardContext) -> Result<FeatureMap> {
        conv_layer_forward(input, &self.params, &mut self.bn, &self.spec, ctx)
    }

    /// Learnable scalars: filter anchors plus batch-norm scale and shift.
    fn parameter_count(&self) -> usize {
        self.params.parameter_count() + self.bn.len() * 2 * self.spec.out_channels
    }
}

pub const CLASSIFIER_BANDWIDTH: usize = 32;
pub const CLASSIFIER_CLASSES: usize = 10;
const CLASSIFIER_CHANNELS: [usize; 6] = [16, 16, 20, 24, 28, 32];
const CLASSIFIER_ANCHORS: [usize; 6] = [6, 6, 4, 4, 3, 3];

/// Six-layer spin-weighted classifier with a rotation-invariant pooling head.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub blocks: Vec<ConvBlock>,
    /// [classes, 2 * final_channels]
    pub head_weight: Array2<f64>,
    pub head_bias: Vec<f64>,
    pub input_spins: Vec<i32>,
}

impl Classifier {
    /// Randomly initialized network for inputs with the given spin weights
    /// ({0} for images, {1} for vector fields) at B = 32.
    pub fn new(input_spins: &[i32], rng: &mut (impl Rng + ?Sized)) -> Result<Self> {
        let mut input_spins = input_spins.to_vec();
        input_spins.sort_unstable();
        input_spins.dedup();
        if input_spins.is_empty() {
            return Err(Error::InvalidConfig("classifier needs input spins".into()));
        }
        let spins = vec![0, 1];
        let mut blocks = Vec::with_capacity(6);
        let mut bandwidth = CLASSIFIER_BANDWIDTH;
        let mut in_channels = 1;
        let mut in_spins = input_spins.clone();
        for layer in 0..6 {
            let pool_after = layer % 2 == 1; // after layers 2, 4, 6
            let spec = LayerSpec {
                in_channels,
                out_channels: CLASSIFIER_CHANNELS[layer],
                in_spins: in_spins.clone(),
                out_spins: spins.clone(),
                n_anchor: CLASSIFIER_ANCHORS[layer],
                bandwidth,
                pool_after,
                upsample_before: false,
                take_real_s0: true,
            };
            blocks.push(ConvBlock::random(rng, spec));
            if pool_after {
                bandwidth /= 2;
            }
            in_channels = CLASSIFIER_CHANNELS[layer];
            in_spins = spins.clone();
        }
        let feat = 2 * CLASSIFIER_CHANNELS[5];
        let scale = 1.0 / (feat as f64).sqrt();
        let head_weight = Array2::from_shape_fn((CLASSIFIER_CLASSES, feat), |_| {
            crate::testing::normal(rng) * scale
        });
        let head_bias = vec![0.0; CLASSIFIER_CLASSES];
        Ok(Classifier {
            blocks,
            head_weight,
            head_bias,
            input_spins,
        })
    }

    /// Zeroes every filter anchor and the head weight (the bias stays).
    pub fn zero_weights(&mut self) {
        for block in &mut self.blocks {
            block.params.anchors_mut().fill(Complex64::new(0.0, 0.0));
        }
        self.head_weight.fill(0.0);
    }

    pub fn quantize_f32(&mut self) {
        for block in &mut self.blocks {
            block.params.quantize_f32();
        }
        self.head_weight.mapv_inplace(|v| v as f32 as f64);
    }

    /// Feature map after the last convolutional layer, before the head.
    pub fn features(&mut self, input: &FeatureMap, ctx: &ForwardContext) -> Result<FeatureMap> {
        if input.bandwidth() != CLASSIFIER_BANDWIDTH {
            return Err(Error::BandwidthMismatch {
                expected: CLASSIFIER_BANDWIDTH,
                got: input.bandwidth(),
            });
        }
        let mut x = input.clone();
        for block in &mut self.blocks {
            x = block.forward(&x, ctx)?;
        }
        Ok(x)
    }

    /// Rotation-invariant head features: spherical means of the spin-0
    /// channels and mean magnitudes of the spin-1 channels.
    pub fn head_features(features: &FeatureMap, ctx: &ForwardContext) -> Result<Vec<f64>> {
        let b = features.bandwidth();
        let plan = ctx.plan(b, &features.spins())?;
        let sphere_area = 4.0 * PI;
        let mut feats = Vec::new();
        let s0 = features
            .spatial_part(0)
            .ok_or(Error::SpinMismatch {
                spin: 0,
                available: features.spins(),
            })?;
        for v in plan.integral(s0)? {
            feats.push(v.re / sphere_area);
        }
        let s1 = features
            .spatial_part(1)
            .ok_or(Error::SpinMismatch {
                spin: 1,
                available: features.spins(),
            })?;
        for v in magnitude_integral(&plan, s1)? {
            feats.push(v / sphere_area);
        }
        Ok(feats)
    }

    /// Full forward pass to logits.
    pub fn forward(&mut self, input: &FeatureMap, ctx: &ForwardContext) -> Result<Vec<f64>> {
        let features = self.features(input, ctx)?;
        let feats = Self::head_features(&features, ctx)?;
        if feats.len() != self.head_weight.dim().1 {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} features, got {}",
                self.head_weight.dim().1,
                feats.len()
            )));
        }
        let mut logits = self.head_bias.clone();
        for (c, logit) in logits.iter_mut().enumerate() {
            for (j, f) in feats.iter().enumerate() {
                *logit += self.head_weight[[c, j]] * f;
            }
        }
        if ctx.precision() == Precision::F32 {
            for v in logits.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        Ok(logits)
    }

    /// Total learnable scalars, complex anchors counted as two.
    pub fn parameter_count(&self) -> usize {
        let body: usize = self.blocks.iter().map(|b| b.parameter_count()).sum();
        body + self.head_weight.len() + self.head_bias.len()
    }
}

pub const UNET_BANDWIDTH: usize = 32;
const UNET_CHANNELS: [usize; 6] = [16, 32, 32, 32, 32, 16];
const UNET_ANCHORS: [usize; 6] = [6, 4, 3, 3, 4, 6];

/// Six-layer fully convolutional U-Net with spin-weighted convolutions.
#[derive(Clone, Debug)]
pub struct UNet {
    pub blocks: Vec<ConvBlock>,
    /// One-anchor spectral projection from the last layer to the target.
    pub head: FilterParams,
    pub input_spins: Vec<i32>,
    pub output_spins: Vec<i32>,
    pub output_channels: usize,
}

impl UNet {
    /// Randomly initialized U-Net at B = 32. `output_spins` is {0} with 3
    /// channels for image prediction or {1} with 1 channel for vector
    /// fields.
    pub fn new(
        input_spins: &[i32],
        output_spins: &[i32],
        output_channels: usize,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<Self> {
        let mut input_spins = input_spins.to_vec();
        input_spins.sort_unstable();
        input_spins.dedup();
        if input_spins.is_empty() || output_spins.is_empty() || output_channels == 0 {
            return Err(Error::InvalidConfig("unet needs spins and channels".into()));
        }
        let spins = vec![0, 1];
        // working bandwidth and input channels per layer; layers 5 and 6
        // consume the upsampled previous output concatenated with the
        // first-stage features at the same resolution
        let bandwidths = [32, 16, 8, 8, 16, 32];
        let in_channels = [1, 16, 32, 32, 32 + 16, 32 + 16];
        let mut blocks = Vec::with_capacity(6);
        for layer in 0..6 {
            let spec = LayerSpec {
                in_channels: in_channels[layer],
                out_channels: UNET_CHANNELS[layer],
                in_spins: if layer == 0 {
                    input_spins.clone()
                } else {
                    spins.clone()
                },
                out_spins: spins.clone(),
                n_anchor: UNET_ANCHORS[layer],
                bandwidth: bandwidths[layer],
                pool_after: layer < 2,
                upsample_before: false,
                take_real_s0: true,
            };
            blocks.push(ConvBlock::random(rng, spec));
        }
        let head = FilterParams::random(
            rng,
            output_spins,
            &spins,
            output_channels,
            UNET_CHANNELS[5],
            UNET_BANDWIDTH,
            1,
        );
        let output_spins = head.out_spins().to_vec();
        Ok(UNet {
            blocks,
            head,
            input_spins,
            output_spins,
            output_channels,
        })
    }

    pub fn quantize_f32(&mut self) {
        for block in &mut self.blocks {
            block.params.quantize_f32();
        }
        self.head.quantize_f32();
    }

    /// Forward pass; the output has the input's spatial shape.
    pub fn forward(&mut self, input: &FeatureMap, ctx: &ForwardContext) -> Result<FeatureMap> {
        if input.bandwidth() != UNET_BANDWIDTH {
            return Err(Error::BandwidthMismatch {
                expected: UNET_BANDWIDTH,
                got: input.bandwidth(),
            });
        }
        let (first, rest) = self.blocks.split_at_mut(1);
        let h1 = first[0].forward(input, ctx)?; // 16ch @ B16
        let h2 = rest[0].forward(&h1, ctx)?; // 32ch @ B8
        let h3 = rest[1].forward(&h2, ctx)?; // 32ch @ B8
        let h4 = rest[2].forward(&h3, ctx)?; // 32ch @ B8
        let x5 = concat_channels(&upsample_aligned(&h4)?, &h1)?; // 48ch @ B16
        let h5 = rest[3].forward(&x5, ctx)?; // 32ch @ B16
        let x6 = concat_channels(&upsample_aligned(&h5)?, &upsample_aligned(&h1)?)?; // 48ch @ B32
        let h6 = rest[4].forward(&x6, ctx)?; // 16ch @ B32

        // linear spectral projection to the target spins/channels
        let plan = ctx.plan(UNET_BANDWIDTH, &[0, 1])?;
        let mut spectral_parts = Vec::new();
        for part in h6.spatial_parts()? {
            spectral_parts.push(plan.forward(part)?);
        }
        let projected = spin_conv(
            &FeatureMap::from_spectral(spectral_parts)?,
            &self.head.expand()?,
        )?;
        let out_plan = ctx.plan(UNET_BANDWIDTH, &self.output_spins)?;
        let mut out_parts = Vec::new();
        for part in projected.spectral_parts()? {
            let mut field = out_plan.inverse(part)?;
            if field.spin() == 0 {
                field.mark_real()?;
            }
            if ctx.precision() == Precision::F32 {
                field.quantize_f32();
            }
            out_parts.push(field);
        }
        FeatureMap::from_spatial(out_parts)
    }

    /// Total learnable scalars, complex anchors counted as two.
    pub fn parameter_count(&self) -> usize {
        let body: usize = self.blocks.iter().map(|b| b.parameter_count()).sum();
        body + self.head.parameter_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::DeltaTable;
    use crate::testing;
    use crate::transform::{SpinField, SphericalGrid};
    use std::sync::Arc;

    fn random_input(spin: i32, channels: usize, seed: u64) -> FeatureMap {
        let mut rng = testing::seeded_rng(seed);
        let grid = SphericalGrid::new(32);
        let mut f = SpinField::zeros(spin, grid, channels);
        f.samples_mut().mapv_inplace(|_| {
            Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng))
        });
        if spin == 0 {
            f.mark_real().unwrap();
        }
        FeatureMap::from_spatial(vec![f]).unwrap()
    }

    #[test]
    fn classifier_parameter_budget() {
        let mut rng = testing::seeded_rng(100);
        let net = Classifier::new(&[0], &mut rng).unwrap();
        let count = net.parameter_count() as f64;
        assert!(
            (count - 58_000.0).abs() / 58_000.0 <= 0.05,
            "classifier has {count} parameters"
        );
        // vector-field input variant has the same budget
        let net = Classifier::new(&[1], &mut rng).unwrap();
        assert_eq!(net.parameter_count(), count as usize);
    }

    #[test]
    fn unet_parameter_budget() {
        let mut rng = testing::seeded_rng(101);
        let img = UNet::new(&[1], &[0], 3, &mut rng).unwrap();
        let vec = UNet::new(&[0], &[1], 1, &mut rng).unwrap();
        for (net, name) in [(&img, "vec2img"), (&vec, "img2vec")] {
            let count = net.parameter_count() as f64;
            assert!(
                (count - 112_000.0).abs() / 112_000.0 <= 0.05,
                "{name} unet has {count} parameters"
            );
        }
    }

    #[test]
    fn zero_weight_classifier_outputs_bias() {
        let mut rng = testing::seeded_rng(102);
        let mut net = Classifier::new(&[0], &mut rng).unwrap();
        net.zero_weights();
        net.head_bias = (0..10).map(|i| i as f64 * 0.5 - 2.0).collect();
        let ctx = ForwardContext::new(Arc::new(DeltaTable::new(31)));
        let logits = net.forward(&random_input(0, 1, 7), &ctx).unwrap();
        for (l, b) in logits.iter().zip(net.head_bias.iter()) {
            assert!((l - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unet_output_shape_matches_input() {
        let mut rng = testing::seeded_rng(103);
        let mut net = UNet::new(&[0], &[1], 1, &mut rng).unwrap();
        let ctx = ForwardContext::new(Arc::new(DeltaTable::new(31)));
        let out = net.forward(&random_input(0, 1, 8), &ctx).unwrap();
        assert_eq!(out.bandwidth(), 32);
        assert_eq!(out.spins(), vec![1]);
        assert_eq!(out.channels(), 1);
        let f = out.spatial_part(1).unwrap();
        assert_eq!(f.samples().dim(), (1, 64, 64));
    }
}
