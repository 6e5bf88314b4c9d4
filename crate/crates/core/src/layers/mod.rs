//! Neural-network building blocks over spin-weighted features: anchored
//! spectral filters, batch normalization and nonlinearities, pooling and
//! upsampling, and the per-layer forward pipeline
//!
//!   transform → filter expansion → spin convolution → inverse transform →
//!   nonlinearity (per spin) → optional pooling.
//!
//! Spin-0 features are forced real and use ReLU with standard batch norm;
//! features with s ≠ 0 stay complex and are modulated on their magnitudes:
//! sf ↦ sf · max(β(|sf|), 0), which preserves (or zeroes) every phase.

mod network;
pub mod weights;

pub use network::{Classifier, ConvBlock, UNet, CLASSIFIER_BANDWIDTH, UNET_BANDWIDTH};

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use ndarray::Array5;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::DeltaTable;
use crate::spectral::{spin_conv, FeatureMap, FilterSpectrum};
use crate::transform::{SpinField, TransformPlan};

/// Activation storage precision. Arithmetic is always double; `F32` rounds
/// activations through f32 after every layer stage, modeling a
/// single-precision pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

/// Shared transform-plan cache plus execution options for layer forwards.
pub struct ForwardContext {
    table: Arc<DeltaTable>,
    plans: Mutex<HashMap<(usize, Vec<i32>), Arc<TransformPlan>>>,
    parallel: bool,
    precision: Precision,
}

impl ForwardContext {
    pub fn new(table: Arc<DeltaTable>) -> Self {
        ForwardContext {
            table,
            plans: Mutex::new(HashMap::new()),
            parallel: crate::par::parallel_available(),
            precision: Precision::F64,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn table(&self) -> &Arc<DeltaTable> {
        &self.table
    }

    /// Plan for one bandwidth and spin set, built once and reused.
    pub fn plan(&self, bandwidth: usize, spins: &[i32]) -> Result<Arc<TransformPlan>> {
        let mut key: Vec<i32> = spins.to_vec();
        key.sort_unstable();
        key.dedup();
        let mut plans = self.plans.lock().unwrap();
        if let Some(p) = plans.get(&(bandwidth, key.clone())) {
            return Ok(p.clone());
        }
        let plan = Arc::new(
            TransformPlan::new(bandwidth, &key, self.table.clone())?.with_parallel(self.parallel),
        );
        plans.insert((bandwidth, key), plan.clone());
        Ok(plan)
    }
}

/// Anchored filter parameters: the spectrum of each (s_out, s_in) component
/// is a piecewise-linear function of ℓ through `n_anchor` control points.
///
/// Same-spin components carry real anchors, cross-spin components complex
/// ones; [`FilterParams::parameter_count`] counts real scalars accordingly.
#[derive(Clone, Debug)]
pub struct FilterParams {
    out_spins: Vec<i32>,
    in_spins: Vec<i32>,
    bandwidth: usize,
    n_anchor: usize,
    /// [out_ch, in_ch, |W_out|, |W_in|, n_anchor]
    anchors: Array5<Complex64>,
}

impl FilterParams {
    pub fn zeros(
        out_spins: &[i32],
        in_spins: &[i32],
        out_channels: usize,
        in_channels: usize,
        bandwidth: usize,
        n_anchor: usize,
    ) -> Self {
        let mut out_spins = out_spins.to_vec();
        out_spins.sort_unstable();
        out_spins.dedup();
        let mut in_spins = in_spins.to_vec();
        in_spins.sort_unstable();
        in_spins.dedup();
        let anchors = Array5::zeros((
            out_channels,
            in_channels,
            out_spins.len(),
            in_spins.len(),
            n_anchor,
        ));
        FilterParams {
            out_spins,
            in_spins,
            bandwidth,
            n_anchor,
            anchors,
        }
    }

    /// Random initialization: zero-mean anchors scaled by
    /// 1/sqrt(in_ch · |W_in| · n_anchor).
    pub fn random<R: rand::Rng + ?Sized>(
        rng: &mut R,
        out_spins: &[i32],
        in_spins: &[i32],
        out_channels: usize,
        in_channels: usize,
        bandwidth: usize,
        n_anchor: usize,
    ) -> Self {
        let mut p = Self::zeros(
            out_spins,
            in_spins,
            out_channels,
            in_channels,
            bandwidth,
            n_anchor,
        );
        let scale = 1.0 / ((in_channels * p.in_spins.len() * n_anchor) as f64).sqrt();
        let (out_spins, in_spins) = (p.out_spins.clone(), p.in_spins.clone());
        for o in 0..out_channels {
            for c in 0..in_channels {
                for (so, &s_out) in out_spins.iter().enumerate() {
                    for (si, &s_in) in in_spins.iter().enumerate() {
                        for a in 0..n_anchor {
                            let re = crate::testing::normal(rng) * scale;
                            let im = if s_out == s_in {
                                0.0
                            } else {
                                crate::testing::normal(rng) * scale
                            };
                            p.anchors[[o, c, so, si, a]] = Complex64::new(re, im);
                        }
                    }
                }
            }
        }
        p
    }

    pub fn out_spins(&self) -> &[i32] {
        &self.out_spins
    }

    pub fn in_spins(&self) -> &[i32] {
        &self.in_spins
    }

    pub fn out_channels(&self) -> usize {
        self.anchors.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.anchors.dim().1
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn n_anchor(&self) -> usize {
        self.n_anchor
    }

    pub fn anchors(&self) -> &Array5<Complex64> {
        &self.anchors
    }

    pub fn anchors_mut(&mut self) -> &mut Array5<Complex64> {
        &mut self.anchors
    }

    /// Whether the (s_out, s_in) component is constrained to real anchors.
    pub fn pair_is_real(s_out: i32, s_in: i32) -> bool {
        s_out == s_in
    }

    /// Number of real learnable scalars (complex anchors count twice).
    pub fn parameter_count(&self) -> usize {
        let per_channel_pair: usize = self
            .out_spins
            .iter()
            .flat_map(|&so| self.in_spins.iter().map(move |&si| (so, si)))
            .map(|(so, si)| {
                if Self::pair_is_real(so, si) {
                    self.n_anchor
                } else {
                    2 * self.n_anchor
                }
            })
            .sum();
        self.out_channels() * self.in_channels() * per_channel_pair
    }

    /// Expands anchors to a full [`FilterSpectrum`] by linear interpolation
    /// along ℓ. Anchors sit uniformly on [0, B-1]; with a single anchor the
    /// spectrum is constant. Entries below ℓ = max(|s_out|, |s_in|) are zero.
    pub fn expand(&self) -> Result<FilterSpectrum> {
        let b = self.bandwidth;
        if b < 2 {
            return Err(Error::InvalidConfig(format!(
                "filter expansion needs bandwidth >= 2, got {b}"
            )));
        }
        if self.n_anchor > b {
            return Err(Error::TooManyAnchors {
                n_anchor: self.n_anchor,
                bandwidth: b,
            });
        }
        let mut filter = FilterSpectrum::zeros(
            &self.out_spins,
            &self.in_spins,
            self.out_channels(),
            self.in_channels(),
            b,
        );
        let n = self.n_anchor;
        for o in 0..self.out_channels() {
            for c in 0..self.in_channels() {
                for so in 0..self.out_spins.len() {
                    for si in 0..self.in_spins.len() {
                        for l in 0..b {
                            let v = if n == 1 {
                                self.anchors[[o, c, so, si, 0]]
                            } else {
                                // position of ℓ in anchor units
                                let t = l as f64 * (n - 1) as f64 / (b - 1) as f64;
                                let a = (t.floor() as usize).min(n - 2);
                                let frac = t - a as f64;
                                self.anchors[[o, c, so, si, a]] * (1.0 - frac)
                                    + self.anchors[[o, c, so, si, a + 1]] * frac
                            };
                            filter.set(o, c, so, si, l, v);
                        }
                    }
                }
            }
        }
        Ok(filter)
    }

    pub fn quantize_f32(&mut self) {
        self.anchors
            .mapv_inplace(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64));
    }
}

/// Static layer description; enough, together with the weights, to rebuild
/// the layer.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_spins: Vec<i32>,
    pub out_spins: Vec<i32>,
    pub n_anchor: usize,
    pub bandwidth: usize,
    pub pool_after: bool,
    pub upsample_before: bool,
    pub take_real_s0: bool,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_spins.is_empty() || self.out_spins.is_empty() {
            return Err(Error::InvalidConfig("layer needs nonempty spin sets".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("layer needs at least one channel".into()));
        }
        Ok(())
    }
}

/// Batch-normalization mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnMode {
    /// Normalize with statistics of the current batch and update the
    /// running averages.
    Train,
    /// Normalize with the stored running statistics.
    Inference,
}

/// Per-channel normalization state for one spin component. For s = 0 the
/// statistics are over the real field values; for s ≠ 0 over magnitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
    pub mode: BnMode,
    pub initialized: bool,
}

impl BatchNormState {
    /// Identity normalization, usable in inference mode immediately. The
    /// stored variance is 1 - ε so that var + ε = 1 and the affine map is
    /// the identity to roundoff.
    pub fn identity(channels: usize) -> Self {
        let epsilon = 1e-5;
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0 - epsilon; channels],
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            epsilon,
            momentum: 0.1,
            mode: BnMode::Inference,
            initialized: true,
        }
    }

    /// Fresh state with no recorded statistics; inference before any train
    /// step is an error.
    pub fn uninitialized(channels: usize) -> Self {
        BatchNormState {
            initialized: false,
            mode: BnMode::Train,
            ..Self::identity(channels)
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Resolves (mean, var) per channel for this pass, updating running
    /// statistics in train mode. `values` yields (weight, value) pairs; the
    /// weights are the sphere area elements, so the statistics are
    /// rotation-invariant up to quadrature error.
    fn stats(
        &mut self,
        channel: usize,
        values: impl Iterator<Item = (f64, f64)> + Clone,
    ) -> Result<(f64, f64)> {
        match self.mode {
            BnMode::Inference => {
                if !self.initialized {
                    return Err(Error::UninitializedStats);
                }
                Ok((self.running_mean[channel], self.running_var[channel]))
            }
            BnMode::Train => {
                let total: f64 = values.clone().map(|(w, _)| w).sum();
                let mean = values.clone().map(|(w, v)| w * v).sum::<f64>() / total;
                let var = values.map(|(w, v)| w * (v - mean) * (v - mean)).sum::<f64>() / total;
                let m = self.momentum;
                self.running_mean[channel] = (1.0 - m) * self.running_mean[channel] + m * mean;
                self.running_var[channel] = (1.0 - m) * self.running_var[channel] + m * var;
                Ok((mean, var))
            }
        }
    }

    fn affine(&self, channel: usize, value: f64, mean: f64, var: f64) -> f64 {
        self.scale[channel] * (value - mean) / (var + self.epsilon).sqrt() + self.shift[channel]
    }
}

/// Takes the real part of a spin-0 field and applies ReLU pointwise.
pub fn real_relu_s0(field: &SpinField) -> Result<SpinField> {
    if field.spin() != 0 {
        return Err(Error::SpinNotZero(field.spin()));
    }
    let mut out = field.clone();
    out.samples_mut()
        .mapv_inplace(|z| Complex64::new(z.re.max(0.0), 0.0));
    out.mark_real()?;
    Ok(out)
}

/// Area weights (sin θ per row) for batch statistics on the grid.
fn row_weights(field: &SpinField) -> Vec<f64> {
    let grid = field.grid();
    (0..grid.n_theta()).map(|j| grid.theta(j).sin()).collect()
}

/// Standard batch norm on a real spin-0 field, with area-weighted
/// statistics in train mode.
pub fn batch_norm_s0(field: &SpinField, state: &mut BatchNormState) -> Result<SpinField> {
    if field.spin() != 0 {
        return Err(Error::SpinNotZero(field.spin()));
    }
    if state.channels() != field.channels() {
        return Err(Error::ShapeMismatch(format!(
            "batch norm has {} channels, field has {}",
            state.channels(),
            field.channels()
        )));
    }
    let weights = row_weights(field);
    let n_phi = field.grid().n_phi();
    let mut out = field.clone();
    for ch in 0..field.channels() {
        let plane = field.samples().index_axis(ndarray::Axis(0), ch);
        let values = plane
            .iter()
            .enumerate()
            .map(|(i, z)| (weights[i / n_phi], z.re));
        let (mean, var) = state.stats(ch, values)?;
        for z in out
            .samples_mut()
            .index_axis_mut(ndarray::Axis(0), ch)
            .iter_mut()
        {
            *z = Complex64::new(state.affine(ch, z.re, mean, var), 0.0);
        }
    }
    if field.is_real() {
        out.mark_real()?;
    }
    Ok(out)
}

/// Magnitude batch norm plus nonlinearity for s ≠ 0:
/// sf ↦ sf · max(β(|sf|), 0). Phases are preserved exactly or the sample
/// is zeroed.
pub fn magnitude_bn_relu(field: &SpinField, state: &mut BatchNormState) -> Result<SpinField> {
    if field.spin() == 0 {
        return Err(Error::SpinZero);
    }
    if state.channels() != field.channels() {
        return Err(Error::ShapeMismatch(format!(
            "batch norm has {} channels, field has {}",
            state.channels(),
            field.channels()
        )));
    }
    let weights = row_weights(field);
    let n_phi = field.grid().n_phi();
    let mut out = field.clone();
    for ch in 0..field.channels() {
        let plane = field.samples().index_axis(ndarray::Axis(0), ch);
        let mags = plane
            .iter()
            .enumerate()
            .map(|(i, z)| (weights[i / n_phi], z.norm()));
        let (mean, var) = state.stats(ch, mags)?;
        for z in out
            .samples_mut()
            .index_axis_mut(ndarray::Axis(0), ch)
            .iter_mut()
        {
            let factor = state.affine(ch, z.norm(), mean, var).max(0.0);
            *z *= factor;
        }
    }
    Ok(out)
}

/// Exact azimuthal shift: f(φ) ↦ f(φ + delta), applied per φ-mode through
/// the FFT. Unitary on grid data and exact for any shift angle.
pub fn shift_phi_spectral(field: &SpinField, delta: f64) -> SpinField {
    let (channels, n_theta, n_phi) = field.samples().dim();
    let backend = crate::fft::RustFftBackend::shared();
    let mut out = field.clone();
    let mut row = vec![Complex64::new(0.0, 0.0); n_phi];
    for ch in 0..channels {
        for j in 0..n_theta {
            for k in 0..n_phi {
                row[k] = field.samples()[[ch, j, k]];
            }
            backend.transform(&mut row, false);
            for (idx, v) in row.iter_mut().enumerate() {
                // signed mode for FFT bin
                let m = if idx <= n_phi / 2 {
                    idx as i64
                } else {
                    idx as i64 - n_phi as i64
                };
                *v *= Complex64::from_polar(1.0, m as f64 * delta) / n_phi as f64;
            }
            backend.transform(&mut row, true);
            for k in 0..n_phi {
                out.samples_mut()[[ch, j, k]] = row[k];
            }
        }
    }
    out
}

/// 2×2 average pooling of one field; bandwidth halves.
pub fn pool_field(field: &SpinField) -> Result<SpinField> {
    let b = field.grid().bandwidth();
    if b < 2 || b % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "pooling needs an even bandwidth >= 2, got {b}"
        )));
    }
    let grid = crate::transform::SphericalGrid::new(b / 2);
    let mut out = SpinField::zeros(field.spin(), grid, field.channels());
    for ch in 0..field.channels() {
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                let sum = field.samples()[[ch, 2 * j, 2 * k]]
                    + field.samples()[[ch, 2 * j + 1, 2 * k]]
                    + field.samples()[[ch, 2 * j, 2 * k + 1]]
                    + field.samples()[[ch, 2 * j + 1, 2 * k + 1]];
                out.samples_mut()[[ch, j, k]] = sum * 0.25;
            }
        }
    }
    if field.is_real() {
        out.mark_real()?;
    }
    Ok(out)
}

/// Nearest-neighbor upsampling of one field; bandwidth doubles.
pub fn upsample_field(field: &SpinField) -> Result<SpinField> {
    let b = field.grid().bandwidth();
    let grid = crate::transform::SphericalGrid::new(2 * b);
    let mut out = SpinField::zeros(field.spin(), grid, field.channels());
    for ch in 0..field.channels() {
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                out.samples_mut()[[ch, j, k]] = field.samples()[[ch, j / 2, k / 2]];
            }
        }
    }
    if field.is_real() {
        out.mark_real()?;
    }
    Ok(out)
}

/// 2×2 average pooling across all spins of a spatial feature map.
pub fn pool(feature: &FeatureMap) -> Result<FeatureMap> {
    let parts = feature.spatial_parts()?;
    let pooled: Result<Vec<SpinField>> = parts.iter().map(pool_field).collect();
    FeatureMap::from_spatial(pooled?)
}

/// Nearest-neighbor upsampling across all spins of a spatial feature map.
pub fn upsample(feature: &FeatureMap) -> Result<FeatureMap> {
    let parts = feature.spatial_parts()?;
    let up: Result<Vec<SpinField>> = parts.iter().map(upsample_field).collect();
    FeatureMap::from_spatial(up?)
}

/// Pooling as used inside the network pipelines: 2×2 averaging followed by
/// an exact half-fine-cell azimuthal re-centering.
///
/// Block means sit half a fine cell east of the coarse grid's φ positions
/// (the offset θ grid nests exactly under 2:1 decimation, the φ grid does
/// not). Left uncorrected, that fixed twist does not commute with generic
/// rotations and dominates the network's equivariance error.
pub fn pool_aligned(feature: &FeatureMap) -> Result<FeatureMap> {
    let parts = feature.spatial_parts()?;
    let pooled: Result<Vec<SpinField>> = parts
        .iter()
        .map(|f| {
            let b_fine = f.grid().bandwidth();
            let p = pool_field(f)?;
            let mut aligned = shift_phi_spectral(&p, -PI / (2.0 * b_fine as f64));
            if f.is_real() {
                aligned.mark_real()?;
            }
            Ok(aligned)
        })
        .collect();
    FeatureMap::from_spatial(pooled?)
}

/// Upsampling as used inside the network pipelines: replication followed by
/// the matching half-fine-cell re-centering (see [`pool_aligned`]).
pub fn upsample_aligned(feature: &FeatureMap) -> Result<FeatureMap> {
    let parts = feature.spatial_parts()?;
    let up: Result<Vec<SpinField>> = parts
        .iter()
        .map(|f| {
            let u = upsample_field(f)?;
            let b_fine = u.grid().bandwidth();
            let mut aligned = shift_phi_spectral(&u, PI / (2.0 * b_fine as f64));
            if f.is_real() {
                aligned.mark_real()?;
            }
            Ok(aligned)
        })
        .collect();
    FeatureMap::from_spatial(up?)
}

/// Concatenates the channels of two spatial feature maps with identical
/// spin sets and bandwidth.
pub fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    let pa = a.spatial_parts()?;
    let pb = b.spatial_parts()?;
    if a.spins() != b.spins() {
        return Err(Error::InvalidConfig(format!(
            "cannot concatenate spins {:?} with {:?}",
            a.spins(),
            b.spins()
        )));
    }
    if a.bandwidth() != b.bandwidth() {
        return Err(Error::BandwidthMismatch {
            expected: a.bandwidth(),
            got: b.bandwidth(),
        });
    }
    let mut parts = Vec::with_capacity(pa.len());
    for (fa, fb) in pa.iter().zip(pb.iter()) {
        let merged = ndarray::concatenate(
            ndarray::Axis(0),
            &[fa.samples().view(), fb.samples().view()],
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        parts.push(SpinField::new(fa.spin(), fa.grid(), merged)?);
    }
    FeatureMap::from_spatial(parts)
}

/// One full convolutional layer on a spatial feature map:
/// (optional upsample) → SWSFT → expand anchors → spin convolution → inverse
/// SWSFT → per-spin nonlinearity/batch norm → (optional pool).
pub fn conv_layer_forward(
    feature: &FeatureMap,
    params: &FilterParams,
    bn: &mut [BatchNormState],
    spec: &LayerSpec,
    ctx: &ForwardContext,
) -> Result<FeatureMap> {
    spec.validate()?;
    if feature.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "layer expects {} input channels, got {}",
            spec.in_channels,
            feature.channels()
        )));
    }
    if feature.spins() != spec.in_spins {
        return Err(Error::SpinMismatch {
            spin: feature.spins().first().copied().unwrap_or(0),
            available: spec.in_spins.clone(),
        });
    }
    if bn.len() != spec.out_spins.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} batch-norm states for {} output spins",
            bn.len(),
            spec.out_spins.len()
        )));
    }

    let mut working;
    let spatial = if spec.upsample_before {
        working = upsample_aligned(feature)?;
        &working
    } else {
        feature
    };
    let b = spatial.bandwidth();
    if b != spec.bandwidth {
        return Err(Error::BandwidthMismatch {
            expected: spec.bandwidth,
            got: b,
        });
    }

    let all_spins: Vec<i32> = {
        let mut v = spec.in_spins.clone();
        v.extend_from_slice(&spec.out_spins);
        v
    };
    let plan = ctx.plan(b, &all_spins)?;

    // analysis
    let mut spectral_parts = Vec::with_capacity(spatial.spins().len());
    for part in spatial.spatial_parts()? {
        spectral_parts.push(plan.forward(part)?);
    }
    let spectral = FeatureMap::from_spectral(spectral_parts)?;

    // convolution
    let filter = params.expand()?;
    let convolved = spin_conv(&spectral, &filter)?;

    // synthesis + nonlinearity
    let mut out_parts = Vec::with_capacity(spec.out_spins.len());
    for (part, state) in convolved.spectral_parts()?.iter().zip(bn.iter_mut()) {
        let mut field = plan.inverse(part)?;
        if part.spin() == 0 && spec.take_real_s0 {
            field.mark_real()?;
            field = batch_norm_s0(&field, state)?;
            field = real_relu_s0(&field)?;
        } else if part.spin() != 0 {
            field = magnitude_bn_relu(&field, state)?;
        }
        out_parts.push(field);
    }
    working = FeatureMap::from_spatial(out_parts)?;

    if spec.pool_after {
        working = pool_aligned(&working)?;
    }
    if ctx.precision() == Precision::F32 {
        if let FeatureMap::Spatial(parts) = &mut working {
            for p in parts.iter_mut() {
                p.quantize_f32();
            }
        }
    }
    Ok(working)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;
    use std::sync::Arc;

    #[test]
    fn expand_single_anchor_is_constant() {
        let mut p = FilterParams::zeros(&[0], &[0], 1, 1, 8, 1);
        p.anchors_mut()[[0, 0, 0, 0, 0]] = Complex64::new(0.7, 0.0);
        let f = p.expand().unwrap();
        for l in 0..8 {
            assert_abs_diff_eq!(f.get(0, 0, 0, 0, l).re, 0.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn expand_two_anchors_is_linear_ramp() {
        let b = 9;
        let mut p = FilterParams::zeros(&[0], &[0], 1, 1, b, 2);
        p.anchors_mut()[[0, 0, 0, 0, 0]] = Complex64::new(0.0, 0.0);
        p.anchors_mut()[[0, 0, 0, 0, 1]] = Complex64::new(1.0, 0.0);
        let f = p.expand().unwrap();
        for l in 0..b {
            assert_abs_diff_eq!(f.get(0, 0, 0, 0, l).re, l as f64 / 8.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn expand_full_anchor_count_is_identity() {
        let b = 6;
        let mut rng = testing::seeded_rng(12);
        let mut p = FilterParams::zeros(&[0], &[0], 1, 1, b, b);
        for a in 0..b {
            p.anchors_mut()[[0, 0, 0, 0, a]] = Complex64::new(testing::normal(&mut rng), 0.0);
        }
        let f = p.expand().unwrap();
        for l in 0..b {
            let expect = p.anchors()[[0, 0, 0, 0, l]];
            assert_abs_diff_eq!(f.get(0, 0, 0, 0, l).re, expect.re, epsilon = 1e-12);
        }
    }

    #[test]
    fn expand_zeroes_degrees_below_spin() {
        let mut p = FilterParams::zeros(&[0, 1], &[0, 1], 1, 1, 8, 1);
        for so in 0..2 {
            for si in 0..2 {
                p.anchors_mut()[[0, 0, so, si, 0]] = Complex64::new(1.0, 0.5);
            }
        }
        let f = p.expand().unwrap();
        // (s_out, s_in) = (1, 1) has no ℓ = 0 component
        assert_eq!(f.get(0, 0, 1, 1, 0).norm(), 0.0);
        assert!(f.get(0, 0, 1, 1, 1).norm() > 0.0);
        assert!(f.get(0, 0, 0, 0, 0).norm() > 0.0);
    }

    #[test]
    fn expand_rejects_too_many_anchors() {
        let p = FilterParams::zeros(&[0], &[0], 1, 1, 4, 5);
        assert!(matches!(p.expand(), Err(Error::TooManyAnchors { .. })));
    }

    #[test]
    fn expansion_is_linear_in_anchors() {
        let mut rng = testing::seeded_rng(13);
        let b = 8;
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut p = FilterParams::zeros(&[0, 1], &[0], 2, 1, b, 3);
            for v in p.anchors_mut().iter_mut() {
                *v = Complex64::new(testing::normal(rng), testing::normal(rng));
            }
            p
        };
        let p1 = mk(&mut rng);
        let p2 = mk(&mut rng);
        let mut sum = p1.clone();
        for (v, w) in sum.anchors_mut().iter_mut().zip(p2.anchors().iter()) {
            *v = *v * 0.5 + w * 2.0;
        }
        let f1 = p1.expand().unwrap();
        let f2 = p2.expand().unwrap();
        let fs = sum.expand().unwrap();
        for ((a, b), c) in f1
            .array()
            .iter()
            .zip(f2.array().iter())
            .zip(fs.array().iter())
        {
            assert!((c - (a * 0.5 + b * 2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn relu_takes_real_part_and_clamps() {
        let grid = crate::transform::SphericalGrid::new(2);
        let mut field = SpinField::zeros(0, grid, 1);
        field.samples_mut()[[0, 0, 0]] = Complex64::new(1.0, 2.0);
        field.samples_mut()[[0, 0, 1]] = Complex64::new(-3.0, 1.0);
        field.samples_mut()[[0, 1, 0]] = Complex64::new(0.5, 0.0);
        let out = real_relu_s0(&field).unwrap();
        assert_eq!(out.samples()[[0, 0, 0]], Complex64::new(1.0, 0.0));
        assert_eq!(out.samples()[[0, 0, 1]], Complex64::new(0.0, 0.0));
        assert_eq!(out.samples()[[0, 1, 0]], Complex64::new(0.5, 0.0));
        assert!(out.is_real());
        // nonnegative real input is unchanged
        let again = real_relu_s0(&out).unwrap();
        assert_eq!(again.samples(), out.samples());
        // spin-1 input is rejected
        assert!(real_relu_s0(&SpinField::zeros(1, grid, 1)).is_err());
    }

    #[test]
    fn magnitude_bn_identity_scales_by_magnitude() {
        let grid = crate::transform::SphericalGrid::new(2);
        let mut field = SpinField::zeros(1, grid, 1);
        let z = Complex64::from_polar(2.0, 1.1);
        field.samples_mut().fill(z);
        let mut state = BatchNormState::identity(1);
        let out = magnitude_bn_relu(&field, &mut state).unwrap();
        // β(|z|) = |z| under identity stats, so the sample scales by its own
        // magnitude with phase preserved.
        let got = out.samples()[[0, 0, 0]];
        assert_abs_diff_eq!(got.norm(), 4.0, epsilon = 1e-4);
        assert_abs_diff_eq!(got.arg(), z.arg(), epsilon = 1e-12);
    }

    #[test]
    fn magnitude_bn_clamps_to_zero_and_keeps_global_phase() {
        let grid = crate::transform::SphericalGrid::new(2);
        let mut field = SpinField::zeros(1, grid, 1);
        field.samples_mut().fill(Complex64::from_polar(1.0, 0.3));
        let mut state = BatchNormState::identity(1);
        state.shift = vec![-5.0];
        let out = magnitude_bn_relu(&field, &mut state).unwrap();
        assert!(out.samples().iter().all(|v| v.norm() == 0.0));

        // a global phase on the input appears unchanged on the output
        let mut rng = testing::seeded_rng(14);
        let mut field = SpinField::zeros(1, grid, 1);
        field
            .samples_mut()
            .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
        let phase = Complex64::from_polar(1.0, 0.77);
        let mut shifted = field.clone();
        shifted.samples_mut().mapv_inplace(|z| z * phase);
        let mut s1 = BatchNormState::identity(1);
        let mut s2 = BatchNormState::identity(1);
        let a = magnitude_bn_relu(&field, &mut s1).unwrap();
        let b = magnitude_bn_relu(&shifted, &mut s2).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples().iter()) {
            assert!((x * phase - y).norm() < 1e-12);
        }
    }

    #[test]
    fn uninitialized_inference_errors() {
        let grid = crate::transform::SphericalGrid::new(2);
        let field = SpinField::zeros(1, grid, 1);
        let mut state = BatchNormState::uninitialized(1);
        state.mode = BnMode::Inference;
        assert!(matches!(
            magnitude_bn_relu(&field, &mut state),
            Err(Error::UninitializedStats)
        ));
    }

    #[test]
    fn train_mode_normalizes_batch_and_updates_running_stats() {
        let grid = crate::transform::SphericalGrid::new(2);
        let mut field = SpinField::zeros(0, grid, 1);
        let mut rng = testing::seeded_rng(15);
        field
            .samples_mut()
            .mapv_inplace(|_| Complex64::new(3.0 + 2.0 * testing::normal(&mut rng), 0.0));
        let mut state = BatchNormState::uninitialized(1);
        let out = batch_norm_s0(&field, &mut state).unwrap();
        // statistics are area-weighted (sin θ per row); the normalized field
        // must have weighted mean 0 and weighted variance 1
        let n_phi = grid.n_phi();
        let pairs: Vec<(f64, f64)> = out
            .samples()
            .index_axis(ndarray::Axis(0), 0)
            .iter()
            .enumerate()
            .map(|(i, z)| (grid.theta(i / n_phi).sin(), z.re))
            .collect();
        let total: f64 = pairs.iter().map(|(w, _)| w).sum();
        let mean: f64 = pairs.iter().map(|(w, v)| w * v).sum::<f64>() / total;
        let var: f64 = pairs
            .iter()
            .map(|(w, v)| w * (v - mean) * (v - mean))
            .sum::<f64>()
            / total;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-4);
        assert!(state.running_mean[0] != 0.0);
    }

    #[test]
    fn pool_and_upsample_shapes_and_values() {
        let grid = crate::transform::SphericalGrid::new(2);
        let mut field = SpinField::zeros(0, grid, 1);
        for j in 0..4 {
            for k in 0..4 {
                field.samples_mut()[[0, j, k]] = Complex64::new((4 * j + k) as f64, 0.0);
            }
        }
        let pooled = pool_field(&field).unwrap();
        assert_eq!(pooled.grid().bandwidth(), 1);
        // mean of the top-left 2x2 block {0,1,4,5}
        assert_abs_diff_eq!(pooled.samples()[[0, 0, 0]].re, 2.5, epsilon = 1e-15);

        let up = upsample_field(&pooled).unwrap();
        assert_eq!(up.grid().bandwidth(), 2);
        for j in 0..2 {
            for k in 0..2 {
                assert_eq!(up.samples()[[0, j, k]], pooled.samples()[[0, 0, 0]]);
            }
        }
        // pool(upsample(f)) == f exactly
        let back = pool_field(&up).unwrap();
        assert_eq!(back.samples(), pooled.samples());

        // constant field stays constant under both
        let mut c = SpinField::zeros(1, grid, 1);
        c.samples_mut().fill(Complex64::new(1.5, -0.5));
        assert!(pool_field(&c)
            .unwrap()
            .samples()
            .iter()
            .all(|z| (z - Complex64::new(1.5, -0.5)).norm() < 1e-15));

        // pooling a B=1 or odd grid fails
        assert!(pool_field(&pooled).is_err());
    }

    #[test]
    fn pooling_is_a_contraction_in_energy() {
        let mut rng = testing::seeded_rng(16);
        let grid = crate::transform::SphericalGrid::new(4);
        let mut field = SpinField::zeros(0, grid, 1);
        field
            .samples_mut()
            .mapv_inplace(|_| Complex64::new(1.0 + testing::normal(&mut rng), 0.0));
        let pooled = pool_field(&field).unwrap();
        let e_in: f64 = field.samples().iter().map(|z| z.norm_sqr()).sum::<f64>()
            / (field.grid().n_theta() * field.grid().n_phi()) as f64;
        let e_out: f64 = pooled.samples().iter().map(|z| z.norm_sqr()).sum::<f64>()
            / (pooled.grid().n_theta() * pooled.grid().n_phi()) as f64;
        assert!(e_out <= e_in + 1e-12);
    }

    #[test]
    fn identity_layer_reproduces_nonnegative_input() {
        // single spin 0, constant anchor 1, identity BN, no pooling
        let b = 8;
        let table = Arc::new(DeltaTable::new(b - 1));
        let ctx = ForwardContext::new(table);
        let grid = crate::transform::SphericalGrid::new(b);

        // nonnegative, real, bandlimited input
        let mut rng = testing::seeded_rng(17);
        let coeffs = testing::random_coeffs(&mut rng, 0, b, 1);
        let plan = ctx.plan(b, &[0]).unwrap();
        let mut field = plan.inverse(&coeffs).unwrap();
        field
            .samples_mut()
            .mapv_inplace(|z| Complex64::new(z.re, 0.0));
        // shift well above zero, then re-bandlimit so the input is exactly
        // representable
        let max_abs = field
            .samples()
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max);
        field
            .samples_mut()
            .mapv_inplace(|z| Complex64::new(z.re + 2.0 * max_abs, 0.0));
        let field = plan.inverse(&plan.forward(&field).unwrap()).unwrap();

        let mut params = FilterParams::zeros(&[0], &[0], 1, 1, b, 1);
        params.anchors_mut()[[0, 0, 0, 0, 0]] = Complex64::new(1.0, 0.0);
        let spec = LayerSpec {
            in_channels: 1,
            out_channels: 1,
            in_spins: vec![0],
            out_spins: vec![0],
            n_anchor: 1,
            bandwidth: b,
            pool_after: false,
            upsample_before: false,
            take_real_s0: true,
        };
        let mut bn = vec![BatchNormState::identity(1)];
        let input = FeatureMap::from_spatial(vec![SpinField::new(
            0,
            grid,
            Array3::from_shape_vec(
                (1, grid.n_theta(), grid.n_phi()),
                field.samples().iter().copied().collect(),
            )
            .unwrap(),
        )
        .unwrap()])
        .unwrap();
        let out = conv_layer_forward(&input, &params, &mut bn, &spec, &ctx).unwrap();
        let got = out.spatial_part(0).unwrap();
        for (a, e) in got.samples().iter().zip(field.samples().iter()) {
            assert!((a.re - e.re).abs() <= 1e-6 * (1.0 + e.re.abs()), "{a} vs {e}");
        }
    }

    #[test]
    fn zero_filter_gives_zero_output() {
        let b = 4;
        let table = Arc::new(DeltaTable::new(b - 1));
        let ctx = ForwardContext::new(table);
        let grid = crate::transform::SphericalGrid::new(b);
        let mut rng = testing::seeded_rng(18);
        let mut f = SpinField::zeros(1, grid, 2);
        f.samples_mut()
            .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
        let input = FeatureMap::from_spatial(vec![f]).unwrap();
        let params = FilterParams::zeros(&[0, 1], &[1], 2, 2, b, 2);
        let spec = LayerSpec {
            in_channels: 2,
            out_channels: 2,
            in_spins: vec![1],
            out_spins: vec![0, 1],
            n_anchor: 2,
            bandwidth: b,
            pool_after: false,
            upsample_before: false,
            take_real_s0: true,
        };
        let mut bn = vec![BatchNormState::identity(2), BatchNormState::identity(2)];
        let out = conv_layer_forward(&input, &params, &mut bn, &spec, &ctx).unwrap();
        // output spins follow the filter regardless of input spins
        assert_eq!(out.spins(), vec![0, 1]);
        for &s in &[0, 1] {
            assert!(out
                .spatial_part(s)
                .unwrap()
                .samples()
                .iter()
                .all(|z| z.norm() == 0.0));
        }
    }
}
