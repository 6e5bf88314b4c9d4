//! Coefficient-space operations: rotation, spin-weighted convolution and
//! cross-correlation, and bandlimiting.
//!
//! Rotation follows the coefficient transformation law
//! sf̂_n^ℓ ↦ Σ_m conj(D^ℓ_{m,n}(g)) sf̂_m^ℓ, which holds for every spin
//! weight. Convolution multiplies input coefficients by filter spectra that
//! are diagonal in the order m:
//!
//! ```text
//! conv:  s(F*K)_m^ℓ = Σ_{i ∈ W_F ∩ W_in} if̂_m^ℓ · sk̂_i^ℓ
//! corr:  s(F⋆K)_m^ℓ = Σ_{i ∈ W_F ∩ W_in} if̂_m^ℓ · conj(ik̂_s^ℓ)
//! ```
//!
//! Because the filter factor is independent of m, both operations commute
//! exactly with rotation.

use ndarray::{Array2, Array5};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::harmonics::{DeltaTable, Rotation};
use crate::transform::{SpinCoeffs, SpinField};

/// A set of spin-weighted functions sharing channel count and bandwidth,
/// keyed by spin weight, in either the spectral or spatial domain.
#[derive(Clone, Debug)]
pub enum FeatureMap {
    Spectral(Vec<SpinCoeffs>),
    Spatial(Vec<SpinField>),
}

impl FeatureMap {
    /// Builds a spectral feature map; parts are sorted by spin weight.
    pub fn from_spectral(mut parts: Vec<SpinCoeffs>) -> Result<Self> {
        parts.sort_by_key(|c| c.spin());
        validate_parts(parts.iter().map(|c| (c.spin(), c.bandwidth(), c.channels())))?;
        Ok(FeatureMap::Spectral(parts))
    }

    /// Builds a spatial feature map; parts are sorted by spin weight.
    pub fn from_spatial(mut parts: Vec<SpinField>) -> Result<Self> {
        parts.sort_by_key(|f| f.spin());
        validate_parts(
            parts
                .iter()
                .map(|f| (f.spin(), f.grid().bandwidth(), f.channels())),
        )?;
        Ok(FeatureMap::Spatial(parts))
    }

    pub fn spins(&self) -> Vec<i32> {
        match self {
            FeatureMap::Spectral(parts) => parts.iter().map(|c| c.spin()).collect(),
            FeatureMap::Spatial(parts) => parts.iter().map(|f| f.spin()).collect(),
        }
    }

    pub fn bandwidth(&self) -> usize {
        match self {
            FeatureMap::Spectral(parts) => parts[0].bandwidth(),
            FeatureMap::Spatial(parts) => parts[0].grid().bandwidth(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            FeatureMap::Spectral(parts) => parts[0].channels(),
            FeatureMap::Spatial(parts) => parts[0].channels(),
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, FeatureMap::Spectral(_))
    }

    pub fn spectral_parts(&self) -> Result<&[SpinCoeffs]> {
        match self {
            FeatureMap::Spectral(parts) => Ok(parts),
            FeatureMap::Spatial(_) => Err(Error::WrongDomain {
                expected: "spectral",
                got: "spatial",
            }),
        }
    }

    pub fn spatial_parts(&self) -> Result<&[SpinField]> {
        match self {
            FeatureMap::Spatial(parts) => Ok(parts),
            FeatureMap::Spectral(_) => Err(Error::WrongDomain {
                expected: "spatial",
                got: "spectral",
            }),
        }
    }

    pub fn spatial_parts_mut(&mut self) -> Result<&mut [SpinField]> {
        match self {
            FeatureMap::Spatial(parts) => Ok(parts),
            FeatureMap::Spectral(_) => Err(Error::WrongDomain {
                expected: "spatial",
                got: "spectral",
            }),
        }
    }

    pub fn spectral_part(&self, spin: i32) -> Option<&SpinCoeffs> {
        match self {
            FeatureMap::Spectral(parts) => parts.iter().find(|c| c.spin() == spin),
            FeatureMap::Spatial(_) => None,
        }
    }

    pub fn spatial_part(&self, spin: i32) -> Option<&SpinField> {
        match self {
            FeatureMap::Spatial(parts) => parts.iter().find(|f| f.spin() == spin),
            FeatureMap::Spectral(_) => None,
        }
    }

    /// Rotates a spectral feature map, applying the same g to every spin.
    pub fn rotate(&self, g: &Rotation, table: &DeltaTable) -> Result<FeatureMap> {
        let parts = self.spectral_parts()?;
        let rotated: Result<Vec<SpinCoeffs>> =
            parts.iter().map(|c| rotate_coeffs(c, g, table)).collect();
        FeatureMap::from_spectral(rotated?)
    }
}

fn validate_parts(parts: impl Iterator<Item = (i32, usize, usize)>) -> Result<()> {
    let mut seen: Option<(usize, usize)> = None;
    let mut last_spin: Option<i32> = None;
    let mut any = false;
    for (spin, bandwidth, channels) in parts {
        any = true;
        if let Some(prev) = last_spin {
            if spin == prev {
                return Err(Error::InvalidConfig(format!("duplicate spin weight {spin}")));
            }
        }
        last_spin = Some(spin);
        match seen {
            None => seen = Some((bandwidth, channels)),
            Some((b, c)) => {
                if b != bandwidth {
                    return Err(Error::BandwidthMismatch {
                        expected: b,
                        got: bandwidth,
                    });
                }
                if c != channels {
                    return Err(Error::ShapeMismatch(format!(
                        "channel count {channels} differs from {c}"
                    )));
                }
            }
        }
    }
    if !any {
        return Err(Error::InvalidConfig("feature map has no spins".into()));
    }
    Ok(())
}

/// Spectral filter bank. Entry (o, c, s_out, s_in, ℓ) couples input spin
/// s_in of channel c to output spin s_out of channel o at degree ℓ.
///
/// Only the orders appearing in `in_spins` are stored, so memory is
/// O(B·|W_out|·|W_in|) per channel pair rather than O(B²). Entries with
/// ℓ < max(|s_out|, |s_in|) are kept at zero.
#[derive(Clone, Debug)]
pub struct FilterSpectrum {
    out_spins: Vec<i32>,
    in_spins: Vec<i32>,
    /// [out_ch, in_ch, |W_out|, |W_in|, B]
    coeffs: Array5<Complex64>,
}

impl FilterSpectrum {
    pub fn zeros(
        out_spins: &[i32],
        in_spins: &[i32],
        out_channels: usize,
        in_channels: usize,
        bandwidth: usize,
    ) -> Self {
        let out_spins = sorted_unique(out_spins);
        let in_spins = sorted_unique(in_spins);
        let coeffs = Array5::zeros((
            out_channels,
            in_channels,
            out_spins.len(),
            in_spins.len(),
            bandwidth,
        ));
        FilterSpectrum {
            out_spins,
            in_spins,
            coeffs,
        }
    }

    pub fn out_spins(&self) -> &[i32] {
        &self.out_spins
    }

    pub fn in_spins(&self) -> &[i32] {
        &self.in_spins
    }

    pub fn out_channels(&self) -> usize {
        self.coeffs.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.coeffs.dim().1
    }

    pub fn bandwidth(&self) -> usize {
        self.coeffs.dim().4
    }

    pub fn array(&self) -> &Array5<Complex64> {
        &self.coeffs
    }

    pub fn spin_pair_index(&self, s_out: i32, s_in: i32) -> Option<(usize, usize)> {
        let so = self.out_spins.iter().position(|&s| s == s_out)?;
        let si = self.in_spins.iter().position(|&s| s == s_in)?;
        Some((so, si))
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, so: usize, si: usize, l: usize) -> Complex64 {
        self.coeffs[[o, c, so, si, l]]
    }

    /// Sets one entry; degrees below max(|s_out|, |s_in|) are forced to zero.
    pub fn set(&mut self, o: usize, c: usize, so: usize, si: usize, l: usize, v: Complex64) {
        let min_l = self.out_spins[so]
            .unsigned_abs()
            .max(self.in_spins[si].unsigned_abs()) as usize;
        self.coeffs[[o, c, so, si, l]] = if l < min_l {
            Complex64::new(0.0, 0.0)
        } else {
            v
        };
    }

    /// Identity filter: 1 for every valid degree on matching spin pairs of
    /// matching channels (requires square channel shape and equal spin sets).
    pub fn identity(spins: &[i32], channels: usize, bandwidth: usize) -> Self {
        let mut f = FilterSpectrum::zeros(spins, spins, channels, channels, bandwidth);
        for ch in 0..channels {
            for (si, &s) in f.in_spins.clone().iter().enumerate() {
                let so = f.out_spins.iter().position(|&x| x == s).unwrap();
                for l in 0..bandwidth {
                    f.set(ch, ch, so, si, l, Complex64::new(1.0, 0.0));
                }
            }
        }
        f
    }
}

fn sorted_unique(spins: &[i32]) -> Vec<i32> {
    let mut v = spins.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Rotates expansion coefficients: sf̂_n^ℓ ↦ Σ_m conj(D^ℓ_{m,n}(g)) sf̂_m^ℓ.
///
/// Unitary per degree; the per-ℓ coefficient norm is preserved.
pub fn rotate_coeffs(coeffs: &SpinCoeffs, g: &Rotation, table: &DeltaTable) -> Result<SpinCoeffs> {
    let b = coeffs.bandwidth();
    if table.l_max() + 1 < b {
        return Err(Error::DegreeOutOfRange {
            l: b as i64 - 1,
            l_max: table.l_max() as i64,
        });
    }
    let channels = coeffs.channels();
    let mut out = SpinCoeffs::zeros(coeffs.spin(), b, channels);
    let s_abs = coeffs.spin().unsigned_abs() as usize;
    for l in s_abs..b {
        let d = table.wigner_big_d(l, g)?;
        let half = l as i64;
        for ch in 0..channels {
            for n in -half..=half {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in -half..=half {
                    acc += d[[(m + half) as usize, (n + half) as usize]].conj()
                        * coeffs.get(ch, l, m);
                }
                out.set(ch, l, n, acc);
            }
        }
    }
    Ok(out)
}

fn common_spins(feature: &[i32], filter: &[i32]) -> Vec<i32> {
    feature
        .iter()
        .copied()
        .filter(|s| filter.contains(s))
        .collect()
}

/// Spin-weighted convolution: s(F*K)_m^ℓ = Σ_i if̂_m^ℓ sk̂_i^ℓ, summing input
/// channels per output channel. Output spins are the filter's output spins.
pub fn spin_conv(feature: &FeatureMap, filter: &FilterSpectrum) -> Result<FeatureMap> {
    let parts = feature.spectral_parts()?;
    let b = feature.bandwidth();
    if filter.bandwidth() != b {
        return Err(Error::BandwidthMismatch {
            expected: b,
            got: filter.bandwidth(),
        });
    }
    if feature.channels() != filter.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "feature has {} channels, filter expects {}",
            feature.channels(),
            filter.in_channels()
        )));
    }
    let common = common_spins(&feature.spins(), filter.in_spins());
    if common.is_empty() {
        return Err(Error::EmptySpinIntersection);
    }

    let out_ch = filter.out_channels();
    let mut outputs = Vec::with_capacity(filter.out_spins().len());
    for (so, &s_out) in filter.out_spins().iter().enumerate() {
        let mut data: Array2<Complex64> = Array2::zeros((out_ch, b * b));
        for &i in &common {
            let part = parts.iter().find(|p| p.spin() == i).unwrap();
            let si = filter.in_spins().iter().position(|&x| x == i).unwrap();
            let min_l = s_out.unsigned_abs().max(i.unsigned_abs()) as usize;
            for o in 0..out_ch {
                for c in 0..filter.in_channels() {
                    for l in min_l..b {
                        let k = filter.get(o, c, so, si, l);
                        if k.norm_sqr() == 0.0 {
                            continue;
                        }
                        let half = l as i64;
                        for m in -half..=half {
                            let idx = SpinCoeffs::index(l, m);
                            data[[o, idx]] += part.array()[[c, idx]] * k;
                        }
                    }
                }
            }
        }
        outputs.push(SpinCoeffs::from_array(s_out, b, data)?);
    }
    FeatureMap::from_spectral(outputs)
}

/// Spin-weighted cross-correlation: s(F⋆K)_m^ℓ = Σ_i if̂_m^ℓ conj(ik̂_s^ℓ),
/// with the output restricted to the requested spin weights.
pub fn spin_corr(
    feature: &FeatureMap,
    filter: &FilterSpectrum,
    out_spins: &[i32],
) -> Result<FeatureMap> {
    let parts = feature.spectral_parts()?;
    let b = feature.bandwidth();
    if filter.bandwidth() != b {
        return Err(Error::BandwidthMismatch {
            expected: b,
            got: filter.bandwidth(),
        });
    }
    if feature.channels() != filter.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "feature has {} channels, filter expects {}",
            feature.channels(),
            filter.in_channels()
        )));
    }
    let common = common_spins(&feature.spins(), filter.in_spins());
    if common.is_empty() {
        return Err(Error::EmptySpinIntersection);
    }

    let out_ch = filter.out_channels();
    let mut outputs = Vec::with_capacity(out_spins.len());
    for &s_out in sorted_unique(out_spins).iter() {
        if s_out.unsigned_abs() as usize >= b {
            return Err(Error::EmptySpectrum {
                b_new: b,
                spin: s_out,
            });
        }
        let so = filter
            .out_spins()
            .iter()
            .position(|&x| x == s_out)
            .ok_or_else(|| Error::SpinMismatch {
                spin: s_out,
                available: filter.out_spins().to_vec(),
            })?;
        let mut data: Array2<Complex64> = Array2::zeros((out_ch, b * b));
        for &i in &common {
            let part = parts.iter().find(|p| p.spin() == i).unwrap();
            let si = filter.in_spins().iter().position(|&x| x == i).unwrap();
            let min_l = s_out.unsigned_abs().max(i.unsigned_abs()) as usize;
            for o in 0..out_ch {
                for c in 0..filter.in_channels() {
                    for l in min_l..b {
                        let k = filter.get(o, c, so, si, l).conj();
                        if k.norm_sqr() == 0.0 {
                            continue;
                        }
                        let half = l as i64;
                        for m in -half..=half {
                            let idx = SpinCoeffs::index(l, m);
                            data[[o, idx]] += part.array()[[c, idx]] * k;
                        }
                    }
                }
            }
        }
        outputs.push(SpinCoeffs::from_array(s_out, b, data)?);
    }
    FeatureMap::from_spectral(outputs)
}

/// Truncates coefficients to degrees ℓ < b_new.
pub fn bandlimit(coeffs: &SpinCoeffs, b_new: usize) -> Result<SpinCoeffs> {
    if b_new > coeffs.bandwidth() {
        return Err(Error::BandwidthMismatch {
            expected: coeffs.bandwidth(),
            got: b_new,
        });
    }
    if b_new <= coeffs.spin().unsigned_abs() as usize {
        return Err(Error::EmptySpectrum {
            b_new,
            spin: coeffs.spin(),
        });
    }
    let channels = coeffs.channels();
    let mut out = SpinCoeffs::zeros(coeffs.spin(), b_new, channels);
    for ch in 0..channels {
        for l in (coeffs.spin().unsigned_abs() as usize)..b_new {
            for m in -(l as i64)..=(l as i64) {
                out.set(ch, l, m, coeffs.get(ch, l, m));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn table(b: usize) -> Arc<DeltaTable> {
        Arc::new(DeltaTable::new(b - 1))
    }

    #[test]
    fn rotate_by_identity_is_identity() {
        let mut rng = testing::seeded_rng(1);
        let t = table(8);
        let c = testing::random_coeffs(&mut rng, 1, 8, 2);
        let r = rotate_coeffs(&c, &Rotation::identity(), &t).unwrap();
        for (a, b) in r.array().iter().zip(c.array().iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn azimuthal_rotation_multiplies_by_phase() {
        let mut rng = testing::seeded_rng(2);
        let t = table(6);
        let c = testing::random_coeffs(&mut rng, 0, 6, 1);
        let alpha = 0.37;
        let r = rotate_coeffs(&c, &Rotation::new(alpha, 0.0, 0.0), &t).unwrap();
        for l in 0..6usize {
            for n in -(l as i64)..=(l as i64) {
                let expect = c.get(0, l, n) * Complex64::from_polar(1.0, n as f64 * alpha);
                let got = r.get(0, l, n);
                assert!((got - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_round_trip_and_degree_norms() {
        let mut rng = testing::seeded_rng(3);
        let t = table(8);
        for &spin in &[0, 1, -2] {
            let c = testing::random_coeffs(&mut rng, spin, 8, 2);
            let g = Rotation::random(&mut rng);
            let r = rotate_coeffs(&c, &g, &t).unwrap();
            // unitarity: per-degree energy preserved
            for l in (spin.unsigned_abs() as usize)..8 {
                for ch in 0..2 {
                    let e0: f64 = (-(l as i64)..=(l as i64))
                        .map(|m| c.get(ch, l, m).norm_sqr())
                        .sum();
                    let e1: f64 = (-(l as i64)..=(l as i64))
                        .map(|m| r.get(ch, l, m).norm_sqr())
                        .sum();
                    assert_abs_diff_eq!(e0, e1, epsilon = 1e-10 * e0.max(1.0));
                }
            }
            let back = rotate_coeffs(&r, &g.inverse(), &t).unwrap();
            let scale = c.max_norm();
            for (a, b) in back.array().iter().zip(c.array().iter()) {
                assert!((a - b).norm() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn identity_filter_is_spectral_identity() {
        let mut rng = testing::seeded_rng(4);
        let b = 8;
        let c = testing::random_coeffs(&mut rng, 0, b, 3);
        let f = FeatureMap::from_spectral(vec![c.clone()]).unwrap();
        let k = FilterSpectrum::identity(&[0], 3, b);
        let out = spin_conv(&f, &k).unwrap();
        let got = out.spectral_part(0).unwrap();
        for (a, b) in got.array().iter().zip(c.array().iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn conv_equivariance_under_rotation() {
        let mut rng = testing::seeded_rng(5);
        let b = 8;
        let t = table(b);
        for _ in 0..3 {
            let f = FeatureMap::from_spectral(vec![
                testing::random_coeffs(&mut rng, 0, b, 2),
                testing::random_coeffs(&mut rng, 1, b, 2),
            ])
            .unwrap();
            let k = random_filter(&mut rng, &[0, 1], &[0, 1], 2, 2, b);
            let g = Rotation::random(&mut rng);
            let lhs = spin_conv(&f.rotate(&g, &t).unwrap(), &k).unwrap();
            let rhs = spin_conv(&f, &k).unwrap().rotate(&g, &t).unwrap();
            assert_feature_close(&lhs, &rhs, 1e-10);
        }
    }

    #[test]
    fn corr_equivariance_and_restriction() {
        let mut rng = testing::seeded_rng(6);
        let b = 8;
        let t = table(b);
        let f = FeatureMap::from_spectral(vec![
            testing::random_coeffs(&mut rng, 0, b, 2),
            testing::random_coeffs(&mut rng, 1, b, 2),
        ])
        .unwrap();
        let k = random_filter(&mut rng, &[0, 1, 2], &[0, 1], 2, 2, b);
        let g = Rotation::random(&mut rng);
        let lhs = spin_corr(&f.rotate(&g, &t).unwrap(), &k, &[0, 1]).unwrap();
        let rhs = spin_corr(&f, &k, &[0, 1]).unwrap().rotate(&g, &t).unwrap();
        assert_feature_close(&lhs, &rhs, 1e-10);
        assert_eq!(lhs.spins(), vec![0, 1]);
    }

    #[test]
    fn corr_with_zeroed_filter_spin_gives_zero_component() {
        let mut rng = testing::seeded_rng(7);
        let b = 6;
        let f = FeatureMap::from_spectral(vec![testing::random_coeffs(&mut rng, 0, b, 1)]).unwrap();
        // filter supports output spins {0,1} but all entries at spin 1 are zero
        let mut k = FilterSpectrum::zeros(&[0, 1], &[0], 1, 1, b);
        for l in 0..b {
            k.set(0, 0, 0, 0, l, Complex64::new(1.0, -0.5));
        }
        let out = spin_corr(&f, &k, &[0, 1]).unwrap();
        assert!(out.spectral_part(1).unwrap().max_norm() == 0.0);
        assert!(out.spectral_part(0).unwrap().max_norm() > 0.0);
    }

    #[test]
    fn conv_linearity_in_the_feature() {
        let mut rng = testing::seeded_rng(8);
        let b = 6;
        let c1 = testing::random_coeffs(&mut rng, 1, b, 2);
        let c2 = testing::random_coeffs(&mut rng, 1, b, 2);
        let (a, bb) = (Complex64::new(0.7, -0.1), Complex64::new(-1.3, 0.4));
        let mut sum = SpinCoeffs::zeros(1, b, 2);
        for (i, v) in sum.array_mut().iter_mut().enumerate() {
            let ch = i / (b * b);
            let idx = i % (b * b);
            *v = a * c1.array()[[ch, idx]] + bb * c2.array()[[ch, idx]];
        }
        let k = random_filter(&mut rng, &[0, 1], &[1], 3, 2, b);
        let f_sum = FeatureMap::from_spectral(vec![sum]).unwrap();
        let out_sum = spin_conv(&f_sum, &k).unwrap();
        let out1 = spin_conv(&FeatureMap::from_spectral(vec![c1]).unwrap(), &k).unwrap();
        let out2 = spin_conv(&FeatureMap::from_spectral(vec![c2]).unwrap(), &k).unwrap();
        for &s in &[0, 1] {
            let o = out_sum.spectral_part(s).unwrap();
            let o1 = out1.spectral_part(s).unwrap();
            let o2 = out2.spectral_part(s).unwrap();
            for ((x, y), z) in o.array().iter().zip(o1.array().iter()).zip(o2.array().iter()) {
                assert!((x - (a * y + bb * z)).norm() < 1e-12 * x.norm().max(1.0));
            }
        }
    }

    #[test]
    fn empty_intersection_is_an_error() {
        let mut rng = testing::seeded_rng(9);
        let f = FeatureMap::from_spectral(vec![testing::random_coeffs(&mut rng, 2, 6, 1)]).unwrap();
        let k = random_filter(&mut rng, &[0], &[0, 1], 1, 1, 6);
        assert!(matches!(spin_conv(&f, &k), Err(Error::EmptySpinIntersection)));
    }

    #[test]
    fn bandlimit_identity_delta_and_energy() {
        let mut rng = testing::seeded_rng(10);
        let b = 8;
        let c = testing::random_coeffs(&mut rng, 0, b, 1);
        let same = bandlimit(&c, b).unwrap();
        assert_eq!(same.array(), c.array());

        let mut delta = SpinCoeffs::zeros(0, b, 1);
        delta.set(0, 5, 2, Complex64::new(1.0, 0.0));
        let cut = bandlimit(&delta, 5).unwrap();
        assert_eq!(cut.max_norm(), 0.0);

        let truncated = bandlimit(&c, 4).unwrap();
        assert!(truncated.energy(0) <= c.energy(0));

        assert!(matches!(
            bandlimit(&testing::random_coeffs(&mut rng, 2, 8, 1), 2),
            Err(Error::EmptySpectrum { .. })
        ));
    }

    pub(crate) fn random_filter<R: rand::Rng + ?Sized>(
        rng: &mut R,
        out_spins: &[i32],
        in_spins: &[i32],
        out_ch: usize,
        in_ch: usize,
        b: usize,
    ) -> FilterSpectrum {
        let mut k = FilterSpectrum::zeros(out_spins, in_spins, out_ch, in_ch, b);
        for o in 0..out_ch {
            for c in 0..in_ch {
                for so in 0..out_spins.len() {
                    for si in 0..in_spins.len() {
                        for l in 0..b {
                            k.set(
                                o,
                                c,
                                so,
                                si,
                                l,
                                Complex64::new(testing::normal(rng), testing::normal(rng)),
                            );
                        }
                    }
                }
            }
        }
        k
    }

    fn assert_feature_close(a: &FeatureMap, b: &FeatureMap, tol: f64) {
        assert_eq!(a.spins(), b.spins());
        for &s in &a.spins() {
            let x = a.spectral_part(s).unwrap();
            let y = b.spectral_part(s).unwrap();
            let scale = x.max_norm().max(y.max_norm()).max(1e-30);
            for (p, q) in x.array().iter().zip(y.array().iter()) {
                assert!(
                    (p - q).norm() <= tol * scale,
                    "spin {s}: {p} vs {q} (scale {scale})"
                );
            }
        }
    }
}
