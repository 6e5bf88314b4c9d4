//! Equiangular grid, torus extension, quadrature weights, and the forward /
//! inverse spin-weighted spherical harmonic transform.
//!
//! The algorithm works on the torus: a spin-s field sampled on the 2B×2B
//! equiangular grid is extended to 4B×2B by the reflection
//! f'(2π-θ, φ) = (-1)^s f(θ, φ+π), weighted along θ, and run through a 2D
//! FFT, giving
//!
//! ```text
//! I_{k,m} = 2π/(NθNφ) Σ_{θ,φ} f'(θ,φ) w(θ) e^{-ikθ} e^{-imφ}.
//! ```
//!
//! Coefficients then follow from the Δ-matrix contraction
//!
//! ```text
//! sf̂_m^ℓ = (-1)^s i^{m+s} sqrt((2ℓ+1)/4π) Σ_k Δ^ℓ_{k,m} Δ^ℓ_{k,-s} I_{k,m},
//! ```
//!
//! and the inverse runs the same contraction backwards onto torus Fourier
//! modes followed by an inverse 2D FFT and restriction to the sphere.
//! The φ-shift by π in the extension is what realizes the per-mode parity
//! (-1)^{m+s}: shifting φ by half a period multiplies mode m by (-1)^m.
//!
//! A [`TransformPlan`] precomputes the per-spin products Δ^ℓ_{k,m} Δ^ℓ_{k,-s}
//! and the quadrature weights once per (bandwidth, spin set) and is immutable
//! afterwards, so one plan can serve many channels, layers, and threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_cols, fft_rows, FftBackend, RustFftBackend};
use crate::harmonics::{i_pow, neg_one_pow, DeltaTable};
use crate::par;

/// Equiangular sampling grid: θ_j = π(j+1/2)/(2B), φ_k = πk/B.
///
/// The half-sample θ offset keeps every sample strictly inside (0, π); local
/// tangent frames are well defined at all grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SphericalGrid {
    bandwidth: usize,
}

impl SphericalGrid {
    pub fn new(bandwidth: usize) -> Self {
        assert!(bandwidth > 0, "bandwidth must be positive");
        SphericalGrid { bandwidth }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn n_theta(&self) -> usize {
        2 * self.bandwidth
    }

    pub fn n_phi(&self) -> usize {
        2 * self.bandwidth
    }

    /// Colatitude of row j; also valid for the extended torus rows j < 4B.
    pub fn theta(&self, j: usize) -> f64 {
        PI * (j as f64 + 0.5) / (2.0 * self.bandwidth as f64)
    }

    pub fn phi(&self, k: usize) -> f64 {
        PI * k as f64 / self.bandwidth as f64
    }
}

/// Multi-channel samples of a spin-s function on a [`SphericalGrid`].
#[derive(Clone, Debug)]
pub struct SpinField {
    spin: i32,
    grid: SphericalGrid,
    /// [channels, n_theta, n_phi]
    samples: Array3<Complex64>,
    real: bool,
}

impl SpinField {
    pub fn new(spin: i32, grid: SphericalGrid, samples: Array3<Complex64>) -> Result<Self> {
        let (_, nt, np) = samples.dim();
        if nt != grid.n_theta() || np != grid.n_phi() {
            return Err(Error::ShapeMismatch(format!(
                "samples are {}x{}, grid wants {}x{}",
                nt,
                np,
                grid.n_theta(),
                grid.n_phi()
            )));
        }
        Ok(SpinField {
            spin,
            grid,
            samples,
            real: false,
        })
    }

    pub fn zeros(spin: i32, grid: SphericalGrid, channels: usize) -> Self {
        SpinField {
            spin,
            grid,
            samples: Array3::zeros((channels, grid.n_theta(), grid.n_phi())),
            real: false,
        }
    }

    pub fn spin(&self) -> i32 {
        self.spin
    }

    pub fn grid(&self) -> SphericalGrid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.samples.dim().0
    }

    pub fn samples(&self) -> &Array3<Complex64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.samples
    }

    /// Whether the field is flagged as real-valued (spin 0 only).
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// Flags a spin-0 field as real, zeroing any imaginary residue.
    pub fn mark_real(&mut self) -> Result<()> {
        if self.spin != 0 {
            return Err(Error::SpinNotZero(self.spin));
        }
        self.samples.mapv_inplace(|z| Complex64::new(z.re, 0.0));
        self.real = true;
        Ok(())
    }

    /// Rounds every sample through f32, modeling single-precision storage.
    pub fn quantize_f32(&mut self) {
        self.samples
            .mapv_inplace(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64));
    }
}

/// Triangular array of expansion coefficients sf̂_m^ℓ for |m| ≤ ℓ < B.
///
/// Flattened per channel with index ℓ² + (m + ℓ); entries with ℓ < |spin| are
/// identically zero (the basis only exists for ℓ ≥ |s|).
#[derive(Clone, Debug)]
pub struct SpinCoeffs {
    spin: i32,
    bandwidth: usize,
    /// [channels, bandwidth²]
    coeffs: Array2<Complex64>,
}

impl SpinCoeffs {
    pub fn zeros(spin: i32, bandwidth: usize, channels: usize) -> Self {
        SpinCoeffs {
            spin,
            bandwidth,
            coeffs: Array2::zeros((channels, bandwidth * bandwidth)),
        }
    }

    /// Wraps a raw [channels, B²] array, zeroing the ℓ < |spin| block.
    pub fn from_array(spin: i32, bandwidth: usize, coeffs: Array2<Complex64>) -> Result<Self> {
        if coeffs.dim().1 != bandwidth * bandwidth {
            return Err(Error::ShapeMismatch(format!(
                "coefficient array has {} entries per channel, bandwidth {} wants {}",
                coeffs.dim().1,
                bandwidth,
                bandwidth * bandwidth
            )));
        }
        let mut out = SpinCoeffs {
            spin,
            bandwidth,
            coeffs,
        };
        let s = spin.unsigned_abs() as usize;
        for l in 0..s.min(out.bandwidth) {
            for m in -(l as i64)..=(l as i64) {
                let idx = Self::index(l, m);
                for ch in 0..out.channels() {
                    out.coeffs[[ch, idx]] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn index(l: usize, m: i64) -> usize {
        debug_assert!(m.abs() as usize <= l);
        l * l + (m + l as i64) as usize
    }

    pub fn spin(&self) -> i32 {
        self.spin
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.coeffs.dim().0
    }

    pub fn array(&self) -> &Array2<Complex64> {
        &self.coeffs
    }

    pub fn array_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.coeffs
    }

    #[inline]
    pub fn get(&self, channel: usize, l: usize, m: i64) -> Complex64 {
        self.coeffs[[channel, Self::index(l, m)]]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, l: usize, m: i64, value: Complex64) {
        self.coeffs[[channel, Self::index(l, m)]] = value;
    }

    /// Max-norm over all channels and entries.
    pub fn max_norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Σ |coeff|² over one channel.
    pub fn energy(&self, channel: usize) -> f64 {
        self.coeffs
            .index_axis(Axis(0), channel)
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }

    pub fn quantize_f32(&mut self) {
        self.coeffs
            .mapv_inplace(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64));
    }
}

/// Quadrature weights ŵ(p) = ∫_0^π e^{ipθ} sin θ dθ and their spatial form on
/// the 4B-point torus θ-axis.
///
/// Analytically ŵ(p) = 2/(1-p²) for even p, ±iπ/2 for p = ±1, and 0 for odd
/// |p| > 1. The spatial weights w(θ_j) = Σ_{|p| ≤ 2B} ŵ(p) e^{ipθ_j} are real.
#[derive(Clone, Debug)]
pub struct QuadratureWeights {
    bandwidth: usize,
    /// ŵ(p) for p ∈ [-2B, 2B], indexed p + 2B.
    spectral: Vec<Complex64>,
    /// w(θ_j) for the 4B extended θ rows.
    spatial: Vec<f64>,
}

impl QuadratureWeights {
    pub fn new(bandwidth: usize) -> Self {
        let b = bandwidth as i64;
        let spectral: Vec<Complex64> = (-2 * b..=2 * b).map(w_hat_analytic).collect();
        let n_theta = 4 * bandwidth;
        let mut spatial = Vec::with_capacity(n_theta);
        for j in 0..n_theta {
            let theta = PI * (j as f64 + 0.5) / (2.0 * bandwidth as f64);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, w) in spectral.iter().enumerate() {
                let p = i as i64 - 2 * b;
                acc += w * Complex64::from_polar(1.0, p as f64 * theta);
            }
            debug_assert!(acc.im.abs() < 1e-9, "spatial weight has imaginary residue");
            spatial.push(acc.re);
        }
        QuadratureWeights {
            bandwidth,
            spectral,
            spatial,
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// ŵ(p) for |p| ≤ 2B.
    pub fn spectral(&self, p: i64) -> Complex64 {
        let b = self.bandwidth as i64;
        assert!(p.abs() <= 2 * b);
        self.spectral[(p + 2 * b) as usize]
    }

    /// w(θ_j) on the extended θ-axis, j < 4B.
    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }
}

/// ŵ(p) = ∫_0^π e^{ipθ} sin θ dθ in closed form.
fn w_hat_analytic(p: i64) -> Complex64 {
    if p.rem_euclid(2) == 0 {
        Complex64::new(2.0 / (1.0 - (p * p) as f64), 0.0)
    } else if p == 1 {
        Complex64::new(0.0, PI / 2.0)
    } else if p == -1 {
        Complex64::new(0.0, -PI / 2.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Extends a spin field to the torus: output rows j < 2B copy the input;
/// rows j ≥ 2B hold (-1)^s f(θ_{4B-1-j}, φ + π).
pub fn torus_extend(field: &SpinField) -> Array3<Complex64> {
    let b = field.grid().bandwidth();
    let (channels, n_theta, n_phi) = field.samples().dim();
    let parity = neg_one_pow(field.spin() as i64);
    let mut out = Array3::zeros((channels, 2 * n_theta, n_phi));
    for ch in 0..channels {
        for j in 0..n_theta {
            for k in 0..n_phi {
                out[[ch, j, k]] = field.samples()[[ch, j, k]];
            }
        }
        for j in n_theta..2 * n_theta {
            let src_row = 4 * b - 1 - j;
            for k in 0..n_phi {
                let src_col = (k + b) % n_phi;
                out[[ch, j, k]] = parity * field.samples()[[ch, src_row, src_col]];
            }
        }
    }
    out
}

/// Per-spin precomputation: Δ-products and assembly phases.
struct SpinTables {
    /// products[ℓ]: row-major (m, k) of Δ^ℓ_{k,m} Δ^ℓ_{k,-s}, both indices
    /// ascending from -ℓ.
    products: Vec<Vec<f64>>,
    /// phases[ℓ² + m + ℓ] = (-1)^s i^{m+s} sqrt((2ℓ+1)/4π); shared by the
    /// forward contraction and the inverse synthesis.
    phases: Vec<Complex64>,
}

impl SpinTables {
    fn new(spin: i32, bandwidth: usize, table: &DeltaTable) -> Self {
        let s = spin as i64;
        let mut products = Vec::with_capacity(bandwidth);
        let mut phases = vec![Complex64::new(0.0, 0.0); bandwidth * bandwidth];
        for l in 0..bandwidth {
            let half = l as i64;
            let dim = 2 * l + 1;
            let mut prod = vec![0.0; dim * dim];
            if half >= s.abs() {
                for m in -half..=half {
                    for k in -half..=half {
                        prod[(m + half) as usize * dim + (k + half) as usize] =
                            table.get(l, k, m) * table.get(l, k, -s);
                    }
                    let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
                    phases[SpinCoeffs::index(l, m)] = neg_one_pow(s) * i_pow(m + s) * norm;
                }
            }
            products.push(prod);
        }
        SpinTables { products, phases }
    }
}

/// Reusable transform plan for one bandwidth and a set of spin weights.
pub struct TransformPlan {
    grid: SphericalGrid,
    table: Arc<DeltaTable>,
    weights: QuadratureWeights,
    fft: Arc<dyn FftBackend>,
    per_spin: BTreeMap<i32, SpinTables>,
    parallel: bool,
}

impl TransformPlan {
    /// Builds a plan; requires `table.l_max() ≥ bandwidth - 1`.
    pub fn new(bandwidth: usize, spins: &[i32], table: Arc<DeltaTable>) -> Result<Self> {
        if table.l_max() + 1 < bandwidth {
            return Err(Error::DegreeOutOfRange {
                l: bandwidth as i64 - 1,
                l_max: table.l_max() as i64,
            });
        }
        let mut per_spin = BTreeMap::new();
        for &s in spins {
            per_spin
                .entry(s)
                .or_insert_with(|| SpinTables::new(s, bandwidth, &table));
        }
        Ok(TransformPlan {
            grid: SphericalGrid::new(bandwidth),
            table,
            weights: QuadratureWeights::new(bandwidth),
            fft: RustFftBackend::shared(),
            per_spin,
            parallel: par::parallel_available(),
        })
    }

    /// Toggles channel-level parallelism (a no-op without the `parallel` feature).
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel && par::parallel_available();
        self
    }

    /// Swaps the FFT backend.
    pub fn with_fft(mut self, fft: Arc<dyn FftBackend>) -> Self {
        self.fft = fft;
        self
    }

    pub fn bandwidth(&self) -> usize {
        self.grid.bandwidth()
    }

    pub fn grid(&self) -> SphericalGrid {
        self.grid
    }

    pub fn spins(&self) -> Vec<i32> {
        self.per_spin.keys().copied().collect()
    }

    pub fn table(&self) -> &Arc<DeltaTable> {
        &self.table
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    fn spin_tables(&self, spin: i32) -> Result<&SpinTables> {
        self.per_spin.get(&spin).ok_or_else(|| Error::SpinMismatch {
            spin,
            available: self.spins(),
        })
    }

    fn check_bandwidth(&self, got: usize) -> Result<()> {
        if got != self.bandwidth() {
            return Err(Error::BandwidthMismatch {
                expected: self.bandwidth(),
                got,
            });
        }
        Ok(())
    }

    /// Forward transform: grid samples to coefficients. Exact (to roundoff)
    /// for fields bandlimited at the plan's bandwidth.
    pub fn forward(&self, field: &SpinField) -> Result<SpinCoeffs> {
        self.check_bandwidth(field.grid().bandwidth())?;
        let tables = self.spin_tables(field.spin())?;
        let b = self.bandwidth();
        let channels = field.channels();
        let per_channel: Vec<Vec<Complex64>> = par::map_indexed(self.parallel, channels, |ch| {
            self.forward_channel(field.samples().index_axis(Axis(0), ch), field.spin(), tables)
        });
        let mut coeffs = SpinCoeffs::zeros(field.spin(), b, channels);
        for (ch, data) in per_channel.into_iter().enumerate() {
            for (idx, v) in data.into_iter().enumerate() {
                coeffs.array_mut()[[ch, idx]] = v;
            }
        }
        Ok(coeffs)
    }

    fn forward_channel(
        &self,
        samples: ArrayView2<'_, Complex64>,
        spin: i32,
        tables: &SpinTables,
    ) -> Vec<Complex64> {
        let b = self.bandwidth();
        let n_theta = 4 * b;
        let n_phi = 2 * b;
        let parity = neg_one_pow(spin as i64);
        let norm = 2.0 * PI / (n_theta * n_phi) as f64;
        let w = self.weights.spatial();

        // extend to the torus with the θ-weights folded in
        let mut torus: Array2<Complex64> = Array2::zeros((n_theta, n_phi));
        for j in 0..2 * b {
            let scale = w[j] * norm;
            for k in 0..n_phi {
                torus[[j, k]] = samples[[j, k]] * scale;
            }
        }
        for j in 2 * b..n_theta {
            let scale = parity * w[j] * norm;
            let src_row = n_theta - 1 - j;
            for k in 0..n_phi {
                torus[[j, k]] = samples[[src_row, (k + b) % n_phi]] * scale;
            }
        }

        fft_rows(self.fft.as_ref(), &mut torus, false);
        fft_cols(self.fft.as_ref(), &mut torus, false);

        // I_t[m + B-1][k + B-1] = e^{-iπk/(4B)} FFT[k mod 4B][m mod 2B]
        let win = 2 * b - 1;
        let bi = b as i64;
        let mut i_t: Array2<Complex64> = Array2::zeros((win, win));
        for m in -(bi - 1)..=(bi - 1) {
            let m_idx = m.rem_euclid(n_phi as i64) as usize;
            for k in -(bi - 1)..=(bi - 1) {
                let k_idx = k.rem_euclid(n_theta as i64) as usize;
                let phase = Complex64::from_polar(1.0, -PI * k as f64 / n_theta as f64);
                i_t[[(m + bi - 1) as usize, (k + bi - 1) as usize]] =
                    phase * torus[[k_idx, m_idx]];
            }
        }

        let mut out = vec![Complex64::new(0.0, 0.0); b * b];
        let s_abs = spin.unsigned_abs() as usize;
        for l in s_abs..b {
            let half = l as i64;
            let dim = 2 * l + 1;
            let prod = &tables.products[l];
            for m in -half..=half {
                let row = &prod[(m + half) as usize * dim..(m + half + 1) as usize * dim];
                let it_row = i_t.row((m + bi - 1) as usize);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in -half..=half {
                    acc += row[(k + half) as usize] * it_row[(k + bi - 1) as usize];
                }
                let idx = SpinCoeffs::index(l, m);
                out[idx] = tables.phases[idx] * acc;
            }
        }
        out
    }

    /// Inverse transform: coefficients to grid samples, evaluated spectrally
    /// (Δ contraction onto torus Fourier modes, inverse 2D FFT, restriction).
    pub fn inverse(&self, coeffs: &SpinCoeffs) -> Result<SpinField> {
        self.check_bandwidth(coeffs.bandwidth())?;
        let tables = self.spin_tables(coeffs.spin())?;
        let channels = coeffs.channels();
        let per_channel: Vec<Array2<Complex64>> = par::map_indexed(self.parallel, channels, |ch| {
            self.inverse_channel(coeffs, ch, tables)
        });
        let mut field = SpinField::zeros(coeffs.spin(), self.grid, channels);
        for (ch, data) in per_channel.into_iter().enumerate() {
            field
                .samples_mut()
                .index_axis_mut(Axis(0), ch)
                .assign(&data);
        }
        Ok(field)
    }

    fn inverse_channel(
        &self,
        coeffs: &SpinCoeffs,
        channel: usize,
        tables: &SpinTables,
    ) -> Array2<Complex64> {
        let b = self.bandwidth();
        let bi = b as i64;
        let n_theta = 4 * b;
        let n_phi = 2 * b;

        // g[k + B-1][m + B-1] = Σ_ℓ phase(ℓ,m) Δ^ℓ_{k,m} Δ^ℓ_{k,-s} coeff(ℓ,m)
        let win = 2 * b - 1;
        let mut g: Array2<Complex64> = Array2::zeros((win, win));
        let s_abs = coeffs.spin().unsigned_abs() as usize;
        for l in s_abs..b {
            let half = l as i64;
            let dim = 2 * l + 1;
            let prod = &tables.products[l];
            for m in -half..=half {
                let idx = SpinCoeffs::index(l, m);
                let scaled = tables.phases[idx] * coeffs.get(channel, l, m);
                if scaled.norm_sqr() == 0.0 {
                    continue;
                }
                let row = &prod[(m + half) as usize * dim..(m + half + 1) as usize * dim];
                for k in -half..=half {
                    g[[(k + bi - 1) as usize, (m + bi - 1) as usize]] +=
                        scaled * row[(k + half) as usize];
                }
            }
        }

        // place into the torus spectrum with the θ half-sample phase
        let mut torus: Array2<Complex64> = Array2::zeros((n_theta, n_phi));
        for k in -(bi - 1)..=(bi - 1) {
            let k_idx = k.rem_euclid(n_theta as i64) as usize;
            let phase = Complex64::from_polar(1.0, -PI * k as f64 / n_theta as f64);
            for m in -(bi - 1)..=(bi - 1) {
                let m_idx = m.rem_euclid(n_phi as i64) as usize;
                torus[[k_idx, m_idx]] =
                    phase * g[[(k + bi - 1) as usize, (m + bi - 1) as usize]];
            }
        }

        // θ-axis wants Σ_k G e^{-2πi kj/Nθ} (a forward FFT over the k index),
        // φ-axis wants Σ_m G e^{+2πi ml/Nφ} (an inverse FFT); both unnormalized.
        fft_rows(self.fft.as_ref(), &mut torus, true);
        fft_cols(self.fft.as_ref(), &mut torus, false);

        torus.slice_move(ndarray::s![..2 * b, ..])
    }

    /// Quadrature integral ∫ f dΩ per channel, via the torus extension.
    pub fn integral(&self, field: &SpinField) -> Result<Vec<Complex64>> {
        self.check_bandwidth(field.grid().bandwidth())?;
        let norm = 2.0 * PI / (4 * self.bandwidth() * 2 * self.bandwidth()) as f64;
        let extended = torus_extend(field);
        let w = self.weights.spatial();
        let mut out = Vec::with_capacity(field.channels());
        for ch in 0..field.channels() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..4 * self.bandwidth() {
                let row_w = w[j] * norm;
                for k in 0..2 * self.bandwidth() {
                    acc += extended[[ch, j, k]] * row_w;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Quadrature-weighted spatial energy ∫ |f|² dΩ per channel. Exact for
    /// fields bandlimited at the plan's bandwidth (|f|² has θ-content below
    /// the 2B weight support).
    pub fn spatial_energy(&self, field: &SpinField) -> Result<Vec<f64>> {
        self.check_bandwidth(field.grid().bandwidth())?;
        let norm = 2.0 * PI / (4 * self.bandwidth() * 2 * self.bandwidth()) as f64;
        let extended = torus_extend(field);
        let w = self.weights.spatial();
        let mut out = Vec::with_capacity(field.channels());
        for ch in 0..field.channels() {
            let mut acc = 0.0;
            for j in 0..4 * self.bandwidth() {
                let row_w = w[j] * norm;
                for k in 0..2 * self.bandwidth() {
                    acc += extended[[ch, j, k]].norm_sqr() * row_w;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Integral of the pointwise magnitude, ∫ |f| dΩ per channel. |f| is not
/// bandlimited, so this is approximate quadrature; it is still exactly
/// invariant under grid-aligned φ shifts.
pub fn magnitude_integral(plan: &TransformPlan, field: &SpinField) -> Result<Vec<f64>> {
    if field.grid().bandwidth() != plan.bandwidth() {
        return Err(Error::BandwidthMismatch {
            expected: plan.bandwidth(),
            got: field.grid().bandwidth(),
        });
    }
    let b = plan.bandwidth();
    let norm = 2.0 * PI / (4 * b * 2 * b) as f64;
    let w = plan.weights().spatial();
    let mut out = Vec::with_capacity(field.channels());
    for ch in 0..field.channels() {
        let mut acc = 0.0;
        // |f'|(2π-θ, φ) = |f|(θ, φ+π): magnitudes extend with spin-0 parity,
        // so the two torus halves contribute w(θ_j) + w(θ_{4B-1-j}) per row.
        for j in 0..2 * b {
            let row_w = (w[j] + w[4 * b - 1 - j]) * norm;
            for k in 0..2 * b {
                acc += field.samples()[[ch, j, k]].norm() * row_w;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_match_numerical_integration() {
        // Simpson quadrature of ∫_0^π e^{ipθ} sin θ dθ against the closed form.
        let b = 6;
        let w = QuadratureWeights::new(b);
        let n = 4096;
        let h = PI / n as f64;
        for p in -(2 * b as i64)..=(2 * b as i64) {
            let f = |theta: f64| Complex64::from_polar(theta.sin(), p as f64 * theta);
            let mut acc = f(0.0) + f(PI);
            for i in 1..n {
                let coef = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += coef * f(i as f64 * h);
            }
            acc *= h / 3.0;
            let expect = w.spectral(p);
            assert_abs_diff_eq!(acc.re, expect.re, epsilon = 1e-10);
            assert_abs_diff_eq!(acc.im, expect.im, epsilon = 1e-10);
        }
    }

    #[test]
    fn extension_of_constant_scalar_field_is_constant() {
        let grid = SphericalGrid::new(4);
        let mut field = SpinField::zeros(0, grid, 1);
        field.samples_mut().fill(Complex64::new(3.5, 0.0));
        let ext = torus_extend(&field);
        for v in ext.iter() {
            assert_abs_diff_eq!(v.re, 3.5, epsilon = 0.0);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn extension_of_cos_theta_continues_analytically() {
        // f = cos θ (∝ Y_1^0) extends to cos θ over the whole period.
        let b = 8;
        let grid = SphericalGrid::new(b);
        let mut field = SpinField::zeros(0, grid, 1);
        for j in 0..grid.n_theta() {
            let v = Complex64::new(grid.theta(j).cos(), 0.0);
            for k in 0..grid.n_phi() {
                field.samples_mut()[[0, j, k]] = v;
            }
        }
        let ext = torus_extend(&field);
        for j in 0..4 * b {
            for k in 0..grid.n_phi() {
                assert_abs_diff_eq!(ext[[0, j, k]].re, grid.theta(j).cos(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn extension_restricts_to_input_bit_exactly() {
        let mut rng = testing::seeded_rng(11);
        let grid = SphericalGrid::new(4);
        let mut field = SpinField::zeros(1, grid, 2);
        field
            .samples_mut()
            .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
        let ext = torus_extend(&field);
        for ch in 0..2 {
            for j in 0..grid.n_theta() {
                for k in 0..grid.n_phi() {
                    assert_eq!(ext[[ch, j, k]], field.samples()[[ch, j, k]]);
                }
            }
        }
    }

    #[test]
    fn constant_field_forward_gives_single_coefficient() {
        let b = 8;
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[0], table).unwrap();
        let mut field = SpinField::zeros(0, plan.grid(), 1);
        let c = 0.75;
        field.samples_mut().fill(Complex64::new(c, 0.0));
        let coeffs = plan.forward(&field).unwrap();
        let expect = c * (4.0 * PI).sqrt();
        assert_abs_diff_eq!(coeffs.get(0, 0, 0).re, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs.get(0, 0, 0).im, 0.0, epsilon = 1e-12);
        for l in 1..b {
            for m in -(l as i64)..=(l as i64) {
                assert!(coeffs.get(0, l, m).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_vector_round_trips_through_sampling() {
        // Sample 1Y_1^2 pointwise and recover a delta coefficient at (ℓ=2, m=1).
        let b = 8;
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[1], table.clone()).unwrap();
        let grid = plan.grid();
        let mut field = SpinField::zeros(1, grid, 1);
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                field.samples_mut()[[0, j, k]] =
                    table.swsh_eval(1, 2, 1, grid.theta(j), grid.phi(k)).unwrap();
            }
        }
        let coeffs = plan.forward(&field).unwrap();
        for l in 1..b {
            for m in -(l as i64)..=(l as i64) {
                let expect = if l == 2 && m == 1 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(coeffs.get(0, l, m).re, expect, epsilon = 1e-10);
                assert_abs_diff_eq!(coeffs.get(0, l, m).im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_field_gives_zero_coefficients_and_back() {
        let b = 4;
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[2], table).unwrap();
        let field = SpinField::zeros(2, plan.grid(), 3);
        let coeffs = plan.forward(&field).unwrap();
        assert_eq!(coeffs.max_norm(), 0.0);
        let back = plan.inverse(&coeffs).unwrap();
        assert!(back.samples().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn delta_coefficient_synthesizes_constant_ones() {
        let b = 8;
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[0], table).unwrap();
        let mut coeffs = SpinCoeffs::zeros(0, b, 1);
        coeffs.set(0, 0, 0, Complex64::new((4.0 * PI).sqrt(), 0.0));
        let field = plan.inverse(&coeffs).unwrap();
        for v in field.samples().iter() {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn round_trip_identity_on_random_coefficients() {
        let mut rng = testing::seeded_rng(3);
        for &spin in &[0i32, -1, 1, 2] {
            let b = 8;
            let table = Arc::new(DeltaTable::new(b - 1));
            let plan = TransformPlan::new(b, &[spin], table).unwrap();
            let coeffs = testing::random_coeffs(&mut rng, spin, b, 2);
            let field = plan.inverse(&coeffs).unwrap();
            let back = plan.forward(&field).unwrap();
            let scale = coeffs.max_norm();
            for (a, e) in back.array().iter().zip(coeffs.array().iter()) {
                assert!((a - e).norm() <= 1e-10 * scale, "spin {spin}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn inverse_matches_naive_pointwise_synthesis() {
        let mut rng = testing::seeded_rng(5);
        let b = 6;
        let table = Arc::new(DeltaTable::new(b - 1));
        for &spin in &[0i32, 1] {
            let plan = TransformPlan::new(b, &[spin], table.clone()).unwrap();
            let coeffs = testing::random_coeffs(&mut rng, spin, b, 1);
            let field = plan.inverse(&coeffs).unwrap();
            let grid = plan.grid();
            for j in 0..grid.n_theta() {
                for k in 0..grid.n_phi() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in (spin.unsigned_abs() as usize)..b {
                        for m in -(l as i64)..=(l as i64) {
                            acc += coeffs.get(0, l, m)
                                * table
                                    .swsh_eval(spin as i64, l, m, grid.theta(j), grid.phi(k))
                                    .unwrap();
                        }
                    }
                    let got = field.samples()[[0, j, k]];
                    assert!((got - acc).norm() <= 1e-9 * coeffs.max_norm());
                }
            }
        }
    }

    #[test]
    fn bandwidth_and_spin_mismatches_are_rejected() {
        let table = Arc::new(DeltaTable::new(7));
        let plan = TransformPlan::new(8, &[0], table.clone()).unwrap();
        let field = SpinField::zeros(0, SphericalGrid::new(4), 1);
        assert!(matches!(
            plan.forward(&field),
            Err(Error::BandwidthMismatch { .. })
        ));
        let field = SpinField::zeros(1, SphericalGrid::new(8), 1);
        assert!(matches!(plan.forward(&field), Err(Error::SpinMismatch { .. })));
        // table too small for the requested bandwidth
        assert!(TransformPlan::new(16, &[0], table).is_err());
    }

    #[test]
    fn parallel_and_sequential_paths_agree_exactly() {
        let mut rng = testing::seeded_rng(9);
        let b = 8;
        let table = Arc::new(DeltaTable::new(b - 1));
        let coeffs = testing::random_coeffs(&mut rng, 1, b, 4);
        let plan_par = TransformPlan::new(b, &[1], table.clone()).unwrap();
        let plan_seq = TransformPlan::new(b, &[1], table).unwrap().with_parallel(false);
        let f_par = plan_par.inverse(&coeffs).unwrap();
        let f_seq = plan_seq.inverse(&coeffs).unwrap();
        assert_eq!(f_par.samples(), f_seq.samples());
        let c_par = plan_par.forward(&f_par).unwrap();
        let c_seq = plan_seq.forward(&f_seq).unwrap();
        assert_eq!(c_par.array(), c_seq.array());
    }
}
