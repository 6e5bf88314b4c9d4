//! Wigner matrices and spin-weighted spherical harmonics.
//!
//! The central object is [`DeltaTable`], the dense table of Wigner-d values at
//! β = π/2, Δ^ℓ_{m,n} = d^ℓ_{m,n}(π/2). Everything else is evaluated from it:
//! d^ℓ(θ) through the Fourier relation
//!
//! ```text
//! d^ℓ_{m,n}(θ) = i^{m-n} Σ_k Δ^ℓ_{k,m} e^{-ikθ} Δ^ℓ_{k,n},
//! ```
//!
//! the full rotation matrices D^ℓ_{m,n}(α,β,γ) = e^{-imα} d^ℓ_{m,n}(β) e^{-inγ},
//! and the spin-weighted harmonics
//!
//! ```text
//! sY_m^ℓ(θ,φ) = (-1)^s sqrt((2ℓ+1)/4π) e^{imφ} d^ℓ_{m,-s}(θ).
//! ```
//!
//! Conventions are pinned by two relations: D^ℓ_{m,0} ↔ conj(Y_m^ℓ) for s = 0
//! (Condon–Shortley phase) and the general D^ℓ_{m,-s} ↔ conj(sY_m^ℓ) relation.
//! The test suite checks both against closed forms.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// i^n for signed n.
#[inline]
pub(crate) fn i_pow(n: i64) -> Complex64 {
    match n.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// (-1)^n for signed n.
#[inline]
pub(crate) fn neg_one_pow(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A rotation in ZYZ Euler angles, stored reduced to α, γ ∈ [0, 2π), β ∈ [0, π].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

const TAU: f64 = 2.0 * PI;

impl Rotation {
    /// Builds a rotation, reducing the angles to the canonical ranges.
    ///
    /// β outside [0, π] is folded back using Ry(-β) = Rz(π) Ry(β) Rz(-π),
    /// which shifts α and γ by π.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        let mut alpha = alpha.rem_euclid(TAU);
        let mut beta = beta.rem_euclid(TAU);
        let mut gamma = gamma.rem_euclid(TAU);
        if beta > PI {
            beta = TAU - beta;
            alpha = (alpha + PI).rem_euclid(TAU);
            gamma = (gamma + PI).rem_euclid(TAU);
        }
        Rotation { alpha, beta, gamma }
    }

    pub fn identity() -> Self {
        Rotation {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The 3×3 matrix Rz(α) Ry(β) Rz(γ).
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        let (sg, cg) = self.gamma.sin_cos();
        [
            [
                ca * cb * cg - sa * sg,
                -ca * cb * sg - sa * cg,
                ca * sb,
            ],
            [
                sa * cb * cg + ca * sg,
                -sa * cb * sg + ca * cg,
                sa * sb,
            ],
            [-sb * cg, sb * sg, cb],
        ]
    }

    /// Recovers ZYZ angles from a rotation matrix.
    pub fn from_matrix(r: &[[f64; 3]; 3]) -> Self {
        let cb = r[2][2].clamp(-1.0, 1.0);
        let beta = cb.acos();
        let sb = beta.sin();
        if sb > 1e-12 {
            let alpha = f64::atan2(r[1][2], r[0][2]);
            let gamma = f64::atan2(r[2][1], -r[2][0]);
            Rotation::new(alpha, beta, gamma)
        } else if cb > 0.0 {
            // β ≈ 0: only α + γ is determined.
            Rotation::new(f64::atan2(r[1][0], r[0][0]), 0.0, 0.0)
        } else {
            // β ≈ π: only α - γ is determined.
            Rotation::new(f64::atan2(-r[0][1], -r[0][0]), PI, 0.0)
        }
    }

    /// Group composition: `self ∘ other`, i.e. the rotation whose matrix is
    /// `self.matrix() * other.matrix()`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let a = self.matrix();
        let b = other.matrix();
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Rotation::from_matrix(&m)
    }

    pub fn inverse(&self) -> Rotation {
        Rotation::new(-self.gamma, -self.beta, -self.alpha)
    }

    /// Applies the rotation to a 3-vector.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    /// Draws a rotation from the uniform (Haar) distribution on SO(3).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
        let alpha = rng.gen_range(0.0..TAU);
        let gamma = rng.gen_range(0.0..TAU);
        let beta = f64::acos(rng.gen_range(-1.0..=1.0));
        Rotation::new(alpha, beta, gamma)
    }
}

/// Dense table of Δ^ℓ_{m,n} = d^ℓ_{m,n}(π/2) for 0 ≤ ℓ ≤ l_max.
///
/// Computed by Risbo's half-step recursion seeded at ℓ = 0, which stays
/// numerically stable well past ℓ = 128 (no factorials). The table is
/// immutable after construction and cheap to share across threads.
pub struct DeltaTable {
    l_max: usize,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl DeltaTable {
    /// Computes the table up to `l_max`.
    pub fn new(l_max: usize) -> Self {
        let mut offsets = Vec::with_capacity(l_max + 2);
        let mut total = 0usize;
        for l in 0..=l_max {
            offsets.push(total);
            total += (2 * l + 1) * (2 * l + 1);
        }
        offsets.push(total);
        let mut values = vec![0.0; total];
        values[0] = 1.0;

        // sqrt lookup for the recursion coefficients
        let sqrt: Vec<f64> = (0..=2 * l_max + 1).map(|n| (n as f64).sqrt()).collect();
        // at β = π/2 both half-angle factors are 1/√2
        let c = FRAC_1_SQRT_2;

        let mut half = vec![0.0; (2 * l_max + 2) * (2 * l_max + 2)];
        for l in 1..=l_max {
            // half-step j = 2l-1: d^{l-1} (dim j) -> half-integer (dim j+1)
            let j = 2 * l - 1;
            let dim_in = j;
            let dim_out = j + 1;
            half[..dim_out * dim_out].fill(0.0);
            {
                let src = &values[offsets[l - 1]..offsets[l]];
                for i in 0..j {
                    for k in 0..j {
                        let v = src[i * dim_in + k] / j as f64;
                        let a = sqrt[j - i] * v * c;
                        let b = sqrt[i + 1] * v * c;
                        half[i * dim_out + k] += sqrt[j - k] * a;
                        half[(i + 1) * dim_out + k] -= sqrt[j - k] * b;
                        half[i * dim_out + k + 1] += sqrt[k + 1] * a;
                        half[(i + 1) * dim_out + k + 1] += sqrt[k + 1] * b;
                    }
                }
            }
            // half-step j = 2l: half-integer (dim j) -> d^l (dim j+1)
            let j = 2 * l;
            let dim_in = j;
            let dim_out = j + 1;
            let (head, tail) = values.split_at_mut(offsets[l]);
            let _ = head;
            let dst = &mut tail[..dim_out * dim_out];
            for i in 0..j {
                for k in 0..j {
                    let v = half[i * dim_in + k] / j as f64;
                    let a = sqrt[j - i] * v * c;
                    let b = sqrt[i + 1] * v * c;
                    dst[i * dim_out + k] += sqrt[j - k] * a;
                    dst[(i + 1) * dim_out + k] -= sqrt[j - k] * b;
                    dst[i * dim_out + k + 1] += sqrt[k + 1] * a;
                    dst[(i + 1) * dim_out + k + 1] += sqrt[k + 1] * b;
                }
            }
        }

        DeltaTable {
            l_max,
            offsets,
            values,
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Δ^ℓ_{m,n}. Panics if the indices are out of range.
    #[inline]
    pub fn get(&self, l: usize, m: i64, n: i64) -> f64 {
        let half = l as i64;
        debug_assert!(l <= self.l_max && m.abs() <= half && n.abs() <= half);
        let dim = 2 * l + 1;
        self.values[self.offsets[l] + (m + half) as usize * dim + (n + half) as usize]
    }

    /// The (2ℓ+1)² slice for one degree, row-major in m then n, both ascending.
    pub fn degree(&self, l: usize) -> &[f64] {
        &self.values[self.offsets[l]..self.offsets[l + 1]]
    }

    /// Fault-injection hook for the verification suite: flips the sign of
    /// one entry so downstream oracle checks must fail.
    #[doc(hidden)]
    pub fn flip_entry_for_fault_injection(&mut self, l: usize, m: i64, n: i64) {
        let half = l as i64;
        let dim = 2 * l + 1;
        let idx = self.offsets[l] + (m + half) as usize * dim + (n + half) as usize;
        self.values[idx] = -self.values[idx];
    }

    fn check_degree(&self, l: usize) -> Result<()> {
        if l > self.l_max {
            return Err(Error::DegreeOutOfRange {
                l: l as i64,
                l_max: self.l_max as i64,
            });
        }
        Ok(())
    }

    /// One entry of d^ℓ(θ) through the Fourier relation. O(ℓ) per call.
    pub fn wigner_d_entry(&self, l: usize, m: i64, n: i64, theta: f64) -> Result<f64> {
        self.check_degree(l)?;
        let half = l as i64;
        if m.abs() > half || n.abs() > half {
            return Err(Error::IndexOutOfRange { l: l as i64, m, s: n });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -half..=half {
            let phase = Complex64::from_polar(1.0, -(k as f64) * theta);
            acc += self.get(l, k, m) * self.get(l, k, n) * phase;
        }
        let z = i_pow(m - n) * acc;
        debug_assert!(z.im.abs() <= 1e-10, "imaginary residue {} too large", z.im);
        Ok(z.re)
    }

    /// The full real matrix d^ℓ(θ), rows m and columns n ascending from -ℓ.
    pub fn wigner_d(&self, l: usize, theta: f64) -> Result<Array2<f64>> {
        self.check_degree(l)?;
        let half = l as i64;
        let dim = 2 * l + 1;
        let phases: Vec<Complex64> = (-half..=half)
            .map(|k| Complex64::from_polar(1.0, -(k as f64) * theta))
            .collect();
        let mut out = Array2::zeros((dim, dim));
        for m in -half..=half {
            for n in -half..=half {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in -half..=half {
                    acc += self.get(l, k, m) * self.get(l, k, n) * phases[(k + half) as usize];
                }
                let z = i_pow(m - n) * acc;
                debug_assert!(z.im.abs() <= 1e-10, "imaginary residue {} too large", z.im);
                out[[(m + half) as usize, (n + half) as usize]] = z.re;
            }
        }
        Ok(out)
    }

    /// The unitary matrix D^ℓ(α,β,γ), rows m and columns n ascending from -ℓ.
    pub fn wigner_big_d(&self, l: usize, g: &Rotation) -> Result<Array2<Complex64>> {
        let d = self.wigner_d(l, g.beta())?;
        let half = l as i64;
        let dim = 2 * l + 1;
        let mut out = Array2::zeros((dim, dim));
        for m in -half..=half {
            let row_phase = Complex64::from_polar(1.0, -(m as f64) * g.alpha());
            for n in -half..=half {
                let col_phase = Complex64::from_polar(1.0, -(n as f64) * g.gamma());
                out[[(m + half) as usize, (n + half) as usize]] =
                    row_phase * d[[(m + half) as usize, (n + half) as usize]] * col_phase;
            }
        }
        Ok(out)
    }

    /// Evaluates the spin-weighted spherical harmonic sY_m^ℓ(θ, φ).
    pub fn swsh_eval(&self, s: i64, l: usize, m: i64, theta: f64, phi: f64) -> Result<Complex64> {
        self.check_degree(l)?;
        let half = l as i64;
        if s.abs() > half || m.abs() > half {
            return Err(Error::IndexOutOfRange { l: l as i64, m, s });
        }
        let d = self.wigner_d_entry(l, m, -s, theta)?;
        let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
        Ok(neg_one_pow(s) * norm * d * Complex64::from_polar(1.0, m as f64 * phi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delta_seed_is_identity() {
        let t = DeltaTable::new(0);
        assert_eq!(t.get(0, 0, 0), 1.0);
    }

    #[test]
    fn delta_degree_one_closed_forms() {
        // d^1_{0,0}(θ) = cos θ and d^1_{1,1}(θ) = (1 + cos θ)/2, at θ = π/2.
        let t = DeltaTable::new(1);
        assert_abs_diff_eq!(t.get(1, 0, 0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(1, 1, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn delta_symmetries_and_row_norms() {
        let l_max = 12;
        let t = DeltaTable::new(l_max);
        for l in 0..=l_max {
            let half = l as i64;
            for m in -half..=half {
                let mut norm = 0.0;
                for n in -half..=half {
                    let v = t.get(l, m, n);
                    let sign = neg_one_pow(m - n);
                    assert_abs_diff_eq!(v, sign * t.get(l, n, m), epsilon = 1e-12);
                    assert_abs_diff_eq!(v, sign * t.get(l, -m, -n), epsilon = 1e-12);
                    norm += v * v;
                }
                assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn wigner_d_zero_angle_is_identity() {
        let t = DeltaTable::new(4);
        for l in 0..=4usize {
            let d = t.wigner_d(l, 0.0).unwrap();
            for m in 0..2 * l + 1 {
                for n in 0..2 * l + 1 {
                    let expect = if m == n { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(d[[m, n]], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn wigner_d_degree_one_entries() {
        let t = DeltaTable::new(1);
        // d^1_{0,0}(π/3) = cos(π/3) = 1/2
        let d = t.wigner_d(1, PI / 3.0).unwrap();
        assert_abs_diff_eq!(d[[1, 1]], 0.5, epsilon = 1e-14);
        // d^1_{1,0}(π/2) = -sin(π/2)/√2 = -1/√2
        let d = t.wigner_d(1, PI / 2.0).unwrap();
        assert_abs_diff_eq!(d[[2, 1]], -FRAC_1_SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn wigner_d_rejects_large_degree() {
        let t = DeltaTable::new(2);
        assert!(matches!(
            t.wigner_d(3, 0.1),
            Err(Error::DegreeOutOfRange { .. })
        ));
    }

    #[test]
    fn big_d_identity_and_diagonal() {
        let t = DeltaTable::new(2);
        let d = t.wigner_big_d(1, &Rotation::identity()).unwrap();
        for m in 0..3 {
            for n in 0..3 {
                let expect = if m == n { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(d[[m, n]].re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(d[[m, n]].im, 0.0, epsilon = 1e-12);
            }
        }
        // β = 0 makes d^ℓ the identity, so D is diag(e^{-imα}) with combined phase α + γ.
        let alpha = 0.731;
        let d = t.wigner_big_d(1, &Rotation::new(alpha, 0.0, 0.0)).unwrap();
        for (i, m) in (-1i64..=1).enumerate() {
            let expect = Complex64::from_polar(1.0, -(m as f64) * alpha);
            assert_abs_diff_eq!(d[[i, i]].re, expect.re, epsilon = 1e-12);
            assert_abs_diff_eq!(d[[i, i]].im, expect.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn swsh_trivial_values() {
        let t = DeltaTable::new(2);
        // constant harmonic
        let v = t.swsh_eval(0, 0, 0, 0.9, 2.3).unwrap();
        assert_abs_diff_eq!(v.re, 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-14);
        // Y_1^0 = sqrt(3/4π) cos θ
        for &theta in &[0.3, 1.1, 2.4] {
            let v = t.swsh_eval(0, 1, 0, theta, 0.7).unwrap();
            let expect = (3.0 / (4.0 * PI)).sqrt() * theta.cos();
            assert_abs_diff_eq!(v.re, expect, epsilon = 1e-13);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-13);
        }
        // spin-1 value against the Wigner-d route
        let v = t.swsh_eval(1, 1, 0, PI / 2.0, 0.0).unwrap();
        let expect = -(3.0 / (4.0 * PI)).sqrt() * t.wigner_d_entry(1, 0, -1, PI / 2.0).unwrap();
        assert_abs_diff_eq!(v.re, expect, epsilon = 1e-13);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn swsh_rejects_bad_indices() {
        let t = DeltaTable::new(2);
        assert!(t.swsh_eval(2, 1, 0, 0.1, 0.2).is_err());
        assert!(t.swsh_eval(0, 1, 2, 0.1, 0.2).is_err());
        assert!(t.swsh_eval(0, 3, 0, 0.1, 0.2).is_err());
    }

    #[test]
    fn rotation_reduction_and_inverse() {
        let g = Rotation::new(7.0, 4.0, -1.0);
        assert!(g.alpha() >= 0.0 && g.alpha() < TAU);
        assert!(g.beta() >= 0.0 && g.beta() <= PI);
        assert!(g.gamma() >= 0.0 && g.gamma() < TAU);
        // reduced angles describe the same matrix
        let raw = Rotation {
            alpha: 7.0_f64.rem_euclid(TAU),
            beta: 4.0,
            gamma: (-1.0_f64).rem_euclid(TAU),
        };
        let a = g.matrix();
        let b = raw.matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(a[i][j], b[i][j], epsilon = 1e-12);
            }
        }
        let id = g.compose(&g.inverse());
        assert_abs_diff_eq!(id.beta(), 0.0, epsilon = 1e-12);
        let m = id.matrix();
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rotation_compose_matches_matrix_product() {
        let mut rng = crate::testing::seeded_rng(7);
        for _ in 0..20 {
            let g1 = Rotation::random(&mut rng);
            let g2 = Rotation::random(&mut rng);
            let c = g1.compose(&g2);
            let a = g1.matrix();
            let b = g2.matrix();
            let cm = c.matrix();
            for i in 0..3 {
                for j in 0..3 {
                    let expect: f64 = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                    assert_abs_diff_eq!(cm[i][j], expect, epsilon = 1e-12);
                }
            }
        }
    }
}
