//! Named verification suites behind the `check` CLI command.
//!
//! Every public operation of the harmonics, transform, spectral, and layers
//! modules is exercised by at least one suite; [`run_all`] asserts that
//! coverage against [`REGISTERED_OPS`] and appends a synthetic
//! `registry_coverage` report.
//!
//! The reference formulas here (factorial-sum Wigner-d, closed-form
//! spherical harmonics, generator exponentials) are deliberately independent
//! of the Δ-table recursion and the FFT-based transforms they validate.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::harmonics::{DeltaTable, Rotation};
use crate::layers::{
    batch_norm_s0, conv_layer_forward, magnitude_bn_relu, pool_field, real_relu_s0,
    upsample_field, BatchNormState, Classifier, FilterParams, ForwardContext, LayerSpec,
    Precision, UNet,
};
use crate::spectral::{bandlimit, rotate_coeffs, spin_conv, spin_corr, FeatureMap, FilterSpectrum};
use crate::testing;
use crate::transform::{SpinField, SphericalGrid, TransformPlan};

/// Every public operation the suites must cover.
pub const REGISTERED_OPS: &[&str] = &[
    "compute_delta_table",
    "wigner_d",
    "wigner_D",
    "swsh_eval",
    "torus_extend",
    "swsft_forward",
    "swsft_inverse",
    "rotate_coeffs",
    "spin_conv",
    "spin_corr",
    "bandlimit",
    "filter_expand",
    "real_relu_s0",
    "magnitude_bn_relu",
    "pool",
    "upsample",
    "conv_layer_forward",
    "build_classifier",
    "classifier_forward",
    "build_unet",
    "unet_forward",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub ops: Vec<String>,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, ops: &[&str], max_error: f64, tolerance: f64, detail: String) -> Self {
        CheckReport {
            name: name.to_string(),
            ops: ops.iter().map(|s| s.to_string()).collect(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
            detail,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub bandwidth: usize,
    pub seed: u64,
    /// Flip one Δ-table sign before running, to prove the oracle bites.
    pub inject_delta_sign_flip: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            bandwidth: 32,
            seed: 7,
            inject_delta_sign_flip: false,
        }
    }
}

/// Factorial-sum reference formula for d^ℓ_{m,n}(β). Slow and only sane for
/// small ℓ, but completely independent of the Δ-table recursion.
pub fn wigner_d_factorial(l: i64, m: i64, n: i64, beta: f64) -> f64 {
    fn fact(k: i64) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }
    let pre = (fact(l + m) * fact(l - m) * fact(l + n) * fact(l - n)).sqrt();
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let k_min = 0.max(n - m);
    let k_max = (l + n).min(l - m);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let sign = if (m - n + k).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        };
        let denom = fact(l + n - k) * fact(k) * fact(m - n + k) * fact(l - m - k);
        sum += sign * c.powi((2 * l + n - m - 2 * k) as i32) * s.powi((m - n + 2 * k) as i32)
            / denom;
    }
    pre * sum
}

/// Closed-form spherical harmonics for ℓ ≤ 3 (Condon–Shortley phase).
pub fn spherical_harmonic_closed_form(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    let (st, ct) = (theta.sin(), theta.cos());
    let mag = match (l, m.abs()) {
        (0, 0) => 0.5 * (1.0 / PI).sqrt(),
        (1, 0) => 0.5 * (3.0 / PI).sqrt() * ct,
        (1, 1) => 0.5 * (1.5 / PI).sqrt() * st,
        (2, 0) => 0.25 * (5.0 / PI).sqrt() * (3.0 * ct * ct - 1.0),
        (2, 1) => 0.5 * (7.5 / PI).sqrt() * st * ct,
        (2, 2) => 0.25 * (7.5 / PI).sqrt() * st * st,
        (3, 0) => 0.25 * (7.0 / PI).sqrt() * (5.0 * ct * ct * ct - 3.0 * ct),
        (3, 1) => 0.125 * (21.0 / PI).sqrt() * st * (5.0 * ct * ct - 1.0),
        (3, 2) => 0.25 * (52.5 / PI).sqrt() * st * st * ct,
        (3, 3) => 0.125 * (35.0 / PI).sqrt() * st * st * st,
        _ => panic!("no closed form tabulated for l={l}, m={m}"),
    };
    // Condon–Shortley: odd positive m picks up a minus sign
    let sign = if m > 0 && m % 2 != 0 { -1.0 } else { 1.0 };
    sign * mag * Complex64::from_polar(1.0, m as f64 * phi)
}

/// Spin-ℓ rotation generator matrices (ascending m) and their exponential,
/// an independent route to the Wigner-D matrices.
pub fn wigner_big_d_exponential(l: usize, g: &Rotation) -> Array2<Complex64> {
    let dim = 2 * l + 1;
    let half = l as f64;
    // J_y = (J_+ - J_-) / 2i with <m+1|J_+|m> = sqrt(l(l+1) - m(m+1))
    let mut jy = Array2::zeros((dim, dim));
    for i in 0..dim - 1 {
        let m = i as f64 - half;
        let c = (half * (half + 1.0) - m * (m + 1.0)).sqrt();
        jy[[i + 1, i]] = Complex64::new(0.0, -0.5) * c; // J_+ / 2i
        jy[[i, i + 1]] = Complex64::new(0.0, 0.5) * c; // -J_- / 2i
    }
    let mid = matrix_exp(&jy.mapv(|v| v * Complex64::new(0.0, -g.beta())));
    let mut out = Array2::zeros((dim, dim));
    for r in 0..dim {
        let m = r as f64 - half;
        let pa = Complex64::from_polar(1.0, -m * g.alpha());
        for c in 0..dim {
            let n = c as f64 - half;
            let pg = Complex64::from_polar(1.0, -n * g.gamma());
            out[[r, c]] = pa * mid[[r, c]] * pg;
        }
    }
    out
}

/// Scaling-and-squaring Taylor exponential for small complex matrices.
fn matrix_exp(a: &Array2<Complex64>) -> Array2<Complex64> {
    let dim = a.nrows();
    let norm: f64 = a.iter().map(|z| z.norm()).sum();
    let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
    let scaled = a.mapv(|z| z / 2f64.powi(squarings as i32));
    let mut result = Array2::eye(dim);
    let mut term: Array2<Complex64> = Array2::eye(dim);
    for k in 1..=16 {
        term = term.dot(&scaled) / Complex64::new(k as f64, 0.0);
        result = result + &term;
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

fn table(cfg: &CheckConfig, l_max: usize) -> Arc<DeltaTable> {
    let mut t = DeltaTable::new(l_max);
    if cfg.inject_delta_sign_flip && l_max >= 4 {
        // Δ^4_{4,4} = cos(π/4)^8 = 1/16, guaranteed nonzero
        t.flip_entry_for_fault_injection(4, 4, 4);
    }
    Arc::new(t)
}

fn check_delta_table(cfg: &CheckConfig) -> CheckReport {
    let l_max = 16;
    let t = table(cfg, l_max);
    let mut err: f64 = (t.get(0, 0, 0) - 1.0).abs();
    for l in 0..=l_max {
        let half = l as i64;
        for m in -half..=half {
            let mut norm = 0.0;
            for n in -half..=half {
                let v = t.get(l, m, n);
                let sign = if (m - n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                err = err.max((v - sign * t.get(l, n, m)).abs());
                err = err.max((v - sign * t.get(l, -m, -n)).abs());
                norm += v * v;
            }
            err = err.max((norm - 1.0).abs());
        }
    }
    CheckReport::new(
        "delta_table_invariants",
        &["compute_delta_table"],
        err,
        1e-12,
        format!("symmetries and row norms up to l={l_max}"),
    )
}

fn check_wigner_oracle(cfg: &CheckConfig) -> CheckReport {
    let cfg = cfg.clone();
    // a corrupted table can also trip internal assertions; a panic here must
    // surface as a failed check, not abort the whole run
    let result = std::panic::catch_unwind(move || {
        let t = table(&cfg, 8);
        let mut rng = testing::seeded_rng(cfg.seed);
        let mut err: f64 = 0.0;
        for _ in 0..20 {
            let theta = rng.gen_range(0.0..PI);
            for l in 0..=8usize {
                let d = t.wigner_d(l, theta).expect("degree in range");
                let half = l as i64;
                for m in -half..=half {
                    for n in -half..=half {
                        let reference = wigner_d_factorial(l as i64, m, n, theta);
                        err = err
                            .max((d[[(m + half) as usize, (n + half) as usize]] - reference).abs());
                    }
                }
            }
        }
        err
    });
    let (err, note) = match result {
        Ok(err) => (err, String::new()),
        Err(_) => (f64::INFINITY, "; evaluation panicked".to_string()),
    };
    CheckReport::new(
        "wigner_oracle",
        &["wigner_d"],
        err,
        1e-10,
        format!("Fourier-relation d^l vs factorial-sum formula, l <= 8, 20 angles{note}"),
    )
}

fn check_wigner_big_d(cfg: &CheckConfig) -> CheckReport {
    let t = table(cfg, 8);
    let mut rng = testing::seeded_rng(cfg.seed + 1);
    let mut err: f64 = 0.0;
    for _ in 0..5 {
        let g1 = Rotation::random(&mut rng);
        let g2 = Rotation::random(&mut rng);
        for l in 0..=4usize {
            let d1 = t.wigner_big_d(l, &g1).unwrap();
            // unitarity
            let dim = 2 * l + 1;
            for i in 0..dim {
                for j in 0..dim {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for k in 0..dim {
                        dot += d1[[k, i]].conj() * d1[[k, j]];
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    err = err.max((dot - expect).norm());
                }
            }
            // homomorphism
            let d2 = t.wigner_big_d(l, &g2).unwrap();
            let d12 = t.wigner_big_d(l, &g1.compose(&g2)).unwrap();
            let prod = d1.dot(&d2);
            for (a, b) in prod.iter().zip(d12.iter()) {
                err = err.max((a - b).norm());
            }
        }
        // independent generator-exponential route at l = 2
        let de = wigner_big_d_exponential(2, &g1);
        let dt = t.wigner_big_d(2, &g1).unwrap();
        for (a, b) in de.iter().zip(dt.iter()) {
            err = err.max((a - b).norm());
        }
    }
    CheckReport::new(
        "wigner_big_d_properties",
        &["wigner_D"],
        err,
        1e-10,
        "unitarity, homomorphism, and the spin-2 generator exponential".to_string(),
    )
}

fn check_swsh_reference(cfg: &CheckConfig) -> CheckReport {
    let t = table(cfg, 8);
    let mut rng = testing::seeded_rng(cfg.seed + 2);
    let mut err: f64 = 0.0;
    // s = 0 reduction to the closed forms
    for _ in 0..20 {
        let theta = rng.gen_range(0.05..PI - 0.05);
        let phi = rng.gen_range(0.0..2.0 * PI);
        for l in 0..=3usize {
            for m in -(l as i64)..=(l as i64) {
                let got = t.swsh_eval(0, l, m, theta, phi).unwrap();
                let expect = spherical_harmonic_closed_form(l, m, theta, phi);
                err = err.max((got - expect).norm());
            }
        }
    }
    // Eq.-style rotation of the basis: Y_m(g x) = sum_n conj(D_mn) Y_n(x)
    for _ in 0..5 {
        let g = Rotation::random(&mut rng);
        let theta = rng.gen_range(0.3..PI - 0.3);
        let phi = rng.gen_range(0.0..2.0 * PI);
        let x = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let gx = g.apply(x);
        let gt = gx[2].clamp(-1.0, 1.0).acos();
        let gp = f64::atan2(gx[1], gx[0]);
        for l in 0..=3usize {
            let d = t.wigner_big_d(l, &g).unwrap();
            let half = l as i64;
            for m in -half..=half {
                let lhs = t.swsh_eval(0, l, m, gt, gp).unwrap();
                let mut rhs = Complex64::new(0.0, 0.0);
                for n in -half..=half {
                    rhs += d[[(m + half) as usize, (n + half) as usize]].conj()
                        * t.swsh_eval(0, l, n, theta, phi).unwrap();
                }
                err = err.max((lhs - rhs).norm());
            }
        }
    }
    CheckReport::new(
        "swsh_reference",
        &["swsh_eval"],
        err,
        1e-10,
        "s=0 closed forms (l <= 3) and the pointwise rotation formula".to_string(),
    )
}

fn check_swsh_orthonormality(cfg: &CheckConfig) -> CheckReport {
    let t = table(cfg, 8);
    let mut err: f64 = 0.0;
    // Simpson in θ (uniform trapezoid in φ is exact for trig polynomials)
    let n_theta = 257;
    let n_phi = 32;
    let h = PI / (n_theta - 1) as f64;
    for s in [-1i64, 0, 2] {
        let l_lo = s.unsigned_abs() as usize;
        for l1 in l_lo..=3 {
            for l2 in l_lo..=3 {
                for m1 in -(l1 as i64)..=(l1 as i64) {
                    for m2 in -(l2 as i64)..=(l2 as i64) {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for it in 0..n_theta {
                            let theta = it as f64 * h;
                            let wt = if it == 0 || it == n_theta - 1 {
                                1.0
                            } else if it % 2 == 1 {
                                4.0
                            } else {
                                2.0
                            };
                            let mut phi_acc = Complex64::new(0.0, 0.0);
                            for ip in 0..n_phi {
                                let phi = 2.0 * PI * ip as f64 / n_phi as f64;
                                let a = t.swsh_eval(s, l1, m1, theta, phi).unwrap();
                                let b = t.swsh_eval(s, l2, m2, theta, phi).unwrap();
                                phi_acc += a * b.conj();
                            }
                            acc += wt * phi_acc * theta.sin();
                        }
                        acc *= (h / 3.0) * (2.0 * PI / n_phi as f64);
                        let expect = if l1 == l2 && m1 == m2 { 1.0 } else { 0.0 };
                        err = err.max((acc - expect).norm());
                    }
                }
            }
        }
    }
    CheckReport::new(
        "swsh_orthonormality",
        &["swsh_eval"],
        err,
        1e-6,
        "quadrature of <sY_lm, sY_l'm'> for l <= 3, s in {-1, 0, 2}".to_string(),
    )
}

fn check_round_trip(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 3);
    let mut err: f64 = 0.0;
    let mut extension_err: f64 = 0.0;
    for &b in &[8usize, 16, cfg.bandwidth] {
        let t = table(cfg, b - 1);
        for &spin in &[0i32, 1, -1, 2] {
            let plan = TransformPlan::new(b, &[spin], t.clone()).expect("plan");
            for _ in 0..3 {
                let coeffs = testing::random_coeffs(&mut rng, spin, b, 2);
                let field = plan.inverse(&coeffs).unwrap();
                // restriction of the torus extension reproduces the samples
                let ext = crate::transform::torus_extend(&field);
                for ch in 0..field.channels() {
                    for j in 0..2 * b {
                        for k in 0..2 * b {
                            let d = (ext[[ch, j, k]] - field.samples()[[ch, j, k]]).norm();
                            extension_err = extension_err.max(d);
                        }
                    }
                }
                let back = plan.forward(&field).unwrap();
                let scale = coeffs.max_norm();
                for (a, e) in back.array().iter().zip(coeffs.array().iter()) {
                    err = err.max((a - e).norm() / scale);
                }
            }
        }
    }
    CheckReport::new(
        "transform_round_trip",
        &["swsft_forward", "swsft_inverse", "torus_extend"],
        err.max(extension_err),
        1e-10,
        format!(
            "inverse-then-forward identity, s in {{0,±1,2}}, B in {{8,16,{}}}",
            cfg.bandwidth
        ),
    )
}

fn check_parseval(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 4);
    let b = 16;
    let t = table(cfg, b - 1);
    let mut err: f64 = 0.0;
    for &spin in &[0i32, 1] {
        let plan = TransformPlan::new(b, &[spin], t.clone()).unwrap();
        let coeffs = testing::random_coeffs(&mut rng, spin, b, 2);
        let field = plan.inverse(&coeffs).unwrap();
        let spatial = plan.spatial_energy(&field).unwrap();
        for ch in 0..2 {
            let spec = coeffs.energy(ch);
            err = err.max((spec - spatial[ch]).abs() / spec);
        }
    }
    CheckReport::new(
        "parseval",
        &["swsft_forward", "swsft_inverse"],
        err,
        1e-8,
        "coefficient energy vs quadrature-weighted spatial energy".to_string(),
    )
}

fn check_s0_direct_quadrature(cfg: &CheckConfig) -> CheckReport {
    // f is a small known combination of harmonics; its coefficients are
    // recomputed by dense Simpson quadrature of the defining integral and
    // compared against the FFT-based forward transform of the sampled field.
    let b = 16usize;
    let t = table(cfg, b - 1);
    let plan = TransformPlan::new(b, &[0], t.clone()).unwrap();
    let mut rng = testing::seeded_rng(cfg.seed + 5);
    let terms: Vec<(usize, i64, Complex64)> = (0..4)
        .map(|_| {
            let l = rng.gen_range(0..b);
            let m = rng.gen_range(-(l as i64)..=(l as i64));
            (l, m, Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)))
        })
        .collect();
    let eval = |theta: f64, phi: f64| -> Complex64 {
        terms
            .iter()
            .map(|&(l, m, c)| c * t.swsh_eval(0, l, m, theta, phi).unwrap())
            .sum()
    };

    // sample on the plan's grid and run the fast forward transform
    let grid = plan.grid();
    let mut field = SpinField::zeros(0, grid, 1);
    for j in 0..grid.n_theta() {
        for k in 0..grid.n_phi() {
            field.samples_mut()[[0, j, k]] = eval(grid.theta(j), grid.phi(k));
        }
    }
    let fast = plan.forward(&field).unwrap();

    // dense quadrature of the analysis integral ∫ f conj(Y) dΩ; the field
    // values are cached once across all coefficient targets
    let n_theta = 4097;
    let n_phi = 64;
    let h = PI / (n_theta - 1) as f64;
    let f_cache: Vec<Vec<Complex64>> = (0..n_theta)
        .map(|it| {
            let theta = it as f64 * h;
            (0..n_phi)
                .map(|ip| eval(theta, 2.0 * PI * ip as f64 / n_phi as f64))
                .collect()
        })
        .collect();
    let mut err: f64 = 0.0;
    let mut targets: Vec<(usize, i64)> = terms.iter().map(|&(l, m, _)| (l, m)).collect();
    targets.extend_from_slice(&[(0, 0), (3, -2), (7, 5), (12, 0)]);
    targets.dedup();
    for &(l, m) in &targets {
        let mut acc = Complex64::new(0.0, 0.0);
        for it in 0..n_theta {
            let theta = it as f64 * h;
            let wt = if it == 0 || it == n_theta - 1 {
                1.0
            } else if it % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let mut phi_acc = Complex64::new(0.0, 0.0);
            for ip in 0..n_phi {
                let phi = 2.0 * PI * ip as f64 / n_phi as f64;
                phi_acc += f_cache[it][ip] * t.swsh_eval(0, l, m, theta, phi).unwrap().conj();
            }
            acc += wt * phi_acc * theta.sin();
        }
        acc *= (h / 3.0) * (2.0 * PI / n_phi as f64);
        err = err.max((acc - fast.get(0, l, m)).norm());
    }
    CheckReport::new(
        "s0_direct_quadrature",
        &["swsft_forward"],
        err,
        1e-8,
        "fast transform vs dense Simpson quadrature of the analysis integral".to_string(),
    )
}

fn check_rotation(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 6);
    let b = 16;
    let t = table(cfg, b - 1);
    let mut err: f64 = 0.0;
    for &spin in &[0i32, 1, -2] {
        let coeffs = testing::random_coeffs(&mut rng, spin, b, 1);
        let scale = coeffs.max_norm();
        // azimuthal phase law
        let alpha = rng.gen_range(0.0..2.0 * PI);
        let rot = rotate_coeffs(&coeffs, &Rotation::new(alpha, 0.0, 0.0), &t).unwrap();
        for l in (spin.unsigned_abs() as usize)..b {
            for m in -(l as i64)..=(l as i64) {
                let expect = coeffs.get(0, l, m) * Complex64::from_polar(1.0, m as f64 * alpha);
                err = err.max((rot.get(0, l, m) - expect).norm() / scale);
            }
        }
        // inverse round trip and per-degree norm preservation
        let g = Rotation::random(&mut rng);
        let rot = rotate_coeffs(&coeffs, &g, &t).unwrap();
        for l in (spin.unsigned_abs() as usize)..b {
            let e0: f64 = (-(l as i64)..=(l as i64))
                .map(|m| coeffs.get(0, l, m).norm_sqr())
                .sum();
            let e1: f64 = (-(l as i64)..=(l as i64))
                .map(|m| rot.get(0, l, m).norm_sqr())
                .sum();
            err = err.max((e0 - e1).abs() / e0.max(1e-300));
        }
        let back = rotate_coeffs(&rot, &g.inverse(), &t).unwrap();
        for (a, e) in back.array().iter().zip(coeffs.array().iter()) {
            err = err.max((a - e).norm() / scale);
        }
    }
    CheckReport::new(
        "rotation_properties",
        &["rotate_coeffs"],
        err,
        1e-10,
        "phase law, unitarity per degree, group inverse".to_string(),
    )
}

fn random_filter<R: Rng + ?Sized>(
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

fn feature_gap(a: &FeatureMap, b: &FeatureMap) -> f64 {
    let mut err: f64 = 0.0;
    for &s in &a.spins() {
        let x = a.spectral_part(s).unwrap();
        let y = b.spectral_part(s).unwrap();
        let scale = x.max_norm().max(y.max_norm()).max(1e-300);
        for (p, q) in x.array().iter().zip(y.array().iter()) {
            err = err.max((p - q).norm() / scale);
        }
    }
    err
}

fn check_conv_equivariance(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 7);
    let b = 16;
    let t = table(cfg, b - 1);
    let mut err: f64 = 0.0;
    for _ in 0..10 {
        let f = FeatureMap::from_spectral(vec![
            testing::random_coeffs(&mut rng, 0, b, 2),
            testing::random_coeffs(&mut rng, 1, b, 2),
        ])
        .unwrap();
        let k = random_filter(&mut rng, &[0, 1], &[0, 1], 2, 2, b);
        let g = Rotation::random(&mut rng);
        let lhs = spin_conv(&f.rotate(&g, &t).unwrap(), &k).unwrap();
        let rhs = spin_conv(&f, &k).unwrap().rotate(&g, &t).unwrap();
        err = err.max(feature_gap(&lhs, &rhs));
    }
    CheckReport::new(
        "conv_equivariance",
        &["spin_conv"],
        err,
        1e-10,
        "rotate-then-convolve vs convolve-then-rotate, spins {0,1}, B=16".to_string(),
    )
}

fn check_corr_equivariance(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 8);
    let b = 16;
    let t = table(cfg, b - 1);
    let mut err: f64 = 0.0;
    for _ in 0..10 {
        let f = FeatureMap::from_spectral(vec![
            testing::random_coeffs(&mut rng, 0, b, 2),
            testing::random_coeffs(&mut rng, 1, b, 2),
        ])
        .unwrap();
        let k = random_filter(&mut rng, &[0, 1], &[0, 1], 2, 2, b);
        let g = Rotation::random(&mut rng);
        let lhs = spin_corr(&f.rotate(&g, &t).unwrap(), &k, &[0, 1]).unwrap();
        let rhs = spin_corr(&f, &k, &[0, 1]).unwrap().rotate(&g, &t).unwrap();
        err = err.max(feature_gap(&lhs, &rhs));
    }
    CheckReport::new(
        "corr_equivariance",
        &["spin_corr"],
        err,
        1e-10,
        "rotate-then-correlate vs correlate-then-rotate, spins {0,1}, B=16".to_string(),
    )
}

fn check_special_cases(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 9);
    let b = 16;
    let mut err: f64 = 0.0;
    let f0 = testing::random_coeffs(&mut rng, 0, b, 1);
    let f = FeatureMap::from_spectral(vec![f0.clone()]).unwrap();
    let k = random_filter(&mut rng, &[0], &[0], 1, 1, b);

    // spherical convolution: conv output equals f̂_m^l k̂_0^l; the classical
    // definition carries an extra 2π sqrt(4π/(2l+1)) per degree
    let conv = spin_conv(&f, &k).unwrap();
    let out = conv.spectral_part(0).unwrap();
    for l in 0..b {
        let constant = 2.0 * PI * (4.0 * PI / (2 * l + 1) as f64).sqrt();
        for m in -(l as i64)..=(l as i64) {
            let ours = out.get(0, l, m);
            let classical = constant * f0.get(0, l, m) * k.get(0, 0, 0, 0, l);
            err = err.max((ours * constant - classical).norm() / classical.norm().max(1e-300));
        }
    }

    // spherical cross-correlation: output at spin 0 is f̂_m^l conj(k̂_0^l)
    let corr = spin_corr(&f, &k, &[0]).unwrap();
    let out = corr.spectral_part(0).unwrap();
    for l in 0..b {
        for m in -(l as i64)..=(l as i64) {
            let expect = f0.get(0, l, m) * k.get(0, 0, 0, 0, l).conj();
            err = err.max((out.get(0, l, m) - expect).norm() / expect.norm().max(1e-300));
        }
    }
    CheckReport::new(
        "special_case_reduction",
        &["spin_conv", "spin_corr"],
        err,
        1e-12,
        "single-spin-0 reduction to spherical convolution and correlation".to_string(),
    )
}

fn check_bandlimit(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 10);
    let b = 16;
    let coeffs = testing::random_coeffs(&mut rng, 1, b, 2);
    let mut err: f64 = 0.0;
    let same = bandlimit(&coeffs, b).unwrap();
    for (a, e) in same.array().iter().zip(coeffs.array().iter()) {
        err = err.max((a - e).norm());
    }
    let mut last = coeffs.energy(0);
    for b_new in (2..=b).rev() {
        let cut = bandlimit(&coeffs, b_new).unwrap();
        let e = cut.energy(0);
        if e > last + 1e-12 {
            err = err.max(e - last);
        }
        last = e;
    }
    CheckReport::new(
        "bandlimit_properties",
        &["bandlimit"],
        err,
        1e-12,
        "identity at full bandwidth, monotone energy under truncation".to_string(),
    )
}

fn check_filter_expand(cfg: &CheckConfig) -> CheckReport {
    let _ = cfg;
    let b = 9;
    let mut p = FilterParams::zeros(&[0], &[0], 1, 1, b, 2);
    p.anchors_mut()[[0, 0, 0, 0, 1]] = Complex64::new(1.0, 0.0);
    let f = p.expand().unwrap();
    let mut err: f64 = 0.0;
    for l in 0..b {
        err = err.max((f.get(0, 0, 0, 0, l).re - l as f64 / 8.0).abs());
    }
    // single anchor means constant spectrum
    let mut p1 = FilterParams::zeros(&[1], &[1], 1, 1, 8, 1);
    p1.anchors_mut()[[0, 0, 0, 0, 0]] = Complex64::new(0.3, 0.0);
    let f1 = p1.expand().unwrap();
    for l in 1..8 {
        err = err.max((f1.get(0, 0, 0, 0, l).re - 0.3).abs());
    }
    err = err.max(f1.get(0, 0, 0, 0, 0).norm()); // l=0 zeroed for |s|=1
    CheckReport::new(
        "filter_expansion",
        &["filter_expand"],
        err,
        1e-12,
        "two-anchor linear ramp, constant single anchor, sub-spin zeroing".to_string(),
    )
}

fn check_nonlinearities(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 11);
    let grid = SphericalGrid::new(4);
    let mut err: f64 = 0.0;

    let mut field = SpinField::zeros(0, grid, 1);
    field
        .samples_mut()
        .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
    let relu = real_relu_s0(&field).unwrap();
    for (a, e) in relu.samples().iter().zip(field.samples().iter()) {
        err = err.max((a.re - e.re.max(0.0)).abs()).max(a.im.abs());
    }
    let mut bn = BatchNormState::identity(1);
    let normed = batch_norm_s0(&field, &mut bn).unwrap();
    for (a, e) in normed.samples().iter().zip(field.samples().iter()) {
        err = err.max((a.re - e.re).abs());
    }

    let mut vec_field = SpinField::zeros(1, grid, 1);
    vec_field
        .samples_mut()
        .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
    let mut bn = BatchNormState::identity(1);
    let out = magnitude_bn_relu(&vec_field, &mut bn).unwrap();
    for (a, e) in out.samples().iter().zip(vec_field.samples().iter()) {
        // identity stats: sample scales by its own magnitude, phase intact
        err = err.max((a - e * e.norm()).norm());
    }
    CheckReport::new(
        "nonlinearities",
        &["real_relu_s0", "magnitude_bn_relu"],
        err,
        1e-10,
        "pointwise ReLU, identity batch norm, magnitude modulation".to_string(),
    )
}

fn check_pool_upsample(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 12);
    let grid = SphericalGrid::new(4);
    let mut field = SpinField::zeros(1, grid, 2);
    field
        .samples_mut()
        .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
    let mut err: f64 = 0.0;
    let pooled = pool_field(&field).unwrap();
    for ch in 0..2 {
        for j in 0..4 {
            for k in 0..4 {
                let mean = (field.samples()[[ch, 2 * j, 2 * k]]
                    + field.samples()[[ch, 2 * j + 1, 2 * k]]
                    + field.samples()[[ch, 2 * j, 2 * k + 1]]
                    + field.samples()[[ch, 2 * j + 1, 2 * k + 1]])
                    * 0.25;
                err = err.max((pooled.samples()[[ch, j, k]] - mean).norm());
            }
        }
    }
    let up = upsample_field(&pooled).unwrap();
    let back = pool_field(&up).unwrap();
    for (a, e) in back.samples().iter().zip(pooled.samples().iter()) {
        err = err.max((a - e).norm());
    }
    CheckReport::new(
        "pool_upsample",
        &["pool", "upsample"],
        err,
        1e-12,
        "block means and pool∘upsample identity".to_string(),
    )
}

fn check_layer_identity(cfg: &CheckConfig) -> CheckReport {
    let b = 8;
    let t = table(cfg, b - 1);
    let ctx = ForwardContext::new(t);
    let plan = ctx.plan(b, &[0]).unwrap();
    let mut rng = testing::seeded_rng(cfg.seed + 13);
    let coeffs = testing::random_coeffs(&mut rng, 0, b, 1);
    let mut field = plan.inverse(&coeffs).unwrap();
    field.samples_mut().mapv_inplace(|z| Complex64::new(z.re, 0.0));
    let max_abs = field.samples().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
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
    let input = FeatureMap::from_spatial(vec![field.clone()]).unwrap();
    let out = conv_layer_forward(&input, &params, &mut bn, &spec, &ctx).unwrap();
    let got = out.spatial_part(0).unwrap();
    let mut err: f64 = 0.0;
    let scale = max_abs.max(1.0);
    for (a, e) in got.samples().iter().zip(field.samples().iter()) {
        err = err.max((a.re - e.re).abs() / scale);
    }
    CheckReport::new(
        "layer_identity",
        &["conv_layer_forward"],
        err,
        1e-6,
        "unit filter + identity batch norm reproduces a nonnegative input".to_string(),
    )
}

fn phi_shift_feature(feature: &FeatureMap, steps: usize) -> FeatureMap {
    let parts = feature.spatial_parts().unwrap();
    let shifted: Vec<SpinField> = parts
        .iter()
        .map(|f| {
            let grid = f.grid();
            let np = grid.n_phi();
            let mut out = f.clone();
            for ch in 0..f.channels() {
                for j in 0..grid.n_theta() {
                    for k in 0..np {
                        out.samples_mut()[[ch, j, k]] = f.samples()[[ch, j, (k + steps) % np]];
                    }
                }
            }
            out
        })
        .collect();
    FeatureMap::from_spatial(shifted).unwrap()
}

fn random_spatial_input(spin: i32, b: usize, seed: u64) -> FeatureMap {
    let mut rng = testing::seeded_rng(seed);
    let grid = SphericalGrid::new(b);
    let mut f = SpinField::zeros(spin, grid, 1);
    f.samples_mut()
        .mapv_inplace(|_| Complex64::new(testing::normal(&mut rng), testing::normal(&mut rng)));
    if spin == 0 {
        f.mark_real().unwrap();
    }
    FeatureMap::from_spatial(vec![f]).unwrap()
}

fn check_classifier(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 14);
    let mut net = Classifier::new(&[0], &mut rng).expect("classifier");
    let budget_err = (net.parameter_count() as f64 - 58_000.0).abs() / 58_000.0;
    let t = table(cfg, 31);
    let ctx = ForwardContext::new(t).with_precision(Precision::F32);
    let input = random_spatial_input(0, 32, cfg.seed + 140);
    let logits = net.forward(&input, &ctx).expect("forward");
    // shift by 8 grid steps: divisible by the total pooling factor, so every
    // stage commutes exactly and the invariant head must agree
    let shifted = phi_shift_feature(&input, 8);
    let logits_shifted = net.forward(&shifted, &ctx).expect("forward");
    let scale = logits.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift_err: f64 = 0.0;
    for (a, b) in logits.iter().zip(logits_shifted.iter()) {
        shift_err = shift_err.max((a - b).abs() / scale);
    }
    let err = shift_err.max(if budget_err <= 0.05 { 0.0 } else { budget_err });
    CheckReport::new(
        "classifier_budget_and_shift",
        &["build_classifier", "classifier_forward"],
        err,
        1e-4,
        format!(
            "params {} (budget gap {:.2}%), logit shift error {:.2e}",
            net.parameter_count(),
            budget_err * 100.0,
            shift_err
        ),
    )
}

fn check_unet(cfg: &CheckConfig) -> CheckReport {
    let mut rng = testing::seeded_rng(cfg.seed + 15);
    let mut net = UNet::new(&[0], &[1], 1, &mut rng).expect("unet");
    let budget_err = (net.parameter_count() as f64 - 112_000.0).abs() / 112_000.0;
    let t = table(cfg, 31);
    let ctx = ForwardContext::new(t).with_precision(Precision::F32);
    let input = random_spatial_input(0, 32, cfg.seed + 150);
    let out = net.forward(&input, &ctx).expect("forward");
    let shape_ok = out.bandwidth() == 32 && out.spins() == vec![1] && out.channels() == 1;
    // φ-shift equivariance of the full network, single precision
    let shifted_out = net.forward(&phi_shift_feature(&input, 8), &ctx).expect("forward");
    let expect = phi_shift_feature(&out, 8);
    let mut shift_err: f64 = 0.0;
    let scale = out
        .spatial_part(1)
        .unwrap()
        .samples()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    for (a, b) in shifted_out
        .spatial_part(1)
        .unwrap()
        .samples()
        .iter()
        .zip(expect.spatial_part(1).unwrap().samples().iter())
    {
        shift_err = shift_err.max((a - b).norm() / scale);
    }
    let mut err = shift_err;
    if budget_err > 0.05 {
        err = err.max(budget_err);
    }
    if !shape_ok {
        err = err.max(1.0);
    }
    CheckReport::new(
        "unet_budget_shape_and_shift",
        &["build_unet", "unet_forward"],
        err,
        1e-5,
        format!(
            "params {} (budget gap {:.2}%), output shape ok: {}, shift error {:.2e}",
            net.parameter_count(),
            budget_err * 100.0,
            shape_ok,
            shift_err
        ),
    )
}

/// Relative feature-map gap in coefficient space: both sides are expanded
/// at their own bandwidth, so the comparison lives where the spectral
/// rotation is defined. Returns ‖a - b‖ / ‖b‖ over all spins and channels.
pub fn network_feature_gap(ctx: &ForwardContext, a: &FeatureMap, b: &FeatureMap) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &s in &a.spins() {
        let fa = a.spatial_part(s).unwrap();
        let fb = b.spatial_part(s).unwrap();
        let plan = ctx.plan(fa.grid().bandwidth(), &[s]).unwrap();
        let ca = plan.forward(fa).unwrap();
        let cb = plan.forward(fb).unwrap();
        for (x, y) in ca.array().iter().zip(cb.array().iter()) {
            num += (x - y).norm_sqr();
            den += y.norm_sqr();
        }
    }
    (num / den.max(1e-300)).sqrt()
}

/// One trial of the full-network rotation-equivariance experiment at B = 32:
/// random classifier weights, a smooth bandlimited input, and one uniform
/// random rotation. Returns the coefficient-space relative gap.
pub fn network_so3_trial(ctx: &ForwardContext, seed: u64) -> f64 {
    let b = 32;
    let mut rng = testing::seeded_rng(seed);
    let mut net = Classifier::new(&[0], &mut rng).expect("classifier");

    let plan = ctx.plan(b, &[0]).unwrap();
    let mut coeffs = testing::random_coeffs(&mut rng, 0, b, 1);
    for l in 0..b {
        let damp = (-((l * l) as f64) / 18.0).exp();
        for m in -(l as i64)..=(l as i64) {
            let v = coeffs.get(0, l, m) * damp;
            coeffs.set(0, l, m, v);
        }
    }
    let field = plan.inverse(&coeffs).unwrap();
    let input = FeatureMap::from_spatial(vec![field]).unwrap();

    let g = Rotation::random(&mut rng);
    let rotate_spatial = |f: &FeatureMap, g: &Rotation| -> FeatureMap {
        let parts: Vec<SpinField> = f
            .spatial_parts()
            .unwrap()
            .iter()
            .map(|p| {
                let plan = ctx.plan(p.grid().bandwidth(), &[p.spin()]).unwrap();
                crate::data::rotate_field(p, g, &plan).unwrap()
            })
            .collect();
        FeatureMap::from_spatial(parts).unwrap()
    };

    let out_of_rotated = net
        .features(&rotate_spatial(&input, &g), ctx)
        .expect("forward");
    let rotated_out = rotate_spatial(&net.features(&input, ctx).expect("forward"), &g);
    network_feature_gap(ctx, &out_of_rotated, &rotated_out)
}

fn check_network_so3(cfg: &CheckConfig) -> CheckReport {
    // Features before the head under a random spectral rotation: the
    // nonlinearities only approximately preserve bandlimits, so this is a
    // regression bound rather than an exactness statement.
    let t = table(cfg, 31);
    let ctx = ForwardContext::new(t);
    let err = network_so3_trial(&ctx, cfg.seed + 16);
    CheckReport::new(
        "network_so3_equivariance",
        &["classifier_forward"],
        err,
        0.05,
        "full-network features under a random rotation (regression bound)".to_string(),
    )
}

/// Runs every suite and appends a registry-coverage report.
pub fn run_all(cfg: &CheckConfig) -> Vec<CheckReport> {
    let mut reports = vec![
        check_delta_table(cfg),
        check_wigner_oracle(cfg),
        check_wigner_big_d(cfg),
        check_swsh_reference(cfg),
        check_swsh_orthonormality(cfg),
        check_round_trip(cfg),
        check_parseval(cfg),
        check_s0_direct_quadrature(cfg),
        check_rotation(cfg),
        check_conv_equivariance(cfg),
        check_corr_equivariance(cfg),
        check_special_cases(cfg),
        check_bandlimit(cfg),
        check_filter_expand(cfg),
        check_nonlinearities(cfg),
        check_pool_upsample(cfg),
        check_layer_identity(cfg),
        check_classifier(cfg),
        check_unet(cfg),
        check_network_so3(cfg),
    ];
    let covered: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.ops.iter().map(|s| s.as_str()))
        .collect();
    let missing: Vec<&str> = REGISTERED_OPS
        .iter()
        .copied()
        .filter(|op| !covered.contains(op))
        .collect();
    reports.push(CheckReport::new(
        "registry_coverage",
        &[],
        missing.len() as f64,
        0.0,
        if missing.is_empty() {
            format!("all {} registered operations exercised", REGISTERED_OPS.len())
        } else {
            format!("uncovered operations: {missing:?}")
        },
    ));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_passes_every_check() {
        let reports = run_all(&CheckConfig {
            bandwidth: 16,
            ..CheckConfig::default()
        });
        for r in &reports {
            assert!(
                r.passed,
                "check '{}' failed: max_error {:.3e} > tol {:.3e} ({})",
                r.name, r.max_error, r.tolerance, r.detail
            );
        }
    }

    #[test]
    fn injected_sign_flip_trips_the_wigner_oracle() {
        let cfg = CheckConfig {
            bandwidth: 8,
            inject_delta_sign_flip: true,
            ..CheckConfig::default()
        };
        let report = check_wigner_oracle(&cfg);
        assert!(!report.passed, "fault injection must fail the oracle");
    }

    #[test]
    fn factorial_formula_matches_closed_forms() {
        for &beta in &[0.3, 1.1, 2.0] {
            approx::assert_abs_diff_eq!(
                wigner_d_factorial(1, 0, 0, beta),
                beta.cos(),
                epsilon = 1e-13
            );
            approx::assert_abs_diff_eq!(
                wigner_d_factorial(1, 1, 0, beta),
                -beta.sin() / 2f64.sqrt(),
                epsilon = 1e-13
            );
            approx::assert_abs_diff_eq!(
                wigner_d_factorial(1, 1, 1, beta),
                (1.0 + beta.cos()) / 2.0,
                epsilon = 1e-13
            );
        }
    }
}
