//! Minimal pluggable FFT interface.
//!
//! The transforms only need unnormalized 1D complex FFTs applied along the
//! rows or columns of a 2D array; any backend implementing [`FftBackend`] can
//! be swapped in. The default backend wraps `rustfft` with a shared planner.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;

/// Unnormalized in-place complex FFT. `inverse` selects the e^{+i2πjk/N} sign.
pub trait FftBackend: Send + Sync {
    fn transform(&self, data: &mut [Complex64], inverse: bool);
}

/// `rustfft`-backed implementation with a plan cache keyed by (length, direction).
pub struct RustFftBackend {
    planner: Mutex<rustfft::FftPlanner<f64>>,
    plans: Mutex<HashMap<(usize, bool), Arc<dyn rustfft::Fft<f64>>>>,
}

impl RustFftBackend {
    pub fn new() -> Self {
        RustFftBackend {
            planner: Mutex::new(rustfft::FftPlanner::new()),
            plans: Mutex::new(HashMap::new()),
        }
    }

    /// Process-wide shared backend.
    pub fn shared() -> Arc<dyn FftBackend> {
        static SHARED: OnceLock<Arc<RustFftBackend>> = OnceLock::new();
        SHARED.get_or_init(|| Arc::new(RustFftBackend::new())).clone()
    }

    fn plan(&self, len: usize, inverse: bool) -> Arc<dyn rustfft::Fft<f64>> {
        if let Some(p) = self.plans.lock().unwrap().get(&(len, inverse)) {
            return p.clone();
        }
        let plan = {
            let mut planner = self.planner.lock().unwrap();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        };
        self.plans
            .lock()
            .unwrap()
            .insert((len, inverse), plan.clone());
        plan
    }
}

impl Default for RustFftBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl FftBackend for RustFftBackend {
    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        self.plan(data.len(), inverse).process(data);
    }
}

/// FFT along each row (axis 1) of a standard-layout array.
pub fn fft_rows(backend: &dyn FftBackend, data: &mut Array2<Complex64>, inverse: bool) {
    for mut row in data.rows_mut() {
        let slice = row
            .as_slice_mut()
            .expect("row is contiguous in standard layout");
        backend.transform(slice, inverse);
    }
}

/// FFT along each column (axis 0), using a scratch buffer per column.
pub fn fft_cols(backend: &dyn FftBackend, data: &mut Array2<Complex64>, inverse: bool) {
    let rows = data.nrows();
    let mut scratch = vec![Complex64::new(0.0, 0.0); rows];
    for j in 0..data.ncols() {
        for i in 0..rows {
            scratch[i] = data[[i, j]];
        }
        backend.transform(&mut scratch, inverse);
        for i in 0..rows {
            data[[i, j]] = scratch[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn forward_then_inverse_recovers_scaled_input() {
        let backend = RustFftBackend::new();
        let n = 16;
        let orig: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1))
            .collect();
        let mut data = orig.clone();
        backend.transform(&mut data, false);
        backend.transform(&mut data, true);
        for (a, b) in data.iter().zip(&orig) {
            assert_abs_diff_eq!(a.re, b.re * n as f64, epsilon = 1e-9);
            assert_abs_diff_eq!(a.im, b.im * n as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn row_and_column_transforms_commute() {
        let backend = RustFftBackend::new();
        let mut a = Array2::from_shape_fn((8, 4), |(i, j)| {
            Complex64::new((i + 2 * j) as f64, (i * j) as f64)
        });
        let mut b = a.clone();
        fft_rows(&backend, &mut a, false);
        fft_cols(&backend, &mut a, false);
        fft_cols(&backend, &mut b, false);
        fft_rows(&backend, &mut b, false);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-9);
            assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-9);
        }
    }
}
