//! Spherical Vector Field MNIST: ingestion, projection, vector-field
//! construction, task targets, and dataset generation.
//!
//! Digits are projected gnomonically onto a cap of half-angle π/4 centered
//! on the north pole; the 28×28 image square is inscribed in the cap, so
//! everything outside it is exactly zero. Vector fields are Sobel gradients
//! pushed forward as gradients of the projected image, then encoded in the
//! grid-aligned tangent frame as v_θ + i·v_φ (a spin-1 field).
//!
//! Projected fields are bandlimited once (forward + inverse transform) so
//! that the stored data rotates exactly in the spectral domain. Following
//! the source dataset's protocol the original train and test splits are
//! swapped: training uses the (10k) original test images and testing the
//! first 50k original training images.

pub mod idx;

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blob::{field_to_f32, BlobEntry, BlobReader, BlobWriter};
use crate::error::{Error, Result};
use crate::harmonics::Rotation;
use crate::par;
use crate::spectral::rotate_coeffs;
use crate::transform::{SpinField, SphericalGrid, TransformPlan};

/// A grayscale source image with its class label.
#[derive(Clone, Debug)]
pub struct PlanarImage {
    pub pixels: Array2<f64>,
    pub label: u8,
}

impl PlanarImage {
    pub fn new(mut pixels: Array2<f64>, label: u8) -> Self {
        pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        PlanarImage { pixels, label }
    }
}

/// Loads and zips MNIST-format image and label files.
pub fn mnist_load(images_path: &Path, labels_path: &Path) -> Result<Vec<PlanarImage>> {
    let images = idx::load_idx_images(images_path)?;
    let labels = idx::load_idx_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| PlanarImage::new(pixels, label))
        .collect())
}

/// 3×3 Sobel gradients with replicate border padding. Output [2, h, w]:
/// plane 0 is the column (+x) gradient, plane 1 the row (+y, downward)
/// gradient.
pub fn sobel_gradient(img: &Array2<f64>) -> Array3<f64> {
    let (h, w) = img.dim();
    let clamp = |r: i64, c: i64| -> f64 {
        let r = r.clamp(0, h as i64 - 1) as usize;
        let c = c.clamp(0, w as i64 - 1) as usize;
        img[[r, c]]
    };
    let mut out = Array3::zeros((2, h, w));
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for dr in -1..=1i64 {
                for dc in -1..=1i64 {
                    let v = clamp(r + dr, c + dc);
                    // Sobel x: [-1 0 1; -2 0 2; -1 0 1], y is its transpose
                    let wx = dc as f64 * (2 - dr.abs()) as f64;
                    let wy = dr as f64 * (2 - dc.abs()) as f64;
                    gx += wx * v;
                    gy += wy * v;
                }
            }
            out[[0, r as usize, c as usize]] = gx;
            out[[1, r as usize, c as usize]] = gy;
        }
    }
    out
}

/// The grid-aligned orthonormal tangent frame (e_θ, e_φ) and its complex
/// encoding v ↦ v_θ + i·v_φ. Defined at every grid point; the θ offset keeps
/// all points away from the poles.
pub struct TangentFrame;

impl TangentFrame {
    #[inline]
    pub fn encode(v_theta: f64, v_phi: f64) -> Complex64 {
        Complex64::new(v_theta, v_phi)
    }

    #[inline]
    pub fn decode(z: Complex64) -> (f64, f64) {
        (z.re, z.im)
    }
}

/// Half-angle of the projection cap.
pub const CAP_HALF_ANGLE: f64 = PI / 4.0;

/// Half-side of the image square on the tangent plane; the square is
/// inscribed in the cap (corners exactly on the boundary).
fn plane_half_side() -> f64 {
    CAP_HALF_ANGLE.tan() / std::f64::consts::SQRT_2
}

/// Continuous image coordinates of a grid point under the gnomonic map, or
/// None outside the image square (or on the far hemisphere).
fn image_coords(theta: f64, phi: f64, rows: usize, cols: usize) -> Option<(f64, f64)> {
    if theta >= PI / 2.0 {
        return None;
    }
    let h = plane_half_side();
    let rho = theta.tan();
    let x = rho * phi.cos();
    let y = rho * phi.sin();
    let u = x / h;
    let v = y / h;
    if u.abs() > 1.0 || v.abs() > 1.0 {
        return None;
    }
    // x to the right (columns increasing), y up (rows decreasing)
    let col = (u + 1.0) / 2.0 * (cols - 1) as f64;
    let row = (1.0 - v) / 2.0 * (rows - 1) as f64;
    Some((row, col))
}

fn bilinear(img: &Array2<f64>, row: f64, col: f64) -> f64 {
    let (h, w) = img.dim();
    let r0 = (row.floor() as usize).min(h - 1);
    let c0 = (col.floor() as usize).min(w - 1);
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    let fr = (row - r0 as f64).clamp(0.0, 1.0);
    let fc = (col - c0 as f64).clamp(0.0, 1.0);
    img[[r0, c0]] * (1.0 - fr) * (1.0 - fc)
        + img[[r0, c1]] * (1.0 - fr) * fc
        + img[[r1, c0]] * fr * (1.0 - fc)
        + img[[r1, c1]] * fr * fc
}

/// Projects one or more grayscale planes onto the sphere as a spin-0 field
/// (one channel per plane).
pub fn project_scalar(planes: &[Array2<f64>], grid: SphericalGrid) -> Result<SpinField> {
    if planes.is_empty() {
        return Err(Error::InvalidConfig("no image planes to project".into()));
    }
    let mut field = SpinField::zeros(0, grid, planes.len());
    for (ch, img) in planes.iter().enumerate() {
        let (rows, cols) = img.dim();
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                if let Some((row, col)) = image_coords(grid.theta(j), grid.phi(k), rows, cols) {
                    field.samples_mut()[[ch, j, k]] =
                        Complex64::new(bilinear(img, row, col), 0.0);
                }
            }
        }
    }
    field.mark_real()?;
    Ok(field)
}

/// Projects a planar vector field [2, h, w] (x and y components) onto the
/// sphere as a spin-1 field.
///
/// Components transform as the gradient of the projected image: with
/// g = (g_x, g_y) in plane coordinates (y up),
/// v_θ = sec²θ (cos φ g_x + sin φ g_y) and v_φ = sec θ (-sin φ g_x + cos φ g_y),
/// encoded as v_θ + i·v_φ.
pub fn project_vector(planar: &Array3<f64>, grid: SphericalGrid) -> Result<SpinField> {
    let (planes, rows, cols) = planar.dim();
    if planes != 2 {
        return Err(Error::ShapeMismatch(format!(
            "planar vector field needs 2 planes, got {planes}"
        )));
    }
    let gx_img = planar.index_axis(ndarray::Axis(0), 0).to_owned();
    let gy_img = planar.index_axis(ndarray::Axis(0), 1).to_owned();
    let mut field = SpinField::zeros(1, grid, 1);
    for j in 0..grid.n_theta() {
        let theta = grid.theta(j);
        for k in 0..grid.n_phi() {
            let phi = grid.phi(k);
            if let Some((row, col)) = image_coords(theta, phi, rows, cols) {
                let gx = bilinear(&gx_img, row, col);
                // image rows grow downward; plane y grows upward
                let gy = -bilinear(&gy_img, row, col);
                let sec = 1.0 / theta.cos();
                let v_theta = sec * sec * (phi.cos() * gx + phi.sin() * gy);
                let v_phi = sec * (-phi.sin() * gx + phi.cos() * gy);
                field.samples_mut()[[0, j, k]] = TangentFrame::encode(v_theta, v_phi);
            }
        }
    }
    Ok(field)
}

/// vec2img-hard target: HSV with hue c/10, saturation 1, and the grayscale
/// values (clamped to [0, 1]) as value, converted to RGB (3 channels).
pub fn hard_image_target(gray: &SpinField, label: u8) -> Result<SpinField> {
    if gray.spin() != 0 || gray.channels() != 1 {
        return Err(Error::InvalidConfig(
            "hard image target needs a single spin-0 channel".into(),
        ));
    }
    let hue = label as f64 / 10.0;
    let grid = gray.grid();
    let mut rgb = SpinField::zeros(0, grid, 3);
    for j in 0..grid.n_theta() {
        for k in 0..grid.n_phi() {
            let v = gray.samples()[[0, j, k]].re.clamp(0.0, 1.0);
            let (r, g, b) = hsv_to_rgb(hue, 1.0, v);
            rgb.samples_mut()[[0, j, k]] = Complex64::new(r, 0.0);
            rgb.samples_mut()[[1, j, k]] = Complex64::new(g, 0.0);
            rgb.samples_mut()[[2, j, k]] = Complex64::new(b, 0.0);
        }
    }
    rgb.mark_real()?;
    Ok(rgb)
}

/// img2vec-hard target: every spin-1 sample multiplied by e^{2πic/10}.
pub fn hard_vector_target(field: &SpinField, label: u8) -> Result<SpinField> {
    if field.spin() != 1 {
        return Err(Error::SpinNotZero(field.spin()));
    }
    let offset = Complex64::from_polar(1.0, 2.0 * PI * label as f64 / 10.0);
    let mut out = field.clone();
    out.samples_mut().mapv_inplace(|z| z * offset);
    Ok(out)
}

/// HSV (h ∈ [0,1)) to RGB, all components in [0, 1].
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Bandlimits a field by one forward + inverse transform round trip, making
/// subsequent spectral rotations exact on the stored data.
pub fn bandlimit_field(field: &SpinField, plan: &TransformPlan) -> Result<SpinField> {
    let coeffs = plan.forward(field)?;
    let mut out = plan.inverse(&coeffs)?;
    if field.is_real() {
        // bandlimiting a real scalar field keeps it real to roundoff
        out.mark_real()?;
    }
    Ok(out)
}

/// Rotates a bandlimited field spectrally: forward transform, coefficient
/// rotation, inverse transform.
pub fn rotate_field(field: &SpinField, g: &Rotation, plan: &TransformPlan) -> Result<SpinField> {
    let coeffs = plan.forward(field)?;
    let rotated = rotate_coeffs(&coeffs, g, plan.table())?;
    let mut out = plan.inverse(&rotated)?;
    if field.is_real() {
        out.mark_real()?;
    }
    Ok(out)
}

/// Rotates a spin-1 field *as if* it were two scalar channels (v_θ, v_φ),
/// ignoring the frame transformation. This is the incorrect treatment that
/// spin-aware rotation fixes; the two results differ for generic rotations.
pub fn rotate_vector_as_scalars(
    field: &SpinField,
    g: &Rotation,
    scalar_plan: &TransformPlan,
) -> Result<SpinField> {
    if field.spin() != 1 {
        return Err(Error::SpinNotZero(field.spin()));
    }
    let grid = field.grid();
    let mut comps = SpinField::zeros(0, grid, 2 * field.channels());
    for ch in 0..field.channels() {
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                let (vt, vp) = TangentFrame::decode(field.samples()[[ch, j, k]]);
                comps.samples_mut()[[2 * ch, j, k]] = Complex64::new(vt, 0.0);
                comps.samples_mut()[[2 * ch + 1, j, k]] = Complex64::new(vp, 0.0);
            }
        }
    }
    let rotated = rotate_field(&comps, g, scalar_plan)?;
    let mut out = SpinField::zeros(1, grid, field.channels());
    for ch in 0..field.channels() {
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                out.samples_mut()[[ch, j, k]] = TangentFrame::encode(
                    rotated.samples()[[2 * ch, j, k]].re,
                    rotated.samples()[[2 * ch + 1, j, k]].re,
                );
            }
        }
    }
    Ok(out)
}

/// The six dataset variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ClassifyScalar,
    ClassifyVector,
    Img2vecEasy,
    Img2vecHard,
    Vec2imgEasy,
    Vec2imgHard,
}

impl Task {
    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "classify-scalar" => Ok(Task::ClassifyScalar),
            "classify-vector" => Ok(Task::ClassifyVector),
            "img2vec-easy" => Ok(Task::Img2vecEasy),
            "img2vec-hard" => Ok(Task::Img2vecHard),
            "vec2img-easy" => Ok(Task::Vec2imgEasy),
            "vec2img-hard" => Ok(Task::Vec2imgHard),
            other => Err(Error::InvalidConfig(format!("unknown task '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::ClassifyScalar => "classify-scalar",
            Task::ClassifyVector => "classify-vector",
            Task::Img2vecEasy => "img2vec-easy",
            Task::Img2vecHard => "img2vec-hard",
            Task::Vec2imgEasy => "vec2img-easy",
            Task::Vec2imgHard => "vec2img-hard",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::ClassifyScalar | Task::ClassifyVector)
    }

    pub fn input_spin(&self) -> i32 {
        match self {
            Task::ClassifyScalar | Task::Img2vecEasy | Task::Img2vecHard => 0,
            _ => 1,
        }
    }

    pub fn target_spin(&self) -> Option<i32> {
        match self {
            Task::ClassifyScalar | Task::ClassifyVector => None,
            Task::Img2vecEasy | Task::Img2vecHard => Some(1),
            Task::Vec2imgEasy | Task::Vec2imgHard => Some(0),
        }
    }

    pub fn target_channels(&self) -> usize {
        match self {
            Task::Vec2imgHard => 3,
            _ => 1,
        }
    }
}

/// Whether a split is rotated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationMode {
    NR,
    R,
}

impl RotationMode {
    pub fn parse(s: &str) -> Result<RotationMode> {
        match s {
            "NR" | "nr" => Ok(RotationMode::NR),
            "R" | "r" => Ok(RotationMode::R),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// Generation configuration; identical (config, seed) pairs produce
/// byte-identical outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub task: Task,
    pub train_mode: RotationMode,
    pub test_mode: RotationMode,
    pub bandwidth: usize,
    pub seed: u64,
    /// Per-split sample cap for desk-scale runs; None generates everything.
    pub limit: Option<usize>,
}

/// Split sizes after the train/test swap: training takes the source test
/// split, testing the first 50k source training images.
pub fn split_plan(source_train: usize, source_test: usize) -> (usize, usize) {
    (source_test, source_train.min(50_000))
}

/// Dataset manifest: everything needed to locate and interpret the blobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: String,
    pub task: Task,
    pub train_mode: RotationMode,
    pub test_mode: RotationMode,
    pub bandwidth: usize,
    pub seed: u64,
    pub projection: String,
    pub input_spin: i32,
    pub target_spin: Option<i32>,
    pub source_train_count: usize,
    pub source_test_count: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub train_test_swapped: bool,
    pub blobs: Vec<BlobEntry>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&json)?)
    }

    pub fn reader(&self, dir: &Path) -> BlobReader {
        BlobReader::new(dir, self.blobs.clone())
    }
}

/// One generated sample: the input field, an optional dense target, and the
/// label.
struct Sample {
    input: SpinField,
    target: Option<SpinField>,
    label: u8,
}

struct SamplePipeline {
    task: Task,
    scalar_plan: TransformPlan,
    vector_plan: TransformPlan,
    grid: SphericalGrid,
}

impl SamplePipeline {
    fn new(task: Task, bandwidth: usize) -> Result<Self> {
        let table = std::sync::Arc::new(crate::harmonics::DeltaTable::new(bandwidth - 1));
        Ok(SamplePipeline {
            task,
            scalar_plan: TransformPlan::new(bandwidth, &[0], table.clone())?,
            vector_plan: TransformPlan::new(bandwidth, &[1], table)?,
            grid: SphericalGrid::new(bandwidth),
        })
    }

    /// Deterministic per-sample substream: independent of chunking and
    /// thread count.
    fn sample_rng(&self, seed: u64, split: u64, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&split.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    fn generate(
        &self,
        image: &PlanarImage,
        mode: RotationMode,
        seed: u64,
        split: u64,
        index: u64,
    ) -> Result<Sample> {
        let rotation = match mode {
            RotationMode::NR => None,
            RotationMode::R => {
                let mut rng = self.sample_rng(seed, split, index);
                Some(Rotation::random(&mut rng))
            }
        };

        let scalar = || -> Result<SpinField> {
            let f = project_scalar(std::slice::from_ref(&image.pixels), self.grid)?;
            let f = bandlimit_field(&f, &self.scalar_plan)?;
            match &rotation {
                Some(g) => rotate_field(&f, g, &self.scalar_plan),
                None => Ok(f),
            }
        };
        let vector = || -> Result<SpinField> {
            let grad = sobel_gradient(&image.pixels);
            let f = project_vector(&grad, self.grid)?;
            let f = bandlimit_field(&f, &self.vector_plan)?;
            match &rotation {
                Some(g) => rotate_field(&f, g, &self.vector_plan),
                None => Ok(f),
            }
        };

        let (input, target) = match self.task {
            Task::ClassifyScalar => (scalar()?, None),
            Task::ClassifyVector => (vector()?, None),
            Task::Img2vecEasy => (scalar()?, Some(vector()?)),
            Task::Img2vecHard => {
                let t = hard_vector_target(&vector()?, image.label)?;
                (scalar()?, Some(t))
            }
            Task::Vec2imgEasy => (vector()?, Some(scalar()?)),
            Task::Vec2imgHard => {
                let t = hard_image_target(&scalar()?, image.label)?;
                (vector()?, Some(t))
            }
        };
        let mut input = input;
        input.quantize_f32();
        let target = target.map(|mut t| {
            t.quantize_f32();
            t
        });
        Ok(Sample {
            input,
            target,
            label: image.label,
        })
    }
}

/// Generates the dataset into `dir` (manifest.json plus one blob file per
/// split and role). Sample generation is parallel per chunk; writing is
/// single-threaded and ordered, so output bytes are reproducible.
pub fn dataset_generate(
    config: &GenerateConfig,
    source_train: &[PlanarImage],
    source_test: &[PlanarImage],
    dir: &Path,
    parallel: bool,
) -> Result<DatasetManifest> {
    if config.bandwidth < 2 {
        return Err(Error::InvalidConfig("bandwidth must be at least 2".into()));
    }
    let pipeline = SamplePipeline::new(config.task, config.bandwidth)?;

    // swap: train <- source test, test <- first 50k of source train
    let (train_total, test_total) = split_plan(source_train.len(), source_test.len());
    let train_images = &source_test[..train_total];
    let test_images = &source_train[..test_total];
    let cap = config.limit.unwrap_or(usize::MAX);
    let train_n = train_total.min(cap);
    let test_n = test_total.min(cap);

    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (split_id, (name, images, n, mode)) in [
        ("train", train_images, train_n, config.train_mode),
        ("test", test_images, test_n, config.test_mode),
    ]
    .into_iter()
    .enumerate()
    {
        entries.extend(write_split(
            config, &pipeline, dir, name, split_id as u64, &images[..n], mode, parallel,
        )?);
    }

    let manifest = DatasetManifest {
        format_version: 1,
        kind: "dataset".to_string(),
        task: config.task,
        train_mode: config.train_mode,
        test_mode: config.test_mode,
        bandwidth: config.bandwidth,
        seed: config.seed,
        projection: "gnomonic-cap-pi4".to_string(),
        input_spin: config.task.input_spin(),
        target_spin: config.task.target_spin(),
        source_train_count: source_train.len(),
        source_test_count: source_test.len(),
        train_count: train_n,
        test_count: test_n,
        train_test_swapped: true,
        blobs: entries,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn write_split(
    config: &GenerateConfig,
    pipeline: &SamplePipeline,
    dir: &Path,
    name: &str,
    split_id: u64,
    images: &[PlanarImage],
    mode: RotationMode,
    parallel: bool,
) -> Result<Vec<BlobEntry>> {
    let n = images.len();
    let nt = pipeline.grid.n_theta();
    let np = pipeline.grid.n_phi();
    let input_shape = vec![n, 1, 2, nt, np];
    let target_shape = config
        .task
        .target_spin()
        .map(|_| vec![n, config.task.target_channels(), 2, nt, np]);

    let mut input_writer = BlobWriter::create(dir, &format!("{name}_input.bin"))?;
    input_writer.begin_entry(&format!("{name}/input"), &input_shape);
    let mut target_writer = match &target_shape {
        Some(shape) => {
            let mut w = BlobWriter::create(dir, &format!("{name}_target.bin"))?;
            w.begin_entry(&format!("{name}/target"), shape);
            Some(w)
        }
        None => None,
    };
    let mut labels = Vec::with_capacity(n);

    const CHUNK: usize = 64;
    for chunk_start in (0..n).step_by(CHUNK) {
        let chunk_end = (chunk_start + CHUNK).min(n);
        let samples: Vec<Result<Sample>> =
            par::map_indexed(parallel, chunk_end - chunk_start, |i| {
                let index = chunk_start + i;
                pipeline.generate(
                    &images[index],
                    mode,
                    config.seed,
                    split_id,
                    index as u64,
                )
            });
        for sample in samples {
            let sample = sample?;
            let (_, data) = field_to_f32(&sample.input);
            input_writer.append_f32(&data)?;
            if let Some(w) = target_writer.as_mut() {
                let target = sample.target.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("dense task produced no target".into())
                })?;
                let (_, data) = field_to_f32(target);
                w.append_f32(&data)?;
            }
            labels.push(sample.label as f32);
        }
    }

    input_writer.end_entry()?;
    let mut entries = input_writer.finish()?;
    if let Some(mut w) = target_writer {
        w.end_entry()?;
        entries.extend(w.finish()?);
    }
    if config.task.is_classification() {
        let mut w = BlobWriter::create(dir, &format!("{name}_labels.bin"))?;
        w.write_f32(&format!("{name}/labels"), &[n], labels.iter().copied())?;
        entries.extend(w.finish()?);
    }
    Ok(entries)
}

/// Reads one sample's input field (and dense target, if any) from a dataset.
pub fn load_sample(
    dir: &Path,
    manifest: &DatasetManifest,
    split: &str,
    index: usize,
) -> Result<(SpinField, Option<SpinField>, Option<u8>)> {
    let count = match split {
        "train" => manifest.train_count,
        "test" => manifest.test_count,
        other => {
            return Err(Error::InvalidConfig(format!("unknown split '{other}'")));
        }
    };
    if index >= count {
        return Err(Error::InvalidConfig(format!(
            "sample {index} out of range ({count} in split)"
        )));
    }
    let reader = manifest.reader(dir);
    let input_entry = reader.entry(&format!("{split}/input"))?;
    let per_sample: usize = input_entry.shape[1..].iter().product();
    let data = reader.read_f32_slice(
        &format!("{split}/input"),
        index * per_sample,
        per_sample,
    )?;
    let input = crate::blob::field_from_f32(
        manifest.input_spin,
        &input_entry.shape[1..],
        &data,
    )?;

    let target = match manifest.target_spin {
        Some(spin) => {
            let entry = reader.entry(&format!("{split}/target"))?;
            let per_sample: usize = entry.shape[1..].iter().product();
            let data =
                reader.read_f32_slice(&format!("{split}/target"), index * per_sample, per_sample)?;
            Some(crate::blob::field_from_f32(spin, &entry.shape[1..], &data)?)
        }
        None => None,
    };
    let label = if manifest.task.is_classification() {
        let data = reader.read_f32_slice(&format!("{split}/labels"), index, 1)?;
        Some(data[0] as u8)
    } else {
        None
    };
    Ok((input, target, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::DeltaTable;
    use crate::testing;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::sync::Arc;

    #[test]
    fn sobel_of_constant_image_is_zero() {
        let img = Array2::from_elem((28, 28), 0.42);
        let g = sobel_gradient(&img);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn sobel_of_horizontal_ramp() {
        let img = Array2::from_shape_fn((28, 28), |(_, c)| c as f64 / 27.0);
        let g = sobel_gradient(&img);
        for r in 1..27 {
            for c in 1..27 {
                assert_abs_diff_eq!(g[[0, r, c]], 8.0 / 27.0, epsilon = 1e-12);
                assert_abs_diff_eq!(g[[1, r, c]], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sobel_commutes_with_quarter_turn() {
        // J[r][c] = I[N-1-c][r] rotates +x into +y, so gradients map
        // (gx, gy) -> (-gy, gx) on the interior.
        let mut rng = testing::seeded_rng(31);
        let n = 16;
        let img = Array2::from_shape_fn((n, n), |_| testing::normal(&mut rng));
        let rotated = Array2::from_shape_fn((n, n), |(r, c)| img[[n - 1 - c, r]]);
        let gi = sobel_gradient(&img);
        let gj = sobel_gradient(&rotated);
        for r in 1..n - 1 {
            for c in 1..n - 1 {
                assert_abs_diff_eq!(gj[[0, r, c]], -gi[[1, n - 1 - c, r]], epsilon = 1e-12);
                assert_abs_diff_eq!(gj[[1, r, c]], gi[[0, n - 1 - c, r]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn blank_image_projects_to_zero() {
        let grid = SphericalGrid::new(16);
        let img = Array2::zeros((28, 28));
        let f = project_scalar(&[img], grid).unwrap();
        assert!(f.samples().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn projection_preserves_range_and_cap_support() {
        let mut rng = testing::seeded_rng(32);
        let grid = SphericalGrid::new(32);
        let img =
            Array2::from_shape_fn((28, 28), |_| rng.gen_range(0.0..1.0f64));
        let f = project_scalar(&[img], grid).unwrap();
        let mut mass = 0.0;
        for j in 0..grid.n_theta() {
            for k in 0..grid.n_phi() {
                let v = f.samples()[[0, j, k]].re;
                assert!((0.0..=1.0).contains(&v), "bilinear value {v} out of range");
                if grid.theta(j) > CAP_HALF_ANGLE {
                    assert_eq!(v, 0.0, "support leaks outside the cap");
                }
                mass += v;
            }
        }
        assert!(mass > 0.0);
    }

    #[test]
    fn tangent_frame_encode_decode_is_identity() {
        let z = TangentFrame::encode(0.3, -1.7);
        let (vt, vp) = TangentFrame::decode(z);
        assert_eq!(vt, 0.3);
        assert_eq!(vp, -1.7);
    }

    #[test]
    fn hard_targets_follow_the_formulas() {
        let grid = SphericalGrid::new(8);
        let mut gray = SpinField::zeros(0, grid, 1);
        gray.samples_mut()[[0, 3, 4]] = Complex64::new(0.8, 0.0);
        gray.mark_real().unwrap();

        // c = 0: hue 0 (red family)
        let rgb = hard_image_target(&gray, 0).unwrap();
        assert_abs_diff_eq!(rgb.samples()[[0, 3, 4]].re, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(rgb.samples()[[1, 3, 4]].re, 0.0, epsilon = 1e-12);
        // zero grayscale pixels stay black for any hue
        let rgb7 = hard_image_target(&gray, 7).unwrap();
        for ch in 0..3 {
            assert_eq!(rgb7.samples()[[ch, 0, 0]].norm(), 0.0);
        }

        let mut vec = SpinField::zeros(1, grid, 1);
        vec.samples_mut()[[0, 2, 2]] = Complex64::new(1.0, -2.0);
        // c = 0: multiplier 1
        let t0 = hard_vector_target(&vec, 0).unwrap();
        assert_eq!(t0.samples(), vec.samples());
        // c = 5: multiplier e^{iπ} = -1
        let t5 = hard_vector_target(&vec, 5).unwrap();
        let expect = -vec.samples()[[0, 2, 2]];
        assert!((t5.samples()[[0, 2, 2]] - expect).norm() < 1e-12);
    }

    #[test]
    fn spectral_rotation_round_trip_on_projected_digit() {
        let b = 16;
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[0], table).unwrap();
        let grid = SphericalGrid::new(b);
        let img = Array2::from_shape_fn((28, 28), |(r, c)| {
            ((r as f64 - 14.0).powi(2) + (c as f64 - 10.0).powi(2)).sqrt().sin().abs()
        });
        let f = bandlimit_field(&project_scalar(&[img], grid).unwrap(), &plan).unwrap();
        let mut rng = testing::seeded_rng(33);
        let g = Rotation::random(&mut rng);
        let rotated = rotate_field(&f, &g, &plan).unwrap();
        let back = rotate_field(&rotated, &g.inverse(), &plan).unwrap();
        let scale = f.samples().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, e) in back.samples().iter().zip(f.samples().iter()) {
            assert!((a - e).norm() <= 1e-6 * scale);
        }
        // identity rotation is a no-op up to transform roundoff
        let id = rotate_field(&f, &Rotation::identity(), &plan).unwrap();
        for (a, e) in id.samples().iter().zip(f.samples().iter()) {
            assert!((a - e).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn phi_shift_matches_azimuthal_spectral_rotation() {
        // Shifting the samples by k grid steps in φ equals spectral rotation
        // by α = kπ/B for bandlimited fields, pinning the rotation
        // direction convention end to end.
        let b = 16;
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[1], table).unwrap();
        let grid = SphericalGrid::new(b);
        let img = Array2::from_shape_fn((28, 28), |(r, c)| {
            (r as f64 / 9.0).sin().abs() * (c as f64 / 5.0).cos().abs()
        });
        let grad = sobel_gradient(&img);
        let f = bandlimit_field(&project_vector(&grad, grid).unwrap(), &plan).unwrap();
        let k = 3usize;
        let alpha = PI * k as f64 / b as f64;
        let rotated = rotate_field(&f, &Rotation::new(alpha, 0.0, 0.0), &plan).unwrap();
        let scale = f.samples().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for j in 0..grid.n_theta() {
            for l in 0..grid.n_phi() {
                let shifted = f.samples()[[0, j, (l + k) % grid.n_phi()]];
                let got = rotated.samples()[[0, j, l]];
                assert!(
                    (got - shifted).norm() <= 1e-5 * scale,
                    "mismatch at ({j},{l}): {got} vs {shifted}"
                );
            }
        }
    }

    #[test]
    fn spin_aware_and_scalar_rotation_differ() {
        let b = 16;
        let table = Arc::new(DeltaTable::new(b - 1));
        let vec_plan = TransformPlan::new(b, &[1], table.clone()).unwrap();
        let scalar_plan = TransformPlan::new(b, &[0], table).unwrap();
        let grid = SphericalGrid::new(b);
        let img = Array2::from_shape_fn((28, 28), |(r, c)| {
            ((r + 2 * c) % 9) as f64 / 9.0
        });
        let grad = sobel_gradient(&img);
        let f = bandlimit_field(&project_vector(&grad, grid).unwrap(), &vec_plan).unwrap();
        let mut rng = testing::seeded_rng(34);
        let g = Rotation::random(&mut rng);
        let as_spin = rotate_field(&f, &g, &vec_plan).unwrap();
        let as_scalars = rotate_vector_as_scalars(&f, &g, &scalar_plan).unwrap();
        let scale: f64 = as_spin.samples().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let gap: f64 = as_spin
            .samples()
            .iter()
            .zip(as_scalars.samples().iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(
            gap > 1e-2 * scale,
            "scalar-channel rotation should differ (gap {gap}, scale {scale})"
        );
    }

    #[test]
    fn split_plan_swaps_train_and_test() {
        assert_eq!(split_plan(60_000, 10_000), (10_000, 50_000));
        assert_eq!(split_plan(100, 40), (40, 100));
    }

    #[test]
    fn task_parsing_round_trips() {
        for name in [
            "classify-scalar",
            "classify-vector",
            "img2vec-easy",
            "img2vec-hard",
            "vec2img-easy",
            "vec2img-hard",
        ] {
            assert_eq!(Task::parse(name).unwrap().name(), name);
        }
        assert!(Task::parse("bogus").is_err());
    }
}
