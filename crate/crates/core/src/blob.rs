//! Manifest + blob container: a `manifest.json` describing named arrays and
//! one binary file of little-endian f32 data.
//!
//! Complex fields are stored as separate real and imaginary planes, shape
//! [channels, 2, n_theta, n_phi]; coefficient arrays as
//! [channels, 2, bandwidth²].

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::transform::{SpinCoeffs, SpinField, SphericalGrid};

/// Descriptor of one array inside the blob file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
    pub offset: u64,
    pub byte_len: u64,
    pub sha256: String,
}

impl BlobEntry {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Streaming writer appending f32 arrays to one blob file. Large arrays can
/// be streamed with `begin_entry` / `append_f32` / `end_entry`.
pub struct BlobWriter {
    writer: BufWriter<File>,
    file_name: String,
    offset: u64,
    entries: Vec<BlobEntry>,
    pending: Option<PendingEntry>,
}

struct PendingEntry {
    name: String,
    shape: Vec<usize>,
    expected: usize,
    count: usize,
    hasher: Sha256,
}

impl BlobWriter {
    pub fn create(dir: &Path, file_name: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let writer = BufWriter::new(File::create(dir.join(file_name))?);
        Ok(BlobWriter {
            writer,
            file_name: file_name.to_string(),
            offset: 0,
            entries: Vec::new(),
            pending: None,
        })
    }

    /// Starts a streamed entry with a known final shape.
    pub fn begin_entry(&mut self, name: &str, shape: &[usize]) {
        assert!(self.pending.is_none(), "previous entry not finished");
        self.pending = Some(PendingEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            expected: shape.iter().product(),
            count: 0,
            hasher: Sha256::new(),
        });
    }

    /// Appends values to the streamed entry.
    pub fn append_f32(&mut self, values: &[f32]) -> Result<()> {
        let pending = self.pending.as_mut().expect("no entry in progress");
        for v in values {
            pending.hasher.update(v.to_le_bytes());
            self.writer.write_f32::<LittleEndian>(*v)?;
        }
        pending.count += values.len();
        Ok(())
    }

    /// Finishes the streamed entry, checking the element count.
    pub fn end_entry(&mut self) -> Result<()> {
        let pending = self.pending.take().expect("no entry in progress");
        if pending.count != pending.expected {
            return Err(Error::ShapeMismatch(format!(
                "blob '{}': wrote {} elements, shape wants {}",
                pending.name, pending.count, pending.expected
            )));
        }
        let byte_len = (pending.count * 4) as u64;
        self.entries.push(BlobEntry {
            name: pending.name,
            shape: pending.shape,
            dtype: "f32".to_string(),
            file: self.file_name.clone(),
            offset: self.offset,
            byte_len,
            sha256: hex_digest(pending.hasher),
        });
        self.offset += byte_len;
        Ok(())
    }

    /// Writes one named f32 array in a single call.
    pub fn write_f32<I: IntoIterator<Item = f32>>(
        &mut self,
        name: &str,
        shape: &[usize],
        data: I,
    ) -> Result<()> {
        self.begin_entry(name, shape);
        for v in data {
            self.append_f32(&[v])?;
        }
        self.end_entry()
    }

    pub fn finish(mut self) -> Result<Vec<BlobEntry>> {
        assert!(self.pending.is_none(), "entry still in progress");
        self.writer.flush()?;
        Ok(self.entries)
    }
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Reader resolving entries against a dataset directory.
pub struct BlobReader {
    dir: PathBuf,
    entries: Vec<BlobEntry>,
}

impl BlobReader {
    pub fn new(dir: &Path, entries: Vec<BlobEntry>) -> Self {
        BlobReader {
            dir: dir.to_path_buf(),
            entries,
        }
    }

    pub fn entries(&self) -> &[BlobEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Result<&BlobEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Manifest(format!("blob '{name}' not found in manifest")))
    }

    pub fn read_f32(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let entry = self.entry(name)?;
        let data = self.read_f32_slice(name, 0, entry.elements())?;
        Ok((entry.shape.clone(), data))
    }

    /// Reads `len` elements starting at element `start` of one entry.
    pub fn read_f32_slice(&self, name: &str, start: usize, len: usize) -> Result<Vec<f32>> {
        let entry = self.entry(name)?;
        if entry.dtype != "f32" {
            return Err(Error::Manifest(format!(
                "blob '{name}' has dtype {}, expected f32",
                entry.dtype
            )));
        }
        if (start + len) * 4 > entry.byte_len as usize {
            return Err(Error::Truncated(format!(
                "blob '{name}': slice {start}..{} exceeds {} elements",
                start + len,
                entry.elements()
            )));
        }
        let mut file = File::open(self.dir.join(&entry.file))?;
        file.seek(SeekFrom::Start(entry.offset + (start * 4) as u64))?;
        let mut bytes = vec![0u8; len * 4];
        file.read_exact(&mut bytes)
            .map_err(|_| Error::Truncated(format!("blob '{name}'")))?;
        let mut data = Vec::with_capacity(len);
        let mut cursor = std::io::Cursor::new(&bytes);
        for _ in 0..len {
            data.push(cursor.read_f32::<LittleEndian>()?);
        }
        Ok(data)
    }
}

/// Flattens a complex field to [channels, 2, nθ, nφ] f32 planes.
pub fn field_to_f32(field: &SpinField) -> (Vec<usize>, Vec<f32>) {
    let (ch, nt, np) = field.samples().dim();
    let mut out = Vec::with_capacity(ch * 2 * nt * np);
    for c in 0..ch {
        for part in 0..2 {
            for j in 0..nt {
                for k in 0..np {
                    let z = field.samples()[[c, j, k]];
                    out.push(if part == 0 { z.re as f32 } else { z.im as f32 });
                }
            }
        }
    }
    (vec![ch, 2, nt, np], out)
}

/// Rebuilds a field from [channels, 2, nθ, nφ] planes.
pub fn field_from_f32(spin: i32, shape: &[usize], data: &[f32]) -> Result<SpinField> {
    if shape.len() != 4 || shape[1] != 2 || shape[2] != shape[3] {
        return Err(Error::Manifest(format!("bad field shape {shape:?}")));
    }
    let (ch, nt, np) = (shape[0], shape[2], shape[3]);
    if data.len() != ch * 2 * nt * np {
        return Err(Error::Truncated("field blob".into()));
    }
    if nt % 2 != 0 {
        return Err(Error::Manifest(format!("odd grid size {nt}")));
    }
    let grid = SphericalGrid::new(nt / 2);
    let mut field = SpinField::zeros(spin, grid, ch);
    let plane = nt * np;
    for c in 0..ch {
        for j in 0..nt {
            for k in 0..np {
                let re = data[c * 2 * plane + j * np + k] as f64;
                let im = data[c * 2 * plane + plane + j * np + k] as f64;
                field.samples_mut()[[c, j, k]] = Complex64::new(re, im);
            }
        }
    }
    Ok(field)
}

/// Flattens coefficients to [channels, 2, B²] f32 planes.
pub fn coeffs_to_f32(coeffs: &SpinCoeffs) -> (Vec<usize>, Vec<f32>) {
    let (ch, n) = coeffs.array().dim();
    let mut out = Vec::with_capacity(ch * 2 * n);
    for c in 0..ch {
        for part in 0..2 {
            for i in 0..n {
                let z = coeffs.array()[[c, i]];
                out.push(if part == 0 { z.re as f32 } else { z.im as f32 });
            }
        }
    }
    (vec![ch, 2, n], out)
}

/// Rebuilds coefficients from [channels, 2, B²] planes.
pub fn coeffs_from_f32(spin: i32, shape: &[usize], data: &[f32]) -> Result<SpinCoeffs> {
    if shape.len() != 3 || shape[1] != 2 {
        return Err(Error::Manifest(format!("bad coefficient shape {shape:?}")));
    }
    let (ch, n) = (shape[0], shape[2]);
    let b = (n as f64).sqrt().round() as usize;
    if b * b != n {
        return Err(Error::Manifest(format!("{n} entries is not a square")));
    }
    if data.len() != ch * 2 * n {
        return Err(Error::Truncated("coefficient blob".into()));
    }
    let mut arr = Array2::zeros((ch, n));
    for c in 0..ch {
        for i in 0..n {
            arr[[c, i]] = Complex64::new(
                data[c * 2 * n + i] as f64,
                data[c * 2 * n + n + i] as f64,
            );
        }
    }
    SpinCoeffs::from_array(spin, b, arr)
}

/// Flattens a real planar array [h, w] (or stack [n, h, w]) to f32.
pub fn array3_to_f32(arr: &Array3<f64>) -> (Vec<usize>, Vec<f32>) {
    let dim = arr.dim();
    (
        vec![dim.0, dim.1, dim.2],
        arr.iter().map(|&v| v as f32).collect(),
    )
}

/// Standalone container for a set of per-spin fields or coefficient arrays,
/// the input/output format of the `transform` CLI command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    /// "field-bundle" or "coeff-bundle"
    pub kind: String,
    pub bandwidth: usize,
    pub spins: Vec<i32>,
    pub channels: usize,
    pub blobs: Vec<BlobEntry>,
}

impl BundleManifest {
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

    fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Manifest("bundle has an empty channel list".into()));
        }
        if self.spins.is_empty() {
            return Err(Error::Manifest("bundle has no spin weights".into()));
        }
        for entry in &self.blobs {
            if let Some(suffix) = entry.name.strip_prefix("spin_") {
                let spin: i32 = suffix.parse().map_err(|_| {
                    Error::Manifest(format!("unparseable spin key '{}'", entry.name))
                })?;
                if !self.spins.contains(&spin) {
                    return Err(Error::Manifest(format!(
                        "unknown spin key '{}' (declared spins: {:?})",
                        entry.name, self.spins
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_common<T>(items: &[T], spin: impl Fn(&T) -> i32) -> Result<Vec<i32>> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("bundle needs at least one spin".into()));
    }
    Ok(items.iter().map(spin).collect())
}

pub fn save_field_bundle(dir: &Path, fields: &[SpinField]) -> Result<BundleManifest> {
    let spins = check_common(fields, |f| f.spin())?;
    let mut writer = BlobWriter::create(dir, "bundle.bin")?;
    for field in fields {
        let (shape, data) = field_to_f32(field);
        writer.write_f32(&format!("spin_{}", field.spin()), &shape, data)?;
    }
    let manifest = BundleManifest {
        format_version: 1,
        kind: "field-bundle".to_string(),
        bandwidth: fields[0].grid().bandwidth(),
        spins,
        channels: fields[0].channels(),
        blobs: writer.finish()?,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

pub fn load_field_bundle(dir: &Path) -> Result<(BundleManifest, Vec<SpinField>)> {
    let manifest = BundleManifest::load(dir)?;
    manifest.validate()?;
    if manifest.kind != "field-bundle" {
        return Err(Error::Manifest(format!(
            "expected a field bundle, found '{}'",
            manifest.kind
        )));
    }
    let reader = BlobReader::new(dir, manifest.blobs.clone());
    let mut fields = Vec::with_capacity(manifest.spins.len());
    for &spin in &manifest.spins {
        let (shape, data) = reader.read_f32(&format!("spin_{spin}"))?;
        fields.push(field_from_f32(spin, &shape, &data)?);
    }
    Ok((manifest, fields))
}

pub fn save_coeff_bundle(dir: &Path, coeffs: &[SpinCoeffs]) -> Result<BundleManifest> {
    let spins = check_common(coeffs, |c| c.spin())?;
    let mut writer = BlobWriter::create(dir, "bundle.bin")?;
    for c in coeffs {
        let (shape, data) = coeffs_to_f32(c);
        writer.write_f32(&format!("spin_{}", c.spin()), &shape, data)?;
    }
    let manifest = BundleManifest {
        format_version: 1,
        kind: "coeff-bundle".to_string(),
        bandwidth: coeffs[0].bandwidth(),
        spins,
        channels: coeffs[0].channels(),
        blobs: writer.finish()?,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

pub fn load_coeff_bundle(dir: &Path) -> Result<(BundleManifest, Vec<SpinCoeffs>)> {
    let manifest = BundleManifest::load(dir)?;
    manifest.validate()?;
    if manifest.kind != "coeff-bundle" {
        return Err(Error::Manifest(format!(
            "expected a coefficient bundle, found '{}'",
            manifest.kind
        )));
    }
    let reader = BlobReader::new(dir, manifest.blobs.clone());
    let mut out = Vec::with_capacity(manifest.spins.len());
    for &spin in &manifest.spins {
        let (shape, data) = reader.read_f32(&format!("spin_{spin}"))?;
        out.push(coeffs_from_f32(spin, &shape, &data)?);
    }
    Ok((manifest, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;

    #[test]
    fn write_and_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = BlobWriter::create(dir.path(), "blobs.bin").unwrap();
        w.write_f32("a", &[2, 3], (0..6).map(|i| i as f32 * 0.5)).unwrap();
        w.write_f32("b", &[4], [1.0f32, -2.0, 3.0, f32::MIN_POSITIVE]).unwrap();
        let entries = w.finish().unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].offset, 24);

        let r = BlobReader::new(dir.path(), entries);
        let (shape, data) = r.read_f32("a").unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(data[3], 1.5);
        let (_, data) = r.read_f32("b").unwrap();
        assert_eq!(data[1], -2.0);
        assert!(r.read_f32("missing").is_err());
    }

    #[test]
    fn field_round_trip_through_planes() {
        let mut rng = testing::seeded_rng(21);
        let grid = SphericalGrid::new(4);
        let mut field = SpinField::zeros(1, grid, 2);
        field.samples_mut().mapv_inplace(|_| {
            Complex64::new(
                testing::normal(&mut rng) as f32 as f64,
                testing::normal(&mut rng) as f32 as f64,
            )
        });
        let (shape, data) = field_to_f32(&field);
        let back = field_from_f32(1, &shape, &data).unwrap();
        assert_eq!(back.samples(), field.samples());
    }

    #[test]
    fn coeffs_round_trip_through_planes() {
        let mut rng = testing::seeded_rng(22);
        let mut coeffs = testing::random_coeffs(&mut rng, 1, 6, 2);
        coeffs.quantize_f32();
        let (shape, data) = coeffs_to_f32(&coeffs);
        let back = coeffs_from_f32(1, &shape, &data).unwrap();
        assert_eq!(back.array(), coeffs.array());
        assert_eq!(back.bandwidth(), 6);
    }
}
