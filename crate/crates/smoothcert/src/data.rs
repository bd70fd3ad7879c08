//! Dataset generation and ingestion: seeded synthetic Gaussian blobs and the
//! IDX binary format with intensities scaled to `[0, 1]`.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::substream;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))
}

/// Where the feature values of a dataset live. Blobs are unbounded; IDX
/// images occupy the unit interval per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureDomain {
    UnitInterval,
    Unbounded,
}

/// An immutable labeled dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub class_count: usize,
    pub domain: FeatureDomain,
    /// `(rows, cols)` when the features came from (or can be written as)
    /// an image grid.
    pub image_shape: Option<(u32, u32)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Isotropic unit-variance Gaussian clusters with centers at mutual distance
/// `separation` (centers sit on scaled basis vectors, so `class_count` may
/// not exceed `dim`). Deterministic under `seed`; examples are ordered by
/// class.
pub fn make_blobs(
    n_per_class: usize,
    class_count: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    make_blobs_with_std(n_per_class, class_count, dim, separation, 1.0, seed)
}

/// [`make_blobs`] with an explicit per-coordinate cluster standard
/// deviation. Tight clusters (std below the smoothing noise level) leave a
/// wide empty margin band between classes, which is the regime where
/// training choices show up in the certified radii.
pub fn make_blobs_with_std(
    n_per_class: usize,
    class_count: usize,
    dim: usize,
    separation: f64,
    cluster_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || class_count == 0 || dim == 0 {
        return Err(Error::invalid("blob counts and dimension must be positive"));
    }
    if class_count > dim {
        return Err(Error::invalid(format!(
            "equidistant centers need class_count <= dim, got {class_count} > {dim}"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid(format!(
            "separation must be finite and >= 0, got {separation}"
        )));
    }
    if !cluster_std.is_finite() || cluster_std <= 0.0 {
        return Err(Error::invalid(format!(
            "cluster std must be finite and > 0, got {cluster_std}"
        )));
    }
    // distance between s*e_i and s*e_j is s*sqrt(2)
    let center_scale = separation / std::f64::consts::SQRT_2;
    let mut features = Vec::with_capacity(n_per_class * class_count);
    let mut labels = Vec::with_capacity(n_per_class * class_count);
    for class in 0..class_count {
        for i in 0..n_per_class {
            let mut rng = substream(seed, class as u64, i as u64);
            let mut x: Vec<f64> = (0..dim)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    cluster_std * e
                })
                .collect();
            x[class] += center_scale;
            features.push(x);
            labels.push(class);
        }
    }
    Ok(Dataset {
        features,
        labels,
        dim,
        class_count,
        domain: FeatureDomain::Unbounded,
        image_shape: None,
    })
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: &mut usize, what: &str) -> Result<u32> {
    let end = *offset + 4;
    if end > bytes.len() {
        return Err(Error::format(format!("truncated IDX header: missing {what}")));
    }
    let v = u32::from_be_bytes(bytes[*offset..end].try_into().unwrap());
    *offset = end;
    Ok(v)
}

/// Load an IDX image/label file pair. Pixels are scaled to `[0, 1]` by
/// dividing by 255; image and label counts must match.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;

    let mut off = 0;
    let magic = read_u32_be(&image_bytes, &mut off, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&image_bytes, &mut off, "image count")? as usize;
    let rows = read_u32_be(&image_bytes, &mut off, "row count")? as usize;
    let cols = read_u32_be(&image_bytes, &mut off, "column count")? as usize;
    let expected = off + count * rows * cols;
    if image_bytes.len() < expected {
        return Err(Error::format(format!(
            "truncated image payload: have {} bytes, need {expected}",
            image_bytes.len()
        )));
    }
    if image_bytes.len() > expected {
        return Err(Error::format(format!(
            "trailing bytes after image payload: have {} bytes, expected {expected}",
            image_bytes.len()
        )));
    }

    let mut loff = 0;
    let lmagic = read_u32_be(&label_bytes, &mut loff, "label magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "bad label magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let lcount = read_u32_be(&label_bytes, &mut loff, "label count")? as usize;
    if lcount != count {
        return Err(Error::format(format!(
            "image/label count mismatch: {count} images, {lcount} labels"
        )));
    }
    if label_bytes.len() != loff + lcount {
        return Err(Error::format(format!(
            "label payload length mismatch: have {} bytes, expected {}",
            label_bytes.len(),
            loff + lcount
        )));
    }

    let dim = rows * cols;
    let mut features = Vec::with_capacity(count);
    for i in 0..count {
        let start = off + i * dim;
        features.push(
            image_bytes[start..start + dim]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
        );
    }
    let labels: Vec<usize> = label_bytes[loff..].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(Dataset {
        features,
        labels,
        dim,
        class_count,
        domain: FeatureDomain::UnitInterval,
        image_shape: Some((rows as u32, cols as u32)),
    })
}

/// Write a unit-interval dataset back out as an IDX pair (inverse of
/// [`load_idx`], bit-exact for data that originated from bytes).
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if dataset.domain != FeatureDomain::UnitInterval {
        return Err(Error::invalid(
            "only unit-interval datasets can be written as IDX",
        ));
    }
    let (rows, cols) = dataset
        .image_shape
        .ok_or_else(|| Error::invalid("dataset has no image shape"))?;
    if (rows * cols) as usize != dataset.dim {
        return Err(Error::invalid("image shape does not match feature dimension"));
    }
    let count = dataset.len() as u32;

    let mut image_bytes = Vec::with_capacity(16 + dataset.len() * dataset.dim);
    image_bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&count.to_be_bytes());
    image_bytes.extend_from_slice(&rows.to_be_bytes());
    image_bytes.extend_from_slice(&cols.to_be_bytes());
    for x in &dataset.features {
        for &v in x {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "feature value {v} outside [0, 1] cannot be written as a byte"
                )));
            }
            image_bytes.push((v * 255.0).round() as u8);
        }
    }

    let mut label_bytes = Vec::with_capacity(8 + dataset.len());
    label_bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&count.to_be_bytes());
    for &l in &dataset.labels {
        if l > u8::MAX as usize {
            return Err(Error::invalid(format!("label {l} does not fit in a byte")));
        }
        label_bytes.push(l as u8);
    }

    std::fs::write(images_path, image_bytes)?;
    std::fs::write(labels_path, label_bytes)?;
    Ok(())
}
