//! Labeled image datasets: manifest loading, a seeded synthetic face-like
//! generator, and per-class train/test splitting.
//!
//! The synthetic generator stands in for face databases that cannot be
//! bundled: each class is a random rank-3 nonnegative subspace of smooth
//! cosine images, and each sample is a positive combination of its class
//! basis plus a random illumination gradient and mild sensor noise. That
//! mirrors the subspace assumption dictionary classification relies on,
//! at a size small enough for tests.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageMatrix;
use crate::pgm::load_pgm;

/// Images plus one class id per image. Immutable after construction; all
/// images share one shape.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    images: Vec<ImageMatrix>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(images: Vec<ImageMatrix>, labels: Vec<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyInput("dataset has no images".into()));
        }
        if images.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let shape = images[0].shape();
        if let Some(k) = images.iter().position(|img| img.shape() != shape) {
            return Err(Error::DimensionMismatch(format!(
                "image {k} is {:?} but image 0 is {shape:?}",
                images[k].shape()
            )));
        }
        Ok(LabeledDataset { images, labels })
    }

    pub fn images(&self) -> &[ImageMatrix] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// (rows, cols) shared by every image.
    pub fn shape(&self) -> (usize, usize) {
        self.images[0].shape()
    }

    /// Sorted distinct class ids.
    pub fn class_ids(&self) -> Vec<usize> {
        let mut ids = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Load a dataset from a manifest CSV (`path,label` header; one relative PGM
/// path and class id per line; paths resolve against the manifest's
/// directory). With `target_shape`, every image is bilinearly resized to it;
/// without it, all images must already share one shape.
pub fn load_dataset(
    manifest: impl AsRef<Path>,
    target_shape: Option<(usize, usize)>,
) -> Result<LabeledDataset> {
    let manifest = manifest.as_ref();
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "path,label" => {}
        Some((_, header)) => {
            return Err(Error::format(
                manifest,
                format!("expected header 'path,label', found {header:?}"),
            ));
        }
        None => return Err(Error::format(manifest, "manifest is empty")),
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (rel, label) = line.rsplit_once(',').ok_or_else(|| {
            Error::format(manifest, format!("line {}: expected 'path,label'", lineno + 1))
        })?;
        let label: usize = label.trim().parse().map_err(|_| {
            Error::format(
                manifest,
                format!("line {}: class id {:?} is not an unsigned integer", lineno + 1, label),
            )
        })?;
        let mut img = load_pgm(base.join(rel))?;
        if let Some((rows, cols)) = target_shape {
            img = img.resize_bilinear(rows, cols)?;
        }
        images.push(img);
        labels.push(label);
    }

    if images.is_empty() {
        return Err(Error::format(manifest, "manifest lists no images"));
    }
    if target_shape.is_none() {
        let shape = images[0].shape();
        if let Some(k) = images.iter().position(|img| img.shape() != shape) {
            return Err(Error::format(
                manifest,
                format!(
                    "image on data line {} is {:?} but the first is {shape:?}; \
                     set a target shape to resize",
                    k + 1,
                    images[k].shape()
                ),
            ));
        }
    }
    LabeledDataset::new(images, labels)
}

/// One standard normal draw (Box–Muller, cosine branch only, so consumption
/// from the stream is a fixed two draws per value).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// One smooth nonnegative basis image: a mixture of four separable cosine
/// terms with seeded frequencies, phases, and amplitudes, min-max normalized
/// into [0, 1].
fn cosine_basis(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ImageMatrix {
    let terms: Vec<(f64, f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let amp = rng.gen_range(0.25..1.0);
            let fu = rng.gen_range(1..=8) as f64 * 0.5;
            let fv = rng.gen_range(1..=8) as f64 * 0.5;
            let pu = rng.gen_range(0.0..2.0 * PI);
            let pv = rng.gen_range(0.0..2.0 * PI);
            (amp, fu, fv, pu, pv)
        })
        .collect();
    let mut raw = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let u = (i as f64 + 0.5) / rows as f64;
            let v = (j as f64 + 0.5) / cols as f64;
            let value: f64 = terms
                .iter()
                .map(|&(amp, fu, fv, pu, pv)| {
                    amp * (fu * PI * u + pu).cos() * (fv * PI * v + pv).cos()
                })
                .sum();
            raw.push(value);
        }
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let normalized: Vec<f64> = if span < 1e-9 {
        vec![0.5; raw.len()]
    } else {
        raw.iter().map(|v| (v - min) / span).collect()
    };
    ImageMatrix::from_vec_row_major(rows, cols, &normalized)
        .expect("normalized values lie in [0, 1]")
}

#[cfg(debug_assertions)]
fn mean_correlations(ds: &LabeledDataset) -> (f64, f64) {
    let flats: Vec<Vec<f64>> = ds.images().iter().map(|img| img.to_vec_row_major()).collect();
    let corr = |a: &[f64], b: &[f64]| -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt()).max(1e-300)
    };
    let mut within = (0.0, 0usize);
    let mut between = (0.0, 0usize);
    for i in 0..flats.len() {
        for j in (i + 1)..flats.len() {
            let c = corr(&flats[i], &flats[j]);
            if ds.labels()[i] == ds.labels()[j] {
                within = (within.0 + c, within.1 + 1);
            } else {
                between = (between.0 + c, between.1 + 1);
            }
        }
    }
    (within.0 / within.1.max(1) as f64, between.0 / between.1.max(1) as f64)
}

/// Generate a seeded synthetic dataset of `n_classes * per_class` images of
/// the given shape, labeled with class ids `1..=n_classes`.
///
/// Each class draws a rank-3 basis of smooth nonnegative images; each sample
/// is a positive combination of its class basis (coefficients uniform in
/// [0.3, 1]), plus an illumination gradient with uniform random direction
/// and amplitude up to 0.15, plus Gaussian noise with standard deviation
/// 0.02, clamped to [0, 1]. Fixed seeds reproduce the dataset exactly.
pub fn synthetic_faces(
    n_classes: usize,
    per_class: usize,
    shape: (usize, usize),
    seed: u64,
) -> Result<LabeledDataset> {
    let (rows, cols) = shape;
    if n_classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "synthetic generator needs at least 2 classes, got {n_classes}"
        )));
    }
    if per_class < 2 {
        return Err(Error::InvalidParameter(format!(
            "synthetic generator needs at least 2 samples per class, got {per_class}"
        )));
    }
    if rows < 8 || cols < 8 {
        return Err(Error::InvalidParameter(format!(
            "synthetic image shape must be at least 8x8, got {rows}x{cols}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n_classes * per_class);
    let mut labels = Vec::with_capacity(n_classes * per_class);

    for class in 1..=n_classes {
        let basis: Vec<ImageMatrix> =
            (0..3).map(|_| cosine_basis(&mut rng, rows, cols)).collect();
        for _ in 0..per_class {
            let coeffs: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..1.0)).collect();
            let coeff_sum: f64 = coeffs.iter().sum();
            let theta = rng.gen_range(0.0..2.0 * PI);
            let amp = rng.gen_range(0.0..0.15);
            let mut values = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for j in 0..cols {
                    let base: f64 = basis
                        .iter()
                        .zip(&coeffs)
                        .map(|(b, c)| c * b.get(i, j))
                        .sum::<f64>()
                        / coeff_sum;
                    let gradient = amp
                        * ((i as f64 / (rows - 1) as f64 - 0.5) * theta.cos()
                            + (j as f64 / (cols - 1) as f64 - 0.5) * theta.sin());
                    let noise = 0.02 * standard_normal(&mut rng);
                    values.push((base + gradient + noise).clamp(0.0, 1.0));
                }
            }
            images.push(ImageMatrix::from_vec_row_major(rows, cols, &values)?);
            labels.push(class);
        }
    }

    let ds = LabeledDataset::new(images, labels)?;
    #[cfg(debug_assertions)]
    {
        let (within, between) = mean_correlations(&ds);
        debug_assert!(
            within > between,
            "class structure collapsed: within-class correlation {within:.4} \
             <= between-class {between:.4} (seed {seed})"
        );
    }
    Ok(ds)
}

/// Seeded per-class split into `(train, test)`. Exactly `per_class_train`
/// samples of each class go to train (sampled without replacement); the
/// rest go to test. Both halves keep the original dataset order. Every
/// class must have at least `per_class_train + 1` samples so the test half
/// is never empty.
pub fn split(
    ds: &LabeledDataset,
    per_class_train: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if per_class_train == 0 {
        return Err(Error::InvalidParameter(
            "per-class training count must be at least 1".into(),
        ));
    }
    let class_ids = ds.class_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; ds.len()];
    for id in class_ids {
        let members: Vec<usize> = (0..ds.len()).filter(|&k| ds.labels()[k] == id).collect();
        if members.len() < per_class_train + 1 {
            return Err(Error::InvalidParameter(format!(
                "class {id} has {} samples; a {per_class_train}-per-class training split \
                 needs at least {}",
                members.len(),
                per_class_train + 1
            )));
        }
        for pick in rand::seq::index::sample(&mut rng, members.len(), per_class_train) {
            is_train[members[pick]] = true;
        }
    }

    let mut train_images = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_images = Vec::new();
    let mut test_labels = Vec::new();
    for k in 0..ds.len() {
        if is_train[k] {
            train_images.push(ds.images()[k].clone());
            train_labels.push(ds.labels()[k]);
        } else {
            test_images.push(ds.images()[k].clone());
            test_labels.push(ds.labels()[k]);
        }
    }
    Ok((
        LabeledDataset::new(train_images, train_labels)?,
        LabeledDataset::new(test_images, test_labels)?,
    ))
}
