//! Dictionary-based classification on top of the robust solver.
//!
//! Training images become unit-norm dictionary columns grouped by class. A
//! test image is solved against the whole dictionary, then each class is
//! scored by the weighted reconstruction residual using only that class's
//! columns; the lowest residual wins. The solver's learned weights
//! down-weight corrupted pixels, so occluded regions contribute little to
//! the class scores.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::solver::{Solution, Solver, SolverConfig};

/// Residual gap at or below which two classes are considered tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Training images as a column dictionary with class bookkeeping.
#[derive(Debug, Clone)]
pub struct Dictionary {
    /// `m x n` matrix of unit-l2 training columns.
    columns: DMatrix<f64>,
    /// Per-column index into [`Dictionary::class_ids`].
    labels: Vec<usize>,
    /// Sorted distinct class ids from the training labels.
    class_ids: Vec<usize>,
    /// Column indices per class, parallel to `class_ids`.
    class_columns: Vec<Vec<usize>>,
    /// Original l2 norm of each training column (before normalization).
    column_norms: Vec<f64>,
    /// (rows, cols) of the training images; the solver reshapes residuals to
    /// this shape for the low-rank step.
    image_shape: (usize, usize),
}

impl Dictionary {
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Per-column position in [`Dictionary::class_ids`].
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_columns(&self) -> &[Vec<usize>] {
        &self.class_columns
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }
}

/// Stack a labeled training set into a [`Dictionary`], normalizing every
/// column to unit l2 norm. Fails on an all-zero training image (it has no
/// direction to contribute).
pub fn build_dictionary(train: &LabeledDataset) -> Result<Dictionary> {
    let (rows, cols) = train.shape();
    let m = rows * cols;
    let n = train.len();
    let mut columns = DMatrix::zeros(m, n);
    let mut column_norms = Vec::with_capacity(n);
    for (k, image) in train.images().iter().enumerate() {
        let v = image.to_vec_row_major();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "training image {k} is identically zero and cannot be normalized"
            )));
        }
        for (j, value) in v.iter().enumerate() {
            columns[(j, k)] = value / norm;
        }
        column_norms.push(norm);
    }

    let mut class_ids: Vec<usize> = train.labels().to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();

    let labels: Vec<usize> = train
        .labels()
        .iter()
        .map(|id| class_ids.binary_search(id).expect("id came from this label set"))
        .collect();

    let mut class_columns = vec![Vec::new(); class_ids.len()];
    for (col, &class_index) in labels.iter().enumerate() {
        class_columns[class_index].push(col);
    }

    Ok(Dictionary {
        columns,
        labels,
        class_ids,
        class_columns,
        column_norms,
        image_shape: (rows, cols),
    })
}

/// Weighted per-class reconstruction residuals:
/// `r_i = sum_j w_j (y_j - (D k_i(x))_j)^2`, where `k_i(x)` keeps the
/// coefficients of class `i` and zeroes the rest. Returned in
/// [`Dictionary::class_ids`] order.
pub fn class_residuals(
    y: &DVector<f64>,
    dict: &Dictionary,
    x: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<Vec<f64>> {
    let m = dict.columns.nrows();
    if y.len() != m || w.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "residual scoring needs y and w of length {m}, got {} and {}",
            y.len(),
            w.len()
        )));
    }
    if x.len() != dict.columns.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient vector length {} does not match dictionary columns {}",
            x.len(),
            dict.columns.ncols()
        )));
    }
    let mut residuals = Vec::with_capacity(dict.n_classes());
    for cols in &dict.class_columns {
        let mut recon = DVector::zeros(m);
        for &j in cols {
            recon.axpy(x[j], &dict.columns.column(j), 1.0);
        }
        let r = y
            .iter()
            .zip(recon.iter())
            .zip(w.iter())
            .map(|((&yj, &rj), &wj)| wj * (yj - rj) * (yj - rj))
            .sum::<f64>();
        residuals.push(r);
    }
    Ok(residuals)
}

/// Classification of a single observation.
#[derive(Debug, Clone)]
pub struct Identification {
    /// Winning class id (lowest id on a tie).
    pub class_id: usize,
    /// Weighted residual per class, in [`Dictionary::class_ids`] order.
    pub residuals: Vec<f64>,
    /// True when another class came within [`TIE_TOLERANCE`] of the winner.
    pub tie: bool,
    pub solution: Solution,
}

/// Solve for `y` and pick the class with the smallest weighted residual.
/// Residual gaps of at most 1e-12 count as ties and resolve to the lowest
/// class id, with the tie flagged.
pub fn identify(y: &DVector<f64>, solver: &Solver<'_>) -> Result<Identification> {
    let solution = solver.solve(y)?;
    let dict = solver.dictionary();
    let residuals = class_residuals(y, dict, &solution.x, &solution.w)?;
    let best = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut winner = None;
    let mut contenders = 0usize;
    for (i, &r) in residuals.iter().enumerate() {
        if r - best <= TIE_TOLERANCE {
            contenders += 1;
            if winner.is_none() {
                winner = Some(i);
            }
        }
    }
    let index = winner.ok_or_else(|| {
        Error::NonFinite("all class residuals are non-finite; cannot classify".into())
    })?;
    Ok(Identification {
        class_id: dict.class_ids[index],
        residuals,
        tie: contenders > 1,
        solution,
    })
}

/// Per-sample outcome of a batch evaluation.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    /// Position of the sample in the evaluated dataset.
    pub index: usize,
    pub true_label: usize,
    /// Winning class id; `None` when the solve failed.
    pub predicted: Option<usize>,
    pub correct: bool,
    pub iterations: usize,
    /// Final stopping measure (NaN on failure).
    pub eps: f64,
    /// Wall-clock solve + scoring time for this sample.
    pub wall_ms: f64,
    /// Weighted residual per class (NaN-filled on failure).
    pub residuals: Vec<f64>,
    pub tie: bool,
    /// True when the solver returned an error for this sample; failures
    /// count as misclassifications.
    pub failed: bool,
}

/// Batch evaluation summary. `accuracy` divides by all samples, so solver
/// failures lower it.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: f64,
    pub total: usize,
    pub correct: usize,
    pub failed: usize,
    pub ties: usize,
    pub records: Vec<SampleRecord>,
}

fn evaluate_one(index: usize, y: &DVector<f64>, true_label: usize, solver: &Solver<'_>) -> SampleRecord {
    let n_classes = solver.dictionary().n_classes();
    let start = Instant::now();
    let outcome = identify(y, solver);
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(id) => SampleRecord {
            index,
            true_label,
            predicted: Some(id.class_id),
            correct: id.class_id == true_label,
            iterations: id.solution.iterations,
            eps: id.solution.eps,
            wall_ms,
            residuals: id.residuals,
            tie: id.tie,
            failed: false,
        },
        Err(_) => SampleRecord {
            index,
            true_label,
            predicted: None,
            correct: false,
            iterations: 0,
            eps: f64::NAN,
            wall_ms,
            residuals: vec![f64::NAN; n_classes],
            tie: false,
            failed: true,
        },
    }
}

#[cfg(feature = "parallel")]
fn map_samples(
    samples: &[(usize, DVector<f64>, usize)],
    solver: &Solver<'_>,
    workers: usize,
) -> Result<Vec<SampleRecord>> {
    use rayon::prelude::*;
    if workers == 1 {
        return Ok(samples
            .iter()
            .map(|(i, y, label)| evaluate_one(*i, y, *label, solver))
            .collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("could not build worker pool: {e}")))?;
    Ok(pool.install(|| {
        samples
            .par_iter()
            .map(|(i, y, label)| evaluate_one(*i, y, *label, solver))
            .collect()
    }))
}

#[cfg(not(feature = "parallel"))]
fn map_samples(
    samples: &[(usize, DVector<f64>, usize)],
    solver: &Solver<'_>,
    _workers: usize,
) -> Result<Vec<SampleRecord>> {
    Ok(samples
        .iter()
        .map(|(i, y, label)| evaluate_one(*i, y, *label, solver))
        .collect())
}

/// Classify every sample of `test` against `dictionary`.
///
/// `workers` selects the execution strategy when the `parallel` feature is
/// on: `1` runs strictly sequentially on the calling thread, `0` uses one
/// worker per available core, any other value builds a pool of exactly that
/// size. Without the feature the evaluation is always sequential. Results
/// are in dataset order and identical (apart from measured wall times) for
/// every strategy.
pub fn evaluate(
    test: &LabeledDataset,
    dictionary: &Dictionary,
    config: &SolverConfig,
    workers: usize,
) -> Result<EvalReport> {
    if test.shape() != dictionary.image_shape() {
        return Err(Error::DimensionMismatch(format!(
            "test images are {:?} but the dictionary was built from {:?} images",
            test.shape(),
            dictionary.image_shape()
        )));
    }
    let solver = Solver::new(dictionary, config.clone())?;
    let samples: Vec<(usize, DVector<f64>, usize)> = test
        .images()
        .iter()
        .zip(test.labels())
        .enumerate()
        .map(|(i, (img, &label))| (i, DVector::from_vec(img.to_vec_row_major()), label))
        .collect();

    let records = map_samples(&samples, &solver, workers)?;

    let correct = records.iter().filter(|r| r.correct).count();
    let failed = records.iter().filter(|r| r.failed).count();
    let ties = records.iter().filter(|r| r.tie).count();
    Ok(EvalReport {
        accuracy: correct as f64 / records.len() as f64,
        total: records.len(),
        correct,
        failed,
        ties,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageMatrix;
    use crate::solver::SolverConfig;

    fn image(rows: usize, cols: usize, data: &[f64]) -> ImageMatrix {
        ImageMatrix::from_vec_row_major(rows, cols, data).unwrap()
    }

    /// Two well-separated classes on 2x1 images: class 3 points along the
    /// first pixel, class 7 along the second.
    fn axis_dataset() -> LabeledDataset {
        LabeledDataset::new(
            vec![
                image(2, 1, &[1.0, 0.0]),
                image(2, 1, &[0.9, 0.1]),
                image(2, 1, &[0.0, 1.0]),
                image(2, 1, &[0.1, 0.9]),
            ],
            vec![3, 3, 7, 7],
        )
        .unwrap()
    }

    #[test]
    fn dictionary_normalizes_and_remaps_labels() {
        let ds = LabeledDataset::new(
            vec![image(1, 2, &[0.3, 0.4]), image(1, 2, &[0.0, 0.25]), image(1, 2, &[1.0, 0.0])],
            vec![9, 2, 2],
        )
        .unwrap();
        let dict = build_dictionary(&ds).unwrap();
        assert_eq!(dict.class_ids(), &[2, 9]);
        assert_eq!(dict.labels(), &[1, 0, 0]);
        assert_eq!(dict.class_columns(), &[vec![1, 2], vec![0]]);
        assert_eq!(dict.column_norms(), &[0.5, 0.25, 1.0]);
        for k in 0..3 {
            assert!((dict.columns().column(k).norm() - 1.0).abs() < 1e-12);
        }
        assert!((dict.columns()[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((dict.columns()[(1, 0)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_image_is_rejected() {
        let ds = LabeledDataset::new(
            vec![image(1, 2, &[0.0, 0.0]), image(1, 2, &[1.0, 0.0])],
            vec![1, 2],
        )
        .unwrap();
        assert!(build_dictionary(&ds).is_err());
    }

    #[test]
    fn class_residuals_hand_example() {
        let dict = build_dictionary(&axis_dataset()).unwrap();
        let y = DVector::from_vec(vec![1.0, 0.0]);
        // x selects only the first column (class 3, exactly y).
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let w = DVector::from_vec(vec![1.0, 1.0]);
        let r = class_residuals(&y, &dict, &x, &w).unwrap();
        assert!(r[0].abs() < 1e-24, "class-3 residual {}", r[0]);
        // Class 7's reconstruction is zero, so its residual is ||y||^2 = 1.
        assert!((r[1] - 1.0).abs() < 1e-12, "class-7 residual {}", r[1]);

        // Weights scale the per-pixel contributions.
        let w = DVector::from_vec(vec![0.5, 2.0]);
        let r = class_residuals(&y, &dict, &x, &w).unwrap();
        assert!((r[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identifies_clean_samples() {
        let ds = axis_dataset();
        let dict = build_dictionary(&ds).unwrap();
        let solver = Solver::new(&dict, SolverConfig::default()).unwrap();
        let a = identify(&DVector::from_vec(vec![0.95, 0.05]), &solver).unwrap();
        assert_eq!(a.class_id, 3);
        assert!(!a.tie);
        let b = identify(&DVector::from_vec(vec![0.02, 0.98]), &solver).unwrap();
        assert_eq!(b.class_id, 7);
    }

    #[test]
    fn exact_tie_picks_lowest_class_id_and_flags() {
        // Identical training images in two classes: residuals match to
        // machine precision, the tie resolves to class 4.
        let ds = LabeledDataset::new(
            vec![image(2, 1, &[1.0, 0.0]), image(2, 1, &[1.0, 0.0])],
            vec![9, 4],
        )
        .unwrap();
        let dict = build_dictionary(&ds).unwrap();
        let solver = Solver::new(&dict, SolverConfig::default()).unwrap();
        let id = identify(&DVector::from_vec(vec![1.0, 0.0]), &solver).unwrap();
        assert!(id.tie, "residuals {:?}", id.residuals);
        assert_eq!(id.class_id, 4);
    }

    #[test]
    fn evaluate_counts_and_order() {
        let ds = axis_dataset();
        let dict = build_dictionary(&ds).unwrap();
        let report = evaluate(&ds, &dict, &SolverConfig::default(), 1).unwrap();
        assert_eq!(report.total, 4);
        assert_eq!(report.correct, 4);
        assert_eq!(report.failed, 0);
        assert!((report.accuracy - 1.0).abs() < 1e-15);
        for (i, rec) in report.records.iter().enumerate() {
            assert_eq!(rec.index, i);
            assert!(!rec.failed);
            assert_eq!(rec.residuals.len(), 2);
        }
    }

    #[test]
    fn evaluate_rejects_shape_mismatch() {
        let ds = axis_dataset();
        let dict = build_dictionary(&ds).unwrap();
        let other = LabeledDataset::new(vec![image(1, 2, &[1.0, 0.0])], vec![3]).unwrap();
        assert!(evaluate(&other, &dict, &SolverConfig::default(), 1).is_err());
    }
}
