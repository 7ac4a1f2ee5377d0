//! Robust regression with learned per-coordinate weights and low-rank
//! residual structure.
//!
//! The model treats regression residuals as draws from a generalized Gaussian
//! and minimizes the induced bounded loss instead of a squared norm. Two
//! coupled mechanisms make it robust to complex corruption:
//!
//! * **adaptive weights** ([`gc`]) — each residual coordinate gets a weight
//!   from the derivative of the bounded loss, so gross outliers are
//!   down-weighted instead of dominating the fit;
//! * **low-rank residual structure** ([`lowrank`]) — the residual vector,
//!   reshaped to image form, is shrunk toward low rank with singular-value
//!   weights from the same kernel family, which captures spatially coherent
//!   corruption such as occlusion blocks.
//!
//! [`solver`] ties both together in a majorize-minimize loop whose inner
//! subproblem is solved by an alternating-direction method of multipliers
//! with a nonnegativity split on the coefficients. [`classifier`] applies
//! the solver to reconstruction-residual classification over a dictionary of
//! labeled images, [`corruption`] synthesizes the occlusion / pixel noise
//! used in evaluation, and [`dataset`] provides PGM image I/O, manifest
//! loading, and a seeded synthetic face-like generator.
//!
//! With the default `parallel` feature, batch evaluation fans samples out
//! over a rayon thread pool; built with `--no-default-features` the same API
//! runs sequentially. Results are identical either way.

pub mod classifier;
pub mod corruption;
pub mod dataset;
pub mod error;
pub mod gc;
pub mod image;
pub mod lowrank;
pub mod pgm;
pub mod solver;

pub use classifier::{
    build_dictionary, class_residuals, evaluate, identify, Dictionary, EvalReport, Identification,
    SampleRecord,
};
pub use corruption::{
    builtin_occluder, mixed_corrupt, occlude, pixel_corrupt, CorruptionKind, CorruptionSpec,
    MixedOrder,
};
pub use dataset::{load_dataset, split, synthetic_faces, LabeledDataset};
pub use error::{Error, Result};
pub use gc::GcParams;
pub use image::ImageMatrix;
pub use lowrank::{
    gc_rank_surrogate, lowrank_step, rank_weights_gc, rank_weights_logsum, svd, svt_nuclear,
    svt_weighted, SvdFactors,
};
pub use pgm::{load_pgm, save_pgm};
pub use solver::{
    solve, HMode, KktResiduals, RankRule, Solution, Solver, SolverConfig, SolverState, WeightRule,
};
