//! Config-driven corruption sweep: corrupt the test set at each level,
//! evaluate every (weight rule, rank rule) variant on the identical corrupted
//! data, and write accuracy tables, per-sample records, convergence traces,
//! and weight-map images.
//!
//! All artifacts are byte-deterministic for a fixed config (timing cells are
//! zeroed unless `output.record_timing` is set). The accuracy table is
//! flushed after every level so an interrupted run leaves valid partial
//! rows, and an `INCOMPLETE` marker file exists exactly while a run is in
//! flight.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use uwlla::{
    build_dictionary, builtin_occluder, evaluate, load_dataset, load_pgm, save_pgm, split,
    synthetic_faces, CorruptionKind, CorruptionSpec, Dictionary, EvalReport, ImageMatrix,
    LabeledDataset, Solution, Solver, SolverConfig,
};

use crate::config::{variant_name, DatasetSource, ExperimentConfig};

/// Marker file present while a run is in flight; a finished run removes it,
/// so its presence in an output directory means the artifacts are partial.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Corruption seed for one test sample at one sweep level, derived from the
/// master seed so that every (level, sample) pair gets an independent,
/// reproducible stream.
pub fn sample_seed(master: u64, level_index: usize, sample_index: usize) -> u64 {
    splitmix64(splitmix64(master ^ ((level_index as u64) << 32)) ^ sample_index as u64)
}

/// Create `dir` empty. A non-empty existing directory is an error unless
/// `overwrite` is set, in which case it is removed first.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("could not inspect {}", dir.display()))?
            .next()
            .is_some();
        if occupied {
            if !overwrite {
                bail!(
                    "output directory {} is not empty; pass --overwrite to replace it",
                    dir.display()
                );
            }
            fs::remove_dir_all(dir)
                .with_context(|| format!("could not clear {}", dir.display()))?;
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("could not create {}", dir.display()))?;
    Ok(())
}

/// Min-max normalize the solution's weight vector to [0, 1], reshape it to
/// the image grid, and write it as an 8-bit PGM. Corrupted regions carry
/// small weights and come out dark. An all-equal weight vector maps to
/// mid-gray.
pub fn emit_weight_map(solution: &Solution, shape: (usize, usize), path: &Path) -> Result<()> {
    let lo = solution.w.min();
    let hi = solution.w.max();
    let span = hi - lo;
    let normalized: Vec<f64> = if span <= 0.0 {
        vec![0.5; solution.w.len()]
    } else {
        solution.w.iter().map(|&v| (v - lo) / span).collect()
    };
    let img = ImageMatrix::from_vec_row_major(shape.0, shape.1, &normalized)?;
    save_pgm(&img, path, 255)?;
    Ok(())
}

fn load_configured_dataset(config: &ExperimentConfig) -> Result<LabeledDataset> {
    match config.dataset.source {
        DatasetSource::Synthetic => Ok(synthetic_faces(
            config.dataset.classes,
            config.dataset.per_class,
            config.dataset.shape,
            config.run.seed,
        )?),
        DatasetSource::Manifest => {
            let manifest = config.dataset.manifest.as_ref().expect("checked by validate");
            Ok(load_dataset(manifest, config.dataset.target_shape)?)
        }
    }
}

/// Corrupt every test image at one level. Level 0 returns the clean images
/// with empty masks.
fn corrupt_test_set(
    test: &LabeledDataset,
    kind: CorruptionKind,
    level: f64,
    occluder: Option<&ImageMatrix>,
    master_seed: u64,
    level_index: usize,
) -> Result<(LabeledDataset, Vec<ImageMatrix>)> {
    if level == 0.0 {
        let shape = test.shape();
        let masks = vec![ImageMatrix::zeros(shape.0, shape.1); test.len()];
        return Ok((test.clone(), masks));
    }
    let mut images = Vec::with_capacity(test.len());
    let mut masks = Vec::with_capacity(test.len());
    for (i, img) in test.images().iter().enumerate() {
        let mut spec =
            CorruptionSpec::new(kind, level, sample_seed(master_seed, level_index, i));
        if let Some(occ) = occluder {
            spec = spec.with_occluder(occ.clone());
        }
        let (corrupted, mask) = spec.apply(img)?;
        images.push(corrupted);
        masks.push(mask);
    }
    Ok((LabeledDataset::new(images, test.labels().to_vec())?, masks))
}

/// Level tag used in artifact file names: the percentage, rounded.
fn level_tag(level: f64) -> u32 {
    (level * 100.0).round() as u32
}

fn write_samples_csv(
    path: &Path,
    report: &EvalReport,
    class_ids: &[usize],
    record_timing: bool,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header =
        String::from("sample,true_label,predicted_label,iterations,eps_final,wall_ms,tie,failed");
    for id in class_ids {
        header.push_str(&format!(",res_{id}"));
    }
    writeln!(w, "{header}")?;
    for rec in &report.records {
        let predicted =
            rec.predicted.map(|p| p.to_string()).unwrap_or_default();
        let wall = if record_timing { rec.wall_ms } else { 0.0 };
        let mut row = format!(
            "{},{},{},{},{:.6e},{:.3},{},{}",
            rec.index,
            rec.true_label,
            predicted,
            rec.iterations,
            rec.eps,
            wall,
            u8::from(rec.tie),
            u8::from(rec.failed),
        );
        for r in &rec.residuals {
            row.push_str(&format!(",{r:.6e}"));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace_csv(path: &Path, solution: &Solution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "iteration,r1,r2,eps,kkt_fit,kkt_split,kkt_e_stat,kkt_h_proj,kkt_x_stat,surrogate_obj"
    )?;
    for rec in &solution.trace {
        let k = &rec.kkt;
        writeln!(
            w,
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            rec.iter,
            rec.r1,
            rec.r2,
            rec.eps,
            k.primal_fit,
            k.primal_split,
            k.error_stationarity,
            k.split_projection,
            k.coeff_stationarity,
            rec.surrogate_obj,
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Per-sample artifacts (convergence trace, weight map) for the first
/// `trace_samples` test samples of one variant at one level.
fn write_sample_artifacts(
    out: &Path,
    name: &str,
    tag: u32,
    corrupted: &LabeledDataset,
    dict: &Dictionary,
    solver_config: &SolverConfig,
    config: &ExperimentConfig,
) -> Result<()> {
    let count = config.output.trace_samples.min(corrupted.len());
    if count == 0 {
        return Ok(());
    }
    let solver = Solver::new(dict, solver_config.clone())?;
    for s in 0..count {
        let y = DVector::from_vec(corrupted.images()[s].to_vec_row_major());
        let solution = solver.solve(&y)?;
        write_trace_csv(&out.join(format!("trace_{name}_l{tag}_s{s}.csv")), &solution)?;
        if config.output.weight_maps {
            emit_weight_map(
                &solution,
                dict.image_shape(),
                &out.join(format!("wmap_{name}_l{tag}_s{s}.pgm")),
            )?;
        }
    }
    Ok(())
}

/// Execute the full sweep described by `config`.
pub fn run_experiment(config: &ExperimentConfig, overwrite: bool) -> Result<()> {
    config.validate()?;
    let out = config.output.dir.clone();
    prepare_output_dir(&out, overwrite)?;
    fs::write(
        out.join(INCOMPLETE_MARKER),
        "run in progress or aborted; artifacts may be partial\n",
    )?;

    let dataset = load_configured_dataset(config)?;
    let (train, test) = split(&dataset, config.split.train_per_class, config.run.seed)?;
    let dict = build_dictionary(&train)?;
    let occluder = match &config.corruption.occluder {
        Some(path) => {
            Some(load_pgm(path).with_context(|| format!("occluder {}", path.display()))?)
        }
        None => None,
    };

    let variants: Vec<(String, SolverConfig)> = config
        .variants()
        .into_iter()
        .map(|(w, r)| Ok((variant_name(w, r), config.solver_config(w, r)?)))
        .collect::<Result<_>>()?;

    let mut methods = BufWriter::new(File::create(out.join("methods.csv"))?);
    writeln!(methods, "variant")?;
    for (name, _) in &variants {
        writeln!(methods, "{name}")?;
    }
    methods.flush()?;
    drop(methods);

    let mut accuracy = BufWriter::new(File::create(out.join("accuracy.csv"))?);
    let mut header = String::from("level");
    for (name, _) in &variants {
        header.push_str(&format!(",{name}_acc,{name}_s"));
    }
    writeln!(accuracy, "{header}")?;
    accuracy.flush()?;

    for (level_index, &level) in config.corruption.levels.iter().enumerate() {
        let (corrupted, masks) = corrupt_test_set(
            &test,
            config.corruption.kind.to_kind(),
            level,
            occluder.as_ref(),
            config.run.seed,
            level_index,
        )?;
        let tag = level_tag(level);

        if config.output.weight_maps && level > 0.0 {
            for s in 0..config.output.trace_samples.min(masks.len()) {
                save_pgm(&masks[s], out.join(format!("mask_l{tag}_s{s}.pgm")), 255)?;
            }
        }

        let mut row = format!("{level:.2}");
        for (name, solver_config) in &variants {
            let report = evaluate(&corrupted, &dict, solver_config, config.run.workers)?;
            write_samples_csv(
                &out.join(format!("samples_{name}_l{tag}.csv")),
                &report,
                &dict.class_ids().to_vec(),
                config.output.record_timing,
            )?;
            write_sample_artifacts(&out, name, tag, &corrupted, &dict, solver_config, config)?;

            let acc_pct = report.accuracy * 100.0;
            let mean_s = if config.output.record_timing && report.total > 0 {
                report.records.iter().map(|r| r.wall_ms).sum::<f64>()
                    / (report.total as f64)
                    / 1e3
            } else {
                0.0
            };
            row.push_str(&format!(",{acc_pct:.2},{mean_s:.4}"));
        }
        // One row per level, flushed immediately so interrupted sweeps keep
        // every finished level.
        writeln!(accuracy, "{row}")?;
        accuracy.flush()?;
    }

    fs::remove_file(out.join(INCOMPLETE_MARKER))?;
    Ok(())
}

/// Write a ready-to-use synthetic dataset: 16-bit PGM images, a manifest,
/// an occlusion preview, and an example sweep config pointing at the
/// manifest.
pub fn demo_synthetic(seed: u64, out: &Path, overwrite: bool) -> Result<()> {
    prepare_output_dir(out, overwrite)?;
    let dataset = synthetic_faces(10, 4, (24, 21), seed)?;
    let mut manifest = BufWriter::new(File::create(out.join("manifest.csv"))?);
    writeln!(manifest, "path,label")?;
    let mut per_class_counter = vec![0usize; 11];
    for (img, &label) in dataset.images().iter().zip(dataset.labels()) {
        let k = per_class_counter[label];
        per_class_counter[label] += 1;
        let file = format!("class{label:02}_{k}.pgm");
        save_pgm(img, out.join(&file), 65535)?;
        writeln!(manifest, "{file},{label}")?;
    }
    manifest.flush()?;
    drop(manifest);

    let spec = CorruptionSpec::new(CorruptionKind::Occlusion, 0.3, seed);
    let (occluded, mask) = spec.apply(&dataset.images()[0])?;
    save_pgm(&occluded, out.join("preview_occluded.pgm"), 65535)?;
    save_pgm(&mask, out.join("preview_mask.pgm"), 255)?;
    save_pgm(&builtin_occluder(), out.join("occluder.pgm"), 255)?;

    let config_text = format!(
        "[dataset]\nsource = \"manifest\"\nmanifest = \"manifest.csv\"\n\n\
         [split]\ntrain_per_class = 2\n\n\
         [corruption]\nkind = \"occlusion\"\nlevels = [0.0, 0.2, 0.4]\n\n\
         # Weight bandwidth sized for this dataset's residual scale; the\n\
         # 0.07 default suits densely sampled photographic dictionaries.\n\
         [solver]\nbeta1 = 0.3\n\n\
         [methods]\nweight_rules = [\"gc\", \"none\"]\nrank_rules = [\"gc\", \"none\"]\n\n\
         [output]\ndir = \"sweep_out\"\n\n\
         [run]\nseed = {seed}\n"
    );
    fs::write(out.join("example_config.toml"), config_text)?;
    Ok(())
}
