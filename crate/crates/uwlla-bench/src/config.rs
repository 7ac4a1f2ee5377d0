//! Experiment configuration: a TOML file with flat sections. Unknown keys
//! are rejected with the parser's line/column position so typos don't
//! silently fall back to defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use uwlla::{CorruptionKind, GcParams, HMode, RankRule, SolverConfig, WeightRule};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub methods: MethodsSection,
    #[serde(default)]
    pub baselines: BaselinesSection,
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic,
    Manifest,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DatasetSource,
    /// Path to a `path,label` manifest (source = "manifest").
    pub manifest: Option<PathBuf>,
    /// Resize every manifest image to this shape on load.
    pub target_shape: Option<(usize, usize)>,
    /// Synthetic generator parameters (source = "synthetic").
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_shape")]
    pub shape: (usize, usize),
}

fn default_classes() -> usize {
    10
}
fn default_per_class() -> usize {
    10
}
fn default_shape() -> (usize, usize) {
    (24, 21)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_per_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKindName {
    Occlusion,
    Pixel,
    Mixed,
}

impl CorruptionKindName {
    pub fn to_kind(self) -> CorruptionKind {
        match self {
            CorruptionKindName::Occlusion => CorruptionKind::Occlusion,
            CorruptionKindName::Pixel => CorruptionKind::Pixel,
            CorruptionKindName::Mixed => CorruptionKind::Mixed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    pub kind: CorruptionKindName,
    /// Corruption strengths to sweep, strictly increasing, each in [0, 1).
    /// Level 0 evaluates the clean test set.
    pub levels: Vec<f64>,
    /// PGM image pasted over occluded blocks; the built-in texture when
    /// absent.
    pub occluder: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Weight-kernel shape and bandwidth (the "gc" weight rule).
    pub alpha1: f64,
    pub beta1: f64,
    /// Rank-kernel shape and bandwidth (the "gc" rank rule).
    pub alpha2: f64,
    pub beta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub h_mode: HModeName,
    pub weight_floor: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            alpha1: 1.7,
            beta1: 0.07,
            alpha2: 1.0,
            beta2: 0.7,
            lambda1: 0.01,
            lambda2: 1.0,
            rho1: 1.0,
            rho2: 0.1,
            max_iter: 100,
            tol: 1e-5,
            h_mode: HModeName::Projection,
            weight_floor: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HModeName {
    Projection,
    RidgeExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRuleName {
    Gc,
    Gaussian,
    Logistic,
    Irgsc,
    None,
}

impl WeightRuleName {
    pub fn label(self) -> &'static str {
        match self {
            WeightRuleName::Gc => "gc",
            WeightRuleName::Gaussian => "gaussian",
            WeightRuleName::Logistic => "logistic",
            WeightRuleName::Irgsc => "irgsc",
            WeightRuleName::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankRuleName {
    Gc,
    Nuclear,
    Logsum,
    None,
}

impl RankRuleName {
    pub fn label(self) -> &'static str {
        match self {
            RankRuleName::Gc => "gc",
            RankRuleName::Nuclear => "nuclear",
            RankRuleName::Logsum => "logsum",
            RankRuleName::None => "none",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsSection {
    /// Every weight rule is crossed with every rank rule; variants are
    /// named "{weight}+{rank}".
    pub weight_rules: Vec<WeightRuleName>,
    pub rank_rules: Vec<RankRuleName>,
}

impl Default for MethodsSection {
    fn default() -> Self {
        MethodsSection {
            weight_rules: vec![WeightRuleName::Gc],
            rank_rules: vec![RankRuleName::Gc],
        }
    }
}

/// Parameters of the competing weight/rank rules used in ablation runs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesSection {
    pub gaussian_sigma: f64,
    pub logistic_gamma: f64,
    pub logistic_beta: f64,
    pub logistic_theta: f64,
    pub irgsc_gamma: f64,
    pub logsum_eps: f64,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        BaselinesSection {
            gaussian_sigma: 0.1,
            logistic_gamma: 100.0,
            logistic_beta: 100.0,
            logistic_theta: 0.04,
            irgsc_gamma: 0.05,
            logsum_eps: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write min-max-normalized weight maps (and corruption masks) as PGM
    /// for the traced samples.
    #[serde(default = "default_true")]
    pub weight_maps: bool,
    /// How many test samples per (level, variant) get a convergence-trace
    /// CSV (0 disables tracing).
    #[serde(default = "default_trace_samples")]
    pub trace_samples: usize,
    /// Record real wall-clock timings. Off by default because timing values
    /// change between runs, breaking byte-identical artifacts; when off,
    /// every timing cell is written as 0.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_true() -> bool {
    true
}
fn default_trace_samples() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// 0 = one worker per core, 1 = sequential, n = pool of n.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 42, workers: 0 }
    }
}

impl ExperimentConfig {
    /// Parse and validate a config file. Syntax and unknown-key errors keep
    /// the TOML parser's line/column message.
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("could not read config {}", path.display()))?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        // Relative paths in the file mean "next to the config", not "under
        // whatever directory the tool happens to run from".
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            if let Some(m) = config.dataset.manifest.as_mut() {
                rebase(m);
            }
            if let Some(o) = config.corruption.occluder.as_mut() {
                rebase(o);
            }
            rebase(&mut config.output.dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.source == DatasetSource::Manifest && self.dataset.manifest.is_none() {
            bail!("dataset.manifest: required when dataset.source = \"manifest\"");
        }
        if self.corruption.levels.is_empty() {
            bail!("corruption.levels: at least one level is required");
        }
        for pair in self.corruption.levels.windows(2) {
            if pair[1] <= pair[0] {
                bail!(
                    "corruption.levels: must be strictly increasing ({} then {})",
                    pair[0],
                    pair[1]
                );
            }
        }
        for &level in &self.corruption.levels {
            if !(0.0..1.0).contains(&level) {
                bail!("corruption.levels: {level} is outside [0, 1)");
            }
        }
        if self.methods.weight_rules.is_empty() || self.methods.rank_rules.is_empty() {
            bail!("methods: weight_rules and rank_rules must both be non-empty");
        }
        for (list, name) in [
            (
                self.methods.weight_rules.iter().map(|r| r.label()).collect::<Vec<_>>(),
                "weight_rules",
            ),
            (self.methods.rank_rules.iter().map(|r| r.label()).collect::<Vec<_>>(), "rank_rules"),
        ] {
            let mut seen = list.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != list.len() {
                bail!("methods.{name}: duplicate entries");
            }
        }
        // Every variant's solver configuration must construct cleanly.
        for &w in &self.methods.weight_rules {
            for &r in &self.methods.rank_rules {
                self.solver_config(w, r)
                    .with_context(|| format!("variant {}", variant_name(w, r)))?
                    .validate()
                    .map_err(anyhow::Error::from)
                    .with_context(|| format!("variant {}", variant_name(w, r)))?;
            }
        }
        Ok(())
    }

    /// Assemble the solver configuration for one (weight, rank) variant.
    pub fn solver_config(&self, w: WeightRuleName, r: RankRuleName) -> Result<SolverConfig> {
        let s = &self.solver;
        let kernel = |alpha: f64, beta: f64| -> Result<GcParams> {
            let params = GcParams::new(alpha, beta)?;
            Ok(match s.weight_floor {
                Some(floor) => params.with_weight_floor(floor)?,
                None => params,
            })
        };
        let weight_rule = match w {
            WeightRuleName::Gc => WeightRule::Gc(kernel(s.alpha1, s.beta1)?),
            WeightRuleName::Gaussian => {
                WeightRule::Gaussian { sigma: self.baselines.gaussian_sigma }
            }
            WeightRuleName::Logistic => WeightRule::Logistic {
                gamma: self.baselines.logistic_gamma,
                beta: self.baselines.logistic_beta,
                theta: self.baselines.logistic_theta,
            },
            WeightRuleName::Irgsc => WeightRule::Irgsc { gamma: self.baselines.irgsc_gamma },
            WeightRuleName::None => WeightRule::Uniform,
        };
        let rank_rule = match r {
            RankRuleName::Gc => RankRule::Gc(GcParams::new(s.alpha2, s.beta2)?),
            RankRuleName::Nuclear => RankRule::Nuclear,
            RankRuleName::Logsum => RankRule::LogSum { eps: self.baselines.logsum_eps },
            RankRuleName::None => RankRule::None,
        };
        Ok(SolverConfig {
            weight_rule,
            rank_rule,
            lambda1: s.lambda1,
            lambda2: s.lambda2,
            rho1: s.rho1,
            rho2: s.rho2,
            max_iter: s.max_iter,
            tol: s.tol,
            h_mode: match s.h_mode {
                HModeName::Projection => HMode::Projection,
                HModeName::RidgeExact => HMode::RidgeExact,
            },
        })
    }

    /// All (weight, rank) variants in config order.
    pub fn variants(&self) -> Vec<(WeightRuleName, RankRuleName)> {
        let mut out = Vec::new();
        for &w in &self.methods.weight_rules {
            for &r in &self.methods.rank_rules {
                out.push((w, r));
            }
        }
        out
    }
}

pub fn variant_name(w: WeightRuleName, r: RankRuleName) -> String {
    format!("{}+{}", w.label(), r.label())
}
