//! LoRA adapter weight merging.
//!
//! Each adapter carries per-module low-rank factor pairs `(A: r×k, B: d×r)`
//! with an `alpha/r` scale; its effective update is `Δ = (α/r)·B·A`. Merging
//! operates entirely in delta space per target module and never touches
//! base-model weights. Six strategies are supported: `linear` (sqrt-weighted
//! factor sums, approximate), `cat` (rank concatenation, exact), `dare_linear`
//! (random drop-and-rescale), `svd` (truncated-SVD refactoring of the summed
//! delta), `ties` (magnitude trim + sign election), and `ties_svd`.

mod container;
mod matrix;
mod svd;

pub use container::{load_adapter, save_adapter};
pub use matrix::{Dense, Matrix};
pub use svd::{refactor, svd as svd_decompose};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::det;

#[derive(Debug, thiserror::Error)]
pub enum MergeError {
    #[error("matrix shape mismatch: expected {expected} entries, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("adapter header {path} is not valid JSON: {source}")]
    HeaderJson {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("adapter blob truncated or corrupt at byte offset {offset}")]
    MalformedContainer { offset: usize },
    #[error("module `{module}` listed in metadata is missing from the container")]
    MissingModule { module: String },
    #[error("module `{module}` has rank 0")]
    ZeroRank { module: String },
    #[error("module `{module}` factor dimensions are inconsistent with its rank")]
    FactorShape { module: String },
    #[error("no adapters to merge")]
    NoAdapters,
    #[error("{adapters} adapters but {weights} weights")]
    WeightCount { adapters: usize, weights: usize },
    #[error("adapter {index} has a different target-module set (missing `{module}`)")]
    ModuleSetMismatch { index: usize, module: String },
    #[error("module `{module}`: adapters disagree on delta dimensions")]
    DimensionMismatch { module: String },
    #[error("strategy `{strategy}` requires equal ranks, but module `{module}` differs")]
    RankMismatch { strategy: String, module: String },
    #[error("strategy `{0}` requires a density in (0, 1]")]
    DensityRequired(String),
    #[error("density {0} out of range (0, 1]")]
    DensityOutOfRange(f64),
    #[error("strategy `{0}` does not take a density")]
    DensityNotApplicable(String),
    #[error("strategy `{0}` does not take a target rank")]
    TargetRankNotApplicable(String),
    #[error("dare_linear requires an rng seed")]
    SeedRequired,
    #[error("target rank {target} exceeds min(d, k) = {max}")]
    TargetRankTooLarge { target: usize, max: usize },
    #[error("strategy `linear` requires non-negative weights, got {0}")]
    NegativeWeight(f64),
    #[error("module `{module}` produced non-finite delta entries")]
    NonFinite { module: String },
}

/// One target module's low-rank factors: `A: rank×k`, `B: d×rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraModule {
    pub a: Matrix,
    pub b: Matrix,
    pub rank: usize,
    pub alpha: f32,
}

impl LoraModule {
    pub fn scale(&self) -> f64 {
        self.alpha as f64 / self.rank as f64
    }

    fn check(&self, name: &str) -> Result<(), MergeError> {
        if self.rank == 0 {
            return Err(MergeError::ZeroRank {
                module: name.to_string(),
            });
        }
        if self.a.rows() != self.rank || self.b.cols() != self.rank {
            return Err(MergeError::FactorShape {
                module: name.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdapterMetadata {
    #[serde(default)]
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_cycle: Option<String>,
    /// Module names the container promises to hold.
    #[serde(default)]
    pub target_modules: Vec<String>,
}

/// A LoRA adapter: factor pairs per target module plus provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub modules: BTreeMap<String, LoraModule>,
    pub metadata: AdapterMetadata,
}

impl LoraAdapter {
    pub fn new(source_id: impl Into<String>) -> Self {
        Self {
            modules: BTreeMap::new(),
            metadata: AdapterMetadata {
                source_id: source_id.into(),
                training_cycle: None,
                target_modules: Vec::new(),
            },
        }
    }

    pub fn insert_module(
        &mut self,
        name: impl Into<String>,
        a: Matrix,
        b: Matrix,
        alpha: f32,
    ) -> Result<(), MergeError> {
        let name = name.into();
        let rank = a.rows();
        let module = LoraModule { a, b, rank, alpha };
        module.check(&name)?;
        self.modules.insert(name, module);
        Ok(())
    }
}

/// Dense effective updates per module.
pub type DeltaMap = BTreeMap<String, Dense>;

/// Realizes the adapter's effective weight update `Δ = (α/r)·B·A` per
/// module, computed in f64.
pub fn full_delta(adapter: &LoraAdapter) -> Result<DeltaMap, MergeError> {
    let mut out = BTreeMap::new();
    for (name, module) in &adapter.modules {
        module.check(name)?;
        let mut delta = module.b.to_dense().matmul(&module.a.to_dense())?;
        delta.scale(module.scale());
        if !delta.is_finite() {
            return Err(MergeError::NonFinite {
                module: name.clone(),
            });
        }
        out.insert(name.clone(), delta);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    Linear,
    Cat,
    DareLinear,
    Svd,
    Ties,
    TiesSvd,
}

impl MergeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            MergeStrategy::Linear => "linear",
            MergeStrategy::Cat => "cat",
            MergeStrategy::DareLinear => "dare_linear",
            MergeStrategy::Svd => "svd",
            MergeStrategy::Ties => "ties",
            MergeStrategy::TiesSvd => "ties_svd",
        }
    }

    fn needs_density(&self) -> bool {
        matches!(
            self,
            MergeStrategy::DareLinear | MergeStrategy::Ties | MergeStrategy::TiesSvd
        )
    }

    fn honors_target_rank(&self) -> bool {
        matches!(self, MergeStrategy::Svd | MergeStrategy::TiesSvd)
    }

    fn needs_equal_ranks(&self) -> bool {
        matches!(
            self,
            MergeStrategy::Linear | MergeStrategy::DareLinear | MergeStrategy::Ties
        )
    }
}

impl std::str::FromStr for MergeStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(MergeStrategy::Linear),
            "cat" => Ok(MergeStrategy::Cat),
            "dare_linear" => Ok(MergeStrategy::DareLinear),
            "svd" => Ok(MergeStrategy::Svd),
            "ties" => Ok(MergeStrategy::Ties),
            "ties_svd" => Ok(MergeStrategy::TiesSvd),
            other => Err(format!("unknown merge strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeSpec {
    pub strategy: MergeStrategy,
    /// One weight per adapter, in adapter order.
    pub weights: Vec<f64>,
    /// Fraction of entries kept by dare/ties trimming.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    /// Output rank for the SVD refactoring strategies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    /// Mask seed for dare_linear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

impl MergeSpec {
    pub fn new(strategy: MergeStrategy, weights: Vec<f64>) -> Self {
        Self {
            strategy,
            weights,
            density: None,
            target_rank: None,
            rng_seed: None,
        }
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = Some(density);
        self
    }

    pub fn with_target_rank(mut self, rank: usize) -> Self {
        self.target_rank = Some(rank);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = Some(seed);
        self
    }

    fn validate(&self, n_adapters: usize) -> Result<(), MergeError> {
        if n_adapters == 0 {
            return Err(MergeError::NoAdapters);
        }
        if self.weights.len() != n_adapters {
            return Err(MergeError::WeightCount {
                adapters: n_adapters,
                weights: self.weights.len(),
            });
        }
        match (self.strategy.needs_density(), self.density) {
            (true, None) => {
                return Err(MergeError::DensityRequired(
                    self.strategy.name().to_string(),
                ))
            }
            (true, Some(d)) if !(d > 0.0 && d <= 1.0) => {
                return Err(MergeError::DensityOutOfRange(d))
            }
            (false, Some(_)) => {
                return Err(MergeError::DensityNotApplicable(
                    self.strategy.name().to_string(),
                ))
            }
            _ => {}
        }
        if self.target_rank.is_some() && !self.strategy.honors_target_rank() {
            return Err(MergeError::TargetRankNotApplicable(
                self.strategy.name().to_string(),
            ));
        }
        if self.strategy == MergeStrategy::DareLinear && self.rng_seed.is_none() {
            return Err(MergeError::SeedRequired);
        }
        if self.strategy == MergeStrategy::Linear {
            if let Some(&w) = self.weights.iter().find(|w| **w < 0.0) {
                return Err(MergeError::NegativeWeight(w));
            }
        }
        Ok(())
    }
}

/// Merges adapters into one. All adapters must share the same target-module
/// set; `linear`, `dare_linear`, and `ties` additionally require equal ranks.
pub fn merge(adapters: &[LoraAdapter], spec: &MergeSpec) -> Result<LoraAdapter, MergeError> {
    spec.validate(adapters.len())?;
    let module_names: Vec<String> = adapters[0].modules.keys().cloned().collect();
    for (index, adapter) in adapters.iter().enumerate() {
        for name in &module_names {
            if !adapter.modules.contains_key(name) {
                return Err(MergeError::ModuleSetMismatch {
                    index,
                    module: name.clone(),
                });
            }
        }
        if adapter.modules.len() != module_names.len() {
            let extra = adapter
                .modules
                .keys()
                .find(|k| !module_names.contains(k))
                .cloned()
                .unwrap_or_default();
            return Err(MergeError::ModuleSetMismatch {
                index,
                module: extra,
            });
        }
    }

    let mut merged = LoraAdapter::new(format!("merged:{}", spec.strategy.name()));
    merged.metadata.target_modules = module_names.clone();

    for name in &module_names {
        let parts: Vec<&LoraModule> = adapters.iter().map(|ad| &ad.modules[name]).collect();
        for part in &parts {
            part.check(name)?;
            if part.b.rows() != parts[0].b.rows() || part.a.cols() != parts[0].a.cols() {
                return Err(MergeError::DimensionMismatch {
                    module: name.clone(),
                });
            }
            if spec.strategy.needs_equal_ranks() && part.rank != parts[0].rank {
                return Err(MergeError::RankMismatch {
                    strategy: spec.strategy.name().to_string(),
                    module: name.clone(),
                });
            }
        }
        let d = parts[0].b.rows();
        let k = parts[0].a.cols();
        let sum_rank: usize = parts.iter().map(|p| p.rank).sum();
        let max_rank = d.min(k);

        let module = match spec.strategy {
            MergeStrategy::Linear => merge_linear(&parts, &spec.weights),
            MergeStrategy::Cat => merge_cat(&parts, &spec.weights)?,
            MergeStrategy::DareLinear => {
                let density = spec.density.expect("validated");
                let seed = spec.rng_seed.expect("validated");
                let target = sum_rank.min(max_rank).max(1);
                let delta = dare_delta(&parts, &spec.weights, density, seed, name)?;
                refactor_module(&delta, target)
            }
            MergeStrategy::Svd => {
                let target = resolve_target_rank(spec.target_rank, sum_rank, max_rank)?;
                let delta = weighted_delta(&parts, &spec.weights)?;
                refactor_module(&delta, target)
            }
            MergeStrategy::Ties => {
                let density = spec.density.expect("validated");
                let target = sum_rank.min(max_rank).max(1);
                let delta = ties_delta(&parts, &spec.weights, density)?;
                refactor_module(&delta, target)
            }
            MergeStrategy::TiesSvd => {
                let density = spec.density.expect("validated");
                let target = resolve_target_rank(spec.target_rank, sum_rank, max_rank)?;
                let delta = ties_delta(&parts, &spec.weights, density)?;
                refactor_module(&delta, target)
            }
        };
        merged.modules.insert(name.clone(), module);
    }
    Ok(merged)
}

fn resolve_target_rank(
    requested: Option<usize>,
    sum_rank: usize,
    max_rank: usize,
) -> Result<usize, MergeError> {
    match requested {
        Some(t) if t > max_rank => Err(MergeError::TargetRankTooLarge {
            target: t,
            max: max_rank,
        }),
        Some(t) => Ok(t.max(1)),
        None => Ok(sum_rank.min(max_rank).max(1)),
    }
}

/// The standard sqrt-weight approximation: folding `√(wᵢsᵢ)` into both
/// factors reproduces each adapter's own delta but introduces cross terms
/// between adapters, so it is not exact for more than one adapter.
fn merge_linear(parts: &[&LoraModule], weights: &[f64]) -> LoraModule {
    let rank = parts[0].rank;
    let mut a = Matrix::zeros(rank, parts[0].a.cols());
    let mut b = Matrix::zeros(parts[0].b.rows(), rank);
    for (part, &w) in parts.iter().zip(weights) {
        let factor = (w * part.scale()).sqrt() as f32;
        for i in 0..rank {
            for j in 0..a.cols() {
                a.set(i, j, a.get(i, j) + factor * part.a.get(i, j));
            }
        }
        for i in 0..b.rows() {
            for j in 0..rank {
                b.set(i, j, b.get(i, j) + factor * part.b.get(i, j));
            }
        }
    }
    // output alpha equals rank, so the merged module's scale is 1
    LoraModule {
        a,
        b,
        rank,
        alpha: rank as f32,
    }
}

/// Rank concatenation: exact, `Δ' = Σ wᵢ·Δᵢ`. Each `Aᵢ` is scaled by
/// `wᵢ·sᵢ` and stacked along the rank axis; the `Bᵢ` are concatenated.
fn merge_cat(parts: &[&LoraModule], weights: &[f64]) -> Result<LoraModule, MergeError> {
    let mut a: Option<Matrix> = None;
    let mut b: Option<Matrix> = None;
    for (part, &w) in parts.iter().zip(weights) {
        let scaled_a = part.a.scaled((w * part.scale()) as f32);
        a = Some(match a {
            Some(acc) => acc.vstack(&scaled_a)?,
            None => scaled_a,
        });
        b = Some(match b {
            Some(acc) => acc.hstack(&part.b)?,
            None => part.b.clone(),
        });
    }
    let a = a.expect("at least one adapter");
    let b = b.expect("at least one adapter");
    let rank = a.rows();
    Ok(LoraModule {
        a,
        b,
        rank,
        alpha: rank as f32,
    })
}

fn weighted_delta(parts: &[&LoraModule], weights: &[f64]) -> Result<Dense, MergeError> {
    let mut sum = Dense::zeros(parts[0].b.rows(), parts[0].a.cols());
    for (part, &w) in parts.iter().zip(weights) {
        let mut delta = part.b.to_dense().matmul(&part.a.to_dense())?;
        delta.scale(part.scale());
        sum.add_scaled(&delta, w)?;
    }
    Ok(sum)
}

/// Per adapter, zeroes each delta entry with probability `1 − density` and
/// rescales survivors by `1/density`, then combines linearly. The mask
/// stream is keyed by (seed, module, adapter index), so results do not
/// depend on evaluation order.
fn dare_delta(
    parts: &[&LoraModule],
    weights: &[f64],
    density: f64,
    seed: u64,
    module_name: &str,
) -> Result<Dense, MergeError> {
    let mut sum = Dense::zeros(parts[0].b.rows(), parts[0].a.cols());
    for (index, (part, &w)) in parts.iter().zip(weights).enumerate() {
        let mut delta = part.b.to_dense().matmul(&part.a.to_dense())?;
        delta.scale(part.scale());
        let mut rng = det::stream(seed, &["dare", module_name, &index.to_string()]);
        for v in delta.data_mut() {
            let keep: f64 = rng.gen();
            if keep < density {
                *v /= density;
            } else {
                *v = 0.0;
            }
        }
        sum.add_scaled(&delta, w)?;
    }
    Ok(sum)
}

/// TIES processing in delta space: trim each `wᵢ·Δᵢ` to its top-density
/// entries by magnitude, elect the per-entry sign by the sign of the summed
/// trimmed values, then average the sign-agreeing contributions.
fn ties_delta(parts: &[&LoraModule], weights: &[f64], density: f64) -> Result<Dense, MergeError> {
    let rows = parts[0].b.rows();
    let cols = parts[0].a.cols();
    let numel = rows * cols;
    let keep = ((density * numel as f64).ceil() as usize).min(numel);

    let mut trimmed: Vec<Dense> = Vec::with_capacity(parts.len());
    for (part, &w) in parts.iter().zip(weights) {
        let mut delta = part.b.to_dense().matmul(&part.a.to_dense())?;
        delta.scale(part.scale() * w);
        // rank entries by |value| descending; ties break toward the lower
        // flat index so trimming is deterministic
        let mut order: Vec<usize> = (0..numel).collect();
        let data = delta.data();
        order.sort_by(|&x, &y| {
            data[y]
                .abs()
                .partial_cmp(&data[x].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.cmp(&y))
        });
        let mut mask = vec![false; numel];
        for &idx in order.iter().take(keep) {
            mask[idx] = true;
        }
        let data = delta.data_mut();
        for (v, keep_it) in data.iter_mut().zip(&mask) {
            if !keep_it {
                *v = 0.0;
            }
        }
        trimmed.push(delta);
    }

    let mut out = Dense::zeros(rows, cols);
    for e in 0..numel {
        let total: f64 = trimmed.iter().map(|t| t.data()[e]).sum();
        if total == 0.0 {
            continue;
        }
        let elected = total.signum();
        let mut acc = 0.0;
        let mut contributors = 0u32;
        for t in &trimmed {
            let v = t.data()[e];
            if v != 0.0 && v.signum() == elected {
                acc += v;
                contributors += 1;
            }
        }
        if contributors > 0 {
            out.data_mut()[e] = acc / contributors as f64;
        }
    }
    Ok(out)
}

fn refactor_module(delta: &Dense, target: usize) -> LoraModule {
    let (a, b) = svd::refactor(delta, target);
    LoraModule {
        a: a.to_matrix(),
        b: b.to_matrix(),
        rank: target,
        alpha: target as f32,
    }
}
