//! Run configuration: a JSON file, every section optional, with CLI flags on top.

use crate::error::{CliError, CliResult};
use amerput_core::eep::PutContract;
use amerput_core::models::*;
use amerput_oracles::OracleConfig;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbm,
    Cev,
    Nmr,
    Merton,
    Kou,
}

impl ModelKind {
    pub fn is_jump(self) -> bool {
        matches!(self, ModelKind::Merton | ModelKind::Kou)
    }

    pub fn max_order(self) -> usize {
        if self.is_jump() {
            2
        } else {
            3
        }
    }

    pub fn default_steps(self) -> usize {
        if self.is_jump() {
            amerput_core::jump_eep::DEFAULT_JUMP_STEPS
        } else {
            100
        }
    }

    pub fn default_contract(self) -> PutContract {
        let (strike, maturity, spot) = match self {
            ModelKind::Gbm => (40.0, 0.5833, 40.0),
            ModelKind::Cev => (100.0, 1.0, 40.0),
            ModelKind::Nmr => (20.0, 0.0833, 20.0),
            ModelKind::Merton | ModelKind::Kou => (40.0, 0.5, 40.0),
        };
        PutContract { strike, maturity, spot }
    }

    fn default_params(self) -> ModelParams {
        match self {
            ModelKind::Gbm => ModelParams::Gbm(GbmParams::default()),
            ModelKind::Cev => ModelParams::Cev(CevParams::default()),
            ModelKind::Nmr => ModelParams::Nmr(NmrParams::default()),
            ModelKind::Merton => ModelParams::Merton(MertonParams::default()),
            ModelKind::Kou => ModelParams::Kou(KouParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Gbm(GbmParams),
    Cev(CevParams),
    Nmr(NmrParams),
    Merton(MertonParams),
    Kou(KouParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Gbm(_) => ModelKind::Gbm,
            ModelParams::Cev(_) => ModelKind::Cev,
            ModelParams::Nmr(_) => ModelKind::Nmr,
            ModelParams::Merton(_) => ModelKind::Merton,
            ModelParams::Kou(_) => ModelKind::Kou,
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            ModelParams::Gbm(p) => p.r,
            ModelParams::Cev(p) => p.r,
            ModelParams::Nmr(p) => p.r,
            ModelParams::Merton(p) => p.r,
            ModelParams::Kou(p) => p.r,
        }
    }

    pub fn diffusion(&self) -> amerput_core::Result<DiffusionSpec> {
        match self {
            ModelParams::Gbm(p) => build_gbm(p),
            ModelParams::Cev(p) => build_cev(p),
            ModelParams::Nmr(p) => build_nmr(p),
            ModelParams::Merton(_) | ModelParams::Kou(_) => {
                Err(amerput_core::Error::Unsupported("jump model has no pure diffusion form".into()))
            }
        }
    }

    pub fn jump_model(&self) -> amerput_core::Result<JumpDiffusionModel> {
        match self {
            ModelParams::Merton(p) => build_merton(p),
            ModelParams::Kou(p) => build_kou(p),
            _ => Err(amerput_core::Error::Unsupported("not a jump model".into())),
        }
    }

    fn to_value(self) -> Value {
        let v = match self {
            ModelParams::Gbm(p) => serde_json::to_value(p),
            ModelParams::Cev(p) => serde_json::to_value(p),
            ModelParams::Nmr(p) => serde_json::to_value(p),
            ModelParams::Merton(p) => serde_json::to_value(p),
            ModelParams::Kou(p) => serde_json::to_value(p),
        };
        v.expect("parameter records serialize")
    }

    /// Parameters for `kind`, with `overrides` laid over the model defaults.
    fn from_value(kind: ModelKind, overrides: Option<&Value>) -> CliResult<Self> {
        let mut merged = kind.default_params().to_value();
        if let Some(o) = overrides {
            let Value::Object(o) = o else {
                return Err(CliError::Config("params: expected an object".into()));
            };
            let base = merged.as_object_mut().expect("object");
            for (k, v) in o {
                base.insert(k.clone(), v.clone());
            }
        }
        let bad = |e: serde_json::Error| CliError::Config(format!("params: {e}"));
        Ok(match kind {
            ModelKind::Gbm => ModelParams::Gbm(serde_json::from_value(merged).map_err(bad)?),
            ModelKind::Cev => ModelParams::Cev(serde_json::from_value(merged).map_err(bad)?),
            ModelKind::Nmr => ModelParams::Nmr(serde_json::from_value(merged).map_err(bad)?),
            ModelKind::Merton => ModelParams::Merton(serde_json::from_value(merged).map_err(bad)?),
            ModelKind::Kou => ModelParams::Kou(serde_json::from_value(merged).map_err(bad)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityOptions {
    pub delta_t: f64,
    pub points: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self { delta_t: 0.0833, points: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub strikes: Vec<f64>,
    pub orders: Vec<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { strikes: (0..=12).map(|i| 10.0 + 5.0 * i as f64).collect(), orders: vec![1, 2, 3] }
    }
}

/// On-disk form. Everything but the model is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contract: Option<PutContract>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<DensityOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepOptions>,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<ModelKind>,
    pub order: Option<usize>,
    pub steps: Option<usize>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub contract: PutContract,
    pub order: usize,
    pub steps: usize,
    pub workers: usize,
    pub oracle: OracleConfig,
    pub density: DensityOptions,
    pub sweep: SweepOptions,
}

impl RunConfig {
    pub fn defaults(kind: ModelKind) -> Self {
        Self::resolve(FileConfig::bare(kind), &Overrides::default()).expect("defaults are valid")
    }

    /// Defaults for the flagged model (GBM when none) with the flags applied.
    pub fn from_overrides(overrides: &Overrides) -> CliResult<Self> {
        Self::resolve(FileConfig::bare(overrides.model.unwrap_or(ModelKind::Gbm)), overrides)
    }

    pub fn load(path: &std::path::Path, overrides: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &Overrides) -> CliResult<Self> {
        let file: FileConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::resolve(file, overrides)
    }

    pub fn model(&self) -> ModelKind {
        self.params.kind()
    }

    fn resolve(mut file: FileConfig, o: &Overrides) -> CliResult<Self> {
        if let Some(kind) = o.model {
            if kind != file.model {
                // Parameters of another model do not carry over.
                file = FileConfig { model: kind, params: None, contract: None, ..file };
            }
        }
        let kind = file.model;
        let mut oracle = file.oracle.unwrap_or_default();
        if let Some(seed) = o.seed {
            oracle.mc_seed = seed;
        }
        let cfg = Self {
            params: ModelParams::from_value(kind, file.params.as_ref())?,
            contract: file.contract.unwrap_or_else(|| kind.default_contract()),
            order: o.order.or(file.order).unwrap_or(2),
            steps: o.steps.or(file.steps).unwrap_or_else(|| kind.default_steps()),
            workers: o.workers.or(file.workers).unwrap_or(1),
            oracle,
            density: file.density.unwrap_or_default(),
            sweep: file.sweep.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let r = self.params.rate();
        if !(r < 1.0) {
            return bad(format!("params.r = {r}: rates are decimals (0.0488 for 4.88%)"));
        }
        let kind = self.model();
        if kind.is_jump() {
            self.params.jump_model().map_err(|e| CliError::Config(format!("params: {e}")))?;
        } else {
            self.params.diffusion().map_err(|e| CliError::Config(format!("params: {e}")))?;
        }
        self.contract.validate().map_err(|e| CliError::Config(format!("contract: {e}")))?;
        if !(1..=kind.max_order()).contains(&self.order) {
            return bad(format!("order must be in 1..={} for {kind:?}, got {}", kind.max_order(), self.order));
        }
        if self.steps < 2 {
            return bad(format!("steps must be at least 2, got {}", self.steps));
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        self.oracle.validate().map_err(|e| CliError::Config(format!("oracle: {e}")))?;
        if !(self.density.delta_t > 0.0) || self.density.points < 3 {
            return bad("density: delta_t must be positive and points at least 3".into());
        }
        if self.sweep.strikes.iter().any(|k| !(*k > 0.0)) || self.sweep.orders.iter().any(|m| !(1..=3).contains(m)) {
            return bad("sweep: strikes must be positive and orders in 1..=3".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = FileConfig {
            model: self.model(),
            params: Some(self.params.to_value()),
            contract: Some(self.contract),
            order: Some(self.order),
            steps: Some(self.steps),
            workers: Some(self.workers),
            oracle: Some(self.oracle),
            density: Some(self.density.clone()),
            sweep: Some(self.sweep.clone()),
        };
        serde_json::to_string_pretty(&file).expect("config serializes")
    }
}

impl FileConfig {
    fn bare(model: ModelKind) -> Self {
        Self {
            model,
            params: None,
            contract: None,
            order: None,
            steps: None,
            workers: None,
            oracle: None,
            density: None,
            sweep: None,
        }
    }
}
