use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spotvol_core::evaluation::{DmConfig, LongRunVariance};
use spotvol_core::features::{ComponentRule, GroupToggles, TargetTransform, DEFAULT_RIDGE};
use spotvol_core::models::{GbtParams, HybridConfig, KernelChoice, LstmParams};
use spotvol_core::rag::{MockProvider, ScoringConfig, SeverityRule};

use crate::error::{AppError, AppResult};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub measures: MeasuresConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub rating: RatingConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Long `date,slot,price` CSV or an AEMO price-and-demand export.
    pub prices: PathBuf,
    pub exogenous: PathBuf,
    /// Directory of `<year>.txt` weather reports.
    pub corpus_dir: PathBuf,
    /// Keeps only this region when the price file carries several.
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default = "default_slots")]
    pub slots_per_day: usize,
}

fn default_slots() -> usize {
    48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default)]
    pub train_start: Option<NaiveDate>,
    pub train_end: NaiveDate,
    /// Forecasts are evaluated from the day after this.
    pub validation_end: NaiveDate,
    #[serde(default)]
    pub test_end: Option<NaiveDate>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_start: None,
            train_end: NaiveDate::from_ymd_opt(2016, 6, 30).expect("valid date"),
            validation_end: NaiveDate::from_ymd_opt(2017, 6, 30).expect("valid date"),
            test_end: None,
        }
    }
}

impl SplitConfig {
    pub fn test_start(&self) -> NaiveDate {
        self.validation_end.succ_opt().expect("date in range")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresConfig {
    pub jump_alpha: f64,
    /// Seasonal-profile window; defaults to the first data day through
    /// `split.train_end`.
    #[serde(default)]
    pub profile_start: Option<NaiveDate>,
    #[serde(default)]
    pub profile_end: Option<NaiveDate>,
}

impl Default for MeasuresConfig {
    fn default() -> Self {
        Self { jump_alpha: 0.01, profile_start: None, profile_end: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub target: TargetTransform,
    pub sfs_budget: usize,
    pub ridge_lambda: f64,
    pub kernel: KernelChoice,
    pub components: ComponentRule,
    pub augment_components: bool,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let h = HybridConfig::default();
        Self {
            target: TargetTransform::default(),
            sfs_budget: h.sfs_budget,
            ridge_lambda: DEFAULT_RIDGE,
            kernel: h.kernel,
            components: h.components,
            augment_components: h.augment_components,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub gbt: GbtParams,
    pub lstm: LstmParams,
    /// Forecast origins between refits; 0 fits once at the first origin.
    pub refit_every: usize,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self { gbt: GbtParams::default(), lstm: LstmParams::default(), refit_every: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub segment_size: usize,
    pub significance: f64,
    /// Newey–West lags for the DM variance; absent means lag-0.
    pub newey_west_lags: Option<usize>,
    pub small_sample: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { segment_size: 50, significance: 0.10, newey_west_lags: None, small_sample: false }
    }
}

impl EvaluationConfig {
    pub fn dm(&self) -> DmConfig {
        DmConfig {
            significance: self.significance,
            variance: self.newey_west_lags.map_or(LongRunVariance::Lag0, |lags| LongRunVariance::NeweyWest { lags }),
            small_sample: self.small_sample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "yes")]
    pub weather: bool,
    #[serde(default = "yes")]
    pub supply_demand: bool,
    #[serde(default = "yes")]
    pub price_fluctuations: bool,
    #[serde(default = "yes")]
    pub regional: bool,
    #[serde(default = "yes")]
    pub rating: bool,
    /// Rating feature plus selection/kernel-PCA feature engineering.
    #[serde(default = "yes")]
    pub llm_features: bool,
    #[serde(default = "yes")]
    pub lstm: bool,
    #[serde(default = "yes")]
    pub gbt: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            weather: true,
            supply_demand: true,
            price_fluctuations: true,
            regional: true,
            rating: true,
            llm_features: true,
            lstm: true,
            gbt: true,
        }
    }
}

pub const TOGGLES: [&str; 8] =
    ["weather", "supply_demand", "price_fluctuations", "regional", "rating", "llm_features", "lstm", "gbt"];

impl AblationConfig {
    /// Copy with `toggle` switched off.
    pub fn without(&self, toggle: &str) -> AppResult<Self> {
        let mut a = *self;
        match toggle {
            "weather" => a.weather = false,
            "supply_demand" => a.supply_demand = false,
            "price_fluctuations" => a.price_fluctuations = false,
            "regional" => a.regional = false,
            "rating" => a.rating = false,
            "llm_features" => a.llm_features = false,
            "lstm" => a.lstm = false,
            "gbt" => a.gbt = false,
            other => {
                return Err(AppError::Config(format!(
                    "unknown ablation toggle `{other}`; valid toggles: {}",
                    TOGGLES.join(", ")
                )))
            }
        }
        Ok(a)
    }

    pub fn groups(&self) -> GroupToggles {
        GroupToggles {
            price_fluctuations: self.price_fluctuations,
            weather: self.weather,
            supply_demand: self.supply_demand,
            regional: self.regional,
            rating: self.rating && self.llm_features,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingMode {
    #[default]
    Annual,
    Monthly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatingConfig {
    pub mode: RatingMode,
    pub chunk_size: usize,
    pub overlap: usize,
    pub top_k: usize,
    pub question: String,
    /// Replaces the bundled prompt template.
    pub template: Option<PathBuf>,
}

impl Default for RatingConfig {
    fn default() -> Self {
        let s = ScoringConfig::default();
        Self { mode: RatingMode::Annual, chunk_size: 1000, overlap: 200, top_k: s.top_k, question: s.question, template: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    OfflineMock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    pub rules: Vec<SeverityRule>,
    pub fixed_response: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::OfflineMock,
            endpoint: String::new(),
            token_env: "SPOTVOL_PROVIDER_TOKEN".into(),
            model: String::new(),
            timeout_secs: 30,
            max_retries: 3,
            parallelism: 4,
            rules: MockProvider::default_rules(),
            fixed_response: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> AppResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.data.prices,
            &mut self.data.exogenous,
            &mut self.data.corpus_dir,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(t) = self.rating.template.as_mut().filter(|t| t.is_relative()) {
            *t = base.join(&*t);
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        let fail = |m: String| Err(AppError::Config(m));
        let s = &self.split;
        if let Some(start) = s.train_start {
            if start >= s.train_end {
                return fail(format!("split.train_start {start} must precede split.train_end {}", s.train_end));
            }
        }
        if s.train_end >= s.validation_end {
            return fail(format!(
                "split dates must be strictly ordered: train_end {} >= validation_end {}",
                s.train_end, s.validation_end
            ));
        }
        if let Some(end) = s.test_end {
            if end <= s.validation_end {
                return fail(format!(
                    "split dates must be strictly ordered: test_end {end} <= validation_end {}",
                    s.validation_end
                ));
            }
        }
        if !(self.measures.jump_alpha > 0.0 && self.measures.jump_alpha < 1.0) {
            return fail(format!("measures.jump_alpha must lie in (0, 1), got {}", self.measures.jump_alpha));
        }
        if self.data.slots_per_day < 2 {
            return fail("data.slots_per_day must be at least 2".into());
        }
        if !(self.evaluation.significance > 0.0 && self.evaluation.significance < 1.0) {
            return fail("evaluation.significance must lie in (0, 1)".into());
        }
        if self.rating.chunk_size == 0 || self.rating.overlap >= self.rating.chunk_size {
            return fail("rating.overlap must be smaller than a positive rating.chunk_size".into());
        }
        if self.rating.top_k == 0 {
            return fail("rating.top_k must be positive".into());
        }
        if self.provider.parallelism == 0 {
            return fail("provider.parallelism must be at least 1".into());
        }
        if self.provider.kind == ProviderKind::Remote && self.provider.endpoint.trim().is_empty() {
            return fail("provider.endpoint is required for the remote provider".into());
        }
        if self.features.ridge_lambda < 0.0 {
            return fail("features.ridge_lambda must be non-negative".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let value = serde_json::to_value(&c).expect("config serializes");
        sha256_hex(value.to_string().as_bytes())
    }

    /// Hybrid settings with ablation flags and the seed applied.
    pub fn hybrid(&self, ablation: &AblationConfig, validation_fraction: f64) -> HybridConfig {
        let f = &self.features;
        HybridConfig {
            feature_engineering: ablation.llm_features,
            sfs_budget: f.sfs_budget,
            ridge_lambda: f.ridge_lambda,
            kernel: f.kernel,
            components: f.components,
            augment_components: f.augment_components,
            use_gbt: ablation.gbt,
            use_lstm: ablation.lstm,
            validation_fraction,
            gbt: GbtParams { seed: self.seed, ..self.models.gbt.clone() },
            lstm: LstmParams { seed: self.seed, ..self.models.lstm.clone() },
        }
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig { top_k: self.rating.top_k, question: self.rating.question.clone() }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
