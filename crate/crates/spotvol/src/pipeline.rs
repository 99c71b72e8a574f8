//! Staged pipeline: ingest → measures → rate → features → fit → backtest →
//! evaluate → plot. Every stage persists its outputs and records a stamp in
//! `manifest.json`; with `resume`, a stage whose stamp and files are intact
//! is loaded from disk instead of recomputed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use spotvol_core::evaluation::{
    dm_test, error_table, metrics, metrics_by_model, rejection_heatmap, rolling_backtest, Backtest, DmResult,
    FitEvent, ForecastRecord, GarchForecaster, HarForecaster, HybridForecaster, MetricReport, RejectionHeatmap, Scheme,
};
use spotvol_core::features::{assemble, AssembleSpec, Column, FeatureGroup, FeatureMatrix, GroupToggles};
use spotvol_core::market_data::{
    clean_nonpositive, demean, intraday_returns, seasonal_profile, DateRange, IntradayPriceSeries,
};
use spotvol_core::models::{fit_garch, fit_har, fit_hybrid, HarVariant};
use spotvol_core::rag::{
    build_index, chunk, ratings_to_feature, HashedTrigramEmbedder, Period, WeatherRating, PROMPT_TEMPLATE,
};
use spotvol_core::realized::{measures_for_panel, DailyRealizedMeasures, JumpTestConfig};
use spotvol_core::Error as CoreError;

use crate::config::{sha256_hex, AblationConfig, PipelineConfig, ProviderKind, RatingMode};
use crate::error::{AppError, AppResult};
use crate::io;
use crate::provider::{build_provider, rate_periods, JsonlCache, RatingJob};
use crate::svg;

pub const FORMAT_VERSION: u32 = 1;
pub const HYBRID_LABEL: &str = "Hybrid";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Measures,
    Rate,
    Features,
    Fit,
    Backtest,
    Evaluate,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Measures,
        Stage::Rate,
        Stage::Features,
        Stage::Fit,
        Stage::Backtest,
        Stage::Evaluate,
        Stage::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Measures => "measures",
            Stage::Rate => "rate",
            Stage::Features => "features",
            Stage::Fit => "fit",
            Stage::Backtest => "backtest",
            Stage::Evaluate => "evaluate",
            Stage::Plot => "plot",
        }
    }

    /// Artifact groups written by the stage: (group name, relative paths).
    pub fn artifacts(self) -> &'static [(&'static str, &'static [&'static str])] {
        match self {
            Stage::Ingest => &[("cleaned_panel", &["cleaned_prices.csv", "cleaning_report.json"])],
            Stage::Measures => &[("measures", &["measures.csv"])],
            Stage::Rate => &[("ratings", &["ratings.csv", "rating_cache.jsonl"])],
            Stage::Features => &[("features", &["features.csv", "features.json"])],
            Stage::Fit => &[(
                "models",
                &["models/har_cj.json", "models/harq_cj_lev.json", "models/garch.json", "models/hybrid.json"],
            )],
            Stage::Backtest => &[("forecasts", &["forecasts.csv", "backtest_fits.json"])],
            Stage::Evaluate => &[("metrics", &["metrics.json", "metrics.txt"]), ("dm", &["dm.json", "dm_heatmap.csv"])],
            Stage::Plot => &[("plots", &["forecast_comparison.svg", "dm_heatmap.svg"])],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub resume: bool,
    pub offline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactGroup {
    pub name: String,
    pub stage: String,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub stamp: String,
    pub elapsed_ms: f64,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactGroup>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.artifacts.iter().flat_map(|g| g.files.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmReport {
    pub full_sample: Vec<DmResult>,
    pub heatmap: RejectionHeatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mae: f64,
    pub mse: f64,
    pub mape: Option<f64>,
    pub delta_mae: f64,
    pub delta_mse: f64,
    pub delta_mape: Option<f64>,
}

#[derive(Serialize)]
struct ModelFile<'a, T: Serialize> {
    format_version: u32,
    model: &'a str,
    seed: u64,
    fit_rows: usize,
    first_day: NaiveDate,
    last_target_day: NaiveDate,
    validation_fraction: Option<f64>,
    fitted: &'a T,
}

pub fn file_sha256(path: &Path) -> AppResult<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Usable rows of `matrix` that a model fitted before the test span sees.
pub fn initial_fit_rows(matrix: &FeatureMatrix, cfg: &PipelineConfig) -> Vec<usize> {
    let n = matrix.n_rows();
    (0..n.saturating_sub(1))
        .filter(|&r| {
            matrix.mask[r]
                && matrix.days[r + 1] <= cfg.split.validation_end
                && cfg.split.train_start.is_none_or(|d| matrix.days[r] >= d)
        })
        .collect()
}

/// Share of the initial fit rows whose target falls after `train_end`,
/// clamped to [0.05, 0.5].
pub fn validation_fraction(matrix: &FeatureMatrix, rows: &[usize], train_end: NaiveDate) -> f64 {
    if rows.is_empty() {
        return 0.2;
    }
    let held = rows.iter().filter(|&&r| matrix.days[r + 1] > train_end).count();
    (held as f64 / rows.len() as f64).clamp(0.05, 0.5)
}

fn scheme(cfg: &PipelineConfig) -> Scheme {
    Scheme {
        train_start: cfg.split.train_start,
        train_end: cfg.split.validation_end,
        test_start: cfg.split.test_start(),
        test_end: cfg.split.test_end,
        refit_every: (cfg.models.refit_every > 0).then_some(cfg.models.refit_every),
    }
}

/// Walk-forward backtest of the hybrid model under the given ablation.
pub fn hybrid_backtest(cfg: &PipelineConfig, matrix: &FeatureMatrix, ablation: &AblationConfig) -> AppResult<Backtest> {
    let restricted = matrix.with_groups(&ablation.groups())?;
    let frac = validation_fraction(&restricted, &initial_fit_rows(&restricted, cfg), cfg.split.train_end);
    let mut hybrid = HybridForecaster::new(HYBRID_LABEL, cfg.hybrid(ablation, frac));
    rolling_backtest(&mut [&mut hybrid], &restricted, &scheme(cfg)).map_err(AppError::model)
}

pub fn metrics_table(reports: &[MetricReport]) -> String {
    let mut s = format!("{:<16} {:>14} {:>14} {:>10} {:>6}\n", "model", "MAE", "MSE", "MAPE", "n");
    for r in reports {
        let mape = r.mape.map_or("n/a".to_string(), |m| format!("{m:.4}"));
        s.push_str(&format!("{:<16} {:>14.6} {:>14.6} {:>10} {:>6}\n", r.model, r.mae, r.mse, mape, r.n));
    }
    s
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    opts: RunOptions,
    out: PathBuf,
    manifest: RunManifest,
    previous: Option<RunManifest>,
    prev_stamp: String,
    last_good: Option<String>,
    cleaned: Option<IntradayPriceSeries>,
    measures: Option<(Vec<DailyRealizedMeasures>, Vec<f64>)>,
    ratings: Option<Vec<WeatherRating>>,
    matrix: Option<FeatureMatrix>,
    records: Option<Vec<ForecastRecord>>,
    dm: Option<DmReport>,
}

fn missing(what: &str) -> AppError {
    AppError::Data(format!("{what} not available; run the earlier stages first"))
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, opts: RunOptions) -> AppResult<Self> {
        cfg.validate()?;
        let out = cfg.output_dir.clone();
        fs::create_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
        let manifest_path = out.join(MANIFEST);
        let previous = if opts.resume && manifest_path.exists() {
            io::read_json::<RunManifest>(&manifest_path).ok()
        } else {
            None
        };
        let mut versions = BTreeMap::new();
        versions.insert("spotvol".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("artifact_format".to_string(), FORMAT_VERSION.to_string());
        let manifest = RunManifest {
            format_version: FORMAT_VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            versions,
            artifacts: Vec::new(),
            stages: Vec::new(),
        };
        Ok(Self {
            cfg,
            opts,
            out,
            manifest,
            previous,
            prev_stamp: String::new(),
            last_good: None,
            cleaned: None,
            measures: None,
            ratings: None,
            matrix: None,
            records: None,
            dm: None,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn matrix(&self) -> Option<&FeatureMatrix> {
        self.matrix.as_ref()
    }

    pub fn records(&self) -> Option<&[ForecastRecord]> {
        self.records.as_deref()
    }

    pub fn measures(&self) -> Option<&[DailyRealizedMeasures]> {
        self.measures.as_ref().map(|m| m.0.as_slice())
    }

    pub fn ratings(&self) -> Option<&[WeatherRating]> {
        self.ratings.as_deref()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Runs every stage up to and including `last`.
    pub fn run_through(&mut self, last: Stage) -> AppResult<&RunManifest> {
        for s in Stage::ALL.into_iter().filter(|s| *s <= last) {
            self.run_stage(s)?;
        }
        Ok(&self.manifest)
    }

    fn run_stage(&mut self, s: Stage) -> AppResult<()> {
        let start = Instant::now();
        let result = (|| -> AppResult<bool> {
            let stamp = self.stamp(s)?;
            let reused = self.try_reuse(s, &stamp);
            if !reused {
                self.execute(s)?;
            }
            self.record(s, stamp, start, reused)?;
            Ok(reused)
        })();
        match result {
            Ok(_) => Ok(()),
            Err(e) => {
                log::error!("stage={} status=failed error=\"{e}\"", s.name());
                Err(AppError::Stage { stage: s.name(), last_good: self.last_good.clone(), source: Box::new(e) })
            }
        }
    }

    fn try_reuse(&mut self, s: Stage, stamp: &str) -> bool {
        let Some(prev) = &self.previous else { return false };
        if prev.stage(s.name()).is_none_or(|r| r.stamp != stamp) {
            return false;
        }
        for (group, files) in s.artifacts() {
            let Some(g) = prev.artifacts.iter().find(|g| g.name == *group) else { return false };
            for f in *files {
                let intact = g
                    .files
                    .iter()
                    .find(|e| e.path == *f)
                    .is_some_and(|e| file_sha256(&self.out.join(f)).is_ok_and(|h| h == e.sha256));
                if !intact {
                    return false;
                }
            }
        }
        match self.load(s) {
            Ok(()) => true,
            Err(e) => {
                log::warn!("stage={} cannot reuse persisted outputs: {e}", s.name());
                false
            }
        }
    }

    fn record(&mut self, s: Stage, stamp: String, start: Instant, reused: bool) -> AppResult<()> {
        let mut hashes = Vec::new();
        for (group, files) in s.artifacts() {
            let mut entries = Vec::new();
            for f in *files {
                let p = self.path(f);
                let bytes = fs::metadata(&p).map_err(|e| AppError::io(&p, e))?.len();
                let sha = file_sha256(&p)?;
                hashes.push(format!("{f}:{}", &sha[..12]));
                entries.push(FileEntry { path: f.to_string(), sha256: sha, bytes });
                self.last_good = Some(p.display().to_string());
            }
            self.manifest.artifacts.retain(|g| g.name != *group);
            self.manifest.artifacts.push(ArtifactGroup { name: group.to_string(), stage: s.name().into(), files: entries });
        }
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        self.manifest.stages.retain(|r| r.stage != s.name());
        self.manifest.stages.push(StageRecord { stage: s.name().into(), stamp: stamp.clone(), elapsed_ms, reused });
        self.prev_stamp = stamp;
        io::write_json(&self.path(MANIFEST), &self.manifest)?;
        log::info!(
            "stage={} status={} elapsed_ms={elapsed_ms:.1} artifacts={}",
            s.name(),
            if reused { "reused" } else { "ok" },
            hashes.join(",")
        );
        Ok(())
    }

    fn template(&self) -> AppResult<String> {
        match &self.cfg.rating.template {
            Some(p) => fs::read_to_string(p).map_err(|e| AppError::io(p, e)),
            None => Ok(PROMPT_TEMPLATE.to_string()),
        }
    }

    fn stamp(&self, s: Stage) -> AppResult<String> {
        let c = &self.cfg;
        let detail = match s {
            Stage::Ingest => serde_json::json!({
                "prices": file_sha256(&c.data.prices)?,
                "slots": c.data.slots_per_day,
                "region": c.data.region,
            }),
            Stage::Measures => serde_json::json!({"measures": c.measures, "train_end": c.split.train_end}),
            Stage::Rate => {
                let mut corpus = Vec::new();
                for (id, text) in io::read_corpus(&c.data.corpus_dir)? {
                    corpus.push(format!("{id}:{}", sha256_hex(text.as_bytes())));
                }
                let mut rating = c.rating.clone();
                rating.template = None;
                let provider = if self.opts.offline || c.provider.kind == ProviderKind::OfflineMock {
                    serde_json::json!({"mock": c.provider.rules, "fixed": c.provider.fixed_response})
                } else {
                    serde_json::json!({"endpoint": c.provider.endpoint, "model": c.provider.model})
                };
                serde_json::json!({
                    "rating": rating,
                    "template": sha256_hex(self.template()?.as_bytes()),
                    "provider": provider,
                    "corpus": corpus,
                })
            }
            Stage::Features => serde_json::json!({
                "target": c.features.target,
                "exogenous": file_sha256(&c.data.exogenous)?,
            }),
            Stage::Fit | Stage::Backtest => serde_json::json!({
                "seed": c.seed,
                "split": c.split,
                "features": c.features,
                "models": c.models,
                "ablation": c.ablation,
            }),
            Stage::Evaluate => serde_json::json!({"evaluation": c.evaluation}),
            Stage::Plot => serde_json::json!({}),
        };
        Ok(sha256_hex(format!("{}|{}|{detail}", self.prev_stamp, s.name()).as_bytes()))
    }

    fn load(&mut self, s: Stage) -> AppResult<()> {
        match s {
            Stage::Ingest => {
                let region = self.cfg.data.region.as_deref();
                self.cleaned = Some(io::read_prices(&self.path("cleaned_prices.csv"), self.cfg.data.slots_per_day, region)?);
            }
            Stage::Measures => self.measures = Some(io::read_measures(&self.path("measures.csv"))?),
            Stage::Rate => self.ratings = Some(io::read_ratings(&self.path("ratings.csv"))?),
            Stage::Features => {
                self.matrix = Some(io::read_features(&self.path("features.csv"), &self.path("features.json"))?)
            }
            Stage::Fit | Stage::Plot => {}
            Stage::Backtest => self.records = Some(io::read_forecasts(&self.path("forecasts.csv"))?),
            Stage::Evaluate => self.dm = Some(io::read_json(&self.path("dm.json"))?),
        }
        Ok(())
    }

    fn execute(&mut self, s: Stage) -> AppResult<()> {
        match s {
            Stage::Ingest => self.ingest(),
            Stage::Measures => self.compute_measures(),
            Stage::Rate => self.rate(),
            Stage::Features => self.features(),
            Stage::Fit => self.fit(),
            Stage::Backtest => self.backtest(),
            Stage::Evaluate => self.evaluate(),
            Stage::Plot => self.plot(),
        }
    }

    fn ingest(&mut self) -> AppResult<()> {
        let d = &self.cfg.data;
        let raw = io::read_prices(&d.prices, d.slots_per_day, d.region.as_deref())?;
        let (clean, report) = clean_nonpositive(&raw)?;
        log::info!("stage=ingest days={} replaced_nonpositive={}", clean.len_days(), report.replaced_count);
        io::write_prices(&self.path("cleaned_prices.csv"), &clean)?;
        io::write_json(&self.path("cleaning_report.json"), &report)?;
        self.cleaned = Some(clean);
        Ok(())
    }

    fn compute_measures(&mut self) -> AppResult<()> {
        let series = self.cleaned.as_ref().ok_or_else(|| missing("cleaned panel"))?;
        let panel = intraday_returns(series)?;
        let daily = panel.daily_sums();
        let m = &self.cfg.measures;
        let window = DateRange {
            start: m.profile_start.unwrap_or(series.days()[0]),
            end: m.profile_end.unwrap_or(self.cfg.split.train_end),
        };
        let profile = seasonal_profile(&panel, window)?;
        let (demeaned, uncovered) = demean(&panel, &profile)?;
        if !uncovered.is_empty() {
            log::warn!("stage=measures seasonal_cells_without_profile={}", uncovered.len());
        }
        let measures = measures_for_panel(&demeaned, &JumpTestConfig::new(m.jump_alpha)?)?;
        let n = measures.len() as f64;
        log::info!(
            "stage=measures days={} mean_sqrt_rv={:.4} mean_sqrt_j={:.4} jump_days={}",
            measures.len(),
            measures.iter().map(|x| x.sqrt_rv).sum::<f64>() / n,
            measures.iter().map(|x| x.sqrt_j).sum::<f64>() / n,
            measures.iter().filter(|x| x.jump > 0.0).count()
        );
        io::write_measures(&self.path("measures.csv"), &measures, &daily)?;
        self.measures = Some((measures, daily));
        Ok(())
    }

    fn rate(&mut self) -> AppResult<()> {
        let c = &self.cfg;
        let (measures, _) = self.measures.as_ref().ok_or_else(|| missing("measures"))?;
        let mut chunks = Vec::new();
        for (id, text) in io::read_corpus(&c.data.corpus_dir)? {
            chunks.extend(chunk(&id, &text, c.rating.chunk_size, c.rating.overlap)?);
        }
        let embedder = HashedTrigramEmbedder::default();
        let index = build_index(chunks, &embedder)?;
        let monthly = c.rating.mode == RatingMode::Monthly;
        let mut periods: Vec<Period> = measures.iter().map(|m| Period::of_day(m.day, monthly)).collect();
        periods.dedup();
        let template = self.template()?;
        let provider = build_provider(&c.provider, self.opts.offline)?;
        let remote = !self.opts.offline && c.provider.kind == ProviderKind::Remote;
        let cache_path = self.path("rating_cache.jsonl");
        if !cache_path.exists() {
            io::write_text(&cache_path, "")?;
        }
        let cache = Mutex::new(JsonlCache::open(&cache_path)?);
        let scoring = c.scoring();
        let job = RatingJob { index: &index, embedder: &embedder, provider: provider.as_ref(), template: &template, scoring: &scoring };
        // The mock is instant; one worker keeps cache appends in period order.
        let parallelism = if remote { c.provider.parallelism } else { 1 };
        let ratings = rate_periods(&job, &periods, &cache, parallelism)?;
        log::info!(
            "stage=rate periods={} cache_hits={} provider={}",
            ratings.len(),
            ratings.iter().filter(|r| r.cached).count(),
            provider.id()
        );
        io::write_ratings(&self.path("ratings.csv"), &ratings)?;
        self.ratings = Some(ratings);
        Ok(())
    }

    fn features(&mut self) -> AppResult<()> {
        let (measures, daily) = self.measures.as_ref().ok_or_else(|| missing("measures"))?;
        let ratings = self.ratings.as_ref().ok_or_else(|| missing("ratings"))?;
        let mut exog = io::read_exogenous(&self.cfg.data.exogenous)?;
        let rating = ratings_to_feature(ratings, &exog.days)?;
        exog.set_column(Column::new("weather_rating", "1-5", FeatureGroup::Rating, rating))?;
        let spec = AssembleSpec { target: self.cfg.features.target, groups: GroupToggles::default() };
        let matrix = assemble(measures, daily, &exog, &spec)?;
        let usable = matrix.usable_rows().len();
        if usable == 0 {
            return Err(AppError::Data("feature matrix has no complete rows".into()));
        }
        log::info!("stage=features rows={} usable={usable} columns={}", matrix.n_rows(), matrix.columns.len());
        io::write_features(&self.path("features.csv"), &self.path("features.json"), &matrix)?;
        self.matrix = Some(matrix);
        Ok(())
    }

    /// Returns aligned to the matrix rows.
    fn aligned_returns(&self, matrix: &FeatureMatrix) -> AppResult<Vec<f64>> {
        let (measures, daily) = self.measures.as_ref().ok_or_else(|| missing("measures"))?;
        let by_day: BTreeMap<NaiveDate, f64> = measures.iter().map(|m| m.day).zip(daily.iter().copied()).collect();
        matrix
            .days
            .iter()
            .map(|d| by_day.get(d).copied().ok_or_else(|| AppError::Data(format!("no daily return for {d}"))))
            .collect()
    }

    fn write_model<T: Serialize>(&self, file: &str, model: &str, rows: &[usize], matrix: &FeatureMatrix, frac: Option<f64>, fitted: &T) -> AppResult<()> {
        let (first, last) = match (rows.first(), rows.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(AppError::Model(format!("{model}: no fit rows")) ),
        };
        io::write_json(
            &self.path(file),
            &ModelFile {
                format_version: FORMAT_VERSION,
                model,
                seed: self.cfg.seed,
                fit_rows: rows.len(),
                first_day: matrix.days[first],
                last_target_day: matrix.days[last + 1],
                validation_fraction: frac,
                fitted,
            },
        )
    }

    /// Fits every model on the rows available before the test span.
    fn fit(&mut self) -> AppResult<()> {
        let matrix = self.matrix.as_ref().ok_or_else(|| missing("feature matrix"))?;
        let rows = initial_fit_rows(matrix, &self.cfg);
        if rows.is_empty() {
            return Err(AppError::Model("no usable rows before the test span".into()));
        }
        for (variant, file) in [(HarVariant::HarCj, "models/har_cj.json"), (HarVariant::HarqCjLev, "models/harq_cj_lev.json")] {
            let m = fit_har(matrix, variant, &rows).map_err(AppError::model)?;
            self.write_model(file, variant.label(), &rows, matrix, None, &m)?;
        }
        let returns = self.aligned_returns(matrix)?;
        let last = rows[rows.len() - 1] + 1;
        let g = fit_garch(&returns[..=last]).map_err(AppError::model)?;
        self.write_model("models/garch.json", "GARCH", &rows, matrix, None, &g)?;

        let restricted = matrix.with_groups(&self.cfg.ablation.groups())?;
        let hrows = initial_fit_rows(&restricted, &self.cfg);
        let frac = validation_fraction(&restricted, &hrows, self.cfg.split.train_end);
        let h = fit_hybrid(&restricted, &hrows, &self.cfg.hybrid(&self.cfg.ablation, frac)).map_err(AppError::model)?;
        log::info!(
            "stage=fit hybrid_features={} omega_lstm={:.4} omega_gbt={:.4} val_mae_lstm={:?} val_mae_gbt={:?} val_mae_ensemble={:.6}",
            h.feature_names().len(),
            h.ensemble.weights.omega1,
            h.ensemble.weights.omega2,
            h.validation.lstm_mae,
            h.validation.gbt_mae,
            h.validation.ensemble_mae
        );
        self.write_model("models/hybrid.json", HYBRID_LABEL, &hrows, &restricted, Some(frac), &h)
    }

    fn backtest(&mut self) -> AppResult<()> {
        let matrix = self.matrix.as_ref().ok_or_else(|| missing("feature matrix"))?;
        let mut har = HarForecaster::new(HarVariant::HarCj);
        let mut harq = HarForecaster::new(HarVariant::HarqCjLev);
        let mut garch = GarchForecaster::new(self.aligned_returns(matrix)?, self.cfg.features.target);
        let mut bt = rolling_backtest(&mut [&mut har, &mut harq, &mut garch], matrix, &scheme(&self.cfg)).map_err(AppError::model)?;
        let hybrid = hybrid_backtest(&self.cfg, matrix, &self.cfg.ablation)?;
        bt.records.extend(hybrid.records);
        bt.fits.extend(hybrid.fits);
        log::info!("stage=backtest records={} fits={}", bt.records.len(), bt.fits.len());
        io::write_forecasts(&self.path("forecasts.csv"), &bt.records)?;
        io::write_json::<Vec<FitEvent>>(&self.path("backtest_fits.json"), &bt.fits)?;
        self.records = Some(bt.records);
        Ok(())
    }

    fn evaluate(&mut self) -> AppResult<()> {
        let records = self.records.as_ref().ok_or_else(|| missing("forecast records"))?;
        let reports = metrics_by_model(records)?;
        io::write_json(&self.path("metrics.json"), &reports)?;
        io::write_text(&self.path("metrics.txt"), &metrics_table(&reports))?;

        let dm_cfg = self.cfg.evaluation.dm();
        let table = error_table(records);
        let mut full_sample = Vec::new();
        for (a, ea) in table.models.iter().zip(&table.errors) {
            for (b, eb) in table.models.iter().zip(&table.errors) {
                if a != b {
                    full_sample.push(dm_test(a, ea, b, eb, &dm_cfg)?);
                }
            }
        }
        let heatmap = match rejection_heatmap(records, self.cfg.evaluation.segment_size, &dm_cfg) {
            Ok(h) => h,
            Err(CoreError::InsufficientData { needed, got }) => {
                log::warn!("stage=evaluate heatmap skipped: {got} aligned test days, segments need {needed}");
                let k = table.models.len();
                RejectionHeatmap {
                    models: table.models.clone(),
                    counts: vec![vec![0; k]; k],
                    segments: 0,
                    segment_size: self.cfg.evaluation.segment_size,
                    significance: dm_cfg.significance,
                }
            }
            Err(e) => return Err(e.into()),
        };
        let mut csv = String::from("model");
        for m in &heatmap.models {
            csv.push(',');
            csv.push_str(m);
        }
        csv.push('\n');
        for (a, m) in heatmap.models.iter().enumerate() {
            csv.push_str(m);
            for b in 0..heatmap.models.len() {
                csv.push(',');
                csv.push_str(&heatmap.cell_label(a, b));
            }
            csv.push('\n');
        }
        io::write_text(&self.path("dm_heatmap.csv"), &csv)?;
        let report = DmReport { full_sample, heatmap };
        io::write_json(&self.path("dm.json"), &report)?;
        for r in &reports {
            log::info!("stage=evaluate model={} mae={:.6} mse={:.6}", r.model, r.mae, r.mse);
        }
        self.dm = Some(report);
        Ok(())
    }

    fn plot(&mut self) -> AppResult<()> {
        let records = self.records.as_ref().ok_or_else(|| missing("forecast records"))?;
        let dm = self.dm.as_ref().ok_or_else(|| missing("DM report"))?;
        io::write_text(&self.path("forecast_comparison.svg"), &svg::forecast_comparison(records)?)?;
        io::write_text(&self.path("dm_heatmap.svg"), &svg::dm_heatmap(&dm.heatmap))
    }

    /// Reruns the hybrid once per toggle with that component disabled and
    /// tabulates MAE/MSE/MAPE against the full configuration. Outputs go to
    /// `ablation/<toggle>/`; base-run artifacts are reused, never rewritten.
    pub fn ablate(&mut self, toggles: &[String]) -> AppResult<Vec<AblationRow>> {
        let variants: Vec<(String, AblationConfig)> = toggles
            .iter()
            .map(|t| Ok((t.clone(), self.cfg.ablation.without(t)?)))
            .collect::<AppResult<_>>()?;
        self.opts.resume = true;
        if self.previous.is_none() {
            self.previous = io::read_json::<RunManifest>(&self.path(MANIFEST)).ok();
        }
        self.run_through(Stage::Backtest)?;
        let records = self.records.as_ref().ok_or_else(|| missing("forecast records"))?;
        let base_recs: Vec<&ForecastRecord> = records.iter().filter(|r| r.model == HYBRID_LABEL).collect();
        let base = metrics(HYBRID_LABEL, &base_recs)?;
        let row = |variant: String, m: &MetricReport| AblationRow {
            variant,
            mae: m.mae,
            mse: m.mse,
            mape: m.mape,
            delta_mae: m.mae - base.mae,
            delta_mse: m.mse - base.mse,
            delta_mape: m.mape.zip(base.mape).map(|(a, b)| a - b),
        };
        let mut rows = vec![row("full".into(), &base)];
        let matrix = self.matrix.as_ref().ok_or_else(|| missing("feature matrix"))?;
        for (toggle, ablation) in variants {
            let start = Instant::now();
            let bt = hybrid_backtest(&self.cfg, matrix, &ablation)
                .map_err(|e| AppError::Stage { stage: "ablate", last_good: self.last_good.clone(), source: Box::new(e) })?;
            let dir = self.out.join("ablation").join(&toggle);
            io::write_forecasts(&dir.join("forecasts.csv"), &bt.records)?;
            let refs: Vec<&ForecastRecord> = bt.records.iter().collect();
            let m = metrics(HYBRID_LABEL, &refs)?;
            io::write_json(&dir.join("metrics.json"), &m)?;
            log::info!(
                "stage=ablate toggle={toggle} elapsed_ms={:.1} mae={:.6} delta_mae={:+.6}",
                start.elapsed().as_secs_f64() * 1e3,
                m.mae,
                m.mae - base.mae
            );
            rows.push(row(format!("w/o {toggle}"), &m));
        }
        io::write_json(&self.out.join("ablation").join("ablation.json"), &rows)?;
        io::write_text(&self.out.join("ablation").join("ablation.txt"), &ablation_table(&rows))?;
        Ok(rows)
    }
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<26} {:>12} {:>12} {:>9} {:>12} {:>12} {:>9}\n",
        "variant", "MAE", "MSE", "MAPE", "dMAE", "dMSE", "dMAPE"
    );
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        s.push_str(&format!(
            "{:<26} {:>12.6} {:>12.6} {:>9} {:>+12.6} {:>+12.6} {:>9}\n",
            r.variant,
            r.mae,
            r.mse,
            opt(r.mape),
            r.delta_mae,
            r.delta_mse,
            opt(r.delta_mape)
        ));
    }
    s
}
