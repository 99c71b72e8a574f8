//! Rating backends, the on-disk rating cache and bounded-parallel scoring.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use spotvol_core::rag::{
    score_weather, CacheKey, Embedder, MockProvider, Period, Provider, RatingCache, RetrievalIndex, ScoringConfig,
    WeatherRating,
};
use spotvol_core::{Error as CoreError, Result as CoreResult};

use crate::config::{ProviderConfig, ProviderKind};
use crate::error::{AppError, AppResult};

/// Chat-completions client: POSTs `{model, messages: [system, user]}` and
/// reads the first choice's message text.
#[derive(Debug)]
pub struct RemoteProvider {
    endpoint: String,
    model: String,
    token: Option<String>,
    max_retries: u32,
    backoff: Duration,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(cfg: &ProviderConfig) -> AppResult<Self> {
        let token = std::env::var(&cfg.token_env).ok().filter(|t| !t.is_empty());
        if token.is_none() {
            log::warn!("provider token variable {} is unset; sending requests without authorization", cfg.token_env);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| AppError::Provider(e.to_string()))?;
        Ok(Self {
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            token,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(250),
            client,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, (bool, String)> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((retry, format!("HTTP {status}")));
        }
        let json: serde_json::Value = resp.json().map_err(|e| (false, format!("invalid JSON reply: {e}")))?;
        extract_text(&json).ok_or_else(|| (false, "reply has no message text".to_string()))
    }
}

fn extract_text(v: &serde_json::Value) -> Option<String> {
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/message/content"),
        v.pointer("/content"),
    ];
    candidates.into_iter().flatten().find_map(|c| c.as_str().map(String::from))
}

impl Provider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.model, self.endpoint)
    }

    fn complete(&self, system: &str, user: &str) -> CoreResult<String> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    log::warn!("provider attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(CoreError::Provider(last))
    }
}

/// The configured backend; `offline` forces the mock.
pub fn build_provider(cfg: &ProviderConfig, offline: bool) -> AppResult<Box<dyn Provider + Send + Sync>> {
    if offline || cfg.kind == ProviderKind::OfflineMock {
        let mut mock = MockProvider::new(cfg.rules.clone());
        mock.fixed_response = cfg.fixed_response.clone();
        Ok(Box::new(mock))
    } else {
        Ok(Box::new(RemoteProvider::new(cfg)?))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: CacheKey,
    rating: WeatherRating,
}

/// Append-only JSON-lines rating cache; later lines win.
#[derive(Debug)]
pub struct JsonlCache {
    path: PathBuf,
    entries: BTreeMap<CacheKey, WeatherRating>,
}

impl JsonlCache {
    pub fn open(path: &Path) -> AppResult<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let l: CacheLine = serde_json::from_str(line)
                    .map_err(|e| AppError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
                entries.insert(l.key, l.rating);
            }
        }
        Ok(Self { path: path.to_path_buf(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl RatingCache for JsonlCache {
    fn get(&self, key: &CacheKey) -> Option<WeatherRating> {
        self.entries.get(key).cloned()
    }

    fn put(&mut self, key: CacheKey, rating: &WeatherRating) -> CoreResult<()> {
        let mut stored = rating.clone();
        stored.cached = false;
        let line = CacheLine { key, rating: stored };
        let text = serde_json::to_string(&line).map_err(|e| CoreError::Provider(e.to_string()))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CoreError::Provider(format!("{}: {e}", self.path.display())))?;
        writeln!(f, "{text}").map_err(|e| CoreError::Provider(e.to_string()))?;
        self.entries.insert(line.key, line.rating);
        Ok(())
    }
}

/// Serializes cache access across scoring threads.
struct Locked<'a, C>(&'a Mutex<C>);

impl<C: RatingCache> RatingCache for Locked<'_, C> {
    fn get(&self, key: &CacheKey) -> Option<WeatherRating> {
        self.0.lock().expect("cache lock").get(key)
    }

    fn put(&mut self, key: CacheKey, rating: &WeatherRating) -> CoreResult<()> {
        self.0.lock().expect("cache lock").put(key, rating)
    }
}

pub struct RatingJob<'a> {
    pub index: &'a RetrievalIndex,
    pub embedder: &'a (dyn Embedder + Sync),
    pub provider: &'a (dyn Provider + Sync),
    pub template: &'a str,
    pub scoring: &'a ScoringConfig,
}

/// Scores every period with at most `parallelism` requests in flight.
/// Results keep the order of `periods`; the first failure is returned.
pub fn rate_periods<C: RatingCache + Send>(
    job: &RatingJob<'_>,
    periods: &[Period],
    cache: &Mutex<C>,
    parallelism: usize,
) -> CoreResult<Vec<WeatherRating>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CoreResult<WeatherRating>>>> = Mutex::new(vec![None; periods.len()]);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= periods.len() {
            break;
        }
        let mut c = Locked(cache);
        let r = score_weather(periods[i], job.index, job.embedder, job.provider, job.template, job.scoring, &mut c);
        results.lock().expect("results lock")[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 0..parallelism.clamp(1, periods.len().max(1)) {
            s.spawn(worker);
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every period scored"))
        .collect()
}
