use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{retrieve, Embedder, Provider, RetrievalIndex};
use crate::{Error, Result};

pub const PROMPT_TEMPLATE: &str = include_str!("prompt_v1.txt");
pub const PROMPT_VERSION: &str = "v1";
const SYSTEM: &str = "You are a careful analyst of weather reports.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Period {
    Year(i32),
    Month(i32, u32),
}

const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October", "November", "December",
];

impl Period {
    pub fn of_day(day: NaiveDate, monthly: bool) -> Self {
        if monthly {
            Period::Month(day.year(), day.month())
        } else {
            Period::Year(day.year())
        }
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        match *self {
            Period::Year(y) => day.year() == y,
            Period::Month(y, m) => day.year() == y && day.month() == m,
        }
    }

    pub fn year(&self) -> i32 {
        match *self {
            Period::Year(y) | Period::Month(y, _) => y,
        }
    }

    pub fn overlaps(&self, other: &Period) -> bool {
        match (*self, *other) {
            (Period::Month(a, m), Period::Month(b, n)) => a == b && m == n,
            _ => self.year() == other.year(),
        }
    }

    /// Natural-language form used in prompts ("March 2013", "2013").
    pub fn describe(&self) -> String {
        match *self {
            Period::Year(y) => alloc::format!("{y}"),
            Period::Month(y, m) => alloc::format!("{} {y}", MONTHS[(m - 1) as usize]),
        }
    }
}

impl core::fmt::Display for Period {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            Period::Year(y) => write!(f, "{y}"),
            Period::Month(y, m) => write!(f, "{y}-{m:02}"),
        }
    }
}

impl core::str::FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(alloc::format!("invalid period {s:?}"));
        match s.split_once('-') {
            None => s.parse().map(Period::Year).map_err(|_| bad()),
            Some((y, m)) => {
                let y = y.parse().map_err(|_| bad())?;
                let m: u32 = m.parse().map_err(|_| bad())?;
                if (1..=12).contains(&m) {
                    Ok(Period::Month(y, m))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl TryFrom<String> for Period {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Period> for String {
    fn from(p: Period) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRating")]
pub struct WeatherRating {
    pub period: Period,
    score: u8,
    pub rationale: String,
    pub top_chunks: Vec<String>,
    pub provider: String,
    #[serde(default)]
    pub cached: bool,
}

#[derive(Deserialize)]
struct RawRating {
    period: Period,
    score: i64,
    rationale: String,
    top_chunks: Vec<String>,
    provider: String,
    #[serde(default)]
    cached: bool,
}

impl TryFrom<RawRating> for WeatherRating {
    type Error = Error;
    fn try_from(r: RawRating) -> Result<Self> {
        let mut w = WeatherRating::new(r.period, r.score, r.rationale, r.top_chunks, r.provider)?;
        w.cached = r.cached;
        Ok(w)
    }
}

impl WeatherRating {
    pub fn new(period: Period, score: i64, rationale: String, top_chunks: Vec<String>, provider: String) -> Result<Self> {
        if !(1..=5).contains(&score) {
            return Err(Error::RatingOutOfRange(score));
        }
        Ok(Self { period, score: score as u8, rationale, top_chunks, provider, cached: false })
    }

    pub fn score(&self) -> u8 {
        self.score
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub period: Period,
    pub prompt_hash: String,
    pub provider: String,
}

pub trait RatingCache {
    fn get(&self, key: &CacheKey) -> Option<WeatherRating>;
    fn put(&mut self, key: CacheKey, rating: &WeatherRating) -> Result<()>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryCache {
    pub entries: BTreeMap<CacheKey, WeatherRating>,
}

impl RatingCache for MemoryCache {
    fn get(&self, key: &CacheKey) -> Option<WeatherRating> {
        self.entries.get(key).cloned()
    }

    fn put(&mut self, key: CacheKey, rating: &WeatherRating) -> Result<()> {
        self.entries.insert(key, rating.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub top_k: usize,
    pub question: String,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { top_k: 4, question: String::from("How severe were weather conditions for electricity supply and demand in {period}?") }
    }
}

pub fn render_prompt(template: &str, period: &Period, question: &str, context: &str) -> String {
    let p = period.describe();
    template
        .replace("{question}", &question.replace("{period}", &p))
        .replace("{period}", &p)
        .replace("{context}", context)
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes()).iter().map(|b| alloc::format!("{b:02x}")).collect()
}

/// Retrieves context for `period`, asks `provider` and parses the score.
/// Cached by (period, hash of the rendered prompt, provider id).
pub fn score_weather(
    period: Period,
    index: &RetrievalIndex,
    embedder: &dyn Embedder,
    provider: &dyn Provider,
    template: &str,
    config: &ScoringConfig,
    cache: &mut dyn RatingCache,
) -> Result<WeatherRating> {
    let query = config.question.replace("{period}", &period.describe());
    let hits = retrieve(index, embedder, &query, config.top_k)?;
    let context: String = hits
        .iter()
        .map(|h| alloc::format!("[{}] {}\n", h.chunk.label(), h.chunk.text.replace('\n', " ")))
        .collect();
    let prompt = render_prompt(template, &period, &config.question, &context);
    let key = CacheKey { period, prompt_hash: prompt_hash(&prompt), provider: provider.id() };
    if let Some(mut hit) = cache.get(&key) {
        hit.cached = true;
        return Ok(hit);
    }
    let reply = provider.complete(SYSTEM, &prompt)?;
    let score = super::parse_score(&reply)?;
    let rating = WeatherRating::new(
        period,
        i64::from(score),
        reply.trim().to_string(),
        hits.iter().map(|h| h.chunk.label()).collect(),
        provider.id(),
    )?;
    cache.put(key, &rating)?;
    Ok(rating)
}

/// Broadcasts ratings to days; days outside every period are NaN.
pub fn ratings_to_feature(ratings: &[WeatherRating], days: &[NaiveDate]) -> Result<Vec<f64>> {
    for (i, a) in ratings.iter().enumerate() {
        for b in &ratings[i + 1..] {
            if a.period.overlaps(&b.period) {
                return Err(Error::OverlappingPeriods(a.period.to_string(), b.period.to_string()));
            }
        }
    }
    Ok(days
        .iter()
        .map(|d| ratings.iter().find(|r| r.period.contains(*d)).map_or(f64::NAN, |r| f64::from(r.score)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rag::{build_index, chunk, HashedTrigramEmbedder, MockProvider};
    use alloc::vec;

    fn corpus_index() -> RetrievalIndex {
        let text = "In January 2013 a heatwave and bushfire gripped the state. \
                    In February 2013 conditions were mild. \
                    In March 2013 a storm brought flooding and more storm damage.";
        build_index(chunk("2013", text, 80, 30).unwrap(), &HashedTrigramEmbedder::default()).unwrap()
    }

    #[test]
    fn period_round_trip_and_overlap() {
        for p in [Period::Year(2010), Period::Month(2013, 3)] {
            assert_eq!(p.to_string().parse::<Period>().unwrap(), p);
        }
        assert!(Period::Year(2010).overlaps(&Period::Month(2010, 5)));
        assert!(!Period::Month(2010, 4).overlaps(&Period::Month(2010, 5)));
        assert!("2013-13".parse::<Period>().is_err());
    }

    #[test]
    fn broadcast_missing_and_overlap() {
        let r = |p, s| WeatherRating::new(p, s, String::new(), vec![], "t".into()).unwrap();
        let days: Vec<NaiveDate> = [(2010, 3, 1), (2010, 12, 31), (2012, 6, 1)]
            .iter()
            .map(|&(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap())
            .collect();
        let f = ratings_to_feature(&[r(Period::Year(2010), 3)], &days).unwrap();
        assert_eq!(&f[..2], &[3.0, 3.0]);
        assert!(f[2].is_nan());
        assert!(matches!(
            ratings_to_feature(&[r(Period::Year(2010), 3), r(Period::Year(2010), 2)], &days),
            Err(Error::OverlappingPeriods(..))
        ));
        assert!(WeatherRating::new(Period::Year(2010), 6, String::new(), vec![], "t".into()).is_err());
    }

    #[test]
    fn scoring_is_cached_and_deterministic() {
        let idx = corpus_index();
        let e = HashedTrigramEmbedder::default();
        let provider = MockProvider::new(MockProvider::default_rules());
        let mut cache = MemoryCache::default();
        let cfg = ScoringConfig::default();
        let first = score_weather(Period::Month(2013, 1), &idx, &e, &provider, PROMPT_TEMPLATE, &cfg, &mut cache).unwrap();
        assert_eq!(first.score(), 3);
        assert!(!first.cached);
        let second = score_weather(Period::Month(2013, 1), &idx, &e, &provider, PROMPT_TEMPLATE, &cfg, &mut cache).unwrap();
        assert!(second.cached);
        assert_eq!(WeatherRating { cached: false, ..second }, first);
        assert_eq!(provider.calls(), 1);
        let mild = score_weather(Period::Month(2013, 2), &idx, &e, &provider, PROMPT_TEMPLATE, &cfg, &mut cache).unwrap();
        assert_eq!(mild.score(), 1);
    }

    #[test]
    fn out_of_range_reply_is_an_error() {
        let idx = corpus_index();
        let mut provider = MockProvider::default();
        provider.fixed_response = Some("7/5, extreme!".into());
        let r = score_weather(
            Period::Year(2013),
            &idx,
            &HashedTrigramEmbedder::default(),
            &provider,
            PROMPT_TEMPLATE,
            &ScoringConfig::default(),
            &mut MemoryCache::default(),
        );
        assert!(matches!(r, Err(Error::RatingOutOfRange(7))));
    }
}
