//! Synthetic multi-factor fixture: half-hourly prices whose daily variance
//! responds to persistence, weather, the supply margin, a regional stress
//! factor and a monthly weather-severity level that is written into a text
//! corpus.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::features::{Column, ExogenousTable, EXOGENOUS_SCHEMA};
use crate::market_data::IntradayPriceSeries;
use crate::rag::{MockProvider, Period};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub days: usize,
    pub slots_per_day: usize,
    pub seed: u64,
    /// Expected jumps per day.
    pub jump_rate: f64,
    /// Prices overwritten with non-positive values to exercise cleaning.
    pub nonpositive_prices: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            days: 400,
            slots_per_day: 48,
            seed: 7,
            jump_rate: 0.05,
            nonpositive_prices: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub prices: IntradayPriceSeries,
    /// Every exogenous column except `weather_rating`.
    pub exogenous: ExogenousTable,
    /// `(year, report text)` per calendar year.
    pub corpus: Vec<(String, String)>,
    pub severity: BTreeMap<Period, u8>,
    /// Log of each day's diffusive variance.
    pub log_variance: Vec<f64>,
}

const FILLER: [&str; 4] = [
    "Rainfall totals sat close to the long-term average in most districts",
    "Reservoir levels were broadly unchanged over the period",
    "Overnight temperatures tracked the seasonal norm",
    "Coastal observers logged routine conditions for the season",
];
const BASE_LOG_VARIANCE: f64 = 3.0;

struct Ar1 {
    phi: f64,
    state: f64,
}

impl Ar1 {
    /// Unit stationary variance.
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.state = self.phi * self.state + libm::sqrt(1.0 - self.phi * self.phi) * z;
        self.state
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn severity_sentence(period: &Period, severity: u8, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = MockProvider::default_rules().into_iter().map(|r| r.keyword).collect();
    words.shuffle(rng);
    let name = period.describe();
    match severity {
        1 => alloc::format!("In {name} conditions were mild and settled across the state"),
        s => {
            let picked = &words[..(s - 1) as usize];
            alloc::format!("In {name} the state endured {}", picked.join(" and "))
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.days;
    let m = cfg.slots_per_day;
    let days: Vec<NaiveDate> = (0..n).map(|i| cfg.start + chrono::Duration::days(i as i64)).collect();

    let mut severity = BTreeMap::new();
    for d in &days {
        let p = Period::of_day(*d, true);
        if !severity.contains_key(&p) {
            severity.insert(p, rng.random_range(1..=5u8));
        }
    }

    // Daily drivers, each with unit variance.
    let (mut wind, mut temp_anom, mut margin, mut regional) =
        (Ar1 { phi: 0.3, state: 0.0 }, Ar1 { phi: 0.4, state: 0.0 }, Ar1 { phi: 0.3, state: 0.0 }, Ar1 { phi: 0.3, state: 0.0 });
    let mut cols: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut h = Vec::with_capacity(n);
    let mut h_prev = BASE_LOG_VARIANCE;
    let mut retail = 120.0;
    let mut weather_stress = Vec::with_capacity(n);
    let mut margin_stress = Vec::with_capacity(n);
    let mut regional_stress = Vec::with_capacity(n);
    for d in &days {
        let season = libm::cos(2.0 * core::f64::consts::PI * (d.ordinal() as f64 - 15.0) / 365.25);
        let w = wind.step(&mut rng);
        let a = temp_anom.step(&mut rng);
        let g = margin.step(&mut rng);
        let q = regional.step(&mut rng);
        let temp = 19.0 + 6.0 * season + 4.0 * a;
        let demand = 8000.0 + 900.0 * season * season + 250.0 * a.abs() + 120.0 * normal(&mut rng);
        let supply = demand + 1500.0 + 500.0 * g;
        retail += 0.3 * normal(&mut rng);
        cols.entry("air_temp_c").or_default().push(temp);
        cols.entry("wind_speed_ms").or_default().push(6.0 + 2.5 * w);
        cols.entry("rel_humidity_pct").or_default().push(60.0 - 8.0 * w + 6.0 * normal(&mut rng));
        cols.entry("mslp_hpa").or_default().push(1013.0 - 4.0 * w + 3.0 * normal(&mut rng));
        cols.entry("supply_mw").or_default().push(supply);
        cols.entry("demand_mw").or_default().push(demand);
        cols.entry("retail_price").or_default().push(retail);
        for (name, level) in [("price_vic", 55.0), ("price_qld", 50.0), ("price_sa", 70.0), ("price_tas", 45.0)] {
            cols.entry(name).or_default().push(level + 12.0 * q + 4.0 * normal(&mut rng));
        }
        // |N(0,1)| has mean √(2/π) and variance 1 − 2/π.
        weather_stress.push(0.6 * w + 0.6 * (a.abs() - 0.798) / 0.603);
        margin_stress.push(-g);
        regional_stress.push(q);
    }
    for t in 0..n {
        let ht = if t == 0 {
            BASE_LOG_VARIANCE
        } else {
            let s = f64::from(severity[&Period::of_day(days[t - 1], true)]) - 3.0;
            BASE_LOG_VARIANCE
                + 0.5 * (h_prev - BASE_LOG_VARIANCE)
                + 0.35 * weather_stress[t - 1]
                + 0.35 * margin_stress[t - 1]
                + 0.35 * regional_stress[t - 1]
                + 0.3 * s
                + 0.1 * normal(&mut rng)
        };
        h.push(ht);
        h_prev = ht;
    }

    // Intraday prices: diurnal shape plus a slowly mean-reverting component
    // whose per-slot variance spreads the day's variance evenly.
    let mut prices = Vec::with_capacity(n * m);
    let mut x = 0.0;
    let rho = 0.98;
    for t in 0..n {
        let sigma = libm::sqrt(libm::exp(h[t]) / m as f64);
        for k in 0..m {
            let mut step = sigma * normal(&mut rng);
            if rng.random_bool((cfg.jump_rate / m as f64).clamp(0.0, 1.0)) {
                step += 4.0 * libm::sqrt(libm::exp(h[t])) * normal(&mut rng);
            }
            x = rho * x + step;
            let diurnal = 18.0 * libm::sin(core::f64::consts::PI * (k as f64 - 12.0) / 24.0).max(-0.5);
            prices.push(90.0 + diurnal + x);
        }
    }
    for _ in 0..cfg.nonpositive_prices {
        let i = rng.random_range(m..n * m);
        prices[i] = if rng.random_bool(0.5) { 0.0 } else { -rng.random_range(1.0..30.0) };
    }
    let series = IntradayPriceSeries::new("NSW1", m, days.clone(), prices)?;

    let columns = EXOGENOUS_SCHEMA
        .iter()
        .filter_map(|&(name, unit, group)| cols.remove(name).map(|v| Column::new(name, unit, group, v)))
        .collect();
    let exogenous = ExogenousTable::new(days.clone(), columns)?;

    let mut corpus: Vec<(String, String)> = Vec::new();
    for (period, &s) in &severity {
        let year = alloc::format!("{}", period.year());
        if corpus.last().is_none_or(|(y, _)| *y != year) {
            corpus.push((year.clone(), alloc::format!("Annual weather summary for {year}. ")));
        }
        let text = &mut corpus.last_mut().expect("pushed above").1;
        text.push_str(&severity_sentence(period, s, &mut rng));
        text.push_str(". ");
        text.push_str(FILLER[rng.random_range(0..FILLER.len())]);
        text.push_str(". ");
    }
    Ok(SynthData { prices: series, exogenous, corpus, severity, log_variance: h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rag::{build_index, chunk, score_weather, HashedTrigramEmbedder, MemoryCache, ScoringConfig, PROMPT_TEMPLATE};

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.prices, b.prices);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.prices.len_days(), 400);
        assert_eq!(a.prices.nonpositive_positions().len(), cfg.nonpositive_prices);
        assert_eq!(a.exogenous.columns.len(), 11);
        assert_eq!(a.corpus.len(), 2);
    }

    #[test]
    fn offline_rating_recovers_planted_severity() {
        let data = generate(&SynthConfig::default()).unwrap();
        let e = HashedTrigramEmbedder::default();
        let mut chunks = Vec::new();
        for (year, text) in &data.corpus {
            chunks.extend(chunk(year, text, 240, 120).unwrap());
        }
        let index = build_index(chunks, &e).unwrap();
        let provider = MockProvider::new(MockProvider::default_rules());
        let cfg = ScoringConfig { top_k: 4, question: String::from("Weather severity in {period}") };
        let mut cache = MemoryCache::default();
        for (period, &s) in &data.severity {
            let r = score_weather(*period, &index, &e, &provider, PROMPT_TEMPLATE, &cfg, &mut cache).unwrap();
            assert_eq!(r.score(), s, "{period}: {:?}", r.top_chunks);
        }
    }
}
