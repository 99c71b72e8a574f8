//! Half-hourly price panels: cleaning, intraday returns and seasonal
//! demeaning.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::stats::median;
use crate::{Error, Result};

/// Intraday slots in a half-hourly trading day.
pub const HALF_HOURLY_SLOTS: usize = 48;

/// Calendar-aligned `days × slots_per_day` grid of spot prices in $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayPriceSeries {
    region: String,
    slots_per_day: usize,
    days: Vec<NaiveDate>,
    prices: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotPosition {
    pub day: NaiveDate,
    pub slot: usize,
}

impl IntradayPriceSeries {
    /// `prices` is row-major: all slots of the first day, then the next day.
    pub fn new(
        region: impl Into<String>,
        slots_per_day: usize,
        days: Vec<NaiveDate>,
        prices: Vec<f64>,
    ) -> Result<Self> {
        if slots_per_day == 0 {
            return Err(Error::InvalidInput("slots_per_day must be positive".into()));
        }
        if prices.len() != days.len() * slots_per_day {
            return Err(Error::DimensionMismatch {
                expected: days.len() * slots_per_day,
                got: prices.len(),
            });
        }
        if let Some(w) = days.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(alloc::format!(
                "days must be strictly increasing ({} then {})",
                w[0],
                w[1]
            )));
        }
        if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!(
                "non-finite price at {} slot {}",
                days[i / slots_per_day],
                i % slots_per_day
            )));
        }
        Ok(Self {
            region: region.into(),
            slots_per_day,
            days,
            prices,
        })
    }

    pub fn region(&self) -> &str {
        &self.region
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn len_days(&self) -> usize {
        self.days.len()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn day_prices(&self, day_index: usize) -> &[f64] {
        let m = self.slots_per_day;
        &self.prices[day_index * m..(day_index + 1) * m]
    }

    pub fn price(&self, day_index: usize, slot: usize) -> f64 {
        self.prices[day_index * self.slots_per_day + slot]
    }

    pub fn nonpositive_positions(&self) -> Vec<SlotPosition> {
        self.prices
            .iter()
            .enumerate()
            .filter(|(_, &p)| p <= 0.0)
            .map(|(i, _)| self.position(i))
            .collect()
    }

    pub fn is_clean(&self) -> bool {
        self.prices.iter().all(|&p| p > 0.0)
    }

    fn position(&self, flat: usize) -> SlotPosition {
        SlotPosition {
            day: self.days[flat / self.slots_per_day],
            slot: flat % self.slots_per_day,
        }
    }

    /// Last price of each day.
    pub fn closes(&self) -> Vec<f64> {
        (0..self.days.len())
            .map(|d| self.price(d, self.slots_per_day - 1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub replaced_count: usize,
    pub replaced_positions: Vec<SlotPosition>,
    pub method: String,
}

/// Replaces every non-positive price by the nearest-in-time strictly
/// positive one. Equidistant neighbours resolve to the earlier observation.
pub fn clean_nonpositive(
    series: &IntradayPriceSeries,
) -> Result<(IntradayPriceSeries, CleaningReport)> {
    let p = &series.prices;
    let n = p.len();
    let mut prev = vec![None; n];
    let mut last = None;
    for i in 0..n {
        if p[i] > 0.0 {
            last = Some(i);
        }
        prev[i] = last;
    }
    let mut next = vec![None; n];
    let mut upcoming = None;
    for i in (0..n).rev() {
        if p[i] > 0.0 {
            upcoming = Some(i);
        }
        next[i] = upcoming;
    }
    let mut cleaned = p.clone();
    let mut replaced = Vec::new();
    for i in 0..n {
        if p[i] > 0.0 {
            continue;
        }
        let source = match (prev[i], next[i]) {
            (Some(a), Some(b)) => {
                if i - a <= b - i {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::Unrecoverable),
        };
        cleaned[i] = p[source];
        replaced.push(series.position(i));
    }
    let report = CleaningReport {
        replaced_count: replaced.len(),
        replaced_positions: replaced,
        method: "nearest-positive (ties to earlier)".into(),
    };
    Ok((
        IntradayPriceSeries {
            prices: cleaned,
            ..series.clone()
        },
        report,
    ))
}

/// Per-day intraday price differences.
///
/// The first sample day carries `M - 1` returns (slots `1..M`); every later
/// day carries `M`, its first return measured from the previous day's close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub slots_per_day: usize,
    pub days: Vec<NaiveDate>,
    pub returns: Vec<Vec<f64>>,
    pub demeaned: bool,
}

impl ReturnPanel {
    /// Intraday slot that the `k`-th return of day `d` ends in.
    pub fn slot_of(&self, d: usize, k: usize) -> usize {
        k + self.slots_per_day - self.returns[d].len()
    }

    /// Sum of each day's returns (the close-to-close move, except on the
    /// first day where it is close minus open).
    pub fn daily_sums(&self) -> Vec<f64> {
        self.returns.iter().map(|r| r.iter().sum()).collect()
    }
}

pub fn intraday_returns(series: &IntradayPriceSeries) -> Result<ReturnPanel> {
    let m = series.slots_per_day;
    if m < 2 {
        return Err(Error::InvalidInput(
            "at least two intraday slots are needed to form returns".into(),
        ));
    }
    if !series.is_clean() {
        return Err(Error::InvalidInput(
            "series must be cleaned before computing returns".into(),
        ));
    }
    let mut returns = Vec::with_capacity(series.days.len());
    for d in 0..series.days.len() {
        let prices = series.day_prices(d);
        let mut r = Vec::with_capacity(m);
        if d > 0 {
            r.push(prices[0] - series.price(d - 1, m - 1));
        }
        r.extend(prices.windows(2).map(|w| w[1] - w[0]));
        returns.push(r);
    }
    Ok(ReturnPanel {
        slots_per_day: m,
        days: series.days.clone(),
        returns,
        demeaned: false,
    })
}

/// Inclusive calendar range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day <= self.end
    }
}

/// (month 1–12, weekday 0=Mon..6=Sun, intraday slot)
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub month: u8,
    pub weekday: u8,
    pub slot: u16,
}

impl CellKey {
    pub fn new(day: NaiveDate, slot: usize) -> Self {
        Self {
            month: day.month() as u8,
            weekday: day.weekday().num_days_from_monday() as u8,
            slot: slot as u16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalProfile {
    pub slots_per_day: usize,
    pub medians: BTreeMap<CellKey, f64>,
    pub window: DateRange,
}

impl SeasonalProfile {
    pub fn get(&self, day: NaiveDate, slot: usize) -> Option<f64> {
        self.medians.get(&CellKey::new(day, slot)).copied()
    }
}

/// Median return per (month, weekday, slot) over the days in `window`.
pub fn seasonal_profile(panel: &ReturnPanel, window: DateRange) -> Result<SeasonalProfile> {
    let mut cells: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for (d, &day) in panel.days.iter().enumerate() {
        if !window.contains(day) {
            continue;
        }
        for (k, &r) in panel.returns[d].iter().enumerate() {
            cells
                .entry(CellKey::new(day, panel.slot_of(d, k)))
                .or_default()
                .push(r);
        }
    }
    if cells.is_empty() {
        return Err(Error::InvalidInput(
            "seasonal profile window contains no returns".into(),
        ));
    }
    Ok(SeasonalProfile {
        slots_per_day: panel.slots_per_day,
        medians: cells.into_iter().map(|(k, v)| (k, median(&v))).collect(),
        window,
    })
}

/// Subtracts the seasonal median from every return. Returns the demeaned
/// panel and the cells that had no profile entry (those subtract zero).
pub fn demean(panel: &ReturnPanel, profile: &SeasonalProfile) -> Result<(ReturnPanel, Vec<CellKey>)> {
    if panel.demeaned {
        return Err(Error::InvalidInput("panel is already demeaned".into()));
    }
    if panel.slots_per_day != profile.slots_per_day {
        return Err(Error::SlotMismatch {
            panel: panel.slots_per_day,
            profile: profile.slots_per_day,
        });
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(panel.returns.len());
    for (d, &day) in panel.days.iter().enumerate() {
        let row = panel.returns[d]
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let key = CellKey::new(day, panel.slot_of(d, k));
                match profile.medians.get(&key) {
                    Some(mu) => r - mu,
                    None => {
                        missing.push(key);
                        r
                    }
                }
            })
            .collect();
        out.push(row);
    }
    missing.sort();
    missing.dedup();
    Ok((
        ReturnPanel {
            slots_per_day: panel.slots_per_day,
            days: panel.days.clone(),
            returns: out,
            demeaned: true,
        },
        missing,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn single_day(prices: &[f64]) -> IntradayPriceSeries {
        IntradayPriceSeries::new("NSW", prices.len(), vec![day(2010, 1, 1)], prices.to_vec()).unwrap()
    }

    /// Brute force: scan outward from each position.
    fn nearest_positive_oracle(p: &[f64]) -> Vec<f64> {
        (0..p.len())
            .map(|i| {
                if p[i] > 0.0 {
                    return p[i];
                }
                for dist in 1..p.len() {
                    if i >= dist && p[i - dist] > 0.0 {
                        return p[i - dist];
                    }
                    if i + dist < p.len() && p[i + dist] > 0.0 {
                        return p[i + dist];
                    }
                }
                f64::NAN
            })
            .collect()
    }

    #[test]
    fn tie_goes_to_earlier_neighbour() {
        let (c, report) = clean_nonpositive(&single_day(&[10.0, -1.0, 20.0])).unwrap();
        assert_eq!(c.prices(), &[10.0, 10.0, 20.0]);
        assert_eq!(report.replaced_count, 1);
        assert_eq!(report.replaced_positions[0].slot, 1);
    }

    #[test]
    fn interior_run_splits_between_neighbours() {
        let input = [5.0, 0.0, 0.0, 8.0];
        let (c, _) = clean_nonpositive(&single_day(&input)).unwrap();
        assert_eq!(c.prices(), nearest_positive_oracle(&input).as_slice());
        assert_eq!(c.prices(), &[5.0, 5.0, 8.0, 8.0]);
    }

    #[test]
    fn all_positive_is_identity() {
        let s = single_day(&[1.0, 2.0, 3.0]);
        let (c, report) = clean_nonpositive(&s).unwrap();
        assert_eq!(c, s);
        assert_eq!(report.replaced_count, 0);
    }

    #[test]
    fn all_nonpositive_is_unrecoverable() {
        assert_eq!(
            clean_nonpositive(&single_day(&[0.0, -3.0])).unwrap_err(),
            Error::Unrecoverable
        );
    }

    #[test]
    fn constructor_rejects_unordered_days() {
        let err = IntradayPriceSeries::new("NSW", 1, vec![day(2010, 1, 2), day(2010, 1, 1)], vec![1.0, 1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn returns_first_day_and_overnight_boundary() {
        let r = intraday_returns(&single_day(&[10.0, 10.1, 9.9, 10.2])).unwrap();
        let expected = [0.1, -0.2, 0.3];
        assert_eq!(r.returns[0].len(), 3);
        for (a, b) in r.returns[0].iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let s = IntradayPriceSeries::new(
            "NSW",
            3,
            vec![day(2010, 1, 1), day(2010, 1, 2)],
            vec![18.0, 19.0, 20.0, 21.0, 22.0, 23.0],
        )
        .unwrap();
        let r = intraday_returns(&s).unwrap();
        assert_eq!(r.returns[1], vec![1.0, 1.0, 1.0]);
        assert_eq!(r.slot_of(0, 0), 1);
        assert_eq!(r.slot_of(1, 0), 0);
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let s = IntradayPriceSeries::new("NSW", 48, vec![day(2010, 1, 1), day(2010, 1, 2)], vec![30.0; 96]).unwrap();
        let r = intraday_returns(&s).unwrap();
        assert!(r.returns.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_slot_days_are_rejected() {
        let s = IntradayPriceSeries::new("NSW", 1, vec![day(2010, 1, 1)], vec![5.0]).unwrap();
        assert!(intraday_returns(&s).is_err());
    }

    fn panel_from(days: Vec<NaiveDate>, returns: Vec<Vec<f64>>) -> ReturnPanel {
        ReturnPanel {
            slots_per_day: returns.iter().map(Vec::len).max().unwrap(),
            days,
            returns,
            demeaned: false,
        }
    }

    #[test]
    fn profile_takes_cell_median_and_respects_window() {
        // Mondays in January 2018: the 1st, 8th, 15th, 22nd.
        let days = vec![day(2018, 1, 1), day(2018, 1, 8), day(2018, 1, 15), day(2018, 1, 22)];
        let panel = panel_from(days.clone(), vec![vec![1.0], vec![2.0], vec![100.0], vec![-50.0]]);
        let window = DateRange { start: days[0], end: days[2] };
        let profile = seasonal_profile(&panel, window).unwrap();
        assert_eq!(profile.get(days[0], 0), Some(2.0));
        assert_eq!(profile.medians.len(), 1);
    }

    #[test]
    fn empty_window_is_an_error() {
        let panel = panel_from(vec![day(2018, 1, 1)], vec![vec![1.0]]);
        let window = DateRange { start: day(2019, 1, 1), end: day(2019, 2, 1) };
        assert!(seasonal_profile(&panel, window).is_err());
    }

    #[test]
    fn demean_subtracts_profile() {
        let days = vec![day(2018, 1, 1)];
        let panel = panel_from(days.clone(), vec![vec![0.5, 0.7]]);
        let mut medians = BTreeMap::new();
        medians.insert(CellKey::new(days[0], 0), 0.2);
        let profile = SeasonalProfile {
            slots_per_day: 2,
            medians,
            window: DateRange { start: days[0], end: days[0] },
        };
        let (out, missing) = demean(&panel, &profile).unwrap();
        assert_abs_diff_eq!(out.returns[0][0], 0.3, epsilon = 1e-15);
        assert_eq!(out.returns[0][1], 0.7);
        assert_eq!(missing, vec![CellKey::new(days[0], 1)]);
        assert!(out.demeaned);
        assert!(demean(&out, &profile).is_err());
    }

    #[test]
    fn demean_rejects_slot_mismatch() {
        let days = vec![day(2018, 1, 1)];
        let panel = panel_from(days.clone(), vec![vec![0.5, 0.7]]);
        let profile = SeasonalProfile {
            slots_per_day: 48,
            medians: BTreeMap::new(),
            window: DateRange { start: days[0], end: days[0] },
        };
        assert!(matches!(demean(&panel, &profile), Err(Error::SlotMismatch { .. })));
    }

    fn arb_prices() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![3 => 0.5f64..200.0, 1 => -50.0f64..=0.0], 2..60)
            .prop_filter("needs a positive price", |v| v.iter().any(|&p| p > 0.0))
    }

    proptest! {
        #[test]
        fn cleaning_matches_oracle_and_is_idempotent(p in arb_prices()) {
            let s = single_day(&p);
            let (once, report) = clean_nonpositive(&s).unwrap();
            let expected = nearest_positive_oracle(&p);
            prop_assert_eq!(once.prices(), expected.as_slice());
            prop_assert!(once.is_clean());
            prop_assert_eq!(report.replaced_count, report.replaced_positions.len());
            let (twice, r2) = clean_nonpositive(&once).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(r2.replaced_count, 0);
        }

        #[test]
        fn returns_telescope_to_close_move(
            p in prop::collection::vec(1.0f64..100.0, 3 * 8),
        ) {
            let days = vec![day(2011, 3, 1), day(2011, 3, 2), day(2011, 3, 3)];
            let s = IntradayPriceSeries::new("NSW", 8, days, p.clone()).unwrap();
            let r = intraday_returns(&s).unwrap();
            for d in 1..3 {
                prop_assert_eq!(r.returns[d].len(), 8);
                let sum: f64 = r.returns[d].iter().sum();
                prop_assert!((sum - (p[d * 8 + 7] - p[d * 8 - 1])).abs() < 1e-9);
            }
        }

        #[test]
        fn demean_is_invertible_and_profile_order_free(
            vals in prop::collection::vec(-5.0f64..5.0, 10 * 4),
            seed in 0u64..1000,
        ) {
            let days: Vec<NaiveDate> = (0..10).map(|i| day(2012, 5, 1 + i)).collect();
            let returns: Vec<Vec<f64>> = vals.chunks(4).map(<[f64]>::to_vec).collect();
            let panel = panel_from(days.clone(), returns);
            let window = DateRange { start: days[0], end: days[9] };
            let profile = seasonal_profile(&panel, window).unwrap();

            let (dm, _) = demean(&panel, &profile).unwrap();
            for d in 0..10 {
                for k in 0..4 {
                    let back = dm.returns[d][k] + profile.get(days[d], k).unwrap();
                    prop_assert!((back - panel.returns[d][k]).abs() <= 1e-12);
                }
            }

            // Rotating the day order must not change any cell median.
            let shift = (seed % 10) as usize;
            let mut idx: Vec<usize> = (0..10).collect();
            idx.rotate_left(shift);
            let shuffled = ReturnPanel {
                slots_per_day: 4,
                days: idx.iter().map(|&i| days[i]).collect(),
                returns: idx.iter().map(|&i| panel.returns[i].clone()).collect(),
                demeaned: false,
            };
            let p2 = seasonal_profile(&shuffled, window).unwrap();
            prop_assert_eq!(p2.medians, profile.medians);
        }
    }
}
