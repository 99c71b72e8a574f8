//! Day-indexed feature matrices: HAR multi-horizon lags, exogenous factors
//! and the weather rating, plus standardization and the two reduction steps
//! (forward selection and kernel PCA).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::realized::DailyRealizedMeasures;
use crate::{Error, Result};

pub mod kpca;
pub mod selection;

pub use kpca::{center_gram, kpca_fit, ComponentRule, Kernel, KpcaModel};
pub use selection::{forward_sequential_selection, SelectionResult, DEFAULT_RIDGE};

/// Weekly HAR window in trading days.
pub const WEEKLY_WINDOW: usize = 5;
/// Monthly HAR window in trading days.
pub const MONTHLY_WINDOW: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    /// Realized-volatility lags and the continuous/jump split.
    PriceFluctuations,
    Weather,
    SupplyDemand,
    /// Spot prices in neighbouring regions.
    Regional,
    /// Retrieval-scored weather rating.
    Rating,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::PriceFluctuations,
        FeatureGroup::Weather,
        FeatureGroup::SupplyDemand,
        FeatureGroup::Regional,
        FeatureGroup::Rating,
    ];
}

/// Which feature groups enter the matrix. Everything is on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupToggles {
    pub price_fluctuations: bool,
    pub weather: bool,
    pub supply_demand: bool,
    pub regional: bool,
    pub rating: bool,
}

impl Default for GroupToggles {
    fn default() -> Self {
        Self {
            price_fluctuations: true,
            weather: true,
            supply_demand: true,
            regional: true,
            rating: true,
        }
    }
}

impl GroupToggles {
    pub fn enabled(&self, group: FeatureGroup) -> bool {
        match group {
            FeatureGroup::PriceFluctuations => self.price_fluctuations,
            FeatureGroup::Weather => self.weather,
            FeatureGroup::SupplyDemand => self.supply_demand,
            FeatureGroup::Regional => self.regional,
            FeatureGroup::Rating => self.rating,
        }
    }
}

/// A named feature vector. Missing values are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub group: FeatureGroup,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: &str, unit: &str, group: FeatureGroup, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            group,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    #[default]
    Level,
    Log,
    Sqrt,
}

impl TargetTransform {
    pub fn apply(self, rv: f64) -> f64 {
        match self {
            TargetTransform::Level => rv,
            TargetTransform::Log if rv > 0.0 => libm::log(rv),
            TargetTransform::Log => f64::NAN,
            TargetTransform::Sqrt => libm::sqrt(rv),
        }
    }

    pub fn target_name(self) -> &'static str {
        match self {
            TargetTransform::Level => "rv_next",
            TargetTransform::Log => "ln_rv_next",
            TargetTransform::Sqrt => "sqrt_rv_next",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub days: Vec<NaiveDate>,
    pub columns: Vec<Column>,
    pub target_name: String,
    pub target: Vec<f64>,
    /// `true` when the row has a finite target and every column is present.
    pub mask: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(days: Vec<NaiveDate>, columns: Vec<Column>, target_name: &str, target: Vec<f64>) -> Result<Self> {
        let n = days.len();
        if target.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: target.len() });
        }
        let mut seen = BTreeMap::new();
        for c in &columns {
            if c.values.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: c.values.len() });
            }
            if seen.insert(c.name.as_str(), ()).is_some() {
                return Err(Error::InvalidInput(alloc::format!("duplicate column name {}", c.name)));
            }
        }
        let mask = (0..n)
            .map(|i| target[i].is_finite() && columns.iter().all(|c| c.values[i].is_finite()))
            .collect();
        Ok(Self {
            days,
            columns,
            target_name: target_name.to_string(),
            target,
            mask,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.days.len()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Indices of `names`, or a schema error listing the missing ones.
    pub fn column_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let mut idx = Vec::with_capacity(names.len());
        for n in names {
            match self.columns.iter().position(|c| c.name == n.as_ref()) {
                Some(i) => idx.push(i),
                None => missing.push(n.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(idx)
        } else {
            Err(Error::SchemaMismatch { missing })
        }
    }

    pub fn row_values(&self, row: usize, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&j| self.columns[j].values[row]).collect()
    }

    /// Whether every listed column is finite at `row`.
    pub fn row_complete(&self, row: usize, indices: &[usize]) -> bool {
        indices.iter().all(|&j| self.columns[j].values[row].is_finite())
    }

    pub fn usable_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.mask[i]).collect()
    }

    /// Copy restricted to the enabled feature groups.
    pub fn with_groups(&self, toggles: &GroupToggles) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .filter(|c| toggles.enabled(c.group))
            .cloned()
            .collect();
        Self::new(self.days.clone(), columns, &self.target_name, self.target.clone())
    }
}

/// Daily exogenous factors keyed by date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousTable {
    pub days: Vec<NaiveDate>,
    pub columns: Vec<Column>,
}

/// Known exogenous columns: (name, unit, group).
pub const EXOGENOUS_SCHEMA: [(&str, &str, FeatureGroup); 12] = [
    ("air_temp_c", "degC", FeatureGroup::Weather),
    ("wind_speed_ms", "m/s", FeatureGroup::Weather),
    ("rel_humidity_pct", "%", FeatureGroup::Weather),
    ("mslp_hpa", "hPa", FeatureGroup::Weather),
    ("supply_mw", "MW", FeatureGroup::SupplyDemand),
    ("demand_mw", "MW", FeatureGroup::SupplyDemand),
    ("retail_price", "$/MWh", FeatureGroup::SupplyDemand),
    ("price_vic", "$/MWh", FeatureGroup::Regional),
    ("price_qld", "$/MWh", FeatureGroup::Regional),
    ("price_sa", "$/MWh", FeatureGroup::Regional),
    ("price_tas", "$/MWh", FeatureGroup::Regional),
    ("weather_rating", "1-5", FeatureGroup::Rating),
];

impl ExogenousTable {
    pub fn new(days: Vec<NaiveDate>, columns: Vec<Column>) -> Result<Self> {
        for c in &columns {
            if c.values.len() != days.len() {
                return Err(Error::DimensionMismatch { expected: days.len(), got: c.values.len() });
            }
        }
        let mut sorted = days.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("exogenous table has duplicate days".into()));
        }
        Ok(Self { days, columns })
    }

    pub fn schema_for(name: &str) -> Option<(&'static str, FeatureGroup)> {
        EXOGENOUS_SCHEMA
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|&(_, unit, group)| (unit, group))
    }

    /// Inserts or replaces a column.
    pub fn set_column(&mut self, column: Column) -> Result<()> {
        if column.values.len() != self.days.len() {
            return Err(Error::DimensionMismatch { expected: self.days.len(), got: column.values.len() });
        }
        match self.columns.iter_mut().find(|c| c.name == column.name) {
            Some(c) => *c = column,
            None => self.columns.push(column),
        }
        Ok(())
    }
}

fn trailing_mean(values: &[f64], t: usize, window: usize) -> f64 {
    if t + 1 < window {
        return f64::NAN;
    }
    values[t + 1 - window..=t].iter().sum::<f64>() / window as f64
}

/// HAR regressors from a chronologically sorted measure series.
///
/// Emits daily, weekly (5-day) and monthly (22-day) trailing means of RV,
/// CV and J, plus the two HARQ interaction terms: `rq_rv_d = √RQ·RV` and
/// `lev_rv_d = RV·1{daily return < 0}`. Rows without a full window are NaN.
pub fn build_har_lags(measures: &[DailyRealizedMeasures], daily_returns: &[f64]) -> Result<Vec<Column>> {
    if measures.len() < MONTHLY_WINDOW {
        return Err(Error::InsufficientData { needed: MONTHLY_WINDOW, got: measures.len() });
    }
    if daily_returns.len() != measures.len() {
        return Err(Error::DimensionMismatch { expected: measures.len(), got: daily_returns.len() });
    }
    let rv: Vec<f64> = measures.iter().map(|m| m.rv).collect();
    let cv: Vec<f64> = measures.iter().map(|m| m.cv).collect();
    let jump: Vec<f64> = measures.iter().map(|m| m.jump).collect();
    let n = measures.len();
    let unit = "($/MWh)^2";
    let mut cols = Vec::new();
    for (prefix, series) in [("rv", &rv), ("cv", &cv), ("j", &jump)] {
        for (suffix, window) in [("d", 1), ("w", WEEKLY_WINDOW), ("m", MONTHLY_WINDOW)] {
            let name = alloc::format!("{prefix}_{suffix}");
            let values = (0..n).map(|t| trailing_mean(series, t, window)).collect();
            cols.push(Column::new(&name, unit, FeatureGroup::PriceFluctuations, values));
        }
    }
    cols.push(Column::new(
        "rq_rv_d",
        "($/MWh)^4",
        FeatureGroup::PriceFluctuations,
        measures.iter().map(|m| libm::sqrt(m.rq) * m.rv).collect(),
    ));
    cols.push(Column::new(
        "lev_rv_d",
        unit,
        FeatureGroup::PriceFluctuations,
        measures
            .iter()
            .zip(daily_returns)
            .map(|(m, &r)| if r < 0.0 { m.rv } else { 0.0 })
            .collect(),
    ));
    Ok(cols)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleSpec {
    pub target: TargetTransform,
    pub groups: GroupToggles,
}

/// Joins HAR lags and exogenous columns on the measures' days.
///
/// The target at day `t` is the transformed RV of the next measured day.
/// Days absent from `exog`, rows with missing values and the final day are
/// masked.
pub fn assemble(
    measures: &[DailyRealizedMeasures],
    daily_returns: &[f64],
    exog: &ExogenousTable,
    spec: &AssembleSpec,
) -> Result<FeatureMatrix> {
    if daily_returns.len() != measures.len() {
        return Err(Error::DimensionMismatch { expected: measures.len(), got: daily_returns.len() });
    }
    let mut order: Vec<usize> = (0..measures.len()).collect();
    order.sort_by_key(|&i| measures[i].day);
    let sorted: Vec<DailyRealizedMeasures> = order.iter().map(|&i| measures[i].clone()).collect();
    let returns: Vec<f64> = order.iter().map(|&i| daily_returns[i]).collect();
    if sorted.windows(2).any(|w| w[0].day == w[1].day) {
        return Err(Error::InvalidInput("duplicate measure days".into()));
    }
    let days: Vec<NaiveDate> = sorted.iter().map(|m| m.day).collect();

    let exog_row: BTreeMap<NaiveDate, usize> = exog.days.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    if !days.iter().any(|d| exog_row.contains_key(d)) {
        return Err(Error::InvalidInput("measures and exogenous table share no dates".into()));
    }

    let mut columns = Vec::new();
    if spec.groups.price_fluctuations {
        columns.extend(build_har_lags(&sorted, &returns)?);
    }
    let mut exog_cols: Vec<&Column> = exog.columns.iter().filter(|c| spec.groups.enabled(c.group)).collect();
    exog_cols.sort_by(|a, b| a.name.cmp(&b.name));
    for c in exog_cols {
        let values = days
            .iter()
            .map(|d| exog_row.get(d).map_or(f64::NAN, |&i| c.values[i]))
            .collect();
        columns.push(Column { values, ..c.clone() });
    }

    let n = days.len();
    let target = (0..n)
        .map(|t| if t + 1 < n { spec.target.apply(sorted[t + 1].rv) } else { f64::NAN })
        .collect();
    FeatureMatrix::new(days, columns, spec.target.target_name(), target)
}

/// Per-column affine map to zero mean and unit (population) variance,
/// estimated on a set of training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance columns keep a unit scale.
    pub fn fit(matrix: &FeatureMatrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let mut means = Vec::with_capacity(matrix.columns.len());
        let mut scales = Vec::with_capacity(matrix.columns.len());
        for c in &matrix.columns {
            let v: Vec<f64> = rows.iter().map(|&i| c.values[i]).filter(|x| x.is_finite()).collect();
            let m = crate::stats::mean(&v);
            let var = crate::stats::population_variance(&v);
            means.push(if m.is_finite() { m } else { 0.0 });
            scales.push(if var > 0.0 { libm::sqrt(var) } else { 1.0 });
        }
        Ok(Self {
            names: matrix.columns.iter().map(|c| c.name.clone()).collect(),
            means,
            scales,
        })
    }

    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let idx = matrix.column_indices(&self.names)?;
        let mut out = matrix.clone();
        for (k, &j) in idx.iter().enumerate() {
            for v in out.columns[j].values.iter_mut() {
                *v = (*v - self.means[k]) / self.scales[k];
            }
        }
        Ok(out)
    }
}

/// Dense row-major block of `matrix` for the given rows and columns.
pub fn gather_rows(matrix: &FeatureMatrix, rows: &[usize], columns: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&r| matrix.row_values(r, columns)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    fn measure(i: i64, cv: f64, jump: f64) -> DailyRealizedMeasures {
        DailyRealizedMeasures {
            day: day(i),
            m: 48,
            rv: cv + jump,
            bpv: cv,
            tpq: 1.0,
            rq: 4.0,
            z: Some(0.0),
            jump,
            cv,
            ln_rv: None,
            ln_j1p: 0.0,
            ln_cv: None,
            sqrt_rv: 0.0,
            sqrt_j: 0.0,
            sqrt_cv: 0.0,
        }
        .transform()
    }

    fn series(cvs: &[f64]) -> Vec<DailyRealizedMeasures> {
        cvs.iter().enumerate().map(|(i, &c)| measure(i as i64, c, 0.0)).collect()
    }

    fn col<'a>(cols: &'a [Column], name: &str) -> &'a Column {
        cols.iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn constant_series_lags_equal_constant() {
        let m = series(&[2.5; 30]);
        let cols = build_har_lags(&m, &[0.0; 30]).unwrap();
        for name in ["cv_d", "cv_w", "cv_m"] {
            assert_eq!(col(&cols, name).values[29], 2.5);
        }
    }

    #[test]
    fn weekly_lag_is_five_day_mean_and_monthly_masks_warmup() {
        let mut cvs = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        cvs.extend((0..20).map(|i| i as f64));
        let cols = build_har_lags(&series(&cvs), &[0.0; 25]).unwrap();
        assert_eq!(col(&cols, "cv_w").values[4], 3.0);
        assert!(col(&cols, "cv_w").values[3].is_nan());
        let monthly = &col(&cols, "cv_m").values;
        assert!(monthly[..21].iter().all(|v| v.is_nan()));
        assert!(monthly[21].is_finite());
    }

    #[test]
    fn too_short_history_is_an_error() {
        assert!(build_har_lags(&series(&[1.0; 21]), &[0.0; 21]).is_err());
    }

    #[test]
    fn leverage_and_quarticity_terms() {
        let m = series(&[1.0; 22]);
        let mut r = vec![1.0; 22];
        r[3] = -0.5;
        let cols = build_har_lags(&m, &r).unwrap();
        assert_eq!(col(&cols, "lev_rv_d").values[3], 1.0);
        assert_eq!(col(&cols, "lev_rv_d").values[4], 0.0);
        assert_eq!(col(&cols, "rq_rv_d").values[0], 2.0);
    }

    fn exog_table(days: Vec<NaiveDate>) -> ExogenousTable {
        let n = days.len();
        let mut cols = Vec::new();
        for (k, (name, unit, group)) in EXOGENOUS_SCHEMA.iter().enumerate() {
            cols.push(Column::new(name, unit, *group, (0..n).map(|i| (i * (k + 1)) as f64).collect()));
        }
        ExogenousTable::new(days, cols).unwrap()
    }

    #[test]
    fn assemble_masks_missing_exog_and_final_row() {
        let m = series(&(0..40).map(|i| 1.0 + i as f64).collect::<Vec<_>>());
        let mut days: Vec<NaiveDate> = (0..40).map(day).collect();
        days.remove(30);
        let fm = assemble(&m, &[0.0; 40], &exog_table(days), &AssembleSpec::default()).unwrap();
        assert!(!fm.mask[30]);
        assert!(!fm.mask[39]);
        assert!(fm.mask[29] && fm.mask[31]);
        assert_eq!(fm.target[29], m[30].rv);
        assert_eq!(fm.target_name, "rv_next");
    }

    #[test]
    fn assemble_drops_disabled_groups() {
        let m = series(&[1.0; 30]);
        let exog = exog_table((0..30).map(day).collect());
        let spec = AssembleSpec {
            groups: GroupToggles { weather: false, ..GroupToggles::default() },
            ..AssembleSpec::default()
        };
        let fm = assemble(&m, &[0.0; 30], &exog, &spec).unwrap();
        assert!(fm.columns.iter().all(|c| c.group != FeatureGroup::Weather));
        assert!(fm.column("price_vic").is_some());
        assert!(fm.column("air_temp_c").is_none());
    }

    #[test]
    fn assemble_rejects_disjoint_dates() {
        let m = series(&[1.0; 30]);
        let exog = exog_table((100..130).map(day).collect());
        assert!(assemble(&m, &[0.0; 30], &exog, &AssembleSpec::default()).is_err());
    }

    #[test]
    fn duplicate_column_names_are_rejected() {
        let c = Column::new("a", "", FeatureGroup::Weather, vec![1.0]);
        assert!(FeatureMatrix::new(vec![day(0)], vec![c.clone(), c], "y", vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn assemble_is_permutation_invariant(
            cvs in prop::collection::vec(0.1f64..5.0, 30),
            rot in 0usize..30,
        ) {
            let m = series(&cvs);
            let r: Vec<f64> = cvs.iter().map(|c| c - 2.0).collect();
            let exog = exog_table((0..30).map(day).collect());
            let base = assemble(&m, &r, &exog, &AssembleSpec::default()).unwrap();

            let mut idx: Vec<usize> = (0..30).collect();
            idx.rotate_left(rot);
            let m2: Vec<_> = idx.iter().map(|&i| m[i].clone()).collect();
            let r2: Vec<_> = idx.iter().map(|&i| r[i]).collect();
            let exog2 = ExogenousTable::new(
                idx.iter().map(|&i| exog.days[i]).collect(),
                exog.columns.iter().map(|c| Column { values: idx.iter().map(|&i| c.values[i]).collect(), ..c.clone() }).collect(),
            ).unwrap();
            let shuffled = assemble(&m2, &r2, &exog2, &AssembleSpec::default()).unwrap();
            prop_assert_eq!(format!("{:?}", shuffled), format!("{:?}", base));
        }

        #[test]
        fn standardized_training_columns_are_unit(
            vals in prop::collection::vec(-100.0f64..100.0, 40),
        ) {
            prop_assume!(crate::stats::population_variance(&vals) > 1e-6);
            let days: Vec<NaiveDate> = (0..40).map(day).collect();
            let c = Column::new("x", "", FeatureGroup::Weather, vals);
            let fm = FeatureMatrix::new(days, vec![c], "y", vec![1.0; 40]).unwrap();
            let rows: Vec<usize> = (0..40).collect();
            let s = Standardizer::fit(&fm, &rows).unwrap();
            let z = s.apply(&fm).unwrap();
            let v = &z.columns[0].values;
            prop_assert!(crate::stats::mean(v).abs() < 1e-10);
            prop_assert!((crate::stats::population_variance(v) - 1.0).abs() < 1e-8);
        }
    }
}
