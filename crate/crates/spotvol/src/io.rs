//! File formats: price panels, exogenous tables, the weather corpus and the
//! pipeline's CSV intermediates. Empty numeric cells mean missing (NaN).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use spotvol_core::evaluation::ForecastRecord;
use spotvol_core::features::{Column, ExogenousTable, FeatureGroup, FeatureMatrix};
use spotvol_core::market_data::IntradayPriceSeries;
use spotvol_core::rag::{Period, WeatherRating};
use spotvol_core::realized::DailyRealizedMeasures;
use spotvol_core::Error as CoreError;

use crate::error::{AppError, AppResult};

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn parse_f64(s: &str, what: &str) -> AppResult<f64> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| AppError::Data(format!("{what}: cannot parse `{s}` as a number")))
}

fn parse_date(s: &str) -> AppResult<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| AppError::Data(format!("invalid date `{s}`")))
}

fn reader(path: &Path) -> AppResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> AppResult<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> AppResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| AppError::Data(format!("{}: missing column `{name}`", path.display())))
}

/// Reads a half-hourly price panel. Two layouts are accepted:
/// long `date,slot,price` (slot 1-based), and AEMO price-and-demand exports
/// (`REGION,SETTLEMENTDATE,...,RRP`) whose timestamps mark interval ends.
pub fn read_prices(path: &Path, slots_per_day: usize, region: Option<&str>) -> AppResult<IntradayPriceSeries> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let aemo = headers.iter().any(|h| h == "SETTLEMENTDATE");
    let mut cells: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    let mut put = |day: NaiveDate, slot: usize, price: f64| -> AppResult<()> {
        let row = cells.entry(day).or_insert_with(|| vec![None; slots_per_day]);
        if row[slot].is_some() {
            return Err(CoreError::Conflict { day, slot }.into());
        }
        row[slot] = Some(price);
        Ok(())
    };
    let label;
    if aemo {
        let (i_time, i_rrp) = (column_index(&headers, "SETTLEMENTDATE", path)?, column_index(&headers, "RRP", path)?);
        let i_region = headers.iter().position(|h| h == "REGION");
        let minutes_per_slot = (24 * 60 / slots_per_day) as i64;
        let mut seen_region: Option<String> = None;
        for rec in rdr.records() {
            let rec = rec?;
            if let Some(i) = i_region {
                let r = &rec[i];
                if region.is_some_and(|want| want != r) {
                    continue;
                }
                match &seen_region {
                    Some(s) if s != r => {
                        return Err(AppError::Data(format!(
                            "{}: several regions ({s}, {r}); set data.region",
                            path.display()
                        )))
                    }
                    None => seen_region = Some(r.to_string()),
                    _ => {}
                }
            }
            let raw = rec[i_time].replace('-', "/");
            let ts = NaiveDateTime::parse_from_str(&raw, "%Y/%m/%d %H:%M:%S")
                .or_else(|_| NaiveDateTime::parse_from_str(&raw, "%Y/%m/%d %H:%M"))
                .map_err(|_| AppError::Data(format!("invalid SETTLEMENTDATE `{}`", &rec[i_time])))?;
            // Interval ending at `ts`.
            let start = ts - Duration::minutes(minutes_per_slot);
            let minute = i64::from(chrono::Timelike::hour(&start)) * 60 + i64::from(chrono::Timelike::minute(&start));
            if minute % minutes_per_slot != 0 {
                return Err(AppError::Data(format!("{ts} is not on a {minutes_per_slot}-minute boundary")));
            }
            put(start.date(), (minute / minutes_per_slot) as usize, parse_f64(&rec[i_rrp], "RRP")?)?;
        }
        label = seen_region.or_else(|| region.map(String::from)).unwrap_or_default();
    } else {
        let (i_date, i_slot, i_price) = (
            column_index(&headers, "date", path)?,
            column_index(&headers, "slot", path)?,
            column_index(&headers, "price", path)?,
        );
        for rec in rdr.records() {
            let rec = rec?;
            let day = parse_date(&rec[i_date])?;
            let slot: usize = rec[i_slot].parse().map_err(|_| AppError::Data(format!("invalid slot `{}`", &rec[i_slot])))?;
            if slot == 0 || slot > slots_per_day {
                return Err(AppError::Data(format!("{day}: slot {slot} outside 1..={slots_per_day}")));
            }
            put(day, slot - 1, parse_f64(&rec[i_price], "price")?)?;
        }
        label = region.unwrap_or("").to_string();
    }
    if cells.is_empty() {
        return Err(AppError::Data(format!("{}: no price rows", path.display())));
    }
    let mut days = Vec::with_capacity(cells.len());
    let mut prices = Vec::with_capacity(cells.len() * slots_per_day);
    for (day, row) in cells {
        let found = row.iter().filter(|p| p.is_some()).count();
        if found != slots_per_day {
            return Err(CoreError::PartialDay { day, found, expected: slots_per_day }.into());
        }
        days.push(day);
        prices.extend(row.into_iter().flatten());
    }
    Ok(IntradayPriceSeries::new(label, slots_per_day, days, prices)?)
}

pub fn write_prices(path: &Path, series: &IntradayPriceSeries) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["date", "slot", "price"])?;
    for (d, day) in series.days().iter().enumerate() {
        for (k, p) in series.day_prices(d).iter().enumerate() {
            w.write_record([day.to_string(), (k + 1).to_string(), fmt_f64(*p)])?;
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// `date,<column>...` with names from the known exogenous schema.
pub fn read_exogenous(path: &Path) -> AppResult<ExogenousTable> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let i_date = column_index(&headers, "date", path)?;
    let mut names = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == i_date {
            continue;
        }
        let (unit, group) = ExogenousTable::schema_for(h)
            .ok_or_else(|| AppError::Data(format!("{}: unknown exogenous column `{h}`", path.display())))?;
        names.push((i, h.to_string(), unit, group));
    }
    let mut days = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        days.push(parse_date(&rec[i_date])?);
        for (k, (i, name, _, _)) in names.iter().enumerate() {
            values[k].push(parse_f64(&rec[*i], name)?);
        }
    }
    let columns = names
        .into_iter()
        .zip(values)
        .map(|((_, name, unit, group), v)| Column::new(&name, unit, group, v))
        .collect();
    Ok(ExogenousTable::new(days, columns)?)
}

pub fn write_exogenous(path: &Path, table: &ExogenousTable) -> AppResult<()> {
    let mut w = writer(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(table.columns.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (i, day) in table.days.iter().enumerate() {
        let mut row = vec![day.to_string()];
        row.extend(table.columns.iter().map(|c| fmt_f64(c.values[i])));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// `(doc_id, text)` for every `*.txt` file, sorted by file name.
pub fn read_corpus(dir: &Path) -> AppResult<Vec<(String, String)>> {
    let entries = fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AppError::Data(format!("{}: no .txt weather reports", dir.display())));
    }
    files
        .into_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let text = fs::read_to_string(&p).map_err(|e| AppError::io(&p, e))?;
            Ok((id, text))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MeasureRow {
    date: NaiveDate,
    m: usize,
    rv: f64,
    bpv: f64,
    tpq: f64,
    rq: f64,
    z: Option<f64>,
    jump: f64,
    cv: f64,
    ln_rv: Option<f64>,
    ln_j1p: f64,
    ln_cv: Option<f64>,
    sqrt_rv: f64,
    sqrt_j: f64,
    sqrt_cv: f64,
    daily_return: f64,
}

/// Daily measures plus the raw close-to-close return of each day.
pub fn write_measures(path: &Path, measures: &[DailyRealizedMeasures], daily_returns: &[f64]) -> AppResult<()> {
    let mut w = writer(path)?;
    for (m, &r) in measures.iter().zip(daily_returns) {
        w.serialize(MeasureRow {
            date: m.day,
            m: m.m,
            rv: m.rv,
            bpv: m.bpv,
            tpq: m.tpq,
            rq: m.rq,
            z: m.z,
            jump: m.jump,
            cv: m.cv,
            ln_rv: m.ln_rv,
            ln_j1p: m.ln_j1p,
            ln_cv: m.ln_cv,
            sqrt_rv: m.sqrt_rv,
            sqrt_j: m.sqrt_j,
            sqrt_cv: m.sqrt_cv,
            daily_return: r,
        })?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_measures(path: &Path) -> AppResult<(Vec<DailyRealizedMeasures>, Vec<f64>)> {
    let mut measures = Vec::new();
    let mut returns = Vec::new();
    for row in reader(path)?.deserialize() {
        let r: MeasureRow = row?;
        returns.push(r.daily_return);
        measures.push(DailyRealizedMeasures {
            day: r.date,
            m: r.m,
            rv: r.rv,
            bpv: r.bpv,
            tpq: r.tpq,
            rq: r.rq,
            z: r.z,
            jump: r.jump,
            cv: r.cv,
            ln_rv: r.ln_rv,
            ln_j1p: r.ln_j1p,
            ln_cv: r.ln_cv,
            sqrt_rv: r.sqrt_rv,
            sqrt_j: r.sqrt_j,
            sqrt_cv: r.sqrt_cv,
        });
    }
    Ok((measures, returns))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub unit: String,
    pub group: FeatureGroup,
}

/// Sidecar describing `features.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub target_name: String,
    pub columns: Vec<ColumnMeta>,
    pub n_rows: usize,
    pub usable_rows: usize,
}

pub fn write_features(csv_path: &Path, json_path: &Path, matrix: &FeatureMatrix) -> AppResult<()> {
    let mut w = writer(csv_path)?;
    let mut header = vec!["date".to_string()];
    header.extend(matrix.columns.iter().map(|c| c.name.clone()));
    header.push(matrix.target_name.clone());
    w.write_record(&header)?;
    for (i, day) in matrix.days.iter().enumerate() {
        let mut row = vec![day.to_string()];
        row.extend(matrix.columns.iter().map(|c| fmt_f64(c.values[i])));
        row.push(fmt_f64(matrix.target[i]));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| AppError::io(csv_path, e))?;
    let schema = FeatureSchema {
        target_name: matrix.target_name.clone(),
        columns: matrix
            .columns
            .iter()
            .map(|c| ColumnMeta { name: c.name.clone(), unit: c.unit.clone(), group: c.group })
            .collect(),
        n_rows: matrix.n_rows(),
        usable_rows: matrix.usable_rows().len(),
    };
    write_json(json_path, &schema)
}

pub fn read_features(csv_path: &Path, json_path: &Path) -> AppResult<FeatureMatrix> {
    let schema: FeatureSchema = read_json(json_path)?;
    let mut rdr = reader(csv_path)?;
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("date")
        .chain(schema.columns.iter().map(|c| c.name.as_str()))
        .chain(std::iter::once(schema.target_name.as_str()))
        .collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(AppError::Data(format!("{}: header does not match its schema", csv_path.display())));
    }
    let k = schema.columns.len();
    let mut days = Vec::new();
    let mut values = vec![Vec::new(); k];
    let mut target = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        days.push(parse_date(&rec[0])?);
        for (j, v) in values.iter_mut().enumerate() {
            v.push(parse_f64(&rec[j + 1], &schema.columns[j].name)?);
        }
        target.push(parse_f64(&rec[k + 1], &schema.target_name)?);
    }
    let columns = schema
        .columns
        .iter()
        .zip(values)
        .map(|(c, v)| Column::new(&c.name, &c.unit, c.group, v))
        .collect();
    Ok(FeatureMatrix::new(days, columns, &schema.target_name, target)?)
}

/// Ratings without the cache-hit flag, so reruns are byte-identical.
pub fn write_ratings(path: &Path, ratings: &[WeatherRating]) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["period", "score", "provider", "top_chunks", "rationale"])?;
    for r in ratings {
        w.write_record([
            r.period.to_string(),
            r.score().to_string(),
            r.provider.clone(),
            r.top_chunks.join(";"),
            r.rationale.clone(),
        ])?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_ratings(path: &Path) -> AppResult<Vec<WeatherRating>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let period: Period = rec[0].parse()?;
        let score: i64 = rec[1].parse().map_err(|_| AppError::Data(format!("invalid score `{}`", &rec[1])))?;
        let chunks = rec[3].split(';').filter(|s| !s.is_empty()).map(String::from).collect();
        out.push(WeatherRating::new(period, score, rec[4].to_string(), chunks, rec[2].to_string())?);
    }
    Ok(out)
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["date", "model", "prediction", "actual"])?;
    for r in records {
        w.write_record([r.day.to_string(), r.model.clone(), fmt_f64(r.prediction), fmt_f64(r.actual)])?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_forecasts(path: &Path) -> AppResult<Vec<ForecastRecord>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        out.push(ForecastRecord {
            day: parse_date(&rec[0])?,
            model: rec[1].to_string(),
            prediction: parse_f64(&rec[2], "prediction")?,
            actual: parse_f64(&rec[3], "actual")?,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}
