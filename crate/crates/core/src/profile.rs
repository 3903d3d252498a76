//! Power/irradiance series ingestion and day-record serialization.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::horizon::{Criterion, DayRecord, PowerProfile};
use crate::switching::Semantics;

/// Irregularly sampled readings; times are seconds of day.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl RawSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "series values vs timestamps",
                expected: times.len(),
                actual: values.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::EmptySeries);
        }
        for k in 1..times.len() {
            if !(times[k] > times[k - 1]) {
                return Err(Error::NonMonotonicTime {
                    line: k as u64 + 1,
                    time: times[k],
                });
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) || times.iter().any(|t| !t.is_finite())
        {
            return Err(Error::Csv(
                "series values must be finite and non-negative".into(),
            ));
        }
        Ok(RawSeries { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A row skipped during parsing.
#[derive(Clone, Debug, PartialEq)]
pub struct DroppedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSeries {
    pub series: RawSeries,
    pub dropped: Vec<DroppedRow>,
}

/// Column selection by header name; `None` means the first column for time
/// and the first other column for the value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvColumns {
    pub time: Option<String>,
    pub value: Option<String>,
}

pub fn parse_csv(bytes: &[u8]) -> Result<ParsedSeries> {
    parse_csv_with(bytes, &CsvColumns::default())
}

pub fn parse_csv_with(bytes: &[u8], columns: &CsvColumns) -> Result<ParsedSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::Csv(format!(
                    "no column named {name:?} in header {:?}",
                    headers.iter().collect::<Vec<_>>()
                ))
            })
    };
    let time_col = match &columns.time {
        Some(name) => find(name)?,
        None => 0,
    };
    let value_col = match &columns.value {
        Some(name) => find(name)?,
        None => (0..headers.len())
            .find(|&c| c != time_col)
            .ok_or_else(|| Error::Csv("header names fewer than two columns".into()))?,
    };

    let mut clock = Clock::default();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut dropped = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut drop = |reason: String| dropped.push(DroppedRow { line, reason });
        let (Some(t_raw), Some(v_raw)) = (record.get(time_col), record.get(value_col)) else {
            drop("missing column".into());
            continue;
        };
        let Some(t) = clock.seconds(t_raw) else {
            drop(format!("unparseable time {t_raw:?}"));
            continue;
        };
        let v = match v_raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            Ok(v) if v.is_finite() => {
                drop(format!("negative value {v}"));
                continue;
            }
            _ => {
                drop(format!("missing or invalid value {v_raw:?}"));
                continue;
            }
        };
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(Error::NonMonotonicTime { line, time: t });
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        let detail: Vec<String> = dropped
            .iter()
            .take(5)
            .map(|d| format!("line {}: {}", d.line, d.reason))
            .collect();
        return Err(Error::NoRows(if detail.is_empty() {
            "file has no data rows".into()
        } else {
            detail.join("; ")
        }));
    }
    Ok(ParsedSeries {
        series: RawSeries::new(times, values)?,
        dropped,
    })
}

/// Turns numeric or ISO-8601 timestamps into seconds since midnight of the
/// first timestamped day.
#[derive(Default)]
struct Clock {
    first_date: Option<NaiveDate>,
}

impl Clock {
    fn seconds(&mut self, raw: &str) -> Option<f64> {
        if let Ok(t) = raw.parse::<f64>() {
            return t.is_finite().then_some(t);
        }
        if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
            return Some(self.seconds_of(dt.naive_local()));
        }
        for fmt in [
            "%Y-%m-%dT%H:%M:%S%.f",
            "%Y-%m-%d %H:%M:%S%.f",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
                return Some(self.seconds_of(dt));
            }
        }
        for fmt in ["%H:%M:%S%.f", "%H:%M"] {
            if let Ok(t) = NaiveTime::parse_from_str(raw, fmt) {
                return Some(time_of_day(t));
            }
        }
        None
    }

    fn seconds_of(&mut self, dt: NaiveDateTime) -> f64 {
        let first = *self.first_date.get_or_insert(dt.date());
        (dt.date() - first).num_days() as f64 * 86_400.0 + time_of_day(dt.time())
    }
}

fn time_of_day(t: NaiveTime) -> f64 {
    t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9
}

/// Scales the series so that its maximum is exactly 1.
pub fn normalize_peak(series: &RawSeries) -> Result<RawSeries> {
    let peak = series.max();
    if !(peak > 0.0) {
        return Err(Error::AllZero);
    }
    Ok(RawSeries {
        times: series.times.clone(),
        values: series.values.iter().map(|v| v / peak).collect(),
    })
}

/// Linear interpolation onto `k·dt`, `k = 0..=T/dt`, holding the edge
/// values outside the series.
pub fn resample(series: &RawSeries, dt: f64, day_length: f64) -> Result<PowerProfile> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonPositiveSampleTime(dt));
    }
    let steps = (day_length / dt).round();
    if !(steps >= 0.0) || (day_length / dt - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "day length {day_length} s is not a multiple of the sample time {dt} s"
        )));
    }
    let (ts, vs) = (&series.times, &series.values);
    let last = ts.len() - 1;
    let mut seg = 0;
    let samples = (0..=steps as usize)
        .map(|k| {
            let t = k as f64 * dt;
            if t <= ts[0] {
                return vs[0];
            }
            if t >= ts[last] {
                return vs[last];
            }
            while ts[seg + 1] <= t {
                seg += 1;
            }
            let frac = (t - ts[seg]) / (ts[seg + 1] - ts[seg]);
            vs[seg] + (vs[seg + 1] - vs[seg]) * frac
        })
        .collect();
    PowerProfile::new(samples, dt, 0.0)
}

/// Decimal rendering of numbers in written CSVs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NumberFormat {
    /// Nine significant digits.
    #[default]
    Significant9,
    /// Shortest representation that parses back to the same `f64`.
    RoundTrip,
}

impl NumberFormat {
    pub fn format(self, v: f64) -> String {
        match self {
            NumberFormat::RoundTrip => {
                if v == 0.0 {
                    "0".into()
                } else {
                    format!("{v:?}")
                }
            }
            NumberFormat::Significant9 => format_significant(v, 9),
        }
    }
}

/// `%.{digits}g`-style formatting with trailing zeros removed.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    }
}

pub const DAY_CSV: &str = "day.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

/// Run context echoed into the summary document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryMeta {
    /// Flattened configuration, key path to rendered value.
    pub config: BTreeMap<String, String>,
    pub criterion: Option<Criterion>,
    pub semantics: Semantics,
    pub number_format: NumberFormat,
}

#[derive(Serialize)]
struct Summary<'a> {
    engine: EngineInfo,
    metrics: MetricsOut,
    semantics: SemanticsOut,
    config: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct EngineInfo {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct MetricsOut {
    samples: usize,
    loads: usize,
    rmse: f64,
    load_energy: f64,
    supply_energy: f64,
    utilization: f64,
    negative_error_samples: usize,
    negative_error_samples_outside_fallback: usize,
    fallback_epochs: usize,
    switch_counts: Vec<usize>,
}

#[derive(Serialize)]
struct SemanticsOut {
    criterion: String,
    truncate_final_run: &'static str,
    dwell_count: &'static str,
    first_epoch: &'static str,
    number_format: &'static str,
}

pub fn day_csv_header(loads: usize) -> String {
    let mut header = String::from("time_s,P,e");
    for i in 1..=loads {
        header.push_str(&format!(",w_{i},p_{i}"));
    }
    header
}

/// Writes `day.csv` (one row per sample) and `summary.toml` into `dir`,
/// creating it if needed.
pub fn write_day_record(record: &DayRecord, dir: &Path, meta: &SummaryMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(DAY_CSV);
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut out = BufWriter::new(file);
    write_day_csv(record, &mut out, meta.number_format).map_err(|e| Error::io(&csv_path, e))?;
    out.flush().map_err(|e| Error::io(&csv_path, e))?;

    let m = &record.metrics;
    let summary = Summary {
        engine: EngineInfo {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        metrics: MetricsOut {
            samples: record.samples(),
            loads: record.loads(),
            rmse: m.rmse,
            load_energy: m.load_energy,
            supply_energy: m.supply_energy,
            utilization: m.utilization,
            negative_error_samples: m.negative_error_samples,
            negative_error_samples_outside_fallback: m.negative_error_samples_outside_fallback,
            fallback_epochs: m.fallback_epochs,
            switch_counts: m.switch_counts.clone(),
        },
        semantics: SemanticsOut {
            criterion: meta
                .criterion
                .map_or_else(|| "unspecified".into(), criterion_name),
            truncate_final_run: meta.semantics.truncate_final_run.as_str(),
            dwell_count: meta.semantics.dwell_count.as_str(),
            first_epoch: "free",
            number_format: match meta.number_format {
                NumberFormat::Significant9 => "significant9",
                NumberFormat::RoundTrip => "round_trip",
            },
        },
        config: &meta.config,
    };
    let text = toml::to_string(&summary).map_err(|e| Error::Csv(e.to_string()))?;
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))
}

pub fn criterion_name(c: Criterion) -> String {
    match c {
        Criterion::LeastSquares => "least_squares".into(),
        Criterion::Barrier(crate::horizon::BarrierForm::Window) => "barrier(window)".into(),
        Criterion::Barrier(crate::horizon::BarrierForm::PerSample) => "barrier(per_sample)".into(),
    }
}

pub fn write_day_csv(
    record: &DayRecord,
    out: &mut impl Write,
    format: NumberFormat,
) -> std::io::Result<()> {
    writeln!(out, "{}", day_csv_header(record.loads()))?;
    for k in 0..record.samples() {
        write!(
            out,
            "{},{},{}",
            format.format(record.time(k)),
            format.format(record.target[k]),
            format.format(record.error[k])
        )?;
        for i in 0..record.loads() {
            write!(
                out,
                ",{},{}",
                record.switching[i][k] as u8,
                format.format(record.power[i][k])
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Columns of a parsed `day.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct DayTrace {
    pub time: Vec<f64>,
    pub target: Vec<f64>,
    pub error: Vec<f64>,
    pub switching: Vec<Vec<bool>>,
    pub power: Vec<Vec<f64>>,
}

pub fn read_day_csv(bytes: &[u8]) -> Result<DayTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if headers.len() < 3 || (headers.len() - 3) % 2 != 0 {
        return Err(Error::Csv(format!(
            "unexpected day.csv header with {} columns",
            headers.len()
        )));
    }
    let loads = (headers.len() - 3) / 2;
    if headers.iter().collect::<Vec<_>>().join(",") != day_csv_header(loads) {
        return Err(Error::Csv(
            "day.csv header does not match the expected column order".into(),
        ));
    }
    let mut trace = DayTrace {
        time: Vec::new(),
        target: Vec::new(),
        error: Vec::new(),
        switching: vec![Vec::new(); loads],
        power: vec![Vec::new(); loads],
    };
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            record[c]
                .parse()
                .map_err(|_| Error::Csv(format!("line {line}: bad number {:?}", &record[c])))
        };
        trace.time.push(num(0)?);
        trace.target.push(num(1)?);
        trace.error.push(num(2)?);
        for i in 0..loads {
            let w = match &record[3 + 2 * i] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Csv(format!(
                        "line {line}: bad switch value {other:?}"
                    )))
                }
            };
            trace.switching[i].push(w);
            trace.power[i].push(num(4 + 2 * i)?);
        }
    }
    Ok(trace)
}

/// Writes a profile as `time_s,P` with round-trip precision.
pub fn write_profile_csv(profile: &PowerProfile, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "time_s,P")?;
    for (k, v) in profile.samples().iter().enumerate() {
        let t = profile.start_time() + k as f64 * profile.dt();
        writeln!(
            out,
            "{},{}",
            NumberFormat::RoundTrip.format(t),
            NumberFormat::RoundTrip.format(*v)
        )?;
    }
    Ok(())
}
