//! CGM-style CSV ingestion, wear-time inclusion rules, and full-resolution
//! integer histograms on `[40, 401)`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{Domain, EmpiricalSample, Histogram};

/// Lowest and highest reportable CGM values.
pub const CGM_MIN: f64 = 40.0;
pub const CGM_MAX: f64 = 400.0;

const DAY: f64 = 86_400.0;

/// Column names in the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub value: String,
    /// Optional per-row group label (used by the evaluation command).
    pub label: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            value: "gl".into(),
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadOptions {
    pub schema: CsvSchema,
    /// Skip malformed rows (and report them) instead of failing.
    pub skip_malformed: bool,
    /// Nominal seconds between readings.
    pub expected_interval: f64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            schema: CsvSchema::default(),
            skip_malformed: false,
            expected_interval: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    /// mg/dL.
    pub value: f64,
}

/// One subject's readings, sorted by strictly increasing timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSeries {
    pub subject_id: String,
    pub readings: Vec<Reading>,
    pub expected_interval: f64,
    pub label: Option<String>,
}

impl SubjectSeries {
    pub fn values(&self) -> Vec<f64> {
        self.readings.iter().map(|r| r.value).collect()
    }

    /// Seconds between the first and last reading.
    pub fn duration(&self) -> f64 {
        match (self.readings.first(), self.readings.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub line: u64,
    pub message: String,
}

/// Per-subject bookkeeping from ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectIngest {
    pub subject_id: String,
    pub readings: usize,
    pub clamped_low: usize,
    pub clamped_high: usize,
    pub duplicate_timestamps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub series: Vec<SubjectSeries>,
    pub subjects: Vec<SubjectIngest>,
    pub skipped_rows: Vec<SkippedRow>,
}

impl IngestReport {
    pub fn total_clamped(&self) -> usize {
        self.subjects
            .iter()
            .map(|s| s.clamped_low + s.clamped_high)
            .sum()
    }
}

/// Parses epoch seconds, RFC 3339, or `YYYY-MM-DD HH:MM:SS` (read as UTC).
pub fn parse_timestamp(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            let dt = dt.and_utc();
            return Some(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    None
}

pub fn read_cgm_csv(path: &Path, options: &ReadOptions) -> Result<IngestReport> {
    read_cgm(std::fs::File::open(path)?, options)
}

struct Pending {
    readings: Vec<Reading>,
    label: Option<String>,
    low: usize,
    high: usize,
}

/// Reads, groups by subject (in order of first appearance), sorts by time,
/// clamps values to `[40, 400]`, and drops repeated timestamps.
pub fn read_cgm<R: Read>(input: R, options: &ReadOptions) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut report = IngestReport {
        series: Vec::new(),
        subjects: Vec::new(),
        skipped_rows: Vec::new(),
    };
    if headers.is_empty() {
        return Ok(report);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let schema = &options.schema;
    let (ci, ct, cv) = (col(&schema.id)?, col(&schema.time)?, col(&schema.value)?);
    let cl = schema.label.as_deref().map(col).transpose()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Pending> = HashMap::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                if options.skip_malformed {
                    report.skipped_rows.push(SkippedRow {
                        line,
                        message: e.to_string(),
                    });
                    continue;
                }
                return Err(Error::MalformedRow {
                    line,
                    message: e.to_string(),
                });
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| {
            let field = |i: usize, name: &str| {
                rec.get(i)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| format!("missing value in column `{name}`"))
            };
            let id = field(ci, &schema.id)?.to_string();
            let ts = field(ct, &schema.time)?;
            let ts = parse_timestamp(ts).ok_or_else(|| format!("unparseable timestamp `{ts}`"))?;
            let v = field(cv, &schema.value)?;
            let v: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| format!("unparseable value `{v}`"))?;
            let label = match cl {
                Some(c) => Some(field(c, schema.label.as_deref().unwrap_or(""))?.to_string()),
                None => None,
            };
            Ok::<_, String>((id, ts, v, label))
        })();
        let (id, ts, v, label) = match parsed {
            Ok(p) => p,
            Err(message) => {
                if options.skip_malformed {
                    report.skipped_rows.push(SkippedRow { line, message });
                    continue;
                }
                return Err(Error::MalformedRow { line, message });
            }
        };
        let g = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Pending {
                readings: Vec::new(),
                label: label.clone(),
                low: 0,
                high: 0,
            }
        });
        if label.is_some() && g.label != label {
            let message = format!("subject `{id}` has more than one label");
            if options.skip_malformed {
                report.skipped_rows.push(SkippedRow { line, message });
                continue;
            }
            return Err(Error::MalformedRow { line, message });
        }
        let value = if v < CGM_MIN {
            g.low += 1;
            CGM_MIN
        } else if v > CGM_MAX {
            g.high += 1;
            CGM_MAX
        } else {
            v
        };
        g.readings.push(Reading {
            timestamp: ts,
            value,
        });
    }

    for id in order {
        let mut g = groups.remove(&id).expect("grouped");
        g.readings.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let before = g.readings.len();
        g.readings.dedup_by(|b, a| a.timestamp == b.timestamp);
        report.subjects.push(SubjectIngest {
            subject_id: id.clone(),
            readings: g.readings.len(),
            clamped_low: g.low,
            clamped_high: g.high,
            duplicate_timestamps: before - g.readings.len(),
        });
        report.series.push(SubjectSeries {
            subject_id: id,
            readings: g.readings,
            expected_interval: options.expected_interval,
            label: g.label,
        });
    }
    Ok(report)
}

/// Writes series in the format [`read_cgm`] accepts.
pub fn write_cgm<W: Write>(out: W, series: &[SubjectSeries], schema: &CsvSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![schema.id.as_str(), schema.time.as_str(), schema.value.as_str()];
    if let Some(l) = &schema.label {
        header.push(l);
    }
    w.write_record(&header)?;
    for s in series {
        for r in &s.readings {
            let mut row = vec![s.subject_id.clone(), r.timestamp.to_string(), r.value.to_string()];
            if schema.label.is_some() {
                row.push(s.label.clone().unwrap_or_default());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cgm_csv(path: &Path, series: &[SubjectSeries], schema: &CsvSchema) -> Result<()> {
    write_cgm(std::fs::File::create(path)?, series, schema)
}

/// Minimum completeness per wear-duration tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InclusionPolicy {
    pub short_days: f64,
    pub short_fraction: f64,
    pub mid_days: f64,
    pub mid_fraction: f64,
    pub long_window_days: f64,
    pub long_fraction: f64,
}

impl Default for InclusionPolicy {
    fn default() -> Self {
        Self {
            short_days: 1.0,
            short_fraction: 0.90,
            mid_days: 14.0,
            mid_fraction: 0.70,
            long_window_days: 14.0,
            long_fraction: 0.70,
        }
    }
}

impl InclusionPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("short_fraction", self.short_fraction),
            ("mid_fraction", self.mid_fraction),
            ("long_fraction", self.long_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1]")));
            }
        }
        if !(self.short_days > 0.0 && self.short_days <= self.mid_days && self.long_window_days > 0.0) {
            return Err(Error::InvalidParameter(
                "inclusion windows must be positive and ordered".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionDecision {
    pub subject_id: String,
    pub keep: bool,
    pub reason: String,
    pub wear_days: f64,
    pub completeness: f64,
}

/// Keep/drop by wear duration: short wear needs high completeness, mid-length
/// wear moderate completeness, long wear enough total reading time.
pub fn apply_inclusion(series: &SubjectSeries, policy: &InclusionPolicy) -> InclusionDecision {
    let n = series.readings.len() as f64;
    let duration = series.duration();
    let expected = duration / series.expected_interval;
    let completeness = if expected > 0.0 { (n / expected).min(1.0) } else { 1.0 };
    let wear_days = duration / DAY;
    let (keep, reason) = if duration < policy.short_days * DAY {
        let keep = completeness >= policy.short_fraction;
        let op = if keep { ">=" } else { "<" };
        (
            keep,
            format!(
                "short-window completeness {completeness:.2} {op} {:.2}",
                policy.short_fraction
            ),
        )
    } else if duration <= policy.mid_days * DAY {
        let keep = completeness >= policy.mid_fraction;
        let op = if keep { ">=" } else { "<" };
        (
            keep,
            format!(
                "mid-window completeness {completeness:.2} {op} {:.2}",
                policy.mid_fraction
            ),
        )
    } else {
        let covered = n * series.expected_interval;
        let need = policy.long_fraction * policy.long_window_days * DAY;
        let keep = covered >= need * (1.0 - 1e-12);
        let op = if keep { ">=" } else { "<" };
        (
            keep,
            format!(
                "long-window coverage {:.2} days {op} {:.2}",
                covered / DAY,
                need / DAY
            ),
        )
    };
    InclusionDecision {
        subject_id: series.subject_id.clone(),
        keep,
        reason,
        wear_days,
        completeness,
    }
}

/// One unit bin per integer reading 40..=400; masses are reading proportions.
pub fn empirical_histogram(series: &SubjectSeries) -> Result<Histogram> {
    if series.readings.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut counts = vec![0usize; 361];
    for r in &series.readings {
        let g = r.value.clamp(CGM_MIN, CGM_MAX).floor();
        counts[(g - CGM_MIN) as usize] += 1;
    }
    Histogram::unit_bins(Domain::cgm(), &counts, Some(series.subject_id.clone()))
}

/// The readings as a raw sample on the CGM domain.
pub fn empirical_sample(series: &SubjectSeries) -> Result<EmpiricalSample> {
    let values = series
        .readings
        .iter()
        .map(|r| r.value.clamp(CGM_MIN, CGM_MAX))
        .collect();
    EmpiricalSample::new(Domain::cgm(), values, Some(series.subject_id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<IngestReport> {
        read_cgm(s.as_bytes(), &ReadOptions::default())
    }

    fn series(n: usize, step: f64) -> SubjectSeries {
        SubjectSeries {
            subject_id: "s".into(),
            readings: (0..n)
                .map(|k| Reading {
                    timestamp: k as f64 * step,
                    value: 100.0,
                })
                .collect(),
            expected_interval: 300.0,
            label: None,
        }
    }

    #[test]
    fn empty_input_gives_no_series() {
        assert!(read("").unwrap().series.is_empty());
        assert!(read("id,time,gl\n").unwrap().series.is_empty());
    }

    #[test]
    fn clamps_and_counts() {
        let r = read("id,time,gl\na,0,39\na,300,120\na,600,401\n").unwrap();
        assert_eq!(r.series.len(), 1);
        assert_eq!(r.series[0].values(), vec![40.0, 120.0, 400.0]);
        assert_eq!(r.subjects[0].clamped_low, 1);
        assert_eq!(r.subjects[0].clamped_high, 1);
    }

    #[test]
    fn groups_interleaved_subjects_and_sorts() {
        let r = read("id,time,gl\nb,600,1\nb,0,100\na,5,110\nb,300,120\na,1,130\n").unwrap();
        let ids: Vec<&str> = r.series.iter().map(|s| s.subject_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a"]);
        for s in &r.series {
            assert!(s.readings.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        }
        assert_eq!(r.series[1].values(), vec![130.0, 110.0]);
    }

    #[test]
    fn missing_columns_are_fatal() {
        assert!(matches!(read("id,when,gl\na,0,100\n"), Err(Error::MissingColumn(c)) if c == "time"));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let err = read("id,time,gl\na,0,100\na,300,abc\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }), "{err}");
        let opts = ReadOptions {
            skip_malformed: true,
            ..ReadOptions::default()
        };
        let r = read_cgm("id,time,gl\na,0,100\na,xx,100\na,600,\n".as_bytes(), &opts).unwrap();
        assert_eq!(r.series[0].readings.len(), 1);
        let lines: Vec<u64> = r.skipped_rows.iter().map(|s| s.line).collect();
        assert_eq!(lines, vec![3, 4]);
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("1600000000"), Some(1.6e9));
        assert_eq!(parse_timestamp("1970-01-01T00:01:00Z"), Some(60.0));
        assert_eq!(parse_timestamp("1970-01-01T01:00:00+01:00"), Some(0.0));
        assert_eq!(parse_timestamp("1970-01-02 00:00:00"), Some(86_400.0));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn duplicate_timestamps_are_dropped() {
        let r = read("id,time,gl\na,0,100\na,0,101\na,300,102\n").unwrap();
        assert_eq!(r.series[0].readings.len(), 2);
        assert_eq!(r.subjects[0].duplicate_timestamps, 1);
    }

    #[test]
    fn labels_are_carried() {
        let opts = ReadOptions {
            schema: CsvSchema {
                label: Some("group".into()),
                ..CsvSchema::default()
            },
            ..ReadOptions::default()
        };
        let r = read_cgm("id,time,gl,group\na,0,100,t1\nb,0,90,t2\n".as_bytes(), &opts).unwrap();
        assert_eq!(r.series[0].label.as_deref(), Some("t1"));
        assert_eq!(r.series[1].label.as_deref(), Some("t2"));
    }

    #[test]
    fn inclusion_examples() {
        let p = InclusionPolicy::default();
        // one day at full completeness
        let d = apply_inclusion(&series(288, 300.0), &p);
        assert!(d.keep, "{}", d.reason);
        // ten days at 60% completeness
        let d = apply_inclusion(&series(1728, 500.0), &p);
        assert!(!d.keep);
        assert_eq!(d.reason, "mid-window completeness 0.60 < 0.70");
        // thirty days of wear containing 9.8 days of readings
        let mut s = series(2823, 300.0);
        s.readings.last_mut().unwrap().timestamp = 30.0 * DAY;
        assert!(apply_inclusion(&s, &p).keep);
        s.readings.remove(0);
        assert!(!apply_inclusion(&s, &p).keep);
        // a single reading has zero duration and counts as complete
        assert!(apply_inclusion(&series(1, 300.0), &p).keep);
    }

    #[test]
    fn inclusion_ignores_time_translation() {
        let p = InclusionPolicy::default();
        let s = series(1000, 420.0);
        let mut shifted = s.clone();
        for r in &mut shifted.readings {
            r.timestamp += 1.7e9;
        }
        assert_eq!(apply_inclusion(&s, &p).keep, apply_inclusion(&shifted, &p).keep);
    }

    #[test]
    fn histogram_examples() {
        let mut s = series(4, 300.0);
        for (r, v) in s.readings.iter_mut().zip([70.0, 70.0, 180.0, 400.0]) {
            r.value = v;
        }
        let h = empirical_histogram(&s).unwrap();
        assert_eq!(h.num_bins(), 361);
        assert_eq!(h.masses()[30], 0.5);
        assert_eq!(h.masses()[140], 0.25);
        assert_eq!(h.masses()[360], 0.25);
        let all100 = empirical_histogram(&series(5, 300.0)).unwrap();
        assert_eq!(all100.masses()[60], 1.0);
        let empty = series(0, 300.0);
        assert!(empirical_histogram(&empty).is_err());
    }

    #[test]
    fn round_trip() {
        let r = read("id,time,gl\na,1600000000,39\na,1600000300,150.5\nb,1600000000,222\n").unwrap();
        let mut buf = Vec::new();
        write_cgm(&mut buf, &r.series, &CsvSchema::default()).unwrap();
        let back = read_cgm(buf.as_slice(), &ReadOptions::default()).unwrap();
        assert_eq!(back.series, r.series);
    }
}
