//! Domain records, dataset validation, and CSV ingestion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::real::Real;

/// One right-censored observation, optionally with incidence (`x`) and
/// latency (`z`) covariates. Empty covariate vectors mean "none".
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord<F> {
    /// Follow-up time, nonnegative and finite.
    pub time: F,
    /// `true` if the event was observed, `false` if censored.
    pub event: bool,
    /// Incidence covariates (without intercept).
    pub x: Vec<F>,
    /// Latency covariates.
    pub z: Vec<F>,
}

impl<F: Real> SurvivalRecord<F> {
    pub fn new(time: F, event: bool) -> Self {
        SurvivalRecord { time, event, x: Vec::new(), z: Vec::new() }
    }

    pub fn with_covariates(time: F, event: bool, x: Vec<F>, z: Vec<F>) -> Self {
        SurvivalRecord { time, event, x, z }
    }

    fn check(&self, row: usize) -> Result<()> {
        if !(self.time >= F::zero()) || !self.time.is_finite() {
            return Err(Error::Row {
                row,
                message: format!("time must be nonnegative and finite, got {}", self.time),
            });
        }
        Ok(())
    }
}

/// A labelled group of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSample<F> {
    pub records: Vec<SurvivalRecord<F>>,
    pub label: String,
}

impl<F: Real> SurvivalSample<F> {
    pub fn new(records: Vec<SurvivalRecord<F>>, label: impl Into<String>) -> Self {
        SurvivalSample { records, label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// Dimensions of the covariate vectors, which must be uniform.
    pub fn covariate_dims(&self) -> Result<(usize, usize)> {
        let (px, pz) = match self.records.first() {
            Some(r) => (r.x.len(), r.z.len()),
            None => return Ok((0, 0)),
        };
        for (i, r) in self.records.iter().enumerate() {
            if r.x.len() != px || r.z.len() != pz {
                return Err(Error::Row {
                    row: i,
                    message: format!(
                        "covariate dimensions differ within sample '{}': expected ({px},{pz}), got ({},{})",
                        self.label,
                        r.x.len(),
                        r.z.len()
                    ),
                });
            }
        }
        Ok((px, pz))
    }

    /// Hard check used by estimation entry points.
    pub fn require_events(&self) -> Result<()> {
        if self.event_count() == 0 {
            return Err(Error::NoEvents(self.label.clone()));
        }
        Ok(())
    }
}

/// Two independent samples to be compared.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleDataset<F> {
    pub sample1: SurvivalSample<F>,
    pub sample2: SurvivalSample<F>,
}

impl<F: Real> TwoSampleDataset<F> {
    pub fn new(sample1: SurvivalSample<F>, sample2: SurvivalSample<F>) -> Result<Self> {
        let d1 = sample1.covariate_dims()?;
        let d2 = sample2.covariate_dims()?;
        if !sample1.is_empty() && !sample2.is_empty() && d1 != d2 {
            return Err(Error::Validation(format!(
                "covariate dimensions differ between samples: {d1:?} vs {d2:?}"
            )));
        }
        Ok(TwoSampleDataset { sample1, sample2 })
    }

    /// All records of both samples, group 1 first.
    pub fn pooled_records(&self) -> Vec<SurvivalRecord<F>> {
        let mut v = self.sample1.records.clone();
        v.extend(self.sample2.records.iter().cloned());
        v
    }

    pub fn n1(&self) -> usize {
        self.sample1.len()
    }

    pub fn n2(&self) -> usize {
        self.sample2.len()
    }
}

/// Column-name mapping for CSV ingestion.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    pub time: String,
    pub status: String,
    pub group: Option<String>,
    pub x_columns: Vec<String>,
    pub z_columns: Vec<String>,
}

impl CsvSchema {
    pub fn new(time: impl Into<String>, status: impl Into<String>) -> Self {
        CsvSchema { time: time.into(), status: status.into(), ..Default::default() }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn with_covariates(mut self, x: Vec<String>, z: Vec<String>) -> Self {
        self.x_columns = x;
        self.z_columns = z;
        self
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_number<F: Real>(field: &str, row: usize, what: &str) -> Result<F> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Row {
        row,
        message: format!("non-numeric {what} '{field}'"),
    })?;
    Ok(F::from_f64_lossy(v))
}

/// Parse a two-group CSV into a dataset. The group column must take exactly
/// two distinct values; the lexicographically smaller one becomes sample 1.
pub fn parse_csv_two_sample<F: Real, R: Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<TwoSampleDataset<F>> {
    let group_col = schema
        .group
        .as_ref()
        .ok_or_else(|| Error::Validation("two-sample parsing requires a group column".into()))?;
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let gi = column_index(&headers, group_col)?;
    let mut groups: BTreeMap<String, Vec<SurvivalRecord<F>>> = BTreeMap::new();
    read_records(&mut csv_reader, &headers, schema, |row, rec, raw| {
        let label = raw.get(gi).unwrap_or("").trim().to_string();
        if label.is_empty() {
            return Err(Error::Row { row, message: "empty group value".into() });
        }
        groups.entry(label).or_default().push(rec);
        Ok(())
    })?;
    if groups.len() != 2 {
        return Err(Error::Validation(format!(
            "expected exactly 2 groups, found {}: {:?}",
            groups.len(),
            groups.keys().collect::<Vec<_>>()
        )));
    }
    let mut it = groups.into_iter();
    let (l1, r1) = it.next().unwrap();
    let (l2, r2) = it.next().unwrap();
    TwoSampleDataset::new(SurvivalSample::new(r1, l1), SurvivalSample::new(r2, l2))
}

/// Parse a CSV without a group column into a single sample.
pub fn parse_csv_sample<F: Real, R: Read>(reader: R, schema: &CsvSchema) -> Result<SurvivalSample<F>> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let mut records = Vec::new();
    read_records(&mut csv_reader, &headers, schema, |_, rec, _| {
        records.push(rec);
        Ok(())
    })?;
    let sample = SurvivalSample::new(records, "sample");
    sample.covariate_dims()?;
    Ok(sample)
}

fn read_records<F: Real, R: Read>(
    reader: &mut csv::Reader<R>,
    headers: &csv::StringRecord,
    schema: &CsvSchema,
    mut sink: impl FnMut(usize, SurvivalRecord<F>, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let ti = column_index(headers, &schema.time)?;
    let si = column_index(headers, &schema.status)?;
    let xi: Vec<usize> = schema
        .x_columns
        .iter()
        .map(|c| column_index(headers, c))
        .collect::<Result<_>>()?;
    let zi: Vec<usize> = schema
        .z_columns
        .iter()
        .map(|c| column_index(headers, c))
        .collect::<Result<_>>()?;

    for (i, raw) in reader.records().enumerate() {
        let raw = raw?;
        let row = i + 1; // 1-based data row index, header excluded
        let time: F = parse_number(raw.get(ti).unwrap_or(""), row, "time")?;
        let status_raw = raw.get(si).unwrap_or("");
        let status: f64 = parse_number(status_raw, row, "status")?;
        let event = if status == 1.0 {
            true
        } else if status == 0.0 {
            false
        } else {
            return Err(Error::Row {
                row,
                message: format!("status must be 0 (censored) or 1 (event), got '{status_raw}'"),
            });
        };
        let grab = |cols: &[usize], what: &str| -> Result<Vec<F>> {
            cols.iter()
                .map(|&c| {
                    let field = raw.get(c).unwrap_or("");
                    if field.trim().is_empty() {
                        Err(Error::Row { row, message: format!("missing {what} value") })
                    } else {
                        parse_number(field, row, what)
                    }
                })
                .collect()
        };
        let rec = SurvivalRecord::with_covariates(
            time,
            event,
            grab(&xi, "covariate")?,
            grab(&zi, "covariate")?,
        );
        rec.check(row)?;
        sink(row, rec, &raw)?;
    }
    Ok(())
}

/// Serialize a sample back to CSV (inverse of parsing; used for round-trips
/// and artifact export).
pub fn write_csv_sample<F: Real, W: Write>(
    writer: W,
    sample: &SurvivalSample<F>,
    schema: &CsvSchema,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.time.clone(), schema.status.clone()];
    header.extend(schema.x_columns.iter().cloned());
    header.extend(schema.z_columns.iter().cloned());
    w.write_record(&header)?;
    for r in &sample.records {
        let mut row = vec![format!("{}", r.time), if r.event { "1".into() } else { "0".into() }];
        row.extend(r.x.iter().map(|v| format!("{v}")));
        row.extend(r.z.iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-sample summary produced by [`validate_dataset`].
#[derive(Debug, Clone, Serialize)]
pub struct SampleDiagnostics {
    pub label: String,
    pub n: usize,
    pub events: usize,
    pub censoring_rate: f64,
    /// Censored observations strictly after the last event time.
    pub plateau_size: usize,
    pub plateau_fraction: f64,
    /// Raised when the plateau fraction falls below the threshold, hinting
    /// at insufficient follow-up.
    pub follow_up_warning: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetDiagnostics {
    pub sample1: SampleDiagnostics,
    pub sample2: SampleDiagnostics,
    pub plateau_threshold: f64,
}

/// Default plateau-fraction threshold below which a follow-up warning is raised.
pub const DEFAULT_PLATEAU_THRESHOLD: f64 = 0.05;

fn diagnose_sample<F: Real>(sample: &SurvivalSample<F>, threshold: f64) -> Result<SampleDiagnostics> {
    sample.require_events()?;
    let n = sample.len();
    let events = sample.event_count();
    let last_event = sample
        .records
        .iter()
        .filter(|r| r.event)
        .map(|r| r.time)
        .fold(F::neg_infinity(), F::max);
    let plateau_size = sample
        .records
        .iter()
        .filter(|r| !r.event && r.time > last_event)
        .count();
    let plateau_fraction = plateau_size as f64 / n as f64;
    Ok(SampleDiagnostics {
        label: sample.label.clone(),
        n,
        events,
        censoring_rate: (n - events) as f64 / n as f64,
        plateau_size,
        plateau_fraction,
        follow_up_warning: plateau_fraction < threshold,
    })
}

/// Pure diagnostics over both samples; errors only when a sample has no events.
pub fn validate_dataset<F: Real>(ds: &TwoSampleDataset<F>) -> Result<DatasetDiagnostics> {
    validate_dataset_with_threshold(ds, DEFAULT_PLATEAU_THRESHOLD)
}

pub fn validate_dataset_with_threshold<F: Real>(
    ds: &TwoSampleDataset<F>,
    threshold: f64,
) -> Result<DatasetDiagnostics> {
    Ok(DatasetDiagnostics {
        sample1: diagnose_sample(&ds.sample1, threshold)?,
        sample2: diagnose_sample(&ds.sample2, threshold)?,
        plateau_threshold: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema::new("time", "status")
    }

    #[test]
    fn parse_minimal() {
        let sample: SurvivalSample<f64> =
            parse_csv_sample("time,status\n1,1\n2,0\n".as_bytes(), &schema()).unwrap();
        assert_eq!(sample.len(), 2);
        assert_eq!(sample.event_count(), 1);
        assert_eq!(sample.records[0].time, 1.0);
        assert!(sample.records[0].event);
        assert!(!sample.records[1].event);
    }

    #[test]
    fn parse_groups_sorted_lexicographically() {
        let csv = "time,status,arm\n1,1,b\n2,0,a\n3,1,a\n";
        let ds: TwoSampleDataset<f64> =
            parse_csv_two_sample(csv.as_bytes(), &schema().with_group("arm")).unwrap();
        assert_eq!(ds.sample1.label, "a");
        assert_eq!(ds.sample1.len(), 2);
        assert_eq!(ds.sample2.label, "b");
        assert_eq!(ds.sample2.len(), 1);
    }

    #[test]
    fn negative_time_is_row_indexed_error() {
        let err = parse_csv_sample::<f64, _>("time,status\n-1,1\n".as_bytes(), &schema())
            .unwrap_err();
        match err {
            Error::Row { row, .. } => assert_eq!(row, 1),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let err =
            parse_csv_sample::<f64, _>("time,flag\n1,1\n".as_bytes(), &schema()).unwrap_err();
        match err {
            Error::MissingColumn(c) => assert_eq!(c, "status"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_status_rejected() {
        assert!(parse_csv_sample::<f64, _>("time,status\n1,2\n".as_bytes(), &schema()).is_err());
        assert!(parse_csv_sample::<f64, _>("time,status\n1,yes\n".as_bytes(), &schema()).is_err());
    }

    #[test]
    fn missing_covariate_cell_is_error() {
        let schema = schema().with_covariates(vec!["age".into()], vec![]);
        let err = parse_csv_sample::<f64, _>("time,status,age\n1,1,\n".as_bytes(), &schema)
            .unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }));
    }

    #[test]
    fn csv_round_trip() {
        let schema = schema().with_covariates(vec!["x1".into()], vec!["z1".into()]);
        let csv = "time,status,x1,z1\n1.5,1,0.25,-3\n2,0,1e-3,0.125\n";
        let sample: SurvivalSample<f64> = parse_csv_sample(csv.as_bytes(), &schema).unwrap();
        let mut out = Vec::new();
        write_csv_sample(&mut out, &sample, &schema).unwrap();
        let reparsed: SurvivalSample<f64> = parse_csv_sample(out.as_slice(), &schema).unwrap();
        assert_eq!(sample, reparsed);
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_random_records(
            rows in proptest::collection::vec(
                (0.0f64..1e6, proptest::bool::ANY, -1e3f64..1e3, -1e3f64..1e3),
                1..40,
            )
        ) {
            let schema = CsvSchema::new("time", "status")
                .with_covariates(vec!["x1".into()], vec!["z1".into()]);
            let sample = SurvivalSample::new(
                rows.iter()
                    .map(|&(t, e, x, z)| SurvivalRecord::with_covariates(t, e, vec![x], vec![z]))
                    .collect(),
                "sample",
            );
            let mut out = Vec::new();
            write_csv_sample(&mut out, &sample, &schema).unwrap();
            let reparsed: SurvivalSample<f64> = parse_csv_sample(out.as_slice(), &schema).unwrap();
            proptest::prop_assert_eq!(sample, reparsed);
        }
    }

    #[test]
    fn diagnostics_plateau_counting() {
        // Events at 1 and 2, censorings at 3 and 4: plateau of size 2.
        let recs = vec![
            SurvivalRecord::new(1.0, true),
            SurvivalRecord::new(2.0, true),
            SurvivalRecord::new(3.0, false),
            SurvivalRecord::new(4.0, false),
        ];
        let ds = TwoSampleDataset::new(
            SurvivalSample::new(recs.clone(), "1"),
            SurvivalSample::new(recs, "2"),
        )
        .unwrap();
        let diag = validate_dataset(&ds).unwrap();
        assert_eq!(diag.sample1.plateau_size, 2);
        assert_eq!(diag.sample1.plateau_fraction, 0.5);
        assert!(!diag.sample1.follow_up_warning);
        assert_eq!(diag.sample1.censoring_rate, 0.5);
    }

    #[test]
    fn diagnostics_all_events_warns() {
        let recs = vec![SurvivalRecord::new(1.0, true), SurvivalRecord::new(2.0, true)];
        let ds = TwoSampleDataset::new(
            SurvivalSample::new(recs.clone(), "1"),
            SurvivalSample::new(recs, "2"),
        )
        .unwrap();
        let diag = validate_dataset(&ds).unwrap();
        assert_eq!(diag.sample1.plateau_size, 0);
        assert!(diag.sample1.follow_up_warning);
    }

    #[test]
    fn diagnostics_no_events_hard_error() {
        let ds = TwoSampleDataset::new(
            SurvivalSample::<f64>::new(vec![SurvivalRecord::new(1.0, false)], "1"),
            SurvivalSample::new(vec![SurvivalRecord::new(1.0, true)], "2"),
        )
        .unwrap();
        assert!(matches!(validate_dataset(&ds).unwrap_err(), Error::NoEvents(_)));
    }

    #[test]
    fn covariate_dim_mismatch_between_samples() {
        let r1 = SurvivalRecord::with_covariates(1.0, true, vec![1.0], vec![]);
        let r2 = SurvivalRecord::with_covariates(1.0, true, vec![1.0, 2.0], vec![]);
        let err = TwoSampleDataset::new(
            SurvivalSample::new(vec![r1], "1"),
            SurvivalSample::new(vec![r2], "2"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
