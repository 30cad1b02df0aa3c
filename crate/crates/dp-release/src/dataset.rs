//! Ingestion and partitioning of the arrhythmia feature table, plus a
//! deterministic synthetic generator so every test and example runs without
//! the external download.
//!
//! A row is one patient: a rhythm label, a free-form beat label, and
//! thirteen demographic or PQRST-wave features. Column names are matched
//! case-insensitively with spaces and underscores interchangeable, so
//! `QRS Duration`, `qrs_duration` and `QRSDURATION` all resolve to the same
//! column.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::RandomSource;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing required column {column:?}")]
    MissingColumn { column: String },
    #[error("row {line}: {reason}")]
    Row { line: usize, reason: String },
    /// The offending code is carried for programmatic use but kept out of
    /// the message: ingest diagnostics must never echo record values.
    #[error(
        "unknown rhythm code; valid codes: SB, SR, AFIB, ST, AF, SA, SVT, AT, AVNRT, AVRT, SAAWR"
    )]
    UnknownRhythm { code: String },
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The eleven rhythm labels, in the fixed per-group release order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RhythmCode {
    Afib,
    Sb,
    Sa,
    Af,
    Sr,
    St,
    Svt,
    At,
    Avnrt,
    Saawr,
    Avrt,
}

impl RhythmCode {
    /// All codes in the canonical release (per-group reporting) order.
    pub const ALL: [RhythmCode; 11] = [
        RhythmCode::Afib,
        RhythmCode::Sb,
        RhythmCode::Sa,
        RhythmCode::Af,
        RhythmCode::Sr,
        RhythmCode::St,
        RhythmCode::Svt,
        RhythmCode::At,
        RhythmCode::Avnrt,
        RhythmCode::Saawr,
        RhythmCode::Avrt,
    ];

    pub fn acronym(&self) -> &'static str {
        match self {
            RhythmCode::Sb => "SB",
            RhythmCode::Sr => "SR",
            RhythmCode::Afib => "AFIB",
            RhythmCode::St => "ST",
            RhythmCode::Af => "AF",
            RhythmCode::Sa => "SA",
            RhythmCode::Svt => "SVT",
            RhythmCode::At => "AT",
            RhythmCode::Avnrt => "AVNRT",
            RhythmCode::Avrt => "AVRT",
            RhythmCode::Saawr => "SAAWR",
        }
    }

    pub fn full_name(&self) -> &'static str {
        match self {
            RhythmCode::Sb => "Sinus Bradycardia",
            RhythmCode::Sr => "Sinus Rhythm",
            RhythmCode::Afib => "Atrial Fibrillation",
            RhythmCode::St => "Sinus Tachycardia",
            RhythmCode::Af => "Atrial Flutter",
            RhythmCode::Sa => "Sinus Irregularity",
            RhythmCode::Svt => "Supraventricular Tachycardia",
            RhythmCode::At => "Atrial Tachycardia",
            RhythmCode::Avnrt => "Atrioventricular Node Reentrant Tachycardia",
            RhythmCode::Avrt => "Atrioventricular Reentrant Tachycardia",
            RhythmCode::Saawr => "Sinus Atrium to Atrial Wandering Rhythm",
        }
    }

    pub fn from_acronym(s: &str) -> Result<Self, DatasetError> {
        let token = s.trim().to_ascii_uppercase();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.acronym() == token)
            .ok_or(DatasetError::UnknownRhythm {
                code: s.to_string(),
            })
    }
}

impl fmt::Display for RhythmCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.acronym())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sex::Male => "MALE",
            Sex::Female => "FEMALE",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MALE" | "M" => Ok(Sex::Male),
            "FEMALE" | "F" => Ok(Sex::Female),
            _ => Err("unrecognized sex label".to_string()),
        }
    }
}

/// One patient's extracted ECG features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub rhythm: RhythmCode,
    /// Free-form label for other cardiovascular conditions; carried opaquely.
    pub beat: String,
    pub patient_age: i32,
    pub sex: Sex,
    pub ventricular_rate: i32,
    pub atrial_rate: i32,
    pub qrs_duration: i32,
    pub qt_interval: i32,
    pub qt_corrected: i32,
    pub r_axis: i32,
    pub t_axis: i32,
    pub qrs_count: i32,
    pub q_onset: i32,
    pub q_offset: i32,
    pub t_offset: i32,
}

/// Canonical column names, header order.
pub const COLUMNS: [&str; 15] = [
    "rhythm",
    "beat",
    "patient_age",
    "sex",
    "ventricular_rate",
    "atrial_rate",
    "qrs_duration",
    "qt_interval",
    "qt_corrected",
    "r_axis",
    "t_axis",
    "qrs_count",
    "q_onset",
    "q_offset",
    "t_offset",
];

/// The numeric columns (everything except rhythm, beat and sex).
pub const NUMERIC_COLUMNS: [&str; 12] = [
    "patient_age",
    "ventricular_rate",
    "atrial_rate",
    "qrs_duration",
    "qt_interval",
    "qt_corrected",
    "r_axis",
    "t_axis",
    "qrs_count",
    "q_onset",
    "q_offset",
    "t_offset",
];

/// Lowercase and strip spaces/underscores so header spellings unify.
pub fn normalize_column(name: &str) -> String {
    name.chars()
        .filter(|c| *c != ' ' && *c != '_' && *c != '\u{feff}')
        .flat_map(|c| c.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic { seed: u64 },
}

/// An immutable, validated record table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<EcgRecord>,
    source: DataSource,
}

impl Dataset {
    pub fn from_records(records: Vec<EcgRecord>, source: DataSource) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::Empty("no records".into()));
        }
        Ok(Self { records, source })
    }

    pub fn records(&self) -> &[EcgRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source(&self) -> &DataSource {
        &self.source
    }

    /// Values of a numeric column, by any accepted spelling of its name.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        numeric_values(&self.records, name)
    }

    /// Values of a categorical column (rhythm, sex, or beat).
    pub fn categorical_column(&self, name: &str) -> Option<Vec<String>> {
        categorical_values(&self.records, name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        is_numeric_column(name) || is_categorical_column(name)
    }
}

/// Numeric column values from any record iterator.
pub fn numeric_values<'a, I>(records: I, name: &str) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a EcgRecord>,
{
    let key = normalize_column(name);
    let pick: fn(&EcgRecord) -> f64 = match key.as_str() {
        "patientage" | "age" => |r| r.patient_age as f64,
        "ventricularrate" => |r| r.ventricular_rate as f64,
        "atrialrate" => |r| r.atrial_rate as f64,
        "qrsduration" => |r| r.qrs_duration as f64,
        "qtinterval" => |r| r.qt_interval as f64,
        "qtcorrected" => |r| r.qt_corrected as f64,
        "raxis" => |r| r.r_axis as f64,
        "taxis" => |r| r.t_axis as f64,
        "qrscount" => |r| r.qrs_count as f64,
        "qonset" => |r| r.q_onset as f64,
        "qoffset" => |r| r.q_offset as f64,
        "toffset" => |r| r.t_offset as f64,
        _ => return None,
    };
    Some(records.into_iter().map(pick).collect())
}

/// Categorical column values from any record iterator.
pub fn categorical_values<'a, I>(records: I, name: &str) -> Option<Vec<String>>
where
    I: IntoIterator<Item = &'a EcgRecord>,
{
    let key = normalize_column(name);
    let pick: fn(&EcgRecord) -> String = match key.as_str() {
        "rhythm" => |r| r.rhythm.acronym().to_string(),
        "sex" => |r| r.sex.as_str().to_string(),
        "beat" => |r| r.beat.clone(),
        _ => return None,
    };
    Some(records.into_iter().map(pick).collect())
}

pub fn is_numeric_column(name: &str) -> bool {
    let key = normalize_column(name);
    NUMERIC_COLUMNS.iter().any(|c| normalize_column(c) == key) || key == "age"
}

pub fn is_categorical_column(name: &str) -> bool {
    matches!(normalize_column(name).as_str(), "rhythm" | "sex" | "beat")
}

/// Per-row diagnostics from a lenient ingest.
#[derive(Debug, Clone, Default)]
pub struct IngestStats {
    pub rows_read: usize,
    pub rows_ok: usize,
    pub rows_dropped: usize,
    /// (1-based data line, reason) for each dropped row.
    pub diagnostics: Vec<(usize, String)>,
}

/// Parse a UTF-8 comma-separated feature table with a header row.
///
/// Strict mode fails on the first bad row; lenient mode drops bad rows and
/// reports them in the returned stats.
pub fn ingest_csv(path: &Path, strict: bool) -> Result<(Dataset, IngestStats), DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let mut index = Vec::with_capacity(COLUMNS.len());
    for canonical in COLUMNS {
        let want = normalize_column(canonical);
        let found = headers
            .iter()
            .position(|h| normalize_column(h) == want)
            .ok_or_else(|| DatasetError::MissingColumn {
                column: canonical.to_string(),
            })?;
        index.push(found);
    }

    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        stats.rows_read += 1;
        let row = row?;
        match parse_record(&row, &index) {
            Ok(record) => {
                stats.rows_ok += 1;
                records.push(record);
            }
            Err(reason) => {
                if strict {
                    return Err(DatasetError::Row { line, reason });
                }
                stats.rows_dropped += 1;
                stats.diagnostics.push((line, reason));
            }
        }
    }

    if records.is_empty() {
        return Err(DatasetError::Empty(format!(
            "{} contains a header but no usable rows",
            path.display()
        )));
    }
    let dataset = Dataset::from_records(records, DataSource::File(path.to_path_buf()))?;
    Ok((dataset, stats))
}

fn parse_record(row: &csv::StringRecord, index: &[usize]) -> Result<EcgRecord, String> {
    let field = |slot: usize| -> Result<&str, String> {
        row.get(index[slot])
            .ok_or_else(|| format!("missing field {:?}", COLUMNS[slot]))
    };
    let int = |slot: usize| -> Result<i32, String> {
        let raw = field(slot)?;
        raw.parse::<i32>()
            .map_err(|_| format!("column {:?}: unparseable integer", COLUMNS[slot]))
    };

    let rhythm = RhythmCode::from_acronym(field(0)?).map_err(|e| e.to_string())?;
    let sex = Sex::parse(field(3)?)?;
    Ok(EcgRecord {
        rhythm,
        beat: field(1)?.to_string(),
        patient_age: int(2)?,
        sex,
        ventricular_rate: int(4)?,
        atrial_rate: int(5)?,
        qrs_duration: int(6)?,
        qt_interval: int(7)?,
        qt_corrected: int(8)?,
        r_axis: int(9)?,
        t_axis: int(10)?,
        qrs_count: int(11)?,
        q_onset: int(12)?,
        q_offset: int(13)?,
        t_offset: int(14)?,
    })
}

/// Write a dataset back out in the identical dialect (round-trip safe).
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(COLUMNS)?;
    for r in dataset.records() {
        writer.write_record([
            r.rhythm.acronym(),
            &r.beat,
            &r.patient_age.to_string(),
            r.sex.as_str(),
            &r.ventricular_rate.to_string(),
            &r.atrial_rate.to_string(),
            &r.qrs_duration.to_string(),
            &r.qt_interval.to_string(),
            &r.qt_corrected.to_string(),
            &r.r_axis.to_string(),
            &r.t_axis.to_string(),
            &r.qrs_count.to_string(),
            &r.q_onset.to_string(),
            &r.q_offset.to_string(),
            &r.t_offset.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Disjoint, exhaustive partition into the eleven rhythm groups, in the
/// fixed release order. Empty groups are kept.
pub fn partition_by_rhythm(dataset: &Dataset) -> Vec<(RhythmCode, Vec<EcgRecord>)> {
    let mut groups: Vec<(RhythmCode, Vec<EcgRecord>)> =
        RhythmCode::ALL.iter().map(|&c| (c, Vec::new())).collect();
    for record in dataset.records() {
        let slot = RhythmCode::ALL
            .iter()
            .position(|&c| c == record.rhythm)
            .expect("every code is in ALL");
        groups[slot].1.push(record.clone());
    }
    groups
}

/// Default rhythm mix: bradycardia and normal sinus dominate, the wandering
/// atrial rhythm is rarest. Order matches [`RhythmCode::ALL`].
pub const DEFAULT_GROUP_WEIGHTS: [f64; 11] = [
    0.169,  // AFIB
    0.366,  // SB
    0.037,  // SA
    0.042,  // AF
    0.171,  // SR
    0.137,  // ST
    0.055,  // SVT
    0.0113, // AT
    0.0015, // AVNRT
    0.0006, // SAAWR
    0.0008, // AVRT
];

/// Deterministic synthetic table: same `(n, seed, weights)` gives an
/// identical dataset. Ages skew old, QRS durations stay within [18, 256],
/// and per-rhythm rates follow the usual clinical ordering.
pub fn synthesize(
    n: usize,
    seed: u64,
    group_weights: Option<&[f64; 11]>,
) -> Result<Dataset, DatasetError> {
    if n == 0 {
        return Err(DatasetError::InvalidParameter(
            "synthetic dataset needs n >= 1".into(),
        ));
    }
    let weights = group_weights.unwrap_or(&DEFAULT_GROUP_WEIGHTS);
    if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
        return Err(DatasetError::InvalidParameter(
            "group weights must be nonnegative and finite".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(DatasetError::InvalidParameter(
            "group weights must not all be zero".into(),
        ));
    }

    let mut rng = RandomSource::seeded(seed);
    let normal = |mean: f64, sd: f64, rng: &mut RandomSource| -> f64 {
        let u1 = 1.0 - rng.next_uniform();
        let u2 = rng.next_uniform();
        mean + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };

    let beats = [
        "NONE",
        "NONE",
        "NONE",
        "NONE",
        "TWC",
        "STDD",
        "STTC",
        "RBBB",
        "LBBB",
        "APB",
        "VPB",
        "RBBB TWC",
        "STDD STTC",
    ];

    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.next_uniform() * total;
        let mut rhythm = RhythmCode::ALL[10];
        for (code, &w) in RhythmCode::ALL.iter().zip(weights.iter()) {
            pick -= w;
            if pick < 0.0 {
                rhythm = *code;
                break;
            }
        }

        // (mean ventricular rate, sd, mean QRS duration)
        let (vr_mean, vr_sd, qrs_mean) = match rhythm {
            RhythmCode::Afib => (112.0, 22.0, 92.8),
            RhythmCode::Sb => (54.0, 6.0, 93.3),
            RhythmCode::Sa => (66.0, 10.0, 87.5),
            RhythmCode::Af => (128.0, 28.0, 97.3),
            RhythmCode::Sr => (73.0, 9.0, 87.0),
            RhythmCode::St => (122.0, 14.0, 85.3),
            RhythmCode::Svt => (165.0, 22.0, 96.1),
            RhythmCode::At => (140.0, 24.0, 89.0),
            RhythmCode::Avnrt => (170.0, 18.0, 89.9),
            RhythmCode::Saawr => (78.0, 14.0, 84.9),
            RhythmCode::Avrt => (168.0, 20.0, 81.5),
        };

        // Arrhythmia is less common among the young: ages pile up at the
        // high end with a long left tail.
        let age_u = rng.next_uniform();
        let patient_age = (98.0 - 94.0 * age_u.powf(2.2)).round().clamp(4.0, 98.0) as i32;
        let sex = if rng.next_uniform() < 0.5 {
            Sex::Male
        } else {
            Sex::Female
        };

        let ventricular_rate = normal(vr_mean, vr_sd, &mut rng).round().clamp(30.0, 300.0) as i32;
        let atrial_rate = match rhythm {
            RhythmCode::Afib => normal(300.0, 60.0, &mut rng).round().clamp(100.0, 600.0) as i32,
            RhythmCode::Af => normal(260.0, 40.0, &mut rng).round().clamp(100.0, 450.0) as i32,
            _ => (ventricular_rate as f64 + normal(0.0, 3.0, &mut rng))
                .round()
                .clamp(30.0, 300.0) as i32,
        };
        let qrs_duration = normal(qrs_mean, 12.0, &mut rng).round().clamp(18.0, 256.0) as i32;
        let qt_interval = normal(460.0 - ventricular_rate as f64 * 1.1, 24.0, &mut rng)
            .round()
            .clamp(180.0, 620.0) as i32;
        let qt_corrected = normal(425.0, 26.0, &mut rng).round().clamp(300.0, 650.0) as i32;
        let r_axis = normal(42.0, 38.0, &mut rng).round().clamp(-90.0, 180.0) as i32;
        let t_axis = normal(46.0, 42.0, &mut rng).round().clamp(-90.0, 180.0) as i32;
        let qrs_count = (ventricular_rate as f64 / 6.0 + normal(0.0, 1.5, &mut rng))
            .round()
            .clamp(3.0, 60.0) as i32;
        let q_onset = normal(217.0, 7.0, &mut rng).round().clamp(180.0, 260.0) as i32;
        let q_offset = q_onset + (qrs_duration as f64 / 2.0).round() as i32;
        let t_offset = q_onset + (qt_interval as f64 / 2.0).round() as i32;

        let beat = beats[(rng.next_uniform() * beats.len() as f64) as usize % beats.len()];

        records.push(EcgRecord {
            rhythm,
            beat: beat.to_string(),
            patient_age,
            sex,
            ventricular_rate,
            atrial_rate,
            qrs_duration,
            qt_interval,
            qt_corrected,
            r_axis,
            t_axis,
            qrs_count,
            q_onset,
            q_offset,
            t_offset,
        });
    }

    Dataset::from_records(records, DataSource::Synthetic { seed })
}

#[cfg(test)]
pub(crate) const TABLE_FIXTURE: &str = "\
Rhythm,Beat,Patient Age,Sex,Ventricular Rate,Atrial Rate,QRS Duration,QT Interval,QT Corrected,R Axis,T Axis,QRS Count,Q Onset,Q Offset,T Offset
AFIB,RBBB TWC,85,MALE,117,234,114,356,496,81,-27,19,208,265,386
SB,TWC,59,FEMALE,52,52,92,432,401,76,42,8,215,261,431
SA,NONE,20,FEMALE,67,67,82,382,403,88,20,11,224,265,415
SB,NONE,66,MALE,53,53,96,456,427,34,3,9,219,267,447
AF,STDD STTC,73,FEMALE,162,162,114,252,413,68,-40,26,228,285,354
SB,NONE,46,FEMALE,57,57,70,404,393,38,24,9,225,260,427
AFIB,TWC,80,FEMALE,98,86,74,360,459,69,83,17,215,252,395
SR,NONE,46,MALE,63,63,90,376,384,24,38,11,221,266,409
";
