//! JSON Lines manifest: one sample per line.
//!
//! ```text
//! {"sample_id":"derna-2021","city":"Derna","country":"Libya","lat":32.76,"lon":22.64,
//!  "disaster_type":"flood","label":1,"weather":[...25],"text_emb":[...32],"image_emb":[...46]}
//! ```
//!
//! Modality arrays are optional. Synthetic samples carry `"synthetic": true`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::dataset::{check_vector, City, Dataset, DisasterType, Modality, Sample, VectorFault};
use crate::error::{Error, Result};

const KNOWN_FIELDS: [&str; 11] = [
    "sample_id",
    "city",
    "country",
    "lat",
    "lon",
    "disaster_type",
    "label",
    "weather",
    "text_emb",
    "image_emb",
    "synthetic",
];

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(BufReader::new(file))
}

pub fn read_manifest(reader: impl BufRead) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    let mut disaster_type: Option<DisasterType> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (kind, sample) = parse_record(&line, line_no)?;
        match disaster_type {
            None => disaster_type = Some(kind),
            Some(t) if t != kind => {
                return Err(Error::Malformed {
                    line: line_no,
                    reason: format!("disaster_type {kind} differs from earlier records ({t})"),
                })
            }
            Some(_) => {}
        }
        if !seen.insert(sample.sample_id.clone()) {
            return Err(Error::DuplicateSampleId {
                line: line_no,
                sample_id: sample.sample_id,
            });
        }
        samples.push(sample);
    }
    let disaster_type = disaster_type.ok_or_else(|| Error::Malformed {
        line: 0,
        reason: "manifest contains no records".into(),
    })?;
    Ok(Dataset { disaster_type, samples })
}

fn parse_record(line: &str, line_no: usize) -> Result<(DisasterType, Sample)> {
    let malformed = |reason: String| Error::Malformed { line: line_no, reason };
    let value: Value = serde_json::from_str(line).map_err(|e| {
        if has_bare_non_finite(line) {
            Error::NonFinite {
                line: line_no,
                field: "record",
            }
        } else {
            malformed(e.to_string())
        }
    })?;
    let Value::Object(obj) = value else {
        return Err(malformed("record is not a JSON object".into()));
    };
    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            log::warn!("line {line_no}: ignoring unknown field {key:?}");
        }
    }

    let sample_id = string_field(&obj, "sample_id", line_no)?;
    if sample_id.is_empty() {
        return Err(malformed("sample_id is empty".into()));
    }
    let name = string_field(&obj, "city", line_no)?;
    let country = string_field(&obj, "country", line_no)?;
    let lat = number_field(&obj, "lat", line_no)?;
    let lon = number_field(&obj, "lon", line_no)?;
    let city = City::new(name, country, lat, lon).map_err(|e| malformed(e.to_string()))?;
    let disaster_type: DisasterType = string_field(&obj, "disaster_type", line_no)?
        .parse()
        .map_err(|e: Error| malformed(e.to_string()))?;
    let label = match obj.get("label").and_then(Value::as_u64) {
        Some(0) => false,
        Some(1) => true,
        _ => return Err(malformed("label must be 0 or 1".into())),
    };
    let synthetic = match obj.get("synthetic") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(malformed("synthetic must be a boolean".into())),
    };

    let sample = Sample {
        sample_id,
        city,
        label,
        weather: vector_field(&obj, Modality::Weather, line_no)?,
        text_emb: vector_field(&obj, Modality::Text, line_no)?,
        image_emb: vector_field(&obj, Modality::Image, line_no)?,
        synthetic,
    };
    Ok((disaster_type, sample))
}

fn string_field(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(Error::Malformed {
            line,
            reason: format!("field {field:?} missing or not a string"),
        }),
    }
}

fn number_field(obj: &Map<String, Value>, field: &str, line: usize) -> Result<f64> {
    obj.get(field).and_then(Value::as_f64).ok_or_else(|| Error::Malformed {
        line,
        reason: format!("field {field:?} missing or not a number"),
    })
}

fn vector_field(obj: &Map<String, Value>, modality: Modality, line: usize) -> Result<Option<Vec<f64>>> {
    let field = modality.field();
    let items = match obj.get(field) {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Array(items)) => items,
        Some(_) => {
            return Err(Error::Malformed {
                line,
                reason: format!("field {field:?} is not an array"),
            })
        }
    };
    let mut values = Vec::with_capacity(items.len());
    for item in items {
        let v = match item {
            Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
            // Python's json module writes NaN/Infinity; some writers quote them or use null
            Value::Null => f64::NAN,
            Value::String(s) if matches!(s.as_str(), "NaN" | "Infinity" | "-Infinity" | "inf" | "-inf") => f64::NAN,
            _ => {
                return Err(Error::Malformed {
                    line,
                    reason: format!("field {field:?} contains a non-numeric element"),
                })
            }
        };
        values.push(v);
    }
    match check_vector(&values, modality.dim()) {
        Ok(()) => Ok(Some(values)),
        Err(VectorFault::Dimension { expected, actual }) => Err(Error::Dimension {
            line,
            field,
            expected,
            actual,
        }),
        Err(VectorFault::NonFinite) => Err(Error::NonFinite { line, field }),
    }
}

/// True when `NaN` or `Infinity` appears as a bare token outside string literals.
fn has_bare_non_finite(line: &str) -> bool {
    let mut in_string = false;
    let mut escaped = false;
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        if b == b'"' {
            in_string = true;
        } else if bytes[i..].starts_with(b"NaN") || bytes[i..].starts_with(b"Infinity") {
            return true;
        }
    }
    false
}

#[derive(Serialize)]
struct RecordOut<'a> {
    sample_id: &'a str,
    city: &'a str,
    country: &'a str,
    lat: f64,
    lon: f64,
    disaster_type: DisasterType,
    label: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    weather: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text_emb: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_emb: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    synthetic: bool,
}

pub fn write_manifest_to(ds: &Dataset, mut out: impl Write) -> Result<()> {
    let to_err = |e: std::io::Error| Error::io("<manifest>", e);
    for s in &ds.samples {
        let record = RecordOut {
            sample_id: &s.sample_id,
            city: &s.city.name,
            country: &s.city.country,
            lat: s.city.lat,
            lon: s.city.lon,
            disaster_type: ds.disaster_type,
            label: s.label as u8,
            weather: s.weather.as_deref(),
            text_emb: s.text_emb.as_deref(),
            image_emb: s.image_emb.as_deref(),
            synthetic: s.synthetic,
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::io("<manifest>", e.into()))?;
        out.write_all(b"\n").map_err(to_err)?;
    }
    out.flush().map_err(to_err)
}

pub fn write_manifest(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest_to(ds, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}
