//! Domain types for city-level disaster samples, plus the operations that
//! shape raw records into classifier input: weather vectorization, the
//! eligible-city radius filter, stratified splitting and modality fusion.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEATHER_YEARS: usize = 5;
pub const WEATHER_FEATURES: usize = 5;
pub const WEATHER_DIM: usize = WEATHER_YEARS * WEATHER_FEATURES;
pub const TEXT_DIM: usize = 32;
pub const IMAGE_DIM: usize = 46;
pub const FULL_DIM: usize = WEATHER_DIM + TEXT_DIM + IMAGE_DIM;

/// Mean Earth radius used by the great-circle distance.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Distances this close to the radius are treated as lying on the boundary.
const BOUNDARY_EPS_KM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub country: String,
    pub lat: f64,
    pub lon: f64,
}

impl City {
    pub fn new(name: impl Into<String>, country: impl Into<String>, lat: f64, lon: f64) -> Result<Self> {
        let city = City {
            name: name.into(),
            country: country.into(),
            lat,
            lon,
        };
        city.validate()?;
        Ok(city)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.country.trim().is_empty() {
            return Err(Error::invalid("city", "name and country must be non-empty"));
        }
        validate_coordinates(self.lat, self.lon)
    }
}

fn validate_coordinates(lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::invalid(
            "coordinates",
            format!("({lat}, {lon}) outside [-90, 90] x [-180, 180]"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisasterType {
    Flood,
    Landslide,
}

impl DisasterType {
    pub fn as_str(self) -> &'static str {
        match self {
            DisasterType::Flood => "flood",
            DisasterType::Landslide => "landslide",
        }
    }
}

impl fmt::Display for DisasterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DisasterType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flood" => Ok(DisasterType::Flood),
            "landslide" => Ok(DisasterType::Landslide),
            other => Err(Error::invalid(
                "disaster_type",
                format!("{other:?} is not flood|landslide"),
            )),
        }
    }
}

/// A historical disaster occurrence used by the eligible-city filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisasterEvent {
    pub disaster_type: DisasterType,
    pub lat: f64,
    pub lon: f64,
    pub year: i32,
}

impl DisasterEvent {
    pub const FIRST_YEAR: i32 = 1960;
    pub const LAST_YEAR: i32 = 2018;

    pub fn validate(&self) -> Result<()> {
        validate_coordinates(self.lat, self.lon)?;
        if !(Self::FIRST_YEAR..=Self::LAST_YEAR).contains(&self.year) {
            return Err(Error::invalid(
                "event year",
                format!("{} outside {}..={}", self.year, Self::FIRST_YEAR, Self::LAST_YEAR),
            ));
        }
        Ok(())
    }
}

/// Annual weather statistics, in the order they appear inside each year's
/// block of the weather vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeatherFeature {
    Temperature,
    DewPoint,
    RelativeHumidity,
    WindSpeed,
    Precipitation,
}

impl WeatherFeature {
    pub const ALL: [WeatherFeature; WEATHER_FEATURES] = [
        WeatherFeature::Temperature,
        WeatherFeature::DewPoint,
        WeatherFeature::RelativeHumidity,
        WeatherFeature::WindSpeed,
        WeatherFeature::Precipitation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherYear {
    pub year: i32,
    /// Indexed by [`WeatherFeature::index`].
    pub values: [f64; WEATHER_FEATURES],
}

/// Five consecutive years of annual weather statistics for one city.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherHistory {
    pub years: Vec<WeatherYear>,
}

impl WeatherHistory {
    pub fn validate(&self) -> Result<()> {
        if self.years.len() != WEATHER_YEARS {
            return Err(Error::invalid(
                "weather history",
                format!("{} years, expected {WEATHER_YEARS}", self.years.len()),
            ));
        }
        for pair in self.years.windows(2) {
            if pair[1].year != pair[0].year + 1 {
                return Err(Error::invalid(
                    "weather history",
                    format!(
                        "years {} and {} are not consecutive ascending",
                        pair[0].year, pair[1].year
                    ),
                ));
            }
        }
        if self.years.iter().flat_map(|y| y.values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("weather history", "non-finite value"));
        }
        Ok(())
    }

    /// Inverse of [`vectorize_weather`]: rebuilds the table from a
    /// year-major vector whose first block belongs to `first_year`.
    pub fn from_vector(first_year: i32, vector: &[f64]) -> Result<Self> {
        if vector.len() != WEATHER_DIM {
            return Err(Error::invalid(
                "weather vector",
                format!("{} values, expected {WEATHER_DIM}", vector.len()),
            ));
        }
        let years = vector
            .chunks_exact(WEATHER_FEATURES)
            .zip(first_year..)
            .map(|(chunk, year)| {
                let mut values = [0.0; WEATHER_FEATURES];
                values.copy_from_slice(chunk);
                WeatherYear { year, values }
            })
            .collect();
        let history = WeatherHistory { years };
        history.validate()?;
        Ok(history)
    }

    pub fn get(&self, year: i32, feature: WeatherFeature) -> Option<f64> {
        self.years
            .iter()
            .find(|y| y.year == year)
            .map(|y| y.values[feature.index()])
    }
}

/// Flattens a weather table year-major: `out[5 * year + feature]`.
pub fn vectorize_weather(history: &WeatherHistory) -> Result<[f64; WEATHER_DIM]> {
    history.validate()?;
    let mut out = [0.0; WEATHER_DIM];
    for (y, year) in history.years.iter().enumerate() {
        out[y * WEATHER_FEATURES..(y + 1) * WEATHER_FEATURES].copy_from_slice(&year.values);
    }
    Ok(out)
}

/// One city-year record with whichever modality vectors were acquired.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub city: City,
    pub label: bool,
    pub weather: Option<Vec<f64>>,
    pub text_emb: Option<Vec<f64>>,
    pub image_emb: Option<Vec<f64>>,
    pub synthetic: bool,
}

/// Why a modality vector was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VectorFault {
    Dimension { expected: usize, actual: usize },
    NonFinite,
}

pub(crate) fn check_vector(values: &[f64], expected: usize) -> Result<(), VectorFault> {
    if values.len() != expected {
        return Err(VectorFault::Dimension {
            expected,
            actual: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(VectorFault::NonFinite);
    }
    Ok(())
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        if self.sample_id.is_empty() {
            return Err(Error::invalid("sample", "empty sample_id"));
        }
        self.city.validate()?;
        for (modality, values) in self.modalities() {
            if let Some(values) = values {
                check_vector(values, modality.dim()).map_err(|fault| {
                    let reason = match fault {
                        VectorFault::Dimension { expected, actual } => {
                            format!("{} has {actual} values, expected {expected}", modality.field())
                        }
                        VectorFault::NonFinite => format!("{} contains a non-finite value", modality.field()),
                    };
                    Error::invalid("sample", format!("{}: {reason}", self.sample_id))
                })?;
            }
        }
        Ok(())
    }

    pub fn modality(&self, modality: Modality) -> Option<&[f64]> {
        match modality {
            Modality::Weather => self.weather.as_deref(),
            Modality::Text => self.text_emb.as_deref(),
            Modality::Image => self.image_emb.as_deref(),
        }
    }

    fn modalities(&self) -> [(Modality, Option<&Vec<f64>>); 3] {
        [
            (Modality::Weather, self.weather.as_ref()),
            (Modality::Text, self.text_emb.as_ref()),
            (Modality::Image, self.image_emb.as_ref()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub disaster_type: DisasterType,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Builds a dataset, checking every sample and sample_id uniqueness.
    pub fn new(disaster_type: DisasterType, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            s.validate()?;
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId {
                    line: i + 1,
                    sample_id: s.sample_id.clone(),
                });
            }
        }
        Ok(Dataset { disaster_type, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let positive = self.samples.iter().filter(|s| s.label).count();
        ClassCounts {
            positive,
            negative: self.samples.len() - positive,
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Weather,
    Text,
    Image,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Weather, Modality::Text, Modality::Image];

    pub fn dim(self) -> usize {
        match self {
            Modality::Weather => WEATHER_DIM,
            Modality::Text => TEXT_DIM,
            Modality::Image => IMAGE_DIM,
        }
    }

    /// Manifest field name.
    pub fn field(self) -> &'static str {
        match self {
            Modality::Weather => "weather",
            Modality::Text => "text_emb",
            Modality::Image => "image_emb",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Modality::Weather => "Weather",
            Modality::Text => "Text",
            Modality::Image => "Image",
        }
    }
}

/// Which modalities participate in a fused feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalityMask {
    pub weather: bool,
    pub text: bool,
    pub image: bool,
}

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask {
        weather: true,
        text: true,
        image: true,
    };

    pub fn new(weather: bool, text: bool, image: bool) -> Result<Self> {
        if !(weather || text || image) {
            return Err(Error::invalid("modality mask", "at least one modality must be enabled"));
        }
        Ok(ModalityMask { weather, text, image })
    }

    pub fn contains(&self, modality: Modality) -> bool {
        match modality {
            Modality::Weather => self.weather,
            Modality::Text => self.text,
            Modality::Image => self.image,
        }
    }

    /// Enabled modalities in fusion order.
    pub fn modalities(&self) -> impl Iterator<Item = Modality> + '_ {
        Modality::ALL.into_iter().filter(|m| self.contains(*m))
    }

    pub fn dim(&self) -> usize {
        self.modalities().map(Modality::dim).sum()
    }

    /// Column title, e.g. `Weather, Text, Image`.
    pub fn title(&self) -> String {
        self.modalities().map(Modality::title).collect::<Vec<_>>().join(", ")
    }

    /// Compact code, e.g. `wti` or `wi`.
    pub fn code(&self) -> String {
        self.modalities()
            .map(|m| match m {
                Modality::Weather => 'w',
                Modality::Text => 't',
                Modality::Image => 'i',
            })
            .collect()
    }
}

impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.title())
    }
}

impl FromStr for ModalityMask {
    type Err = Error;

    /// Accepts compact codes (`wti`, `w`, `ti`) or comma lists (`weather,image`).
    fn from_str(s: &str) -> Result<Self> {
        let mut mask = ModalityMask {
            weather: false,
            text: false,
            image: false,
        };
        let lowered = s.trim().to_ascii_lowercase();
        let tokens: Vec<&str> = if lowered.contains(',') || lowered.contains('+') {
            lowered.split([',', '+']).map(str::trim).collect()
        } else if lowered.chars().all(|c| "wti".contains(c)) {
            lowered.matches(|_| true).collect()
        } else {
            vec![lowered.as_str()]
        };
        for token in tokens {
            match token {
                "w" | "weather" => mask.weather = true,
                "t" | "text" => mask.text = true,
                "i" | "image" => mask.image = true,
                other => {
                    return Err(Error::invalid("modality mask", format!("unknown modality {other:?}")));
                }
            }
        }
        ModalityMask::new(mask.weather, mask.text, mask.image)
    }
}

/// Flat classifier input built from a sample under a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mask: ModalityMask,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Splits the fused vector back into per-modality blocks.
    pub fn blocks(&self) -> impl Iterator<Item = (Modality, &[f64])> + '_ {
        let mut offset = 0;
        self.mask.modalities().map(move |m| {
            let block = &self.values[offset..offset + m.dim()];
            offset += m.dim();
            (m, block)
        })
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Concatenates the enabled modalities in the order weather, text, image.
pub fn fuse_features(sample: &Sample, mask: ModalityMask) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(mask.dim());
    for modality in mask.modalities() {
        let block = sample.modality(modality).ok_or_else(|| Error::MissingModality {
            sample_id: sample.sample_id.clone(),
            modality: modality.field(),
        })?;
        values.extend_from_slice(block);
    }
    Ok(FeatureVector { values, mask })
}

/// Great-circle distance by the haversine formula.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().atan2((1.0 - a).max(0.0).sqrt())
}

/// Keeps cities with at least `min_events` events inside `radius_km`
/// (boundary inclusive), in input order.
pub fn filter_eligible_cities(
    cities: &[City],
    events: &[DisasterEvent],
    radius_km: f64,
    min_events: usize,
) -> Result<Vec<City>> {
    if !(radius_km > 0.0 && radius_km.is_finite()) {
        return Err(Error::invalid("radius_km", format!("{radius_km} must be positive")));
    }
    if min_events == 0 {
        return Err(Error::invalid("min_events", "must be at least 1"));
    }
    for city in cities {
        city.validate()?;
    }
    for event in events {
        event.validate()?;
    }
    Ok(cities
        .iter()
        .filter(|city| {
            let nearby = events
                .iter()
                .filter(|e| haversine_km(city.lat, city.lon, e.lat, e.lon) <= radius_km + BOUNDARY_EPS_KM)
                .count();
            nearby >= min_events
        })
        .cloned()
        .collect())
}

/// Number of test samples drawn from a class of `count` samples.
pub fn test_count(count: usize, test_fraction: f64) -> usize {
    // small slack so products like 5 * 0.3 land on the half
    (count as f64 * test_fraction + 0.5 + 1e-9).floor() as usize
}

/// Per-class split: each class contributes `round_half_up(n * test_fraction)`
/// samples to the test side, chosen by a seeded shuffle. Negatives are
/// shuffled before positives from the same generator. Both halves keep the
/// dataset's original order.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(
            "test_fraction",
            format!("{test_fraction} not in (0, 1)"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; ds.samples.len()];
    for label in [false, true] {
        let mut members: Vec<usize> = ds
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(Error::EmptyClass { label: label as u8 });
        }
        members.shuffle(&mut rng);
        for &i in &members[..test_count(members.len(), test_fraction)] {
            in_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (sample, is_test) in ds.samples.iter().zip(in_test) {
        if is_test {
            test.push(sample.clone());
        } else {
            train.push(sample.clone());
        }
    }
    Ok((
        Dataset {
            disaster_type: ds.disaster_type,
            samples: train,
        },
        Dataset {
            disaster_type: ds.disaster_type,
            samples: test,
        },
    ))
}
