//! Seeded synthetic datasets with a planted label signal, for fixtures,
//! benchmarks and end-to-end checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{City, Dataset, DisasterType, Modality, Sample};

/// Number of leading dimensions of the signal modality that carry the label.
const SIGNAL_DIMS: usize = 4;

const COUNTRIES: [&str; 6] = ["Libya", "Nepal", "Brazil", "India", "Italy", "Peru"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub disaster_type: DisasterType,
    pub samples: usize,
    pub positives: usize,
    /// Modalities whose leading dimensions are shifted for positives.
    pub signal: Vec<Modality>,
    /// Mean shift, in noise standard deviations.
    pub strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            disaster_type: DisasterType::Flood,
            samples: 400,
            positives: 80,
            signal: vec![Modality::Image],
            strength: 1.5,
            seed: 42,
        }
    }
}

pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1]
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// All three modalities present; positives shifted on the configured
/// signal modalities only.
pub fn planted_dataset(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<bool> = (0..cfg.samples).map(|i| i < cfg.positives).collect();
    labels.shuffle(&mut rng);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut block = |m: Modality| -> Vec<f64> {
                let shift = if label && cfg.signal.contains(&m) {
                    cfg.strength
                } else {
                    0.0
                };
                (0..m.dim())
                    .map(|d| standard_normal(&mut rng) + if d < SIGNAL_DIMS { shift } else { 0.0 })
                    .collect()
            };
            let weather = block(Modality::Weather);
            let text_emb = block(Modality::Text);
            let image_emb = block(Modality::Image);
            let lat = rng.random_range(-60.0..60.0);
            let lon = rng.random_range(-180.0..180.0);
            Sample {
                sample_id: format!("{}-{i:05}", cfg.disaster_type),
                city: City {
                    name: format!("City {i}"),
                    country: COUNTRIES[i % COUNTRIES.len()].to_string(),
                    lat,
                    lon,
                },
                label,
                weather: Some(weather),
                text_emb: Some(text_emb),
                image_emb: Some(image_emb),
                synthetic: false,
            }
        })
        .collect();
    Dataset {
        disaster_type: cfg.disaster_type,
        samples,
    }
}

/// Uniform rows in `[-1, 1]^dim` labelled by the sign of a random
/// hyperplane through the origin.
pub fn separable_rows(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = rows
        .iter()
        .map(|r| r.iter().zip(&normal).map(|(x, w)| x * w).sum::<f64>() > 0.0)
        .collect();
    (rows, labels)
}
