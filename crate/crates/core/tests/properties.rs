//! Property tests for the dataset, resampling and metric invariants.

use geoseer_core::dataset::{
    filter_eligible_cities, fuse_features, stratified_split, vectorize_weather, City, DisasterEvent, DisasterType,
    Modality, ModalityMask, Sample, WeatherHistory, WeatherYear, IMAGE_DIM, TEXT_DIM, WEATHER_DIM,
};
use geoseer_core::manifest::{read_manifest, write_manifest_to};
use geoseer_core::metrics::{auroc, balanced_accuracy, confusion, f1, ConfusionMatrix};
use geoseer_core::resample::{smote_oversample_traced, SmoteParams};
use geoseer_core::Dataset;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    -1e6..1e6f64
}

type Blocks = (bool, Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>);

fn sample_strategy() -> impl Strategy<Value = Blocks> {
    (
        any::<bool>(),
        prop::option::of(prop::collection::vec(finite(), WEATHER_DIM)),
        prop::option::of(prop::collection::vec(finite(), TEXT_DIM)),
        prop::option::of(prop::collection::vec(finite(), IMAGE_DIM)),
    )
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (
        prop::collection::vec(sample_strategy(), 1..12),
        prop_oneof![Just(DisasterType::Flood), Just(DisasterType::Landslide)],
        -90.0..90.0f64,
        -180.0..180.0f64,
    )
        .prop_map(|(parts, disaster_type, lat, lon)| {
            let samples = parts
                .into_iter()
                .enumerate()
                .map(|(i, (label, weather, text_emb, image_emb))| Sample {
                    sample_id: format!("id-{i}"),
                    city: City::new(format!("Town \"{i}\""), "Ütopia", lat, lon).unwrap(),
                    label,
                    weather,
                    text_emb,
                    image_emb,
                    synthetic: i % 3 == 0,
                })
                .collect();
            Dataset::new(disaster_type, samples).unwrap()
        })
}

fn mask_strategy() -> impl Strategy<Value = ModalityMask> {
    (1u8..8).prop_map(|bits| ModalityMask::new(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0).unwrap())
}

fn full_sample(values: &[f64]) -> Sample {
    Sample {
        sample_id: "s".into(),
        city: City::new("C", "X", 0.0, 0.0).unwrap(),
        label: true,
        weather: Some(values[..WEATHER_DIM].to_vec()),
        text_emb: Some(values[WEATHER_DIM..WEATHER_DIM + TEXT_DIM].to_vec()),
        image_emb: Some(values[WEATHER_DIM + TEXT_DIM..].to_vec()),
        synthetic: false,
    }
}

proptest! {
    #[test]
    fn manifest_round_trip(ds in dataset_strategy()) {
        let mut buf = Vec::new();
        write_manifest_to(&ds, &mut buf).unwrap();
        let back = read_manifest(buf.as_slice()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn weather_vector_is_bijective(values in prop::collection::vec(finite(), WEATHER_DIM), first in 1990i32..2030) {
        let history = WeatherHistory::from_vector(first, &values).unwrap();
        let v = vectorize_weather(&history).unwrap();
        prop_assert_eq!(&v[..], &values[..]);
        let rebuilt = WeatherHistory {
            years: history.years.iter().map(|y| WeatherYear { year: y.year, values: y.values }).collect(),
        };
        prop_assert_eq!(rebuilt, history);
    }

    #[test]
    fn fusion_is_block_selection(values in prop::collection::vec(finite(), 103), mask in mask_strategy()) {
        let s = full_sample(&values);
        let full = fuse_features(&s, ModalityMask::ALL).unwrap();
        let part = fuse_features(&s, mask).unwrap();
        let expected_len = 25 * mask.weather as usize + 32 * mask.text as usize + 46 * mask.image as usize;
        prop_assert_eq!(part.dim(), expected_len);
        let mut expected = Vec::new();
        for (m, block) in full.blocks() {
            if mask.contains(m) {
                expected.extend_from_slice(block);
            }
        }
        prop_assert_eq!(part.values, expected);
    }

    #[test]
    fn split_partitions_and_tracks_fraction(pos in 1usize..60, neg in 1usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let samples: Vec<Sample> = (0..pos + neg)
            .map(|i| {
                let mut s = full_sample(&[0.0; 103]);
                s.sample_id = format!("s{i}");
                s.label = i < pos;
                s
            })
            .collect();
        let ds = Dataset::new(DisasterType::Flood, samples).unwrap();
        let (train, test) = stratified_split(&ds, frac, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), ds.len());
        let mut ids: Vec<&str> = train.samples.iter().chain(&test.samples).map(|s| s.sample_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), ds.len());
        let tc = test.class_counts();
        for (in_test, total) in [(tc.positive, pos), (tc.negative, neg)] {
            prop_assert!((in_test as f64 / total as f64 - frac).abs() <= 1.0 / total as f64 + 1e-12);
        }
        prop_assert_eq!(stratified_split(&ds, frac, seed).unwrap(), (train, test));
    }

    #[test]
    fn filter_is_monotone(
        events in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 0..20),
        cities in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..8),
        radius in 1.0..400.0f64,
        extra in 0.0..300.0f64,
        min_events in 1usize..5,
    ) {
        let cities: Vec<City> = cities.iter().enumerate()
            .map(|(i, &(lat, lon))| City::new(format!("c{i}"), "X", lat, lon).unwrap())
            .collect();
        let events: Vec<DisasterEvent> = events.iter()
            .map(|&(lat, lon)| DisasterEvent { disaster_type: DisasterType::Landslide, lat, lon, year: 1999 })
            .collect();
        let base = filter_eligible_cities(&cities, &events, radius, min_events).unwrap();
        let wider = filter_eligible_cities(&cities, &events, radius + extra, min_events).unwrap();
        let looser = filter_eligible_cities(&cities, &events, radius, (min_events - 1).max(1)).unwrap();
        for c in &base {
            prop_assert!(wider.contains(c));
            prop_assert!(looser.contains(c));
        }
    }

    #[test]
    fn smote_points_lie_on_segments(
        minority in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 2..10),
        majority in 10usize..30,
        k in 1usize..7,
        seed in any::<u64>(),
    ) {
        let mk = |i: usize, label: bool, head: &[f64]| {
            let mut weather = vec![0.0; WEATHER_DIM];
            weather[..head.len()].copy_from_slice(head);
            Sample {
                sample_id: format!("s{i}"),
                city: City::new("C", "X", 0.0, 0.0).unwrap(),
                label,
                weather: Some(weather),
                text_emb: None,
                image_emb: None,
                synthetic: false,
            }
        };
        let mut samples: Vec<Sample> = minority.iter().enumerate().map(|(i, p)| mk(i, true, p)).collect();
        samples.extend((0..majority).map(|j| mk(100 + j, false, &[j as f64, 0.0, 0.0])));
        let ds = Dataset::new(DisasterType::Flood, samples).unwrap();
        let mask = ModalityMask::new(true, false, false).unwrap();
        let params = SmoteParams { k_neighbors: k, seed, ..SmoteParams::default() };
        let out = smote_oversample_traced(&ds, mask, &params).unwrap();
        let counts = out.dataset.class_counts();
        prop_assert_eq!(counts.positive, counts.negative);
        prop_assert_eq!(&out.dataset.samples[..ds.len()], &ds.samples[..]);
        for (s, o) in out.dataset.samples[ds.len()..].iter().zip(&out.origins) {
            prop_assert!(s.synthetic && s.label);
            let a = ds.samples[o.source].weather.as_ref().unwrap();
            let b = ds.samples[o.neighbor].weather.as_ref().unwrap();
            let v = s.weather.as_ref().unwrap();
            for d in 0..WEATHER_DIM {
                prop_assert!(v[d] >= a[d].min(b[d]) && v[d] <= a[d].max(b[d]));
            }
        }
        prop_assert_eq!(smote_oversample_traced(&ds, mask, &params).unwrap(), out);
    }

    #[test]
    fn auroc_complement_and_monotone(
        data in prop::collection::vec((any::<bool>(), 0u8..20), 2..64),
    ) {
        let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = data.iter().map(|d| d.1 as f64 / 20.0).collect();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let a = auroc(&labels, &scores).unwrap();
        prop_assert!((a + auroc(&flipped, &scores).unwrap() - 1.0).abs() < 1e-12);
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        prop_assert!((auroc(&labels, &cubed).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn confusion_metrics_in_unit_interval(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
        let cm = ConfusionMatrix { tp, fp, tn, fn_, threshold: 0.5 };
        let v = f1(&cm);
        prop_assert!((0.0..=1.0).contains(&v));
        if let Ok(b) = balanced_accuracy(&cm) {
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn balanced_accuracy_equals_accuracy_on_balanced_sets(scores in prop::collection::vec(0.0..1.0f64, 1..40)) {
        let n = scores.len();
        let labels: Vec<bool> = (0..2 * n).map(|i| i < n).collect();
        let all: Vec<f64> = scores.iter().chain(scores.iter().rev()).map(|s| s * 0.9 + 0.05).collect();
        let cm = confusion(&labels, &all, 0.5).unwrap();
        prop_assert!((balanced_accuracy(&cm).unwrap() - cm.accuracy()).abs() < 1e-12);
    }
}

#[test]
fn modality_dims() {
    assert_eq!(Modality::ALL.iter().map(|m| m.dim()).sum::<usize>(), 103);
}
