//! SMOTE oversampling of the minority class.
//!
//! Synthetic points are interpolated in the fused feature space of a
//! [`ModalityMask`]: for the j-th synthetic sample the source is minority
//! point `j mod m`, the partner is drawn uniformly from its k nearest
//! minority neighbours, and the point is `x + lambda (neighbor - x)` with
//! `lambda ~ U[0, 1)`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{fuse_features, Dataset, FeatureVector, Modality, ModalityMask, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoteTarget {
    /// Oversample until both classes have the same size.
    Balance,
    /// Oversample until the minority class has this many samples.
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoteParams {
    pub k_neighbors: usize,
    pub seed: u64,
    pub target: SmoteTarget,
}

impl Default for SmoteParams {
    fn default() -> Self {
        SmoteParams {
            k_neighbors: 5,
            seed: 42,
            target: SmoteTarget::Balance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// k nearest neighbours of every point, distance ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl NeighborTable {
    pub fn of(&self, point: usize) -> &[Neighbor] {
        &self.neighbors[point]
    }

    pub fn indices(&self, point: usize) -> Vec<usize> {
        self.neighbors[point].iter().map(|n| n.index).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact brute-force k-NN under Euclidean distance. `k` is clamped to
/// `n - 1`; ties go to the lower index.
pub fn knn_minority<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<NeighborTable> {
    if points.len() < 2 {
        return Err(Error::TooFewMinority { count: points.len() });
    }
    if k == 0 {
        return Err(Error::invalid("k_neighbors", "must be at least 1"));
    }
    let dim = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::FeatureDim {
            expected: dim,
            actual: p.as_ref().len(),
        });
    }
    let k = k.min(points.len() - 1);
    let neighbors = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut dists: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (squared_distance(p.as_ref(), q.as_ref()), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists
                .into_iter()
                .take(k)
                .map(|(d2, index)| Neighbor {
                    index,
                    distance: d2.sqrt(),
                })
                .collect()
        })
        .collect();
    Ok(NeighborTable { neighbors })
}

/// Where a synthetic sample came from, as indices into the input dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub source: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutcome {
    pub dataset: Dataset,
    /// One entry per synthetic sample, in output order.
    pub origins: Vec<SyntheticOrigin>,
    pub minority_label: bool,
}

pub fn smote_oversample(ds: &Dataset, mask: ModalityMask, params: &SmoteParams) -> Result<Dataset> {
    smote_oversample_traced(ds, mask, params).map(|o| o.dataset)
}

/// As [`smote_oversample`], also reporting each synthetic sample's endpoints.
pub fn smote_oversample_traced(ds: &Dataset, mask: ModalityMask, params: &SmoteParams) -> Result<SmoteOutcome> {
    if params.k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors", "must be at least 1"));
    }
    let counts = ds.class_counts();
    // ties make the positive class the minority
    let minority_label = counts.positive <= counts.negative;
    let (minority, majority) = if minority_label {
        (counts.positive, counts.negative)
    } else {
        (counts.negative, counts.positive)
    };
    let target = match params.target {
        SmoteTarget::Balance => majority,
        SmoteTarget::Count(n) if n < minority => {
            return Err(Error::invalid(
                "smote target",
                format!("count {n} is below the current minority count {minority}"),
            ));
        }
        SmoteTarget::Count(n) => n,
    };
    let n_synthetic = target - minority;
    if n_synthetic == 0 {
        return Ok(SmoteOutcome {
            dataset: ds.clone(),
            origins: Vec::new(),
            minority_label,
        });
    }
    if minority < 2 {
        return Err(Error::TooFewMinority { count: minority });
    }

    let members: Vec<usize> = ds
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == minority_label)
        .map(|(i, _)| i)
        .collect();
    let points: Vec<FeatureVector> = members
        .iter()
        .map(|&i| fuse_features(&ds.samples[i], mask))
        .collect::<Result<_>>()?;
    let table = knn_minority(&points, params.k_neighbors)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut taken: HashSet<String> = ds.samples.iter().map(|s| s.sample_id.clone()).collect();
    let mut samples = ds.samples.clone();
    let mut origins = Vec::with_capacity(n_synthetic);
    samples.reserve(n_synthetic);

    for j in 0..n_synthetic {
        let local = j % members.len();
        let candidates = table.of(local);
        let partner = candidates[rng.random_range(0..candidates.len())].index;
        let lambda: f64 = rng.random();
        let (x, x_n) = (&points[local].values, &points[partner].values);
        let values: Vec<f64> = x.iter().zip(x_n).map(|(a, b)| a + lambda * (b - a)).collect();

        let source = &ds.samples[members[local]];
        let mut sample_id = format!("{}#smote{j}", source.sample_id);
        while taken.contains(&sample_id) {
            sample_id.push('_');
        }
        taken.insert(sample_id.clone());
        samples.push(synthetic_sample(source, sample_id, minority_label, mask, &values));
        origins.push(SyntheticOrigin {
            source: members[local],
            neighbor: members[partner],
            lambda,
        });
    }

    Ok(SmoteOutcome {
        dataset: Dataset {
            disaster_type: ds.disaster_type,
            samples,
        },
        origins,
        minority_label,
    })
}

fn synthetic_sample(source: &Sample, sample_id: String, label: bool, mask: ModalityMask, fused: &[f64]) -> Sample {
    let mut sample = Sample {
        sample_id,
        city: source.city.clone(),
        label,
        weather: None,
        text_emb: None,
        image_emb: None,
        synthetic: true,
    };
    let mut offset = 0;
    for modality in mask.modalities() {
        let block = fused[offset..offset + modality.dim()].to_vec();
        offset += modality.dim();
        match modality {
            Modality::Weather => sample.weather = Some(block),
            Modality::Text => sample.text_emb = Some(block),
            Modality::Image => sample.image_emb = Some(block),
        }
    }
    sample
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{City, DisasterType, IMAGE_DIM, TEXT_DIM, WEATHER_DIM};

    #[test]
    fn knn_on_a_line() {
        let t = knn_minority(&[[0.0], [1.0], [3.0]], 1).unwrap();
        assert_eq!(t.indices(0), vec![1]);
        assert_eq!(t.indices(1), vec![0]);
        assert_eq!(t.indices(2), vec![1]);
        assert_eq!(t.of(2)[0].distance, 2.0);
    }

    #[test]
    fn knn_identical_points_and_clamping() {
        let t = knn_minority(&[[2.0, 2.0], [2.0, 2.0]], 1).unwrap();
        assert_eq!(t.indices(0), vec![1]);
        assert_eq!(t.indices(1), vec![0]);
        assert_eq!(t.of(0)[0].distance, 0.0);

        let t = knn_minority(&[[0.0], [1.0], [2.0]], 5).unwrap();
        assert!(t.neighbors.iter().all(|n| n.len() == 2));
        // equidistant neighbours of the middle point: lower index first
        assert_eq!(t.indices(1), vec![0, 2]);
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(
            knn_minority(&[[0.0]], 1),
            Err(Error::TooFewMinority { count: 1 })
        ));
        let ragged: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(knn_minority(&ragged, 1), Err(Error::FeatureDim { .. })));
    }

    fn dataset(points: &[([f64; 2], bool)]) -> Dataset {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, (p, label))| {
                let mut weather = vec![0.0; WEATHER_DIM];
                weather[..2].copy_from_slice(p);
                Sample {
                    sample_id: format!("s{i}"),
                    city: City::new("C", "X", 0.0, 0.0).unwrap(),
                    label: *label,
                    weather: Some(weather),
                    text_emb: Some(vec![1.0; TEXT_DIM]),
                    image_emb: Some(vec![0.0; IMAGE_DIM]),
                    synthetic: false,
                }
            })
            .collect();
        Dataset::new(DisasterType::Landslide, samples).unwrap()
    }

    #[test]
    fn midpoint_interpolation() {
        let ds = dataset(&[
            ([0.0, 0.0], true),
            ([1.0, 1.0], true),
            ([5.0, 5.0], false),
            ([6.0, 6.0], false),
            ([7.0, 7.0], false),
        ]);
        let out = smote_oversample_traced(&ds, "w".parse().unwrap(), &SmoteParams::default()).unwrap();
        assert_eq!(out.origins.len(), 1);
        let o = out.origins[0];
        assert_eq!((o.source, o.neighbor), (0, 1));
        let s = &out.dataset.samples[5];
        assert!(s.synthetic && s.label);
        let w = s.weather.as_ref().unwrap();
        assert_eq!(w[0], o.lambda);
        assert_eq!(w[1], o.lambda);
        // disabled modalities are not carried over
        assert!(s.text_emb.is_none() && s.image_emb.is_none());
    }

    #[test]
    fn balance_and_count_targets() {
        let mut pts = vec![([0.0, 0.0], true), ([1.0, 0.0], true), ([0.0, 1.0], true)];
        pts.extend((0..10).map(|i| ([i as f64, 5.0], false)));
        let ds = dataset(&pts);
        let mask = ModalityMask::ALL;
        let balanced = smote_oversample(&ds, mask, &SmoteParams::default()).unwrap();
        assert_eq!(balanced.class_counts().positive, 10);
        assert_eq!(balanced.class_counts().negative, 10);
        assert_eq!(&balanced.samples[..13], &ds.samples[..]);

        let params = SmoteParams {
            target: SmoteTarget::Count(6),
            ..SmoteParams::default()
        };
        let six = smote_oversample(&ds, mask, &params).unwrap();
        assert_eq!(six.class_counts().positive, 6);

        let params = SmoteParams {
            target: SmoteTarget::Count(2),
            ..SmoteParams::default()
        };
        assert!(smote_oversample(&ds, mask, &params).is_err());
    }

    #[test]
    fn already_balanced_is_identity() {
        let ds = dataset(&[([0.0, 0.0], true), ([1.0, 0.0], false)]);
        assert_eq!(
            smote_oversample(&ds, ModalityMask::ALL, &SmoteParams::default()).unwrap(),
            ds
        );
    }

    #[test]
    fn single_minority_point_rejected() {
        let ds = dataset(&[([0.0, 0.0], true), ([1.0, 0.0], false), ([2.0, 0.0], false)]);
        assert!(matches!(
            smote_oversample(&ds, ModalityMask::ALL, &SmoteParams::default()),
            Err(Error::TooFewMinority { count: 1 })
        ));
    }

    #[test]
    fn negative_minority_is_supported() {
        let ds = dataset(&[
            ([0.0, 0.0], false),
            ([1.0, 0.0], false),
            ([2.0, 0.0], true),
            ([3.0, 0.0], true),
            ([4.0, 0.0], true),
        ]);
        let out = smote_oversample_traced(&ds, ModalityMask::ALL, &SmoteParams::default()).unwrap();
        assert!(!out.minority_label);
        assert_eq!(out.dataset.class_counts().negative, 3);
    }

    #[test]
    fn synthetic_ids_avoid_collisions() {
        let mut ds = dataset(&[
            ([0.0, 0.0], true),
            ([1.0, 0.0], true),
            ([2.0, 0.0], false),
            ([3.0, 0.0], false),
            ([4.0, 0.0], false),
        ]);
        ds.samples[4].sample_id = "s0#smote0".into();
        let out = smote_oversample(&ds, ModalityMask::ALL, &SmoteParams::default()).unwrap();
        assert_eq!(out.samples[5].sample_id, "s0#smote0_");
        assert!(Dataset::new(out.disaster_type, out.samples).is_ok());
    }
}
