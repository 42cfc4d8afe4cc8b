//! Shared inputs for the criterion benches.

use geoseer_core::dataset::fuse_features;
use geoseer_core::synth::{planted_dataset, SynthConfig};
use geoseer_core::{Dataset, DisasterType, ModalityMask};

/// Flood-sized training set: 126 positives, 646 negatives.
pub fn flood_train() -> Dataset {
    planted_dataset(&SynthConfig {
        disaster_type: DisasterType::Flood,
        samples: 772,
        positives: 126,
        seed: 11,
        ..SynthConfig::default()
    })
}

pub fn fused_rows(ds: &Dataset, mask: ModalityMask) -> (Vec<Vec<f64>>, Vec<bool>) {
    let rows = ds
        .samples
        .iter()
        .map(|s| {
            fuse_features(s, mask)
                .expect("synthetic samples carry every modality")
                .values
        })
        .collect();
    (rows, ds.labels())
}
