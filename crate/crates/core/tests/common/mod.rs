#![allow(dead_code)]

use std::path::PathBuf;

use salbench::mosaic::{plan_dataset, DatasetConfig, ImageRecord, MosaicManifest, OtherClassPolicy};

/// In-memory image pool: `per_class` placeholder records for each class.
pub fn fake_pool(classes: &[&str], per_class: usize) -> Vec<ImageRecord> {
    classes
        .iter()
        .flat_map(|class| {
            (0..per_class).map(move |i| ImageRecord {
                image_id: format!("{class}/{i:03}.png"),
                class_label: class.to_string(),
                source_path: PathBuf::from(format!("/nonexistent/{class}/{i:03}.png")),
            })
        })
        .collect()
}

/// Layouts of `n` cat-vs-car mosaics (half per target class), sampled
/// without touching any image file.
pub fn two_class_manifest(n: usize, cell_pixels: u32, seed: u64) -> MosaicManifest {
    let pool = fake_pool(&["cat", "car"], 100);
    let config = DatasetConfig {
        dataset_name: "cats-cars".into(),
        classes_dir: PathBuf::from("/nonexistent"),
        targets: vec![("cat".into(), n - n / 2), ("car".into(), n / 2)],
        policy: OtherClassPolicy::RandomSingle,
        global_seed: seed,
        out_dir: PathBuf::from("/nonexistent"),
        cell_pixels,
    };
    plan_dataset(&config, &pool).expect("pool is large enough")
}
