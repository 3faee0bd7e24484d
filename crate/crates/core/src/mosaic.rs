//! Mosaic sampling, raster assembly and the dataset manifest.
//!
//! Cell coordinates use a bottom-left origin: `x` is the column (0 = left,
//! 1 = right) and `y` the row counted from the bottom (0 = bottom, 1 = top).
//! Raster rows grow downwards, so the cell at `y = 1` occupies the upper half
//! of the image.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::thread_pool;
use crate::seed::{derive_seed, rng_from_seed};

/// Side length of one mosaic cell in pixels.
pub const CELL_PIXELS: u32 = 224;
/// Side length of a full mosaic in pixels.
pub const MOSAIC_PIXELS: u32 = 2 * CELL_PIXELS;
/// File name of the dataset manifest inside an output directory.
pub const MANIFEST_FILE: &str = "manifest.json";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum MosaicError {
    #[error("insufficient pool: {0}")]
    InsufficientPool(String),
    #[error("unknown target class `{0}`")]
    UnknownTargetClass(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid mosaic spec `{id}`: {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("failed to decode image `{image_id}`: {source}")]
    Decode {
        image_id: String,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to encode mosaic `{mosaic_id}`: {source}")]
    Encode {
        mosaic_id: String,
        #[source]
        source: image::ImageError,
    },
    #[error("resize of `{image_id}` failed: {reason}")]
    Resize { image_id: String, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MosaicError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MosaicError + '_ {
    move |source| MosaicError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One labelled source image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub class_label: String,
    pub source_path: PathBuf,
}

/// Position of a cell inside the 2×2 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellPos {
    pub x: u8,
    pub y: u8,
}

impl CellPos {
    pub const BOTTOM_LEFT: CellPos = CellPos { x: 0, y: 0 };
    pub const BOTTOM_RIGHT: CellPos = CellPos { x: 1, y: 0 };
    pub const TOP_LEFT: CellPos = CellPos { x: 0, y: 1 };
    pub const TOP_RIGHT: CellPos = CellPos { x: 1, y: 1 };

    /// All four positions in raster reading order.
    pub const ALL: [CellPos; 4] = [
        Self::TOP_LEFT,
        Self::TOP_RIGHT,
        Self::BOTTOM_LEFT,
        Self::BOTTOM_RIGHT,
    ];

    fn is_valid(self) -> bool {
        self.x <= 1 && self.y <= 1
    }

    /// Raster `(row, col)` of the cell's top-left pixel.
    pub fn pixel_origin(self, cell_pixels: u32) -> (u32, u32) {
        (cell_pixels * (1 - u32::from(self.y)), cell_pixels * u32::from(self.x))
    }

    /// The cell containing raster pixel `(row, col)`; quadrants are half-open.
    pub fn from_pixel(row: u32, col: u32, cell_pixels: u32) -> CellPos {
        CellPos {
            x: u8::from(col >= cell_pixels),
            y: u8::from(row < cell_pixels),
        }
    }
}

impl fmt::Display for CellPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosaicCell {
    #[serde(flatten)]
    pub pos: CellPos,
    #[serde(flatten)]
    pub image: ImageRecord,
}

/// Layout of one mosaic: four images, two of them from `target_class`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosaicSpec {
    pub mosaic_id: String,
    pub cells: Vec<MosaicCell>,
    pub target_class: String,
    pub rng_seed: u64,
}

impl MosaicSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| MosaicError::InvalidSpec {
            id: self.mosaic_id.clone(),
            reason,
        };
        if self.cells.len() != 4 {
            return Err(invalid(format!("expected 4 cells, found {}", self.cells.len())));
        }
        let positions: HashSet<CellPos> = self.cells.iter().map(|c| c.pos).collect();
        if positions.len() != 4 || positions.iter().any(|p| !p.is_valid()) {
            return Err(invalid("cells must cover each grid position exactly once".into()));
        }
        if self.cells.iter().any(|c| c.image.class_label.is_empty()) {
            return Err(invalid("empty class label".into()));
        }
        let targets = self
            .cells
            .iter()
            .filter(|c| c.image.class_label == self.target_class)
            .count();
        if targets != 2 {
            return Err(invalid(format!(
                "expected 2 cells of target class `{}`, found {targets}",
                self.target_class
            )));
        }
        Ok(())
    }

    pub fn cell(&self, pos: CellPos) -> Option<&MosaicCell> {
        self.cells.iter().find(|c| c.pos == pos)
    }

    pub fn class_at(&self, pos: CellPos) -> Option<&str> {
        self.cell(pos).map(|c| c.image.class_label.as_str())
    }

    /// Whether the cell at `pos` holds an image of the target class.
    pub fn is_target(&self, pos: CellPos) -> bool {
        self.class_at(pos) == Some(self.target_class.as_str())
    }
}

/// Every mosaic of a dataset plus the parameters needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicManifest {
    pub dataset_name: String,
    pub mosaics: Vec<MosaicSpec>,
    pub cell_pixels: u32,
    pub mosaic_pixels: u32,
    pub global_seed: u64,
}

impl MosaicManifest {
    pub fn new(dataset_name: impl Into<String>, global_seed: u64) -> Self {
        MosaicManifest {
            dataset_name: dataset_name.into(),
            mosaics: Vec::new(),
            cell_pixels: CELL_PIXELS,
            mosaic_pixels: MOSAIC_PIXELS,
            global_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_pixels == 0 || self.mosaic_pixels != 2 * self.cell_pixels {
            return Err(MosaicError::InvalidManifest(format!(
                "mosaic_pixels ({}) must be twice cell_pixels ({})",
                self.mosaic_pixels, self.cell_pixels
            )));
        }
        let mut ids = HashSet::new();
        for spec in &self.mosaics {
            if !ids.insert(spec.mosaic_id.as_str()) {
                return Err(MosaicError::InvalidManifest(format!(
                    "duplicate mosaic_id `{}`",
                    spec.mosaic_id
                )));
            }
            spec.validate()?;
        }
        Ok(())
    }

    pub fn get(&self, mosaic_id: &str) -> Option<&MosaicSpec> {
        self.mosaics.iter().find(|m| m.mosaic_id == mosaic_id)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: MosaicManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// How the two non-target cells of a mosaic are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OtherClassPolicy {
    /// Both non-target images come from this class.
    Fixed(String),
    /// Two distinct non-target classes, one image each.
    RandomDistinct,
    /// One random non-target class, two images from it. On a two-class
    /// dataset this is always the other class.
    RandomSingle,
}

impl FromStr for OtherClassPolicy {
    type Err = MosaicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => return Ok(OtherClassPolicy::RandomDistinct),
            "single" => return Ok(OtherClassPolicy::RandomSingle),
            _ => {}
        }
        match s.strip_prefix("fixed:") {
            Some(class) if !class.is_empty() => Ok(OtherClassPolicy::Fixed(class.to_string())),
            _ => Err(MosaicError::InvalidPolicy(format!(
                "expected `fixed:<class>`, `random` or `single`, got `{s}`"
            ))),
        }
    }
}

/// Samples one mosaic layout from `pool`.
///
/// The result depends only on `(pool, target_class, policy, seed)`; images are
/// drawn without replacement and the four cells are placed by a uniformly
/// random permutation.
pub fn sample_mosaic_spec(
    mosaic_id: &str,
    pool: &[ImageRecord],
    target_class: &str,
    policy: &OtherClassPolicy,
    seed: u64,
) -> Result<MosaicSpec> {
    let mut rng = rng_from_seed(seed);
    let targets: Vec<&ImageRecord> = pool.iter().filter(|r| r.class_label == target_class).collect();
    if targets.is_empty() {
        return Err(MosaicError::UnknownTargetClass(target_class.to_string()));
    }
    if targets.len() < 2 {
        return Err(MosaicError::InsufficientPool(format!(
            "class `{target_class}` has {} image(s), need 2",
            targets.len()
        )));
    }

    let mut chosen: Vec<ImageRecord> = targets.choose_multiple(&mut rng, 2).map(|r| (*r).clone()).collect();

    let non_target_classes = || -> Vec<&str> {
        pool.iter()
            .map(|r| r.class_label.as_str())
            .filter(|c| *c != target_class)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    let members = |class: &str| -> Vec<&ImageRecord> { pool.iter().filter(|r| r.class_label == class).collect() };

    match policy {
        OtherClassPolicy::Fixed(other) => {
            if other == target_class {
                return Err(MosaicError::InvalidPolicy(format!(
                    "fixed other class `{other}` equals the target class"
                )));
            }
            let others = members(other);
            if others.len() < 2 {
                return Err(MosaicError::InsufficientPool(format!(
                    "class `{other}` has {} image(s), need 2",
                    others.len()
                )));
            }
            chosen.extend(others.choose_multiple(&mut rng, 2).map(|r| (*r).clone()));
        }
        OtherClassPolicy::RandomSingle => {
            let classes: Vec<&str> = non_target_classes()
                .into_iter()
                .filter(|c| members(c).len() >= 2)
                .collect();
            let class = classes.choose(&mut rng).ok_or_else(|| {
                MosaicError::InsufficientPool("no non-target class with 2 images".into())
            })?;
            chosen.extend(members(class).choose_multiple(&mut rng, 2).map(|r| (*r).clone()));
        }
        OtherClassPolicy::RandomDistinct => {
            let classes = non_target_classes();
            if classes.len() < 2 {
                return Err(MosaicError::InsufficientPool(format!(
                    "need 2 non-target classes, found {}",
                    classes.len()
                )));
            }
            for class in classes.choose_multiple(&mut rng, 2) {
                let pick = members(class).choose(&mut rng).copied().expect("class has members");
                chosen.push(pick.clone());
            }
        }
    }

    chosen.shuffle(&mut rng);
    let cells = CellPos::ALL
        .iter()
        .zip(chosen)
        .map(|(&pos, image)| MosaicCell { pos, image })
        .collect();
    Ok(MosaicSpec {
        mosaic_id: mosaic_id.to_string(),
        cells,
        target_class: target_class.to_string(),
        rng_seed: seed,
    })
}

/// Decodes an image file as 8-bit RGB.
pub fn load_rgb(record: &ImageRecord) -> Result<RgbImage> {
    image::open(&record.source_path)
        .map(|img| img.to_rgb8())
        .map_err(|source| MosaicError::Decode {
            image_id: record.image_id.clone(),
            source,
        })
}

/// Resizes every cell image to `cell_pixels` square (bilinear, aspect ratio
/// not preserved) and places it into its quadrant.
pub fn assemble_mosaic<F>(spec: &MosaicSpec, cell_pixels: u32, mut loader: F) -> Result<RgbImage>
where
    F: FnMut(&ImageRecord) -> Result<RgbImage>,
{
    spec.validate()?;
    let mut canvas = RgbImage::new(2 * cell_pixels, 2 * cell_pixels);
    for cell in &spec.cells {
        let source = loader(&cell.image)?;
        if source.width() == 0 || source.height() == 0 {
            return Err(MosaicError::Resize {
                image_id: cell.image.image_id.clone(),
                reason: "empty image".into(),
            });
        }
        let tile = if source.dimensions() == (cell_pixels, cell_pixels) {
            source
        } else {
            imageops::resize(&source, cell_pixels, cell_pixels, FilterType::Triangle)
        };
        let (row, col) = cell.pos.pixel_origin(cell_pixels);
        imageops::replace(&mut canvas, &tile, i64::from(col), i64::from(row));
    }
    Ok(canvas)
}

/// Collects every image below `classes_dir/<class>/`, sorted by class then
/// file name. Image ids are `<class>/<file name>`.
pub fn scan_class_folders(classes_dir: &Path) -> Result<Vec<ImageRecord>> {
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(classes_dir)
        .map_err(io_err(classes_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    let mut records = Vec::new();
    for dir in class_dirs {
        let class = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        for file in files {
            let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
            records.push(ImageRecord {
                image_id: format!("{class}/{name}"),
                class_label: class.clone(),
                source_path: file,
            });
        }
    }
    Ok(records)
}

/// Parameters of a dataset build.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub dataset_name: String,
    pub classes_dir: PathBuf,
    /// `(target class, number of mosaics)` pairs.
    pub targets: Vec<(String, usize)>,
    pub policy: OtherClassPolicy,
    pub global_seed: u64,
    pub out_dir: PathBuf,
    pub cell_pixels: u32,
}

/// Per-mosaic seed: a function of the global seed, the target class and the
/// mosaic's index within that class.
pub fn mosaic_seed(global_seed: u64, target_class: &str, index: usize) -> u64 {
    derive_seed(global_seed, &[target_class, &index.to_string()])
}

/// Samples the layouts of every mosaic requested by `config`.
pub fn plan_dataset(config: &DatasetConfig, pool: &[ImageRecord]) -> Result<MosaicManifest> {
    let mut manifest = MosaicManifest::new(&config.dataset_name, config.global_seed);
    manifest.cell_pixels = config.cell_pixels;
    manifest.mosaic_pixels = 2 * config.cell_pixels;
    let mut seen = HashSet::new();
    for (target, count) in &config.targets {
        if !seen.insert(target.as_str()) {
            return Err(MosaicError::InvalidManifest(format!("target `{target}` listed twice")));
        }
        for index in 0..*count {
            let id = format!("{target}_{index:04}");
            let seed = mosaic_seed(config.global_seed, target, index);
            manifest
                .mosaics
                .push(sample_mosaic_spec(&id, pool, target, &config.policy, seed)?);
        }
    }
    manifest.validate()?;
    Ok(manifest)
}

/// Samples, assembles and writes a whole dataset.
///
/// Writes `<mosaic_id>.png` for every mosaic and then `manifest.json`. When no
/// mosaics are requested nothing is written.
pub fn build_dataset(config: &DatasetConfig) -> Result<MosaicManifest> {
    let pool = scan_class_folders(&config.classes_dir)?;
    let manifest = plan_dataset(config, &pool)?;
    if manifest.mosaics.is_empty() {
        return Ok(manifest);
    }
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;

    let cell_pixels = manifest.cell_pixels;
    thread_pool().install(|| {
        manifest.mosaics.par_iter().try_for_each(|spec| {
            let raster = assemble_mosaic(spec, cell_pixels, load_rgb)?;
            let path = config.out_dir.join(format!("{}.png", spec.mosaic_id));
            raster
                .save_with_format(&path, image::ImageFormat::Png)
                .map_err(|source| MosaicError::Encode {
                    mosaic_id: spec.mosaic_id.clone(),
                    source,
                })
        })
    })?;

    manifest.write(&config.out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
