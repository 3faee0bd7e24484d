//! Synthetic saliency maps with known behaviour.
//!
//! Every oracle map is a pure function of the mosaic layout and an
//! [`OracleConfig`]; the per-mosaic PRNG stream is derived from the config seed
//! and the mosaic id.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mosaic::{CellPos, MosaicManifest, MosaicSpec};
use crate::parallel::thread_pool;
use crate::saliency::{self, MethodDescriptor, SaliencyError, SaliencyMap, SignCapability};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid oracle config: {0}")]
    InvalidConfig(String),
    #[error("invalid method spec `{0}`")]
    InvalidMethod(String),
    #[error("duplicate method id `{0}`")]
    DuplicateMethod(String),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
}

pub type Result<T, E = SyntheticError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    /// `+amplitude` on target cells, `-amplitude` elsewhere.
    Perfect,
    /// Perfect with signs flipped.
    Inverted,
    /// I.i.d. uniform on `[-amplitude, amplitude]`.
    UniformSignedNoise,
    /// I.i.d. uniform on `[0, amplitude]`; the map is positive-only.
    PositiveOnlyNoise,
    /// Each pixel carries the perfect sign with probability `p` and the
    /// flipped sign otherwise, always at full amplitude.
    Fidelity(f64),
}

impl OracleMode {
    pub fn sign_capability(self) -> SignCapability {
        match self {
            OracleMode::PositiveOnlyNoise => SignCapability::PositiveOnly,
            _ => SignCapability::Signed,
        }
    }
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleMode::Perfect => f.write_str("perfect"),
            OracleMode::Inverted => f.write_str("inverted"),
            OracleMode::UniformSignedNoise => f.write_str("noise"),
            OracleMode::PositiveOnlyNoise => f.write_str("positive"),
            OracleMode::Fidelity(p) => write!(f, "p={p}"),
        }
    }
}

impl FromStr for OracleMode {
    type Err = SyntheticError;

    /// Accepts `perfect`, `inverted`, `noise`, `positive` and `p=<prob>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mode = match s {
            "perfect" => OracleMode::Perfect,
            "inverted" => OracleMode::Inverted,
            "noise" => OracleMode::UniformSignedNoise,
            "positive" => OracleMode::PositiveOnlyNoise,
            _ => {
                let p = s
                    .strip_prefix("p=")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| SyntheticError::InvalidMethod(s.to_string()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(SyntheticError::InvalidMethod(s.to_string()));
                }
                OracleMode::Fidelity(p)
            }
        };
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub mode: OracleMode,
    pub seed: u64,
    pub amplitude: f64,
}

impl OracleConfig {
    pub fn new(mode: OracleMode, seed: u64) -> Self {
        OracleConfig {
            mode,
            seed,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(SyntheticError::InvalidConfig(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if let OracleMode::Fidelity(p) = self.mode {
            if !(0.0..=1.0).contains(&p) {
                return Err(SyntheticError::InvalidConfig(format!("fidelity {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Generates an oracle map for `spec` with side `mosaic_pixels`.
///
/// Values are `f32`-representable so that writing the map is lossless.
pub fn gen_oracle_map(
    spec: &MosaicSpec,
    cfg: &OracleConfig,
    method_id: &str,
    mosaic_pixels: usize,
) -> Result<SaliencyMap> {
    cfg.validate()?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[&spec.mosaic_id]));
    let amplitude = cfg.amplitude as f32;
    let half = mosaic_pixels / 2;
    let mut values = Vec::with_capacity(mosaic_pixels * mosaic_pixels);
    for row in 0..mosaic_pixels {
        let y = u8::from(row < half);
        let targets = [spec.is_target(CellPos { x: 0, y }), spec.is_target(CellPos { x: 1, y })];
        for col in 0..mosaic_pixels {
            let on_target = targets[usize::from(col >= half)];
            let value: f32 = match cfg.mode {
                OracleMode::Perfect => signed(amplitude, on_target),
                OracleMode::Inverted => signed(amplitude, !on_target),
                OracleMode::UniformSignedNoise => rng.gen_range(-amplitude..=amplitude),
                OracleMode::PositiveOnlyNoise => rng.gen_range(0.0..=amplitude),
                OracleMode::Fidelity(p) => {
                    let correct = rng.gen::<f64>() < p;
                    signed(amplitude, on_target == correct)
                }
            };
            values.push(f64::from(value));
        }
    }
    Ok(SaliencyMap::new(
        spec.mosaic_id.clone(),
        method_id,
        spec.target_class.clone(),
        cfg.mode.sign_capability(),
        mosaic_pixels,
        mosaic_pixels,
        values,
    )?)
}

fn signed(amplitude: f32, positive: bool) -> f32 {
    if positive {
        amplitude
    } else {
        -amplitude
    }
}

/// A simulated method in a family.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMethod {
    pub method_id: String,
    pub mode: OracleMode,
}

impl SyntheticMethod {
    pub fn descriptor(&self) -> MethodDescriptor {
        MethodDescriptor {
            method_id: self.method_id.clone(),
            sign_capability: self.mode.sign_capability(),
            display_name: format!("synthetic {}", self.mode),
        }
    }

    /// Oracle config of this method within a family seeded by `family_seed`.
    pub fn config(&self, family_seed: u64) -> OracleConfig {
        OracleConfig::new(self.mode, derive_seed(family_seed, &[&self.method_id]))
    }
}

/// Parses a comma-separated method list such as `p=0.9,p=0.7,positive`.
/// Ids are `m<index>_<mode>` so repeated modes stay distinct.
pub fn parse_methods(list: &str) -> Result<Vec<SyntheticMethod>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .enumerate()
        .map(|(i, s)| {
            let mode: OracleMode = s.parse()?;
            let tag = mode.to_string().replace('=', "");
            Ok(SyntheticMethod {
                method_id: format!("m{i}_{tag}"),
                mode,
            })
        })
        .collect()
}

/// Methods with the given fidelities, ids `m<index>_p<prob>`.
pub fn fidelity_family(fidelities: &[f64]) -> Vec<SyntheticMethod> {
    fidelities
        .iter()
        .enumerate()
        .map(|(i, &p)| SyntheticMethod {
            method_id: format!("m{i}_p{p}"),
            mode: OracleMode::Fidelity(p),
        })
        .collect()
}

fn check_unique(methods: &[SyntheticMethod]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for m in methods {
        if !seen.insert(m.method_id.as_str()) {
            return Err(SyntheticError::DuplicateMethod(m.method_id.clone()));
        }
    }
    Ok(())
}

/// Writes one map per `(mosaic, method)` under `out_dir/<method_id>/` plus the
/// method registry.
pub fn gen_method_family(
    manifest: &MosaicManifest,
    methods: &[SyntheticMethod],
    family_seed: u64,
    out_dir: &Path,
) -> Result<()> {
    check_unique(methods)?;
    std::fs::create_dir_all(out_dir).map_err(|source| SaliencyError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let side = manifest.mosaic_pixels as usize;
    let jobs: Vec<(&MosaicSpec, &SyntheticMethod)> = manifest
        .mosaics
        .iter()
        .flat_map(|spec| methods.iter().map(move |m| (spec, m)))
        .collect();
    thread_pool().install(|| {
        jobs.par_iter().try_for_each(|(spec, method)| {
            let map = gen_oracle_map(spec, &method.config(family_seed), &method.method_id, side)?;
            saliency::write_saliency(&map, &saliency::map_path(out_dir, &method.method_id, &spec.mosaic_id))?;
            Ok::<_, SyntheticError>(())
        })
    })?;
    let registry: Vec<MethodDescriptor> = methods.iter().map(SyntheticMethod::descriptor).collect();
    saliency::write_registry(out_dir, &registry)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::tally_confusion;
    use crate::metrics::compute_metrics;
    use crate::mosaic::{ImageRecord, MosaicCell};
    use std::path::PathBuf;

    fn spec() -> MosaicSpec {
        let classes = ["cat", "dog", "dog", "cat"];
        MosaicSpec {
            mosaic_id: "cat_0000".into(),
            cells: CellPos::ALL
                .iter()
                .zip(classes)
                .enumerate()
                .map(|(i, (pos, class))| MosaicCell {
                    pos: *pos,
                    image: ImageRecord {
                        image_id: format!("{class}/{i}"),
                        class_label: class.into(),
                        source_path: PathBuf::from("x"),
                    },
                })
                .collect(),
            target_class: "cat".into(),
            rng_seed: 0,
        }
    }

    #[test]
    fn perfect_and_inverted_metrics() {
        let s = spec();
        let perfect = gen_oracle_map(&s, &OracleConfig::new(OracleMode::Perfect, 1), "p", 64).unwrap();
        let m = compute_metrics(&tally_confusion(&perfect, &s).unwrap(), SignCapability::Signed);
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.f1, Some(1.0));

        let inverted = gen_oracle_map(&s, &OracleConfig::new(OracleMode::Inverted, 1), "i", 64).unwrap();
        let m = compute_metrics(&tally_confusion(&inverted, &s).unwrap(), SignCapability::Signed);
        assert_eq!(m.precision, Some(0.0));
        assert_eq!(m.sensitivity, Some(0.0));
        assert_eq!(m.specificity, Some(0.0));
        assert_eq!(m.accuracy, Some(0.0));
    }

    #[test]
    fn fidelity_extremes_match_fixed_modes() {
        let s = spec();
        for seed in [0, 9, 1234] {
            let at = |mode| gen_oracle_map(&s, &OracleConfig::new(mode, seed), "x", 32).unwrap();
            assert_eq!(at(OracleMode::Fidelity(1.0)), at(OracleMode::Perfect));
            assert_eq!(at(OracleMode::Fidelity(0.0)), at(OracleMode::Inverted));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let s = spec();
        let cfg = OracleConfig::new(OracleMode::UniformSignedNoise, 5);
        let a = gen_oracle_map(&s, &cfg, "x", 32).unwrap();
        assert_eq!(a, gen_oracle_map(&s, &cfg, "x", 32).unwrap());
        let other = OracleConfig::new(OracleMode::UniformSignedNoise, 6);
        assert_ne!(a, gen_oracle_map(&s, &other, "x", 32).unwrap());
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn positive_noise_is_positive_only() {
        let map = gen_oracle_map(&spec(), &OracleConfig::new(OracleMode::PositiveOnlyNoise, 3), "x", 32).unwrap();
        assert_eq!(map.sign_capability, SignCapability::PositiveOnly);
        assert!(map.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = OracleConfig::new(OracleMode::Perfect, 0);
        cfg.amplitude = 0.0;
        assert!(cfg.validate().is_err());
        assert!(OracleConfig::new(OracleMode::Fidelity(1.5), 0).validate().is_err());
    }

    #[test]
    fn method_list_parsing() {
        let methods = parse_methods("p=0.9,p=0.9,positive,perfect").unwrap();
        let ids: Vec<_> = methods.iter().map(|m| m.method_id.as_str()).collect();
        assert_eq!(ids, ["m0_p0.9", "m1_p0.9", "m2_positive", "m3_perfect"]);
        assert_eq!(methods[2].descriptor().sign_capability, SignCapability::PositiveOnly);
        assert!(parse_methods("p=2").is_err());
        assert!(parse_methods("gradcam").is_err());
    }
}
