//! Reproducible dataset production: receivers on the domain boundary, one
//! forward solve per record, binary targets, and a chunked on-disk container.

mod container;
mod noise;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{
    assemble_sequential, incident_field, received_vector, solve_currents, BasisLayout, PhysicsConstants,
    TransmitterConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{
    load_mnist_idx, rasterize_extent, scene_from_mnist, scene_random_shapes, DigitImage, DoiConfig, ImageRaster, Point,
    Scene, ShapePrimitive,
};

pub use container::{
    read_dataset, subsample_indices, ChunkEntry, Dataset, Manifest, Records, FORMAT_NAME, FORMAT_VERSION,
    MAX_SHAPE_SLOTS,
};
pub use noise::{add_awgn, empirical_snr_db, SNR_SWEEP_DB};

/// Environment variable consulted for the MNIST IDX file when no path is
/// given explicitly.
pub const MNIST_PATH_ENV: &str = "MNIST_IDX_PATH";

/// `N_r` receivers equally spaced on a circle around the origin, plus the
/// transmitter they listen to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverArray {
    pub positions: Vec<Point>,
    pub tx: TransmitterConfig,
}

impl ReceiverArray {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `r_k = radius [cos(2 pi k / n), sin(2 pi k / n)]`, `k = 0..n`.
pub fn place_receivers(n: usize, radius: f64, tx: TransmitterConfig) -> Result<ReceiverArray> {
    if n == 0 {
        return Err(Error::Config("at least one receiver is required".into()));
    }
    let positions = (0..n)
        .map(|k| {
            let (s, c) = (2.0 * PI * k as f64 / n as f64).sin_cos();
            Point::new(radius * c, radius * s)
        })
        .collect();
    Ok(ReceiverArray { positions, tx })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// Thresholded MNIST digits, one pixel mask per record.
    Mnist,
    /// One square and two discs at random positions.
    Shapes,
}

impl std::str::FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Recipe::Mnist),
            "shapes" => Ok(Recipe::Shapes),
            other => Err(Error::Config(format!("unknown recipe {other:?} (expected mnist or shapes)"))),
        }
    }
}

impl std::fmt::Display for Recipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Recipe::Mnist => "mnist",
            Recipe::Shapes => "shapes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub recipe: Recipe,
    pub count: usize,
    pub test_fraction: f64,
    pub receivers: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// Side of the centered square covered by the target image, meters.
    pub image_side: f64,
    pub master_seed: u64,
    pub doi: DoiConfig,
    pub transmitter: TransmitterConfig,
    /// Gray level at or above which a digit pixel is occupied.
    pub mnist_threshold: u8,
    /// Physical side of one digit pixel, meters.
    pub mnist_pixel_size: f64,
    /// Records per chunk file.
    pub chunk_records: usize,
}

/// Calibrated digit threshold (see the dataset statistics tests).
pub const MNIST_THRESHOLD: u8 = 226;
/// SHAPES lattice pitch in wavelengths.
pub const SHAPES_PITCH_WAVELENGTHS: f64 = 1.0 / 14.4;

impl DatasetConfig {
    /// Defaults for `recipe` at the given wavelength: 10^4 records, 20% test,
    /// 64 receivers, transmitter on the +x axis at twenty wavelengths.
    pub fn new(recipe: Recipe, wavelength: f64) -> Self {
        let base = DoiConfig::new(wavelength);
        let (doi, image_height, image_width, image_side) = match recipe {
            Recipe::Mnist => (base, 28, 28, 28.0 * 0.1 * wavelength),
            Recipe::Shapes => {
                (base.with_sample_resolution(SHAPES_PITCH_WAVELENGTHS * wavelength), 128, 128, 2.0 * base.radius)
            }
        };
        DatasetConfig {
            recipe,
            count: 10_000,
            test_fraction: 0.2,
            receivers: 64,
            image_height,
            image_width,
            image_side,
            master_seed: 0,
            doi,
            transmitter: TransmitterConfig::standard(wavelength),
            mnist_threshold: MNIST_THRESHOLD,
            mnist_pixel_size: 0.1 * wavelength,
            chunk_records: 256,
        }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_receivers(mut self, receivers: usize) -> Self {
        self.receivers = receivers;
        self
    }

    pub fn wavelength(&self) -> f64 {
        self.doi.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        self.doi.validate()?;
        self.transmitter.validate(self.doi.radius)?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.receivers == 0 {
            return bad("at least one receiver is required".into());
        }
        if self.image_height == 0 || self.image_width == 0 || !(self.image_side.is_finite() && self.image_side > 0.0) {
            return bad(format!(
                "target image needs positive dimensions, got {}x{} over {}",
                self.image_height, self.image_width, self.image_side
            ));
        }
        if self.mnist_threshold == 0 {
            return bad("mnist_threshold must lie in 1..=255".into());
        }
        if !self.mnist_pixel_size.is_finite() || self.mnist_pixel_size <= 0.0 {
            return bad(format!("mnist_pixel_size must be positive, got {}", self.mnist_pixel_size));
        }
        if self.chunk_records == 0 {
            return bad("chunk_records must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One sample: noise-free received field, the incident field at the same
/// receivers, and the binary target image.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub index: u64,
    /// Seed of the record's scene.
    pub seed: u64,
    /// Digit index within the MNIST source, `None` for SHAPES.
    pub source_index: Option<u64>,
    pub split: Split,
    pub point_count: u64,
    /// Primitives that produced the scene (a digit is one pixel mask whose
    /// `size` is the pixel side).
    pub shapes: Vec<ShapeSlot>,
    pub e: Vec<Complex64>,
    pub e_incident: Vec<Complex64>,
    pub target: ImageRaster<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disc,
    Square,
    PixelMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSlot {
    pub kind: ShapeKind,
    pub center: Point,
    pub size: f64,
}

impl ShapeSlot {
    fn of(shape: &ShapePrimitive) -> Self {
        let kind = match shape {
            ShapePrimitive::Disc { .. } => ShapeKind::Disc,
            ShapePrimitive::Square { .. } => ShapeKind::Square,
            ShapePrimitive::PixelMask { .. } => ShapeKind::PixelMask,
        };
        let size = match shape {
            ShapePrimitive::PixelMask { mask, .. } => mask.cell_size,
            other => other.size(),
        };
        ShapeSlot { kind, center: shape.center(), size }
    }
}

/// Record `t`'s random stream: stream `t` of the ChaCha generator keyed by
/// the master seed. The first draw decides the split, so a record's split
/// never depends on `count`.
fn record_rng(master_seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(t);
    rng
}

/// Train/test assignment of record `t`.
pub fn split_of(master_seed: u64, t: u64, test_fraction: f64) -> Split {
    let u: f64 = record_rng(master_seed, t).random();
    if u < test_fraction {
        Split::Test
    } else {
        Split::Train
    }
}

/// Shared per-run state: the operator inputs that do not change between
/// records.
struct Generator<'a> {
    config: &'a DatasetConfig,
    constants: PhysicsConstants,
    receivers: ReceiverArray,
    e_incident: Vec<Complex64>,
    digits: &'a [DigitImage],
}

impl Generator<'_> {
    fn record(&self, t: u64) -> Result<DatasetRecord> {
        let cfg = self.config;
        let mut rng = record_rng(cfg.master_seed, t);
        let split = if rng.random::<f64>() < cfg.test_fraction { Split::Test } else { Split::Train };
        let seed = rng.next_u64();
        let (scene, source_index) = match cfg.recipe {
            Recipe::Shapes => (scene_random_shapes(seed, &cfg.doi)?, None),
            Recipe::Mnist => {
                let k = ChaCha8Rng::seed_from_u64(seed).random_range(0..self.digits.len());
                let scene = scene_from_mnist(&self.digits[k], &cfg.doi, cfg.mnist_pixel_size, cfg.mnist_threshold)?;
                (scene, Some(k as u64))
            }
        };
        let e = self.received(&scene)?;
        let target = rasterize_extent(&scene, cfg.image_height, cfg.image_width, cfg.image_side)?;
        Ok(DatasetRecord {
            index: t,
            seed,
            source_index,
            split,
            point_count: scene.len() as u64,
            shapes: scene.shapes.iter().map(ShapeSlot::of).collect(),
            e,
            e_incident: self.e_incident.clone(),
            target,
        })
    }

    fn received(&self, scene: &Scene) -> Result<Vec<Complex64>> {
        let layout = BasisLayout::from_scene(scene)?;
        let op = assemble_sequential(layout, self.constants)?;
        let sol = solve_currents(&op, &self.receivers.tx)?;
        received_vector(&op, &sol, &self.receivers.tx, &self.receivers)
    }

    /// A blank scene must reproduce the incident field exactly.
    fn self_check(&self) -> Result<()> {
        let e = self.received(&Scene::empty(self.config.doi))?;
        if e != self.e_incident {
            return Err(Error::SelfCheck("blank scene does not reproduce the incident field".into()));
        }
        Ok(())
    }
}

/// What a finished `generate` run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub path: PathBuf,
    pub records: usize,
    pub skipped: Vec<u64>,
    pub test_records: usize,
    pub mean_point_count: f64,
}

/// Resolves the MNIST source: the explicit path, else [`MNIST_PATH_ENV`].
pub fn resolve_mnist_path(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MNIST_PATH_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

/// Writes a dataset container to `out`.
///
/// Records are produced in parallel and committed in index order, one chunk
/// at a time. A record whose scene cannot be built or solved is logged and
/// skipped; more than 1% skipped records abort the run. The manifest is
/// written last, so a directory without one is an incomplete run.
pub fn generate(config: &DatasetConfig, mnist_source: Option<&Path>, out: &Path) -> Result<GenerationSummary> {
    config.validate()?;
    let digits = match (config.recipe, mnist_source) {
        (Recipe::Mnist, Some(path)) => {
            let digits = load_mnist_idx(path)?;
            if digits.is_empty() {
                return Err(Error::format(path, "no images"));
            }
            digits
        }
        (Recipe::Mnist, None) => {
            return Err(Error::Config(format!("the mnist recipe needs an IDX file (flag or {MNIST_PATH_ENV})")));
        }
        (Recipe::Shapes, Some(_)) => {
            return Err(Error::Config("an MNIST source only applies to the mnist recipe".into()));
        }
        (Recipe::Shapes, None) => Vec::new(),
    };

    let constants = PhysicsConstants::new(config.wavelength());
    let receivers = place_receivers(config.receivers, config.doi.radius, config.transmitter)?;
    let e_incident = receivers
        .positions
        .iter()
        .map(|&p| incident_field(p, &receivers.tx, &constants))
        .collect::<Result<Vec<_>>>()?;
    let generator = Generator { config, constants, receivers, e_incident, digits: &digits };
    generator.self_check()?;

    let mut writer = container::Writer::create(out, config, &generator.receivers)?;
    let budget = config.count / 100;
    let mut skipped = Vec::new();
    let mut point_total = 0u64;
    let mut test_records = 0usize;
    for start in (0..config.count).step_by(config.chunk_records) {
        let end = (start + config.chunk_records).min(config.count);
        let batch: Vec<Result<DatasetRecord>> =
            (start..end).into_par_iter().map(|t| generator.record(t as u64)).collect();
        for (t, outcome) in (start..end).zip(batch) {
            match outcome {
                Ok(record) => {
                    point_total += record.point_count;
                    test_records += usize::from(record.split == Split::Test);
                    writer.push(&record)?;
                }
                Err(err) => {
                    log::warn!("record {t} skipped: {err}");
                    skipped.push(t as u64);
                    if skipped.len() > budget {
                        return Err(Error::SkipBudget { skipped: skipped.len(), count: config.count });
                    }
                }
            }
        }
        log::info!("{end}/{} records", config.count);
    }
    let records = writer.finish(&skipped, test_records)?;
    Ok(GenerationSummary {
        path: out.to_path_buf(),
        records,
        skipped,
        test_records,
        mean_point_count: if records == 0 { 0.0 } else { point_total as f64 / records as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_receivers_on_the_axes() {
        let rx = place_receivers(4, 0.625, TransmitterConfig::standard(0.125)).unwrap();
        let want = [(0.625, 0.0), (0.0, 0.625), (-0.625, 0.0), (0.0, -0.625)];
        for (p, (x, y)) in rx.positions.iter().zip(want) {
            assert!((p.x - x).abs() < 1e-15 && (p.y - y).abs() < 1e-15, "{p:?}");
        }
    }

    #[test]
    fn receivers_sit_on_the_circle() {
        let rx = place_receivers(64, 0.625, TransmitterConfig::standard(0.125)).unwrap();
        assert_eq!(rx.len(), 64);
        for p in &rx.positions {
            assert!((p.norm() - 0.625).abs() <= 1e-15);
        }
        assert!(place_receivers(0, 1.0, TransmitterConfig::standard(0.125)).is_err());
    }

    #[test]
    fn published_defaults() {
        let c = DatasetConfig::new(Recipe::Shapes, 0.125);
        assert_eq!((c.count, c.receivers, c.test_fraction), (10_000, 64, 0.2));
        assert_eq!((c.image_height, c.image_width), (128, 128));
        assert_eq!(c.wavelength(), 0.125);
        assert_eq!(c.transmitter.position, Point::new(2.5, 0.0));
        let m = DatasetConfig::new(Recipe::Mnist, 0.125);
        assert_eq!((m.image_height, m.image_width), (28, 28));
        assert!((m.doi.sample_resolution - 0.125 / 20.0).abs() < 1e-18);
        c.validate().unwrap();
        m.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = DatasetConfig::new(Recipe::Shapes, 0.125);
        for broken in [
            DatasetConfig { count: 0, ..base.clone() },
            DatasetConfig { test_fraction: 1.0, ..base.clone() },
            DatasetConfig { test_fraction: 0.0, ..base.clone() },
            DatasetConfig { receivers: 0, ..base.clone() },
            DatasetConfig { image_height: 0, ..base.clone() },
            DatasetConfig { chunk_records: 0, ..base.clone() },
            DatasetConfig { transmitter: TransmitterConfig::new(Point::new(0.1, 0.0)), ..base.clone() },
        ] {
            assert!(matches!(broken.validate(), Err(Error::Config(_))), "{broken:?}");
        }
    }

    #[test]
    fn split_does_not_depend_on_count() {
        let splits: Vec<Split> = (0..1000).map(|t| split_of(7, t, 0.2)).collect();
        let tests = splits.iter().filter(|&&s| s == Split::Test).count();
        assert!((150..=250).contains(&tests), "{tests}");
        assert_eq!(splits, (0..1000).map(|t| split_of(7, t, 0.2)).collect::<Vec<_>>());
    }

    #[test]
    fn recipe_names_round_trip() {
        for r in [Recipe::Mnist, Recipe::Shapes] {
            assert_eq!(r.to_string().parse::<Recipe>().unwrap(), r);
        }
        assert!("digits".parse::<Recipe>().is_err());
    }
}
