//! Image segmentation: DP mixture on hue/chroma/lightness, SALSO consensus,
//! labels upsampled back to every pixel.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dpspn::{run, RunOutput};
use crate::error::Result;
use crate::metrics::{salso, Partition};
use crate::pipeline::color::{image_to_observations, stride_grid, upsample_labels, Standardization};

#[derive(Debug, Clone, Serialize)]
pub struct SegmentMetadata {
    pub width: u32,
    pub height: u32,
    pub stride: u32,
    pub fitted_pixels: usize,
    pub standardized: bool,
    pub standardization: Standardization,
    pub clusters: usize,
    pub consensus_objective: f64,
    pub gelman_rubin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Row-major label for every pixel.
    pub labels: Partition,
    pub grid_labels: Partition,
    pub output: RunOutput,
    pub metadata: SegmentMetadata,
}

/// Segment `image` with the model, MCMC, consensus and segment blocks of `config`.
pub fn segment_image(image: &RgbImage, config: &RunConfig) -> Result<Segmentation> {
    let (width, height) = image.dimensions();
    let stride = config.segment.stride.max(1);
    let pixels = stride_grid(width, height, stride);
    let (observations, standardization) = image_to_observations(image, &pixels, config.segment.standardize)?;
    let dp = config.dp_config::<f64>(2, 2)?;
    let output = run(&observations, &dp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.mcmc.seed);
    let consensus = salso(&output.partitions(), &config.consensus.salso(), &mut rng)?;
    let full = upsample_labels(width, height, stride, consensus.partition.labels())?;
    let labels = Partition::from_labels(&full);
    let metadata = SegmentMetadata {
        width,
        height,
        stride,
        fitted_pixels: pixels.len(),
        standardized: config.segment.standardize,
        standardization,
        clusters: consensus.partition.num_clusters(),
        consensus_objective: consensus.objective,
        gelman_rubin: output.gelman_rubin,
    };
    Ok(Segmentation { labels, grid_labels: consensus.partition, output, metadata })
}
