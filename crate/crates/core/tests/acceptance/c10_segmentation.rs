use dirlin::config::RunConfig;
use dirlin::metrics::{adjusted_rand_index, Partition};
use dirlin::pipeline::segment::segment_image;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Outcome;

pub const WIDTH: u32 = 80;
pub const HEIGHT: u32 = 60;

/// A red disc on a blue background with Gaussian channel noise, plus truth labels.
pub fn two_region_image(seed: u64) -> (RgbImage, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::with_capacity((WIDTH * HEIGHT) as usize);
    let mut img = RgbImage::new(WIDTH, HEIGHT);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let inside = (x as f64 - 40.0).powi(2) + (y as f64 - 30.0).powi(2) < 18.0f64.powi(2);
            let base = if inside { [200.0, 60.0, 50.0] } else { [50.0, 90.0, 200.0] };
            let px = base.map(|c: f64| (c + 10.0 * rng.sample::<f64, _>(StandardNormal)).round().clamp(0.0, 255.0) as u8);
            img.put_pixel(x, y, Rgb(px));
            truth.push(inside as usize);
        }
    }
    (img, truth)
}

pub fn run() -> Outcome {
    let (img, truth) = two_region_image(1010);
    let mut config = RunConfig::default();
    config.mcmc.sweeps = 2000;
    config.mcmc.burn_in = 1000;
    config.mcmc.thin = 2;
    config.mcmc.chains = 2;
    config.mcmc.seed = 10;
    config.segment.stride = 2;
    let seg = segment_image(&img, &config).unwrap();
    let ari = adjusted_rand_index(&seg.labels, &Partition::from_labels(&truth)).unwrap();
    Outcome::new(
        ari >= 0.8,
        format!("80x60 image, stride 2: {} segments, ARI {ari:.3} (need >= 0.8)", seg.metadata.clusters),
    )
}
