use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::NodeProfile;
use crate::catalog::ModelCatalog;
use crate::fsm::ProfileReport;

/// Images timed per level when a node profiles itself.
pub const CALIBRATION_IMAGES: u64 = 32;

/// Outcome of running a batch on the simulated executor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceRun {
    pub images_done: u64,
    pub top5_correct: u64,
    /// Simulated seconds.
    pub elapsed: f64,
}

impl InferenceRun {
    pub fn elapsed_ms(&self) -> u64 {
        (self.elapsed * 1000.0).round() as u64
    }
}

/// Per-image latency and top-5 outcome for one node at one level.
///
/// Latency is lognormal with mean `1 / perf` and coefficient of variation
/// `noise_cv` (exactly `1 / perf` when the CV is zero); correctness is a
/// Bernoulli draw with the level's catalog accuracy. Both come from one
/// seeded stream, so a seed fixes the whole sequence.
pub struct ImageStream {
    rng: ChaCha8Rng,
    mean: f64,
    jitter: Option<LogNormal<f64>>,
    accuracy: f64,
}

impl ImageStream {
    pub fn new(perf: f64, noise_cv: f64, accuracy: f64, seed: u64) -> Self {
        let mean = 1.0 / perf;
        let jitter = (noise_cv > 0.0).then(|| {
            let sigma2 = (1.0 + noise_cv * noise_cv).ln();
            LogNormal::new(mean.ln() - sigma2 / 2.0, sigma2.sqrt()).expect("finite parameters")
        });
        Self { rng: ChaCha8Rng::seed_from_u64(seed), mean, jitter, accuracy }
    }

    pub fn for_level(profile: &NodeProfile, catalog: &ModelCatalog, level: usize, seed: u64) -> Self {
        Self::new(
            profile.perf_per_level[level],
            profile.noise_cv,
            catalog.accuracy(level),
            seed,
        )
    }
}

impl Iterator for ImageStream {
    /// (latency in seconds, top-5 hit)
    type Item = (f64, bool);

    fn next(&mut self) -> Option<Self::Item> {
        let latency = match &self.jitter {
            Some(d) => d.sample(&mut self.rng),
            None => self.mean,
        };
        let correct = self.rng.random::<f64>() < self.accuracy;
        Some((latency, correct))
    }
}

/// Runs `images` images at `level`. Deterministic in all arguments.
pub fn run_inference(
    profile: &NodeProfile,
    catalog: &ModelCatalog,
    images: u64,
    level: usize,
    seed: u64,
) -> InferenceRun {
    let mut run = InferenceRun { images_done: 0, top5_correct: 0, elapsed: 0.0 };
    for (latency, correct) in ImageStream::for_level(profile, catalog, level, seed).take(images as usize) {
        run.images_done += 1;
        run.top5_correct += u64::from(correct);
        run.elapsed += latency;
    }
    run
}

fn calibration_seed(base: u64, level: usize) -> u64 {
    base ^ (level as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Measures throughput per level by timing a calibration batch.
///
/// Without jitter the measurement is exact, so the true throughput is
/// reported as is. With jitter the measured column is made monotone with a
/// running maximum, since deeper approximations are never slower.
pub fn profile_self(profile: &NodeProfile, catalog: &ModelCatalog) -> ProfileReport {
    let levels = profile.perf_per_level.len();
    let perf_column = if profile.noise_cv == 0.0 {
        profile.perf_per_level.clone()
    } else {
        let mut best = 0.0f64;
        (0..levels)
            .map(|level| {
                let seed = calibration_seed(profile.rng_seed, level);
                let run = run_inference(profile, catalog, CALIBRATION_IMAGES, level, seed);
                best = best.max(CALIBRATION_IMAGES as f64 / run.elapsed);
                best
            })
            .collect()
    };
    ProfileReport {
        node_id: profile.node_id.clone(),
        perf_column,
        acc: catalog.accuracies()[..levels].to_vec(),
    }
}
