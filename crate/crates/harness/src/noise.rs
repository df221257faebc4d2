//! Seeded Gaussian measurement noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use fracwave::dnmap::{DnOracle, DnRecord, ExteriorInput};
use fracwave::lattice::{Grid, RegionMask, SpaceTimeField};

/// Adds i.i.d. Gaussian noise to every `w2` entry of the trace, scaled so the
/// expected Euclidean norm of the perturbation is `level * ||trace||`.
///
/// Only `w2` entries carry data, so the perturbation keeps the support of the
/// trace. Pairing caches are dropped: they would no longer describe the
/// noisy record.
pub fn add_noise(record: &DnRecord, mask: &RegionMask, level: f64, seed: u64) -> DnRecord {
    assert!(level >= 0.0 && level.is_finite(), "noise level must be a finite non-negative number");
    if level == 0.0 {
        return record.clone();
    }
    let samples = record.trace.levels() * mask.w2_nodes().len();
    let norm = trace_norm(&record.trace, mask);
    if samples == 0 || norm == 0.0 {
        return record.clone();
    }
    let sigma = level * norm / (samples as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = record.trace.clone();
    for frame in trace.frames_mut() {
        let values = frame.values_mut();
        for &i in mask.w2_nodes() {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[i] += sigma * z;
        }
    }
    DnRecord {
        trace,
        pairing_cache: None,
        provenance: format!("{} + noise(level={level}, seed={seed})", record.provenance),
        ..record.clone()
    }
}

/// Seed of one measurement: the base seed mixed with the input label, so the
/// noise does not depend on the order in which measurements are requested.
pub fn measurement_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(label.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Wraps an oracle and perturbs every trace it returns.
pub struct NoisyOracle<O> {
    inner: O,
    level: f64,
    seed: u64,
}

impl<O: DnOracle> NoisyOracle<O> {
    pub fn new(inner: O, level: f64, seed: u64) -> Self {
        Self { inner, level, seed }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn level(&self) -> f64 {
        self.level
    }
}

impl<O: DnOracle> DnOracle for NoisyOracle<O> {
    fn grid(&self) -> &Grid {
        self.inner.grid()
    }

    fn mask(&self) -> &RegionMask {
        self.inner.mask()
    }

    fn measure(&self, input: &ExteriorInput) -> fracwave::Result<DnRecord> {
        let clean = self.inner.measure(input)?;
        let seed = measurement_seed(self.seed, input.label());
        Ok(add_noise(&clean, self.inner.mask(), self.level, seed))
    }
}

/// Euclidean norm of the `w2` entries.
pub fn trace_norm(trace: &SpaceTimeField, mask: &RegionMask) -> f64 {
    trace
        .frames()
        .iter()
        .flat_map(|f| mask.w2_nodes().iter().map(move |&i| f.values()[i]))
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}
