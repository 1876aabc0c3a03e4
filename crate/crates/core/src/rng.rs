//! Keyed random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(master seed, replicate, domain, pregnancy id)` as the 256-bit key and a
//! purpose tag as the stream number. No stream is shared between
//! pregnancies, so results do not depend on how pregnancies are distributed
//! over worker threads or in which order they are processed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Baseline = 1,
    PregnancyOutcome = 2,
    Preeclampsia = 3,
    PeInduced = 4,
    Encounters = 5,
    MeasuredMissing = 6,
    MiscarriageMissing = 7,
}

/// Which part of the pipeline a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Target-population generation. Shared by all scenarios so that
    /// covariates and uniform draws line up across treatment settings.
    Cohort,
    /// Missingness injection for one scenario.
    Missingness { scenario_id: u32 },
}

impl Domain {
    fn key(self) -> u64 {
        match self {
            Domain::Cohort => 0,
            Domain::Missingness { scenario_id } => (1 << 32) | u64::from(scenario_id),
        }
    }
}

/// Seed material shared by every stream in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replicate: u64,
    pub domain: Domain,
}

impl StreamKey {
    pub fn new(master_seed: u64, replicate: u64, domain: Domain) -> Self {
        StreamKey {
            master_seed,
            replicate,
            domain,
        }
    }

    /// Stream for one pregnancy and purpose. An arm offset of 1 selects a
    /// disjoint stream for the treated arm when arms are drawn independently.
    pub fn stream(&self, pregnancy_id: u64, purpose: Purpose, arm_offset: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.replicate.to_le_bytes());
        seed[16..24].copy_from_slice(&self.domain.key().to_le_bytes());
        seed[24..32].copy_from_slice(&pregnancy_id.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(((purpose as u64) << 8) | arm_offset);
        rng
    }
}

/// One uniform in `[0, 1)` per conception week, `weeks[w]` for week `w`.
pub fn weekly_uniforms(rng: &mut ChaCha8Rng) -> [f64; 42] {
    let mut out = [0.0; 42];
    for u in out
        .iter_mut()
        .skip(usize::from(crate::schedule::FIRST_WEEK))
    {
        *u = rng.gen::<f64>();
    }
    out
}
