//! Random-crop negative windows over an unwatermarked corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("negative corpus is empty")]
    EmptyCorpus,
    #[error("file {file} has {len} samples, shorter than one {window}-sample window")]
    ShortFile { file: usize, len: usize, window: usize },
    #[error("{requested} windows exceed the per-file cap {cap} over {files} files")]
    OverCapacity { requested: usize, cap: usize, files: usize },
    #[error("split fraction must lie in [0, 1], got {0}")]
    Split(f64),
}

/// One window: `window` samples of file `file` starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub file: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeSampler {
    pub windows_total: usize,
    pub per_file_cap: usize,
    pub seed: u64,
    /// Fraction of windows assigned to the validation split.
    pub split_fraction: f64,
}

impl Default for NegativeSampler {
    fn default() -> Self {
        Self { windows_total: 100_000, per_file_cap: 10_000, seed: 0, split_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSplit {
    pub val: Vec<WindowRef>,
    pub test: Vec<WindowRef>,
}

impl NegativeSampler {
    pub fn new(windows_total: usize, seed: u64) -> Self {
        Self { windows_total, seed, ..Self::default() }
    }

    /// Draw windows with replacement: a file uniformly among those below the
    /// cap, then an offset uniformly in `[0, len - window]`. The draws are
    /// shuffled and the first `split_fraction` go to validation.
    pub fn sample(&self, file_lens: &[usize], window: usize) -> Result<WindowSplit, SamplerError> {
        if file_lens.is_empty() {
            return Err(SamplerError::EmptyCorpus);
        }
        if !(0.0..=1.0).contains(&self.split_fraction) {
            return Err(SamplerError::Split(self.split_fraction));
        }
        if let Some((file, &len)) = file_lens.iter().enumerate().find(|(_, &len)| len < window) {
            return Err(SamplerError::ShortFile { file, len, window });
        }
        if self.windows_total > self.per_file_cap.saturating_mul(file_lens.len()) {
            return Err(SamplerError::OverCapacity {
                requested: self.windows_total,
                cap: self.per_file_cap,
                files: file_lens.len(),
            });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let mut open: Vec<usize> = (0..file_lens.len()).collect();
        let mut used = vec![0usize; file_lens.len()];
        let mut windows = Vec::with_capacity(self.windows_total);
        for _ in 0..self.windows_total {
            let slot = rng.gen_range(0..open.len());
            let file = open[slot];
            windows.push(WindowRef { file, offset: rng.gen_range(0..=file_lens[file] - window) });
            used[file] += 1;
            if used[file] == self.per_file_cap {
                open.swap_remove(slot);
            }
        }
        windows.shuffle(&mut rng);
        let n_val = (self.split_fraction * windows.len() as f64).round() as usize;
        let test = windows.split_off(n_val);
        Ok(WindowSplit { val: windows, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_is_half_and_half() {
        let s = NegativeSampler::new(1000, 3).sample(&[40_000, 90_000], 32_000).unwrap();
        assert_eq!((s.val.len(), s.test.len()), (500, 500));
    }

    #[test]
    fn same_seed_same_windows() {
        let lens = [50_000, 64_000, 32_000];
        let a = NegativeSampler::new(300, 9).sample(&lens, 32_000).unwrap();
        assert_eq!(a, NegativeSampler::new(300, 9).sample(&lens, 32_000).unwrap());
        assert_ne!(a, NegativeSampler::new(300, 10).sample(&lens, 32_000).unwrap());
    }

    #[test]
    fn offsets_stay_inside_files() {
        let lens = [32_000, 32_001, 100_000];
        let s = NegativeSampler::new(3000, 1).sample(&lens, 32_000).unwrap();
        for w in s.val.iter().chain(&s.test) {
            assert!(w.offset + 32_000 <= lens[w.file]);
        }
        // the exact-length file only admits offset zero
        assert!(s.val.iter().chain(&s.test).filter(|w| w.file == 0).all(|w| w.offset == 0));
    }

    #[test]
    fn offsets_cover_the_valid_range() {
        let s = NegativeSampler::new(10_000, 5).sample(&[42_000], 32_000).unwrap();
        let mut hist = [0usize; 10];
        for w in s.val.iter().chain(&s.test) {
            hist[w.offset * 10 / 10_001] += 1;
        }
        // 1000 expected per decile
        assert!(hist.iter().all(|&h| (850..1150).contains(&h)), "{hist:?}");
    }

    #[test]
    fn per_file_cap_is_enforced() {
        let sampler = NegativeSampler { windows_total: 25, per_file_cap: 10, seed: 2, split_fraction: 0.5 };
        let s = sampler.sample(&[40_000; 3], 32_000).unwrap();
        let mut counts = [0; 3];
        for w in s.val.iter().chain(&s.test) {
            counts[w.file] += 1;
        }
        assert!(counts.iter().all(|&c| c <= 10), "{counts:?}");
        let over = NegativeSampler { windows_total: 31, ..sampler }.sample(&[40_000; 3], 32_000);
        assert!(matches!(over, Err(SamplerError::OverCapacity { .. })));
    }

    #[test]
    fn bad_corpora_are_rejected() {
        assert_eq!(NegativeSampler::new(10, 0).sample(&[], 32_000), Err(SamplerError::EmptyCorpus));
        assert!(matches!(
            NegativeSampler::new(10, 0).sample(&[50_000, 100], 32_000),
            Err(SamplerError::ShortFile { file: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn split_partitions_the_draws(total in 0usize..400, frac in 0.0f64..=1.0, seed in any::<u64>()) {
            let sampler = NegativeSampler { windows_total: total, per_file_cap: 1000, seed, split_fraction: frac };
            let s = sampler.sample(&[33_000, 40_000], 32_000).unwrap();
            prop_assert_eq!(s.val.len() + s.test.len(), total);
            prop_assert_eq!(s.val.len(), (frac * total as f64).round() as usize);
        }
    }
}
