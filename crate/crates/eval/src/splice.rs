//! Boundary-aligned splice construction and localisation metrics.
//!
//! An edit is a plan: the sequence of whole chunks making up the output, each
//! tagged with where it came from. Ground truth and scoring both derive from
//! the plan.

use merklespeech_core::dsp::AudioBuffer;
use merklespeech_core::payload::Cid;
use merklespeech_core::protocol::VerificationRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::stats::{iou, macro_f1};

#[derive(Debug, Error, PartialEq)]
pub enum SpliceError {
    #[error("{0} audio has no complete chunk")]
    Empty(&'static str),
    #[error("edit range {at}..{end} exceeds the host's {len} chunks")]
    Range { at: usize, end: usize, len: usize },
    #[error("the plan needs {0} audio, which was not supplied")]
    MissingSource(&'static str),
    #[error("sample rates differ: {0} vs {1}")]
    SampleRate(u32, u32),
    #[error("unknown splice mode `{0}` (expected insert, remove, mute or mixed)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpliceMode {
    Insert,
    Remove,
    Mute,
    Mixed,
}

impl SpliceMode {
    pub const ALL: [SpliceMode; 4] = [Self::Insert, Self::Remove, Self::Mute, Self::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Insert => "insert",
            Self::Remove => "remove",
            Self::Mute => "mute",
            Self::Mixed => "mixed",
        }
    }
}

impl fmt::Display for SpliceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpliceMode {
    type Err = SpliceError;

    fn from_str(s: &str) -> Result<Self, SpliceError> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| SpliceError::UnknownMode(s.to_string()))
    }
}

/// Where an output chunk came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// The host asset.
    A,
    /// A second enrolled asset.
    B,
    /// Unenrolled audio.
    Foreign,
    Silence,
}

/// Three-way class used for mixed-origin scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    A,
    B,
    Unattributed,
}

impl Origin {
    pub fn label(self) -> Label {
        match self {
            Origin::A => Label::A,
            Origin::B => Label::B,
            Origin::Foreign | Origin::Silence => Label::Unattributed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub origin: Origin,
    /// Chunk index within the source.
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplicePlan {
    pub mode: SpliceMode,
    /// Number of chunks in the host asset before editing.
    pub host_chunks: usize,
    pub pieces: Vec<Piece>,
}

fn check_range(at: usize, count: usize, len: usize) -> Result<(), SpliceError> {
    if at + count > len {
        return Err(SpliceError::Range { at, end: at + count, len });
    }
    Ok(())
}

fn host(range: std::ops::Range<usize>) -> impl Iterator<Item = Piece> {
    range.map(|i| Piece { origin: Origin::A, index: i as u32 })
}

impl SplicePlan {
    /// `count` foreign chunks inserted before host chunk `at`.
    pub fn insert(host_chunks: usize, at: usize, count: usize) -> Result<Self, SpliceError> {
        check_range(at, 0, host_chunks)?;
        let pieces = host(0..at)
            .chain((0..count).map(|i| Piece { origin: Origin::Foreign, index: i as u32 }))
            .chain(host(at..host_chunks))
            .collect();
        Ok(Self { mode: SpliceMode::Insert, host_chunks, pieces })
    }

    /// Host chunks `at..at + count` cut out.
    pub fn remove(host_chunks: usize, at: usize, count: usize) -> Result<Self, SpliceError> {
        check_range(at, count, host_chunks)?;
        let pieces = host(0..at).chain(host(at + count..host_chunks)).collect();
        Ok(Self { mode: SpliceMode::Remove, host_chunks, pieces })
    }

    /// Host chunks `at..at + count` replaced by silence.
    pub fn mute(host_chunks: usize, at: usize, count: usize) -> Result<Self, SpliceError> {
        check_range(at, count, host_chunks)?;
        let pieces = (0..host_chunks)
            .map(|i| Piece { origin: if (at..at + count).contains(&i) { Origin::Silence } else { Origin::A }, index: i as u32 })
            .collect();
        Ok(Self { mode: SpliceMode::Mute, host_chunks, pieces })
    }

    /// `len` chunks drawn in seeded random runs from A, B and foreign audio,
    /// each source consumed in order and wrapping around. The first three
    /// runs cover all three sources.
    pub fn mixed(a_chunks: usize, b_chunks: usize, foreign_chunks: usize, len: usize, seed: u64) -> Result<Self, SpliceError> {
        for (n, name) in [(a_chunks, "host"), (b_chunks, "second"), (foreign_chunks, "foreign")] {
            if n == 0 {
                return Err(SpliceError::Empty(name));
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut next = [0usize; 3];
        let sizes = [a_chunks, b_chunks, foreign_chunks];
        let origins = [Origin::A, Origin::B, Origin::Foreign];
        let mut order = [0usize, 1, 2];
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let mut pieces = Vec::with_capacity(len);
        let mut run = 0;
        while pieces.len() < len {
            let src = if run < 3 { order[run] } else { rng.gen_range(0..3) };
            let run_len = rng.gen_range(1..=3).min(len - pieces.len());
            for _ in 0..run_len {
                pieces.push(Piece { origin: origins[src], index: (next[src] % sizes[src]) as u32 });
                next[src] += 1;
            }
            run += 1;
        }
        Ok(Self { mode: SpliceMode::Mixed, host_chunks: a_chunks, pieces })
    }

    /// Tamper mask over the output chunks: anything not from the host.
    pub fn tampered(&self) -> Vec<bool> {
        self.pieces.iter().map(|p| p.origin != Origin::A).collect()
    }

    /// Mask over host chunk indices: chunks absent from the output.
    pub fn removed(&self) -> Vec<bool> {
        let mut present = vec![false; self.host_chunks];
        for p in self.pieces.iter().filter(|p| p.origin == Origin::A) {
            present[p.index as usize] = true;
        }
        present.into_iter().map(|p| !p).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.pieces.iter().map(|p| p.origin.label()).collect()
    }
}

/// Audio the plan draws its chunks from.
#[derive(Debug, Clone, Copy)]
pub struct Sources<'a> {
    pub a: &'a AudioBuffer,
    pub b: Option<&'a AudioBuffer>,
    pub foreign: Option<&'a AudioBuffer>,
}

/// Number of complete chunks in `audio`.
pub fn whole_chunks(audio: &AudioBuffer, chunk_len: usize) -> usize {
    audio.len() / chunk_len
}

/// Concatenate the planned chunks.
pub fn render(plan: &SplicePlan, sources: &Sources, chunk_len: usize) -> Result<AudioBuffer, SpliceError> {
    let rate = sources.a.sample_rate;
    for other in [sources.b, sources.foreign].into_iter().flatten() {
        if other.sample_rate != rate {
            return Err(SpliceError::SampleRate(rate, other.sample_rate));
        }
    }
    let mut samples = Vec::with_capacity(plan.pieces.len() * chunk_len);
    for p in &plan.pieces {
        let (src, name) = match p.origin {
            Origin::A => (Some(sources.a), "host"),
            Origin::B => (sources.b, "second"),
            Origin::Foreign => (sources.foreign, "foreign"),
            Origin::Silence => {
                samples.extend(std::iter::repeat(0.0f32).take(chunk_len));
                continue;
            }
        };
        let src = src.ok_or(SpliceError::MissingSource(name))?;
        let n = whole_chunks(src, chunk_len);
        if n == 0 {
            return Err(SpliceError::Empty(name));
        }
        let start = (p.index as usize % n) * chunk_len;
        samples.extend_from_slice(&src.samples[start..start + chunk_len]);
    }
    Ok(AudioBuffer::new(samples, rate))
}

/// Class predicted for one verification record.
pub fn predicted_label(record: &VerificationRecord, cid_a: &Cid, cid_b: &Cid) -> Label {
    match record.cid {
        Some(c) if record.verified() && c == *cid_a => Label::A,
        Some(c) if record.verified() && c == *cid_b => Label::B,
        _ => Label::Unattributed,
    }
}

/// Localisation score of one tier's chunk records against the plan.
///
/// Insert and mute: IoU of the tamper mask against "not verified". Remove:
/// IoU over host chunk indices of "removed" against "no verified chunk claims
/// this index". Mixed: macro-F1 over {A, B, unattributed}.
pub fn score(plan: &SplicePlan, records: &[VerificationRecord], cid_a: &Cid, cid_b: &Cid) -> f64 {
    match plan.mode {
        SpliceMode::Insert | SpliceMode::Mute => {
            let predicted: Vec<bool> = records.iter().map(|r| !r.verified()).collect();
            iou(&plan.tampered(), &predicted)
        }
        SpliceMode::Remove => {
            let mut recovered = vec![false; plan.host_chunks];
            for r in records.iter().filter(|r| r.verified() && r.cid.as_ref() == Some(cid_a)) {
                if let Some(slot) = r.chunk_index_claimed.and_then(|i| recovered.get_mut(i as usize)) {
                    *slot = true;
                }
            }
            let missing: Vec<bool> = recovered.into_iter().map(|r| !r).collect();
            iou(&plan.removed(), &missing)
        }
        SpliceMode::Mixed => {
            let predicted: Vec<Label> = records.iter().map(|r| predicted_label(r, cid_a, cid_b)).collect();
            macro_f1(&plan.labels(), &predicted, &[Label::A, Label::B, Label::Unattributed])
        }
    }
}
