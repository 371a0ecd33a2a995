//! Chunk-local, public-key verifiable speech provenance.
//!
//! Enrollment splits audio into fixed-length chunks, embeds a compact
//! Reed–Solomon protected payload into each chunk with a QIM watermark in the
//! STFT log-magnitude domain, fingerprints the watermarked chunks and commits
//! the fingerprints in a SHA-256 Merkle tree whose root is signed with an
//! Ed25519 issuer key. Verification decodes the payload of every window,
//! fetches the manifest and inclusion proof from a repository and reports a
//! per-chunk timeline at two assurance tiers:
//!
//! * `wm_only`: payload decodes, manifest resolves, signature verifies;
//! * `msv1`: additionally, the recomputed fingerprint is included under the
//!   signed root.

pub mod dsp;
pub mod error;
pub mod fingerprint;
pub mod hexbytes;
pub mod manifest;
pub mod merkle;
pub mod payload;
pub mod protocol;
pub mod repository;
pub mod watermark;

pub use error::{Error, Result};

/// Version string recorded in every manifest's parameters.
pub const TOOLKIT_VERSION: &str = concat!("merklespeech/", env!("CARGO_PKG_VERSION"));
