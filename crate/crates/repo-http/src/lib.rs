//! HTTP access to a manifest repository.
//!
//! | method | path                        | body                  |
//! |--------|-----------------------------|-----------------------|
//! | GET    | `/manifest/{cid}`           | manifest              |
//! | GET    | `/manifest/by-rid/{rid}`    | manifest              |
//! | GET    | `/proof/{cid}/{i}`          | inclusion proof       |
//! | PUT    | `/manifest/{cid}`           | manifest              |
//! | PUT    | `/proofs/{cid}`             | array of all proofs   |
//!
//! Identifiers are lowercase hex. Bodies are canonical JSON. Absence is
//! `404`, a conflicting write `409`, a malformed path or body `400`.

mod client;
mod server;

pub use client::HttpRepository;
pub use server::{router, serve, ServerHandle};
