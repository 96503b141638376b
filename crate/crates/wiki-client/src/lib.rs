//! Human-readable revision diffs for the inspection step.
//!
//! In fixture mode every diff comes from a local text store and the
//! transport is never touched. In live mode revision pairs are fetched from
//! a wiki Action API, diffed line by line, and cached per revision id.

mod client;
mod diff;
mod transport;

pub use client::{parse_revisions, DiffClient, DiffDoc, DiffError, DiffSource, FixtureTexts, RevisionRef, DEFAULT_BACKOFF};
pub use diff::{apply_diff, compute_diff, excerpt, DiffOp, OpKind, EXCERPT_LIMIT, TRUNCATION_MARKER};
pub use transport::{HttpTransport, NoNetwork, Response, Transport, TransportError};
