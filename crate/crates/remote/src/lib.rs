//! HTTP transport for segmentation and acting: clients that implement the
//! core `Segmenter` and `Policy` traits over JSON-POST endpoints, plus
//! loopback mock servers that expose any in-process implementation through
//! the same wire. The mock pair is the reference for protocol conformance:
//! a remote client talking to a mock wrapping a built-in segmenter must be
//! indistinguishable from calling the built-in directly.
//!
//! Wire layout (see the body types in `clicksim_core::records`):
//! - `POST /predict`: image and masks as base64 PNG, clicks as pixel
//!   coordinates, an opaque base64 prior echoed between calls.
//! - `POST /act`: question, transcript of (think, action, observation)
//!   turns, current observation; returns one raw tagged turn.

mod client;
mod server;

pub use client::{RemotePolicy, RemoteSegmenter};
pub use server::{MockPolicyServer, MockSegmenterServer, ServeError};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

fn b64_encode(bytes: &[u8]) -> String {
    BASE64.encode(bytes)
}

fn b64_decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    BASE64.decode(text)
}
