//! Three-party private CNN inference.
//!
//! A client encrypts an image under BFV, a cloud evaluates the linear layers
//! homomorphically and re-encrypts the first result to a proxy key, and the
//! proxy and cloud evaluate activations with garbled circuits over truncated
//! additive shares.

pub mod bfv;
pub mod codec;
pub mod error;
pub mod gc;
pub mod linear;
pub mod model;
pub mod noise;
pub mod protocol;
pub mod ring;

pub use error::{Error, ErrorClass, Result};
