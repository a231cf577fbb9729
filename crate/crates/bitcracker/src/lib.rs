//! BitLocker VMK dictionary attack toolkit.
//!
//! This crate adds the pieces that need an operating system to the
//! algorithmic core: streaming volume-image scanning, a multithreaded
//! attack engine with progress reporting and cancellation, and the
//! building blocks behind the `bitcracker` command-line tool.
//!
//! The re-exported [`core`] crate carries the self-contained parts:
//! FVE metadata parsing, the iterated-SHA-256 key derivation, and the
//! AES-CCM checks that validate a candidate against a VMK protector.

pub use bitcracker_core as core;

pub mod engine;
pub mod image;
