//! Core primitives for BitLocker volume master key recovery.
//!
//! This crate implements the pieces of the BitLocker key hierarchy that a
//! dictionary attack needs, without touching the operating system or the
//! filesystem: FVE metadata parsing, the iterated SHA-256 key derivation,
//! and AES-CCM decryption of the volume master key. Everything operates on
//! byte slices so it can run in `no_std` environments; the `alloc` crate is
//! required for parsed metadata and for the precomputed schedule table.
//!
//! The companion `bitcracker` crate adds file IO, a multithreaded attack
//! engine, and a command line interface on top of this one.

#![no_std]
#![deny(unsafe_op_in_unsafe_fn)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aes;
pub mod bde;
pub mod ccm;
pub mod kdf;
pub mod sha256;
