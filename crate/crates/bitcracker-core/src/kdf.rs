//! Candidate secret to 256-bit intermediate AES key: the double hash of
//! the password followed by the 0x100000-iteration SHA-256 loop.
//!
//! Every loop iteration hashes an 88-byte message carrying the previous
//! digest, the candidate hash, the protector salt and the iteration
//! counter. The second 64-byte block of that message depends only on the
//! salt and the counter, so its message schedules can be computed once
//! per salt ([`WScheduleTable`]) and shared read-only by every candidate
//! and every worker thread.

use alloc::vec::Vec;
use core::fmt;

use crate::sha256::{self, compress_unrolled, extend_schedule, schedule_words, H0};

/// Production iteration count of the BitLocker loop.
pub const DEFAULT_ITERATIONS: u32 = 0x10_0000;

/// Serialized message length before padding.
pub const MESSAGE_LEN: usize = 88;

/// Upper bound on each recovery password group (exclusive).
pub const RECOVERY_GROUP_LIMIT: u32 = 720_896;

/// 256-bit key produced by the derivation loop, consumed by AES-CCM.
pub type IntermediateKey = [u8; 32];

/// The structure hashed on every loop iteration. Serializes to 88 bytes;
/// `hash_count` stays below [`DEFAULT_ITERATIONS`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitlockerMessage {
    /// Digest produced by the previous iteration; all zero for the first.
    pub update_hash: [u8; 32],
    /// Hash of the candidate secret, fixed across iterations.
    pub password_hash: [u8; 32],
    /// Salt from the VMK protector.
    pub salt: [u8; 16],
    /// Iteration counter, incremented after every iteration from 0.
    pub hash_count: u64,
}

/// Serializes a message into its two padded 64-byte SHA-256 blocks:
/// block 1 is `update_hash ‖ password_hash`; block 2 is the salt, the
/// little-endian counter, the 0x80 padding byte and the big-endian bit
/// length 704.
pub fn serialize_message(m: &BitlockerMessage) -> [u8; 128] {
    let mut out = [0u8; 128];
    out[..32].copy_from_slice(&m.update_hash);
    out[32..64].copy_from_slice(&m.password_hash);
    out[64..80].copy_from_slice(&m.salt);
    out[80..88].copy_from_slice(&m.hash_count.to_le_bytes());
    out[88] = 0x80;
    out[120..].copy_from_slice(&(MESSAGE_LEN as u64 * 8).to_be_bytes());
    out
}

/// Candidate secrets the derivation refuses to process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateError {
    EmptyPassword,
}

impl fmt::Display for CandidateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateError::EmptyPassword => f.write_str("empty password"),
        }
    }
}

impl core::error::Error for CandidateError {}

/// Hashes a user password: SHA-256 applied twice to the UTF-16LE encoding.
pub fn password_to_initial_hash(password: &str) -> Result<[u8; 32], CandidateError> {
    if password.is_empty() {
        return Err(CandidateError::EmptyPassword);
    }
    let mut encoded = Vec::with_capacity(password.len() * 2);
    for unit in password.encode_utf16() {
        encoded.extend_from_slice(&unit.to_le_bytes());
    }
    Ok(sha256::digest(&sha256::digest(&encoded)))
}

/// A syntactically valid recovery password: eight groups of six digits,
/// each divisible by 11 and below 720896.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecoveryPassword {
    groups: [u32; 8],
}

/// Validation failures, each naming the offending group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecoveryPasswordError {
    GroupCount { found: usize },
    BadDigits { group: usize },
    TooLarge { group: usize, value: u32 },
    NotDivisible { group: usize, value: u32 },
}

impl fmt::Display for RecoveryPasswordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RecoveryPasswordError::GroupCount { found } => {
                write!(f, "expected 8 groups separated by '-', found {found}")
            }
            RecoveryPasswordError::BadDigits { group } => {
                write!(f, "group {group} is not exactly 6 decimal digits")
            }
            RecoveryPasswordError::TooLarge { group, value } => {
                write!(f, "group {group} value {value} is not less than 720896")
            }
            RecoveryPasswordError::NotDivisible { group, value } => {
                write!(f, "group {group} value {value} is not divisible by 11")
            }
        }
    }
}

impl core::error::Error for RecoveryPasswordError {}

/// Parses and validates a recovery password of the form
/// `XXXXXX-XXXXXX-...` (eight groups). Surrounding whitespace is ignored.
pub fn validate_recovery_password(text: &str) -> Result<RecoveryPassword, RecoveryPasswordError> {
    let found = text.trim().split('-').count();
    if found != 8 {
        return Err(RecoveryPasswordError::GroupCount { found });
    }
    let mut groups = [0u32; 8];
    for (index, part) in text.trim().split('-').enumerate() {
        if part.len() != 6 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(RecoveryPasswordError::BadDigits { group: index });
        }
        let value: u32 = part.parse().unwrap();
        if value >= RECOVERY_GROUP_LIMIT {
            return Err(RecoveryPasswordError::TooLarge { group: index, value });
        }
        if !value.is_multiple_of(11) {
            return Err(RecoveryPasswordError::NotDivisible { group: index, value });
        }
        groups[index] = value;
    }
    Ok(RecoveryPassword { groups })
}

impl RecoveryPassword {
    pub fn groups(&self) -> [u32; 8] {
        self.groups
    }

    /// Each group divided by 11; the quotients all fit in 16 bits.
    pub fn block_words(&self) -> [u16; 8] {
        self.groups.map(|g| (g / 11) as u16)
    }

    /// The 16-byte buffer that gets hashed: the block words, little-endian.
    pub fn key_buffer(&self) -> [u8; 16] {
        let mut buf = [0u8; 16];
        for (chunk, word) in buf.chunks_exact_mut(2).zip(self.block_words()) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        buf
    }
}

/// Hashes a recovery password: a single SHA-256 over the 16-byte buffer
/// of group quotients.
pub fn recovery_to_initial_hash(rp: &RecoveryPassword) -> [u8; 32] {
    sha256::digest(&rp.key_buffer())
}

/// Derivation failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KdfError {
    IterationsOutOfRange { iterations: u32 },
    TableSaltMismatch,
    TableTooShort { rows: usize, iterations: u32 },
    TableAllocation,
}

impl fmt::Display for KdfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KdfError::IterationsOutOfRange { iterations } => {
                write!(f, "iteration count {iterations} outside 1..=1048576")
            }
            KdfError::TableSaltMismatch => {
                f.write_str("W-schedule table was built for a different salt")
            }
            KdfError::TableTooShort { rows, iterations } => {
                write!(
                    f,
                    "W-schedule table holds {rows} rows, fewer than the {iterations} requested iterations"
                )
            }
            KdfError::TableAllocation => f.write_str(
                "cannot allocate the W-schedule table; use the on-the-fly schedule policy instead",
            ),
        }
    }
}

impl core::error::Error for KdfError {}

/// Precomputed message schedules for the second block, one row per
/// counter value. Immutable once built; safe to share across workers.
pub struct WScheduleTable {
    salt: [u8; 16],
    rows: Vec<[u32; 64]>,
}

impl WScheduleTable {
    /// Builds the full production table: 0x100000 rows, 256 MiB.
    pub fn precompute(salt: &[u8; 16]) -> Result<Self, KdfError> {
        Self::for_iterations(salt, DEFAULT_ITERATIONS)
    }

    /// Builds a table covering counters `0..iterations`, for runs below
    /// the production iteration count.
    pub fn for_iterations(salt: &[u8; 16], iterations: u32) -> Result<Self, KdfError> {
        if iterations == 0 || iterations > DEFAULT_ITERATIONS {
            return Err(KdfError::IterationsOutOfRange { iterations });
        }
        let mut rows = Vec::new();
        rows.try_reserve_exact(iterations as usize)
            .map_err(|_| KdfError::TableAllocation)?;
        let mut block2 = second_block_template(salt);
        for hash_count in 0..iterations as u64 {
            block2[16..24].copy_from_slice(&hash_count.to_le_bytes());
            rows.push(schedule_words(&block2));
        }
        Ok(WScheduleTable { salt: *salt, rows })
    }

    pub fn salt(&self) -> &[u8; 16] {
        &self.salt
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, hash_count: u32) -> &[u32; 64] {
        &self.rows[hash_count as usize]
    }

    /// Table footprint in bytes: rows × 64 words × 4 bytes.
    pub fn byte_size(&self) -> usize {
        self.rows.len() * 64 * 4
    }
}

/// Builds the full table for a salt (the Precompute policy).
pub fn precompute_w_table(salt: &[u8; 16]) -> Result<WScheduleTable, KdfError> {
    WScheduleTable::precompute(salt)
}

fn second_block_template(salt: &[u8; 16]) -> [u8; 64] {
    let mut block = [0u8; 64];
    block[..16].copy_from_slice(salt);
    block[24] = 0x80;
    block[56..].copy_from_slice(&(MESSAGE_LEN as u64 * 8).to_be_bytes());
    block
}

fn hash_words(bytes: &[u8; 32]) -> [u32; 8] {
    let mut words = [0u32; 8];
    for (word, chunk) in words.iter_mut().zip(bytes.chunks_exact(4)) {
        *word = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    words
}

fn hash_bytes(words: &[u32; 8]) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    for (chunk, word) in bytes.chunks_exact_mut(4).zip(words) {
        chunk.copy_from_slice(&word.to_be_bytes());
    }
    bytes
}

fn salt_words(salt: &[u8; 16]) -> [u32; 4] {
    let mut words = [0u32; 4];
    for (word, chunk) in words.iter_mut().zip(salt.chunks_exact(4)) {
        *word = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    words
}

fn validate(
    salt: &[u8; 16],
    iterations: u32,
    table: Option<&WScheduleTable>,
) -> Result<(), KdfError> {
    if iterations == 0 || iterations > DEFAULT_ITERATIONS {
        return Err(KdfError::IterationsOutOfRange { iterations });
    }
    if let Some(table) = table {
        if table.salt != *salt {
            return Err(KdfError::TableSaltMismatch);
        }
        if table.len() < iterations as usize {
            return Err(KdfError::TableTooShort {
                rows: table.len(),
                iterations,
            });
        }
    }
    Ok(())
}

/// Runs the derivation loop for one candidate. `initial_hash` comes from
/// [`password_to_initial_hash`] or [`recovery_to_initial_hash`]; a
/// supplied table must match the salt and cover the iteration range.
pub fn derive_intermediate_key(
    initial_hash: &[u8; 32],
    salt: &[u8; 16],
    iterations: u32,
    table: Option<&WScheduleTable>,
) -> Result<IntermediateKey, KdfError> {
    validate(salt, iterations, table)?;
    let words = derive_words(&[hash_words(initial_hash)], salt, iterations, table);
    Ok(hash_bytes(&words[0]))
}

/// Runs the derivation loop for a batch of candidates sharing one salt,
/// letting the SHA-NI kernel process several lanes in lockstep.
pub fn derive_intermediate_keys(
    initial_hashes: &[[u8; 32]],
    salt: &[u8; 16],
    iterations: u32,
    table: Option<&WScheduleTable>,
) -> Result<Vec<IntermediateKey>, KdfError> {
    validate(salt, iterations, table)?;
    let mut keys = Vec::with_capacity(initial_hashes.len());
    let mut chunks = initial_hashes.chunks_exact(LANES);
    for chunk in &mut chunks {
        let mut lanes = [[0u32; 8]; LANES];
        for (lane, hash) in lanes.iter_mut().zip(chunk) {
            *lane = hash_words(hash);
        }
        let derived = derive_words(&lanes, salt, iterations, table);
        keys.extend(derived.iter().map(hash_bytes));
    }
    for hash in chunks.remainder() {
        let derived = derive_words(&[hash_words(hash)], salt, iterations, table);
        keys.push(hash_bytes(&derived[0]));
    }
    Ok(keys)
}

/// Lanes processed per kernel call; sized so independent SHA-NI rounds
/// cover the instruction latency of one chain. Callers that poll for
/// cancellation between derivations get the best latency by splitting
/// batches at this width.
pub const LANES: usize = 4;

fn derive_words<const N: usize>(
    initial: &[[u32; 8]; N],
    salt: &[u8; 16],
    iterations: u32,
    table: Option<&WScheduleTable>,
) -> [[u32; 8]; N] {
    let salt_w = salt_words(salt);
    #[cfg(target_arch = "x86_64")]
    if crate::sha256::shani::available() {
        return unsafe { kernel::derive_lanes(initial, &salt_w, iterations, table) };
    }
    let mut out = [[0u32; 8]; N];
    for (words, candidate) in out.iter_mut().zip(initial) {
        *words = derive_portable(candidate, &salt_w, iterations, table);
    }
    out
}

fn derive_portable(
    initial: &[u32; 8],
    salt_w: &[u32; 4],
    iterations: u32,
    table: Option<&WScheduleTable>,
) -> [u32; 8] {
    let mut update = [0u32; 8];
    let mut w1 = [0u32; 64];
    let mut w2 = [0u32; 64];
    w2[..4].copy_from_slice(salt_w);
    w2[6] = 0x8000_0000;
    w2[15] = MESSAGE_LEN as u32 * 8;
    for hash_count in 0..iterations {
        w1[..8].copy_from_slice(&update);
        w1[8..16].copy_from_slice(initial);
        extend_schedule(&mut w1);
        let mut state = H0;
        compress_unrolled(&mut state, &w1);
        match table {
            Some(table) => compress_unrolled(&mut state, table.row(hash_count)),
            None => {
                w2[4] = hash_count.swap_bytes();
                extend_schedule(&mut w2);
                compress_unrolled(&mut state, &w2);
            }
        }
        update = state;
    }
    update
}

#[cfg(target_arch = "x86_64")]
mod kernel {
    use core::arch::x86_64::*;

    use super::{WScheduleTable, MESSAGE_LEN};
    use crate::sha256::shani::{k_quad, load_state, rounds4, schedule, unpack_state};
    use crate::sha256::H0;

    /// Derives N candidates with each lane's compression written out
    /// sequentially; independent lanes overlap through out-of-order
    /// execution without holding N register sets live at once.
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(super) fn derive_lanes<const N: usize>(
        initial: &[[u32; 8]; N],
        salt_words: &[u32; 4],
        iterations: u32,
        table: Option<&WScheduleTable>,
    ) -> [[u32; 8]; N] {
        let (h_abef, h_cdgh) = load_state(&H0);
        let zero = _mm_setzero_si128();

        let mut pw_lo = [zero; N];
        let mut pw_hi = [zero; N];
        for l in 0..N {
            pw_lo[l] = unsafe { _mm_loadu_si128(initial[l].as_ptr().cast()) };
            pw_hi[l] = unsafe { _mm_loadu_si128(initial[l].as_ptr().add(4).cast()) };
        }

        let salt_quad = unsafe { _mm_loadu_si128(salt_words.as_ptr().cast()) };
        let len_quad = _mm_set_epi32(MESSAGE_LEN as i32 * 8, 0, 0, 0);

        let mut upd_lo = [zero; N];
        let mut upd_hi = [zero; N];

        for hash_count in 0..iterations {
            let mut mid_abef = [zero; N];
            let mut mid_cdgh = [zero; N];
            for l in 0..N {
                let mut abef = h_abef;
                let mut cdgh = h_cdgh;
                let mut w = [upd_lo[l], upd_hi[l], pw_lo[l], pw_hi[l]];
                for (q, &quad) in w.iter().enumerate() {
                    rounds4(&mut abef, &mut cdgh, _mm_add_epi32(quad, k_quad(q)));
                }
                for q in 4..16 {
                    let next = schedule(w[0], w[1], w[2], w[3]);
                    rounds4(&mut abef, &mut cdgh, _mm_add_epi32(next, k_quad(q)));
                    w = [w[1], w[2], w[3], next];
                }
                mid_abef[l] = _mm_add_epi32(abef, h_abef);
                mid_cdgh[l] = _mm_add_epi32(cdgh, h_cdgh);
            }

            match table {
                Some(table) => {
                    let row = table.row(hash_count);
                    for l in 0..N {
                        let mut abef = mid_abef[l];
                        let mut cdgh = mid_cdgh[l];
                        for q in 0..16 {
                            let wv =
                                unsafe { _mm_loadu_si128(row.as_ptr().add(4 * q).cast()) };
                            rounds4(&mut abef, &mut cdgh, _mm_add_epi32(wv, k_quad(q)));
                        }
                        let (lo, hi) = unpack_state(
                            _mm_add_epi32(abef, mid_abef[l]),
                            _mm_add_epi32(cdgh, mid_cdgh[l]),
                        );
                        upd_lo[l] = lo;
                        upd_hi[l] = hi;
                    }
                }
                None => {
                    let count_quad = _mm_set_epi32(
                        0,
                        0x8000_0000u32 as i32,
                        0,
                        hash_count.swap_bytes() as i32,
                    );
                    let mut wk = [zero; 16];
                    let mut wq = [salt_quad, count_quad, zero, len_quad];
                    for (q, slot) in wk.iter_mut().enumerate() {
                        if q < 4 {
                            *slot = _mm_add_epi32(wq[q], k_quad(q));
                        } else {
                            let next = schedule(wq[0], wq[1], wq[2], wq[3]);
                            *slot = _mm_add_epi32(next, k_quad(q));
                            wq = [wq[1], wq[2], wq[3], next];
                        }
                    }
                    for l in 0..N {
                        let mut abef = mid_abef[l];
                        let mut cdgh = mid_cdgh[l];
                        for quad in wk {
                            rounds4(&mut abef, &mut cdgh, quad);
                        }
                        let (lo, hi) = unpack_state(
                            _mm_add_epi32(abef, mid_abef[l]),
                            _mm_add_epi32(cdgh, mid_cdgh[l]),
                        );
                        upd_lo[l] = lo;
                        upd_hi[l] = hi;
                    }
                }
            }
        }

        let mut out = [[0u32; 8]; N];
        for l in 0..N {
            unsafe {
                _mm_storeu_si128(out[l].as_mut_ptr().cast(), upd_lo[l]);
                _mm_storeu_si128(out[l].as_mut_ptr().add(4).cast(), upd_hi[l]);
            }
        }
        out
    }

}
