//! SHA-256 as specified in FIPS 180-4.
//!
//! The key derivation loop spends nearly all of its time in this module,
//! so the compression function and the message schedule are exposed as
//! separate operations: the loop injects precomputed schedules for the
//! second message block instead of recomputing them every iteration.
//!
//! Three interchangeable compression paths exist: a plain looped version
//! that tracks the standard line by line, an unrolled version, and an
//! SHA-NI version selected at runtime on x86-64. The portable paths are
//! authoritative; the test suite holds all three to identical output.

/// Initial hash value: the first 32 bits of the fractional parts of the
/// square roots of the first eight primes.
pub const H0: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

/// Round constants: the first 32 bits of the fractional parts of the cube
/// roots of the first 64 primes.
pub const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5,
    0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc,
    0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3,
    0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5,
    0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

#[inline(always)]
fn ch(x: u32, y: u32, z: u32) -> u32 {
    (x & y) ^ (!x & z)
}

#[inline(always)]
fn maj(x: u32, y: u32, z: u32) -> u32 {
    (x & y) ^ (x & z) ^ (y & z)
}

#[inline(always)]
fn big_sigma0(x: u32) -> u32 {
    x.rotate_right(2) ^ x.rotate_right(13) ^ x.rotate_right(22)
}

#[inline(always)]
fn big_sigma1(x: u32) -> u32 {
    x.rotate_right(6) ^ x.rotate_right(11) ^ x.rotate_right(25)
}

#[inline(always)]
fn small_sigma0(x: u32) -> u32 {
    x.rotate_right(7) ^ x.rotate_right(18) ^ (x >> 3)
}

#[inline(always)]
fn small_sigma1(x: u32) -> u32 {
    x.rotate_right(17) ^ x.rotate_right(19) ^ (x >> 10)
}

/// Fills schedule words 16..63 from words 0..15 by the FIPS recurrence.
#[inline]
pub(crate) fn extend_schedule(w: &mut [u32; 64]) {
    for t in 16..64 {
        w[t] = small_sigma1(w[t - 2])
            .wrapping_add(w[t - 7])
            .wrapping_add(small_sigma0(w[t - 15]))
            .wrapping_add(w[t - 16]);
    }
}

/// Expands one 64-byte message block into the 64-word message schedule.
/// Words 0..15 are the big-endian reads of the block.
pub fn schedule_words(block: &[u8; 64]) -> [u32; 64] {
    let mut w = [0u32; 64];
    for (word, chunk) in w[..16].iter_mut().zip(block.chunks_exact(4)) {
        *word = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    extend_schedule(&mut w);
    w
}

/// Runs the 64 rounds plus the feed-forward addition over one expanded
/// schedule, using the fastest implementation available on this CPU.
pub fn compress(state: &mut [u32; 8], w: &[u32; 64]) {
    #[cfg(target_arch = "x86_64")]
    if shani::available() {
        unsafe { shani::compress_w(state, w) };
        return;
    }
    compress_unrolled(state, w);
}

/// Reference compression function, written to track FIPS 180-4 line by
/// line. Used as the oracle the optimized paths are tested against.
pub fn compress_looped(state: &mut [u32; 8], w: &[u32; 64]) {
    let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut h] = *state;
    for t in 0..64 {
        let t1 = h
            .wrapping_add(big_sigma1(e))
            .wrapping_add(ch(e, f, g))
            .wrapping_add(K[t])
            .wrapping_add(w[t]);
        let t2 = big_sigma0(a).wrapping_add(maj(a, b, c));
        h = g;
        g = f;
        f = e;
        e = d.wrapping_add(t1);
        d = c;
        c = b;
        b = a;
        a = t1.wrapping_add(t2);
    }
    state[0] = state[0].wrapping_add(a);
    state[1] = state[1].wrapping_add(b);
    state[2] = state[2].wrapping_add(c);
    state[3] = state[3].wrapping_add(d);
    state[4] = state[4].wrapping_add(e);
    state[5] = state[5].wrapping_add(f);
    state[6] = state[6].wrapping_add(g);
    state[7] = state[7].wrapping_add(h);
}

macro_rules! round {
    ($a:ident, $b:ident, $c:ident, $d:ident,
     $e:ident, $f:ident, $g:ident, $h:ident, $w:expr, $k:expr) => {
        let t1 = $h
            .wrapping_add(big_sigma1($e))
            .wrapping_add(ch($e, $f, $g))
            .wrapping_add($k)
            .wrapping_add($w);
        let t2 = big_sigma0($a).wrapping_add(maj($a, $b, $c));
        $d = $d.wrapping_add(t1);
        $h = t1.wrapping_add(t2);
    };
}

/// Unrolled compression function: eight rounds per step with the working
/// variables rotated through the argument list instead of shuffled.
pub fn compress_unrolled(state: &mut [u32; 8], w: &[u32; 64]) {
    let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut h] = *state;
    let mut t = 0;
    while t < 64 {
        round!(a, b, c, d, e, f, g, h, w[t], K[t]);
        round!(h, a, b, c, d, e, f, g, w[t + 1], K[t + 1]);
        round!(g, h, a, b, c, d, e, f, w[t + 2], K[t + 2]);
        round!(f, g, h, a, b, c, d, e, w[t + 3], K[t + 3]);
        round!(e, f, g, h, a, b, c, d, w[t + 4], K[t + 4]);
        round!(d, e, f, g, h, a, b, c, w[t + 5], K[t + 5]);
        round!(c, d, e, f, g, h, a, b, w[t + 6], K[t + 6]);
        round!(b, c, d, e, f, g, h, a, w[t + 7], K[t + 7]);
        t += 8;
    }
    state[0] = state[0].wrapping_add(a);
    state[1] = state[1].wrapping_add(b);
    state[2] = state[2].wrapping_add(c);
    state[3] = state[3].wrapping_add(d);
    state[4] = state[4].wrapping_add(e);
    state[5] = state[5].wrapping_add(f);
    state[6] = state[6].wrapping_add(g);
    state[7] = state[7].wrapping_add(h);
}

/// One-shot digest with FIPS 180-4 padding.
pub fn digest(message: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(message);
    hasher.finalize()
}

/// Incremental hasher for messages that arrive in pieces.
#[derive(Clone)]
pub struct Sha256 {
    state: [u32; 8],
    buf: [u8; 64],
    buf_len: usize,
    message_len: u64,
}

impl Sha256 {
    pub fn new() -> Self {
        Sha256 {
            state: H0,
            buf: [0; 64],
            buf_len: 0,
            message_len: 0,
        }
    }

    pub fn update(&mut self, mut data: &[u8]) {
        self.message_len = self.message_len.wrapping_add(data.len() as u64);
        if self.buf_len > 0 {
            let take = data.len().min(64 - self.buf_len);
            self.buf[self.buf_len..self.buf_len + take].copy_from_slice(&data[..take]);
            self.buf_len += take;
            data = &data[take..];
            if self.buf_len < 64 {
                return;
            }
            let block = self.buf;
            self.compress_blocks(&block);
            self.buf_len = 0;
        }
        let whole = data.len() - data.len() % 64;
        if whole > 0 {
            self.compress_blocks(&data[..whole]);
            data = &data[whole..];
        }
        self.buf[..data.len()].copy_from_slice(data);
        self.buf_len = data.len();
    }

    pub fn finalize(mut self) -> [u8; 32] {
        let bit_len = self.message_len.wrapping_mul(8);
        let mut tail = [0u8; 128];
        tail[..self.buf_len].copy_from_slice(&self.buf[..self.buf_len]);
        tail[self.buf_len] = 0x80;
        let tail_len = if self.buf_len < 56 { 64 } else { 128 };
        tail[tail_len - 8..tail_len].copy_from_slice(&bit_len.to_be_bytes());
        let tail = tail;
        self.compress_blocks(&tail[..tail_len]);
        let mut out = [0u8; 32];
        for (chunk, word) in out.chunks_exact_mut(4).zip(self.state) {
            chunk.copy_from_slice(&word.to_be_bytes());
        }
        out
    }

    fn compress_blocks(&mut self, blocks: &[u8]) {
        debug_assert_eq!(blocks.len() % 64, 0);
        #[cfg(target_arch = "x86_64")]
        if shani::available() {
            unsafe { shani::compress_blocks(&mut self.state, blocks) };
            return;
        }
        for block in blocks.chunks_exact(64) {
            let w = schedule_words(block.try_into().unwrap());
            compress_unrolled(&mut self.state, &w);
        }
    }
}

impl Default for Sha256 {
    fn default() -> Self {
        Self::new()
    }
}

/// SHA-NI backed compression for x86-64, selected at runtime.
#[cfg(target_arch = "x86_64")]
pub(crate) mod shani {
    use super::K;
    use core::arch::x86_64::*;

    cpufeatures::new!(cpuid_shani, "sha", "sse2", "ssse3", "sse4.1");

    #[inline]
    pub(crate) fn available() -> bool {
        cpuid_shani::init().get()
    }

    /// Packs eight state words into the (ABEF, CDGH) lane order the SHA
    /// instructions operate on.
    #[inline]
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn load_state(state: &[u32; 8]) -> (__m128i, __m128i) {
        let lo = unsafe { _mm_loadu_si128(state.as_ptr().cast()) };
        let hi = unsafe { _mm_loadu_si128(state.as_ptr().add(4).cast()) };
        pack_state(lo, hi)
    }

    /// Packs (a b c d, e f g h) word vectors into (ABEF, CDGH).
    #[inline]
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn pack_state(abcd: __m128i, efgh: __m128i) -> (__m128i, __m128i) {
        let t = _mm_shuffle_epi32(abcd, 0xB1);
        let efgh = _mm_shuffle_epi32(efgh, 0x1B);
        let abef = _mm_alignr_epi8(t, efgh, 8);
        let cdgh = _mm_blend_epi16(efgh, t, 0xF0);
        (abef, cdgh)
    }

    /// Inverse of `pack_state`.
    #[inline]
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn unpack_state(abef: __m128i, cdgh: __m128i) -> (__m128i, __m128i) {
        let t = _mm_shuffle_epi32(abef, 0x1B);
        let cdgh = _mm_shuffle_epi32(cdgh, 0xB1);
        let abcd = _mm_blend_epi16(t, cdgh, 0xF0);
        let efgh = _mm_alignr_epi8(cdgh, t, 8);
        (abcd, efgh)
    }

    /// Four rounds: SHA256RNDS2 consumes two W+K sums per issue.
    #[inline]
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn rounds4(abef: &mut __m128i, cdgh: &mut __m128i, wk: __m128i) {
        *cdgh = _mm_sha256rnds2_epu32(*cdgh, *abef, wk);
        let wk_hi = _mm_shuffle_epi32(wk, 0x0E);
        *abef = _mm_sha256rnds2_epu32(*abef, *cdgh, wk_hi);
    }

    /// Produces schedule words W[t..t+4] from the previous four quads.
    #[inline]
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn schedule(w0: __m128i, w1: __m128i, w2: __m128i, w3: __m128i) -> __m128i {
        let t1 = _mm_sha256msg1_epu32(w0, w1);
        let t2 = _mm_alignr_epi8(w3, w2, 4);
        let t3 = _mm_add_epi32(t1, t2);
        _mm_sha256msg2_epu32(t3, w3)
    }

    #[inline]
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn k_quad(q: usize) -> __m128i {
        unsafe { _mm_loadu_si128(K.as_ptr().add(4 * q).cast()) }
    }

    /// Compression from a precomputed schedule: sixteen quads of W+K
    /// feeding the round instruction, no message expansion.
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn compress_w(state: &mut [u32; 8], w: &[u32; 64]) {
        let (mut abef, mut cdgh) = load_state(state);
        let (save_abef, save_cdgh) = (abef, cdgh);
        for q in 0..16 {
            let wv = unsafe { _mm_loadu_si128(w.as_ptr().add(4 * q).cast()) };
            rounds4(&mut abef, &mut cdgh, _mm_add_epi32(wv, k_quad(q)));
        }
        abef = _mm_add_epi32(abef, save_abef);
        cdgh = _mm_add_epi32(cdgh, save_cdgh);
        let (abcd, efgh) = unpack_state(abef, cdgh);
        unsafe {
            _mm_storeu_si128(state.as_mut_ptr().cast(), abcd);
            _mm_storeu_si128(state.as_mut_ptr().add(4).cast(), efgh);
        }
    }

    /// Fused schedule-and-compress over whole 64-byte blocks.
    #[target_feature(enable = "sha,sse2,ssse3,sse4.1")]
    pub(crate) fn compress_blocks(state: &mut [u32; 8], blocks: &[u8]) {
        let swap = _mm_set_epi64x(0x0c0d0e0f_08090a0bu64 as i64, 0x04050607_00010203u64 as i64);
        let (mut abef, mut cdgh) = load_state(state);
        for block in blocks.chunks_exact(64) {
            let (save_abef, save_cdgh) = (abef, cdgh);
            let mut w = [_mm_setzero_si128(); 4];
            for (q, quad) in w.iter_mut().enumerate() {
                let raw = unsafe { _mm_loadu_si128(block.as_ptr().add(16 * q).cast()) };
                *quad = _mm_shuffle_epi8(raw, swap);
                rounds4(&mut abef, &mut cdgh, _mm_add_epi32(*quad, k_quad(q)));
            }
            for q in 4..16 {
                let next = schedule(w[0], w[1], w[2], w[3]);
                rounds4(&mut abef, &mut cdgh, _mm_add_epi32(next, k_quad(q)));
                w = [w[1], w[2], w[3], next];
            }
            abef = _mm_add_epi32(abef, save_abef);
            cdgh = _mm_add_epi32(cdgh, save_cdgh);
        }
        let (abcd, efgh) = unpack_state(abef, cdgh);
        unsafe {
            _mm_storeu_si128(state.as_mut_ptr().cast(), abcd);
            _mm_storeu_si128(state.as_mut_ptr().add(4).cast(), efgh);
        }
    }
}
