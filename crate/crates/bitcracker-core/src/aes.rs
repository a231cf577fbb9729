//! AES-256 block encryption as specified in FIPS 197.
//!
//! Only the forward cipher is implemented: CCM builds both its keystream
//! and its MAC from block encryption alone, so decryption support would
//! be dead weight. Throughput is irrelevant here; a candidate costs two
//! million SHA-256 compressions and fewer than a dozen AES blocks, so
//! this stays a plain byte-oriented implementation with no table beyond
//! the S-box.

/// The substitution box from FIPS 197 §5.1.1.
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// Number of rounds for a 256-bit key.
const ROUNDS: usize = 14;

/// An AES-256 key with its expanded round keys.
///
/// Expansion happens once in [`AesKey256::new`]; every round key is a
/// 16-byte block applied in order by [`AesKey256::encrypt_block`].
#[derive(Clone)]
pub struct AesKey256 {
    round_keys: [[u8; 16]; ROUNDS + 1],
}

impl AesKey256 {
    /// Expands a 32-byte key per the FIPS 197 §5.2 key schedule.
    pub fn new(key: &[u8; 32]) -> Self {
        let mut w = [[0u8; 4]; 4 * (ROUNDS + 1)];
        for (i, word) in w.iter_mut().take(8).enumerate() {
            word.copy_from_slice(&key[4 * i..4 * i + 4]);
        }
        let mut rcon = 0x01u8;
        for i in 8..w.len() {
            let mut temp = w[i - 1];
            if i % 8 == 0 {
                temp = [
                    SBOX[temp[1] as usize] ^ rcon,
                    SBOX[temp[2] as usize],
                    SBOX[temp[3] as usize],
                    SBOX[temp[0] as usize],
                ];
                rcon = xtime(rcon);
            } else if i % 8 == 4 {
                for byte in &mut temp {
                    *byte = SBOX[*byte as usize];
                }
            }
            for k in 0..4 {
                w[i][k] = w[i - 8][k] ^ temp[k];
            }
        }

        let mut round_keys = [[0u8; 16]; ROUNDS + 1];
        for (r, rk) in round_keys.iter_mut().enumerate() {
            for c in 0..4 {
                rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
            }
        }
        AesKey256 { round_keys }
    }

    /// The expanded round keys, first entry equal to the key's first half.
    pub fn round_keys(&self) -> &[[u8; 16]; ROUNDS + 1] {
        &self.round_keys
    }

    /// Encrypts one 16-byte block per FIPS 197 §5.1.
    ///
    /// State bytes are kept in block order, index `4 * column + row`.
    pub fn encrypt_block(&self, block: &[u8; 16]) -> [u8; 16] {
        let mut state = *block;
        add_round_key(&mut state, &self.round_keys[0]);
        for rk in &self.round_keys[1..ROUNDS] {
            sub_bytes(&mut state);
            shift_rows(&mut state);
            mix_columns(&mut state);
            add_round_key(&mut state, rk);
        }
        sub_bytes(&mut state);
        shift_rows(&mut state);
        add_round_key(&mut state, &self.round_keys[ROUNDS]);
        state
    }
}

/// Multiplication by x in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1.
#[inline(always)]
fn xtime(a: u8) -> u8 {
    (a << 1) ^ (((a >> 7) & 1) * 0x1b)
}

fn sub_bytes(state: &mut [u8; 16]) {
    for byte in state {
        *byte = SBOX[*byte as usize];
    }
}

fn shift_rows(state: &mut [u8; 16]) {
    let old = *state;
    for r in 1..4 {
        for c in 0..4 {
            state[4 * c + r] = old[4 * ((c + r) % 4) + r];
        }
    }
}

fn mix_columns(state: &mut [u8; 16]) {
    for col in state.chunks_exact_mut(4) {
        let (a0, a1, a2, a3) = (col[0], col[1], col[2], col[3]);
        let t = a0 ^ a1 ^ a2 ^ a3;
        col[0] = a0 ^ t ^ xtime(a0 ^ a1);
        col[1] = a1 ^ t ^ xtime(a1 ^ a2);
        col[2] = a2 ^ t ^ xtime(a2 ^ a3);
        col[3] = a3 ^ t ^ xtime(a3 ^ a0);
    }
}

fn add_round_key(state: &mut [u8; 16], rk: &[u8; 16]) {
    for (byte, k) in state.iter_mut().zip(rk) {
        *byte ^= *k;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gf_mul(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            a = xtime(a);
            b >>= 1;
        }
        acc
    }

    #[test]
    fn sbox_matches_algebraic_construction() {
        for x in 0u16..256 {
            let x = x as u8;
            let mut inv = 0u8;
            if x != 0 {
                for y in 1u16..256 {
                    if gf_mul(x, y as u8) == 1 {
                        inv = y as u8;
                        break;
                    }
                }
            }
            let affine = inv
                ^ inv.rotate_left(1)
                ^ inv.rotate_left(2)
                ^ inv.rotate_left(3)
                ^ inv.rotate_left(4)
                ^ 0x63;
            assert_eq!(SBOX[x as usize], affine, "S-box mismatch at {x:#04x}");
        }
    }

    #[test]
    fn sbox_is_a_permutation() {
        let mut seen = [false; 256];
        for &value in &SBOX {
            assert!(!seen[value as usize]);
            seen[value as usize] = true;
        }
    }

    #[test]
    fn fips_key_expansion_boundary_words() {
        let mut key = [0u8; 32];
        for (i, byte) in key.iter_mut().enumerate() {
            *byte = i as u8;
        }
        let expanded = AesKey256::new(&key);
        assert_eq!(expanded.round_keys()[0], key[..16]);
        assert_eq!(expanded.round_keys()[1], key[16..]);
    }

    #[test]
    fn fips_known_answer() {
        let mut key = [0u8; 32];
        for (i, byte) in key.iter_mut().enumerate() {
            *byte = i as u8;
        }
        let plaintext: [u8; 16] = [
            0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77,
            0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff,
        ];
        let expected: [u8; 16] = [
            0x8e, 0xa2, 0xb7, 0xca, 0x51, 0x67, 0x45, 0xbf,
            0xea, 0xfc, 0x49, 0x90, 0x4b, 0x49, 0x60, 0x89,
        ];
        let aes = AesKey256::new(&key);
        assert_eq!(aes.encrypt_block(&plaintext), expected);
        assert_eq!(aes.encrypt_block(&plaintext), expected);
    }

    #[test]
    fn key_avalanche() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0201);
        let mut block = [0u8; 16];
        rng.fill_bytes(&mut block);
        for _ in 0..1000 {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let base = AesKey256::new(&key).encrypt_block(&block);
            let bit = rng.gen_range(0..256);
            key[bit / 8] ^= 1 << (bit % 8);
            let flipped = AesKey256::new(&key).encrypt_block(&block);
            assert_ne!(base, flipped);
        }
    }

    #[test]
    fn plaintext_avalanche() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0202);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let aes = AesKey256::new(&key);
        for _ in 0..1000 {
            let mut block = [0u8; 16];
            rng.fill_bytes(&mut block);
            let base = aes.encrypt_block(&block);
            let bit = rng.gen_range(0..128);
            block[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(aes.encrypt_block(&block), base);
        }
    }
}
