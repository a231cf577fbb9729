//! AES-CCM decryption and verification of the volume master key.
//!
//! BitLocker wraps the VMK with AES-256 in CCM mode: a 12-byte nonce,
//! a 16-byte authentication tag, and therefore a 3-byte counter field.
//! Counter block 0 encrypts the MAC, counter blocks 1 and up encrypt the
//! key material, and the MAC itself is a CBC-MAC over a length-prefixed
//! B0 block followed by the zero-padded plaintext.
//!
//! Verification comes in two strengths. [`VerifyMode::Fast`] decrypts the
//! payload and tests twelve header bytes whose values are fixed for every
//! real VMK, which accepts a wrong key with probability around 6 in 2^80.
//! [`VerifyMode::FullMac`] additionally recomputes the CBC-MAC and compares
//! it against the decrypted tag, making it the authoritative check.

use alloc::vec::Vec;
use core::fmt;

use crate::aes::AesKey256;
use crate::bde::VmkProtector;
use crate::kdf::IntermediateKey;

/// Nonce length in bytes; fixes the counter field at 15 - 12 = 3 bytes.
pub const NONCE_LEN: usize = 12;

/// Authentication tag length in bytes.
pub const MAC_LEN: usize = 16;

/// Flags byte of a counter block: counter field width minus one.
const CTR_FLAGS: u8 = 0x02;

/// Flags byte of the B0 block: no associated data, 16-byte tag encoded as
/// (16 - 2) / 2 in bits 3..6, counter field width minus one in bits 0..3.
const B0_FLAGS: u8 = 0x3a;

/// Exclusive upper bound of the 3-byte block counter.
const COUNTER_LIMIT: u32 = 1 << 24;

/// Failures of the CCM operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcmError {
    /// A counter value does not fit the 3-byte counter field.
    CounterOverflow { counter: u32 },
    /// A payload long enough to exhaust the counter space.
    PayloadTooLong { len: usize },
    /// Fixture plaintext whose first 12 bytes are not a valid VMK header.
    InvalidVmkHeader,
}

impl fmt::Display for CcmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CcmError::CounterOverflow { counter } => {
                write!(f, "counter {counter} exceeds the 3-byte counter field")
            }
            CcmError::PayloadTooLong { len } => {
                write!(f, "payload of {len} bytes exhausts the 3-byte counter space")
            }
            CcmError::InvalidVmkHeader => {
                write!(f, "fixture plaintext does not begin with a valid VMK header")
            }
        }
    }
}

impl core::error::Error for CcmError {}

/// Encrypts the counter block for `counter`: flags, nonce, then the
/// counter as a 3-byte big-endian value.
pub fn keystream_block(
    key: &AesKey256,
    nonce: &[u8; NONCE_LEN],
    counter: u32,
) -> Result<[u8; 16], CcmError> {
    if counter >= COUNTER_LIMIT {
        return Err(CcmError::CounterOverflow { counter });
    }
    let mut block = [0u8; 16];
    block[0] = CTR_FLAGS;
    block[1..13].copy_from_slice(nonce);
    block[13..].copy_from_slice(&counter.to_be_bytes()[1..]);
    Ok(key.encrypt_block(&block))
}

/// Decrypts the VMK payload: XOR with keystream blocks starting at
/// counter 1. Counter 0 is reserved for the MAC.
///
/// Encryption is the same XOR, so applying this to plaintext yields the
/// ciphertext and vice versa.
pub fn decrypt_vmk(
    key: &AesKey256,
    nonce: &[u8; NONCE_LEN],
    encrypted_payload: &[u8],
) -> Result<Vec<u8>, CcmError> {
    let blocks = encrypted_payload.len().div_ceil(16);
    if blocks >= COUNTER_LIMIT as usize {
        return Err(CcmError::PayloadTooLong {
            len: encrypted_payload.len(),
        });
    }
    let mut out = Vec::with_capacity(encrypted_payload.len());
    for (i, chunk) in encrypted_payload.chunks(16).enumerate() {
        let stream = keystream_block(key, nonce, i as u32 + 1)?;
        out.extend(chunk.iter().zip(stream).map(|(c, s)| c ^ s));
    }
    Ok(out)
}

/// Decrypts the stored authentication tag: XOR with keystream counter 0.
pub fn decrypt_mac(
    key: &AesKey256,
    nonce: &[u8; NONCE_LEN],
    encrypted_mac: &[u8; MAC_LEN],
) -> [u8; MAC_LEN] {
    let stream = keystream_block(key, nonce, 0).expect("counter 0 is always in range");
    let mut out = [0u8; MAC_LEN];
    for (o, (c, s)) in out.iter_mut().zip(encrypted_mac.iter().zip(stream)) {
        *o = c ^ s;
    }
    out
}

/// Computes the CCM authentication tag over `plaintext`.
///
/// The CBC chain starts from B0 = flags, nonce, payload length as a
/// 3-byte big-endian value; the plaintext follows zero-padded to a block
/// boundary, and the tag is the final CBC state.
pub fn compute_cbc_mac(
    key: &AesKey256,
    nonce: &[u8; NONCE_LEN],
    plaintext: &[u8],
) -> Result<[u8; MAC_LEN], CcmError> {
    if plaintext.len() >= COUNTER_LIMIT as usize {
        return Err(CcmError::PayloadTooLong {
            len: plaintext.len(),
        });
    }
    let mut b0 = [0u8; 16];
    b0[0] = B0_FLAGS;
    b0[1..13].copy_from_slice(nonce);
    b0[13..].copy_from_slice(&(plaintext.len() as u32).to_be_bytes()[1..]);
    let mut state = key.encrypt_block(&b0);
    for chunk in plaintext.chunks(16) {
        for (s, p) in state.iter_mut().zip(chunk) {
            *s ^= *p;
        }
        state = key.encrypt_block(&state);
    }
    Ok(state)
}

/// Range of key-type tags a decrypted VMK datum may carry.
const VMK_KEY_TYPE_RANGE: core::ops::RangeInclusive<u16> = 0x2000..=0x2005;

/// Configuration for the decrypted-header test.
///
/// `strict_key_type` narrows the accepted key-type tag from the full
/// 0x2000..=0x2005 range down to exactly 0x2003. It is off by default:
/// the narrow tag rejects more wrong keys but has not been shown safe
/// against false negatives across volume generations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HeaderCheck {
    pub strict_key_type: bool,
}

impl HeaderCheck {
    /// Tests the first 12 bytes of a decrypted VMK payload: size 44,
    /// version 1, and a key-type tag in range. Shorter input fails.
    pub fn accepts(&self, plaintext: &[u8]) -> bool {
        if plaintext.len() < 12 {
            return false;
        }
        let size = u16::from_le_bytes([plaintext[0], plaintext[1]]);
        let version = u16::from_le_bytes([plaintext[4], plaintext[5]]);
        let key_type = u16::from_le_bytes([plaintext[8], plaintext[9]]);
        size == 44
            && version == 1
            && if self.strict_key_type {
                key_type == 0x2003
            } else {
                VMK_KEY_TYPE_RANGE.contains(&key_type)
            }
    }
}

/// The default header test; see [`HeaderCheck`].
pub fn check_vmk_header(plaintext: &[u8]) -> bool {
    HeaderCheck::default().accepts(plaintext)
}

/// How much of the CCM verification to run per candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyMode {
    /// Decrypt and test the 12 header bytes only.
    Fast,
    /// Header test plus full CBC-MAC comparison.
    FullMac,
}

/// Tests whether `key` decrypts the protector's VMK.
///
/// Fast mode may in principle accept a wrong key; FullMac mode is
/// authoritative. Both agree on well-formed inputs with the correct key.
pub fn verify_candidate(key: &IntermediateKey, p: &VmkProtector, mode: VerifyMode) -> bool {
    let aes = AesKey256::new(key);
    let plaintext = match decrypt_vmk(&aes, &p.nonce, &p.encrypted_vmk) {
        Ok(plaintext) => plaintext,
        Err(_) => return false,
    };
    if !check_vmk_header(&plaintext) {
        return false;
    }
    match mode {
        VerifyMode::Fast => true,
        VerifyMode::FullMac => match compute_cbc_mac(&aes, &p.nonce, &plaintext) {
            Ok(mac) => mac == decrypt_mac(&aes, &p.nonce, &p.mac),
            Err(_) => false,
        },
    }
}

/// Encrypts fixture VMK plaintext, returning the stored (encrypted) tag
/// and the ciphertext. The plaintext must start with a valid VMK header
/// so that fixtures always exercise the same path real volumes do.
pub fn encrypt_vmk_fixture(
    key: &AesKey256,
    nonce: &[u8; NONCE_LEN],
    vmk_plaintext: &[u8],
) -> Result<([u8; MAC_LEN], Vec<u8>), CcmError> {
    if !check_vmk_header(vmk_plaintext) {
        return Err(CcmError::InvalidVmkHeader);
    }
    let tag = compute_cbc_mac(key, nonce, vmk_plaintext)?;
    let stream = keystream_block(key, nonce, 0)?;
    let mut mac = [0u8; MAC_LEN];
    for (m, (t, s)) in mac.iter_mut().zip(tag.iter().zip(stream)) {
        *m = t ^ s;
    }
    let ciphertext = decrypt_vmk(key, nonce, vmk_plaintext)?;
    Ok((mac, ciphertext))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bde::ProtectionMethod;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_key(rng: &mut ChaCha8Rng) -> AesKey256 {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        AesKey256::new(&key)
    }

    fn random_nonce(rng: &mut ChaCha8Rng) -> [u8; NONCE_LEN] {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        nonce
    }

    /// 44 bytes that pass the header check: the documented 12-byte header
    /// followed by 32 random key bytes.
    fn random_vmk(rng: &mut ChaCha8Rng) -> [u8; 44] {
        let mut vmk = [0u8; 44];
        vmk[..12].copy_from_slice(&[
            0x2c, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x03, 0x20, 0x00, 0x00,
        ]);
        rng.fill_bytes(&mut vmk[12..]);
        vmk
    }

    fn protector_for(
        rng: &mut ChaCha8Rng,
        key_bytes: &[u8; 32],
        vmk: &[u8; 44],
    ) -> VmkProtector {
        let nonce = random_nonce(rng);
        let aes = AesKey256::new(key_bytes);
        let (mac, ciphertext) = encrypt_vmk_fixture(&aes, &nonce, vmk).unwrap();
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        VmkProtector {
            method: ProtectionMethod::UserPassword,
            salt,
            nonce,
            mac,
            encrypted_vmk: ciphertext,
            iterations: crate::kdf::DEFAULT_ITERATIONS,
        }
    }

    #[test]
    fn keystream_counter_zero_is_definitional() {
        let key = AesKey256::new(&[0u8; 32]);
        let nonce = [0u8; NONCE_LEN];
        let mut counter_block = [0u8; 16];
        counter_block[0] = 0x02;
        assert_eq!(
            keystream_block(&key, &nonce, 0).unwrap(),
            key.encrypt_block(&counter_block)
        );
    }

    #[test]
    fn keystream_counters_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0301);
        let key = random_key(&mut rng);
        let nonce = random_nonce(&mut rng);
        assert_ne!(
            keystream_block(&key, &nonce, 0).unwrap(),
            keystream_block(&key, &nonce, 1).unwrap()
        );
    }

    #[test]
    fn keystream_counter_overflow_is_an_error() {
        let key = AesKey256::new(&[0u8; 32]);
        let nonce = [0u8; NONCE_LEN];
        assert!(keystream_block(&key, &nonce, COUNTER_LIMIT - 1).is_ok());
        assert_eq!(
            keystream_block(&key, &nonce, COUNTER_LIMIT),
            Err(CcmError::CounterOverflow {
                counter: COUNTER_LIMIT
            })
        );
    }

    #[test]
    fn decrypt_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0302);
        for len in [16usize, 44, 60] {
            let key = random_key(&mut rng);
            let nonce = random_nonce(&mut rng);
            let mut payload = alloc::vec![0u8; len];
            rng.fill_bytes(&mut payload);
            let once = decrypt_vmk(&key, &nonce, &payload).unwrap();
            let twice = decrypt_vmk(&key, &nonce, &once).unwrap();
            assert_eq!(twice, payload);
        }
    }

    #[test]
    fn fixture_round_trips_through_decrypt() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0303);
        for _ in 0..100 {
            let key = random_key(&mut rng);
            let nonce = random_nonce(&mut rng);
            let vmk = random_vmk(&mut rng);
            let (mac, ciphertext) = encrypt_vmk_fixture(&key, &nonce, &vmk).unwrap();
            assert_eq!(decrypt_vmk(&key, &nonce, &ciphertext).unwrap(), vmk);
            assert_eq!(
                decrypt_mac(&key, &nonce, &mac),
                compute_cbc_mac(&key, &nonce, &vmk).unwrap()
            );
        }
    }

    #[test]
    fn fixture_rejects_invalid_header() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0304);
        let key = random_key(&mut rng);
        let nonce = random_nonce(&mut rng);
        let mut vmk = random_vmk(&mut rng);
        vmk[0] = 0x2d;
        assert_eq!(
            encrypt_vmk_fixture(&key, &nonce, &vmk),
            Err(CcmError::InvalidVmkHeader)
        );
    }

    #[test]
    fn decrypt_mac_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0305);
        let key = random_key(&mut rng);
        let nonce = random_nonce(&mut rng);
        let mut mac = [0u8; MAC_LEN];
        rng.fill_bytes(&mut mac);
        let once = decrypt_mac(&key, &nonce, &mac);
        assert_eq!(decrypt_mac(&key, &nonce, &once), mac);
    }

    #[test]
    fn wrong_key_fails_mac_comparison() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0306);
        for _ in 0..1000 {
            let key = random_key(&mut rng);
            let nonce = random_nonce(&mut rng);
            let vmk = random_vmk(&mut rng);
            let (mac, ciphertext) = encrypt_vmk_fixture(&key, &nonce, &vmk).unwrap();
            let wrong = random_key(&mut rng);
            let plaintext = decrypt_vmk(&wrong, &nonce, &ciphertext).unwrap();
            assert_ne!(
                decrypt_mac(&wrong, &nonce, &mac),
                compute_cbc_mac(&wrong, &nonce, &plaintext).unwrap()
            );
        }
    }

    #[test]
    fn empty_plaintext_mac_is_the_b0_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0307);
        let key = random_key(&mut rng);
        let nonce = random_nonce(&mut rng);
        let mut b0 = [0u8; 16];
        b0[0] = B0_FLAGS;
        b0[1..13].copy_from_slice(&nonce);
        assert_eq!(
            compute_cbc_mac(&key, &nonce, &[]).unwrap(),
            key.encrypt_block(&b0)
        );
    }

    #[test]
    fn mac_depends_on_the_last_byte() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0308);
        for _ in 0..200 {
            let key = random_key(&mut rng);
            let nonce = random_nonce(&mut rng);
            let mut payload = [0u8; 44];
            rng.fill_bytes(&mut payload);
            let base = compute_cbc_mac(&key, &nonce, &payload).unwrap();
            payload[43] ^= 1 << rng.gen_range(0..8);
            assert_ne!(compute_cbc_mac(&key, &nonce, &payload).unwrap(), base);
        }
    }

    #[test]
    fn header_accepts_the_documented_example() {
        assert!(check_vmk_header(&[
            0x2c, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x03, 0x20, 0x00, 0x00,
        ]));
    }

    #[test]
    fn header_boundaries_are_enumerated() {
        let mut base = [0u8; 12];
        base.copy_from_slice(&[
            0x2c, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x03, 0x20, 0x00, 0x00,
        ]);
        for tag in 0x2000u16..=0x2005 {
            let mut header = base;
            header[8..10].copy_from_slice(&tag.to_le_bytes());
            assert!(check_vmk_header(&header), "tag {tag:#06x} must pass");
        }
        for tag in [0x1fffu16, 0x2006, 0x0000, 0xffff] {
            let mut header = base;
            header[8..10].copy_from_slice(&tag.to_le_bytes());
            assert!(!check_vmk_header(&header), "tag {tag:#06x} must fail");
        }
        let mut wrong_size = base;
        wrong_size[0] = 0x2d;
        assert!(!check_vmk_header(&wrong_size));
        wrong_size[..2].copy_from_slice(&45u16.to_le_bytes());
        assert!(!check_vmk_header(&wrong_size));
        let mut wrong_version = base;
        wrong_version[4] = 2;
        assert!(!check_vmk_header(&wrong_version));
        wrong_version[4..6].copy_from_slice(&0u16.to_le_bytes());
        assert!(!check_vmk_header(&wrong_version));
        assert!(!check_vmk_header(&base[..11]));
    }

    #[test]
    fn strict_key_type_narrows_acceptance() {
        let strict = HeaderCheck {
            strict_key_type: true,
        };
        let mut header = [0u8; 12];
        header.copy_from_slice(&[
            0x2c, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x03, 0x20, 0x00, 0x00,
        ]);
        assert!(strict.accepts(&header));
        header[8..10].copy_from_slice(&0x2000u16.to_le_bytes());
        assert!(check_vmk_header(&header));
        assert!(!strict.accepts(&header));
    }

    #[test]
    fn random_headers_never_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0309);
        let mut header = [0u8; 12];
        for _ in 0..1_000_000 {
            rng.fill_bytes(&mut header);
            assert!(!check_vmk_header(&header));
        }
    }

    #[test]
    fn verify_accepts_the_right_key_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_030a);
        for _ in 0..100 {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let vmk = random_vmk(&mut rng);
            let p = protector_for(&mut rng, &key, &vmk);
            assert!(verify_candidate(&key, &p, VerifyMode::Fast));
            assert!(verify_candidate(&key, &p, VerifyMode::FullMac));
        }
    }

    #[test]
    fn verify_rejects_wrong_keys_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_030b);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let vmk = random_vmk(&mut rng);
        let p = protector_for(&mut rng, &key, &vmk);
        for _ in 0..10_000 {
            let mut wrong = [0u8; 32];
            rng.fill_bytes(&mut wrong);
            assert!(!verify_candidate(&wrong, &p, VerifyMode::Fast));
            assert!(!verify_candidate(&wrong, &p, VerifyMode::FullMac));
        }
    }

    #[test]
    fn modes_agree_across_fixtures_and_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_030c);
        let mut disagreements = 0u32;
        for trial in 0..100_000u32 {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            let vmk = random_vmk(&mut rng);
            let p = protector_for(&mut rng, &key, &vmk);
            let probe = if trial % 2 == 0 {
                key
            } else {
                let mut wrong = key;
                wrong[(trial % 32) as usize] ^= 1;
                wrong
            };
            let fast = verify_candidate(&probe, &p, VerifyMode::Fast);
            let full = verify_candidate(&probe, &p, VerifyMode::FullMac);
            if fast != full {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn full_mac_rejects_single_bit_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_030d);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let vmk = random_vmk(&mut rng);
        let p = protector_for(&mut rng, &key, &vmk);
        for _ in 0..1500 {
            let mut mutated = p.clone();
            match rng.gen_range(0..3) {
                0 => {
                    let bit = rng.gen_range(0..mutated.encrypted_vmk.len() * 8);
                    mutated.encrypted_vmk[bit / 8] ^= 1 << (bit % 8);
                }
                1 => {
                    let bit = rng.gen_range(0..MAC_LEN * 8);
                    mutated.mac[bit / 8] ^= 1 << (bit % 8);
                }
                _ => {
                    let bit = rng.gen_range(0..NONCE_LEN * 8);
                    mutated.nonce[bit / 8] ^= 1 << (bit % 8);
                }
            }
            assert!(!verify_candidate(&key, &mutated, VerifyMode::FullMac));
        }
    }
}
