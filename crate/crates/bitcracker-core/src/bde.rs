//! BitLocker Drive Encryption metadata: locating and parsing FVE blocks,
//! pulling out VMK protectors, the hash-line interchange format, and a
//! fixture writer that produces parseable volume images.
//!
//! A BDE volume stores three redundant FVE metadata blocks, each headed
//! by the signature `-FVE-FS-` and composed of a 64-byte block header, a
//! 48-byte metadata header, and a run of variable-size entries. All
//! integer fields are little-endian. The entries of interest wrap the
//! volume master key once per protector; the attackable ones are the
//! user-password and recovery-password protectors, which carry a salt in
//! a stretch-key datum and nonce, MAC, and ciphertext in an AES-CCM
//! datum. The parser never trusts a declared size: every entry must nest
//! inside its block, and malformed input yields an error, never a panic
//! or an unbounded loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::ccm;
use crate::kdf;

/// Signature heading every FVE metadata block.
pub const FVE_SIGNATURE: [u8; 8] = *b"-FVE-FS-";

/// Entry type of nested property datums.
pub const ENTRY_TYPE_PROPERTY: u16 = 0x0000;
/// Entry type of a volume master key protector.
pub const ENTRY_TYPE_VMK: u16 = 0x0002;
/// Entry type of the encrypted full volume encryption key.
pub const ENTRY_TYPE_FVEK: u16 = 0x0003;
/// Entry type of the volume description string.
pub const ENTRY_TYPE_DESCRIPTION: u16 = 0x0007;

/// Value type of a raw key datum.
pub const VALUE_TYPE_KEY: u16 = 0x0001;
/// Value type of a UTF-16LE string datum.
pub const VALUE_TYPE_UNICODE: u16 = 0x0002;
/// Value type of a stretch-key datum: hash method, salt, properties.
pub const VALUE_TYPE_STRETCH_KEY: u16 = 0x0003;
/// Value type of a use-key indirection datum.
pub const VALUE_TYPE_USE_KEY: u16 = 0x0004;
/// Value type of an AES-CCM encrypted key datum.
pub const VALUE_TYPE_AES_CCM: u16 = 0x0005;
/// Value type of a TPM-sealed key datum.
pub const VALUE_TYPE_TPM_ENCODED: u16 = 0x0006;
/// Value type of a composite VMK datum.
pub const VALUE_TYPE_VMK: u16 = 0x0008;

/// Protection-type tag of a clear-key (unprotected) VMK.
pub const PROTECTOR_CLEAR_KEY: u16 = 0x0000;
/// Protection-type tag of a TPM-sealed VMK.
pub const PROTECTOR_TPM: u16 = 0x0100;
/// Protection-type tag of an external startup-key VMK.
pub const PROTECTOR_STARTUP_KEY: u16 = 0x0200;
/// Protection-type tag of a TPM-and-PIN VMK.
pub const PROTECTOR_TPM_PIN: u16 = 0x0500;
/// Protection-type tag of a recovery-password VMK.
pub const PROTECTOR_RECOVERY_PASSWORD: u16 = 0x0800;
/// Protection-type tag of a user-password VMK.
pub const PROTECTOR_USER_PASSWORD: u16 = 0x2000;

/// Human-readable name of a VMK protection-type tag.
pub fn protector_type_name(tag: u16) -> &'static str {
    match tag {
        PROTECTOR_CLEAR_KEY => "clear key",
        PROTECTOR_TPM => "TPM",
        PROTECTOR_STARTUP_KEY => "startup key",
        PROTECTOR_TPM_PIN => "TPM and PIN",
        PROTECTOR_RECOVERY_PASSWORD => "recovery password",
        PROTECTOR_USER_PASSWORD => "user password",
        _ => "unknown",
    }
}

/// Fixed FVE block header length; [`probe_block_header`] needs at
/// least this many bytes.
pub const BLOCK_HEADER_LEN: usize = 64;
const METADATA_HEADER_LEN: usize = 48;
const ENTRY_HEADER_LEN: usize = 8;
const MIN_BLOCK_LEN: usize = BLOCK_HEADER_LEN + METADATA_HEADER_LEN;

/// Byte offsets within a VMK entry body.
const VMK_PROTECTOR_TYPE_OFFSET: usize = 26;
const VMK_PROPERTIES_OFFSET: usize = 28;
/// Byte offsets within a stretch-key datum body.
const STRETCH_SALT_OFFSET: usize = 4;
const STRETCH_PROPERTIES_OFFSET: usize = 20;
/// Byte offsets within an AES-CCM datum body.
const CCM_MAC_OFFSET: usize = ccm::NONCE_LEN;
const CCM_PAYLOAD_OFFSET: usize = ccm::NONCE_LEN + ccm::MAC_LEN;

/// Smallest VMK ciphertext: the 44-byte decrypted key datum.
pub const MIN_ENCRYPTED_VMK_LEN: usize = 44;

/// How a VMK protector stretches its secret.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtectionMethod {
    UserPassword,
    RecoveryPassword,
}

impl ProtectionMethod {
    /// The on-disk protection-type tag.
    pub fn tag(self) -> u16 {
        match self {
            ProtectionMethod::UserPassword => PROTECTOR_USER_PASSWORD,
            ProtectionMethod::RecoveryPassword => PROTECTOR_RECOVERY_PASSWORD,
        }
    }
}

impl fmt::Display for ProtectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtectionMethod::UserPassword => "user password",
            ProtectionMethod::RecoveryPassword => "recovery password",
        })
    }
}

/// One parsed FVE metadata block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FveBlock {
    /// Byte position of the block in the image.
    pub offset: u64,
    /// Block format version; only version 2 is supported.
    pub version: u16,
    /// Top-level metadata entries in on-disk order.
    pub entries: Vec<MetadataEntry>,
}

/// One metadata entry, top-level or nested.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetadataEntry {
    /// Byte position of the entry header in the image.
    pub offset: u64,
    pub entry_type: u16,
    pub value_type: u16,
    pub version: u16,
    /// Entry bytes past the 8-byte header.
    pub body: Vec<u8>,
}

impl MetadataEntry {
    /// Declared entry size: header plus body.
    pub fn size(&self) -> usize {
        ENTRY_HEADER_LEN + self.body.len()
    }
}

/// Everything needed to attack one VMK protector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VmkProtector {
    pub method: ProtectionMethod,
    pub salt: [u8; 16],
    pub nonce: [u8; ccm::NONCE_LEN],
    pub mac: [u8; ccm::MAC_LEN],
    /// AES-CCM ciphertext of the VMK datum, at least 44 bytes.
    pub encrypted_vmk: Vec<u8>,
    /// Key-derivation iteration count; volumes do not store it, so
    /// extraction always fills in the standard 0x100000.
    pub iterations: u32,
}

/// The piece a structurally incomplete protector is missing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtectorPart {
    Salt,
    Nonce,
    Mac,
    EncryptedVmk,
}

impl fmt::Display for ProtectorPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtectorPart::Salt => "salt (stretch-key datum)",
            ProtectorPart::Nonce => "nonce (AES-CCM datum)",
            ProtectorPart::Mac => "MAC (AES-CCM datum)",
            ProtectorPart::EncryptedVmk => "encrypted VMK payload",
        })
    }
}

/// Failures of image scanning, block parsing, and protector extraction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BdeError {
    /// The image is smaller than the 1024-byte parse minimum.
    ImageTooSmall { len: u64 },
    /// No FVE block signature anywhere in the image.
    NotBitlocker,
    /// The block header does not fit inside the image.
    TruncatedBlockHeader { offset: u64 },
    /// The bytes at the offset do not start with the FVE signature.
    BadSignature { offset: u64 },
    /// Block format version other than 2.
    UnsupportedBlockVersion { offset: u64, version: u16 },
    /// Declared block size too small to hold the fixed headers.
    BlockTooSmall { offset: u64, declared: usize },
    /// Declared block size runs past the end of the image.
    TruncatedBlock {
        offset: u64,
        declared: usize,
        available: usize,
    },
    /// Metadata size field inconsistent with the block size.
    BadMetadataSize { offset: u64, size: u32 },
    /// Metadata version other than 1.
    BadMetadataVersion { offset: u64, version: u32 },
    /// Metadata header size field other than 48.
    BadMetadataHeaderSize { offset: u64, header_size: u32 },
    /// An entry declaring size zero, which could never terminate.
    ZeroSizeEntry { offset: u64 },
    /// An entry declaring a size smaller than its own header.
    EntryTooSmall { offset: u64, size: u16 },
    /// An entry declaring a size past the end of its container.
    EntryOverrun {
        offset: u64,
        size: u16,
        remaining: usize,
    },
    /// A VMK entry too short to hold its fixed fields.
    VmkEntryTooShort { offset: u64, len: usize },
    /// A supported protector missing one of its required pieces.
    IncompleteProtector {
        method: ProtectionMethod,
        missing: ProtectorPart,
    },
}

impl fmt::Display for BdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BdeError::ImageTooSmall { len } => {
                write!(f, "image of {len} bytes is below the 1024-byte minimum")
            }
            BdeError::NotBitlocker => {
                write!(f, "no FVE block signature found; not a BitLocker volume")
            }
            BdeError::TruncatedBlockHeader { offset } => {
                write!(f, "block header at {offset:#x} runs past the image end")
            }
            BdeError::BadSignature { offset } => {
                write!(f, "missing FVE signature at {offset:#x}")
            }
            BdeError::UnsupportedBlockVersion { offset, version } => {
                write!(f, "block at {offset:#x} has unsupported version {version}")
            }
            BdeError::BlockTooSmall { offset, declared } => {
                write!(
                    f,
                    "block at {offset:#x} declares {declared} bytes, below the {MIN_BLOCK_LEN}-byte minimum"
                )
            }
            BdeError::TruncatedBlock {
                offset,
                declared,
                available,
            } => {
                write!(
                    f,
                    "block at {offset:#x} declares {declared} bytes but only {available} remain"
                )
            }
            BdeError::BadMetadataSize { offset, size } => {
                write!(f, "block at {offset:#x} has inconsistent metadata size {size}")
            }
            BdeError::BadMetadataVersion { offset, version } => {
                write!(f, "block at {offset:#x} has metadata version {version}, expected 1")
            }
            BdeError::BadMetadataHeaderSize {
                offset,
                header_size,
            } => {
                write!(
                    f,
                    "block at {offset:#x} has metadata header size {header_size}, expected {METADATA_HEADER_LEN}"
                )
            }
            BdeError::ZeroSizeEntry { offset } => {
                write!(f, "entry at {offset:#x} declares size zero")
            }
            BdeError::EntryTooSmall { offset, size } => {
                write!(
                    f,
                    "entry at {offset:#x} declares {size} bytes, below the {ENTRY_HEADER_LEN}-byte header"
                )
            }
            BdeError::EntryOverrun {
                offset,
                size,
                remaining,
            } => {
                write!(
                    f,
                    "entry at {offset:#x} declares {size} bytes but only {remaining} remain in its container"
                )
            }
            BdeError::VmkEntryTooShort { offset, len } => {
                write!(
                    f,
                    "VMK entry at {offset:#x} has a {len}-byte body, too short for its fixed fields"
                )
            }
            BdeError::IncompleteProtector { method, missing } => {
                write!(f, "{method} protector is missing its {missing}")
            }
        }
    }
}

impl core::error::Error for BdeError {}

fn le_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Checks whether `window` begins with a plausible FVE block header and
/// returns the declared block length. The caller still has to confirm
/// that length fits whatever storage the window came from.
pub fn probe_block_header(window: &[u8]) -> Option<usize> {
    if window.len() < BLOCK_HEADER_LEN || window[..8] != FVE_SIGNATURE {
        return None;
    }
    let declared = (le_u16(window, 8) as usize) << 4;
    (le_u16(window, 10) == 2 && declared >= MIN_BLOCK_LEN).then_some(declared)
}

/// Scans the image for FVE metadata blocks at 512-byte sector boundaries
/// and returns the offset of every signature that heads a well-formed
/// block header, in ascending order.
pub fn locate_fve_blocks(image: &[u8]) -> Result<Vec<u64>, BdeError> {
    if image.len() < 1024 {
        return Err(BdeError::ImageTooSmall {
            len: image.len() as u64,
        });
    }
    let mut offsets = Vec::new();
    for start in (0..image.len()).step_by(512) {
        if let Some(declared) = probe_block_header(&image[start..]) {
            if declared <= image.len() - start {
                offsets.push(start as u64);
            }
        }
    }
    if offsets.is_empty() {
        return Err(BdeError::NotBitlocker);
    }
    Ok(offsets)
}

/// Walks a run of metadata entries, checking that every declared size
/// nests inside `bytes`. `base` is the image offset of `bytes[0]`, used
/// for error reporting only.
fn walk_entries(base: u64, bytes: &[u8]) -> Result<Vec<MetadataEntry>, BdeError> {
    let mut entries = Vec::new();
    let mut pos = 0usize;
    while bytes.len() - pos >= ENTRY_HEADER_LEN {
        let offset = base + pos as u64;
        let size = le_u16(bytes, pos) as usize;
        if size == 0 {
            return Err(BdeError::ZeroSizeEntry { offset });
        }
        if size < ENTRY_HEADER_LEN {
            return Err(BdeError::EntryTooSmall {
                offset,
                size: size as u16,
            });
        }
        if size > bytes.len() - pos {
            return Err(BdeError::EntryOverrun {
                offset,
                size: size as u16,
                remaining: bytes.len() - pos,
            });
        }
        entries.push(MetadataEntry {
            offset,
            entry_type: le_u16(bytes, pos + 2),
            value_type: le_u16(bytes, pos + 4),
            version: le_u16(bytes, pos + 6),
            body: bytes[pos + ENTRY_HEADER_LEN..pos + size].to_vec(),
        });
        pos += size;
    }
    Ok(entries)
}

/// Parses the FVE block at `offset`, validating every size field against
/// the image bounds before use.
pub fn parse_fve_block(image: &[u8], offset: u64) -> Result<FveBlock, BdeError> {
    let start = usize::try_from(offset)
        .ok()
        .filter(|start| image.len().saturating_sub(*start) >= BLOCK_HEADER_LEN)
        .ok_or(BdeError::TruncatedBlockHeader { offset })?;
    let header = &image[start..start + BLOCK_HEADER_LEN];
    if header[..8] != FVE_SIGNATURE {
        return Err(BdeError::BadSignature { offset });
    }
    let version = le_u16(header, 10);
    if version != 2 {
        return Err(BdeError::UnsupportedBlockVersion { offset, version });
    }
    let declared = (le_u16(header, 8) as usize) << 4;
    if declared < MIN_BLOCK_LEN {
        return Err(BdeError::BlockTooSmall { offset, declared });
    }
    let available = image.len() - start;
    if declared > available {
        return Err(BdeError::TruncatedBlock {
            offset,
            declared,
            available,
        });
    }
    let block = &image[start..start + declared];

    let metadata = &block[BLOCK_HEADER_LEN..];
    let meta_size = le_u32(metadata, 0);
    if (meta_size as usize) < METADATA_HEADER_LEN
        || meta_size as usize > declared - BLOCK_HEADER_LEN
    {
        return Err(BdeError::BadMetadataSize {
            offset,
            size: meta_size,
        });
    }
    let meta_version = le_u32(metadata, 4);
    if meta_version != 1 {
        return Err(BdeError::BadMetadataVersion {
            offset,
            version: meta_version,
        });
    }
    let header_size = le_u32(metadata, 8);
    if header_size as usize != METADATA_HEADER_LEN {
        return Err(BdeError::BadMetadataHeaderSize {
            offset,
            header_size,
        });
    }

    let entries_base = offset + (BLOCK_HEADER_LEN + METADATA_HEADER_LEN) as u64;
    let entries = walk_entries(
        entries_base,
        &metadata[METADATA_HEADER_LEN..meta_size as usize],
    )?;
    Ok(FveBlock {
        offset,
        version,
        entries,
    })
}

/// A VMK entry passed over because its protection type cannot be
/// attacked from a password or recovery password.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkippedVmk {
    pub offset: u64,
    pub protector_type: u16,
}

impl SkippedVmk {
    pub fn name(&self) -> &'static str {
        protector_type_name(self.protector_type)
    }
}

/// Result of scanning a block for attackable protectors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VmkExtraction {
    pub protectors: Vec<VmkProtector>,
    pub skipped: Vec<SkippedVmk>,
}

fn incomplete(method: ProtectionMethod, missing: ProtectorPart) -> BdeError {
    BdeError::IncompleteProtector { method, missing }
}

/// Pulls every attackable VMK protector out of a parsed block.
///
/// User-password and recovery-password entries yield a [`VmkProtector`];
/// entries under any other protection type are recorded in `skipped`.
/// The AES-CCM datum is accepted either as a sibling of the stretch-key
/// datum or nested inside it, since both layouts occur on disk.
pub fn extract_vmk_protectors(block: &FveBlock) -> Result<VmkExtraction, BdeError> {
    let mut out = VmkExtraction::default();
    for entry in &block.entries {
        if entry.entry_type != ENTRY_TYPE_VMK || entry.value_type != VALUE_TYPE_VMK {
            continue;
        }
        if entry.body.len() < VMK_PROPERTIES_OFFSET {
            return Err(BdeError::VmkEntryTooShort {
                offset: entry.offset,
                len: entry.body.len(),
            });
        }
        let tag = le_u16(&entry.body, VMK_PROTECTOR_TYPE_OFFSET);
        let method = match tag {
            PROTECTOR_USER_PASSWORD => ProtectionMethod::UserPassword,
            PROTECTOR_RECOVERY_PASSWORD => ProtectionMethod::RecoveryPassword,
            _ => {
                out.skipped.push(SkippedVmk {
                    offset: entry.offset,
                    protector_type: tag,
                });
                continue;
            }
        };
        let properties = walk_entries(
            entry.offset + (ENTRY_HEADER_LEN + VMK_PROPERTIES_OFFSET) as u64,
            &entry.body[VMK_PROPERTIES_OFFSET..],
        )?;

        let stretch = properties
            .iter()
            .find(|p| p.value_type == VALUE_TYPE_STRETCH_KEY)
            .ok_or_else(|| incomplete(method, ProtectorPart::Salt))?;
        if stretch.body.len() < STRETCH_PROPERTIES_OFFSET {
            return Err(incomplete(method, ProtectorPart::Salt));
        }
        let mut salt = [0u8; 16];
        salt.copy_from_slice(&stretch.body[STRETCH_SALT_OFFSET..STRETCH_PROPERTIES_OFFSET]);

        let mut ccm_datum = properties
            .iter()
            .find(|p| p.value_type == VALUE_TYPE_AES_CCM)
            .cloned();
        if ccm_datum.is_none() {
            let nested = walk_entries(
                stretch.offset + (ENTRY_HEADER_LEN + STRETCH_PROPERTIES_OFFSET) as u64,
                &stretch.body[STRETCH_PROPERTIES_OFFSET..],
            )?;
            ccm_datum = nested
                .into_iter()
                .find(|p| p.value_type == VALUE_TYPE_AES_CCM);
        }
        let ccm_datum = ccm_datum.ok_or_else(|| incomplete(method, ProtectorPart::Nonce))?;
        let body = &ccm_datum.body;
        if body.len() < CCM_MAC_OFFSET {
            return Err(incomplete(method, ProtectorPart::Nonce));
        }
        if body.len() < CCM_PAYLOAD_OFFSET {
            return Err(incomplete(method, ProtectorPart::Mac));
        }
        if body.len() < CCM_PAYLOAD_OFFSET + MIN_ENCRYPTED_VMK_LEN {
            return Err(incomplete(method, ProtectorPart::EncryptedVmk));
        }
        let mut nonce = [0u8; ccm::NONCE_LEN];
        nonce.copy_from_slice(&body[..CCM_MAC_OFFSET]);
        let mut mac = [0u8; ccm::MAC_LEN];
        mac.copy_from_slice(&body[CCM_MAC_OFFSET..CCM_PAYLOAD_OFFSET]);
        out.protectors.push(VmkProtector {
            method,
            salt,
            nonce,
            mac,
            encrypted_vmk: body[CCM_PAYLOAD_OFFSET..].to_vec(),
            iterations: kdf::DEFAULT_ITERATIONS,
        });
    }
    Ok(out)
}

/// The volume description string, if the block carries one.
pub fn drive_description(block: &FveBlock) -> Option<String> {
    let entry = block.entries.iter().find(|e| {
        e.entry_type == ENTRY_TYPE_DESCRIPTION && e.value_type == VALUE_TYPE_UNICODE
    })?;
    let words: Vec<u16> = entry
        .body
        .chunks_exact(2)
        .map(|pair| u16::from_le_bytes([pair[0], pair[1]]))
        .take_while(|&w| w != 0)
        .collect();
    Some(
        char::decode_utf16(words)
            .map(|r| r.unwrap_or(char::REPLACEMENT_CHARACTER))
            .collect(),
    )
}

/// Failures of hash-line parsing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HashLineError {
    /// The line does not start with the `$bitcracker$` tag.
    WrongMagic,
    /// Wrong number of `$`-separated fields.
    FieldCount { found: usize },
    /// Protection method field other than `0` or `1`.
    BadMethod,
    /// A numeric field that does not parse.
    BadInteger { field: &'static str },
    /// A hex field with a non-hex or odd-length value.
    BadHex { field: &'static str },
    /// A field whose byte length contradicts its declared length.
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    /// Iteration count outside 1..=0x100000.
    IterationsOutOfRange { iterations: u64 },
    /// Encrypted VMK shorter than the 44-byte minimum.
    PayloadTooShort { len: usize },
}

impl fmt::Display for HashLineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HashLineError::WrongMagic => write!(f, "line does not start with $bitcracker$"),
            HashLineError::FieldCount { found } => {
                write!(f, "expected 11 $-separated fields, found {found}")
            }
            HashLineError::BadMethod => write!(f, "method field must be 0 or 1"),
            HashLineError::BadInteger { field } => write!(f, "{field} field is not a number"),
            HashLineError::BadHex { field } => write!(f, "{field} field is not even-length hex"),
            HashLineError::LengthMismatch {
                field,
                expected,
                found,
            } => write!(f, "{field} field is {found} bytes, expected {expected}"),
            HashLineError::IterationsOutOfRange { iterations } => {
                write!(f, "iteration count {iterations} outside 1..=1048576")
            }
            HashLineError::PayloadTooShort { len } => {
                write!(f, "encrypted VMK of {len} bytes is below the 44-byte minimum")
            }
        }
    }
}

impl core::error::Error for HashLineError {}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for byte in bytes {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn hex_decode(text: &str, field: &'static str) -> Result<Vec<u8>, HashLineError> {
    if !text.len().is_multiple_of(2) {
        return Err(HashLineError::BadHex { field });
    }
    let digit = |c: u8| -> Result<u8, HashLineError> {
        match c {
            b'0'..=b'9' => Ok(c - b'0'),
            b'a'..=b'f' => Ok(c - b'a' + 10),
            b'A'..=b'F' => Ok(c - b'A' + 10),
            _ => Err(HashLineError::BadHex { field }),
        }
    };
    text.as_bytes()
        .chunks_exact(2)
        .map(|pair| Ok(digit(pair[0])? << 4 | digit(pair[1])?))
        .collect()
}

/// Renders a protector as one interchange line:
/// `$bitcracker$<m>$16$<salt>$<iterations>$12$<nonce>$<mac>$<n>$<vmk>`
/// with lowercase hex, `m` 0 for user password and 1 for recovery
/// password, and `n` the encrypted VMK byte length.
pub fn serialize_hash_line(p: &VmkProtector) -> String {
    let m = match p.method {
        ProtectionMethod::UserPassword => 0,
        ProtectionMethod::RecoveryPassword => 1,
    };
    format!(
        "$bitcracker${m}$16${}${}$12${}${}${}${}",
        hex_string(&p.salt),
        p.iterations,
        hex_string(&p.nonce),
        hex_string(&p.mac),
        p.encrypted_vmk.len(),
        hex_string(&p.encrypted_vmk),
    )
}

fn fixed<const N: usize>(
    text: &str,
    field: &'static str,
    declared: Option<usize>,
) -> Result<[u8; N], HashLineError> {
    let bytes = hex_decode(text, field)?;
    let expected = declared.unwrap_or(N);
    if bytes.len() != expected || expected != N {
        return Err(HashLineError::LengthMismatch {
            field,
            expected: N,
            found: bytes.len(),
        });
    }
    let mut out = [0u8; N];
    out.copy_from_slice(&bytes);
    Ok(out)
}

/// Parses one hash line; the exact inverse of [`serialize_hash_line`].
/// A single trailing line ending is tolerated, nothing else.
pub fn parse_hash_line(line: &str) -> Result<VmkProtector, HashLineError> {
    let line = line.trim_end_matches(['\n', '\r']);
    let fields: Vec<&str> = line.split('$').collect();
    if fields.len() < 2 || !fields[0].is_empty() || fields[1] != "bitcracker" {
        return Err(HashLineError::WrongMagic);
    }
    if fields.len() != 11 {
        return Err(HashLineError::FieldCount {
            found: fields.len(),
        });
    }
    let method = match fields[2] {
        "0" => ProtectionMethod::UserPassword,
        "1" => ProtectionMethod::RecoveryPassword,
        _ => return Err(HashLineError::BadMethod),
    };
    let salt_len: usize = fields[3]
        .parse()
        .map_err(|_| HashLineError::BadInteger { field: "salt length" })?;
    let salt = fixed::<16>(fields[4], "salt", Some(salt_len))?;
    let iterations: u64 = fields[5]
        .parse()
        .map_err(|_| HashLineError::BadInteger { field: "iterations" })?;
    if iterations == 0 || iterations > kdf::DEFAULT_ITERATIONS as u64 {
        return Err(HashLineError::IterationsOutOfRange { iterations });
    }
    let nonce_len: usize = fields[6]
        .parse()
        .map_err(|_| HashLineError::BadInteger { field: "nonce length" })?;
    let nonce = fixed::<{ ccm::NONCE_LEN }>(fields[7], "nonce", Some(nonce_len))?;
    let mac = fixed::<{ ccm::MAC_LEN }>(fields[8], "mac", None)?;
    let declared: usize = fields[9]
        .parse()
        .map_err(|_| HashLineError::BadInteger { field: "vmk length" })?;
    let encrypted_vmk = hex_decode(fields[10], "encrypted vmk")?;
    if encrypted_vmk.len() != declared {
        return Err(HashLineError::LengthMismatch {
            field: "encrypted vmk",
            expected: declared,
            found: encrypted_vmk.len(),
        });
    }
    if encrypted_vmk.len() < MIN_ENCRYPTED_VMK_LEN {
        return Err(HashLineError::PayloadTooShort {
            len: encrypted_vmk.len(),
        });
    }
    Ok(VmkProtector {
        method,
        salt,
        nonce,
        mac,
        encrypted_vmk,
        iterations: iterations as u32,
    })
}

/// The secret a fixture protector is derived from.
#[derive(Clone, Copy, Debug)]
pub enum FixtureSecret<'a> {
    Password(&'a str),
    Recovery(&'a str),
}

/// One protector to plant in a fixture image.
#[derive(Clone, Copy, Debug)]
pub struct FixtureProtectorSpec<'a> {
    pub secret: FixtureSecret<'a>,
    pub salt: [u8; 16],
    pub nonce: [u8; ccm::NONCE_LEN],
    pub iterations: u32,
}

impl<'a> FixtureProtectorSpec<'a> {
    /// A protector spec with the standard iteration count.
    pub fn new(secret: FixtureSecret<'a>, salt: [u8; 16], nonce: [u8; ccm::NONCE_LEN]) -> Self {
        FixtureProtectorSpec {
            secret,
            salt,
            nonce,
            iterations: kdf::DEFAULT_ITERATIONS,
        }
    }
}

/// Where the three FVE blocks of a fixture live by default.
pub const DEFAULT_BLOCK_OFFSETS: [u64; 3] = [4096, 20480, 36864];

/// Layout and content of a synthetic volume image.
#[derive(Clone, Debug)]
pub struct FixtureSpec<'a> {
    /// The 44-byte VMK datum every protector wraps; must pass the
    /// decrypted-header check.
    pub vmk_plaintext: [u8; 44],
    pub protectors: Vec<FixtureProtectorSpec<'a>>,
    /// Add a TPM-protected VMK entry that extraction must skip.
    pub tpm_decoy: bool,
    /// Volume description entry, if any.
    pub description: Option<&'a str>,
    /// Image positions of the three redundant blocks; 512-byte aligned,
    /// strictly ascending, the first at or past byte 1024.
    pub block_offsets: [u64; 3],
}

impl<'a> FixtureSpec<'a> {
    pub fn new(vmk_plaintext: [u8; 44], protectors: Vec<FixtureProtectorSpec<'a>>) -> Self {
        FixtureSpec {
            vmk_plaintext,
            protectors,
            tpm_decoy: false,
            description: None,
            block_offsets: DEFAULT_BLOCK_OFFSETS,
        }
    }

    /// A one-protector fixture with the default layout.
    pub fn single(
        vmk_plaintext: [u8; 44],
        secret: FixtureSecret<'a>,
        salt: [u8; 16],
        nonce: [u8; ccm::NONCE_LEN],
    ) -> Self {
        FixtureSpec::new(
            vmk_plaintext,
            alloc::vec![FixtureProtectorSpec::new(secret, salt, nonce)],
        )
    }
}

/// Failures of fixture construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FixtureError {
    /// Plaintext whose first 12 bytes fail the VMK header check.
    InvalidVmkHeader,
    /// A fixture with no protectors would be unattackable.
    NoProtectors,
    /// Block offsets violating alignment, order, or the 1024-byte floor.
    BadBlockLayout { offset: u64 },
    Candidate(kdf::CandidateError),
    Recovery(kdf::RecoveryPasswordError),
    Kdf(kdf::KdfError),
    Ccm(ccm::CcmError),
}

impl fmt::Display for FixtureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixtureError::InvalidVmkHeader => {
                write!(f, "fixture plaintext does not begin with a valid VMK header")
            }
            FixtureError::NoProtectors => write!(f, "fixture needs at least one protector"),
            FixtureError::BadBlockLayout { offset } => {
                write!(
                    f,
                    "block offset {offset:#x} is not 512-byte aligned, ascending, and at or past byte 1024"
                )
            }
            FixtureError::Candidate(e) => write!(f, "{e}"),
            FixtureError::Recovery(e) => write!(f, "{e}"),
            FixtureError::Kdf(e) => write!(f, "{e}"),
            FixtureError::Ccm(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FixtureError {}

/// Hash-method tag written into fixture stretch-key datums. The attack
/// path never reads it; pending validation against a real volume it is
/// fixture filler like the timestamps below.
const STRETCH_METHOD_TAG: u32 = 0x2000;
const FIXTURE_FILETIME: u64 = 0x01d9_2bc0_0000_0000;
const FIXTURE_DATASET_GUID: [u8; 16] = [
    0x9a, 0x1f, 0x33, 0x4c, 0x5d, 0x6e, 0x41, 0x8b, 0xb2, 0x07, 0x18, 0x2f, 0xc5, 0x5a, 0x60, 0x71,
];
/// Volume cipher tag in the metadata header (AES-XTS 128).
const FIXTURE_VOLUME_CIPHER: u16 = 0x8004;
/// Conversion state "encrypted" in the block header.
const FIXTURE_STATE_ENCRYPTED: u16 = 4;

fn push_entry(out: &mut Vec<u8>, entry_type: u16, value_type: u16, body: &[u8]) {
    let size = (ENTRY_HEADER_LEN + body.len()) as u16;
    out.extend_from_slice(&size.to_le_bytes());
    out.extend_from_slice(&entry_type.to_le_bytes());
    out.extend_from_slice(&value_type.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(body);
}

fn ccm_datum(nonce: &[u8; ccm::NONCE_LEN], mac: &[u8; ccm::MAC_LEN], ciphertext: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(CCM_PAYLOAD_OFFSET + ciphertext.len());
    body.extend_from_slice(nonce);
    body.extend_from_slice(mac);
    body.extend_from_slice(ciphertext);
    let mut datum = Vec::new();
    push_entry(&mut datum, ENTRY_TYPE_PROPERTY, VALUE_TYPE_AES_CCM, &body);
    datum
}

fn vmk_entry(out: &mut Vec<u8>, guid: &[u8; 16], protector_type: u16, properties: &[u8]) {
    let mut body = Vec::with_capacity(VMK_PROPERTIES_OFFSET + properties.len());
    body.extend_from_slice(guid);
    body.extend_from_slice(&FIXTURE_FILETIME.to_le_bytes());
    body.extend_from_slice(&0u16.to_le_bytes());
    body.extend_from_slice(&protector_type.to_le_bytes());
    body.extend_from_slice(properties);
    push_entry(out, ENTRY_TYPE_VMK, VALUE_TYPE_VMK, &body);
}

/// Builds a minimal volume image: zero preamble, then three identical
/// FVE blocks whose protectors are produced by the real key-derivation
/// and AES-CCM encryption paths. The result parses back through
/// [`locate_fve_blocks`], [`parse_fve_block`], and
/// [`extract_vmk_protectors`] to exactly the planted protectors.
pub fn build_fixture_image(spec: &FixtureSpec<'_>) -> Result<Vec<u8>, FixtureError> {
    if !ccm::check_vmk_header(&spec.vmk_plaintext) {
        return Err(FixtureError::InvalidVmkHeader);
    }
    if spec.protectors.is_empty() {
        return Err(FixtureError::NoProtectors);
    }
    let mut previous = 512;
    for &offset in &spec.block_offsets {
        if offset % 512 != 0 || offset < 1024 || offset <= previous {
            return Err(FixtureError::BadBlockLayout { offset });
        }
        previous = offset;
    }

    let mut entries = Vec::new();
    if let Some(description) = spec.description {
        let mut body = Vec::with_capacity(description.len() * 2);
        for unit in description.encode_utf16() {
            body.extend_from_slice(&unit.to_le_bytes());
        }
        push_entry(
            &mut entries,
            ENTRY_TYPE_DESCRIPTION,
            VALUE_TYPE_UNICODE,
            &body,
        );
    }
    for protector in &spec.protectors {
        let initial = match protector.secret {
            FixtureSecret::Password(password) => {
                kdf::password_to_initial_hash(password).map_err(FixtureError::Candidate)?
            }
            FixtureSecret::Recovery(text) => {
                let recovery =
                    kdf::validate_recovery_password(text).map_err(FixtureError::Recovery)?;
                kdf::recovery_to_initial_hash(&recovery)
            }
        };
        let key =
            kdf::derive_intermediate_key(&initial, &protector.salt, protector.iterations, None)
                .map_err(FixtureError::Kdf)?;
        let aes = crate::aes::AesKey256::new(&key);
        let (mac, ciphertext) =
            ccm::encrypt_vmk_fixture(&aes, &protector.nonce, &spec.vmk_plaintext)
                .map_err(FixtureError::Ccm)?;

        let mut stretch_body = Vec::new();
        stretch_body.extend_from_slice(&STRETCH_METHOD_TAG.to_le_bytes());
        stretch_body.extend_from_slice(&protector.salt);
        let datum = ccm_datum(&protector.nonce, &mac, &ciphertext);
        let mut properties = Vec::new();
        match protector.secret {
            FixtureSecret::Password(_) => {
                push_entry(
                    &mut properties,
                    ENTRY_TYPE_PROPERTY,
                    VALUE_TYPE_STRETCH_KEY,
                    &stretch_body,
                );
                properties.extend_from_slice(&datum);
                vmk_entry(
                    &mut entries,
                    &protector.salt,
                    PROTECTOR_USER_PASSWORD,
                    &properties,
                );
            }
            FixtureSecret::Recovery(_) => {
                stretch_body.extend_from_slice(&datum);
                push_entry(
                    &mut properties,
                    ENTRY_TYPE_PROPERTY,
                    VALUE_TYPE_STRETCH_KEY,
                    &stretch_body,
                );
                vmk_entry(
                    &mut entries,
                    &protector.salt,
                    PROTECTOR_RECOVERY_PASSWORD,
                    &properties,
                );
            }
        }
    }
    if spec.tpm_decoy {
        let mut sealed = Vec::new();
        push_entry(
            &mut sealed,
            ENTRY_TYPE_PROPERTY,
            VALUE_TYPE_TPM_ENCODED,
            &[0x42; 32],
        );
        vmk_entry(&mut entries, &[0xa5; 16], PROTECTOR_TPM, &sealed);
    }

    let meta_size = (METADATA_HEADER_LEN + entries.len()) as u32;
    let block_len = (BLOCK_HEADER_LEN + meta_size as usize).div_ceil(16) * 16;
    let image_len = (spec.block_offsets[2] as usize + block_len).div_ceil(4096) * 4096;

    let mut block = Vec::with_capacity(block_len);
    block.extend_from_slice(&FVE_SIGNATURE);
    block.extend_from_slice(&((block_len >> 4) as u16).to_le_bytes());
    block.extend_from_slice(&2u16.to_le_bytes());
    block.extend_from_slice(&FIXTURE_STATE_ENCRYPTED.to_le_bytes());
    block.extend_from_slice(&FIXTURE_STATE_ENCRYPTED.to_le_bytes());
    block.extend_from_slice(&(image_len as u64).to_le_bytes());
    block.extend_from_slice(&0u32.to_le_bytes());
    block.extend_from_slice(&0u32.to_le_bytes());
    for &offset in &spec.block_offsets {
        block.extend_from_slice(&offset.to_le_bytes());
    }
    block.extend_from_slice(&0u64.to_le_bytes());

    block.extend_from_slice(&meta_size.to_le_bytes());
    block.extend_from_slice(&1u32.to_le_bytes());
    block.extend_from_slice(&(METADATA_HEADER_LEN as u32).to_le_bytes());
    block.extend_from_slice(&meta_size.to_le_bytes());
    block.extend_from_slice(&FIXTURE_DATASET_GUID);
    block.extend_from_slice(&10u32.to_le_bytes());
    block.extend_from_slice(&FIXTURE_VOLUME_CIPHER.to_le_bytes());
    block.extend_from_slice(&0u16.to_le_bytes());
    block.extend_from_slice(&FIXTURE_FILETIME.to_le_bytes());
    block.extend_from_slice(&entries);
    block.resize(block_len, 0);

    let mut image = alloc::vec![0u8; image_len];
    for &offset in &spec.block_offsets {
        let start = offset as usize;
        image[start..start + block_len].copy_from_slice(&block);
    }
    Ok(image)
}
