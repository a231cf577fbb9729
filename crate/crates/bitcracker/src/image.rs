//! Streaming FVE metadata discovery for volume images on disk.
//!
//! Disk images can be hundreds of gigabytes, so the scanner never maps
//! the whole file. It walks 512-byte sector boundaries through a fixed
//! window, probes each position for an FVE block header, and then reads
//! back only the declared extent of each discovered block.

use std::fmt;
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::Path;

use bitcracker_core::bde::{self, BdeError, FveBlock, VmkExtraction};

/// Sector granularity of the header scan.
const SECTOR: u64 = 512;
/// Bytes scanned per read. Each window overlaps the next by one header
/// length so a header straddling the boundary is still seen.
const WINDOW: usize = 1 << 20;

#[derive(Debug)]
pub enum ScanError {
    Io(io::Error),
    Bde(BdeError),
}

impl fmt::Display for ScanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanError::Io(e) => write!(f, "image read failed: {e}"),
            ScanError::Bde(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ScanError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ScanError::Io(e) => Some(e),
            ScanError::Bde(e) => Some(e),
        }
    }
}

impl From<io::Error> for ScanError {
    fn from(e: io::Error) -> Self {
        ScanError::Io(e)
    }
}

/// One successfully parsed FVE metadata block.
#[derive(Debug)]
pub struct ScannedBlock {
    pub offset: u64,
    pub block: FveBlock,
    pub extraction: VmkExtraction,
    pub description: Option<String>,
}

/// Everything the scanner learned about one image file.
#[derive(Debug)]
pub struct VolumeScan {
    pub file_len: u64,
    pub blocks: Vec<ScannedBlock>,
    /// Offsets that looked like block headers but failed to parse,
    /// with the parse error. A volume with damaged copies still yields
    /// protectors from the surviving ones.
    pub failures: Vec<(u64, BdeError)>,
}

impl VolumeScan {
    /// Hash lines for the protectors of the first block that yielded
    /// any, deduplicated by salt so redundant copies are not repeated.
    pub fn hash_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = Vec::new();
        for block in &self.blocks {
            if block.extraction.protectors.is_empty() {
                continue;
            }
            for protector in &block.extraction.protectors {
                let line = bde::serialize_hash_line(protector);
                if !lines.contains(&line) {
                    lines.push(line);
                }
            }
            break;
        }
        lines
    }
}

fn read_block(file: &mut File, offset: u64, declared: usize) -> io::Result<Vec<u8>> {
    let mut buf = vec![0u8; declared];
    file.seek(SeekFrom::Start(offset))?;
    file.read_exact(&mut buf)?;
    Ok(buf)
}

/// Shifts parse offsets from block-local to absolute file positions.
fn rebase(block: &mut FveBlock, base: u64) {
    block.offset += base;
    for entry in &mut block.entries {
        entry.offset += base;
    }
}

/// Scans `path` for FVE metadata blocks and parses every one found.
///
/// Returns [`BdeError::NotBitlocker`] (wrapped) when no plausible block
/// header exists anywhere in the file, and [`BdeError::ImageTooSmall`]
/// when the file cannot hold even one.
pub fn scan_volume_file(path: &Path) -> Result<VolumeScan, ScanError> {
    let mut file = File::open(path)?;
    let file_len = file.metadata()?.len();
    if file_len < 1024 {
        return Err(ScanError::Bde(BdeError::ImageTooSmall { len: file_len }));
    }

    let mut candidates: Vec<(u64, usize)> = Vec::new();
    let overlap = bde::BLOCK_HEADER_LEN;
    let mut window = vec![0u8; WINDOW + overlap];
    let mut base = 0u64;
    while base < file_len {
        let want = usize::min(window.len(), (file_len - base) as usize);
        file.seek(SeekFrom::Start(base))?;
        file.read_exact(&mut window[..want])?;
        let mut rel = 0usize;
        while rel < WINDOW && rel < want {
            if let Some(declared) = bde::probe_block_header(&window[rel..want]) {
                let offset = base + rel as u64;
                if declared as u64 <= file_len - offset {
                    candidates.push((offset, declared));
                }
            }
            rel += SECTOR as usize;
        }
        base += WINDOW as u64;
    }

    if candidates.is_empty() {
        return Err(ScanError::Bde(BdeError::NotBitlocker));
    }

    let mut blocks = Vec::new();
    let mut failures = Vec::new();
    for (offset, declared) in candidates {
        let bytes = read_block(&mut file, offset, declared)?;
        match bde::parse_fve_block(&bytes, 0) {
            Ok(mut block) => {
                rebase(&mut block, offset);
                match bde::extract_vmk_protectors(&block) {
                    Ok(extraction) => {
                        let description = bde::drive_description(&block);
                        blocks.push(ScannedBlock {
                            offset,
                            block,
                            extraction,
                            description,
                        });
                    }
                    Err(e) => failures.push((offset, e)),
                }
            }
            Err(e) => failures.push((offset, e)),
        }
    }
    Ok(VolumeScan {
        file_len,
        blocks,
        failures,
    })
}
