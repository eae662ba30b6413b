//! Run-length encoding for binary masks: row-major, alternating run
//! lengths starting with a (possibly empty) run of zeros.

use crate::error::{Error, Result};
use crate::maskval::BinaryMask;

pub fn encode(mask: &BinaryMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &px in mask.data() {
        if px == current {
            len += 1;
        } else {
            runs.push(len);
            current = px;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode(runs: &[u32], width: usize, height: usize) -> Result<BinaryMask> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != (width * height) as u64 {
        return Err(Error::InvalidMask(format!(
            "run lengths sum to {total}, expected {width}x{height} = {}",
            width * height
        )));
    }
    let mut data = Vec::with_capacity(width * height);
    for (i, &r) in runs.iter().enumerate() {
        data.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    BinaryMask::new(width, height, data)
}
