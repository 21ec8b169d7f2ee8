//! A minimal IDX reader on top of `std::io::Read`.

use std::io::Read;
use std::path::Path;

/// Returns `(dims, payload)` for an unsigned-byte IDX file. Panics on
/// anything unexpected.
pub fn read(path: &Path) -> (Vec<u32>, Vec<u8>) {
    let mut f = std::fs::File::open(path).unwrap();
    let mut head = [0u8; 4];
    f.read_exact(&mut head).unwrap();
    assert_eq!(&head[..2], &[0, 0]);
    assert_eq!(head[2], 0x08, "unsigned byte payload");
    let ndims = head[3] as usize;
    let mut dims = Vec::new();
    for _ in 0..ndims {
        f.read_exact(&mut head).unwrap();
        dims.push(u32::from_be_bytes(head));
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload).unwrap();
    (dims, payload)
}
