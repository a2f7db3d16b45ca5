//! Forward error correction and bit mapping.

pub mod ldpc;
pub mod qam;

pub use ldpc::{DecodeOutcome, LdpcCode, DEFAULT_MAX_ITER};
pub use qam::{hard_demap, qam_llr, qam_map, LlrBlock, Modulation, QamConstellation};

/// Encode a message with [`LdpcCode::encode`].
pub fn ldpc_encode(code: &LdpcCode, msg: &[u8]) -> crate::Result<Vec<u8>> {
    code.encode(msg)
}

/// Decode with [`LdpcCode::decode_minsum`].
pub fn ldpc_decode_minsum(code: &LdpcCode, llrs: &[f64], max_iter: usize) -> crate::Result<DecodeOutcome> {
    code.decode_minsum(llrs, max_iter)
}
