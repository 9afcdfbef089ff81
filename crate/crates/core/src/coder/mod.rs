//! rANS entropy coding and the bitstream container.

mod bitstream;
mod rans;

pub use bitstream::{read_bitstream, read_bitstream_prefix, write_bitstream, Header, FORMAT_VERSION, MAGIC};
pub use rans::{rans_decode, rans_encode, TablePool, RANS_L};
