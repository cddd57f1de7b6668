//! Symmetric BFV restricted to what the protocol uses: additions, plaintext
//! multiplication, slot rotation and key-switching re-encryption.

mod ciphertext;
mod evaluator;
mod keys;

pub use ciphertext::{Ciphertext, NttCiphertext, Plaintext, PreparedPlaintext};
pub use evaluator::{Bfv, NoiseBudget};
pub use keys::{
    galois_element_for_step, rotation_plan, row_swap_element, EvaluationKey, GaloisKeys, KeyMode, KeyOwner,
    KeySwitchKey, ReEncryptionKey, SecretKey,
};

/// One-byte type tags that prefix serialized objects.
pub(crate) mod tags {
    use crate::codec::Reader;
    use crate::error::{Error, Result};

    pub const CIPHERTEXT: u8 = 0x01;
    pub const CIPHERTEXT_SEEDED: u8 = 0x02;
    pub const GALOIS_KEY: u8 = 0x03;
    pub const REENC_KEY: u8 = 0x04;
    pub const SECRET_KEY: u8 = 0x05;
    pub const GALOIS_KEY_SET: u8 = 0x06;

    pub fn expect(r: &mut Reader<'_>, tag: u8) -> Result<()> {
        let found = r.u8()?;
        if found != tag {
            return Err(Error::Decode(format!("expected tag {tag:#04x}, found {found:#04x}")));
        }
        Ok(())
    }
}
