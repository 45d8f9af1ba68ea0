use std::fmt;

use crate::crypto::{CryptoSource, KeyId, PublicKey, SignatureKeyPair};
use crate::rng;

/// Ledger address: the key fingerprint of the account's public key.
pub type Address = KeyId;

#[derive(Clone)]
pub struct Account {
    keypair: SignatureKeyPair,
}

impl Account {
    pub fn new(keypair: SignatureKeyPair) -> Self {
        Account { keypair }
    }

    pub fn generate<R: CryptoSource>(rng: &mut R) -> Self {
        Account::new(SignatureKeyPair::generate(rng))
    }

    /// Reproducible account for `label` under a run seed.
    pub fn derive(seed: u64, label: &str) -> Self {
        Account::new(SignatureKeyPair::from_seed(rng::derive_bytes(seed, &format!("account/{label}"))))
    }

    pub fn address(&self) -> Address {
        self.keypair.key_id()
    }

    pub fn public(&self) -> PublicKey {
        self.keypair.public()
    }

    pub fn keypair(&self) -> &SignatureKeyPair {
        &self.keypair
    }
}

impl fmt::Debug for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Account({})", self.address())
    }
}
