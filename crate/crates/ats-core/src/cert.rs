//! Developer certification: a registry of verification keys and the
//! descriptor check gating agent registration.
//!
//! A descriptor is acceptable when its signature over the manifest digest
//! verifies under the registered, non-revoked key of the owner it names.
//! Ed25519 over a SHA-256 manifest digest; keys are registered by the
//! administrator, agents of revoked developers can no longer register.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};

use crate::agent::AgentDescriptor;
use crate::types::DeveloperId;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DeveloperStatus {
    Active,
    Revoked,
}

/// Registry record for one authenticated agent code developer.
#[derive(Clone, Debug)]
pub struct DeveloperRecord {
    pub developer_id: DeveloperId,
    pub key: VerifyingKey,
    pub status: DeveloperStatus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertError {
    DuplicateDeveloper(DeveloperId),
    UnknownDeveloper(DeveloperId),
    SignatureInvalid,
    DeveloperRevoked,
    InvalidKey,
}

impl fmt::Display for CertError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertError::DuplicateDeveloper(d) => write!(f, "developer {d} already registered"),
            CertError::UnknownDeveloper(d) => write!(f, "unknown developer {d}"),
            CertError::SignatureInvalid => f.write_str("descriptor signature invalid"),
            CertError::DeveloperRevoked => f.write_str("developer revoked"),
            CertError::InvalidKey => f.write_str("malformed verification key"),
        }
    }
}

impl core::error::Error for CertError {}

/// Administrator-maintained key store.
#[derive(Default)]
pub struct DeveloperRegistry {
    developers: BTreeMap<DeveloperId, DeveloperRecord>,
}

impl DeveloperRegistry {
    pub fn new() -> Self {
        DeveloperRegistry::default()
    }

    pub fn register(&mut self, id: DeveloperId, key_bytes: &[u8; 32]) -> Result<(), CertError> {
        if self.developers.contains_key(&id) {
            return Err(CertError::DuplicateDeveloper(id));
        }
        let key = VerifyingKey::from_bytes(key_bytes).map_err(|_| CertError::InvalidKey)?;
        self.developers.insert(
            id.clone(),
            DeveloperRecord {
                developer_id: id,
                key,
                status: DeveloperStatus::Active,
            },
        );
        Ok(())
    }

    pub fn revoke(&mut self, id: &DeveloperId) -> Result<(), CertError> {
        let rec = self
            .developers
            .get_mut(id)
            .ok_or_else(|| CertError::UnknownDeveloper(id.clone()))?;
        rec.status = DeveloperStatus::Revoked;
        Ok(())
    }

    pub fn developer(&self, id: &DeveloperId) -> Option<&DeveloperRecord> {
        self.developers.get(id)
    }

    /// Pure function of the registry and the descriptor: does the
    /// signature verify under the active key of the named owner?
    pub fn verify_descriptor(&self, desc: &AgentDescriptor) -> Result<(), CertError> {
        let rec = self
            .developers
            .get(&desc.owner_id)
            .ok_or(CertError::SignatureInvalid)?;
        if rec.status == DeveloperStatus::Revoked {
            return Err(CertError::DeveloperRevoked);
        }
        let sig = Signature::from_slice(&desc.signature).map_err(|_| CertError::SignatureInvalid)?;
        rec.key
            .verify(&desc.manifest_digest, &sig)
            .map_err(|_| CertError::SignatureInvalid)
    }
}

/// SHA-256 digest of a manifest's bytes.
pub fn manifest_digest(manifest: &[u8]) -> [u8; 32] {
    Sha256::digest(manifest).into()
}

/// Deterministic Ed25519 signature over arbitrary bytes from a 32-byte
/// seed. Used by the manifest-signing tool and by session authentication.
pub fn sign_bytes(seed: &[u8; 32], message: &[u8]) -> Vec<u8> {
    SigningKey::from_bytes(seed).sign(message).to_vec()
}

/// Verification key bytes corresponding to a signing seed.
pub fn verifying_key_of(seed: &[u8; 32]) -> [u8; 32] {
    SigningKey::from_bytes(seed).verifying_key().to_bytes()
}

/// Verify a detached signature under a raw verification key.
pub fn verify_bytes(key_bytes: &[u8; 32], message: &[u8], signature: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(key_bytes) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    key.verify(message, &sig).is_ok()
}
