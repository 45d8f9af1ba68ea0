//! Append-only hash-linked chain of signed transactions, each executed
//! against the access-control contract.
//!
//! `chain.jsonl` holds one canonical JSON block per line. Loading re-checks
//! every hash link and signature, then rebuilds the contract state by replay.

mod account;
mod contract;

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use account::{Account, Address};
pub use contract::{
    CallContext, CallOutput, ContractCall, ContractFunction, ContractRejection, ContractState, Membership, Role,
    StoredEntry,
};

use crate::crypto::{hash_bytes, Digest, KeyId, PublicKey, Signature};
use crate::encoding::{b64, canonical_encode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTransaction {
    pub caller: Address,
    pub caller_key: PublicKey,
    pub function: ContractFunction,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    pub caller_signature: Signature,
    pub tx_hash: Digest,
}

#[derive(Serialize)]
struct TxSigningBody<'a> {
    caller: &'a Address,
    caller_key: &'a PublicKey,
    function: ContractFunction,
    #[serde(with = "b64")]
    payload: &'a Vec<u8>,
}

#[derive(Serialize)]
struct TxHashBody<'a> {
    #[serde(flatten)]
    signed: TxSigningBody<'a>,
    caller_signature: &'a Signature,
}

impl ChainTransaction {
    pub fn new(account: &Account, call: &ContractCall) -> Self {
        let mut tx = ChainTransaction {
            caller: account.address(),
            caller_key: account.public(),
            function: call.function(),
            payload: call.payload(),
            caller_signature: Signature([0; 64]),
            tx_hash: Digest::ZERO,
        };
        tx.caller_signature = account.keypair().sign(&tx.signing_bytes());
        tx.tx_hash = tx.compute_hash();
        tx
    }

    fn signing_body(&self) -> TxSigningBody<'_> {
        TxSigningBody { caller: &self.caller, caller_key: &self.caller_key, function: self.function, payload: &self.payload }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical_encode(&self.signing_body())
    }

    pub fn compute_hash(&self) -> Digest {
        hash_bytes(&canonical_encode(&TxHashBody { signed: self.signing_body(), caller_signature: &self.caller_signature }))
    }

    pub fn signature_valid(&self) -> bool {
        KeyId::of(&self.caller_key) == self.caller && self.caller_key.verify(&self.signing_bytes(), &self.caller_signature)
    }

    pub fn decode_call(&self) -> Result<ContractCall, String> {
        ContractCall::decode(self.function, &self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest,
    pub timestamp: u64,
    pub transactions: Vec<ChainTransaction>,
    pub block_hash: Digest,
}

#[derive(Serialize)]
struct BlockHashBody<'a> {
    index: u64,
    prev_hash: &'a Digest,
    timestamp: u64,
    transactions: &'a [ChainTransaction],
}

impl Block {
    fn seal(index: u64, prev_hash: Digest, timestamp: u64, transactions: Vec<ChainTransaction>) -> Block {
        let mut b = Block { index, prev_hash, timestamp, transactions, block_hash: Digest::ZERO };
        b.block_hash = b.compute_hash();
        b
    }

    pub fn compute_hash(&self) -> Digest {
        hash_bytes(&canonical_encode(&BlockHashBody {
            index: self.index,
            prev_hash: &self.prev_hash,
            timestamp: self.timestamp,
            transactions: &self.transactions,
        }))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_encode(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub block_index: u64,
    pub tx_hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxOutcome {
    Committed(TxReceipt),
    Records(Vec<StoredEntry>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transaction signature or hash invalid")]
    InvalidTxSignature,
    #[error("rejected: {0}")]
    Rejected(#[from] ContractRejection),
    #[error("malformed transaction: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorruptionKind {
    Parse,
    Encoding,
    Hash,
    Link,
    Index,
    Signature,
    Genesis,
    Execution(String),
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorruptionKind::Parse => f.write_str("parse"),
            CorruptionKind::Encoding => f.write_str("encoding"),
            CorruptionKind::Hash => f.write_str("hash"),
            CorruptionKind::Link => f.write_str("link"),
            CorruptionKind::Index => f.write_str("index"),
            CorruptionKind::Signature => f.write_str("signature"),
            CorruptionKind::Genesis => f.write_str("genesis"),
            CorruptionKind::Execution(why) => write!(f, "execution ({why})"),
        }
    }
}

/// First corrupted block (or `chain.jsonl` line) and what was wrong with it.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("chain corrupted at block {index}: {kind}")]
pub struct ChainCorruption {
    pub index: u64,
    pub kind: CorruptionKind,
}

impl ChainCorruption {
    fn at(index: u64, kind: CorruptionKind) -> Self {
        ChainCorruption { index, kind }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Corrupt(#[from] ChainCorruption),
}

/// Structural checks per block, in order: own hash, link to predecessor,
/// index, then each transaction's signature and hash.
pub fn validate_chain(blocks: &[Block]) -> Result<(), ChainCorruption> {
    if blocks.is_empty() {
        return Err(ChainCorruption::at(0, CorruptionKind::Genesis));
    }
    for (i, block) in blocks.iter().enumerate() {
        let i = i as u64;
        if block.compute_hash() != block.block_hash {
            return Err(ChainCorruption::at(i, CorruptionKind::Hash));
        }
        let expected_prev = if i == 0 { Digest::ZERO } else { blocks[i as usize - 1].block_hash };
        if block.prev_hash != expected_prev {
            return Err(ChainCorruption::at(i, CorruptionKind::Link));
        }
        if block.index != i {
            return Err(ChainCorruption::at(i, CorruptionKind::Index));
        }
        if block.transactions.is_empty() {
            return Err(ChainCorruption::at(i, CorruptionKind::Execution("empty block".into())));
        }
        for tx in &block.transactions {
            if !tx.signature_valid() || tx.compute_hash() != tx.tx_hash {
                return Err(ChainCorruption::at(i, CorruptionKind::Signature));
            }
        }
    }
    let genesis = &blocks[0];
    if genesis.transactions.len() != 1 || genesis.transactions[0].function != ContractFunction::Bootstrap {
        return Err(ChainCorruption::at(0, CorruptionKind::Genesis));
    }
    Ok(())
}

/// Rebuilds contract state by re-executing every transaction from genesis.
pub fn replay_state(blocks: &[Block]) -> Result<ContractState, ChainCorruption> {
    validate_chain(blocks)?;
    let mut state = ContractState::default();
    for block in blocks {
        for tx in &block.transactions {
            apply(&mut state, block, tx).map_err(|why| ChainCorruption::at(block.index, CorruptionKind::Execution(why)))?;
        }
    }
    Ok(state)
}

fn apply(state: &mut ContractState, block: &Block, tx: &ChainTransaction) -> Result<(), String> {
    let call = tx.decode_call()?;
    if call.function().is_view() {
        return Err("view call recorded on chain".into());
    }
    let ctx = CallContext {
        caller: tx.caller,
        caller_key: &tx.caller_key,
        timestamp: block.timestamp,
        tx_hash: tx.tx_hash,
        genesis: block.index == 0,
    };
    state.execute(&call, &ctx).map(|_| ()).map_err(|e| e.to_string())
}

/// Parses `chain.jsonl`. `index` in the error is the zero-based line number,
/// which equals the block index on an intact file.
pub fn parse_chain_jsonl(bytes: &[u8]) -> Result<Vec<Block>, ChainCorruption> {
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let mut blocks = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        let block: Block =
            serde_json::from_slice(line).map_err(|_| ChainCorruption::at(i as u64, CorruptionKind::Parse))?;
        if block.canonical_bytes() != line {
            return Err(ChainCorruption::at(i as u64, CorruptionKind::Encoding));
        }
        blocks.push(block);
    }
    Ok(blocks)
}

#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    state: ContractState,
}

impl Ledger {
    /// New chain whose genesis block makes `admin` the first Administration member.
    pub fn genesis(admin: &Account, timestamp: u64) -> Ledger {
        let tx = ChainTransaction::new(admin, &ContractCall::Bootstrap { admin: admin.address() });
        let block = Block::seal(0, Digest::ZERO, timestamp, vec![tx]);
        let state = replay_state(std::slice::from_ref(&block)).expect("fresh genesis is valid");
        Ledger { blocks: vec![block], state }
    }

    /// Validates and replays existing blocks.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Ledger, ChainCorruption> {
        let state = replay_state(&blocks)?;
        Ok(Ledger { blocks, state })
    }

    pub fn load(path: &Path) -> Result<Ledger, LoadError> {
        let bytes = fs::read(path)?;
        Ok(Ledger::from_blocks(parse_chain_jsonl(&bytes)?)?)
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend_from_slice(&b.canonical_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn persist(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_jsonl())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("ledger always has genesis")
    }

    /// Submits at the next logical tick after the head block.
    pub fn submit(&mut self, tx: &ChainTransaction) -> Result<TxOutcome, LedgerError> {
        let now = self.head().timestamp + 1;
        self.submit_at(tx, now)
    }

    /// Executes `tx`; mutating calls are sealed into a new block, views are
    /// answered without touching the chain. Block timestamps never decrease.
    pub fn submit_at(&mut self, tx: &ChainTransaction, now: u64) -> Result<TxOutcome, LedgerError> {
        if !tx.signature_valid() || tx.compute_hash() != tx.tx_hash {
            return Err(LedgerError::InvalidTxSignature);
        }
        let call = tx.decode_call().map_err(LedgerError::Malformed)?;
        let head = self.head();
        let timestamp = now.max(head.timestamp);
        let index = head.index + 1;
        let ctx = CallContext {
            caller: tx.caller,
            caller_key: &tx.caller_key,
            timestamp,
            tx_hash: tx.tx_hash,
            genesis: false,
        };
        if call.function().is_view() {
            let mut scratch = self.state.clone();
            return match scratch.execute(&call, &ctx)? {
                CallOutput::Records(r) => Ok(TxOutcome::Records(r)),
                CallOutput::Done => Ok(TxOutcome::Records(Vec::new())),
            };
        }
        let mut next = self.state.clone();
        next.execute(&call, &ctx)?;
        let block = Block::seal(index, head.block_hash, timestamp, vec![tx.clone()]);
        self.state = next;
        self.blocks.push(block);
        Ok(TxOutcome::Committed(TxReceipt { block_index: index, tx_hash: tx.tx_hash }))
    }

    /// Signs `call` as `account` and submits it.
    pub fn call(&mut self, account: &Account, call: ContractCall) -> Result<TxOutcome, LedgerError> {
        self.submit(&ChainTransaction::new(account, &call))
    }

    pub fn call_at(&mut self, account: &Account, call: ContractCall, now: u64) -> Result<TxOutcome, LedgerError> {
        self.submit_at(&ChainTransaction::new(account, &call), now)
    }

    /// Mutable block access for corruption drills.
    #[doc(hidden)]
    pub fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}
