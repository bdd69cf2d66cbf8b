//! Canonical byte-size model used for every metered quantity.
//!
//! Nothing is actually serialised; sizes are sums of fixed primitive costs so
//! that totals are deterministic and comparable across engines.

/// Element id.
pub const ID: usize = 8;
/// Score, amount or count.
pub const VALUE: usize = 8;
/// Replica id inside a composite record.
pub const REPLICA: usize = 4;
/// `(siteId: 4B, val: 8B)`.
pub const TIMESTAMP: usize = 12;
/// Length prefix of a vector clock.
pub const VC_LEN: usize = 4;
/// One `(replica, counter)` vector clock entry.
pub const VC_ENTRY: usize = 12;
/// Per-operation kind tag.
pub const TAG: usize = 1;
/// One operation identity carried on the wire or in a log.
pub const OP_ID: usize = 12;
/// Fixed per-message header.
pub const HEADER: usize = 16;

/// Anything with a metered wire size.
pub trait Metered {
    fn metered_size(&self) -> usize;
}
