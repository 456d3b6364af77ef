//! Slow, straightforward reference implementations used as oracles in tests.
//!
//! Everything here works on plain slices and deliberately shares no code
//! with the library it checks. Clarity over speed throughout.

pub mod fd;
pub mod knn;
pub mod qp;
pub mod rim;
pub mod spm;
pub mod vlad;
