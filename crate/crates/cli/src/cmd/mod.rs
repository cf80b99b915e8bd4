pub mod census;
pub mod construct;
pub mod optimize;
pub mod regularity;
pub mod tfunc;

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Done,
    /// A configured cap stopped the computation; outputs are partial.
    CapsExhausted,
    /// The run finished but reported broken invariants.
    InvariantViolated,
}
