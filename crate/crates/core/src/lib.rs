//! Person re-identification by structured matching.
//!
//! Images from two camera views are quantized into codeword grids, turned
//! into spatially smoothed activation maps, and compared through sparse
//! visual-word co-occurrence descriptors. A linear model over those
//! descriptors is trained with a 1-slack cutting-plane structural SVM, and
//! test-time matching is a degree-constrained bipartite assignment solved
//! exactly by min-cost flow (or approximately by a capped simplex).
//!
//! Runnable walkthroughs live in `examples/`; the `prism` binary wraps the
//! file-based pipeline.

mod binio;
pub mod codebook;
pub mod cooccur;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod learner;
pub mod matcher;
pub mod pipeline;
pub mod spatial;

pub use binio::write_atomic;
pub use error::{Error, Result};

/// One of the two camera views. View one holds probes, view two galleries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    One,
    Two,
}

impl View {
    pub fn number(self) -> u8 {
        match self {
            View::One => 1,
            View::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(View::One),
            2 => Ok(View::Two),
            _ => Err(Error::Format(format!("view must be 1 or 2, got {n}"))),
        }
    }
}
