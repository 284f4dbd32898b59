//! Fixed-order H2-conic controller synthesis by iterative convex overbounding.

pub mod benchmark;
pub mod conic;
pub mod error;
pub mod init;
pub mod linalg;
pub mod lti;
pub mod parallel;
pub mod sdp;
pub mod synthesis;

pub use error::{Error, Result};

// links the system BLAS/LAPACK used by the SDP solver
use openblas_src as _;
