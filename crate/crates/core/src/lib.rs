//! Nullcline identification from oscillatory time series.
//!
//! A feed-forward network is trained to predict one state variable from the
//! other plus a time derivative. Querying it with the derivative input set to
//! zero traces the nullcline of the corresponding equation, which can then be
//! turned into a sparse polynomial by sequentially thresholded least squares.
//!
//! Pipeline: [`systems`] → [`integrator`] → [`dataset`] → [`net`] →
//! [`nullcline`] → [`symbolic`], orchestrated by [`harness`].

pub mod dataset;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod io;
pub mod kv;
pub mod net;
pub mod nullcline;
pub mod parallel;
pub mod symbolic;
pub mod systems;

pub use error::{Error, Result};
