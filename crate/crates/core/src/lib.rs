//! Generalization-measure fragility auditing.
//!
//! The crate trains small fully connected networks under controlled
//! hyperparameter changes, evaluates norm-, margin- and sharpness-based
//! generalization measures on the resulting checkpoints, and scores how
//! fragile each measure's ranking is under those changes.
//!
//! * [`netcore`]: networks, forward/backward passes, margins, checkpoints.
//! * [`datakit`]: datasets and the data-complexity transforms.
//! * [`optimkit`]: SGD with momentum and weight decay, Adam, training runs.
//! * [`measures`]: the generalization measures.
//! * [`fragility`]: CMS/eCMS scoring across runs.
//! * [`exppp`]: the exponentially reparameterized schedule and its checks.
//! * [`evidence`]: consistency-mass estimation and the marginal-likelihood
//!   PAC-Bayes bound.

mod container;
pub mod datakit;
pub mod error;
pub mod evidence;
pub mod exppp;
pub mod fragility;
pub mod linalg;
pub mod measures;
pub mod netcore;
pub mod optimkit;
pub mod rng;
pub mod util;

pub use error::{Error, Result};
