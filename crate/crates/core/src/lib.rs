//! Team formation and player-role estimation from tracking data.
//!
//! Player locations in a frame are modelled as role locations drawn from one
//! Gaussian per role, shuffled by a hidden permutation, with an optional
//! latent regime switching the formation. The crate covers the whole chain:
//! ingesting tracking files ([`trackio`]), the shared-component mixture used
//! for initialization ([`sharedgmm`]), selection of a sparse permutation
//! support ([`permselect`]), the EM fit of the permutation mixture
//! ([`permgmm`]), the hard-assignment baseline ([`assign`]), formation
//! comparison ([`formmetrics`]), simulation ([`simlab`]) and the end-to-end
//! [`pipeline`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assign;
pub mod error;
pub mod formmetrics;
pub mod gausscore;
pub mod permgmm;
pub mod permselect;
pub mod pipeline;
pub mod rng;
pub mod sharedgmm;
pub mod simlab;
pub mod stats;
pub mod trackio;

pub use error::{Error, Result};
pub use gausscore::{Formation, Permutation, Point, RoleGaussian};
pub use permgmm::{FitOptions, RegimeModel};
pub use trackio::{NormalizedFrame, Possession, TrackingFrame};
