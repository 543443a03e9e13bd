//! Protocol library and simulator for a security-aware, multi-hop
//! underwater optical sensor network.
//!
//! - [`frame`]: byte-level relay frame with an accumulating key chain.
//! - [`channel`]: turbidity-dependent optical link, OOK error model, and
//!   parameter calibration.
//! - [`node`]: half-duplex relay state machine and TDMA schedule.
//! - [`netsim`]: seeded Monte-Carlo runs of the whole line.
//! - [`config`], [`report`], [`harness`]: scenario files, CSV output and
//!   the commands behind the `uwoc` binary.

pub mod channel;
pub mod frame;
pub mod netsim;
pub mod node;
pub mod rng;
pub mod config;
pub mod harness;
pub mod report;
