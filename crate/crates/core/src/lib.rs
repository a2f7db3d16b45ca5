//! Power-domain NOMA over OTFS and OFDM in doubly dispersive channels.
//!
//! The crate covers the whole chain used by the simulators in this workspace:
//!
//! * [`grid`]: delay-Doppler lattice, unitary modulation matrices, cyclic prefix.
//! * [`channel`]: EVA tapped-delay-line sampling with Jakes Doppler and the
//!   structured channel matrix it induces.
//! * [`mmse`]: regularized covariance factorization and per-symbol equalizer
//!   statistics shared by the downlink and uplink receivers.
//! * [`downlink`], [`uplink`]: superposition/aggregation, LMMSE products, SINR and sum rate.
//! * [`power`]: fixed, fractional and weighted-sum-rate power allocation.
//! * [`fec`]: quasi-cyclic LDPC code with min-sum decoding and Gray QAM.
//! * [`link`]: coded two-user chains with codeword-level SIC.
//! * [`system`]: Monte-Carlo spectral-efficiency harness and scenario files.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod downlink;
pub mod error;
pub mod fec;
pub mod grid;
pub mod linalg;
pub mod link;
pub mod mmse;
pub mod power;
pub mod report;
pub mod rng;
pub mod stats;
pub mod system;
pub mod uplink;

pub use num_complex::Complex64 as C64;

pub use channel::{ChannelMatrix, ChannelRealization, Path, PathSet};
pub use config::{LinkScenario, ScenarioConfig};
pub use downlink::{PowerSplit, SinrReport};
pub use error::{Error, Result};
pub use fec::{LdpcCode, LlrBlock, Modulation, QamConstellation};
pub use grid::{DdDataGrid, GridSpec, ModulationMatrix, Waveform};
pub use link::{ChannelModel, ChannelParams, Direction, LinkConfig, LinkOutcome, UserOutcome};
pub use mmse::{EqualizerProducts, RowScalars};
pub use power::{InstSinrScalars, Scheme, WsrmWeights};
pub use system::{SeSample, SeSummary, SymbolStat, SystemConfig};
pub use uplink::UplinkConfig;
