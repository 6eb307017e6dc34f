//! Cross-market contagion detection and channel attribution.
//!
//! Stage 1 decomposes each market's log-returns with an LA8 MODWT and
//! measures directional predictability between markets with wavelet-quantile
//! transfer entropy (WQTE), thresholded against a baseline period into a
//! directed contagion network. Stage 2 attributes each detected link to one
//! of five transmission channels (Trade, Financial, Geopolitical,
//! Behavioural, Monetary) with 2SLS, post-double-selection LASSO-IV, local
//! projections and heteroskedasticity-based identification.

pub mod error;
pub mod linalg;
pub mod stats;

pub mod ingest;
pub mod wavelet;
pub mod quantreg;
pub mod detect;
pub mod attribution;
pub mod network;
pub mod synth;
pub mod report;

pub use error::{Error, Result};
pub use ingest::{Channel, ChannelPanel, MarketClass, PricePanel, ReturnPanel, SubPeriod};
pub use wavelet::{WaveletDecomposition, WaveletFilter};
pub use quantreg::QuantileFit;
pub use detect::{ContagionNetwork, DetectionSummary, FlowTensor};
pub use attribution::{DiagnosticsRecord, LinkSample, Method, ShareTable, StructuralEstimate};
pub use network::{CommunityPartition, UndirectedGraph};
pub use report::{PipelineConfig, PipelineReport};
