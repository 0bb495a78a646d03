//! Codec evaluation toolkit.
//!
//! Plans and runs encoder benchmark matrices against external encoder
//! binaries, then turns the measured rate/quality points into BD-Rate
//! numbers, scenario-gated preset recommendations and encode-time
//! comparison grids.
//!
//! Module map:
//!
//! * [`y4m`] raw YUV4MPEG2 ingest and emission.
//! * [`complexity`] spatial/temporal energy of clips.
//! * [`orchestrator`] job planning, command construction, process execution
//!   and the external VMAF invocation.
//! * [`store`] append-only JSON-lines record store.
//! * [`bd`] RD curves, Bjontegaard deltas and dataset aggregation.
//! * [`scenario`] scenario gates, preset selection, grids and report output.

pub mod bd;
pub mod complexity;
pub mod orchestrator;
pub mod scenario;
pub mod store;
pub mod y4m;

pub use bd::{BdError, BdResult, MetricKind, RdCurve, RdPoint};
pub use store::{MetricRecord, RecordKey, ResultsStore, StoreError};
pub use y4m::{Chroma, Frame, VideoHeader, Y4mError, Y4mReader, Y4mWriter};
