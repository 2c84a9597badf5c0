//! Per-(stock, day) tensor fusion, movement labels, similarity weights and
//! the chronological train/test split.

mod ingest;
mod panel;
mod similarity;
mod split;

pub use ingest::{read_panel, write_panel, IngestReport, PanelPaths, QUANT_COLUMNS};
pub use panel::{build_tensor, label, Label, MarketPanel, QuantScaler, StockDayRecord};
pub use similarity::{build_w, build_w_in, build_z, pearson, BinaryUpper, SimilarityWeights, ZOutcome};
pub use split::{split_panel, PanelSplit};
