//! Range-filtered approximate nearest-neighbor search over a fully
//! incremental index: a weight-balanced attribute tree paired with a
//! hierarchy of window graphs.

pub mod attr_tree;
pub mod bench;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod index;
pub mod oracle;
pub mod workload;

pub use attr_tree::{AttrTree, Cardinality, Window};
pub use dataset::{in_range, AttributeValue, HybridDataset, Neighbor, RangeFilter, VectorId};
pub use distance::{distance, DistanceCounter, Metric};
pub use error::{Error, Result, Violation};
pub use index::{IndexParams, LandingLayer, QueryOptions, SearchContext, WowIndex};
