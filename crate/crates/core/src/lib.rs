pub mod complex;
pub mod conflict;
pub mod curvature;
pub mod datasets;
pub mod distance;
pub mod eval;
pub mod exec;
pub mod io;
pub mod metric;
pub mod pipeline;
pub mod placement;
pub mod spatial;
