mod data;
mod link;
mod prior;
mod synthetic;
mod target;

pub use data::{
    ingest_csv, parse_csv, standardize, write_csv, ColumnKind, ColumnTransform, Dataset, Standardization,
};
pub use link::Link;
pub use prior::{Prior, PriorKind, INTERCEPT_SCALE, SLOPE_SCALE};
pub use synthetic::synthetic_dataset;
pub use target::{Derivatives, PosteriorTarget};
