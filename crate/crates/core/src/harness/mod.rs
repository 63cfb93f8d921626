//! Cross-validation, architecture sweeps, and the config file format.

mod config_file;
mod cv;
mod kfold;
mod sweep;

pub use config_file::{format_config, load_config, parse_config, set_field, ConfigFileError, KEYS};
pub use cv::{cross_validate, evaluate, fresh_model, CvError, CvOptions, CvReport, FoldReport, VocabProtocol};
pub use kfold::{kfold_split, FoldPlan, KFoldError};
pub use sweep::{sweep, SweepError, SweepRow, SweepSpec, SweepTable, SweepVariant};
