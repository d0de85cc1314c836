pub mod compare;
pub mod mms;
pub mod run;
pub mod sweep;
pub mod validate;

pub use compare::{cmd_oracle_compare, CompareReport};
pub use mms::{cmd_mms, MmsReport};
pub use run::{cmd_run, RunStatus, RunSummary};
pub use sweep::{cmd_sweep, SweepReport};
pub use validate::cmd_validate;
