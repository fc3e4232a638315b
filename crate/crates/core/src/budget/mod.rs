//! Key-pool bookkeeping, failure budget and final-key accounting.

mod accounting;
mod plan;
mod pool;

pub(crate) use accounting::tag_failure;
pub use accounting::{eps3, grouped_costs, k3_shortcut, k3_shortcut_real, log2_a, net_key_length, Costs, FailureBudget, GroupedCosts};
pub use plan::{key_length_estimate, optimize_plan, Observed, PlanInput, PlanResult, ProtocolParams};
pub use pool::{KeyPool, KeyPurpose, LedgerEntry};
