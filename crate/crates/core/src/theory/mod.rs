//! Sample-complexity and mutual-information calculators.

pub mod ccp;
pub mod mi;
pub mod montecarlo;
pub mod quadrature;

pub use ccp::{
    ccp_batched, ccp_batched_analytic, ccp_topk_coverage_mc, ccp_unequal, ccp_unequal_analytic,
    ccp_unequal_inclusion_exclusion, ccp_unequal_quadrature, ccp_uniform_analytic,
    ccp_uniform_draws, CcpEstimate,
};
pub use mi::{alignment_report, cosine_alignment, mi_bound_uniform, AlignmentReport, AnchorSets};
