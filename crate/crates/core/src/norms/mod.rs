//! Two norm constructions: the polytope norm generated by normalized sign
//! vectors, and the expected-maximum norm of a Poisson point process.

mod poisson;
mod rq;

pub use poisson::{
    exponential_quantile_integral, norm_quantile_comparison, poisson_hull_norm, quantile_ratio,
    sample_sums, NormEstimate, PoissonMethod, PoissonNormParams, QuantileComparison,
    QuantileSource, Z_999,
};
pub use rq::{
    dual_norm_rq, lorentz_comparison, primal_norm_rq, rearrangement, sandwich_report, PrimalMethod,
    RQParams, SandwichReport,
};
