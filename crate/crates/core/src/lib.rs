//! Probabilistic effect and availability estimation for structural models.

// `!(a > b)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod estimation;
pub mod expect;
pub mod expr;
pub mod gradient;
pub mod model;
pub mod oracle;
pub mod properties;
pub mod quad;
pub mod result;
pub mod truncate;
pub mod validate;

pub use builtin::{run_example, ExampleReport, EXAMPLES};
pub use continuous::{
    change_of_variables, is_zero_effect, peace, peace_r, piev, signed_peace, signed_piev, transform_model, Sign,
};
pub use discrete::{
    flux_tv, grid_refine_peace, grid_refine_signed, peace_discrete, phi_oracle_discrete, signed_discrete, tv_ani,
    tv_classic,
};
pub use error::{PeaceError, Result};
pub use estimation::{peace_from_data, peace_from_data_sweep, DataOptions, SampleTable};
pub use expr::{differentiate, parse_expression, Expr};
pub use model::{Degree, DiscreteGrid, DomainBox, Interval, Normalizer, StructuralModel, ZDistribution};
pub use oracle::{oracle_peace, variational_oracle, variational_oracle_with, OracleOptions};
pub use properties::{run_property_suite, Fault, SuiteReport, ValidateOptions};
pub use quad::QuadratureSpec;
pub use result::{Method, PeaceResult};
pub use truncate::TruncationPolicy;
pub use validate::{validate_model, ValidationReport};
