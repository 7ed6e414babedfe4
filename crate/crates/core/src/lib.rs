//! Local and fractional Calderón forward problems, the weighted extension that
//! links them, and the vertical-integral bridge from nonlocal to local data.

pub mod bridge;
pub mod coefficient;
pub mod data;
pub mod error;
pub mod extension;
pub mod fractional;
pub mod linalg;
pub mod local;
pub mod mesh;
pub mod tikhonov;

pub use bridge::{
    vertical_integral, partial_vertical_integral, verify_local_equation, BridgePipeline, CauchyPair,
    LocalResidual, ResidualMode, VerticalIntegralField,
};
pub use coefficient::{Coefficient, CoefficientForm, CoefficientSpec, Monomial, ScalarExpr};
pub use error::{Error, Result};
pub use extension::{
    analytic_constant, solve_extension, ExtensionField, ExtensionOperator, ExtensionSolver,
    KernelExtension, TraceCondition, TraceEstimator, WeightedTrace,
};
pub use fractional::{FractionalDirichlet, NonlocalDtN, SobolevProxy, SpectralPower};
pub use local::{assemble_local, LocalDtN, LocalOperator};
pub use mesh::{
    build_tangential_grid, BoxRegion, ExtensionMesh, GeometrySpec, NodeKind, Point,
    TangentialGrid, VerticalMesh, VerticalSpec,
};
pub use tikhonov::{
    alpha_sweep, build_data_operator, minimize, reconstruct_cauchy_from_data, DataOperator,
    TikhonovData, TikhonovSolution,
};
