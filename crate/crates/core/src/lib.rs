pub mod controller;
pub mod error;
pub mod generate;
pub mod geodesic;
pub mod metric;
pub mod network;
pub mod polyalg;
pub mod sampling;
pub mod simulator;
pub mod synthesis;
mod textfmt;

pub use error::{Error, Result};
pub use metric::{
    assemble_t_blocks, assemble_t_full, check_killing, verify_on_box, verify_on_set, Bounds, Certificate,
    KillingReport, MetricBlock, Multipliers, SumSeparableMetric,
};
pub use network::{
    builtin_example, builtin_network, Graph, InputSignal, JacobianBlocks, Network, NodeDynamics, ReferenceSignal,
};
pub use polyalg::{Monomial, PolyMatrix, PolyVector, Polynomial, VarIndex};
pub use sampling::{BoxDomain, SampleSet, SampleSource, SamplerConfig};
pub use controller::{ControlOutput, DistributedController, LocalView};
pub use geodesic::{solve_geodesic, DiscreteCurve, GeodesicOptions, GeodesicResult};
pub use simulator::{ConvergenceReport, SimConfig, Trajectory};
pub use synthesis::{
    parameterize, solve_feasibility, DecisionVector, SynthesisOptions, SynthesisOutcome, SynthesisProblem,
    SynthesisResult, Template,
};
