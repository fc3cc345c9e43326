//! Exact counts and constructions over the operator vocabulary, and the
//! reference activation functions used for comparison.

mod baselines;
mod census;
mod indicator;
mod piecewise;
mod shapes;

pub use baselines::{
    baseline, wrap_scaled, Baseline, Scaled, UnknownBaseline, APL_HINGES, LEAKY_RELU_SLOPE, PAU_DENOMINATOR,
    PAU_NUMERATOR, PRELU_INIT, SPLASH_BREAKPOINTS,
};
pub use census::{
    count_space, functions_per_graph, placements, shape_pairs, with_commas, ArrangementRow, BinomialSum, CensusError,
    CensusGroup, CensusOptions, CensusRow, SpaceCensus, BINARY_OPS, DEFAULT_ARRANGEMENTS, MAX_EDGE_PARAMS, UNARY_OPS,
};
pub use indicator::{build_indicator, Construction, IndicatorError, IndicatorKind};
pub use piecewise::{compile_piecewise, Piece, PiecewiseError, PiecewiseSpec};
pub use shapes::{compare_arrangements, enumerate_shapes, ShapeReport};
