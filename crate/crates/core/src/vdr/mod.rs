//! Rank-N view-dependent color: a position network gives per-point
//! coefficients `g_n`, a view network gives per-view coefficients `h_n`, and
//! the color at a point is `g_0 + Σ_n g_n h_n`.

mod encoding;
mod evaluate;
mod model;

pub use encoding::{check_normalized, encoded_width, normalize_position, positional_encode, PosEncodingConfig};
pub use evaluate::{
    color_representation, color_representation_on, evaluate_batch, evaluate_on, evaluate_prepared,
    expand_view_dependent_mpi, prepare_batch, render_view_dependent, PositionField, PreparedBatch,
};
pub use model::{BoundVdR, PositionFrame, VdRConfig, VdRModel, ViewContext, CHECKPOINT_KIND};
