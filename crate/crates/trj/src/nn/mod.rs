//! Minimal reverse-mode automatic differentiation and the layer set the
//! motion model needs: MLPs with ReLU, multi-head attention, sinusoidal
//! positional encoding, and Adam.

mod adam;
mod attention;
mod encoding;
pub mod gradcheck;
mod mlp;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use attention::{AttentionEncoder, AttentionSpec};
pub use encoding::{positional_encoding, TIME_ENCODING_BANDS, TIME_ENCODING_WIDTH};
pub use mlp::{Mlp, MlpSpec};
pub use params::{LeasedParams, ParamSet};
pub use tape::{NodeId, Tape};
