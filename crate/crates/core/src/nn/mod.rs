//! Small neural-network toolkit: parameters, a reverse-mode tape, the layer
//! types the generator needs, categorical helpers, and Adam.

pub mod adam;
pub mod checkpoint;
pub mod dist;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, RngState};
pub use layers::{Embedding, GruCell, Linear, Mlp};
pub use params::{Gradients, ParamId, ParamStore, ParamTensor};
pub use tape::{Backward, Tape, Var};
