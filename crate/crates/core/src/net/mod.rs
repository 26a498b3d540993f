//! Forward-only transformer components: patch embedding, attention blocks,
//! the dual and global decoders, dense and pose heads, and the weight
//! container they are loaded from.

pub mod heads;
pub mod layers;
pub mod model;
pub mod schema;
pub mod tensor;
pub mod weights;

pub use heads::{pose_from_raw, GsMaps, PosMaps};
pub use model::{AnchorState, DualOutput, HeadSet, NetConfig, Network, PoseToken, TokenGrid};
pub use schema::Schema;
pub use tensor::Mat;
pub use weights::{Tensor, WeightContainer};
