//! Tensors, reverse-mode differentiation, and optimization.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod seeds;
pub mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use graph::{cosine_similarity, dropout, Gradients, Graph, KeyMask, Mode, Var};
pub use optim::{clip_gradients, global_grad_norm, AdamState};
pub use seeds::{derive_seed, stream, SeedPurpose, StreamRng};
pub use tensor::{ParamStore, Precision, Tensor};
