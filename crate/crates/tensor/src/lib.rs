//! Dense `f64` tensors with a reverse-mode differentiation tape.
//!
//! ```
//! use ligbind_tensor::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let p = store.insert("p", Tensor::vector(vec![1.0, -2.0])).unwrap();
//! let mut tape = Tape::new();
//! let x = tape.param(&store, p);
//! let sq = tape.square(x).unwrap();
//! let loss = tape.sum_all(sq).unwrap();
//! let grads = tape.backward(loss).unwrap().for_params(&store);
//! assert_eq!(grads[0].data(), &[2.0, -4.0]);
//! ```

mod error;
mod gradcheck;
mod param;
pub mod suite;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport, ABS_FLOOR};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var, LAYER_NORM_VARIANCE_FLOOR};
pub use tensor::Tensor;
