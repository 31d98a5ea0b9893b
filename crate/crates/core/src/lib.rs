//! Dense tensor contractions evaluated in place on GEMM-family kernels.
//!
//! A contraction such as `C[mnp] = A[mk] * B[nkp]` is planned onto a single
//! GEMM, a strided batched GEMM, or an extended strided batched GEMM that
//! batches along an operand's unit-stride mode. No operand is copied or
//! transposed. A copy-based evaluator and a direct summation oracle are
//! provided for comparison.
//!
//! ```
//! use tcontract::{contract, parse_contraction, DenseTensor, SplitMix64};
//!
//! let spec = parse_contraction("C[mnp] = A[mk] * B[nkp]").unwrap();
//! let mut rng = SplitMix64::new(7);
//! let a = DenseTensor::random(&[4, 3], &mut rng).unwrap();
//! let b = DenseTensor::random(&[5, 3, 6], &mut rng).unwrap();
//! let mut c = DenseTensor::packed_zeros(&[4, 5, 6]).unwrap();
//! contract(&spec, &a, &b, &mut c).unwrap();
//! ```

pub mod bench;
pub mod blas;
pub mod error;
pub mod instrument;
pub mod io;
pub mod layout;
pub mod notation;
pub mod planner;
pub mod reference;
pub mod rng;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use layout::{Layout, ModePermutation};
pub use notation::{parse_contraction, ContractionSpec};
pub use planner::{
    contract, enumerate_cases, execute_plan, plan_conventional, plan_single_mode, plan_with, EvaluationPlan,
    PermutePolicy, Strategy, StrategyChoice,
};
pub use reference::{contract_conventional, contract_naive, max_relative_error};
pub use rng::SplitMix64;
pub use tensor::DenseTensor;
pub use tucker::{hooi, tucker_reconstruct, TuckerModel};
