//! Evaluation plans for contractions.
//!
//! [`plan_single_mode`] maps a contraction with one contracted label onto a
//! single GEMM, a strided batched GEMM (optionally nested inside outer loops)
//! or an extended strided batched GEMM, without copying operand data.
//! [`plan_conventional`] is the matricize-and-copy baseline.

mod cases;
mod conventional;
mod exec;
mod print;
mod single;

use std::collections::BTreeMap;
use std::fmt;

pub use cases::{classify_case, enumerate_cases, CaseClass, CaseDescriptor};
pub use conventional::{plan_conventional, PermutePolicy};
pub use exec::{contract, execute_plan, execute_plan_with, ExecOptions};
pub use single::{plan_single_mode, plan_with};

use crate::blas::{KernelArgs, Op};
use crate::error::{Error, Result};
use crate::layout::{Layout, ModePermutation};
use crate::notation::ContractionSpec;

/// Which tensor of `C = A * B` a step refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    A,
    B,
    C,
}

impl Role {
    pub(crate) fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> char {
        match self {
            Role::A => 'A',
            Role::B => 'B',
            Role::C => 'C',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One GEMM over flattened modes.
    FlattenedGemm,
    /// One strided batched GEMM.
    StridedBatched,
    /// A strided batched GEMM inside outer loops.
    NestedBatched,
    /// Strided batched GEMM with an extended operand.
    ExtendedBatched,
    /// GEMV calls inside outer loops.
    BatchedGemv,
    /// Explicit permutations followed by one BLAS call.
    Conventional,
}

impl Strategy {
    pub fn tag(self) -> &'static str {
        match self {
            Strategy::FlattenedGemm => "flattened-gemm",
            Strategy::StridedBatched => "strided-batched",
            Strategy::NestedBatched => "nested-batched",
            Strategy::ExtendedBatched => "extended-batched",
            Strategy::BatchedGemv => "batched-gemv",
            Strategy::Conventional => "conventional",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Restricts the strategies [`plan_with`] may pick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum StrategyChoice {
    /// Best transpose-free plan.
    #[default]
    Auto,
    /// Best plan without an extended operand.
    Batched,
    /// Best plan that uses an extended operand.
    Extended,
    /// A single GEMM, if one exists.
    Flattened,
    BatchedGemv,
    Conventional,
}

/// One BLAS call with operand roles and resolved stride arguments. The
/// scalars stored in `args` are placeholders; execution supplies alpha and
/// beta.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelCall {
    /// `gemm`, `strided_batched_gemm` or `strided_batched_gemm_ex`, chosen by
    /// the op flags and batch count; `x` fills the kernel's A slot.
    Gemm { x: Role, y: Role, args: KernelArgs },
    /// `y = op(M) v` with `C` as the result vector.
    Gemv { matrix: Role, vector: Role, op: Op, m: usize, n: usize, lda: usize, incx: usize, incy: usize },
    /// `C = beta C + x y^T`, `x` running along the rows of `C`.
    Ger { x: Role, y: Role, m: usize, n: usize, incx: usize, incy: usize, ldc: usize },
    /// `C = sum A_i B_i`.
    Dot { n: usize, incx: usize, incy: usize },
}

impl KernelCall {
    pub fn name(&self) -> &'static str {
        match self {
            KernelCall::Gemm { args, .. } if args.op_a.is_extended() || args.op_b.is_extended() => {
                "strided_batched_gemm_ex"
            }
            KernelCall::Gemm { args, .. } if args.batch_count == 1 => "gemm",
            KernelCall::Gemm { .. } => "strided_batched_gemm",
            KernelCall::Gemv { .. } => "gemv",
            KernelCall::Ger { .. } => "ger",
            KernelCall::Dot { .. } => "dot",
        }
    }

    pub fn is_extended(&self) -> bool {
        matches!(self, KernelCall::Gemm { args, .. } if args.op_a.is_extended() || args.op_b.is_extended())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanStep {
    /// Modes `labels` of `role` are addressed as one mode.
    Flatten { role: Role, labels: Vec<char> },
    /// Outer loop; each iteration advances the tensors by `strides`
    /// (indexed by [`Role`], zero where the label is absent).
    Loop { labels: Vec<char>, extent: usize, strides: [usize; 3] },
    /// Explicit copy of `role` from label order `from` into a packed tensor
    /// in order `to`. With `output` set the copy goes from the working
    /// result back into `C`.
    Permute { role: Role, from: Vec<char>, to: Vec<char>, perm: ModePermutation, to_dims: Vec<usize>, output: bool },
    /// The BLAS call, with its rendering in bracket notation and the labels
    /// of its batch mode, if any.
    Kernel { call: KernelCall, notation: String, batch: Option<Vec<char>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationPlan {
    spec: ContractionSpec,
    strategy: Strategy,
    layouts: [Layout; 3],
    steps: Vec<PlanStep>,
}

impl EvaluationPlan {
    pub fn spec(&self) -> &ContractionSpec {
        &self.spec
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn layout(&self, role: Role) -> &Layout {
        &self.layouts[role.index()]
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    /// Number of explicit permutations the plan performs.
    pub fn transpositions(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, PlanStep::Permute { .. })).count()
    }

    pub fn kernel(&self) -> &KernelCall {
        self.steps
            .iter()
            .find_map(|s| match s {
                PlanStep::Kernel { call, .. } => Some(call),
                _ => None,
            })
            .expect("every plan has a kernel step")
    }

    /// Bracket-notation rendering of the kernel step.
    pub fn notation(&self) -> &str {
        self.steps
            .iter()
            .find_map(|s| match s {
                PlanStep::Kernel { notation, .. } => Some(notation.as_str()),
                _ => None,
            })
            .unwrap_or("")
    }

    /// Labels of the kernel's batch mode.
    pub fn batch_labels(&self) -> Option<&[char]> {
        self.steps.iter().find_map(|s| match s {
            PlanStep::Kernel { batch, .. } => batch.as_deref(),
            _ => None,
        })
    }

    /// Labels of each outer loop, outermost first.
    pub fn loop_labels(&self) -> Vec<&[char]> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                PlanStep::Loop { labels, .. } => Some(labels.as_slice()),
                _ => None,
            })
            .collect()
    }
}

/// Extent of every label, checked against the layouts.
pub(crate) fn label_extents(
    spec: &ContractionSpec,
    la: &Layout,
    lb: &Layout,
    lc: &Layout,
) -> Result<BTreeMap<char, usize>> {
    let mut extents = BTreeMap::new();
    for (role, labels, layout) in [(Role::A, &spec.a, la), (Role::B, &spec.b, lb), (Role::C, &spec.c, lc)] {
        if labels.len() != layout.order() {
            return Err(Error::arg(format!(
                "{} has {} labels but its layout has order {}",
                role.name(),
                labels.len(),
                layout.order()
            )));
        }
        for (&l, &d) in labels.iter().zip(layout.dims()) {
            match extents.insert(l, d) {
                Some(prev) if prev != d => {
                    return Err(Error::arg(format!("label '{l}' has extent {prev} and {d}")));
                }
                _ => {}
            }
        }
    }
    Ok(extents)
}

pub(crate) fn labels_of(spec: &ContractionSpec, role: Role) -> &[char] {
    match role {
        Role::A => &spec.a,
        Role::B => &spec.b,
        Role::C => &spec.c,
    }
}
