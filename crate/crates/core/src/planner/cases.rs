//! Enumeration of every single-mode contraction between operands of given
//! orders.

use std::fmt;

use super::{plan_single_mode, Strategy};
use crate::error::Result;
use crate::layout::Layout;
use crate::notation::ContractionSpec;

/// Output labels in order; `k` is reserved for the contracted label.
const FREE_LABELS: &str = "mnpqrstuvwxyzabcdefghijlo";
const CONTRACTED: char = 'k';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseClass {
    /// One GEMM call suffices.
    SingleGemm,
    /// One strided batched GEMM (possibly nested) suffices.
    StridedBatched,
    /// Every batching choice would batch an operand's unit-stride mode.
    Exceptional,
}

impl fmt::Display for CaseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseClass::SingleGemm => "single-gemm",
            CaseClass::StridedBatched => "strided-batched",
            CaseClass::Exceptional => "exceptional",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseDescriptor {
    /// `family.variant`, both 1-based.
    pub id: String,
    pub family: usize,
    pub variant: usize,
    pub a: Vec<char>,
    pub b: Vec<char>,
    pub c: Vec<char>,
    pub class: CaseClass,
}

impl CaseDescriptor {
    pub fn spec(&self) -> ContractionSpec {
        ContractionSpec { a: self.a.clone(), b: self.b.clone(), c: self.c.clone(), alpha: 1.0, beta: 0.0 }
    }

    /// Expression text, e.g. `C[mnp] = A[mk] * B[knp]`.
    pub fn expression(&self) -> String {
        self.spec().to_string()
    }

    /// A single GEMM can evaluate the case.
    pub fn gemm_capable(&self) -> bool {
        self.class == CaseClass::SingleGemm
    }

    /// A single strided batched GEMM without extended operands can
    /// evaluate the case (a single GEMM is a batch of one).
    pub fn batched_capable(&self) -> bool {
        self.class != CaseClass::Exceptional
    }
}

/// All ordered arrangements of `k` items drawn from `items`, in
/// lexicographic order of positions.
fn arrangements(items: &[char], k: usize) -> Vec<Vec<char>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        let rest: Vec<char> = items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &c)| c).collect();
        for mut tail in arrangements(&rest, k - 1) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

fn with_contracted(free: &[char], pos: usize) -> Vec<char> {
    let mut v = free.to_vec();
    v.insert(pos, CONTRACTED);
    v
}

/// Every single-mode contraction `C = A B` with `A` of order `order_a` and
/// `B` of order `order_b`; there are `(order_a + order_b - 2)! * order_a *
/// order_b` of them. Families index the pattern of `A`, variants the
/// pattern of `B`; for orders (2, 3) the numbering is `1.1 = A[mk] B[knp]`
/// through `6.6 = A[kp] B[nmk]`.
pub fn enumerate_cases(order_a: usize, order_b: usize) -> Vec<CaseDescriptor> {
    if order_a == 0 || order_b == 0 || order_a + order_b - 2 > FREE_LABELS.len() {
        return Vec::new();
    }
    let c: Vec<char> = FREE_LABELS.chars().take(order_a + order_b - 2).collect();
    let mut out = Vec::new();
    let mut family = 0;
    for a_free in arrangements(&c, order_a - 1) {
        for a_pos in (0..order_a).rev() {
            family += 1;
            let a = with_contracted(&a_free, a_pos);
            let remaining: Vec<char> = c.iter().copied().filter(|l| !a_free.contains(l)).collect();
            let mut variant = 0;
            for b_pos in 0..order_b {
                for b_free in arrangements(&remaining, order_b - 1) {
                    variant += 1;
                    let b = with_contracted(&b_free, b_pos);
                    let mut case = CaseDescriptor {
                        id: format!("{family}.{variant}"),
                        family,
                        variant,
                        a: a.clone(),
                        b,
                        c: c.clone(),
                        class: CaseClass::StridedBatched,
                    };
                    case.class = classify_case(&case).expect("enumerated cases are plannable");
                    out.push(case);
                }
            }
        }
    }
    out
}

/// Class of `case` for packed operands, from the strategy the planner picks.
pub fn classify_case(case: &CaseDescriptor) -> Result<CaseClass> {
    let packed = |labels: &[char]| Layout::packed(&vec![2; labels.len()]);
    let plan = plan_single_mode(&case.spec(), &packed(&case.a)?, &packed(&case.b)?, &packed(&case.c)?)?;
    Ok(match plan.strategy() {
        Strategy::FlattenedGemm => CaseClass::SingleGemm,
        Strategy::ExtendedBatched => CaseClass::Exceptional,
        _ => CaseClass::StridedBatched,
    })
}
