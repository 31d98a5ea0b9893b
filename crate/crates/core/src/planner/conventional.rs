//! Matricize-and-copy planning: permute operands into `C[IJ] = A[IK] B[KJ]`
//! form, make one BLAS call, permute the result back.

use std::collections::BTreeMap;

use super::{label_extents, labels_of, EvaluationPlan, KernelCall, PlanStep, Role, Strategy};
use crate::blas::{KernelArgs, Op};
use crate::error::Result;
use crate::layout::{Layout, ModePermutation};
use crate::notation::{kernel_family, ContractionSpec, KernelFamily};

/// How [`plan_conventional`] decides what to copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum PermutePolicy {
    /// Fewest copies: transpose flags instead of copies where possible, free
    /// and contracted label orders taken from whichever tensor avoids a
    /// copy, and no pre-copy of `C` when beta is zero.
    #[default]
    Optimized,
    /// Always `A[IK]` and `B[KJ]` with labels in the operands' own order and
    /// no transpose flags; `C` is copied in and out whenever its order
    /// differs, regardless of beta.
    Naive,
}

struct Ctx<'a> {
    spec: &'a ContractionSpec,
    layouts: [&'a Layout; 3],
    extents: BTreeMap<char, usize>,
}

impl Ctx<'_> {
    fn extent(&self, labels: &[char]) -> usize {
        labels.iter().map(|l| self.extents[l]).product()
    }

    fn stride(&self, role: Role, label: char) -> usize {
        let pos = labels_of(self.spec, role).iter().position(|&l| l == label).expect("label present");
        self.layouts[role.index()].stride(pos)
    }

    /// True when `role` stores exactly `groups` concatenated, each group
    /// addressable as one mode.
    fn matches(&self, role: Role, groups: &[&[char]]) -> bool {
        let labels = labels_of(self.spec, role);
        let want: Vec<char> = groups.iter().flat_map(|g| g.iter().copied()).collect();
        if labels != want.as_slice() {
            return false;
        }
        let layout = self.layouts[role.index()];
        let mut pos = 0;
        for g in groups {
            for i in pos + 1..pos + g.len() {
                if layout.stride(i) != layout.stride(i - 1) * layout.dim(i - 1) {
                    return false;
                }
            }
            pos += g.len();
        }
        true
    }
}

/// Stored form of an operand after planning.
struct Operand {
    role: Role,
    /// Row group then column group of the stored matrix.
    order: Vec<char>,
    /// Row labels of the stored matrix.
    rows: Vec<char>,
    copied: bool,
}

struct Choice {
    x: Operand,
    y: Operand,
    r: Vec<char>,
    q: Vec<char>,
    k: Vec<char>,
    c_copied: bool,
    copies: usize,
}

fn concat(a: &[char], b: &[char]) -> Vec<char> {
    a.iter().chain(b).copied().collect()
}

fn subsequence(from: &[char], keep: &[char]) -> Vec<char> {
    from.iter().copied().filter(|l| keep.contains(l)).collect()
}

fn choose(ctx: &Ctx, policy: PermutePolicy) -> Choice {
    let spec = ctx.spec;
    let cls = spec.classify();
    let beta_read = spec.beta != 0.0 || policy == PermutePolicy::Naive;
    let orientations: &[(Role, Role)] = match policy {
        PermutePolicy::Optimized => &[(Role::A, Role::B), (Role::B, Role::A)],
        PermutePolicy::Naive => &[(Role::A, Role::B)],
    };
    let mut best: Option<Choice> = None;
    for &(xr, yr) in orientations {
        let (x_free, y_free) = if xr == Role::A { (&cls.free_a, &cls.free_b) } else { (&cls.free_b, &cls.free_a) };
        let xl = labels_of(spec, xr);
        let yl = labels_of(spec, yr);
        let r_orders = [subsequence(&spec.c, x_free), subsequence(xl, x_free)];
        let q_orders = [subsequence(&spec.c, y_free), subsequence(yl, y_free)];
        let k_orders = [subsequence(xl, &cls.contracted), subsequence(yl, &cls.contracted)];
        let (r_orders, q_orders, k_orders) = match policy {
            PermutePolicy::Optimized => (&r_orders[..], &q_orders[..], &k_orders[..]),
            PermutePolicy::Naive => (&r_orders[1..], &q_orders[1..], &k_orders[..1]),
        };
        for r in r_orders {
            for q in q_orders {
                for k in k_orders {
                    let x = if ctx.matches(xr, &[r, k]) {
                        Operand { role: xr, order: concat(r, k), rows: r.clone(), copied: false }
                    } else if policy == PermutePolicy::Optimized && ctx.matches(xr, &[k, r]) {
                        Operand { role: xr, order: concat(k, r), rows: k.clone(), copied: false }
                    } else {
                        Operand { role: xr, order: concat(r, k), rows: r.clone(), copied: true }
                    };
                    let y = if ctx.matches(yr, &[k, q]) {
                        Operand { role: yr, order: concat(k, q), rows: k.clone(), copied: false }
                    } else if policy == PermutePolicy::Optimized && ctx.matches(yr, &[q, k]) {
                        Operand { role: yr, order: concat(q, k), rows: q.clone(), copied: false }
                    } else {
                        Operand { role: yr, order: concat(k, q), rows: k.clone(), copied: true }
                    };
                    let c_copied = !ctx.matches(Role::C, &[r, q]);
                    let copies = usize::from(x.copied)
                        + usize::from(y.copied)
                        + if c_copied { 1 + usize::from(beta_read) } else { 0 };
                    if best.as_ref().is_none_or(|b| copies < b.copies) {
                        best = Some(Choice { x, y, r: r.clone(), q: q.clone(), k: k.clone(), c_copied, copies });
                    }
                }
            }
        }
    }
    best.expect("at least one orientation")
}

fn bracket(role: Role, order: &[char], groups: &[&[char]]) -> String {
    let mut s = format!("{}[", role.name());
    let mut pos = 0;
    for g in groups.iter().filter(|g| !g.is_empty()) {
        let text: String = order[pos..pos + g.len()].iter().collect();
        if g.len() > 1 {
            s.push_str(&format!("({text})"));
        } else {
            s.push_str(&text);
        }
        pos += g.len();
    }
    s.push(']');
    s
}

/// Plans the copy-based evaluation. Works for any number of contracted
/// labels.
pub fn plan_conventional(
    spec: &ContractionSpec,
    la: &Layout,
    lb: &Layout,
    lc: &Layout,
    policy: PermutePolicy,
) -> Result<EvaluationPlan> {
    let extents = label_extents(spec, la, lb, lc)?;
    let ctx = Ctx { spec, layouts: [la, lb, lc], extents };
    let ch = choose(&ctx, policy);
    let cls = spec.classify();
    let (m, n, k) = (ctx.extent(&ch.r), ctx.extent(&ch.q), ctx.extent(&ch.k));

    // Strides of the working tensors: packed copies or the originals.
    let work_stride = |op: &Operand, label: char| -> usize {
        if op.copied {
            let pos = op.order.iter().position(|&l| l == label).expect("label present");
            op.order[..pos].iter().map(|l| ctx.extents[l]).product()
        } else {
            ctx.stride(op.role, label)
        }
    };
    // Stride of the second group of a stored matrix, i.e. its leading dimension.
    let ld = |op: &Operand| -> usize {
        match op.order.get(op.rows.len()) {
            Some(&l) => work_stride(op, l),
            None => ctx.extent(&op.rows).max(1),
        }
    };
    let c_order = concat(&ch.r, &ch.q);
    let c_stride = |label: char| -> usize {
        if ch.c_copied {
            let pos = c_order.iter().position(|&l| l == label).expect("label present");
            c_order[..pos].iter().map(|l| ctx.extents[l]).product()
        } else {
            ctx.stride(Role::C, label)
        }
    };
    let first_stride = |op: &Operand, group: &[char]| group.first().map_or(1, |&l| work_stride(op, l));
    let ldc = ch.q.first().map_or(m.max(1), |&l| c_stride(l));

    let family = kernel_family(&cls);
    let call = match family {
        KernelFamily::Dot => KernelCall::Dot {
            n: k,
            incx: first_stride(if ch.x.role == Role::A { &ch.x } else { &ch.y }, &ch.k),
            incy: first_stride(if ch.x.role == Role::B { &ch.x } else { &ch.y }, &ch.k),
        },
        KernelFamily::Ger => KernelCall::Ger {
            x: ch.x.role,
            y: ch.y.role,
            m,
            n,
            incx: first_stride(&ch.x, &ch.r),
            incy: first_stride(&ch.y, &ch.q),
            ldc,
        },
        KernelFamily::Gemv => {
            let (matrix, vector, out) = if ch.q.is_empty() { (&ch.x, &ch.y, &ch.r) } else { (&ch.y, &ch.x, &ch.q) };
            let out_first = matrix.rows.as_slice() == out.as_slice();
            let (op, rows, cols) = if out_first {
                (Op::Normal, ctx.extent(out), k)
            } else {
                (Op::Transpose, k, ctx.extent(out))
            };
            KernelCall::Gemv {
                matrix: matrix.role,
                vector: vector.role,
                op,
                m: rows,
                n: cols,
                lda: ld(matrix),
                incx: first_stride(vector, &ch.k),
                incy: out.first().map_or(1, |&l| c_stride(l)),
            }
        }
        KernelFamily::Gemm => {
            let op_x = if ch.x.rows == ch.r { Op::Normal } else { Op::Transpose };
            let op_y = if ch.y.rows == ch.k { Op::Normal } else { Op::Transpose };
            let mut args = KernelArgs::gemm(op_x, op_y, m, n, k, ld(&ch.x), ld(&ch.y), ldc);
            args = args.with_scalars(spec.alpha, spec.beta);
            KernelCall::Gemm { x: ch.x.role, y: ch.y.role, args }
        }
    };

    let mut steps = Vec::new();
    let permute = |role: Role, from: &[char], to: &[char], output: bool| PlanStep::Permute {
        role,
        from: from.to_vec(),
        to: to.to_vec(),
        perm: ModePermutation::between(from, to).expect("same label set"),
        to_dims: to.iter().map(|l| ctx.extents[l]).collect(),
        output,
    };
    for op in [&ch.x, &ch.y] {
        if op.copied {
            steps.push(permute(op.role, labels_of(spec, op.role), &op.order, false));
        }
    }
    if ch.c_copied && (spec.beta != 0.0 || policy == PermutePolicy::Naive) {
        steps.push(permute(Role::C, &spec.c, &c_order, false));
    }
    let op_groups = |op: &Operand| -> [Vec<char>; 2] {
        let (a, b) = op.order.split_at(op.rows.len());
        [a.to_vec(), b.to_vec()]
    };
    let render_op = |op: &Operand, transposed: bool| {
        let [g1, g2] = op_groups(op);
        let mut s = bracket(op.role, &op.order, &[&g1, &g2]);
        if transposed {
            s.push_str("^T");
        }
        s
    };
    let (tx, ty) = match &call {
        KernelCall::Gemm { args, .. } => (args.op_a.is_transposed(), args.op_b.is_transposed()),
        _ => (false, false),
    };
    let notation = format!(
        "{} = {} * {}",
        bracket(Role::C, &c_order, &[&ch.r, &ch.q]),
        render_op(&ch.x, tx),
        render_op(&ch.y, ty)
    );
    steps.push(PlanStep::Kernel { call, notation, batch: None });
    if ch.c_copied {
        steps.push(permute(Role::C, &c_order, &spec.c, true));
    }
    Ok(EvaluationPlan {
        spec: spec.clone(),
        strategy: Strategy::Conventional,
        layouts: [la.clone(), lb.clone(), lc.clone()],
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::parse_contraction;

    fn plan(expr: &str, policy: PermutePolicy) -> EvaluationPlan {
        let spec = parse_contraction(expr).unwrap();
        let dims = |ls: &[char]| {
            let v: Vec<usize> = ls.iter().map(|&l| 2 + (l as usize % 5)).collect();
            Layout::packed(&v).unwrap()
        };
        plan_conventional(&spec, &dims(&spec.a), &dims(&spec.b), &dims(&spec.c), policy).unwrap()
    }

    #[test]
    fn already_matricized_needs_no_copy() {
        let p = plan("C[mnp] = A[mk] * B[knp]", PermutePolicy::Optimized);
        assert_eq!(p.transpositions(), 0);
        assert_eq!(p.kernel().name(), "gemm");
        let p = plan("C[mnp] = A[mk] * B[knp]", PermutePolicy::Naive);
        assert_eq!(p.transpositions(), 0);
    }

    #[test]
    fn naive_policy_reproduces_four_copies() {
        let p = plan("C[mnp] = A[km] * B[pkn]", PermutePolicy::Naive);
        assert_eq!(p.transpositions(), 4);
        let froms: Vec<String> = p
            .steps()
            .iter()
            .filter_map(|s| match s {
                PlanStep::Permute { from, to, .. } => Some(format!("{}->{}", String::from_iter(from), String::from_iter(to))),
                _ => None,
            })
            .collect();
        assert_eq!(froms, ["km->mk", "pkn->kpn", "mnp->mpn", "mpn->mnp"]);
    }

    #[test]
    fn optimized_policy_uses_transpose_flags() {
        let p = plan("C[mnp] = A[km] * B[pkn]", PermutePolicy::Optimized);
        assert!(p.transpositions() <= 2);
        let p = plan("C[mn] = A[km] * B[nk]", PermutePolicy::Optimized);
        assert_eq!(p.transpositions(), 0);
        assert_eq!(p.notation(), "C[mn] = A[km]^T * B[nk]^T");
    }

    #[test]
    fn kernel_dispatch() {
        assert_eq!(plan("C[] = A[k] * B[k]", PermutePolicy::Optimized).kernel().name(), "dot");
        assert_eq!(plan("C[mn] = A[m] * B[n]", PermutePolicy::Optimized).kernel().name(), "ger");
        assert_eq!(plan("C[m] = A[mk] * B[k]", PermutePolicy::Optimized).kernel().name(), "gemv");
        assert_eq!(plan("C[n] = A[k] * B[kn]", PermutePolicy::Optimized).kernel().name(), "gemv");
        assert_eq!(plan("C[mn] = A[mkl] * B[lkn]", PermutePolicy::Optimized).kernel().name(), "gemm");
    }
}
