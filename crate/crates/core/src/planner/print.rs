//! Plan rendering, one step per line.
//!
//! ```text
//! flatten C (np)
//! flatten B (np)
//! C[m(np)] = A[mk] * B[k(np)]
//! ```

use std::fmt;

use super::{EvaluationPlan, KernelCall, PlanStep};

impl fmt::Display for KernelCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelCall::Gemm { x, y, args } => {
                write!(
                    f,
                    "{}({}, {}, m={}, n={}, k={}, {}: ld={}",
                    self.name(),
                    args.op_a.code(),
                    args.op_b.code(),
                    args.m,
                    args.n,
                    args.k,
                    x.name(),
                    args.lda
                )?;
                if args.batch_count == 1 && !self.is_extended() {
                    return write!(f, ", {}: ld={}, C: ld={})", y.name(), args.ldb, args.ldc);
                }
                write!(
                    f,
                    " lo={}, {}: ld={} lo={}, C: ld={} lo={}, batch={})",
                    args.loa,
                    y.name(),
                    args.ldb,
                    args.lob,
                    args.ldc,
                    args.loc,
                    args.batch_count
                )
            }
            KernelCall::Gemv { matrix, vector, op, m, n, lda, incx, incy } => write!(
                f,
                "gemv({}, m={m}, n={n}, {}: ld={lda}, {}: inc={incx}, C: inc={incy})",
                op.code(),
                matrix.name(),
                vector.name()
            ),
            KernelCall::Ger { x, y, m, n, incx, incy, ldc } => write!(
                f,
                "ger(m={m}, n={n}, {}: inc={incx}, {}: inc={incy}, C: ld={ldc})",
                x.name(),
                y.name()
            ),
            KernelCall::Dot { n, incx, incy } => write!(f, "dot(n={n}, A: inc={incx}, B: inc={incy})"),
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStep::Flatten { role, labels } => {
                write!(f, "flatten {} ({})", role.name(), String::from_iter(labels))
            }
            PlanStep::Loop { labels, extent, .. } => {
                write!(f, "loop [{}] < {extent}", String::from_iter(labels))
            }
            PlanStep::Permute { role, from, to, output, .. } => {
                let what = if *output { "copy back" } else { "permute" };
                write!(f, "{what} {} {} -> {}", role.name(), String::from_iter(from), String::from_iter(to))
            }
            PlanStep::Kernel { notation, .. } => f.write_str(notation),
        }
    }
}

impl fmt::Display for EvaluationPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

impl EvaluationPlan {
    /// The steps followed by the strategy and the resolved kernel call.
    pub fn describe(&self) -> String {
        format!(
            "{self}\nstrategy: {}\ntranspositions: {}\nkernel: {}",
            self.strategy,
            self.transpositions(),
            self.kernel()
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::layout::Layout;
    use crate::notation::parse_contraction;
    use crate::planner::{plan_conventional, plan_single_mode, plan_with, PermutePolicy, StrategyChoice};

    fn packed(labels: &[char]) -> Layout {
        let ext = |l: char| match l {
            'm' => 4,
            'n' => 5,
            'p' => 6,
            'q' => 7,
            _ => 3,
        };
        Layout::packed(&labels.iter().map(|&l| ext(l)).collect::<Vec<_>>()).unwrap()
    }

    fn render(expr: &str, choice: StrategyChoice) -> String {
        let s = parse_contraction(expr).unwrap();
        plan_with(&s, &packed(&s.a), &packed(&s.b), &packed(&s.c), choice).unwrap().describe()
    }

    #[test]
    fn golden_flattened() {
        assert_eq!(
            render("C[mnp] = A[mk] * B[knp]", StrategyChoice::Auto),
            "flatten C (np)\nflatten B (np)\nC[m(np)] = A[mk] * B[k(np)]\nstrategy: flattened-gemm\n\
             transpositions: 0\nkernel: gemm(N, N, m=4, n=30, k=3, A: ld=4, B: ld=3, C: ld=4)"
        );
    }

    #[test]
    fn golden_batched() {
        assert_eq!(
            render("C[mnp] = A[mk] * B[nkp]", StrategyChoice::Auto),
            "C[mn[p]] = A[mk] * B[nk[p]]^T\nstrategy: strided-batched\ntranspositions: 0\n\
             kernel: strided_batched_gemm(N, T, m=4, n=5, k=3, A: ld=4 lo=0, B: ld=5 lo=15, C: ld=4 lo=20, batch=6)"
        );
    }

    #[test]
    fn golden_nested() {
        assert_eq!(
            render("C[mnpq] = A[mkp] * B[nkq]", StrategyChoice::Auto),
            "loop [p] < 6\nC[mn[p][q]] = A[mk[p]] * B[nk[q]]^T\nstrategy: nested-batched\n\
             transpositions: 0\nkernel: strided_batched_gemm(N, T, m=4, n=5, k=3, A: ld=4 lo=0, B: ld=5 lo=15, C: ld=4 lo=120, batch=7)"
        );
    }

    #[test]
    fn golden_extended_and_gemv() {
        assert_eq!(
            render("C[mnp] = A[kp] * B[nkm]", StrategyChoice::Auto),
            "C[m[n]p] = B[[n]km]^T * A[kp]\nstrategy: extended-batched\n\
             transpositions: 0\nkernel: strided_batched_gemm_ex(EX_T, N, m=4, n=6, k=3, B: ld=5 lo=15, A: ld=3 lo=0, C: ld=20 lo=4, batch=5)"
        );
        assert_eq!(
            render("C[mnp] = A[kp] * B[nkm]", StrategyChoice::BatchedGemv),
            "loop [p] < 6\nloop [m] < 4\nC[[m]n[p]] = B[nk[m]] * A[k[p]]\nstrategy: batched-gemv\n\
             transpositions: 0\nkernel: gemv(N, m=5, n=3, B: ld=5, A: inc=1, C: inc=4)"
        );
    }

    #[test]
    fn golden_conventional() {
        let s = parse_contraction("C[mnp] = A[km] * B[pkn]").unwrap();
        let p = plan_conventional(&s, &packed(&s.a), &packed(&s.b), &packed(&s.c), PermutePolicy::Naive)
            .unwrap();
        assert_eq!(
            p.to_string(),
            "permute A km -> mk\npermute B pkn -> kpn\npermute C mnp -> mpn\nC[m(pn)] = A[mk] * B[k(pn)]\n\
             copy back C mpn -> mnp"
        );
        let p = plan_single_mode(&s, &packed(&s.a), &packed(&s.b), &packed(&s.c)).unwrap();
        assert_eq!(p.to_string(), "C[m[n]p] = A[km]^T * B[pk[n]]^T");
    }
}
