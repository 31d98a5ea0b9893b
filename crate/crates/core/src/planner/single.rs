//! Transpose-free planning for contractions with one contracted label.

use std::collections::BTreeSet;

use super::{label_extents, labels_of, EvaluationPlan, KernelCall, PlanStep, Role, Strategy, StrategyChoice};
use crate::blas::{KernelArgs, Op};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::notation::ContractionSpec;

#[derive(Clone, Copy, Debug)]
struct Mode {
    label: char,
    extent: usize,
    stride: usize,
}

/// A maximal run of output modes that is contiguous, identically ordered and
/// flattenable both in `C` and in the operand that carries it.
#[derive(Clone, Debug)]
struct Group {
    labels: Vec<char>,
    extent: usize,
    owner: Role,
    c_pos: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Token {
    K,
    Free(usize),
}

/// Modes that survive squeezing, per role, and the groups built from them.
struct Shape {
    modes: [Vec<Mode>; 3],
    groups: Vec<Group>,
    k: char,
    k_extent: usize,
}

impl Shape {
    fn build(spec: &ContractionSpec, layouts: [&Layout; 3], squeeze: bool) -> Result<Self> {
        let extents = label_extents(spec, layouts[0], layouts[1], layouts[2])?;
        let cls = spec.classify();
        if cls.contracted.len() != 1 {
            return Err(Error::Unsupported(format!(
                "transpose-free planning needs exactly one contracted label, found {}",
                cls.contracted.len()
            )));
        }
        let k = cls.contracted[0];
        let full: [Vec<Mode>; 3] = [Role::A, Role::B, Role::C].map(|r| {
            let l = layouts[r.index()];
            labels_of(spec, r)
                .iter()
                .enumerate()
                .map(|(i, &label)| Mode { label, extent: l.dim(i), stride: l.stride(i) })
                .collect()
        });

        // Extent-1 free labels are dropped, except a tensor's first label when
        // dropping it would leave a non-unit-stride mode in front.
        let squeezable: BTreeSet<char> = spec.c.iter().copied().filter(|l| squeeze && extents[l] == 1).collect();
        let mut keep: BTreeSet<char> = BTreeSet::new();
        loop {
            let mut changed = false;
            for modes in &full {
                let Some(first) = modes.first() else { continue };
                if !squeezable.contains(&first.label) || keep.contains(&first.label) {
                    continue;
                }
                let lead = modes.iter().find(|m| !squeezable.contains(&m.label) || keep.contains(&m.label));
                if lead.is_some_and(|m| m.stride != 1) {
                    keep.insert(first.label);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let modes = full.map(|v| {
            v.into_iter()
                .filter(|m| !squeezable.contains(&m.label) || keep.contains(&m.label))
                .collect::<Vec<_>>()
        });

        let pos = |role: Role, label: char| modes[role.index()].iter().position(|m| m.label == label);
        let cm = &modes[Role::C.index()];
        let mut groups = Vec::new();
        let mut i = 0;
        while i < cm.len() {
            let owner = if pos(Role::A, cm[i].label).is_some() { Role::A } else { Role::B };
            let om = &modes[owner.index()];
            let mut labels = vec![cm[i].label];
            let mut extent = cm[i].extent;
            let mut j = i + 1;
            while j < cm.len() {
                let (prev, cur) = (cm[j - 1], cm[j]);
                let (Some(pp), Some(pc)) = (pos(owner, prev.label), pos(owner, cur.label)) else { break };
                let flattenable = pc == pp + 1
                    && cur.stride == prev.stride * prev.extent
                    && om[pc].stride == om[pp].stride * om[pp].extent;
                if !flattenable {
                    break;
                }
                labels.push(cur.label);
                extent *= cur.extent;
                j += 1;
            }
            groups.push(Group { labels, extent, owner, c_pos: i });
            i = j;
        }
        Ok(Self { modes, groups, k, k_extent: extents[&k] })
    }

    fn token(&self, label: char) -> Token {
        if label == self.k {
            Token::K
        } else {
            Token::Free(self.groups.iter().position(|g| g.labels.contains(&label)).expect("free label in a group"))
        }
    }

    fn leading(&self, role: Role) -> Option<Token> {
        self.modes[role.index()].first().map(|m| self.token(m.label))
    }

    /// Groups present in `role`, in storage order.
    fn free_groups(&self, role: Role) -> Vec<usize> {
        let mut out = Vec::new();
        for m in &self.modes[role.index()] {
            if let Token::Free(g) = self.token(m.label) {
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        }
        out
    }

    fn stride_of(&self, role: Role, label: char) -> usize {
        self.modes[role.index()].iter().find(|m| m.label == label).map_or(0, |m| m.stride)
    }

    fn group_stride(&self, role: Role, g: usize) -> usize {
        self.stride_of(role, self.groups[g].labels[0])
    }

    fn k_stride(&self, role: Role) -> usize {
        self.stride_of(role, self.k)
    }

    fn flatten_steps(&self) -> Vec<PlanStep> {
        let mut steps = Vec::new();
        for g in self.groups.iter().filter(|g| g.labels.len() > 1) {
            steps.push(PlanStep::Flatten { role: Role::C, labels: g.labels.clone() });
            steps.push(PlanStep::Flatten { role: g.owner, labels: g.labels.clone() });
        }
        steps
    }

    /// Outer loops over `groups`, the last output mode outermost.
    fn loop_steps(&self, mut groups: Vec<usize>) -> Vec<PlanStep> {
        groups.sort_by_key(|&g| std::cmp::Reverse(self.groups[g].c_pos));
        groups
            .into_iter()
            .map(|g| PlanStep::Loop {
                labels: self.groups[g].labels.clone(),
                extent: self.groups[g].extent,
                strides: [Role::A, Role::B, Role::C].map(|r| self.group_stride(r, g)),
            })
            .collect()
    }

    /// Renders `role` in storage order: flattened groups in parentheses and
    /// the `bracketed` groups in square brackets.
    fn render(&self, role: Role, bracketed: &[usize]) -> String {
        let mut out = format!("{}[", role.name());
        for m in &self.modes[role.index()] {
            match self.token(m.label) {
                Token::K => out.push(m.label),
                Token::Free(g) => {
                    let group = &self.groups[g];
                    if group.labels[0] != m.label {
                        continue;
                    }
                    let mut text: String = group.labels.iter().collect();
                    if group.labels.len() > 1 {
                        text = format!("({text})");
                    }
                    if bracketed.contains(&g) {
                        text = format!("[{text}]");
                    }
                    out.push_str(&text);
                }
            }
        }
        out.push(']');
        out
    }

    fn render_operand(&self, role: Role, bracketed: &[usize], transposed: bool) -> String {
        let mut s = self.render(role, bracketed);
        if transposed {
            s.push_str("^T");
        }
        s
    }
}

/// One way to place the groups into a strided batched GEMM call.
#[derive(Clone, Debug)]
struct Candidate {
    x: Role,
    y: Role,
    op_x: Op,
    op_y: Op,
    r: Option<usize>,
    q: Option<usize>,
    batch: Option<usize>,
    loops: Vec<usize>,
}

impl Candidate {
    fn extended(&self) -> bool {
        self.op_x.is_extended()
    }

    fn single_call(&self) -> bool {
        self.batch.is_none() && self.loops.is_empty()
    }

    /// Larger is better: one GEMM, then no extended operand, then the
    /// largest GEMM, then the largest batch, then later output positions.
    fn key(&self, s: &Shape) -> (bool, bool, usize, usize, usize, usize) {
        let ext = |g: Option<usize>| g.map_or(1, |g| s.groups[g].extent);
        let cpos = |g: Option<usize>| g.map_or(0, |g| s.groups[g].c_pos + 1);
        (
            self.single_call(),
            !self.extended(),
            ext(self.r) * ext(self.q),
            self.batch.map_or(0, |g| s.groups[g].extent),
            cpos(self.batch),
            cpos(self.q),
        )
    }

    fn strategy(&self) -> Strategy {
        if self.extended() {
            Strategy::ExtendedBatched
        } else if self.batch.is_none() {
            Strategy::FlattenedGemm
        } else if self.loops.is_empty() {
            Strategy::StridedBatched
        } else {
            Strategy::NestedBatched
        }
    }
}

fn candidates(s: &Shape) -> Vec<Candidate> {
    let r = if s.groups.is_empty() { None } else { Some(0) };
    let x = r.map_or(Role::A, |g| s.groups[g].owner);
    let y = if x == Role::A { Role::B } else { Role::A };

    let (op_x, forced_batch) = match (r, s.leading(x)) {
        (None, _) => (Op::Normal, None),
        (Some(r), Some(Token::Free(g))) if g == r => (Op::Normal, None),
        (Some(_), Some(Token::K)) => (Op::Transpose, None),
        (Some(r), Some(Token::Free(g))) => {
            let op = if s.group_stride(x, r) < s.k_stride(x) { Op::ExtendedNormal } else { Op::ExtendedTranspose };
            (op, Some(g))
        }
        (Some(_), None) => unreachable!("operands always carry the contracted label"),
    };

    let y_options: Vec<(Op, Option<usize>)> = match s.leading(y) {
        Some(Token::Free(g)) => vec![(Op::Transpose, Some(g))],
        _ => {
            let mut v: Vec<(Op, Option<usize>)> =
                s.free_groups(y).into_iter().filter(|&g| Some(g) != forced_batch).map(|g| (Op::Normal, Some(g))).collect();
            v.push((Op::Normal, None));
            v
        }
    };

    let mut out = Vec::new();
    for (op_y, q) in y_options {
        let rest: Vec<usize> = (0..s.groups.len()).filter(|&g| Some(g) != r && Some(g) != q).collect();
        if let Some(b) = forced_batch {
            let loops = rest.iter().copied().filter(|&g| g != b).collect();
            out.push(Candidate { x, y, op_x, op_y, r, q, batch: Some(b), loops });
        } else if rest.is_empty() {
            out.push(Candidate { x, y, op_x, op_y, r, q, batch: None, loops: Vec::new() });
        } else {
            for &b in &rest {
                let loops = rest.iter().copied().filter(|&g| g != b).collect();
                out.push(Candidate { x, y, op_x, op_y, r, q, batch: Some(b), loops });
            }
        }
    }
    out
}

fn materialize(spec: &ContractionSpec, layouts: [&Layout; 3], s: &Shape, c: &Candidate) -> EvaluationPlan {
    let ext = |g: Option<usize>| g.map_or(1, |g| s.groups[g].extent);
    let gs = |role: Role, g: Option<usize>| g.map_or(0, |g| s.group_stride(role, g));
    let (m, n, k) = (ext(c.r), ext(c.q), s.k_extent);
    let (lda, loa) = match c.op_x {
        Op::Normal => (s.k_stride(c.x), gs(c.x, c.batch)),
        Op::Transpose => (gs(c.x, c.r), gs(c.x, c.batch)),
        Op::ExtendedNormal => (gs(c.x, c.r), s.k_stride(c.x)),
        Op::ExtendedTranspose => (s.k_stride(c.x), gs(c.x, c.r)),
    };
    let ldb = match (c.op_y, c.q) {
        (Op::Normal, Some(q)) => s.group_stride(c.y, q),
        (Op::Normal, None) => k,
        _ => s.k_stride(c.y),
    };
    let args = KernelArgs {
        op_a: c.op_x,
        op_b: c.op_y,
        m,
        n,
        k,
        alpha: spec.alpha,
        beta: spec.beta,
        lda,
        loa,
        ldb,
        lob: gs(c.y, c.batch),
        ldc: c.q.map_or(m, |q| s.group_stride(Role::C, q)),
        loc: gs(Role::C, c.batch),
        batch_count: ext(c.batch),
    };
    let bracketed: Vec<usize> = c.batch.iter().chain(&c.loops).copied().collect();
    let notation = format!(
        "{} = {} * {}",
        s.render(Role::C, &bracketed),
        s.render_operand(c.x, &bracketed, c.op_x.is_transposed()),
        s.render_operand(c.y, &bracketed, c.op_y.is_transposed()),
    );
    let mut steps = s.flatten_steps();
    steps.extend(s.loop_steps(c.loops.clone()));
    steps.push(PlanStep::Kernel {
        call: KernelCall::Gemm { x: c.x, y: c.y, args },
        notation,
        batch: c.batch.map(|g| s.groups[g].labels.clone()),
    });
    EvaluationPlan {
        spec: spec.clone(),
        strategy: c.strategy(),
        layouts: layouts.map(Layout::clone),
        steps,
    }
}

/// GEMV over one operand's matrix, looping over every other output group.
fn plan_batched_gemv(spec: &ContractionSpec, layouts: [&Layout; 3], s: &Shape) -> EvaluationPlan {
    let leads_free = |r: Role| matches!(s.leading(r), Some(Token::Free(_)));
    let matrix = [Role::A, Role::B]
        .into_iter()
        .find(|&r| leads_free(r))
        .or_else(|| [Role::A, Role::B].into_iter().find(|&r| !s.free_groups(r).is_empty()))
        .unwrap_or(Role::A);
    let vector = if matrix == Role::A { Role::B } else { Role::A };
    let k = s.k_extent;
    let (op, f, rows, cols, lda) = match s.leading(matrix) {
        Some(Token::Free(g)) => (Op::Normal, Some(g), s.groups[g].extent, k, s.k_stride(matrix)),
        _ => match s.free_groups(matrix).first() {
            Some(&g) => (Op::Transpose, Some(g), k, s.groups[g].extent, s.group_stride(matrix, g)),
            None => (Op::Transpose, None, k, 1, k),
        },
    };
    let loops: Vec<usize> = (0..s.groups.len()).filter(|&g| Some(g) != f).collect();
    let call = KernelCall::Gemv {
        matrix,
        vector,
        op,
        m: rows,
        n: cols,
        lda,
        incx: s.k_stride(vector),
        incy: f.map_or(1, |g| s.group_stride(Role::C, g)),
    };
    let notation = format!(
        "{} = {} * {}",
        s.render(Role::C, &loops),
        s.render_operand(matrix, &loops, op.is_transposed()),
        s.render(vector, &loops),
    );
    let mut steps = s.flatten_steps();
    steps.extend(s.loop_steps(loops));
    steps.push(PlanStep::Kernel { call, notation, batch: None });
    EvaluationPlan {
        spec: spec.clone(),
        strategy: Strategy::BatchedGemv,
        layouts: layouts.map(Layout::clone),
        steps,
    }
}

/// The preferred transpose-free plan.
pub fn plan_single_mode(spec: &ContractionSpec, la: &Layout, lb: &Layout, lc: &Layout) -> Result<EvaluationPlan> {
    plan_with(spec, la, lb, lc, StrategyChoice::Auto)
}

/// Plans under a strategy restriction. Errors with
/// [`Error::Unsupported`] when no plan of the requested kind exists.
pub fn plan_with(
    spec: &ContractionSpec,
    la: &Layout,
    lb: &Layout,
    lc: &Layout,
    choice: StrategyChoice,
) -> Result<EvaluationPlan> {
    if choice == StrategyChoice::Conventional {
        return super::plan_conventional(spec, la, lb, lc, super::PermutePolicy::Optimized);
    }
    let layouts = [la, lb, lc];
    let shape = Shape::build(spec, layouts, true)?;
    if choice == StrategyChoice::BatchedGemv {
        return Ok(plan_batched_gemv(spec, layouts, &shape));
    }
    let allowed = |c: &Candidate| match choice {
        StrategyChoice::Batched => !c.extended(),
        StrategyChoice::Extended => c.extended(),
        StrategyChoice::Flattened => c.single_call() && !c.extended(),
        _ => true,
    };
    let best = |shape: &Shape| candidates(shape).into_iter().filter(allowed).max_by_key(|c| c.key(shape));
    // An explicit extended request keeps extent-1 modes so the kernel form
    // follows the index structure.
    if choice == StrategyChoice::Extended {
        let full = Shape::build(spec, layouts, false)?;
        if let Some(c) = best(&full) {
            return Ok(materialize(spec, layouts, &full, &c));
        }
    }
    let chosen = best(&shape).ok_or_else(|| Error::Unsupported(format!("no {choice:?} plan exists for {spec}")))?;
    Ok(materialize(spec, layouts, &shape, &chosen))
}
