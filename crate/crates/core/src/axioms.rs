//! Exhaustive checking of the two CRDT axioms on finite specs.
//!
//! Commutativity: whenever two operations both apply in a state, both
//! compositions apply and agree. Checked by scanning every
//! `(state, op, op)` triple, so a pass is a proof for the given spec, not a
//! sample. Undoability: whenever an operation applies, some subsequent
//! action leads back. The existential over actions is unbounded, but on a
//! finite spec it is exactly graph reachability, so it is decided
//! completely rather than searched to a bound.
//!
//! The standard consequences of the axioms (here: six facts about actions
//! and two discussion-level corollaries) are checked too, over all actions
//! up to a configurable length. Those are theorems given the axioms, so
//! this is regression-grade checking rather than proof, and the bound is
//! recorded in the report.
//!
//! All scans iterate in state order, then op order, so the first reported
//! counterexample is stable across runs.

use std::collections::HashMap;
use std::collections::VecDeque;

use thiserror::Error;

use crate::kernel::{Action, ApplyResult, FiniteCrdtSpec, OpId, StateId};

/// Verdict of the commutativity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Commutativity {
    Pass,
    Fail(CommutativityViolation),
}

impl Commutativity {
    pub fn passed(&self) -> bool {
        matches!(self, Commutativity::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommutativityViolation {
    pub state: StateId,
    pub p: OpId,
    pub q: OpId,
    pub reason: CommutativityFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommutativityFailure {
    /// `s.p` and `s.q` are defined but `s.p.q` is not.
    PqUndefined,
    /// `s.p` and `s.q` are defined but `s.q.p` is not.
    QpUndefined,
    /// Both compositions are defined but land in different states.
    ResultsDiffer { pq: StateId, qp: StateId },
}

/// Verdict of the undoability check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Undoability {
    Pass,
    Fail(UndoabilityViolation),
}

impl Undoability {
    pub fn passed(&self) -> bool {
        matches!(self, Undoability::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndoabilityViolation {
    pub state: StateId,
    pub op: OpId,
    /// The state `state.op` from which `state` cannot be reached again.
    pub stuck_at: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxiomReport {
    pub commutativity: Commutativity,
    pub undoability: Undoability,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.commutativity.passed() && self.undoability.passed()
    }
}

pub fn check_axioms(spec: &FiniteCrdtSpec) -> AxiomReport {
    AxiomReport {
        commutativity: check_commutativity(spec),
        undoability: check_undoability(spec),
    }
}

/// Scan every `(s, p, q)` with `s.p` and `s.q` defined; verify `s.p.q` and
/// `s.q.p` are defined and equal. Returns the first violation in state
/// order, then op order.
pub fn check_commutativity(spec: &FiniteCrdtSpec) -> Commutativity {
    for s in spec.state_ids() {
        for p in spec.op_ids() {
            let Some(sp) = spec.apply_op(s, p).state() else {
                continue;
            };
            for q in spec.op_ids() {
                let Some(sq) = spec.apply_op(s, q).state() else {
                    continue;
                };
                let violation = |reason| {
                    Commutativity::Fail(CommutativityViolation { state: s, p, q, reason })
                };
                let Some(spq) = spec.apply_op(sp, q).state() else {
                    return violation(CommutativityFailure::PqUndefined);
                };
                let Some(sqp) = spec.apply_op(sq, p).state() else {
                    return violation(CommutativityFailure::QpUndefined);
                };
                if spq != sqp {
                    return violation(CommutativityFailure::ResultsDiffer { pq: spq, qp: sqp });
                }
            }
        }
    }
    Commutativity::Pass
}

/// For every `s` and `p` with `s.p` defined, `s` must be reachable again
/// from `s.p`. Complete on finite specs: reachability is graph search, no
/// action-length bound is involved.
pub fn check_undoability(spec: &FiniteCrdtSpec) -> Undoability {
    let reach = reachability(spec);
    for s in spec.state_ids() {
        for p in spec.op_ids() {
            if let Some(t) = spec.apply_op(s, p).state() {
                if !reach[t.index()][s.index()] {
                    return Undoability::Fail(UndoabilityViolation {
                        state: s,
                        op: p,
                        stuck_at: t,
                    });
                }
            }
        }
    }
    Undoability::Pass
}

/// `reach[from][to]`: is `to` reachable from `from` (in zero or more steps)?
fn reachability(spec: &FiniteCrdtSpec) -> Vec<Vec<bool>> {
    let n = spec.num_states();
    let mut reach = vec![vec![false; n]; n];
    for start in spec.state_ids() {
        let row = &mut reach[start.index()];
        let mut queue = VecDeque::from([start]);
        row[start.index()] = true;
        while let Some(s) = queue.pop_front() {
            for p in spec.op_ids() {
                if let Some(t) = spec.apply_op(s, p).state() {
                    if !row[t.index()] {
                        row[t.index()] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
    }
    reach
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UndoError {
    #[error("action does not apply at the given state (failed at op index {failed_at})")]
    NotApplicable { failed_at: usize },
    #[error("no undo exists; commutativity {}, undoability {}",
        if .axioms.commutativity.passed() { "passes" } else { "fails" },
        if .axioms.undoability.passed() { "passes" } else { "fails" })]
    NoUndo { axioms: AxiomReport },
}

/// Shortest action `u` with `s.a.u = s`, found breadth-first from `s.a`
/// with ops expanded in op order, so ties resolve to the lexicographically
/// least undo. Failure distinguishes invalid input (the action does not
/// apply) from a genuine absence of an undo, which can only happen when the
/// spec violates the axioms; the failing axiom check is attached.
pub fn synthesize_undo(
    spec: &FiniteCrdtSpec,
    s: StateId,
    a: &Action,
) -> Result<Action, UndoError> {
    let t = match spec.apply_action(s, a) {
        ApplyResult::Defined(t) => t,
        ApplyResult::Undefined { failed_at } => {
            return Err(UndoError::NotApplicable { failed_at })
        }
    };
    match shortest_path(spec, t, s) {
        Some(u) => Ok(u),
        None => Err(UndoError::NoUndo {
            axioms: check_axioms(spec),
        }),
    }
}

/// Shortest action from `from` to `to`, if any.
pub(crate) fn shortest_path(spec: &FiniteCrdtSpec, from: StateId, to: StateId) -> Option<Action> {
    if from == to {
        return Some(Action::empty());
    }
    let mut parent: Vec<Option<(StateId, OpId)>> = vec![None; spec.num_states()];
    let mut seen = vec![false; spec.num_states()];
    seen[from.index()] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(s) = queue.pop_front() {
        for p in spec.op_ids() {
            if let Some(t) = spec.apply_op(s, p).state() {
                if !seen[t.index()] {
                    seen[t.index()] = true;
                    parent[t.index()] = Some((s, p));
                    if t == to {
                        let mut ops = Vec::new();
                        let mut cur = to;
                        while let Some((prev, op)) = parent[cur.index()] {
                            ops.push(op);
                            cur = prev;
                        }
                        ops.reverse();
                        return Some(Action::from_ops(ops));
                    }
                    queue.push_back(t);
                }
            }
        }
    }
    None
}

/// The six standard facts about actions that follow from the axioms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fact {
    /// Concatenation respects end-state equivalence: where `u` and `v`
    /// apply, `uv` applies, and its end state depends only on the end
    /// states of `u` and `v`.
    ConcatWellDefined,
    /// If `s.a` is defined, so is `s.aa`.
    Repeatable,
    /// If `s.a` is defined, the undo applies twice from `s.a`.
    UndoTwice,
    /// If `s.a` is defined, the undo already applies at `s` itself.
    UndoBeforeDo,
    /// The undo cancels on both sides: `s.a.undo = s.undo.a = s`.
    InverseCancels,
    /// If `s.ab` is defined, `s.b` is defined on its own.
    SuffixApplies,
}

impl Fact {
    pub const ALL: [Fact; 6] = [
        Fact::ConcatWellDefined,
        Fact::Repeatable,
        Fact::UndoTwice,
        Fact::UndoBeforeDo,
        Fact::InverseCancels,
        Fact::SuffixApplies,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fact::ConcatWellDefined => "concat-well-defined",
            Fact::Repeatable => "repeatable",
            Fact::UndoTwice => "undo-twice",
            Fact::UndoBeforeDo => "undo-before-do",
            Fact::InverseCancels => "inverse-cancels",
            Fact::SuffixApplies => "suffix-applies",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactFailure {
    pub fact: Fact,
    pub state: StateId,
    pub detail: String,
}

/// Per-fact verdicts, checked over all states and all actions up to
/// `depth` ops. `failures` holds the first failure of each failing fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactsReport {
    pub depth: usize,
    pub failures: Vec<FactFailure>,
}

impl FactsReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn passed(&self, fact: Fact) -> bool {
        !self.failures.iter().any(|f| f.fact == fact)
    }
}

/// All actions of length `0..=max_len`, ordered by length then
/// lexicographically by op index.
pub fn enumerate_actions(spec: &FiniteCrdtSpec, max_len: usize) -> Vec<Action> {
    let mut all = vec![Action::empty()];
    let mut frontier = vec![Action::empty()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for a in &frontier {
            for op in spec.op_ids() {
                let mut longer = a.clone();
                longer.push(op);
                next.push(longer);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// Check the six facts over all states and all actions up to `depth` ops.
/// Runs on any spec — on one that violates the axioms, the implied facts
/// fail and say where, which is exactly the diagnostic one wants.
pub fn check_facts(spec: &FiniteCrdtSpec, depth: usize) -> FactsReport {
    let actions = enumerate_actions(spec, depth);
    // ends[s][i]: end state of actions[i] from state s, if defined.
    let ends: Vec<Vec<Option<StateId>>> = spec
        .state_ids()
        .map(|s| {
            actions
                .iter()
                .map(|a| spec.apply_action(s, a).state())
                .collect()
        })
        .collect();
    let undo = |s: StateId, a: &Action| -> Option<Action> {
        let t = spec.apply_action(s, a).state()?;
        shortest_path(spec, t, s)
    };

    let mut failures: Vec<FactFailure> = Vec::new();
    let fail = |failures: &mut Vec<FactFailure>, fact: Fact, state: StateId, detail: String| {
        if !failures.iter().any(|f| f.fact == fact) {
            failures.push(FactFailure { fact, state, detail });
        }
    };

    for s in spec.state_ids() {
        let row = &ends[s.index()];

        // Concatenation is total on applicable pairs and well-defined on
        // end-state classes: (s.u, s.v) determines s.uv.
        let mut concat: HashMap<(StateId, StateId), StateId> = HashMap::new();
        'fact1: for (ui, u) in actions.iter().enumerate() {
            let Some(su) = row[ui] else { continue };
            for (vi, v) in actions.iter().enumerate() {
                let Some(sv) = row[vi] else { continue };
                let Some(suv) = ends[su.index()][vi] else {
                    fail(
                        &mut failures,
                        Fact::ConcatWellDefined,
                        s,
                        format!(
                            "`{}` and `{}` apply at `{}` but their concatenation does not",
                            u.render(spec),
                            v.render(spec),
                            spec.state_name(s)
                        ),
                    );
                    break 'fact1;
                };
                if let Some(&prev) = concat.get(&(su, sv)) {
                    if prev != suv {
                        fail(
                            &mut failures,
                            Fact::ConcatWellDefined,
                            s,
                            format!(
                                "concatenation result at `{}` depends on the chosen representatives",
                                spec.state_name(s)
                            ),
                        );
                        break 'fact1;
                    }
                } else {
                    concat.insert((su, sv), suv);
                }
            }
        }

        for (ai, a) in actions.iter().enumerate() {
            let Some(sa) = row[ai] else { continue };

            // Fact: a applicable action can be done twice.
            if ends[sa.index()][ai].is_none() {
                fail(
                    &mut failures,
                    Fact::Repeatable,
                    s,
                    format!(
                        "`{}` applies at `{}` but not twice",
                        a.render(spec),
                        spec.state_name(s)
                    ),
                );
            }

            if a.is_empty() {
                continue;
            }
            match undo(s, a) {
                Some(u) => {
                    let uu = u.concat(&u);
                    if !spec.apply_action(sa, &uu).is_defined() {
                        fail(
                            &mut failures,
                            Fact::UndoTwice,
                            s,
                            format!(
                                "undo `{}` of `{}` does not apply twice after it",
                                u.render(spec),
                                a.render(spec)
                            ),
                        );
                    }
                    if !spec.apply_action(s, &u).is_defined() {
                        fail(
                            &mut failures,
                            Fact::UndoBeforeDo,
                            s,
                            format!(
                                "undo `{}` of `{}` does not apply before it",
                                u.render(spec),
                                a.render(spec)
                            ),
                        );
                    }
                    let au_ok = spec.apply_action(s, &a.concat(&u)) == ApplyResult::Defined(s);
                    let ua_ok = spec.apply_action(s, &u.concat(a)) == ApplyResult::Defined(s);
                    if !au_ok || !ua_ok {
                        fail(
                            &mut failures,
                            Fact::InverseCancels,
                            s,
                            format!(
                                "`{}` and its undo `{}` do not cancel at `{}`",
                                a.render(spec),
                                u.render(spec),
                                spec.state_name(s)
                            ),
                        );
                    }
                }
                None => {
                    let detail = format!("`{}` has no undo at `{}`", a.render(spec), spec.state_name(s));
                    for fact in [Fact::UndoTwice, Fact::UndoBeforeDo, Fact::InverseCancels] {
                        fail(&mut failures, fact, s, detail.clone());
                    }
                }
            }
        }

        // Fact: whatever can be performed later can be performed now.
        'fact6: for (ai, a) in actions.iter().enumerate() {
            let Some(sa) = row[ai] else { continue };
            for (bi, b) in actions.iter().enumerate() {
                if ends[sa.index()][bi].is_some() && row[bi].is_none() {
                    fail(
                        &mut failures,
                        Fact::SuffixApplies,
                        s,
                        format!(
                            "`{}` applies after `{}` at `{}` but not directly",
                            b.render(spec),
                            a.render(spec),
                            spec.state_name(s)
                        ),
                    );
                    break 'fact6;
                }
            }
        }
    }

    failures.sort_by_key(|f| Fact::ALL.iter().position(|&x| x == f.fact));
    FactsReport { depth, failures }
}

/// Totality violation: an operation defined somewhere but not everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TotalityFailure {
    pub op: OpId,
    pub defined_at: StateId,
    pub undefined_at: StateId,
}

/// An action applicable at the initial state that no state maps back from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeStateFailure {
    pub action: Action,
}

/// The two discussion-level corollaries of the axioms.
///
/// Totality — an operation valid in one state is valid in all (so, for
/// instance, a nonnegative counter whose decrement is gated on being
/// nonzero cannot satisfy the axioms). Negative states — every action `a`
/// applicable at the initial state has some state from which applying `a`
/// lands exactly on the initial state. Both are checked exhaustively; the
/// action quantifier is bounded by `depth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsequencesReport {
    pub depth: usize,
    pub totality: Option<TotalityFailure>,
    pub negative_states: Option<NegativeStateFailure>,
}

impl ConsequencesReport {
    pub fn all_pass(&self) -> bool {
        self.totality.is_none() && self.negative_states.is_none()
    }
}

pub fn check_consequences(spec: &FiniteCrdtSpec, depth: usize) -> ConsequencesReport {
    let mut totality = None;
    'ops: for p in spec.op_ids() {
        let mut defined_at = None;
        let mut undefined_at = None;
        for s in spec.state_ids() {
            if spec.apply_op(s, p).is_defined() {
                defined_at.get_or_insert(s);
            } else {
                undefined_at.get_or_insert(s);
            }
            if let (Some(d), Some(u)) = (defined_at, undefined_at) {
                totality = Some(TotalityFailure {
                    op: p,
                    defined_at: d,
                    undefined_at: u,
                });
                break 'ops;
            }
        }
    }

    let s0 = spec.initial();
    let mut negative_states = None;
    for a in enumerate_actions(spec, depth) {
        if a.is_empty() || !spec.apply_action(s0, &a).is_defined() {
            continue;
        }
        let found = spec
            .state_ids()
            .any(|s| spec.apply_action(s, &a) == ApplyResult::Defined(s0));
        if !found {
            negative_states = Some(NegativeStateFailure { action: a });
            break;
        }
    }

    ConsequencesReport {
        depth,
        totality,
        negative_states,
    }
}
