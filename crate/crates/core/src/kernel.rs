//! Finite state-machine model of an operation-based CRDT.
//!
//! A [`FiniteCrdtSpec`] is an explicit finite set of states, a distinguished
//! initial state, and a finite set of named primitive operations, each a
//! *partial* function on states. An [`Action`] is a finite sequence of
//! primitive operations, applied left to right; the empty action is the
//! identity.
//!
//! Partiality is a first-class domain answer: applying an operation where it
//! is undefined yields [`ApplyResult::Undefined`], not an error. Errors are
//! reserved for malformed input, such as unknown state or operation names.
//! Dangling transition endpoints cannot exist at all: construction rejects
//! transitions that mention unknown states or operations.
//!
//! States and operations are opaque names. Every concrete CRDT that wants to
//! be analysed encodes itself into this representation (see
//! `zoo::CrdtKind::to_finite_spec`), so one analyzer serves them all.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

/// Index of a state within a [`FiniteCrdtSpec`].
///
/// Ids are only meaningful for the spec that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub(crate) usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a primitive operation within a [`FiniteCrdtSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub(crate) usize);

impl OpId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A finite sequence of primitive operations.
///
/// The empty action is the identity: applying it leaves every state fixed.
/// Concatenation is associative with the empty action as unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Action(Vec<OpId>);

impl Action {
    /// The empty action.
    pub fn empty() -> Self {
        Action(Vec::new())
    }

    pub fn single(op: OpId) -> Self {
        Action(vec![op])
    }

    pub fn from_ops(ops: Vec<OpId>) -> Self {
        Action(ops)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ops(&self) -> &[OpId] {
        &self.0
    }

    pub fn push(&mut self, op: OpId) {
        self.0.push(op);
    }

    /// Concatenation: `a.concat(&b)` applies `a` first, then `b`.
    pub fn concat(&self, other: &Action) -> Action {
        let mut ops = self.0.clone();
        ops.extend_from_slice(&other.0);
        Action(ops)
    }

    /// Render as comma-separated op names of `spec`.
    pub fn render(&self, spec: &FiniteCrdtSpec) -> String {
        self.0
            .iter()
            .map(|&op| spec.op_name(op))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Result of applying an operation or action to a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyResult {
    /// The whole sequence was defined; this is the resulting state.
    Defined(StateId),
    /// The sequence was undefined. `failed_at` is the number of operations
    /// that did apply before the first undefined one (so every proper prefix
    /// of length `failed_at` was defined).
    Undefined { failed_at: usize },
}

impl ApplyResult {
    pub fn state(self) -> Option<StateId> {
        match self {
            ApplyResult::Defined(s) => Some(s),
            ApplyResult::Undefined { .. } => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, ApplyResult::Defined(_))
    }
}

/// Errors rejected at spec construction time.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("spec has no states")]
    EmptyStates,
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("duplicate operation name `{0}`")]
    DuplicateOp(String),
    #[error("initial state `{0}` is not in the state list")]
    UnknownInitial(String),
    #[error("transition references unknown state `{0}`")]
    UnknownState(String),
    #[error("transition references unknown operation `{0}`")]
    UnknownOp(String),
    #[error("conflicting transitions for state `{state}` under `{op}`")]
    ConflictingTransition { state: String, op: String },
}

/// Name lookup errors, distinct from [`ApplyResult::Undefined`], which is a
/// valid domain answer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
}

/// Structural validation findings for a spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationError>,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("state `{0}` is unreachable from the initial state")]
    Unreachable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationWarning {
    /// Two distinct states with identical outgoing behaviour: the same
    /// operations are defined on both and lead to the same states. The spec
    /// is not minimal, but analysis on it is still meaningful.
    #[error("states `{left}` and `{right}` are behaviourally identical")]
    BehavioralDuplicate { left: String, right: String },
}

/// An explicit finite CRDT: states, an initial state, named primitive
/// operations, and a deterministic partial transition map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteCrdtSpec {
    label: String,
    states: Vec<String>,
    ops: Vec<String>,
    initial: StateId,
    /// `transitions[state][op]`, `None` where the operation is undefined.
    transitions: Vec<Vec<Option<StateId>>>,
    state_index: HashMap<String, StateId>,
    op_index: HashMap<String, OpId>,
}

impl FiniteCrdtSpec {
    /// Build a spec from parts, rejecting duplicate names, an unknown
    /// initial state, transitions over unknown names, and conflicting
    /// transitions for the same `(state, op)` pair.
    pub fn new(
        label: impl Into<String>,
        states: Vec<String>,
        initial: &str,
        ops: Vec<String>,
        transitions: Vec<(String, String, String)>,
    ) -> Result<Self, SpecError> {
        if states.is_empty() {
            return Err(SpecError::EmptyStates);
        }
        let mut state_index = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if state_index.insert(s.clone(), StateId(i)).is_some() {
                return Err(SpecError::DuplicateState(s.clone()));
            }
        }
        let mut op_index = HashMap::new();
        for (i, p) in ops.iter().enumerate() {
            if op_index.insert(p.clone(), OpId(i)).is_some() {
                return Err(SpecError::DuplicateOp(p.clone()));
            }
        }
        let initial = *state_index
            .get(initial)
            .ok_or_else(|| SpecError::UnknownInitial(initial.to_string()))?;
        let mut table = vec![vec![None; ops.len()]; states.len()];
        for (from, op, to) in &transitions {
            let from_id = *state_index
                .get(from)
                .ok_or_else(|| SpecError::UnknownState(from.clone()))?;
            let op_id = *op_index
                .get(op)
                .ok_or_else(|| SpecError::UnknownOp(op.clone()))?;
            let to_id = *state_index
                .get(to)
                .ok_or_else(|| SpecError::UnknownState(to.clone()))?;
            let slot = &mut table[from_id.0][op_id.0];
            if slot.is_some() && *slot != Some(to_id) {
                return Err(SpecError::ConflictingTransition {
                    state: from.clone(),
                    op: op.clone(),
                });
            }
            *slot = Some(to_id);
        }
        Ok(FiniteCrdtSpec {
            label: label.into(),
            states,
            ops,
            initial,
            transitions: table,
            state_index,
            op_index,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state_ids(&self) -> impl DoubleEndedIterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn op_ids(&self) -> impl DoubleEndedIterator<Item = OpId> {
        (0..self.ops.len()).map(OpId)
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn op_name(&self, op: OpId) -> &str {
        &self.ops[op.0]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn op_names(&self) -> &[String] {
        &self.ops
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_index.get(name).copied()
    }

    pub fn op_id(&self, name: &str) -> Option<OpId> {
        self.op_index.get(name).copied()
    }

    /// All defined transitions as `(from, op, to)`.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, OpId, StateId)> + '_ {
        self.transitions.iter().enumerate().flat_map(|(s, row)| {
            row.iter().enumerate().filter_map(move |(p, target)| {
                target.map(|t| (StateId(s), OpId(p), t))
            })
        })
    }

    /// Operations defined at `s`.
    pub fn defined_ops(&self, s: StateId) -> impl Iterator<Item = OpId> + '_ {
        self.transitions[s.0]
            .iter()
            .enumerate()
            .filter_map(|(p, t)| t.map(|_| OpId(p)))
    }

    /// Apply one primitive operation. Ids must come from this spec.
    pub fn apply_op(&self, s: StateId, op: OpId) -> ApplyResult {
        match self.transitions[s.0][op.0] {
            Some(t) => ApplyResult::Defined(t),
            None => ApplyResult::Undefined { failed_at: 0 },
        }
    }

    /// Apply an action left to right. On failure, `failed_at` is the index
    /// of the first operation that did not apply.
    pub fn apply_action(&self, s: StateId, a: &Action) -> ApplyResult {
        let mut cur = s;
        for (i, &op) in a.ops().iter().enumerate() {
            match self.transitions[cur.0][op.0] {
                Some(t) => cur = t,
                None => return ApplyResult::Undefined { failed_at: i },
            }
        }
        ApplyResult::Defined(cur)
    }

    /// Name-based variant of [`Self::apply_op`]; unknown names are input
    /// errors, distinct from an undefined transition.
    pub fn apply_op_named(&self, state: &str, op: &str) -> Result<ApplyResult, LookupError> {
        let s = self
            .state_id(state)
            .ok_or_else(|| LookupError::UnknownState(state.to_string()))?;
        let p = self
            .op_id(op)
            .ok_or_else(|| LookupError::UnknownOp(op.to_string()))?;
        Ok(self.apply_op(s, p))
    }

    /// Parse a sequence of op names into an [`Action`] over this spec.
    pub fn parse_action<S: AsRef<str>>(&self, names: &[S]) -> Result<Action, LookupError> {
        let mut ops = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            ops.push(
                self.op_id(n)
                    .ok_or_else(|| LookupError::UnknownOp(n.to_string()))?,
            );
        }
        Ok(Action(ops))
    }

    /// Breadth-first closure of the initial state under transitions, in
    /// visit order (ops expanded in id order).
    pub fn reachable_states(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.states.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        seen[self.initial.0] = true;
        queue.push_back(self.initial);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for target in self.transitions[s.0].iter().flatten() {
                if !seen[target.0] {
                    seen[target.0] = true;
                    queue.push_back(*target);
                }
            }
        }
        order
    }

    /// Structural validation: unreachable states are errors, behaviourally
    /// duplicate states are warnings. A spec with no errors has all its
    /// states reachable from the initial state.
    pub fn validate(&self) -> ValidationReport {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();

        let reachable = self.reachable_states();
        let mut is_reachable = vec![false; self.states.len()];
        for s in &reachable {
            is_reachable[s.0] = true;
        }
        for s in self.state_ids() {
            if !is_reachable[s.0] {
                errors.push(ValidationError::Unreachable(self.state_name(s).to_string()));
            }
        }

        // Determinism makes one-step comparison complete: two states with
        // identical rows agree on every action, and a differing row is
        // itself a distinguishing action of length 1.
        for a in 0..self.states.len() {
            for b in (a + 1)..self.states.len() {
                if self.transitions[a] == self.transitions[b] {
                    warnings.push(ValidationWarning::BehavioralDuplicate {
                        left: self.states[a].clone(),
                        right: self.states[b].clone(),
                    });
                }
            }
        }

        ValidationReport { errors, warnings }
    }

    /// A copy of this spec with only the named operations kept.
    ///
    /// States are unchanged; reachability may shrink, so validate the
    /// result if that matters.
    pub fn restrict_ops<S: AsRef<str>>(&self, keep: &[S]) -> Result<FiniteCrdtSpec, LookupError> {
        let mut kept = Vec::new();
        for name in keep {
            let name = name.as_ref();
            let op = self
                .op_id(name)
                .ok_or_else(|| LookupError::UnknownOp(name.to_string()))?;
            kept.push(op);
        }
        let ops: Vec<String> = kept.iter().map(|&op| self.ops[op.0].clone()).collect();
        let transitions = kept
            .iter()
            .flat_map(|&op| {
                self.state_ids().filter_map(move |s| {
                    self.transitions[s.0][op.0].map(|t| {
                        (
                            self.states[s.0].clone(),
                            self.ops[op.0].clone(),
                            self.states[t.0].clone(),
                        )
                    })
                })
            })
            .collect();
        // States and initial are reused verbatim and `kept` preserves
        // uniqueness, so the rebuild cannot fail.
        Ok(FiniteCrdtSpec::new(
            self.label.clone(),
            self.states.clone(),
            &self.states[self.initial.0],
            ops,
            transitions,
        )
        .expect("restrict_ops rebuilt an invalid spec"))
    }
}

impl fmt::Display for FiniteCrdtSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} states, {} ops)",
            self.label,
            self.states.len(),
            self.ops.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mod_counter(n: u64) -> FiniteCrdtSpec {
        let states: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let mut transitions = Vec::new();
        for i in 0..n {
            transitions.push((i.to_string(), "inc".into(), ((i + 1) % n).to_string()));
            transitions.push((i.to_string(), "dec".into(), ((i + n - 1) % n).to_string()));
        }
        FiniteCrdtSpec::new(
            format!("ModCounter({n})"),
            states,
            "0",
            vec!["inc".into(), "dec".into()],
            transitions,
        )
        .unwrap()
    }

    #[test]
    fn mod2_inc_wraps() {
        let spec = mod_counter(2);
        let s1 = spec.state_id("1").unwrap();
        let inc = spec.op_id("inc").unwrap();
        assert_eq!(spec.apply_op(s1, inc), ApplyResult::Defined(spec.state_id("0").unwrap()));
    }

    #[test]
    fn undefined_op_is_a_domain_answer() {
        let spec = FiniteCrdtSpec::new(
            "partial",
            vec!["a".into(), "b".into()],
            "a",
            vec!["x".into()],
            vec![("a".into(), "x".into(), "b".into())],
        )
        .unwrap();
        let b = spec.state_id("b").unwrap();
        let x = spec.op_id("x").unwrap();
        assert_eq!(spec.apply_op(b, x), ApplyResult::Undefined { failed_at: 0 });
        // Unknown names are input errors, not Undefined.
        assert_eq!(
            spec.apply_op_named("b", "y"),
            Err(LookupError::UnknownOp("y".into()))
        );
        assert_eq!(
            spec.apply_op_named("z", "x"),
            Err(LookupError::UnknownState("z".into()))
        );
    }

    #[test]
    fn empty_action_is_identity() {
        let spec = mod_counter(5);
        for s in spec.state_ids() {
            assert_eq!(spec.apply_action(s, &Action::empty()), ApplyResult::Defined(s));
        }
    }

    #[test]
    fn mod4_inc_inc_dec() {
        let spec = mod_counter(4);
        let a = spec.parse_action(&["inc", "inc", "dec"]).unwrap();
        let got = spec.apply_action(spec.state_id("0").unwrap(), &a);
        assert_eq!(got, ApplyResult::Defined(spec.state_id("1").unwrap()));
    }

    #[test]
    fn mod2_inc_inc_wraps_to_start() {
        let spec = mod_counter(2);
        let a = spec.parse_action(&["inc", "inc"]).unwrap();
        let s0 = spec.state_id("0").unwrap();
        assert_eq!(spec.apply_action(s0, &a), ApplyResult::Defined(s0));
    }

    #[test]
    fn apply_action_reports_first_failing_prefix() {
        // inc defined on 0..=2, undefined at 3.
        let states: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let transitions = (0..3)
            .map(|i| (i.to_string(), "inc".to_string(), (i + 1).to_string()))
            .collect();
        let spec =
            FiniteCrdtSpec::new("bounded", states, "0", vec!["inc".into()], transitions).unwrap();
        let a = spec.parse_action(&["inc", "inc", "inc", "inc", "inc"]).unwrap();
        assert_eq!(
            spec.apply_action(spec.state_id("0").unwrap(), &a),
            ApplyResult::Undefined { failed_at: 3 }
        );
    }

    #[test]
    fn concatenation_splits() {
        let spec = mod_counter(6);
        let ab = spec.parse_action(&["inc", "dec", "inc", "inc"]).unwrap();
        let a = spec.parse_action(&["inc", "dec"]).unwrap();
        let b = spec.parse_action(&["inc", "inc"]).unwrap();
        assert_eq!(a.concat(&b), ab);
        for s in spec.state_ids() {
            let direct = spec.apply_action(s, &ab).state().unwrap();
            let mid = spec.apply_action(s, &a).state().unwrap();
            assert_eq!(spec.apply_action(mid, &b).state().unwrap(), direct);
        }
    }

    #[test]
    fn prefix_closure_on_partial_spec() {
        // If s.ab is defined then s.a is defined, exhaustively, on a spec
        // with genuinely partial ops.
        let states: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let transitions = (0..3)
            .map(|i| (i.to_string(), "inc".to_string(), (i + 1).to_string()))
            .collect();
        let spec =
            FiniteCrdtSpec::new("bounded", states, "0", vec!["inc".into()], transitions).unwrap();
        let actions = enumerate_actions(&spec, 4);
        for s in spec.state_ids() {
            for ab in &actions {
                if spec.apply_action(s, ab).is_defined() {
                    for cut in 0..=ab.len() {
                        let prefix = Action::from_ops(ab.ops()[..cut].to_vec());
                        assert!(spec.apply_action(s, &prefix).is_defined());
                    }
                }
            }
        }
    }

    #[test]
    fn validate_mod3_clean() {
        let report = mod_counter(3).validate();
        assert!(report.errors.is_empty());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn validate_flags_unreachable_state() {
        let spec = FiniteCrdtSpec::new(
            "island",
            vec!["a".into(), "b".into(), "island".into()],
            "a",
            vec!["x".into()],
            vec![
                ("a".into(), "x".into(), "b".into()),
                ("b".into(), "x".into(), "a".into()),
            ],
        )
        .unwrap();
        let report = spec.validate();
        assert_eq!(
            report.errors,
            vec![ValidationError::Unreachable("island".into())]
        );
        let reachable = spec.reachable_states();
        assert_eq!(reachable.len(), 2);
    }

    #[test]
    fn validate_warns_on_behavioral_duplicates() {
        // s1 and s2 have identical outgoing behaviour (x back to s0); s0 is
        // distinguished by having y defined.
        let spec = FiniteCrdtSpec::new(
            "dup",
            vec!["s0".into(), "s1".into(), "s2".into()],
            "s0",
            vec!["x".into(), "y".into()],
            vec![
                ("s0".into(), "x".into(), "s1".into()),
                ("s0".into(), "y".into(), "s2".into()),
                ("s1".into(), "x".into(), "s0".into()),
                ("s2".into(), "x".into(), "s0".into()),
            ],
        )
        .unwrap();
        let report = spec.validate();
        assert!(report.errors.is_empty());
        assert_eq!(
            report.warnings,
            vec![ValidationWarning::BehavioralDuplicate {
                left: "s1".into(),
                right: "s2".into(),
            }]
        );

        // Independent oracle: compare every pair of states on every
        // nonempty action up to length |states|, by definedness and literal
        // result.
        let actions = enumerate_actions(&spec, spec.num_states());
        let mut dup_pairs = Vec::new();
        for a in spec.state_ids() {
            for b in spec.state_ids() {
                if b <= a {
                    continue;
                }
                let same = actions.iter().filter(|act| !act.is_empty()).all(|act| {
                    spec.apply_action(a, act) == spec.apply_action(b, act)
                });
                if same {
                    dup_pairs.push((a, b));
                }
            }
        }
        assert_eq!(dup_pairs.len(), report.warnings.len());
        assert_eq!(
            dup_pairs,
            vec![(spec.state_id("s1").unwrap(), spec.state_id("s2").unwrap())]
        );
    }

    #[test]
    fn reachable_equals_states_iff_validation_passes() {
        let spec = mod_counter(7);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.reachable_states().len(), spec.num_states());
    }

    #[test]
    fn constructor_rejects_dangling_and_conflicts() {
        let err = FiniteCrdtSpec::new(
            "bad",
            vec!["a".into()],
            "a",
            vec!["x".into()],
            vec![("a".into(), "x".into(), "ghost".into())],
        )
        .unwrap_err();
        assert_eq!(err, SpecError::UnknownState("ghost".into()));

        let err = FiniteCrdtSpec::new(
            "bad",
            vec!["a".into(), "b".into(), "c".into()],
            "a",
            vec!["x".into()],
            vec![
                ("a".into(), "x".into(), "b".into()),
                ("a".into(), "x".into(), "c".into()),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SpecError::ConflictingTransition { .. }));
    }

    #[test]
    fn restrict_ops_drops_transitions() {
        let spec = mod_counter(5).restrict_ops(&["inc"]).unwrap();
        assert_eq!(spec.op_names(), &["inc".to_string()]);
        assert_eq!(spec.num_states(), 5);
        assert!(spec.validate().is_ok());
        assert!(spec.op_id("dec").is_none());
    }

    /// All actions over `spec`'s ops with length 0..=max_len.
    fn enumerate_actions(spec: &FiniteCrdtSpec, max_len: usize) -> Vec<Action> {
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
}
