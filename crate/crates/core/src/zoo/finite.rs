//! Encoding of finite-state CRDT kinds into explicit [`FiniteCrdtSpec`]s.
//!
//! The encoder enumerates every state reachable from the initial state under
//! the kind's effect-level primitive operations, one named op per primitive.
//! Effect-level (not source-level) ops are the right generators for axiom
//! and group analysis: only effects are plain partial state functions, and
//! pinning add tags to a finite per-element pool turns each tagged add into
//! its own op name.
//!
//! An OR-Set remove effect is gated on the tags it carries having been
//! added: two effects where one names a tag the other creates can never be
//! delivered concurrently under causal broadcast, and partiality is how the
//! state-machine model expresses exactly that. Everything else is total.
//!
//! Unbounded kinds (counter, PN-Set) refuse: analyse those through their
//! symbolic group presentations in `groups` instead.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::kernel::FiniteCrdtSpec;
use crate::zoo::{CrdtKind, CrdtState, EffectPayload, Tag, ZooError};

/// Hard cap on enumerated states; this laboratory targets desk-scale specs.
const MAX_STATES: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinitizeError {
    #[error("{kind} has an unbounded state space; analyse it via its symbolic group presentation (see the groups module) instead")]
    Unbounded { kind: String },
    #[error("state enumeration exceeded {cap} states")]
    TooManyStates { cap: usize },
    #[error(transparent)]
    BadKind(#[from] ZooError),
}

impl CrdtKind {
    /// Encode this kind as an explicit finite spec, or refuse when the state
    /// space is unbounded.
    ///
    /// States are listed in lexicographic order of their canonical names, so
    /// iteration order (and therefore which counterexample an exhaustive
    /// check reports first) is stable across runs and refactors.
    pub fn to_finite_spec(&self) -> Result<FiniteCrdtSpec, FinitizeError> {
        self.check_params()?;
        let ops = self.finite_ops()?;

        let initial = self.initial_state();
        let mut names: HashMap<CrdtState, String> = HashMap::new();
        let mut queue = VecDeque::new();
        names.insert(initial.clone(), finite_state_name(&initial));
        queue.push_back(initial.clone());
        let mut transitions: Vec<(String, String, String)> = Vec::new();

        while let Some(state) = queue.pop_front() {
            let from = names[&state].clone();
            for op in &ops {
                if !payload_enabled(&state, &op.payload) {
                    continue;
                }
                let next = self.effect(&state, &op.payload)?;
                let to = match names.get(&next) {
                    Some(name) => name.clone(),
                    None => {
                        if names.len() >= MAX_STATES {
                            return Err(FinitizeError::TooManyStates { cap: MAX_STATES });
                        }
                        let name = finite_state_name(&next);
                        names.insert(next.clone(), name.clone());
                        queue.push_back(next);
                        name
                    }
                };
                transitions.push((from.clone(), op.name.clone(), to));
            }
        }

        let initial_name = finite_state_name(&self.initial_state());
        let mut state_names: Vec<String> = names.into_values().collect();
        state_names.sort();
        let op_names = ops.into_iter().map(|op| op.name).collect();
        Ok(FiniteCrdtSpec::new(
            self.describe(),
            state_names,
            &initial_name,
            op_names,
            transitions,
        )
        .expect("finite encoding produced an inconsistent spec"))
    }

    /// The effect-level primitive operations of a finite instance, in their
    /// canonical order.
    fn finite_ops(&self) -> Result<Vec<FiniteOp>, FinitizeError> {
        match self {
            CrdtKind::Counter | CrdtKind::PnSet { .. } => Err(FinitizeError::Unbounded {
                kind: self.describe(),
            }),
            CrdtKind::ModCounter { .. } => Ok(vec![
                FiniteOp::new("inc", EffectPayload::Inc),
                FiniteOp::new("dec", EffectPayload::Dec),
            ]),
            CrdtKind::GSet { universe } => Ok(universe
                .iter()
                .map(|e| {
                    FiniteOp::new(format!("add({e})"), EffectPayload::GSetAdd { elem: e.clone() })
                })
                .collect()),
            CrdtKind::TSet { universe } => Ok(universe
                .iter()
                .map(|e| {
                    FiniteOp::new(format!("toggle({e})"), EffectPayload::Toggle { elem: e.clone() })
                })
                .collect()),
            CrdtKind::OrSet { universe, tags } => {
                let mut ops = Vec::new();
                for e in universe {
                    for j in 0..*tags {
                        ops.push(FiniteOp::new(
                            format!("add({e},t{j})"),
                            EffectPayload::OrSetAdd {
                                elem: e.clone(),
                                tag: pool_tag(j),
                            },
                        ));
                    }
                }
                for e in universe {
                    for mask in 0..(1u64 << *tags) {
                        let set: BTreeSet<Tag> = (0..*tags)
                            .filter(|j| mask & (1 << j) != 0)
                            .map(pool_tag)
                            .collect();
                        let shown: Vec<String> =
                            set.iter().map(|t| format!("t{}", t.seq)).collect();
                        ops.push(FiniteOp::new(
                            format!("remove({e},{{{}}})", shown.join(",")),
                            EffectPayload::OrSetRemove {
                                elem: e.clone(),
                                tags: set,
                            },
                        ));
                    }
                }
                Ok(ops)
            }
            CrdtKind::Tuple(parts) => {
                let mut ops = Vec::new();
                for (k, part) in parts.iter().enumerate() {
                    for inner in part.finite_ops()? {
                        ops.push(FiniteOp::new(
                            format!("{}:{}", k + 1, inner.name),
                            EffectPayload::Component {
                                index: k,
                                payload: Box::new(inner.payload),
                            },
                        ));
                    }
                }
                Ok(ops)
            }
        }
    }
}

struct FiniteOp {
    name: String,
    payload: EffectPayload,
}

impl FiniteOp {
    fn new(name: impl Into<String>, payload: EffectPayload) -> Self {
        FiniteOp {
            name: name.into(),
            payload,
        }
    }
}

fn pool_tag(j: usize) -> Tag {
    Tag {
        replica: 0,
        seq: j as u64,
    }
}

/// Applicability gate for a payload at a state. Only OR-Set removes are
/// partial: every tag they carry must already have been added.
fn payload_enabled(state: &CrdtState, payload: &EffectPayload) -> bool {
    match (state, payload) {
        (CrdtState::OrSet { added, .. }, EffectPayload::OrSetRemove { elem, tags }) => tags
            .iter()
            .all(|t| added.contains(&(elem.clone(), *t))),
        (CrdtState::Tuple(parts), EffectPayload::Component { index, payload }) => {
            payload_enabled(&parts[*index], payload)
        }
        _ => true,
    }
}

/// Canonical state name used by the finite encoding. Same rendering as the
/// state's `Display`, except that tag-pool tags print as `t0`, `t1`, ...
fn finite_state_name(state: &CrdtState) -> String {
    match state {
        CrdtState::OrSet { added, removed } => {
            let part = |set: &BTreeSet<(String, Tag)>| {
                let items: Vec<String> = set
                    .iter()
                    .map(|(e, t)| format!("({e},t{})", t.seq))
                    .collect();
                format!("{{{}}}", items.join(","))
            };
            format!("added={} removed={}", part(added), part(removed))
        }
        CrdtState::Tuple(parts) => {
            let inner: Vec<String> = parts.iter().map(finite_state_name).collect();
            format!("({})", inner.join(","))
        }
        other => other.to_string(),
    }
}
