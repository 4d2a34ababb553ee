//! Concrete operation-based CRDTs.
//!
//! Each kind splits a user-facing *source* operation into a *prepare* step
//! (run once, at the replica that issues the operation, reading its local
//! state) and an *effect* payload (the pure state transformer broadcast to
//! and applied at every replica). Effects are total functions of
//! `(state, payload)` for every kind; only the OR-Set's prepare is
//! state-dependent, since its remove must name the add tags it observed.
//!
//! States are plain values: every operation returns a new state, nothing is
//! mutated in place, and everything is safe to share across threads.
//!
//! Kinds with a finite state space encode themselves into a
//! [`FiniteCrdtSpec`](crate::kernel::FiniteCrdtSpec) for exhaustive analysis
//! (see [`CrdtKind::to_finite_spec`] in [`finite`]); the unbounded kinds
//! (counter, PN-Set) refuse and are instead handled through symbolic group
//! presentations in `groups`.

mod finite;

pub use finite::FinitizeError;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Unique identifier attached to each OR-Set add: the issuing replica plus
/// that replica's message sequence number, so no coordination or randomness
/// is needed for freshness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub replica: u64,
    pub seq: u64,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.replica, self.seq)
    }
}

/// A CRDT kind together with its parameters.
///
/// Universes are kept sorted and deduplicated; use the constructors rather
/// than building variants by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrdtKind {
    /// Unbounded integer counter with increment and decrement.
    Counter,
    /// Counter modulo `modulus` (`modulus >= 1`); increment wraps around.
    ModCounter { modulus: u64 },
    /// Grow-only set over a fixed element universe.
    GSet { universe: Vec<String> },
    /// Add-wins observed-remove set. `tags` is the size of the per-element
    /// tag pool used when encoding a finite instance; replication allocates
    /// fresh tags dynamically and ignores it.
    OrSet { universe: Vec<String>, tags: usize },
    /// Per-element signed counters; an element is present when its count is
    /// strictly positive.
    PnSet { universe: Vec<String> },
    /// Set where add and remove both toggle membership.
    TSet { universe: Vec<String> },
    /// Product of component CRDTs acting independently.
    Tuple(Vec<CrdtKind>),
}

fn canonical_universe<S: Into<String>, I: IntoIterator<Item = S>>(elems: I) -> Vec<String> {
    let set: BTreeSet<String> = elems.into_iter().map(Into::into).collect();
    set.into_iter().collect()
}

impl CrdtKind {
    pub fn counter() -> Self {
        CrdtKind::Counter
    }

    pub fn mod_counter(modulus: u64) -> Self {
        CrdtKind::ModCounter { modulus }
    }

    pub fn gset<S: Into<String>, I: IntoIterator<Item = S>>(universe: I) -> Self {
        CrdtKind::GSet {
            universe: canonical_universe(universe),
        }
    }

    pub fn orset<S: Into<String>, I: IntoIterator<Item = S>>(universe: I, tags: usize) -> Self {
        CrdtKind::OrSet {
            universe: canonical_universe(universe),
            tags,
        }
    }

    pub fn pnset<S: Into<String>, I: IntoIterator<Item = S>>(universe: I) -> Self {
        CrdtKind::PnSet {
            universe: canonical_universe(universe),
        }
    }

    pub fn tset<S: Into<String>, I: IntoIterator<Item = S>>(universe: I) -> Self {
        CrdtKind::TSet {
            universe: canonical_universe(universe),
        }
    }

    pub fn tuple<I: IntoIterator<Item = CrdtKind>>(components: I) -> Self {
        CrdtKind::Tuple(components.into_iter().collect())
    }

    /// Check kind parameters (moduli, universe canonicity), recursively.
    pub fn check_params(&self) -> Result<(), ZooError> {
        match self {
            CrdtKind::Counter => Ok(()),
            CrdtKind::ModCounter { modulus } => {
                if *modulus == 0 {
                    Err(ZooError::BadParams("modulus must be at least 1".into()))
                } else {
                    Ok(())
                }
            }
            CrdtKind::GSet { universe }
            | CrdtKind::OrSet { universe, .. }
            | CrdtKind::PnSet { universe }
            | CrdtKind::TSet { universe } => {
                if universe.windows(2).all(|w| w[0] < w[1]) {
                    Ok(())
                } else {
                    Err(ZooError::BadParams(
                        "universe must be sorted and free of duplicates".into(),
                    ))
                }
            }
            CrdtKind::Tuple(parts) => parts.iter().try_for_each(CrdtKind::check_params),
        }
    }

    /// Human-readable kind description, used as a spec label and in reports.
    pub fn describe(&self) -> String {
        fn set(name: &str, universe: &[String]) -> String {
            format!("{name}{{{}}}", universe.join(","))
        }
        match self {
            CrdtKind::Counter => "Counter".into(),
            CrdtKind::ModCounter { modulus } => format!("ModCounter({modulus})"),
            CrdtKind::GSet { universe } => set("G-Set", universe),
            CrdtKind::OrSet { universe, tags } => {
                format!("{}[tags={tags}]", set("OR-Set", universe))
            }
            CrdtKind::PnSet { universe } => set("PN-Set", universe),
            CrdtKind::TSet { universe } => set("T-Set", universe),
            CrdtKind::Tuple(parts) => {
                if parts.is_empty() {
                    "()".into()
                } else {
                    parts
                        .iter()
                        .map(CrdtKind::describe)
                        .collect::<Vec<_>>()
                        .join(" × ")
                }
            }
        }
    }

    /// Initial state of this kind: zero counters, empty sets.
    pub fn initial_state(&self) -> CrdtState {
        match self {
            CrdtKind::Counter => CrdtState::Counter { value: 0 },
            CrdtKind::ModCounter { modulus } => CrdtState::ModCounter {
                value: 0,
                modulus: *modulus,
            },
            CrdtKind::GSet { .. } => CrdtState::GSet {
                members: BTreeSet::new(),
            },
            CrdtKind::OrSet { .. } => CrdtState::OrSet {
                added: BTreeSet::new(),
                removed: BTreeSet::new(),
            },
            CrdtKind::PnSet { .. } => CrdtState::PnSet {
                counts: BTreeMap::new(),
            },
            CrdtKind::TSet { .. } => CrdtState::TSet {
                members: BTreeSet::new(),
            },
            CrdtKind::Tuple(parts) => {
                CrdtState::Tuple(parts.iter().map(CrdtKind::initial_state).collect())
            }
        }
    }

    fn universe(&self) -> Option<&[String]> {
        match self {
            CrdtKind::GSet { universe }
            | CrdtKind::OrSet { universe, .. }
            | CrdtKind::PnSet { universe }
            | CrdtKind::TSet { universe } => Some(universe),
            _ => None,
        }
    }

    fn require_element(&self, elem: &str) -> Result<(), ZooError> {
        match self.universe() {
            Some(u) if u.iter().any(|e| e == elem) => Ok(()),
            Some(_) => Err(ZooError::UnknownElement {
                elem: elem.to_string(),
                kind: self.describe(),
            }),
            None => Ok(()),
        }
    }

    /// Prepare: turn a source operation into the effect payload that will be
    /// broadcast. `tag` supplies the fresh identity for OR-Set adds; all
    /// other kinds ignore it.
    ///
    /// Only the OR-Set reads the source state: its remove collects every tag
    /// of the element that is currently visible (added and not removed).
    pub fn prepare(
        &self,
        state: &CrdtState,
        op: &SourceOp,
        tag: Tag,
    ) -> Result<EffectPayload, ZooError> {
        match (self, op) {
            (CrdtKind::Counter, SourceOp::Inc) | (CrdtKind::ModCounter { .. }, SourceOp::Inc) => {
                Ok(EffectPayload::Inc)
            }
            (CrdtKind::Counter, SourceOp::Dec) | (CrdtKind::ModCounter { .. }, SourceOp::Dec) => {
                Ok(EffectPayload::Dec)
            }
            (CrdtKind::GSet { .. }, SourceOp::Add(e)) => {
                self.require_element(e)?;
                Ok(EffectPayload::GSetAdd { elem: e.clone() })
            }
            (CrdtKind::OrSet { .. }, SourceOp::Add(e)) => {
                self.require_element(e)?;
                Ok(EffectPayload::OrSetAdd {
                    elem: e.clone(),
                    tag,
                })
            }
            (CrdtKind::OrSet { .. }, SourceOp::Remove(e)) => {
                self.require_element(e)?;
                let CrdtState::OrSet { added, removed } = state else {
                    return Err(self.kind_mismatch(state));
                };
                let tags = added
                    .iter()
                    .filter(|(x, t)| x == e && !removed.contains(&(x.clone(), *t)))
                    .map(|(_, t)| *t)
                    .collect();
                Ok(EffectPayload::OrSetRemove {
                    elem: e.clone(),
                    tags,
                })
            }
            (CrdtKind::PnSet { .. }, SourceOp::Add(e)) => {
                self.require_element(e)?;
                Ok(EffectPayload::PnSetAdd { elem: e.clone() })
            }
            (CrdtKind::PnSet { .. }, SourceOp::Remove(e)) => {
                self.require_element(e)?;
                Ok(EffectPayload::PnSetRemove { elem: e.clone() })
            }
            // For a T-Set, add and remove have the same effect: both toggle.
            (CrdtKind::TSet { .. }, SourceOp::Add(e))
            | (CrdtKind::TSet { .. }, SourceOp::Remove(e))
            | (CrdtKind::TSet { .. }, SourceOp::Toggle(e)) => {
                self.require_element(e)?;
                Ok(EffectPayload::Toggle { elem: e.clone() })
            }
            (CrdtKind::Tuple(parts), SourceOp::Component(k, inner)) => {
                let part = parts.get(*k).ok_or(ZooError::BadComponent {
                    index: *k,
                    arity: parts.len(),
                })?;
                let CrdtState::Tuple(states) = state else {
                    return Err(self.kind_mismatch(state));
                };
                let payload = part.prepare(&states[*k], inner, tag)?;
                Ok(EffectPayload::Component {
                    index: *k,
                    payload: Box::new(payload),
                })
            }
            _ => Err(ZooError::InvalidSourceOp {
                kind: self.describe(),
                op: op.to_string(),
            }),
        }
    }

    /// Effect: apply a payload to a state. Total for every kind — effects
    /// always apply; errors only signal a payload that does not belong to
    /// this kind.
    pub fn effect(&self, state: &CrdtState, payload: &EffectPayload) -> Result<CrdtState, ZooError> {
        match (self, state, payload) {
            (CrdtKind::Counter, CrdtState::Counter { value }, EffectPayload::Inc) => {
                Ok(CrdtState::Counter { value: value + 1 })
            }
            (CrdtKind::Counter, CrdtState::Counter { value }, EffectPayload::Dec) => {
                Ok(CrdtState::Counter { value: value - 1 })
            }
            (
                CrdtKind::ModCounter { modulus },
                CrdtState::ModCounter { value, .. },
                EffectPayload::Inc,
            ) => Ok(CrdtState::ModCounter {
                value: (value + 1) % modulus,
                modulus: *modulus,
            }),
            (
                CrdtKind::ModCounter { modulus },
                CrdtState::ModCounter { value, .. },
                EffectPayload::Dec,
            ) => Ok(CrdtState::ModCounter {
                value: (value + modulus - 1) % modulus,
                modulus: *modulus,
            }),
            (CrdtKind::GSet { .. }, CrdtState::GSet { members }, EffectPayload::GSetAdd { elem }) => {
                let mut members = members.clone();
                members.insert(elem.clone());
                Ok(CrdtState::GSet { members })
            }
            (
                CrdtKind::OrSet { .. },
                CrdtState::OrSet { added, removed },
                EffectPayload::OrSetAdd { elem, tag },
            ) => {
                let mut added = added.clone();
                added.insert((elem.clone(), *tag));
                Ok(CrdtState::OrSet {
                    added,
                    removed: removed.clone(),
                })
            }
            (
                CrdtKind::OrSet { .. },
                CrdtState::OrSet { added, removed },
                EffectPayload::OrSetRemove { elem, tags },
            ) => {
                let mut removed = removed.clone();
                removed.extend(tags.iter().map(|t| (elem.clone(), *t)));
                Ok(CrdtState::OrSet {
                    added: added.clone(),
                    removed,
                })
            }
            (CrdtKind::PnSet { .. }, CrdtState::PnSet { counts }, EffectPayload::PnSetAdd { elem }) => {
                Ok(CrdtState::PnSet {
                    counts: bump(counts, elem, 1),
                })
            }
            (
                CrdtKind::PnSet { .. },
                CrdtState::PnSet { counts },
                EffectPayload::PnSetRemove { elem },
            ) => Ok(CrdtState::PnSet {
                counts: bump(counts, elem, -1),
            }),
            (CrdtKind::TSet { .. }, CrdtState::TSet { members }, EffectPayload::Toggle { elem }) => {
                let mut members = members.clone();
                if !members.remove(elem) {
                    members.insert(elem.clone());
                }
                Ok(CrdtState::TSet { members })
            }
            (
                CrdtKind::Tuple(parts),
                CrdtState::Tuple(states),
                EffectPayload::Component { index, payload },
            ) => {
                if *index >= parts.len() || states.len() != parts.len() {
                    return Err(ZooError::BadComponent {
                        index: *index,
                        arity: parts.len(),
                    });
                }
                let mut states = states.clone();
                states[*index] = parts[*index].effect(&states[*index], payload)?;
                Ok(CrdtState::Tuple(states))
            }
            _ => Err(ZooError::MalformedPayload {
                kind: self.describe(),
                payload: payload.to_string(),
            }),
        }
    }

    /// Membership query for the set-like kinds.
    pub fn contains(&self, state: &CrdtState, elem: &str) -> Result<bool, ZooError> {
        match (self, state) {
            (CrdtKind::GSet { .. }, CrdtState::GSet { members })
            | (CrdtKind::TSet { .. }, CrdtState::TSet { members }) => Ok(members.contains(elem)),
            (CrdtKind::OrSet { .. }, CrdtState::OrSet { added, removed }) => Ok(added
                .iter()
                .any(|(x, t)| x == elem && !removed.contains(&(x.clone(), *t)))),
            (CrdtKind::PnSet { .. }, CrdtState::PnSet { counts }) => {
                Ok(counts.get(elem).copied().unwrap_or(0) > 0)
            }
            (CrdtKind::Counter, _) | (CrdtKind::ModCounter { .. }, _) | (CrdtKind::Tuple(_), _) => {
                Err(ZooError::NoMembership {
                    kind: self.describe(),
                })
            }
            _ => Err(self.kind_mismatch(state)),
        }
    }

    fn kind_mismatch(&self, state: &CrdtState) -> ZooError {
        ZooError::KindMismatch {
            kind: self.describe(),
            state: state.to_string(),
        }
    }
}

fn bump(counts: &BTreeMap<String, i64>, elem: &str, delta: i64) -> BTreeMap<String, i64> {
    let mut counts = counts.clone();
    let next = counts.get(elem).copied().unwrap_or(0) + delta;
    if next == 0 {
        counts.remove(elem);
    } else {
        counts.insert(elem.to_string(), next);
    }
    counts
}

/// State of one CRDT replica. Canonical: PN-Set maps never store a zero
/// count, so state equality coincides with logical equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CrdtState {
    Counter { value: i64 },
    ModCounter { value: u64, modulus: u64 },
    GSet { members: BTreeSet<String> },
    OrSet {
        added: BTreeSet<(String, Tag)>,
        removed: BTreeSet<(String, Tag)>,
    },
    PnSet { counts: BTreeMap<String, i64> },
    TSet { members: BTreeSet<String> },
    Tuple(Vec<CrdtState>),
}

impl CrdtState {
    /// Counter value, for the two counter kinds.
    pub fn counter_value(&self) -> Option<i64> {
        match self {
            CrdtState::Counter { value } => Some(*value),
            CrdtState::ModCounter { value, .. } => Some(*value as i64),
            _ => None,
        }
    }

    /// Signed occurrence count of an element in a PN-Set (0 when absent).
    pub fn pn_count(&self, elem: &str) -> Option<i64> {
        match self {
            CrdtState::PnSet { counts } => Some(counts.get(elem).copied().unwrap_or(0)),
            _ => None,
        }
    }

    pub fn components(&self) -> Option<&[CrdtState]> {
        match self {
            CrdtState::Tuple(parts) => Some(parts),
            _ => None,
        }
    }
}

fn fmt_set(f: &mut fmt::Formatter<'_>, items: Vec<String>) -> fmt::Result {
    write!(f, "{{{}}}", items.join(","))
}

impl fmt::Display for CrdtState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrdtState::Counter { value } => write!(f, "{value}"),
            CrdtState::ModCounter { value, .. } => write!(f, "{value}"),
            CrdtState::GSet { members } | CrdtState::TSet { members } => {
                fmt_set(f, members.iter().cloned().collect())
            }
            CrdtState::OrSet { added, removed } => {
                write!(f, "added=")?;
                fmt_set(f, added.iter().map(|(e, t)| format!("({e},{t})")).collect())?;
                write!(f, " removed=")?;
                fmt_set(f, removed.iter().map(|(e, t)| format!("({e},{t})")).collect())
            }
            CrdtState::PnSet { counts } => {
                fmt_set(f, counts.iter().map(|(e, c)| format!("{e}:{c}")).collect())
            }
            CrdtState::Tuple(parts) => {
                let inner: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "({})", inner.join(","))
            }
        }
    }
}

/// User-facing operation submitted at one replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceOp {
    Inc,
    Dec,
    Add(String),
    Remove(String),
    Toggle(String),
    /// Operation on component `.0` (zero-based) of a tuple.
    Component(usize, Box<SourceOp>),
}

impl SourceOp {
    /// Parse the textual form used in scenario files: `inc`, `dec`,
    /// `add(A)`, `remove(A)`, `toggle(A)`, and `<k>:<op>` with a one-based
    /// component index for tuples.
    pub fn parse(text: &str) -> Result<SourceOp, ZooError> {
        let text = text.trim();
        if let Some((idx, rest)) = text.split_once(':') {
            let k: usize = idx
                .trim()
                .parse()
                .map_err(|_| ZooError::BadSourceOp(text.to_string()))?;
            if k == 0 {
                return Err(ZooError::BadSourceOp(text.to_string()));
            }
            return Ok(SourceOp::Component(k - 1, Box::new(SourceOp::parse(rest)?)));
        }
        match text {
            "inc" => return Ok(SourceOp::Inc),
            "dec" => return Ok(SourceOp::Dec),
            _ => {}
        }
        for (name, ctor) in [
            ("add", SourceOp::Add as fn(String) -> SourceOp),
            ("remove", SourceOp::Remove),
            ("toggle", SourceOp::Toggle),
        ] {
            if let Some(arg) = text
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
            {
                if arg.is_empty() {
                    return Err(ZooError::BadSourceOp(text.to_string()));
                }
                return Ok(ctor(arg.to_string()));
            }
        }
        Err(ZooError::BadSourceOp(text.to_string()))
    }
}

impl fmt::Display for SourceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceOp::Inc => write!(f, "inc"),
            SourceOp::Dec => write!(f, "dec"),
            SourceOp::Add(e) => write!(f, "add({e})"),
            SourceOp::Remove(e) => write!(f, "remove({e})"),
            SourceOp::Toggle(e) => write!(f, "toggle({e})"),
            SourceOp::Component(k, inner) => write!(f, "{}:{inner}", k + 1),
        }
    }
}

/// Effect payload broadcast to all replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EffectPayload {
    Inc,
    Dec,
    GSetAdd { elem: String },
    OrSetAdd { elem: String, tag: Tag },
    OrSetRemove { elem: String, tags: BTreeSet<Tag> },
    PnSetAdd { elem: String },
    PnSetRemove { elem: String },
    Toggle { elem: String },
    Component { index: usize, payload: Box<EffectPayload> },
}

impl fmt::Display for EffectPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectPayload::Inc => write!(f, "inc"),
            EffectPayload::Dec => write!(f, "dec"),
            EffectPayload::GSetAdd { elem }
            | EffectPayload::PnSetAdd { elem } => write!(f, "add {elem}"),
            EffectPayload::PnSetRemove { elem } => write!(f, "remove {elem}"),
            EffectPayload::OrSetAdd { elem, tag } => write!(f, "add_{{{tag}}} {elem}"),
            EffectPayload::OrSetRemove { elem, tags } => {
                let tags: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
                write!(f, "remove_{{{}}} {elem}", tags.join(","))
            }
            EffectPayload::Toggle { elem } => write!(f, "toggle {elem}"),
            EffectPayload::Component { index, payload } => write!(f, "{}:{payload}", index + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ZooError {
    #[error("operation `{op}` is not valid for {kind}")]
    InvalidSourceOp { kind: String, op: String },
    #[error("state `{state}` does not belong to {kind}")]
    KindMismatch { kind: String, state: String },
    #[error("element `{elem}` is outside the universe of {kind}")]
    UnknownElement { elem: String, kind: String },
    #[error("component index {index} out of range for arity {arity}")]
    BadComponent { index: usize, arity: usize },
    #[error("payload `{payload}` does not belong to {kind}")]
    MalformedPayload { kind: String, payload: String },
    #[error("{kind} has no membership query")]
    NoMembership { kind: String },
    #[error("cannot parse source operation `{0}`")]
    BadSourceOp(String),
    #[error("bad kind parameters: {0}")]
    BadParams(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tag(replica: u64, seq: u64) -> Tag {
        Tag { replica, seq }
    }

    fn apply_all(kind: &CrdtKind, state: CrdtState, payloads: &[EffectPayload]) -> CrdtState {
        payloads
            .iter()
            .fold(state, |s, p| kind.effect(&s, p).unwrap())
    }

    #[test]
    fn orset_remove_prepares_observed_tags() {
        let kind = CrdtKind::orset(["A"], 1);
        let i = tag(1, 1);
        let s = apply_all(
            &kind,
            kind.initial_state(),
            &[EffectPayload::OrSetAdd {
                elem: "A".into(),
                tag: i,
            }],
        );
        let payload = kind.prepare(&s, &SourceOp::Remove("A".into()), tag(1, 2)).unwrap();
        assert_eq!(
            payload,
            EffectPayload::OrSetRemove {
                elem: "A".into(),
                tags: [i].into_iter().collect(),
            }
        );

        // Once (A, i) is also in the removed set, nothing is observed.
        let s = kind.effect(&s, &payload).unwrap();
        let payload = kind.prepare(&s, &SourceOp::Remove("A".into()), tag(1, 3)).unwrap();
        assert_eq!(
            payload,
            EffectPayload::OrSetRemove {
                elem: "A".into(),
                tags: BTreeSet::new(),
            }
        );
    }

    #[test]
    fn orset_add_after_remove_keeps_both_tags() {
        let kind = CrdtKind::orset(["A"], 1);
        let (i, j) = (tag(1, 1), (tag(1, 3)));
        let s = apply_all(
            &kind,
            kind.initial_state(),
            &[
                EffectPayload::OrSetAdd { elem: "A".into(), tag: i },
                EffectPayload::OrSetRemove {
                    elem: "A".into(),
                    tags: [i].into_iter().collect(),
                },
                EffectPayload::OrSetAdd { elem: "A".into(), tag: j },
            ],
        );
        match &s {
            CrdtState::OrSet { added, removed } => {
                assert_eq!(added.len(), 2);
                assert_eq!(removed.len(), 1);
            }
            other => panic!("unexpected state {other}"),
        }
        assert!(kind.contains(&s, "A").unwrap());
    }

    #[test]
    fn pnset_goes_negative() {
        let kind = CrdtKind::pnset(["A"]);
        let s = apply_all(
            &kind,
            kind.initial_state(),
            &[
                EffectPayload::PnSetAdd { elem: "A".into() },
                EffectPayload::PnSetRemove { elem: "A".into() },
                EffectPayload::PnSetRemove { elem: "A".into() },
            ],
        );
        assert_eq!(s.pn_count("A"), Some(-1));
        assert!(!kind.contains(&s, "A").unwrap());
        // After one more add the set is empty again.
        let s = kind.effect(&s, &EffectPayload::PnSetAdd { elem: "A".into() }).unwrap();
        assert_eq!(s, kind.initial_state());
    }

    #[test]
    fn pnset_prepare_is_state_independent() {
        let kind = CrdtKind::pnset(["A"]);
        let p = kind
            .prepare(&kind.initial_state(), &SourceOp::Add("A".into()), tag(9, 9))
            .unwrap();
        assert_eq!(p, EffectPayload::PnSetAdd { elem: "A".into() });
    }

    #[test]
    fn tset_add_then_remove_is_identity() {
        let kind = CrdtKind::tset(["A"]);
        let s0 = kind.initial_state();
        let add = kind.prepare(&s0, &SourceOp::Add("A".into()), tag(1, 1)).unwrap();
        let rem = kind.prepare(&s0, &SourceOp::Remove("A".into()), tag(1, 2)).unwrap();
        assert_eq!(add, rem);
        let s = apply_all(&kind, s0.clone(), &[add, rem]);
        assert_eq!(s, s0);
    }

    #[test]
    fn counter_inc_dec_cancels() {
        let kind = CrdtKind::counter();
        let s = apply_all(
            &kind,
            kind.initial_state(),
            &[EffectPayload::Inc, EffectPayload::Dec],
        );
        assert_eq!(s, kind.initial_state());
    }

    #[test]
    fn mod_counter_wraps_in_both_directions() {
        let kind = CrdtKind::mod_counter(3);
        let mut s = kind.initial_state();
        for _ in 0..3 {
            s = kind.effect(&s, &EffectPayload::Inc).unwrap();
        }
        assert_eq!(s, kind.initial_state());
        let s = kind.effect(&kind.initial_state(), &EffectPayload::Dec).unwrap();
        assert_eq!(s.counter_value(), Some(2));
    }

    #[test]
    fn tuple_effects_stay_in_their_component()  {
        let kind = CrdtKind::tuple([CrdtKind::mod_counter(2), CrdtKind::tset(["A"])]);
        let s0 = kind.initial_state();
        let payload = EffectPayload::Component {
            index: 0,
            payload: Box::new(EffectPayload::Inc),
        };
        let s = kind.effect(&s0, &payload).unwrap();
        let parts0 = s0.components().unwrap();
        let parts = s.components().unwrap();
        assert_ne!(parts[0], parts0[0]);
        assert_eq!(parts[1], parts0[1]);
    }

    #[test]
    fn universe_is_enforced_on_prepare() {
        let kind = CrdtKind::gset(["A", "B"]);
        let err = kind
            .prepare(&kind.initial_state(), &SourceOp::Add("Z".into()), tag(1, 1))
            .unwrap_err();
        assert!(matches!(err, ZooError::UnknownElement { .. }));
    }

    #[test]
    fn source_op_parsing_round_trips() {
        for text in ["inc", "dec", "add(A)", "remove(B)", "toggle(C)", "2:inc", "1:add(A)"] {
            let op = SourceOp::parse(text).unwrap();
            assert_eq!(op.to_string(), text);
        }
        assert!(SourceOp::parse("frobnicate").is_err());
        assert!(SourceOp::parse("add()").is_err());
        assert!(SourceOp::parse("0:inc").is_err());
    }

    #[test]
    fn contains_rejected_for_counters() {
        let kind = CrdtKind::counter();
        let err = kind.contains(&kind.initial_state(), "A").unwrap_err();
        assert!(matches!(err, ZooError::NoMembership { .. }));
    }

    /// Random source-op sequence for a PN-Set over {A, B}.
    fn pn_ops() -> impl Strategy<Value = Vec<SourceOp>> {
        prop::collection::vec(
            prop_oneof![
                prop::sample::select(vec!["A", "B"]).prop_map(|e| SourceOp::Add(e.into())),
                prop::sample::select(vec!["A", "B"]).prop_map(|e| SourceOp::Remove(e.into())),
            ],
            0..50,
        )
    }

    proptest! {
        /// The unordered-log reading of a PN-Set agrees with the canonical
        /// counter-map state on every membership query.
        #[test]
        fn pnset_log_and_counter_representations_agree(ops in pn_ops()) {
            let kind = CrdtKind::pnset(["A", "B"]);
            let mut state = kind.initial_state();
            let mut log: Vec<SourceOp> = Vec::new();
            for (i, op) in ops.iter().enumerate() {
                let payload = kind.prepare(&state, op, tag(1, i as u64 + 1)).unwrap();
                state = kind.effect(&state, &payload).unwrap();
                log.push(op.clone());
            }
            for elem in ["A", "B"] {
                let adds = log.iter().filter(|o| matches!(o, SourceOp::Add(e) if e == elem)).count() as i64;
                let removes = log.iter().filter(|o| matches!(o, SourceOp::Remove(e) if e == elem)).count() as i64;
                prop_assert_eq!(kind.contains(&state, elem).unwrap(), adds > removes);
                prop_assert_eq!(state.pn_count(elem).unwrap(), adds - removes);
            }
        }

        /// G-Sets only grow along any op sequence.
        #[test]
        fn gset_is_monotone(elems in prop::collection::vec(prop::sample::select(vec!["A", "B", "C"]), 0..30)) {
            let kind = CrdtKind::gset(["A", "B", "C"]);
            let mut state = kind.initial_state();
            let mut sizes = vec![0usize];
            for (i, e) in elems.iter().enumerate() {
                let payload = kind.prepare(&state, &SourceOp::Add(e.to_string()), tag(1, i as u64 + 1)).unwrap();
                state = kind.effect(&state, &payload).unwrap();
                if let CrdtState::GSet { members } = &state {
                    sizes.push(members.len());
                }
            }
            prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        }

        /// ModCounter(n): n increments are the identity.
        #[test]
        fn mod_counter_inc_n_times_is_identity(n in 1u64..12) {
            let kind = CrdtKind::mod_counter(n);
            let mut s = kind.initial_state();
            for _ in 0..n {
                s = kind.effect(&s, &EffectPayload::Inc).unwrap();
            }
            prop_assert_eq!(s, kind.initial_state());
        }

        /// Effects prepared concurrently from the same state commute, for
        /// every kind, including the unbounded ones.
        #[test]
        fn concurrent_effects_commute(
            seedops in prop::collection::vec(0usize..6, 0..12),
            pair in (0usize..6, 0usize..6),
        ) {
            let kinds = [
                CrdtKind::counter(),
                CrdtKind::mod_counter(4),
                CrdtKind::gset(["A", "B"]),
                CrdtKind::orset(["A", "B"], 2),
                CrdtKind::pnset(["A", "B"]),
                CrdtKind::tset(["A", "B"]),
            ];
            for kind in &kinds {
                let menu = op_menu(kind);
                // Drive the state somewhere first.
                let mut state = kind.initial_state();
                let mut seq = 0u64;
                for &i in &seedops {
                    let op = &menu[i % menu.len()];
                    seq += 1;
                    if let Ok(p) = kind.prepare(&state, op, tag(1, seq)) {
                        state = kind.effect(&state, &p).unwrap();
                    }
                }
                // Two effects prepared at the same state, applied both ways.
                let p1 = kind.prepare(&state, &menu[pair.0 % menu.len()], tag(2, 1));
                let p2 = kind.prepare(&state, &menu[pair.1 % menu.len()], tag(3, 1));
                if let (Ok(p1), Ok(p2)) = (p1, p2) {
                    let ab = kind.effect(&kind.effect(&state, &p1).unwrap(), &p2).unwrap();
                    let ba = kind.effect(&kind.effect(&state, &p2).unwrap(), &p1).unwrap();
                    prop_assert_eq!(ab, ba);
                }
            }
        }
    }

    fn op_menu(kind: &CrdtKind) -> Vec<SourceOp> {
        match kind {
            CrdtKind::Counter | CrdtKind::ModCounter { .. } => vec![SourceOp::Inc, SourceOp::Dec],
            CrdtKind::GSet { universe } => {
                universe.iter().map(|e| SourceOp::Add(e.clone())).collect()
            }
            CrdtKind::OrSet { universe, .. } | CrdtKind::PnSet { universe } => universe
                .iter()
                .flat_map(|e| [SourceOp::Add(e.clone()), SourceOp::Remove(e.clone())])
                .collect(),
            CrdtKind::TSet { universe } => {
                universe.iter().map(|e| SourceOp::Toggle(e.clone())).collect()
            }
            CrdtKind::Tuple(parts) => parts
                .iter()
                .enumerate()
                .flat_map(|(k, part)| {
                    op_menu(part)
                        .into_iter()
                        .map(move |op| SourceOp::Component(k, Box::new(op)))
                })
                .collect(),
        }
    }
}
