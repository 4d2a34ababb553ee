//! Deterministic replication simulator with causal delivery.
//!
//! Replicas perform source operations locally (prepare, then apply their own
//! effect), broadcast the resulting effect message, and apply remote effects
//! once causally ready. Causality is tracked with vector clocks: a message
//! carries the issuing replica's clock at send time, and a receiver buffers
//! it until every dependency has been applied. Nothing here is randomized;
//! the only pseudo-random stream is the seeded scenario generator, so every
//! run is reproducible.
//!
//! Causal delivery is a deliberate choice: OR-Set remove effects name the
//! add tags they observed and are only meaningful after those adds.
//!
//! The machinery is generic over a [`Semantics`] so that tests can inject a
//! deliberately non-commutative toy type and watch [`convergence`] flag it.

use std::collections::BTreeMap;
use std::fmt;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::zoo::{CrdtKind, CrdtState, EffectPayload, SourceOp, Tag, ZooError};

/// Replicas are numbered from 1.
pub type ReplicaId = u64;

/// Map from replica to how many of that replica's messages have been seen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VectorClock(BTreeMap<ReplicaId, u64>);

impl VectorClock {
    pub fn new() -> Self {
        VectorClock::default()
    }

    pub fn get(&self, r: ReplicaId) -> u64 {
        self.0.get(&r).copied().unwrap_or(0)
    }

    pub fn set(&mut self, r: ReplicaId, n: u64) {
        if n == 0 {
            self.0.remove(&r);
        } else {
            self.0.insert(r, n);
        }
    }

    /// Pointwise `<=`: everything in `self` has been seen by `other`.
    pub fn leq(&self, other: &VectorClock) -> bool {
        self.0.iter().all(|(&r, &n)| other.get(r) >= n)
    }

    pub fn entries(&self) -> impl Iterator<Item = (ReplicaId, u64)> + '_ {
        self.0.iter().map(|(&r, &n)| (r, n))
    }
}

impl fmt::Display for VectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|(r, n)| format!("{r}:{n}")).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

/// One broadcast effect message.
#[derive(Debug, Clone)]
pub struct OpMessage<P> {
    pub origin: ReplicaId,
    /// Per-origin sequence number, starting at 1. `(origin, seq)` is unique.
    pub seq: u64,
    /// Vector clock at the origin when the message was produced; its own
    /// entry is `seq - 1`.
    pub deps: VectorClock,
    pub payload: P,
}

/// What a CRDT kind must provide for the simulator.
pub trait Semantics {
    type State: Clone + Eq + fmt::Display;
    type SourceOp;
    type Payload: Clone + fmt::Display;

    fn initial(&self) -> Self::State;
    /// Read the source state and produce the effect to broadcast. `tag`
    /// carries the identity of the message about to be sent, which is what
    /// OR-Set adds use for freshness.
    fn prepare(
        &self,
        state: &Self::State,
        op: &Self::SourceOp,
        tag: Tag,
    ) -> Result<Self::Payload, SimError>;
    fn effect(&self, state: &Self::State, payload: &Self::Payload) -> Result<Self::State, SimError>;
}

impl Semantics for CrdtKind {
    type State = CrdtState;
    type SourceOp = SourceOp;
    type Payload = EffectPayload;

    fn initial(&self) -> CrdtState {
        self.initial_state()
    }

    fn prepare(&self, state: &CrdtState, op: &SourceOp, tag: Tag) -> Result<EffectPayload, SimError> {
        Ok(CrdtKind::prepare(self, state, op, tag)?)
    }

    fn effect(&self, state: &CrdtState, payload: &EffectPayload) -> Result<CrdtState, SimError> {
        Ok(CrdtKind::effect(self, state, payload)?)
    }
}

/// One simulated replica: its state, the causally-closed prefix of messages
/// it has applied, any buffered not-yet-ready messages, and the linear log
/// of effects it applied, in application order.
#[derive(Debug, Clone)]
pub struct ReplicaNode<S: Semantics> {
    pub id: ReplicaId,
    pub state: S::State,
    pub delivered: VectorClock,
    pending: Vec<OpMessage<S::Payload>>,
    pub applied: Vec<S::Payload>,
}

/// Outcome of offering a message to a replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Applied, plus how many buffered messages the application unblocked.
    Applied { cascaded: usize },
    /// Dependencies not met yet; buffered for later.
    Buffered,
    /// Already delivered; rejected, state unchanged.
    Duplicate,
}

impl<S: Semantics> ReplicaNode<S> {
    pub fn new(id: ReplicaId, sem: &S) -> Self {
        ReplicaNode {
            id,
            state: sem.initial(),
            delivered: VectorClock::new(),
            pending: Vec::new(),
            applied: Vec::new(),
        }
    }

    /// Perform a source operation locally: prepare against the local state,
    /// apply the effect at home, and return the message to broadcast.
    pub fn local_apply(
        &mut self,
        sem: &S,
        op: &S::SourceOp,
    ) -> Result<OpMessage<S::Payload>, SimError> {
        let seq = self.delivered.get(self.id) + 1;
        let deps = self.delivered.clone();
        let tag = Tag {
            replica: self.id,
            seq,
        };
        let payload = sem.prepare(&self.state, op, tag)?;
        self.state = sem.effect(&self.state, &payload)?;
        self.delivered.set(self.id, seq);
        self.applied.push(payload.clone());
        Ok(OpMessage {
            origin: self.id,
            seq,
            deps,
            payload,
        })
    }

    /// Offer a message. Ready messages are applied and may unblock buffered
    /// ones; messages with unmet dependencies are buffered; duplicates are
    /// rejected without touching the state.
    pub fn deliver(
        &mut self,
        sem: &S,
        msg: OpMessage<S::Payload>,
    ) -> Result<Delivery, SimError> {
        if msg.seq <= self.delivered.get(msg.origin) {
            return Ok(Delivery::Duplicate);
        }
        if !msg.deps.leq(&self.delivered) {
            self.pending.push(msg);
            return Ok(Delivery::Buffered);
        }
        self.apply_ready(sem, &msg)?;
        let cascaded = self.drain_pending(sem)?;
        Ok(Delivery::Applied { cascaded })
    }

    fn apply_ready(&mut self, sem: &S, msg: &OpMessage<S::Payload>) -> Result<(), SimError> {
        debug_assert_eq!(msg.seq, self.delivered.get(msg.origin) + 1);
        self.state = sem.effect(&self.state, &msg.payload)?;
        self.delivered.set(msg.origin, msg.seq);
        self.applied.push(msg.payload.clone());
        Ok(())
    }

    /// Apply every buffered message that has become ready, repeatedly, in
    /// `(origin, seq)` order for determinism.
    fn drain_pending(&mut self, sem: &S) -> Result<usize, SimError> {
        let mut applied = 0;
        loop {
            self.pending.sort_by_key(|m| (m.origin, m.seq));
            let ready = self.pending.iter().position(|m| {
                m.seq <= self.delivered.get(m.origin) || m.deps.leq(&self.delivered)
            });
            match ready {
                Some(i) => {
                    let msg = self.pending.remove(i);
                    if msg.seq > self.delivered.get(msg.origin) {
                        self.apply_ready(sem, &msg)?;
                        applied += 1;
                    }
                }
                None => return Ok(applied),
            }
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Rendered applied-op log.
    pub fn applied_log(&self) -> Vec<String> {
        self.applied.iter().map(|p| p.to_string()).collect()
    }
}

/// Convergence verdict over a set of replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Convergence {
    /// Same delivered message set everywhere and all states equal.
    Converged,
    /// Some replicas have not seen the same messages (not a fault).
    Undelivered,
    /// Same delivered message set but different states: the effects did not
    /// commute. This is a correctness finding, reported distinctly.
    DeliveryEqualStatesDiffer { left: ReplicaId, right: ReplicaId },
}

impl Convergence {
    pub fn is_converged(&self) -> bool {
        matches!(self, Convergence::Converged)
    }
}

/// Check both delivery equality and state equality: equal delivery with
/// unequal states is a commutativity violation, not mere lag.
pub fn convergence<S: Semantics>(nodes: &[ReplicaNode<S>]) -> Convergence {
    for pair in nodes.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.delivered != b.delivered {
            return Convergence::Undelivered;
        }
        if a.state != b.state {
            return Convergence::DeliveryEqualStatesDiffer {
                left: a.id,
                right: b.id,
            };
        }
    }
    Convergence::Converged
}

/// A replayable replication scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: CrdtKind,
    pub replicas: u64,
    /// Recorded for reproducibility metadata; the event list alone fully
    /// determines the execution.
    pub seed: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A replica performs a source op locally and broadcasts the effect.
    Local { replica: ReplicaId, op: SourceOp },
    /// Deliver message `(origin, seq)` to `replica` (buffering if not ready).
    Deliver {
        replica: ReplicaId,
        origin: ReplicaId,
        seq: u64,
    },
    /// Offer every outstanding message to every replica, draining buffers in
    /// causal order with ties broken by lowest `(origin, seq)`.
    DeliverAll,
}

/// Final states and applied-op logs of a scenario run.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub nodes: Vec<ReplicaNode<CrdtKind>>,
    pub convergence: Convergence,
}

pub fn run_scenario(sc: &Scenario) -> Result<ScenarioOutcome, SimError> {
    sc.kind.check_params().map_err(SimError::from)?;
    if sc.replicas == 0 {
        return Err(SimError::BadScenario("at least one replica required".into()));
    }
    let mut nodes: Vec<ReplicaNode<CrdtKind>> = (1..=sc.replicas)
        .map(|id| ReplicaNode::new(id, &sc.kind))
        .collect();
    let mut store: BTreeMap<(ReplicaId, u64), OpMessage<EffectPayload>> = BTreeMap::new();

    let node_index = |r: ReplicaId| -> Result<usize, SimError> {
        if r >= 1 && r <= sc.replicas {
            Ok((r - 1) as usize)
        } else {
            Err(SimError::UnknownReplica(r))
        }
    };

    for event in &sc.events {
        match event {
            Event::Local { replica, op } => {
                let msg = nodes[node_index(*replica)?].local_apply(&sc.kind, op)?;
                store.insert((msg.origin, msg.seq), msg);
            }
            Event::Deliver {
                replica,
                origin,
                seq,
            } => {
                let msg = store
                    .get(&(*origin, *seq))
                    .cloned()
                    .ok_or(SimError::UnknownMessage {
                        origin: *origin,
                        seq: *seq,
                    })?;
                nodes[node_index(*replica)?].deliver(&sc.kind, msg)?;
            }
            Event::DeliverAll => {
                for node in nodes.iter_mut() {
                    // One pass in (origin, seq) order suffices: anything not
                    // ready is buffered and drained by the cascade.
                    for msg in store.values() {
                        node.deliver(&sc.kind, msg.clone())?;
                    }
                }
            }
        }
    }

    let convergence = convergence(&nodes);
    Ok(ScenarioOutcome { nodes, convergence })
}

/// The source operations a scenario generator may pick for a kind.
pub fn op_menu(kind: &CrdtKind) -> Vec<SourceOp> {
    match kind {
        CrdtKind::Counter | CrdtKind::ModCounter { .. } => vec![SourceOp::Inc, SourceOp::Dec],
        CrdtKind::GSet { universe } => universe.iter().map(|e| SourceOp::Add(e.clone())).collect(),
        CrdtKind::OrSet { universe, .. } | CrdtKind::PnSet { universe } => universe
            .iter()
            .flat_map(|e| [SourceOp::Add(e.clone()), SourceOp::Remove(e.clone())])
            .collect(),
        CrdtKind::TSet { universe } => universe
            .iter()
            .map(|e| SourceOp::Toggle(e.clone()))
            .collect(),
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

/// Generate a random but valid scenario: local ops and deliveries at random
/// replicas, ending with `DeliverAll`. Deliveries respect per-origin order;
/// cross-origin gaps are legal and exercise the buffering path.
pub fn random_scenario(
    kind: &CrdtKind,
    replicas: u64,
    ops: usize,
    seed: u64,
) -> Result<Scenario, SimError> {
    let menu = op_menu(kind);
    if menu.is_empty() {
        return Err(SimError::BadScenario(format!(
            "{} has no source operations to sample",
            kind.describe()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut sent: BTreeMap<ReplicaId, u64> = BTreeMap::new();
    let mut offered: BTreeMap<(ReplicaId, ReplicaId), u64> = BTreeMap::new();
    let mut performed = 0;
    while performed < ops {
        let replica = rng.gen_range(1..=replicas);
        if performed == 0 || rng.gen_bool(0.5) {
            let op = menu[rng.gen_range(0..menu.len())].clone();
            events.push(Event::Local { replica, op });
            *sent.entry(replica).or_insert(0) += 1;
            performed += 1;
        } else {
            let origin = rng.gen_range(1..=replicas);
            let already = offered.get(&(replica, origin)).copied().unwrap_or(0);
            let available = sent.get(&origin).copied().unwrap_or(0);
            if origin != replica && already < available {
                events.push(Event::Deliver {
                    replica,
                    origin,
                    seq: already + 1,
                });
                offered.insert((replica, origin), already + 1);
            }
        }
    }
    events.push(Event::DeliverAll);
    Ok(Scenario {
        kind: kind.clone(),
        replicas,
        seed,
        events,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error("unknown replica {0}")]
    UnknownReplica(u64),
    #[error("no message ({origin},{seq}) has been sent")]
    UnknownMessage { origin: ReplicaId, seq: u64 },
    #[error("invalid scenario: {0}")]
    BadScenario(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local(replica: ReplicaId, op: &str) -> Event {
        Event::Local {
            replica,
            op: SourceOp::parse(op).unwrap(),
        }
    }

    fn deliver(replica: ReplicaId, origin: ReplicaId, seq: u64) -> Event {
        Event::Deliver {
            replica,
            origin,
            seq,
        }
    }

    /// First replica removes and re-adds; second removes concurrently.
    fn divergence_scenario(kind: CrdtKind) -> Scenario {
        Scenario {
            kind,
            replicas: 2,
            seed: 0,
            events: vec![
                local(1, "add(A)"),
                deliver(2, 1, 1),
                local(1, "remove(A)"),
                local(1, "add(A)"),
                local(2, "remove(A)"),
                Event::DeliverAll,
            ],
        }
    }

    #[test]
    fn local_apply_counter() {
        let kind = CrdtKind::counter();
        let mut node: ReplicaNode<CrdtKind> = ReplicaNode::new(1, &kind);
        for _ in 0..5 {
            node.local_apply(&kind, &SourceOp::Inc).unwrap();
        }
        let msg = node.local_apply(&kind, &SourceOp::Inc).unwrap();
        assert_eq!(msg.payload, EffectPayload::Inc);
        assert_eq!(node.state.counter_value(), Some(6));
        assert_eq!(msg.seq, 6);
        assert_eq!(msg.deps.get(1), 5);
    }

    #[test]
    fn local_remove_broadcasts_observed_tags() {
        let kind = CrdtKind::orset(["A"], 1);
        let mut node: ReplicaNode<CrdtKind> = ReplicaNode::new(1, &kind);
        node.local_apply(&kind, &SourceOp::Add("A".into())).unwrap();
        let msg = node
            .local_apply(&kind, &SourceOp::Remove("A".into()))
            .unwrap();
        assert_eq!(
            msg.payload,
            EffectPayload::OrSetRemove {
                elem: "A".into(),
                tags: [Tag { replica: 1, seq: 1 }].into_iter().collect(),
            }
        );
        assert!(!kind.contains(&node.state, "A").unwrap());
    }

    #[test]
    fn pnset_local_remove_goes_negative() {
        let kind = CrdtKind::pnset(["A"]);
        let mut node: ReplicaNode<CrdtKind> = ReplicaNode::new(1, &kind);
        node.local_apply(&kind, &SourceOp::Remove("A".into())).unwrap();
        assert_eq!(node.state.pn_count("A"), Some(-1));
    }

    #[test]
    fn unready_messages_buffer_then_cascade() {
        let kind = CrdtKind::counter();
        let mut a: ReplicaNode<CrdtKind> = ReplicaNode::new(1, &kind);
        let mut b: ReplicaNode<CrdtKind> = ReplicaNode::new(2, &kind);
        let m1 = a.local_apply(&kind, &SourceOp::Inc).unwrap();
        let m2 = a.local_apply(&kind, &SourceOp::Inc).unwrap();
        // m2 depends on m1; offered first, it must wait.
        assert_eq!(b.deliver(&kind, m2).unwrap(), Delivery::Buffered);
        assert_eq!(b.state.counter_value(), Some(0));
        assert_eq!(
            b.deliver(&kind, m1.clone()).unwrap(),
            Delivery::Applied { cascaded: 1 }
        );
        assert_eq!(b.state.counter_value(), Some(2));
        // Redelivery is rejected without effect.
        assert_eq!(b.deliver(&kind, m1).unwrap(), Delivery::Duplicate);
        assert_eq!(b.state.counter_value(), Some(2));
    }

    #[test]
    fn figure_divergence_orset_keeps_element() {
        let outcome = run_scenario(&divergence_scenario(CrdtKind::orset(["A"], 2))).unwrap();
        assert!(outcome.convergence.is_converged());
        for node in &outcome.nodes {
            assert!(CrdtKind::orset(["A"], 2).contains(&node.state, "A").unwrap());
        }
        // The two replicas applied the same four effects in different orders.
        assert_eq!(
            outcome.nodes[0].applied_log(),
            vec!["add_{1.1} A", "remove_{1.1} A", "add_{1.3} A", "remove_{1.1} A"]
        );
        assert_eq!(
            outcome.nodes[1].applied_log(),
            vec!["add_{1.1} A", "remove_{1.1} A", "remove_{1.1} A", "add_{1.3} A"]
        );
    }

    #[test]
    fn figure_divergence_pnset_cancels_element() {
        let kind = CrdtKind::pnset(["A"]);
        let outcome = run_scenario(&divergence_scenario(kind.clone())).unwrap();
        assert!(outcome.convergence.is_converged());
        for node in &outcome.nodes {
            assert!(!kind.contains(&node.state, "A").unwrap());
            assert_eq!(node.state.pn_count("A"), Some(0));
        }
    }

    #[test]
    fn orset_remove_tombstones_stay_inside_added() {
        // Under causal delivery the removed set never mentions an unseen add.
        let kind = CrdtKind::orset(["A", "B"], 4);
        for seed in 0..20 {
            let sc = random_scenario(&kind, 3, 30, seed).unwrap();
            let outcome = run_scenario(&sc).unwrap();
            for node in &outcome.nodes {
                if let CrdtState::OrSet { added, removed } = &node.state {
                    assert!(removed.is_subset(added));
                }
            }
        }
    }

    #[test]
    fn convergence_detects_lag_and_violation() {
        let kind = CrdtKind::counter();
        let mut a: ReplicaNode<CrdtKind> = ReplicaNode::new(1, &kind);
        let b: ReplicaNode<CrdtKind> = ReplicaNode::new(2, &kind);
        a.local_apply(&kind, &SourceOp::Inc).unwrap();
        assert_eq!(convergence(&[a, b]), Convergence::Undelivered);
    }

    /// A register whose effect is plain assignment: last writer wins by
    /// arrival order, which is not commutative.
    struct BrokenRegister;

    impl Semantics for BrokenRegister {
        type State = i64;
        type SourceOp = i64;
        type Payload = i64;

        fn initial(&self) -> i64 {
            0
        }

        fn prepare(&self, _state: &i64, op: &i64, _tag: Tag) -> Result<i64, SimError> {
            Ok(*op)
        }

        fn effect(&self, _state: &i64, payload: &i64) -> Result<i64, SimError> {
            Ok(*payload)
        }
    }

    #[test]
    fn non_commutative_effects_are_flagged_not_hidden() {
        let sem = BrokenRegister;
        let mut a: ReplicaNode<BrokenRegister> = ReplicaNode::new(1, &sem);
        let mut b: ReplicaNode<BrokenRegister> = ReplicaNode::new(2, &sem);
        let m1 = a.local_apply(&sem, &1).unwrap();
        let m2 = b.local_apply(&sem, &2).unwrap();
        a.deliver(&sem, m2).unwrap();
        b.deliver(&sem, m1).unwrap();
        // Same message sets, different states.
        assert_eq!(a.state, 2);
        assert_eq!(b.state, 1);
        match convergence(&[a, b]) {
            Convergence::DeliveryEqualStatesDiffer { left: 1, right: 2 } => {}
            other => panic!("expected a flagged violation, got {other:?}"),
        }
    }

    #[test]
    fn random_scenarios_converge_for_every_kind() {
        let kinds = [
            CrdtKind::counter(),
            CrdtKind::mod_counter(5),
            CrdtKind::gset(["A", "B", "C"]),
            CrdtKind::orset(["A", "B"], 2),
            CrdtKind::pnset(["A", "B"]),
            CrdtKind::tset(["A", "B", "C"]),
            CrdtKind::tuple([CrdtKind::counter(), CrdtKind::tset(["A"])]),
        ];
        for kind in &kinds {
            for seed in 0..10 {
                let sc = random_scenario(kind, 4, 25, seed).unwrap();
                let outcome = run_scenario(&sc).unwrap();
                assert!(
                    outcome.convergence.is_converged(),
                    "{} seed {seed} diverged: {:?}",
                    kind.describe(),
                    outcome.convergence
                );
            }
        }
    }

    #[test]
    fn scenario_input_errors() {
        let sc = Scenario {
            kind: CrdtKind::counter(),
            replicas: 2,
            seed: 0,
            events: vec![deliver(1, 2, 1)],
        };
        assert_eq!(
            run_scenario(&sc).unwrap_err(),
            SimError::UnknownMessage { origin: 2, seq: 1 }
        );
        let sc = Scenario {
            kind: CrdtKind::counter(),
            replicas: 2,
            seed: 0,
            events: vec![local(3, "inc")],
        };
        assert_eq!(run_scenario(&sc).unwrap_err(), SimError::UnknownReplica(3));
    }
}
