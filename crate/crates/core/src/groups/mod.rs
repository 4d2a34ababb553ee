//! The group of actions of an undoable CRDT, and its decomposition into
//! counters.
//!
//! For a finite spec that passes both axioms, actions applicable at the
//! initial state form a finitely generated abelian group under
//! concatenation, with two actions identified when they land in the same
//! state. Every state is reachable and distinct states are distinct
//! classes, so the group's elements can be identified with the states
//! themselves; the Cayley table is computed from breadth-first
//! representative actions and certified abelian, well-defined, and a group
//! by exhaustive checks.
//!
//! A finite presentation is read off the Cayley graph: non-tree edges of
//! the BFS spanning tree contribute one relation row each. Smith normal
//! form of the relation matrix yields the invariant-factor decomposition —
//! the canonical form `Z^r + Z_{d1} + ... + Z_{dk}` with `d1 | d2 | ...` —
//! which is a complete isomorphism invariant. Materialising one modulo
//! counter per torsion factor and one unbounded counter per free unit
//! produces the equivalent tuple-of-counters CRDT, and the change-of-basis
//! data from the normal form is enough to synthesise the equivalence
//! witness `(phi, psi, psi')`, which is verified exhaustively before being
//! returned.
//!
//! Unbounded kinds (counter, PN-Set) have no finite Cayley graph; they are
//! handled through hand-supplied symbolic presentations, with a state-level
//! witness check on a bounded ball of states.
//!
//! Everything here targets desk-scale specs: exact arithmetic over
//! [`crate::Int`], no attempt at large-matrix performance.

pub mod matrix;
pub mod snf;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use num_integer::Integer as _;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::axioms::{
    check_commutativity, check_undoability, shortest_path, Commutativity, CommutativityViolation,
    Undoability, UndoabilityViolation,
};
use crate::kernel::{Action, FiniteCrdtSpec, OpId, StateId, ValidationReport};
use crate::zoo::{CrdtKind, CrdtState, EffectPayload};
use crate::Int;
use matrix::Mat;
use snf::{smith_normal_form, SmithNormalForm};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("spec fails validation")]
    Invalid(ValidationReport),
    #[error("spec is not a CRDT: commutativity fails")]
    NotCommutative(CommutativityViolation),
    #[error("spec is not undoable")]
    NotUndoable(UndoabilityViolation),
    #[error("internal error: {0}")]
    Internal(String),
}

/// The group of actions at the initial state of a finite undoable CRDT.
///
/// Elements are the spec's states; the identity is the initial state. The
/// table is built from representative actions recorded during BFS and is
/// certified well-defined by rebuilding it with an independent second set
/// of representatives.
#[derive(Debug, Clone)]
pub struct ActionGroup {
    spec: FiniteCrdtSpec,
    table: Vec<Vec<StateId>>,
    inverse: Vec<StateId>,
    words: Vec<Action>,
    generators: Vec<Option<StateId>>,
}

impl ActionGroup {
    pub fn spec(&self) -> &FiniteCrdtSpec {
        &self.spec
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn identity(&self) -> StateId {
        self.spec.initial()
    }

    pub fn mul(&self, x: StateId, y: StateId) -> StateId {
        self.table[x.index()][y.index()]
    }

    pub fn inverse(&self, x: StateId) -> StateId {
        self.inverse[x.index()]
    }

    /// BFS representative action whose class is `x`.
    pub fn word(&self, x: StateId) -> &Action {
        &self.words[x.index()]
    }

    /// The class of the one-op action `op`, or `None` when the operation is
    /// never applicable (and so denotes no group element).
    pub fn generator(&self, op: OpId) -> Option<StateId> {
        self.generators[op.index()]
    }

    pub fn elements(&self) -> impl Iterator<Item = StateId> + '_ {
        self.spec.state_ids()
    }

    /// Order of an element: least `n >= 1` with `x^n` the identity.
    pub fn element_order(&self, x: StateId) -> usize {
        let mut acc = x;
        let mut n = 1;
        while acc != self.identity() {
            acc = self.mul(acc, x);
            n += 1;
        }
        n
    }
}

/// BFS from the initial state expanding ops in the given order, recording a
/// representative action per state.
fn bfs_words(spec: &FiniteCrdtSpec, ops: &[OpId]) -> Vec<Option<Action>> {
    let mut words: Vec<Option<Action>> = vec![None; spec.num_states()];
    words[spec.initial().index()] = Some(Action::empty());
    let mut queue = VecDeque::from([spec.initial()]);
    while let Some(s) = queue.pop_front() {
        for &op in ops {
            if let Some(t) = spec.apply_op(s, op).state() {
                if words[t.index()].is_none() {
                    let mut w = words[s.index()].clone().expect("visited without word");
                    w.push(op);
                    words[t.index()] = Some(w);
                    queue.push_back(t);
                }
            }
        }
    }
    words
}

/// Build the group of actions, refusing unless the spec validates and
/// passes both axioms.
pub fn build_action_group(spec: &FiniteCrdtSpec) -> Result<ActionGroup, GroupError> {
    let validation = spec.validate();
    if !validation.is_ok() {
        return Err(GroupError::Invalid(validation));
    }
    if let Commutativity::Fail(v) = check_commutativity(spec) {
        return Err(GroupError::NotCommutative(v));
    }
    if let Undoability::Fail(v) = check_undoability(spec) {
        return Err(GroupError::NotUndoable(v));
    }

    let internal = |msg: String| GroupError::Internal(msg);
    let ops: Vec<OpId> = spec.op_ids().collect();
    let ops_rev: Vec<OpId> = spec.op_ids().rev().collect();
    let words: Vec<Action> = bfs_words(spec, &ops)
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| internal("unreachable state survived validation".into()))?;
    let alt_words: Vec<Action> = bfs_words(spec, &ops_rev)
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| internal("unreachable state survived validation".into()))?;

    // table[x][y] = x . word(y); the product of classes is the class of the
    // concatenated representatives since spec.apply(initial, word(x)) = x.
    let n = spec.num_states();
    let mut table: Vec<Vec<StateId>> = Vec::with_capacity(n);
    for x in spec.state_ids() {
        let mut row = Vec::with_capacity(n);
        for y in spec.state_ids() {
            let xy = spec
                .apply_action(x, &words[y.index()])
                .state()
                .ok_or_else(|| internal("representative action failed to apply".into()))?;
            row.push(xy);
        }
        table.push(row);
    }

    // Well-definedness certificate: the product must not depend on the
    // chosen representatives. The reversed-op BFS gives an independent set.
    for x in spec.state_ids() {
        for y in spec.state_ids() {
            let via_alt = spec
                .apply_action(x, &alt_words[y.index()])
                .state()
                .ok_or_else(|| internal("alternate representative failed to apply".into()))?;
            if via_alt != table[x.index()][y.index()] {
                return Err(internal(format!(
                    "product of `{}` and `{}` depends on the representative",
                    spec.state_name(x),
                    spec.state_name(y)
                )));
            }
        }
    }

    // Group laws, certified exhaustively.
    let e = spec.initial();
    for x in spec.state_ids() {
        if table[e.index()][x.index()] != x || table[x.index()][e.index()] != x {
            return Err(internal("initial state is not an identity".into()));
        }
        for y in spec.state_ids() {
            if table[x.index()][y.index()] != table[y.index()][x.index()] {
                return Err(internal("table is not abelian".into()));
            }
            for z in spec.state_ids() {
                let xy_z = table[table[x.index()][y.index()].index()][z.index()];
                let x_yz = table[x.index()][table[y.index()][z.index()].index()];
                if xy_z != x_yz {
                    return Err(internal("table is not associative".into()));
                }
            }
        }
    }
    let mut inverse = Vec::with_capacity(n);
    for x in spec.state_ids() {
        let inv = spec
            .state_ids()
            .find(|&y| table[x.index()][y.index()] == e)
            .ok_or_else(|| internal(format!("`{}` has no inverse", spec.state_name(x))))?;
        inverse.push(inv);
    }

    let generators = spec
        .op_ids()
        .map(|op| spec.apply_op(spec.initial(), op).state())
        .collect();

    Ok(ActionGroup {
        spec: spec.clone(),
        table,
        inverse,
        words,
        generators,
    })
}

/// A finite presentation of an abelian group: named generators and an
/// integer relation matrix, one row per relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Presentation {
    pub generators: Vec<String>,
    pub relations: Mat<Int>,
}

impl Presentation {
    pub fn new(generators: Vec<String>, relations: Mat<Int>) -> Self {
        assert_eq!(relations.cols(), generators.len(), "relation width mismatch");
        Presentation {
            generators,
            relations,
        }
    }
}

/// Ops that denote group elements (everything that applies anywhere).
fn generator_ops(g: &ActionGroup) -> Vec<OpId> {
    g.spec
        .op_ids()
        .filter(|&op| g.generator(op).is_some())
        .collect()
}

fn count_vec(gen_index: &HashMap<OpId, usize>, width: usize, a: &Action) -> Vec<Int> {
    let mut counts = vec![Int::zero(); width];
    for op in a.ops() {
        let col = gen_index[op];
        counts[col] += 1;
    }
    counts
}

/// Extract a presentation from the Cayley graph: one generator per op-name,
/// one relation per non-tree edge, namely
/// `word(s) + e_op - word(s.op)` as a vector of generator counts (tree
/// edges give zero rows and are omitted). The quotient's order is verified
/// against the group order before returning.
pub fn extract_presentation(g: &ActionGroup) -> Result<Presentation, GroupError> {
    let data = presentation_data(g)?;
    Ok(data.presentation)
}

struct PresentationData {
    presentation: Presentation,
    gen_ops: Vec<OpId>,
    snf: SmithNormalForm<Int>,
    decomposition: CyclicDecomposition,
}

fn presentation_data(g: &ActionGroup) -> Result<PresentationData, GroupError> {
    let spec = &g.spec;
    let gen_ops = generator_ops(g);
    let gen_index: HashMap<OpId, usize> =
        gen_ops.iter().enumerate().map(|(i, &op)| (op, i)).collect();
    let width = gen_ops.len();

    let mut rows: Vec<Vec<Int>> = Vec::new();
    let mut seen: HashSet<Vec<Int>> = HashSet::new();
    for s in spec.state_ids() {
        for &op in &gen_ops {
            let Some(t) = spec.apply_op(s, op).state() else {
                continue;
            };
            let mut rel = count_vec(&gen_index, width, g.word(s));
            rel[gen_index[&op]] += 1;
            for (slot, c) in rel.iter_mut().zip(count_vec(&gen_index, width, g.word(t))) {
                *slot -= c;
            }
            if rel.iter().all(Int::is_zero) {
                continue;
            }
            if seen.insert(rel.clone()) {
                rows.push(rel);
            }
        }
    }
    let relations = Mat::from_rows(rows, width);
    let generators = gen_ops
        .iter()
        .map(|&op| spec.op_name(op).to_string())
        .collect();
    let presentation = Presentation::new(generators, relations);

    let (snf, decomposition) = decompose_with(&presentation);
    match decomposition.group_order() {
        Some(order) if order == Int::from(g.order()) => {}
        other => {
            return Err(GroupError::Internal(format!(
                "presented group has order {other:?}, expected {}",
                g.order()
            )))
        }
    }
    Ok(PresentationData {
        presentation,
        gen_ops,
        snf,
        decomposition,
    })
}

/// Invariant-factor form of a finitely generated abelian group: the number
/// of free `Z` factors and the torsion moduli `d1 | d2 | ... | dk`, each at
/// least 2. Canonical: two groups are isomorphic exactly when these match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicDecomposition {
    pub free_rank: usize,
    pub torsion: Vec<Int>,
}

impl CyclicDecomposition {
    /// Group order, when finite.
    pub fn group_order(&self) -> Option<Int> {
        if self.free_rank > 0 {
            return None;
        }
        Some(self.torsion.iter().product())
    }

    pub fn is_trivial(&self) -> bool {
        self.free_rank == 0 && self.torsion.is_empty()
    }
}

impl fmt::Display for CyclicDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_trivial() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        match self.free_rank {
            0 => {}
            1 => parts.push("Z".to_string()),
            r => parts.push(format!("Z^{r}")),
        }
        for d in &self.torsion {
            parts.push(format!("Z_{d}"));
        }
        write!(f, "{}", parts.join(" + "))
    }
}

fn decompose_with(p: &Presentation) -> (SmithNormalForm<Int>, CyclicDecomposition) {
    let snf = smith_normal_form(&p.relations);
    let rank = snf.rank();
    let torsion = snf
        .diagonal()
        .into_iter()
        .filter(|d| d > &Int::one())
        .collect();
    let decomposition = CyclicDecomposition {
        free_rank: p.generators.len() - rank,
        torsion,
    };
    (snf, decomposition)
}

/// Run Smith normal form on the relation matrix and read off the invariant
/// factors: each diagonal entry `>= 2` is a torsion factor, entries equal
/// to 1 contribute nothing, and leftover generators are free.
pub fn decompose(p: &Presentation) -> CyclicDecomposition {
    decompose_with(p).1
}

/// The tuple of counters realising a decomposition: one modulo counter per
/// torsion factor, one unbounded counter per free unit.
#[derive(Debug, Clone)]
pub struct CounterTuple {
    pub kind: CrdtKind,
    /// Present exactly when the tuple is finite (no free factors).
    pub spec: Option<FiniteCrdtSpec>,
}

impl CounterTuple {
    pub fn describe(&self) -> String {
        self.kind.describe()
    }
}

pub fn counters_for(d: &CyclicDecomposition) -> Result<CounterTuple, GroupError> {
    let mut parts = Vec::new();
    for m in &d.torsion {
        let modulus = u64::try_from(m)
            .map_err(|_| GroupError::Internal(format!("invariant factor {m} exceeds u64")))?;
        parts.push(CrdtKind::mod_counter(modulus));
    }
    parts.extend(std::iter::repeat(CrdtKind::counter()).take(d.free_rank));
    let kind = if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        CrdtKind::tuple(parts)
    };
    let spec = if d.free_rank == 0 {
        Some(kind.to_finite_spec().map_err(|e| {
            GroupError::Internal(format!("counter tuple failed to materialise: {e}"))
        })?)
    } else {
        None
    };
    Ok(CounterTuple { kind, spec })
}

/// Certificate that two CRDTs are two representations of the same object:
/// a state bijection and op translations in both directions.
#[derive(Debug, Clone)]
pub struct EquivalenceWitness {
    /// State of the first spec -> state of the second.
    pub phi: Vec<StateId>,
    /// State of the second spec -> state of the first.
    pub phi_inv: Vec<StateId>,
    /// Op of the first spec -> action over the second spec's ops.
    pub psi: Vec<Action>,
    /// Op of the second spec -> action over the first spec's ops.
    pub psi_prime: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivError {
    #[error("first spec: {0}")]
    Left(GroupError),
    #[error("second spec: {0}")]
    Right(GroupError),
    #[error("not isomorphic: {left} vs {right}")]
    NotIsomorphic {
        left: CyclicDecomposition,
        right: CyclicDecomposition,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

/// Canonical coordinates of a state inside `Z_{d1} + ... + Z_{dk} + Z^r`:
/// the generator-count vector of its representative word, pushed through
/// the normal form's column transform, reduced modulo the torsion moduli
/// (trivial factors dropped, free coordinates kept exact).
fn canonical_coords(data: &PresentationData, g: &ActionGroup, s: StateId) -> Vec<Int> {
    let gen_index: HashMap<OpId, usize> = data
        .gen_ops
        .iter()
        .enumerate()
        .map(|(i, &op)| (op, i))
        .collect();
    let x = count_vec(&gen_index, data.gen_ops.len(), g.word(s));
    let y = data.snf.v.mul_row(&x);
    let diag = data.snf.diagonal();
    let mut coords = Vec::new();
    for (i, yi) in y.iter().enumerate() {
        match diag.get(i) {
            Some(d) if d.is_zero() => coords.push(yi.clone()),
            Some(d) if d.is_one() => {}
            Some(d) => coords.push(yi.mod_floor(d)),
            None => coords.push(yi.clone()),
        }
    }
    coords
}

/// Synthesise and exhaustively verify an equivalence witness between two
/// finite specs. Refuses when either fails the axioms or when their
/// decompositions differ; any verification failure afterwards is reported
/// as an internal error, never returned silently.
pub fn synthesize_equivalence(
    a: &FiniteCrdtSpec,
    b: &FiniteCrdtSpec,
) -> Result<EquivalenceWitness, EquivError> {
    let ga = build_action_group(a).map_err(EquivError::Left)?;
    let gb = build_action_group(b).map_err(EquivError::Right)?;
    equivalence_of_groups(&ga, &gb)
}

fn equivalence_of_groups(
    ga: &ActionGroup,
    gb: &ActionGroup,
) -> Result<EquivalenceWitness, EquivError> {
    let da = presentation_data(ga).map_err(EquivError::Left)?;
    let db = presentation_data(gb).map_err(EquivError::Right)?;
    if da.decomposition != db.decomposition {
        return Err(EquivError::NotIsomorphic {
            left: da.decomposition,
            right: db.decomposition,
        });
    }
    let internal = |msg: String| EquivError::Internal(msg);

    let coords_of = |data: &PresentationData, g: &ActionGroup| -> HashMap<Vec<Int>, StateId> {
        g.elements()
            .map(|s| (canonical_coords(data, g, s), s))
            .collect()
    };
    let by_coords_a = coords_of(&da, ga);
    let by_coords_b = coords_of(&db, gb);
    if by_coords_a.len() != ga.order() || by_coords_b.len() != gb.order() {
        return Err(internal("canonical coordinates are not injective".into()));
    }

    let a = ga.spec();
    let b = gb.spec();
    let mut phi = Vec::with_capacity(ga.order());
    for s in ga.elements() {
        let c = canonical_coords(&da, ga, s);
        let t = by_coords_b
            .get(&c)
            .ok_or_else(|| internal("coordinate missing on the target side".into()))?;
        phi.push(*t);
    }
    let mut phi_inv = Vec::with_capacity(gb.order());
    for t in gb.elements() {
        let c = canonical_coords(&db, gb, t);
        let s = by_coords_a
            .get(&c)
            .ok_or_else(|| internal("coordinate missing on the source side".into()))?;
        phi_inv.push(*s);
    }

    // psi(p): the shortest action over the target's ops realising the same
    // group element as p, ties broken by op order. Never-applicable ops
    // denote no element; the empty action satisfies their (vacuous) clause.
    let translate = |g_from: &ActionGroup,
                     g_to: &ActionGroup,
                     map: &[StateId]|
     -> Result<Vec<Action>, EquivError> {
        g_from
            .spec()
            .op_ids()
            .map(|op| match g_from.generator(op) {
                None => Ok(Action::empty()),
                Some(elem) => {
                    let target = map[elem.index()];
                    shortest_path(g_to.spec(), g_to.spec().initial(), target)
                        .ok_or_else(|| internal("target element unreachable".into()))
                }
            })
            .collect()
    };
    let psi = translate(ga, gb, &phi)?;
    let psi_prime = translate(gb, ga, &phi_inv)?;

    let witness = EquivalenceWitness {
        phi,
        phi_inv,
        psi,
        psi_prime,
    };
    verify_witness(a, b, &witness).map_err(internal)?;
    Ok(witness)
}

/// Exhaustively check the three equivalence conditions: the initial states
/// correspond, and both op translations commute with the state bijection on
/// every state where the op applies.
pub fn verify_witness(
    a: &FiniteCrdtSpec,
    b: &FiniteCrdtSpec,
    w: &EquivalenceWitness,
) -> Result<(), String> {
    if w.phi.len() != a.num_states()
        || w.phi_inv.len() != b.num_states()
        || w.psi.len() != a.num_ops()
        || w.psi_prime.len() != b.num_ops()
    {
        return Err("witness tables have the wrong shape".into());
    }
    for s in a.state_ids() {
        if w.phi_inv[w.phi[s.index()].index()] != s {
            return Err(format!("phi is not invertible at `{}`", a.state_name(s)));
        }
    }
    for t in b.state_ids() {
        if w.phi[w.phi_inv[t.index()].index()] != t {
            return Err(format!("phi_inv is not invertible at `{}`", b.state_name(t)));
        }
    }
    if w.phi[a.initial().index()] != b.initial() {
        return Err("initial states do not correspond".into());
    }
    for s in a.state_ids() {
        for p in a.op_ids() {
            let Some(sp) = a.apply_op(s, p).state() else {
                continue;
            };
            let got = b.apply_action(w.phi[s.index()], &w.psi[p.index()]).state();
            if got != Some(w.phi[sp.index()]) {
                return Err(format!(
                    "psi(`{}`) disagrees with phi at `{}`",
                    a.op_name(p),
                    a.state_name(s)
                ));
            }
        }
    }
    for t in b.state_ids() {
        for q in b.op_ids() {
            let Some(tq) = b.apply_op(t, q).state() else {
                continue;
            };
            let got = a
                .apply_action(w.phi_inv[t.index()], &w.psi_prime[q.index()])
                .state();
            if got != Some(w.phi_inv[tq.index()]) {
                return Err(format!(
                    "psi'(`{}`) disagrees with phi at `{}`",
                    b.op_name(q),
                    b.state_name(t)
                ));
            }
        }
    }
    Ok(())
}

/// Full analysis of one finite spec.
#[derive(Debug)]
pub struct Analysis {
    pub label: String,
    pub validation: ValidationReport,
    pub verdict: AnalysisVerdict,
}

#[derive(Debug)]
pub enum AnalysisVerdict {
    /// Validation errors; nothing else was attempted.
    Invalid,
    NotCommutative(CommutativityViolation),
    NotUndoable(UndoabilityViolation),
    Undoable(Box<Equivalence>),
}

/// The positive outcome: the spec is an undoable CRDT, equivalent to the
/// stated tuple of counters, with a verified witness.
#[derive(Debug)]
pub struct Equivalence {
    pub group_order: usize,
    pub decomposition: CyclicDecomposition,
    pub tuple: CounterTuple,
    pub target: FiniteCrdtSpec,
    pub witness: EquivalenceWitness,
}

/// Validation, axioms, group, presentation, decomposition, counter tuple,
/// witness — the whole pipeline, with negative outcomes reported as
/// verdicts rather than errors.
pub fn analyze(spec: &FiniteCrdtSpec) -> Result<Analysis, GroupError> {
    let label = spec.label().to_string();
    let validation = spec.validate();
    if !validation.is_ok() {
        return Ok(Analysis {
            label,
            validation,
            verdict: AnalysisVerdict::Invalid,
        });
    }
    let group = match build_action_group(spec) {
        Ok(g) => g,
        Err(GroupError::NotCommutative(v)) => {
            return Ok(Analysis {
                label,
                validation,
                verdict: AnalysisVerdict::NotCommutative(v),
            })
        }
        Err(GroupError::NotUndoable(v)) => {
            return Ok(Analysis {
                label,
                validation,
                verdict: AnalysisVerdict::NotUndoable(v),
            })
        }
        Err(e) => return Err(e),
    };
    let data = presentation_data(&group)?;
    let tuple = counters_for(&data.decomposition)?;
    let target = tuple
        .spec
        .clone()
        .ok_or_else(|| GroupError::Internal("finite group produced an infinite tuple".into()))?;
    let target_group = build_action_group(&target)?;
    let witness = equivalence_of_groups(&group, &target_group).map_err(|e| match e {
        EquivError::Left(g) | EquivError::Right(g) => g,
        other => GroupError::Internal(other.to_string()),
    })?;
    Ok(Analysis {
        label,
        validation,
        verdict: AnalysisVerdict::Undoable(Box::new(Equivalence {
            group_order: group.order(),
            decomposition: data.decomposition,
            tuple,
            target,
            witness,
        })),
    })
}

/// Hand-supplied presentation of a kind's group of actions, for the kinds
/// whose state space is unbounded (and, for cross-checking, the bounded
/// counter-like kinds). `None` for kinds that are not undoable — they have
/// no group.
pub fn symbolic_presentation(kind: &CrdtKind) -> Option<Presentation> {
    fn rows(generators: Vec<String>, rows: Vec<Vec<Int>>) -> Presentation {
        let width = generators.len();
        Presentation::new(generators, Mat::from_rows(rows, width))
    }
    match kind {
        // inc + dec = 0.
        CrdtKind::Counter => Some(rows(
            vec!["inc".into(), "dec".into()],
            vec![vec![Int::one(), Int::one()]],
        )),
        // inc + dec = 0 and n * inc = 0.
        CrdtKind::ModCounter { modulus } => Some(rows(
            vec!["inc".into(), "dec".into()],
            vec![
                vec![Int::one(), Int::one()],
                vec![Int::from(*modulus), Int::zero()],
            ],
        )),
        // One counter per element: add(e) + remove(e) = 0.
        CrdtKind::PnSet { universe } => {
            let mut generators = Vec::new();
            let mut relations = Vec::new();
            for (k, e) in universe.iter().enumerate() {
                generators.push(format!("add({e})"));
                generators.push(format!("remove({e})"));
                let mut row = vec![Int::zero(); 2 * universe.len()];
                row[2 * k] = Int::one();
                row[2 * k + 1] = Int::one();
                relations.push(row);
            }
            Some(rows(generators, relations))
        }
        // One modulo-2 counter per element: 2 * toggle(e) = 0.
        CrdtKind::TSet { universe } => {
            let generators = universe.iter().map(|e| format!("toggle({e})")).collect();
            let relations = (0..universe.len())
                .map(|k| {
                    let mut row = vec![Int::zero(); universe.len()];
                    row[k] = Int::from(2);
                    row
                })
                .collect();
            Some(rows(generators, relations))
        }
        CrdtKind::GSet { .. } | CrdtKind::OrSet { .. } => None,
        CrdtKind::Tuple(parts) => {
            let mut generators = Vec::new();
            let mut blocks = Vec::new();
            for (k, part) in parts.iter().enumerate() {
                let p = symbolic_presentation(part)?;
                blocks.push((generators.len(), p.clone()));
                generators.extend(
                    p.generators
                        .iter()
                        .map(|name| format!("{}:{name}", k + 1)),
                );
            }
            let width = generators.len();
            let mut relations = Vec::new();
            for (offset, p) in blocks {
                for i in 0..p.relations.rows() {
                    let mut row = vec![Int::zero(); width];
                    for (j, value) in p.relations.row(i).iter().enumerate() {
                        row[offset + j] = value.clone();
                    }
                    relations.push(row);
                }
            }
            Some(rows(generators, relations))
        }
    }
}

/// Result of checking the counter-tuple equivalence of an unbounded kind on
/// a bounded ball of states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallCheck {
    pub radius: i64,
    pub states_checked: usize,
}

/// For the unbounded kinds, verify the state-level equivalence with their
/// counter tuple on every state whose coordinates lie within `radius`:
/// the bijection and both op translations are exercised against the real
/// effect functions of both sides. Exhaustive verification is impossible on
/// an infinite state space; the checked ball is reported instead.
///
/// Returns `Ok(None)` for kinds where no such check is implemented.
pub fn verify_unbounded_equivalence(
    kind: &CrdtKind,
    radius: i64,
) -> Result<Option<BallCheck>, GroupError> {
    let radius = radius.max(0);
    let coords: usize = match kind {
        CrdtKind::Counter => 1,
        CrdtKind::PnSet { universe } => universe.len(),
        _ => return Ok(None),
    };
    let presentation = symbolic_presentation(kind)
        .ok_or_else(|| GroupError::Internal("unbounded kind without a presentation".into()))?;
    let decomposition = decompose(&presentation);
    let tuple = counters_for(&decomposition)?;
    if decomposition.free_rank != coords || !decomposition.torsion.is_empty() {
        return Err(GroupError::Internal(format!(
            "{} decomposed to {decomposition}, expected {coords} free factors",
            kind.describe()
        )));
    }

    let ball = (2 * radius as usize + 1)
        .checked_pow(coords as u32)
        .filter(|&n| n <= 1_000_000)
        .ok_or_else(|| GroupError::Internal("verification ball too large".into()))?;

    let universe: Vec<String> = match kind {
        CrdtKind::PnSet { universe } => universe.clone(),
        _ => Vec::new(),
    };
    let src_state = |c: &[i64]| -> CrdtState {
        match kind {
            CrdtKind::Counter => CrdtState::Counter { value: c[0] },
            _ => CrdtState::PnSet {
                counts: universe
                    .iter()
                    .zip(c)
                    .filter(|(_, &v)| v != 0)
                    .map(|(e, &v)| (e.clone(), v))
                    .collect(),
            },
        }
    };
    let tgt_state = |c: &[i64]| -> CrdtState {
        let parts: Vec<CrdtState> = c.iter().map(|&v| CrdtState::Counter { value: v }).collect();
        if parts.len() == 1 {
            parts.into_iter().next().expect("one part")
        } else {
            CrdtState::Tuple(parts)
        }
    };
    let src_payload = |k: usize, up: bool| -> EffectPayload {
        match kind {
            CrdtKind::Counter => {
                if up {
                    EffectPayload::Inc
                } else {
                    EffectPayload::Dec
                }
            }
            _ => {
                let elem = universe[k].clone();
                if up {
                    EffectPayload::PnSetAdd { elem }
                } else {
                    EffectPayload::PnSetRemove { elem }
                }
            }
        }
    };
    let tgt_payload = |k: usize, up: bool| -> EffectPayload {
        let inner = if up { EffectPayload::Inc } else { EffectPayload::Dec };
        if coords == 1 {
            inner
        } else {
            EffectPayload::Component {
                index: k,
                payload: Box::new(inner),
            }
        }
    };

    let mut checked = 0;
    let mut c = vec![-radius; coords];
    loop {
        let s = src_state(&c);
        let t = tgt_state(&c);
        for k in 0..coords {
            for up in [true, false] {
                let mut moved = c.clone();
                moved[k] += if up { 1 } else { -1 };
                // phi(s . p) = phi(s) . psi(p), computed with the real
                // effect functions of both kinds, and the reverse direction
                // with psi'.
                let s_next = kind
                    .effect(&s, &src_payload(k, up))
                    .map_err(|e| GroupError::Internal(e.to_string()))?;
                let t_next = tuple
                    .kind
                    .effect(&t, &tgt_payload(k, up))
                    .map_err(|e| GroupError::Internal(e.to_string()))?;
                if s_next != src_state(&moved) || t_next != tgt_state(&moved) {
                    return Err(GroupError::Internal(format!(
                        "ball check failed at coordinates {c:?} (component {k})"
                    )));
                }
            }
        }
        checked += 1;
        // Odometer over [-radius, radius]^coords.
        let mut pos = 0;
        loop {
            if pos == coords {
                return Ok(Some(BallCheck {
                    radius,
                    states_checked: checked,
                }));
            }
            if c[pos] < radius {
                c[pos] += 1;
                break;
            }
            c[pos] = -radius;
            pos += 1;
        }
        if checked >= ball {
            return Ok(Some(BallCheck {
                radius,
                states_checked: checked,
            }));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::CrdtKind;

    fn mc(n: u64) -> FiniteCrdtSpec {
        CrdtKind::mod_counter(n).to_finite_spec().unwrap()
    }

    fn factors(d: &CyclicDecomposition) -> Vec<i64> {
        d.torsion.iter().map(|x| i64::try_from(x).unwrap()).collect()
    }

    #[test]
    fn mod3_group_is_cyclic_addition() {
        let g = build_action_group(&mc(3)).unwrap();
        assert_eq!(g.order(), 3);
        let spec = g.spec();
        for i in 0..3u64 {
            for j in 0..3u64 {
                let x = spec.state_id(&i.to_string()).unwrap();
                let y = spec.state_id(&j.to_string()).unwrap();
                let expect = spec.state_id(&((i + j) % 3).to_string()).unwrap();
                assert_eq!(g.mul(x, y), expect);
            }
        }
        let inc = spec.op_id("inc").unwrap();
        assert_eq!(g.generator(inc), spec.state_id("1"));
        assert_eq!(g.element_order(spec.state_id("1").unwrap()), 3);
    }

    #[test]
    fn tset_pair_group_is_klein_four() {
        let spec = CrdtKind::tset(["A", "B"]).to_finite_spec().unwrap();
        let g = build_action_group(&spec).unwrap();
        assert_eq!(g.order(), 4);
        // Every element is self-inverse and the product is symmetric
        // difference of the member sets.
        for x in g.elements() {
            assert_eq!(g.inverse(x), x);
            assert_eq!(g.mul(x, x), g.identity());
        }
        let id = |name: &str| spec.state_id(name).unwrap();
        assert_eq!(g.mul(id("{A}"), id("{B}")), id("{A,B}"));
        assert_eq!(g.mul(id("{A}"), id("{A,B}")), id("{B}"));
    }

    #[test]
    fn group_refuses_non_undoable_specs() {
        let spec = CrdtKind::orset(["A"], 1).to_finite_spec().unwrap();
        match build_action_group(&spec) {
            Err(GroupError::NotUndoable(_)) => {}
            other => panic!("expected undoability refusal, got {other:?}"),
        }
    }

    #[test]
    fn presentation_of_inc_only_mod4_is_a_single_relation() {
        let spec = mc(4).restrict_ops(&["inc"]).unwrap();
        let g = build_action_group(&spec).unwrap();
        let p = extract_presentation(&g).unwrap();
        assert_eq!(p.generators, vec!["inc".to_string()]);
        assert_eq!(p.relations.rows(), 1);
        assert_eq!(p.relations[(0, 0)], Int::from(4));
    }

    #[test]
    fn presentation_of_full_mod4_presents_order_four() {
        let g = build_action_group(&mc(4)).unwrap();
        let p = extract_presentation(&g).unwrap();
        assert_eq!(p.generators, vec!["inc".to_string(), "dec".to_string()]);
        let d = decompose(&p);
        assert_eq!(d.free_rank, 0);
        assert_eq!(factors(&d), vec![4]);
    }

    #[test]
    fn supplied_counter_presentation_decomposes_to_z() {
        let p = symbolic_presentation(&CrdtKind::counter()).unwrap();
        let d = decompose(&p);
        assert_eq!(d.free_rank, 1);
        assert!(d.torsion.is_empty());
        assert_eq!(d.to_string(), "Z");
    }

    #[test]
    fn tuple_of_mod_2_and_3_has_factor_six() {
        let spec = CrdtKind::tuple([CrdtKind::mod_counter(2), CrdtKind::mod_counter(3)])
            .to_finite_spec()
            .unwrap();
        let g = build_action_group(&spec).unwrap();
        let d = decompose(&extract_presentation(&g).unwrap());
        assert_eq!(d.free_rank, 0);
        assert_eq!(factors(&d), vec![6]);
    }

    #[test]
    fn tset_triple_decomposes_to_three_twos() {
        let spec = CrdtKind::tset(["A", "B", "C"]).to_finite_spec().unwrap();
        let g = build_action_group(&spec).unwrap();
        let d = decompose(&extract_presentation(&g).unwrap());
        assert_eq!(factors(&d), vec![2, 2, 2]);
        assert_eq!(d.to_string(), "Z_2 + Z_2 + Z_2");

        // Oracle: in the Cayley table, every non-identity element has
        // order 2, which rules out any larger invariant factor.
        for x in g.elements() {
            let expect = if x == g.identity() { 1 } else { 2 };
            assert_eq!(g.element_order(x), expect);
        }
    }

    #[test]
    fn symbolic_and_extracted_presentations_agree() {
        for kind in [
            CrdtKind::mod_counter(5),
            CrdtKind::tset(["A", "B"]),
            CrdtKind::tuple([CrdtKind::mod_counter(2), CrdtKind::mod_counter(6)]),
        ] {
            let spec = kind.to_finite_spec().unwrap();
            let g = build_action_group(&spec).unwrap();
            let extracted = decompose(&extract_presentation(&g).unwrap());
            let symbolic = decompose(&symbolic_presentation(&kind).unwrap());
            assert_eq!(extracted, symbolic, "{}", kind.describe());
        }
    }

    #[test]
    fn counters_for_materialises_the_tuple() {
        let d = CyclicDecomposition {
            free_rank: 0,
            torsion: vec![Int::from(2), Int::from(2)],
        };
        let t = counters_for(&d).unwrap();
        let spec = t.spec.unwrap();
        assert_eq!(spec.num_states(), 4);
        assert_eq!(
            spec.op_names(),
            &["1:inc".to_string(), "1:dec".into(), "2:inc".into(), "2:dec".into()]
        );

        let d = CyclicDecomposition {
            free_rank: 0,
            torsion: vec![Int::from(6)],
        };
        let t = counters_for(&d).unwrap();
        assert_eq!(t.describe(), "ModCounter(6)");
        assert_eq!(t.spec.unwrap().num_states(), 6);

        let d = CyclicDecomposition {
            free_rank: 1,
            torsion: vec![],
        };
        let t = counters_for(&d).unwrap();
        assert_eq!(t.kind, CrdtKind::counter());
        assert!(t.spec.is_none());

        let d = CyclicDecomposition {
            free_rank: 0,
            torsion: vec![],
        };
        let t = counters_for(&d).unwrap();
        assert_eq!(t.spec.unwrap().num_states(), 1);
    }

    #[test]
    fn tset_singleton_is_equivalent_to_mod2() {
        let a = CrdtKind::tset(["A"]).to_finite_spec().unwrap();
        let b = mc(2);
        let w = synthesize_equivalence(&a, &b).unwrap();
        verify_witness(&a, &b, &w).unwrap();
        let phi_name =
            |s: &str| b.state_name(w.phi[a.state_id(s).unwrap().index()]).to_string();
        assert_eq!(phi_name("{}"), "0");
        assert_eq!(phi_name("{A}"), "1");
        let toggle = a.op_id("toggle(A)").unwrap();
        assert_eq!(w.psi[toggle.index()].render(&b), "inc");
    }

    #[test]
    fn crt_equivalence_mod6_vs_mod2_mod3() {
        let a = mc(6);
        let b = CrdtKind::tuple([CrdtKind::mod_counter(2), CrdtKind::mod_counter(3)])
            .to_finite_spec()
            .unwrap();
        let w = synthesize_equivalence(&a, &b).unwrap();
        verify_witness(&a, &b, &w).unwrap();
        // psi(inc) realises an element of order 6 on the tuple side.
        let gb = build_action_group(&b).unwrap();
        let inc = a.op_id("inc").unwrap();
        let image = b
            .apply_action(b.initial(), &w.psi[inc.index()])
            .state()
            .unwrap();
        assert_eq!(gb.element_order(image), 6);
    }

    #[test]
    fn self_equivalence_is_identity_shaped() {
        let a = mc(5);
        let w = synthesize_equivalence(&a, &a).unwrap();
        for s in a.state_ids() {
            assert_eq!(w.phi[s.index()], s);
        }
    }

    #[test]
    fn mod4_is_not_mod2_squared() {
        let a = mc(4);
        let b = CrdtKind::tuple([CrdtKind::mod_counter(2), CrdtKind::mod_counter(2)])
            .to_finite_spec()
            .unwrap();
        match synthesize_equivalence(&a, &b) {
            Err(EquivError::NotIsomorphic { left, right }) => {
                assert_eq!(factors(&left), vec![4]);
                assert_eq!(factors(&right), vec![2, 2]);
            }
            other => panic!("expected non-isomorphism, got {other:?}"),
        }
    }

    #[test]
    fn analyze_tset_pair_reports_mod2_squared() {
        let spec = CrdtKind::tset(["A", "B"]).to_finite_spec().unwrap();
        let analysis = analyze(&spec).unwrap();
        match analysis.verdict {
            AnalysisVerdict::Undoable(eq) => {
                assert_eq!(eq.group_order, 4);
                assert_eq!(eq.tuple.describe(), "ModCounter(2) × ModCounter(2)");
                verify_witness(&spec, &eq.target, &eq.witness).unwrap();
            }
            other => panic!("expected undoable verdict, got {other:?}"),
        }
    }

    #[test]
    fn analyze_orset_reports_the_remove_counterexample() {
        let spec = CrdtKind::orset(["A"], 1).to_finite_spec().unwrap();
        let analysis = analyze(&spec).unwrap();
        match analysis.verdict {
            AnalysisVerdict::NotUndoable(v) => {
                assert_eq!(spec.op_name(v.op), "remove(A,{t0})");
            }
            other => panic!("expected not-undoable verdict, got {other:?}"),
        }
    }

    #[test]
    fn analyze_mod12_is_itself() {
        let analysis = analyze(&mc(12)).unwrap();
        match analysis.verdict {
            AnalysisVerdict::Undoable(eq) => {
                assert_eq!(factors(&eq.decomposition), vec![12]);
                assert_eq!(eq.tuple.describe(), "ModCounter(12)");
            }
            other => panic!("expected undoable verdict, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_is_stable_under_realisation() {
        for kind in [
            CrdtKind::mod_counter(9),
            CrdtKind::tset(["A", "B"]),
            CrdtKind::tuple([CrdtKind::mod_counter(4), CrdtKind::mod_counter(6)]),
        ] {
            let spec = kind.to_finite_spec().unwrap();
            let g = build_action_group(&spec).unwrap();
            let d = decompose(&extract_presentation(&g).unwrap());
            let realised = counters_for(&d).unwrap().spec.unwrap();
            let g2 = build_action_group(&realised).unwrap();
            let d2 = decompose(&extract_presentation(&g2).unwrap());
            assert_eq!(d, d2, "{}", kind.describe());
        }
    }

    #[test]
    fn ball_check_for_counter_and_pnset() {
        let check = verify_unbounded_equivalence(&CrdtKind::counter(), 5)
            .unwrap()
            .unwrap();
        assert_eq!(check.states_checked, 11);

        let check = verify_unbounded_equivalence(&CrdtKind::pnset(["A", "B"]), 3)
            .unwrap()
            .unwrap();
        assert_eq!(check.states_checked, 49);

        assert_eq!(
            verify_unbounded_equivalence(&CrdtKind::mod_counter(4), 3).unwrap(),
            None
        );
    }

    #[test]
    fn pnset_symbolic_presentation_is_free_of_rank_universe() {
        let p = symbolic_presentation(&CrdtKind::pnset(["A", "B"])).unwrap();
        let d = decompose(&p);
        assert_eq!(d.free_rank, 2);
        assert!(d.torsion.is_empty());
        assert_eq!(d.to_string(), "Z^2");
    }

    #[test]
    fn never_applicable_ops_are_dropped_from_the_presentation() {
        // A mod-2 counter with an extra op that has no transitions at all.
        let spec = FiniteCrdtSpec::new(
            "mod2-plus-ghost",
            vec!["0".into(), "1".into()],
            "0",
            vec!["inc".into(), "ghost".into()],
            vec![
                ("0".into(), "inc".into(), "1".into()),
                ("1".into(), "inc".into(), "0".into()),
            ],
        )
        .unwrap();
        let g = build_action_group(&spec).unwrap();
        assert_eq!(g.generator(spec.op_id("ghost").unwrap()), None);
        let p = extract_presentation(&g).unwrap();
        assert_eq!(p.generators, vec!["inc".to_string()]);
        let analysis = analyze(&spec).unwrap();
        assert!(matches!(analysis.verdict, AnalysisVerdict::Undoable(_)));
    }
}
