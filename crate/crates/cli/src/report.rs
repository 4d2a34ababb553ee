//! Command implementations and report rendering.
//!
//! Every command produces one report with two faces: a human-readable text
//! block for stdout and a machine-readable JSON document (behind `--json`)
//! carrying the same information. Reports are deterministic functions of
//! the inputs; timing goes to stderr so that repeated runs stay
//! byte-identical.
//!
//! Exit codes: 0 for a positive verdict, 1 for a negative domain verdict
//! (invalid spec, failed axiom, not isomorphic, convergence violation),
//! 2 for input errors.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use serde_json::{json, Value};

use crdt_lab::axioms::{
    check_axioms, check_consequences, check_facts, synthesize_undo, Commutativity,
    CommutativityFailure, CommutativityViolation, Fact, Undoability, UndoabilityViolation,
    UndoError,
};
use crdt_lab::groups::{
    analyze, build_action_group, counters_for, decompose, extract_presentation,
    symbolic_presentation, synthesize_equivalence, verify_unbounded_equivalence, AnalysisVerdict,
    CyclicDecomposition, EquivError, EquivalenceWitness, GroupError,
};
use crdt_lab::kernel::ValidationReport;
use crdt_lab::sim::{run_scenario, Convergence};
use crdt_lab::{CrdtKind, CrdtState, FiniteCrdtSpec};

use crate::docs::{load_scenario, load_spec, InputDigest, LoadedSpec};

pub struct Rendered {
    pub text: String,
    pub json: Value,
    pub exit: i32,
}

fn inputs_json(inputs: &[&InputDigest]) -> Value {
    Value::Array(
        inputs
            .iter()
            .map(|d| json!({"path": d.path, "sha256": d.sha256}))
            .collect(),
    )
}

fn spec_header(spec: &FiniteCrdtSpec) -> String {
    format!(
        "spec: {} ({} states, {} ops)",
        spec.label(),
        spec.num_states(),
        spec.num_ops()
    )
}

fn validation_lines(report: &ValidationReport, out: &mut Vec<String>) {
    for e in &report.errors {
        out.push(format!("error: {e}"));
    }
    for w in &report.warnings {
        out.push(format!("warning: {w}"));
    }
}

fn validation_json(report: &ValidationReport) -> (Vec<String>, Vec<String>) {
    (
        report.errors.iter().map(|e| e.to_string()).collect(),
        report.warnings.iter().map(|w| w.to_string()).collect(),
    )
}

fn commutativity_text(spec: &FiniteCrdtSpec, v: &CommutativityViolation) -> String {
    let state = spec.state_name(v.state);
    let p = spec.op_name(v.p);
    let q = spec.op_name(v.q);
    match v.reason {
        CommutativityFailure::PqUndefined => format!(
            "at state `{state}`, ops `{p}` and `{q}` both apply, but `{p}` then `{q}` is undefined"
        ),
        CommutativityFailure::QpUndefined => format!(
            "at state `{state}`, ops `{p}` and `{q}` both apply, but `{q}` then `{p}` is undefined"
        ),
        CommutativityFailure::ResultsDiffer { pq, qp } => format!(
            "at state `{state}`, `{p}` then `{q}` gives `{}` but `{q}` then `{p}` gives `{}`",
            spec.state_name(pq),
            spec.state_name(qp)
        ),
    }
}

fn commutativity_json(spec: &FiniteCrdtSpec, v: &CommutativityViolation) -> Value {
    let reason = match v.reason {
        CommutativityFailure::PqUndefined => "pq-undefined",
        CommutativityFailure::QpUndefined => "qp-undefined",
        CommutativityFailure::ResultsDiffer { .. } => "results-differ",
    };
    json!({
        "state": spec.state_name(v.state),
        "p": spec.op_name(v.p),
        "q": spec.op_name(v.q),
        "reason": reason,
    })
}

fn undoability_text(spec: &FiniteCrdtSpec, v: &UndoabilityViolation) -> String {
    format!(
        "at state `{}`, op `{}` leads to `{}`, from which the state cannot be reached again",
        spec.state_name(v.state),
        spec.op_name(v.op),
        spec.state_name(v.stuck_at)
    )
}

fn undoability_json(spec: &FiniteCrdtSpec, v: &UndoabilityViolation) -> Value {
    json!({
        "state": spec.state_name(v.state),
        "op": spec.op_name(v.op),
        "stuck_at": spec.state_name(v.stuck_at),
    })
}

fn decomposition_json(d: &CyclicDecomposition) -> Value {
    json!({
        "display": d.to_string(),
        "free_rank": d.free_rank,
        "invariant_factors": d.torsion.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
    })
}

fn witness_json(a: &FiniteCrdtSpec, b: &FiniteCrdtSpec, w: &EquivalenceWitness) -> Value {
    let phi: Vec<Value> = a
        .state_ids()
        .map(|s| json!([a.state_name(s), b.state_name(w.phi[s.index()])]))
        .collect();
    let psi: BTreeMap<String, Vec<String>> = a
        .op_ids()
        .map(|p| {
            let action = &w.psi[p.index()];
            (
                a.op_name(p).to_string(),
                action.ops().iter().map(|&o| b.op_name(o).to_string()).collect(),
            )
        })
        .collect();
    let psi_prime: BTreeMap<String, Vec<String>> = b
        .op_ids()
        .map(|q| {
            let action = &w.psi_prime[q.index()];
            (
                b.op_name(q).to_string(),
                action.ops().iter().map(|&o| a.op_name(o).to_string()).collect(),
            )
        })
        .collect();
    json!({
        "verified": true,
        "phi": phi,
        "psi": psi,
        "psi_prime": psi_prime,
    })
}

fn witness_text(
    a: &FiniteCrdtSpec,
    b: &FiniteCrdtSpec,
    w: &EquivalenceWitness,
    out: &mut Vec<String>,
) {
    out.push(format!(
        "witness: verified exhaustively ({} states)",
        a.num_states()
    ));
    if a.num_states() <= 16 {
        out.push("phi:".into());
        for s in a.state_ids() {
            out.push(format!(
                "  {} -> {}",
                a.state_name(s),
                b.state_name(w.phi[s.index()])
            ));
        }
    } else {
        out.push(format!(
            "phi: bijection on {} states (see --json)",
            a.num_states()
        ));
    }
    out.push("psi:".into());
    for p in a.op_ids() {
        out.push(format!(
            "  {} -> {}",
            a.op_name(p),
            render_or_empty(&w.psi[p.index()].render(a_to_b(b)))
        ));
    }
    out.push("psi':".into());
    for q in b.op_ids() {
        out.push(format!(
            "  {} -> {}",
            b.op_name(q),
            render_or_empty(&w.psi_prime[q.index()].render(a))
        ));
    }
}

// Actions in `psi` are over the target's ops; the helper only exists to
// keep the call sites readable.
fn a_to_b(b: &FiniteCrdtSpec) -> &FiniteCrdtSpec {
    b
}

fn render_or_empty(s: &str) -> String {
    if s.is_empty() {
        "(empty action)".to_string()
    } else {
        s.to_string()
    }
}

pub fn cmd_validate(path: &Path) -> Result<Rendered> {
    let (loaded, digest) = load_spec(path)?;
    match loaded {
        LoadedSpec::Finite(spec) => {
            let report = spec.validate();
            let (errors, warnings) = validation_json(&report);
            let mut lines = vec![spec_header(&spec)];
            validation_lines(&report, &mut lines);
            let verdict = if report.is_ok() {
                if warnings.is_empty() {
                    "valid".to_string()
                } else {
                    format!("valid ({} warnings)", warnings.len())
                }
            } else {
                format!("invalid ({} errors, {} warnings)", errors.len(), warnings.len())
            };
            lines.push(format!("verdict: {verdict}"));
            let json = json!({
                "command": "validate",
                "inputs": inputs_json(&[&digest]),
                "label": spec.label(),
                "states": spec.num_states(),
                "ops": spec.num_ops(),
                "unbounded": false,
                "errors": errors,
                "warnings": warnings,
                "valid": report.is_ok(),
            });
            Ok(Rendered {
                text: lines.join("\n") + "\n",
                json,
                exit: i32::from(!report.is_ok()),
            })
        }
        LoadedSpec::Unbounded(kind) => {
            let text = format!(
                "spec: {} (unbounded state space)\nverdict: valid (parameters only)\n",
                kind.describe()
            );
            let json = json!({
                "command": "validate",
                "inputs": inputs_json(&[&digest]),
                "label": kind.describe(),
                "unbounded": true,
                "errors": [],
                "warnings": [],
                "valid": true,
            });
            Ok(Rendered { text, json, exit: 0 })
        }
    }
}

pub fn cmd_analyze(path: &Path, ball: i64) -> Result<Rendered> {
    let (loaded, digest) = load_spec(path)?;
    match loaded {
        LoadedSpec::Finite(spec) => analyze_finite(&spec, &digest),
        LoadedSpec::Unbounded(kind) => analyze_unbounded(&kind, ball, &digest),
    }
}

fn analyze_finite(spec: &FiniteCrdtSpec, digest: &InputDigest) -> Result<Rendered> {
    let analysis = analyze(spec).map_err(|e| anyhow!("{e}"))?;
    let mut lines = vec![spec_header(spec)];
    validation_lines(&analysis.validation, &mut lines);
    let (errors, warnings) = validation_json(&analysis.validation);
    let mut json = json!({
        "command": "analyze",
        "inputs": inputs_json(&[digest]),
        "label": spec.label(),
        "errors": errors,
        "warnings": warnings,
    });
    let obj = json.as_object_mut().expect("object");
    let (exit, text) = match &analysis.verdict {
        AnalysisVerdict::Invalid => {
            obj.insert("verdict".into(), "invalid".into());
            lines.push("verdict: invalid".into());
            (1, lines)
        }
        AnalysisVerdict::NotCommutative(v) => {
            lines.push("commutativity: fail".into());
            lines.push(format!("counterexample: {}", commutativity_text(spec, v)));
            lines.push("verdict: not a CRDT (commutativity fails)".into());
            obj.insert("verdict".into(), "not-commutative".into());
            obj.insert("counterexample".into(), commutativity_json(spec, v));
            (1, lines)
        }
        AnalysisVerdict::NotUndoable(v) => {
            lines.push("commutativity: pass".into());
            lines.push("undoability: fail".into());
            lines.push(format!("counterexample: {}", undoability_text(spec, v)));
            lines.push("verdict: not undoable".into());
            obj.insert("verdict".into(), "not-undoable".into());
            obj.insert("counterexample".into(), undoability_json(spec, v));
            (1, lines)
        }
        AnalysisVerdict::Undoable(eq) => {
            lines.push("commutativity: pass".into());
            lines.push("undoability: pass".into());
            lines.push(format!("group order: {}", eq.group_order));
            lines.push(format!("decomposition: {}", eq.decomposition));
            lines.push(format!("equivalent to: {}", eq.tuple.describe()));
            witness_text(spec, &eq.target, &eq.witness, &mut lines);
            lines.push("verdict: undoable".into());
            obj.insert("verdict".into(), "undoable".into());
            obj.insert("group_order".into(), eq.group_order.into());
            obj.insert("decomposition".into(), decomposition_json(&eq.decomposition));
            obj.insert("equivalent_to".into(), eq.tuple.describe().into());
            obj.insert(
                "witness".into(),
                witness_json(spec, &eq.target, &eq.witness),
            );
            (0, lines)
        }
    };
    Ok(Rendered {
        text: text.join("\n") + "\n",
        json,
        exit,
    })
}

fn analyze_unbounded(kind: &CrdtKind, ball: i64, digest: &InputDigest) -> Result<Rendered> {
    let Some(presentation) = symbolic_presentation(kind) else {
        bail!(
            "{} has an unbounded state space and no symbolic presentation \
             (a component is not undoable); nothing to analyse",
            kind.describe()
        );
    };
    let decomposition = decompose(&presentation);
    let tuple = counters_for(&decomposition).map_err(|e| anyhow!("{e}"))?;
    let check = verify_unbounded_equivalence(kind, ball).map_err(|e| anyhow!("{e}"))?;
    let mut lines = vec![format!("spec: {} (unbounded state space)", kind.describe())];
    lines.push(format!(
        "presentation: symbolic, {} generators, {} relations",
        presentation.generators.len(),
        presentation.relations.rows()
    ));
    lines.push(format!("decomposition: {decomposition}"));
    lines.push(format!("equivalent to: {}", tuple.describe()));
    match &check {
        Some(c) => lines.push(format!(
            "witness: verified on all states with coordinates within ±{} ({} states)",
            c.radius, c.states_checked
        )),
        None => lines.push("witness: decomposition-level (no state-level check for this kind)".into()),
    }
    lines.push("verdict: undoable (presentation-level)".into());
    let json = json!({
        "command": "analyze",
        "inputs": inputs_json(&[digest]),
        "label": kind.describe(),
        "verdict": "undoable-presentation",
        "generators": presentation.generators,
        "relations": presentation.relations.rows(),
        "decomposition": decomposition_json(&decomposition),
        "equivalent_to": tuple.describe(),
        "ball_check": check.map(|c| json!({"radius": c.radius, "states_checked": c.states_checked})),
    });
    Ok(Rendered {
        text: lines.join("\n") + "\n",
        json,
        exit: 0,
    })
}

pub fn cmd_check_axioms(path: &Path, depth: usize) -> Result<Rendered> {
    let (loaded, digest) = load_spec(path)?;
    let spec = match loaded {
        LoadedSpec::Finite(spec) => spec,
        LoadedSpec::Unbounded(kind) => bail!(
            "{} has an unbounded state space; axiom checking needs a finite spec \
             (analyse it via its symbolic presentation with `analyze`)",
            kind.describe()
        ),
    };
    let validation = spec.validate();
    let mut lines = vec![spec_header(&spec)];
    validation_lines(&validation, &mut lines);
    let (errors, warnings) = validation_json(&validation);
    if !validation.is_ok() {
        lines.push("verdict: invalid".into());
        let json = json!({
            "command": "check-axioms",
            "inputs": inputs_json(&[&digest]),
            "label": spec.label(),
            "errors": errors,
            "warnings": warnings,
            "verdict": "invalid",
        });
        return Ok(Rendered {
            text: lines.join("\n") + "\n",
            json,
            exit: 1,
        });
    }

    let axioms = check_axioms(&spec);
    let facts = check_facts(&spec, depth);
    let consequences = check_consequences(&spec, depth);

    let mut json_commutativity = json!("pass");
    match &axioms.commutativity {
        Commutativity::Pass => lines.push("commutativity: pass".into()),
        Commutativity::Fail(v) => {
            lines.push("commutativity: fail".into());
            lines.push(format!("counterexample: {}", commutativity_text(&spec, v)));
            json_commutativity = json!({"verdict": "fail", "counterexample": commutativity_json(&spec, v)});
        }
    }
    let mut json_undoability = json!("pass");
    match &axioms.undoability {
        Undoability::Pass => lines.push("undoability: pass".into()),
        Undoability::Fail(v) => {
            lines.push("undoability: fail".into());
            lines.push(format!("counterexample: {}", undoability_text(&spec, v)));
            json_undoability = json!({"verdict": "fail", "counterexample": undoability_json(&spec, v)});
        }
    }

    let fact_verdicts: BTreeMap<&str, String> = Fact::ALL
        .iter()
        .map(|&f| {
            let verdict = if facts.passed(f) { "pass".to_string() } else { "fail".into() };
            (f.name(), verdict)
        })
        .collect();
    if facts.all_pass() {
        lines.push(format!("facts (depth {}): all 6 pass", facts.depth));
    } else {
        for failure in &facts.failures {
            lines.push(format!(
                "facts (depth {}): {} fails — {}",
                facts.depth,
                failure.fact.name(),
                failure.detail
            ));
        }
    }
    let fact_failures: Vec<Value> = facts
        .failures
        .iter()
        .map(|f| {
            json!({
                "fact": f.fact.name(),
                "state": spec.state_name(f.state),
                "detail": f.detail,
            })
        })
        .collect();

    let totality_json = match &consequences.totality {
        None => json!("pass"),
        Some(t) => json!({
            "op": spec.op_name(t.op),
            "defined_at": spec.state_name(t.defined_at),
            "undefined_at": spec.state_name(t.undefined_at),
        }),
    };
    let negative_json = match &consequences.negative_states {
        None => json!("pass"),
        Some(n) => json!({"action": n.action.render(&spec)}),
    };
    let totality_line = match &consequences.totality {
        None => "totality pass".to_string(),
        Some(t) => format!(
            "totality fails — op `{}` applies at `{}` but not at `{}`",
            spec.op_name(t.op),
            spec.state_name(t.defined_at),
            spec.state_name(t.undefined_at)
        ),
    };
    let negative_line = match &consequences.negative_states {
        None => "negative states pass".to_string(),
        Some(n) => format!(
            "negative states fail — no state maps back to the initial state under `{}`",
            n.action.render(&spec)
        ),
    };
    lines.push(format!(
        "consequences (depth {}): {totality_line}, {negative_line}",
        consequences.depth
    ));

    let all_pass = axioms.all_pass();
    lines.push(format!(
        "verdict: {}",
        if all_pass { "both axioms hold" } else { "axioms violated" }
    ));
    let json = json!({
        "command": "check-axioms",
        "inputs": inputs_json(&[&digest]),
        "label": spec.label(),
        "errors": errors,
        "warnings": warnings,
        "commutativity": json_commutativity,
        "undoability": json_undoability,
        "facts": {
            "depth": facts.depth,
            "verdicts": fact_verdicts,
            "failures": fact_failures,
        },
        "consequences": {
            "depth": consequences.depth,
            "totality": totality_json,
            "negative_states": negative_json,
        },
        "verdict": if all_pass { "pass" } else { "fail" },
    });
    Ok(Rendered {
        text: lines.join("\n") + "\n",
        json,
        exit: i32::from(!all_pass),
    })
}

/// Membership/count/value queries for the final state of one replica.
fn state_queries(kind: &CrdtKind, state: &CrdtState) -> (Vec<String>, Value) {
    match kind {
        CrdtKind::GSet { universe } | CrdtKind::TSet { universe } | CrdtKind::OrSet { universe, .. } => {
            let contains: BTreeMap<&str, bool> = universe
                .iter()
                .map(|e| (e.as_str(), kind.contains(state, e).unwrap_or(false)))
                .collect();
            let line = contains
                .iter()
                .map(|(e, b)| format!("{e}={b}"))
                .collect::<Vec<_>>()
                .join(", ");
            (vec![format!("  contains: {line}")], json!({"contains": contains}))
        }
        CrdtKind::PnSet { universe } => {
            let contains: BTreeMap<&str, bool> = universe
                .iter()
                .map(|e| (e.as_str(), kind.contains(state, e).unwrap_or(false)))
                .collect();
            let counts: BTreeMap<&str, i64> = universe
                .iter()
                .map(|e| (e.as_str(), state.pn_count(e).unwrap_or(0)))
                .collect();
            let line = contains
                .iter()
                .map(|(e, b)| format!("{e}={b}"))
                .collect::<Vec<_>>()
                .join(", ");
            let counts_line = counts
                .iter()
                .map(|(e, c)| format!("{e}:{c}"))
                .collect::<Vec<_>>()
                .join(", ");
            (
                vec![format!("  contains: {line}"), format!("  counts: {counts_line}")],
                json!({"contains": contains, "counts": counts}),
            )
        }
        CrdtKind::Counter | CrdtKind::ModCounter { .. } => {
            let value = state.counter_value().unwrap_or(0);
            (vec![format!("  value: {value}")], json!({"value": value}))
        }
        CrdtKind::Tuple(_) => (Vec::new(), json!({})),
    }
}

pub fn cmd_simulate(path: &Path, seed: Option<u64>) -> Result<Rendered> {
    let (mut scenario, digest) = load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let outcome = run_scenario(&scenario).map_err(|e| anyhow!("{e}"))?;

    let mut lines = vec![format!(
        "scenario: {}, {} replicas, seed {}",
        scenario.kind.describe(),
        scenario.replicas,
        scenario.seed
    )];
    let mut replicas_json = Vec::new();
    for node in &outcome.nodes {
        lines.push(format!("replica {}:", node.id));
        lines.push(format!("  state: {}", node.state));
        let applied = node.applied_log();
        lines.push(format!("  applied: {}", applied.join("; ")));
        let (query_lines, queries) = state_queries(&scenario.kind, &node.state);
        lines.extend(query_lines);
        let mut replica = json!({
            "id": node.id,
            "state": node.state.to_string(),
            "applied": applied,
        });
        replica
            .as_object_mut()
            .expect("object")
            .extend(queries.as_object().cloned().unwrap_or_default());
        replicas_json.push(replica);
    }
    let (verdict, exit) = match &outcome.convergence {
        Convergence::Converged => ("converged".to_string(), 0),
        Convergence::Undelivered => ("not all messages delivered".to_string(), 0),
        Convergence::DeliveryEqualStatesDiffer { left, right } => (
            format!(
                "VIOLATION: replicas {left} and {right} delivered the same messages but differ"
            ),
            1,
        ),
    };
    lines.push(format!("convergence: {verdict}"));
    let json = json!({
        "command": "simulate",
        "inputs": inputs_json(&[&digest]),
        "crdt": scenario.kind.describe(),
        "replicas": replicas_json,
        "seed": scenario.seed,
        "convergence": match &outcome.convergence {
            Convergence::Converged => "converged",
            Convergence::Undelivered => "undelivered",
            Convergence::DeliveryEqualStatesDiffer { .. } => "violation",
        },
    });
    Ok(Rendered {
        text: lines.join("\n") + "\n",
        json,
        exit,
    })
}

pub fn cmd_undo(path: &Path, state: &str, action: &str) -> Result<Rendered> {
    let (loaded, digest) = load_spec(path)?;
    let spec = match loaded {
        LoadedSpec::Finite(spec) => spec,
        LoadedSpec::Unbounded(kind) => bail!(
            "{} has an unbounded state space; undo synthesis needs a finite spec",
            kind.describe()
        ),
    };
    let state_id = spec
        .state_id(state)
        .ok_or_else(|| anyhow!("unknown state `{state}`"))?;
    let names: Vec<&str> = if action.trim().is_empty() {
        Vec::new()
    } else {
        action.split(',').map(str::trim).collect()
    };
    let parsed = spec.parse_action(&names).map_err(|e| anyhow!("{e}"))?;

    let mut lines = vec![spec_header(&spec)];
    lines.push(format!("state: {state}"));
    lines.push(format!("action: {}", parsed.render(&spec)));
    let axioms = check_axioms(&spec);
    if !axioms.all_pass() {
        let mut failed = Vec::new();
        if let Commutativity::Fail(v) = &axioms.commutativity {
            failed.push("commutativity");
            lines.push(format!("commutativity: fail — {}", commutativity_text(&spec, v)));
        }
        if let Undoability::Fail(v) = &axioms.undoability {
            failed.push("undoability");
            lines.push(format!("undoability: fail — {}", undoability_text(&spec, v)));
        }
        lines.push("verdict: undo unavailable (axioms fail)".into());
        let json = json!({
            "command": "undo",
            "inputs": inputs_json(&[&digest]),
            "label": spec.label(),
            "state": state,
            "action": names,
            "verdict": "axioms-fail",
            "failed_axioms": failed,
        });
        return Ok(Rendered {
            text: lines.join("\n") + "\n",
            json,
            exit: 1,
        });
    }

    match synthesize_undo(&spec, state_id, &parsed) {
        Ok(undo) => {
            lines.push(format!("undo: {}", render_or_empty(&undo.render(&spec))));
            let json = json!({
                "command": "undo",
                "inputs": inputs_json(&[&digest]),
                "label": spec.label(),
                "state": state,
                "action": names,
                "undo": undo.ops().iter().map(|&o| spec.op_name(o).to_string()).collect::<Vec<_>>(),
                "length": undo.len(),
                "verdict": "ok",
            });
            Ok(Rendered {
                text: lines.join("\n") + "\n",
                json,
                exit: 0,
            })
        }
        Err(UndoError::NotApplicable { failed_at }) => {
            lines.push(format!(
                "verdict: action does not apply at `{state}` (op index {failed_at} is undefined there)"
            ));
            let json = json!({
                "command": "undo",
                "inputs": inputs_json(&[&digest]),
                "label": spec.label(),
                "state": state,
                "action": names,
                "verdict": "not-applicable",
                "failed_at": failed_at,
            });
            Ok(Rendered {
                text: lines.join("\n") + "\n",
                json,
                exit: 1,
            })
        }
        Err(UndoError::NoUndo { .. }) => bail!("internal error: undo missing on an axiom-passing spec"),
    }
}

struct Side {
    name: &'static str,
    digest: InputDigest,
    decomposition: CyclicDecomposition,
    finite: Option<FiniteCrdtSpec>,
    label: String,
    header: String,
}

enum SideError {
    Domain(String, Value),
    Input(anyhow::Error),
}

fn side_of(name: &'static str, path: &Path) -> Result<Result<Side, SideError>> {
    let (loaded, digest) = load_spec(path)?;
    match loaded {
        LoadedSpec::Finite(spec) => match build_action_group(&spec) {
            Ok(group) => {
                let presentation = extract_presentation(&group).map_err(|e| anyhow!("{e}"))?;
                let decomposition = decompose(&presentation);
                Ok(Ok(Side {
                    name,
                    digest,
                    decomposition,
                    label: spec.label().to_string(),
                    header: format!(
                        "{name}: {} ({} states, {} ops)",
                        spec.label(),
                        spec.num_states(),
                        spec.num_ops()
                    ),
                    finite: Some(spec),
                }))
            }
            Err(GroupError::Invalid(report)) => {
                let (errors, _) = validation_json(&report);
                Ok(Err(SideError::Domain(
                    format!("{name}: {} — invalid spec: {}", spec.label(), errors.join("; ")),
                    json!({"side": name, "verdict": "invalid", "errors": errors}),
                )))
            }
            Err(GroupError::NotCommutative(v)) => Ok(Err(SideError::Domain(
                format!(
                    "{name}: {} — commutativity fails: {}",
                    spec.label(),
                    commutativity_text(&spec, &v)
                ),
                json!({"side": name, "verdict": "not-commutative",
                       "counterexample": commutativity_json(&spec, &v)}),
            ))),
            Err(GroupError::NotUndoable(v)) => Ok(Err(SideError::Domain(
                format!(
                    "{name}: {} — undoability fails: {}",
                    spec.label(),
                    undoability_text(&spec, &v)
                ),
                json!({"side": name, "verdict": "not-undoable",
                       "counterexample": undoability_json(&spec, &v)}),
            ))),
            Err(e) => Ok(Err(SideError::Input(anyhow!("{e}")))),
        },
        LoadedSpec::Unbounded(kind) => match symbolic_presentation(&kind) {
            Some(p) => {
                let decomposition = decompose(&p);
                Ok(Ok(Side {
                    name,
                    digest,
                    decomposition,
                    label: kind.describe(),
                    header: format!("{name}: {} (unbounded state space)", kind.describe()),
                    finite: None,
                }))
            }
            None => Ok(Err(SideError::Input(anyhow!(
                "{name}: {} is unbounded and has no symbolic presentation",
                kind.describe()
            )))),
        },
    }
}

pub fn cmd_equiv(path_a: &Path, path_b: &Path) -> Result<Rendered> {
    let a = side_of("left", path_a)?;
    let b = side_of("right", path_b)?;
    let (a, b) = match (a, b) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(SideError::Input(e)), _) | (_, Err(SideError::Input(e))) => return Err(e),
        (side_a, side_b) => {
            // At least one side failed the axioms: not comparable.
            let mut lines = Vec::new();
            let mut details = Vec::new();
            for side in [side_a, side_b] {
                match side {
                    Ok(s) => lines.push(s.header),
                    Err(SideError::Domain(line, json)) => {
                        lines.push(line);
                        details.push(json);
                    }
                    Err(SideError::Input(_)) => unreachable!("handled above"),
                }
            }
            lines.push("verdict: not comparable (a side fails the axioms)".into());
            let json = json!({
                "command": "equiv",
                "verdict": "not-comparable",
                "failures": details,
            });
            return Ok(Rendered {
                text: lines.join("\n") + "\n",
                json,
                exit: 1,
            });
        }
    };

    let mut lines = vec![
        format!("{} — decomposition {}", a.header, a.decomposition),
        format!("{} — decomposition {}", b.header, b.decomposition),
    ];
    let base = json!({
        "command": "equiv",
        "inputs": inputs_json(&[&a.digest, &b.digest]),
        "left": {"label": a.label, "decomposition": decomposition_json(&a.decomposition)},
        "right": {"label": b.label, "decomposition": decomposition_json(&b.decomposition)},
    });
    let mut json = base;
    let obj = json.as_object_mut().expect("object");

    if a.decomposition != b.decomposition {
        lines.push("verdict: not isomorphic".into());
        obj.insert("verdict".into(), "not-isomorphic".into());
        return Ok(Rendered {
            text: lines.join("\n") + "\n",
            json,
            exit: 1,
        });
    }

    match (&a.finite, &b.finite) {
        (Some(sa), Some(sb)) => {
            let witness = match synthesize_equivalence(sa, sb) {
                Ok(w) => w,
                Err(EquivError::NotIsomorphic { .. }) => {
                    unreachable!("decompositions already matched")
                }
                Err(e) => return Err(anyhow!("{e}")),
            };
            lines.push("verdict: isomorphic".into());
            witness_text(sa, sb, &witness, &mut lines);
            obj.insert("verdict".into(), "isomorphic".into());
            obj.insert("witness".into(), witness_json(sa, sb, &witness));
        }
        _ => {
            lines.push("verdict: isomorphic (presentation-level; at least one state space is unbounded)".into());
            obj.insert("verdict".into(), "isomorphic-presentation".into());
        }
    }
    Ok(Rendered {
        text: lines.join("\n") + "\n",
        json,
        exit: 0,
    })
}
