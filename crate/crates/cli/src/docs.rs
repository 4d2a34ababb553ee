//! File formats: spec documents (builtin or explicit) and scenario
//! documents, both UTF-8 JSON.
//!
//! Explicit spec schema:
//! `{"states": [..], "initial": "..", "ops": [..],
//!   "transitions": [{"from","op","to"}, ..]}` — round-trips losslessly.
//!
//! Builtin schema: `{"builtin": "<kind>", "params": {..}}` with kinds
//! `counter`, `modcounter` (`n`, optional `ops` restriction), `gset`,
//! `orset` (`universe`, `tags`), `pnset`, `tset` (`universe`), and `tuple`
//! (`components`: a list of builtin documents). The optional `ops` list
//! restricts the finite encoding to the named operations.
//!
//! Scenario schema: `{"crdt": <builtin doc>, "replicas": n, "seed": n,
//! "events": [..]}` where each event is `{"local": {"replica", "op"}}`,
//! `{"deliver": {"replica", "origin", "seq"}}`, or `"deliver_all"`.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crdt_lab::sim::{Event, Scenario};
use crdt_lab::{CrdtKind, FiniteCrdtSpec, SourceOp};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecDocument {
    Builtin(BuiltinDoc),
    Explicit(ExplicitDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuiltinDoc {
    pub builtin: String,
    #[serde(default, skip_serializing_if = "Params::is_empty")]
    pub params: Params,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub universe: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tags: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<BuiltinDoc>>,
    /// Restrict the finite encoding to these op names.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ops: Option<Vec<String>>,
}

impl Params {
    pub fn is_empty(&self) -> bool {
        self.n.is_none()
            && self.universe.is_none()
            && self.tags.is_none()
            && self.components.is_none()
            && self.ops.is_none()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitDoc {
    pub states: Vec<String>,
    pub initial: String,
    pub ops: Vec<String>,
    pub transitions: Vec<TransitionDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub op: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub crdt: BuiltinDoc,
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    pub events: Vec<EventDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventDoc {
    Local { local: LocalEventDoc },
    Deliver { deliver: DeliverEventDoc },
    Plain(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalEventDoc {
    pub replica: u64,
    pub op: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeliverEventDoc {
    pub replica: u64,
    pub origin: u64,
    pub seq: u64,
}

/// A spec input after interpretation: either an explicit finite machine, or
/// a builtin kind whose state space is unbounded and which is analysed at
/// the presentation level.
pub enum LoadedSpec {
    Finite(FiniteCrdtSpec),
    Unbounded(CrdtKind),
}

/// Identifies an input file in reports.
#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

fn read_input(path: &Path) -> Result<(String, InputDigest)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: hex_digest(&bytes),
    };
    let text = String::from_utf8(bytes).context("input is not UTF-8")?;
    Ok((text, digest))
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn kind_of(doc: &BuiltinDoc) -> Result<CrdtKind> {
    let universe = || -> Result<Vec<String>> {
        doc.params
            .universe
            .clone()
            .ok_or_else(|| anyhow!("builtin `{}` needs params.universe", doc.builtin))
    };
    let kind = match doc.builtin.as_str() {
        "counter" => CrdtKind::counter(),
        "modcounter" => {
            let n = doc
                .params
                .n
                .ok_or_else(|| anyhow!("builtin `modcounter` needs params.n"))?;
            if n == 0 {
                bail!("modcounter modulus must be at least 1");
            }
            CrdtKind::mod_counter(n)
        }
        "gset" => CrdtKind::gset(universe()?),
        "orset" => CrdtKind::orset(universe()?, doc.params.tags.unwrap_or(1)),
        "pnset" => CrdtKind::pnset(universe()?),
        "tset" => CrdtKind::tset(universe()?),
        "tuple" => {
            let components = doc
                .params
                .components
                .as_ref()
                .ok_or_else(|| anyhow!("builtin `tuple` needs params.components"))?;
            let parts: Result<Vec<CrdtKind>> = components.iter().map(kind_of).collect();
            CrdtKind::tuple(parts?)
        }
        other => bail!("unknown builtin kind `{other}`"),
    };
    kind.check_params().map_err(|e| anyhow!("{e}"))?;
    Ok(kind)
}

fn spec_of(doc: &SpecDocument, label: &str) -> Result<LoadedSpec> {
    match doc {
        SpecDocument::Builtin(b) => {
            let kind = kind_of(b)?;
            match kind.to_finite_spec() {
                Ok(spec) => {
                    let spec = match &b.params.ops {
                        Some(keep) => spec
                            .restrict_ops(keep)
                            .map_err(|e| anyhow!("params.ops: {e}"))?,
                        None => spec,
                    };
                    Ok(LoadedSpec::Finite(spec))
                }
                Err(crdt_lab::zoo::FinitizeError::Unbounded { .. }) => {
                    if b.params.ops.is_some() {
                        bail!("params.ops is only supported for finite-state kinds");
                    }
                    Ok(LoadedSpec::Unbounded(kind))
                }
                Err(e) => Err(anyhow!("{e}")),
            }
        }
        SpecDocument::Explicit(e) => {
            let transitions = e
                .transitions
                .iter()
                .map(|t| (t.from.clone(), t.op.clone(), t.to.clone()))
                .collect();
            let spec = FiniteCrdtSpec::new(
                label.to_string(),
                e.states.clone(),
                &e.initial,
                e.ops.clone(),
                transitions,
            )
            .map_err(|err| anyhow!("invalid spec: {err}"))?;
            Ok(LoadedSpec::Finite(spec))
        }
    }
}

pub fn load_spec(path: &Path) -> Result<(LoadedSpec, InputDigest)> {
    let (text, digest) = read_input(path)?;
    let doc: SpecDocument = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse `{}` as a spec document", path.display()))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spec".to_string());
    let loaded = spec_of(&doc, &label)?;
    Ok((loaded, digest))
}

pub fn parse_spec_document(text: &str, label: &str) -> Result<(SpecDocument, LoadedSpec)> {
    let doc: SpecDocument = serde_json::from_str(text).context("cannot parse spec document")?;
    let loaded = spec_of(&doc, label)?;
    Ok((doc, loaded))
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, InputDigest)> {
    let (text, digest) = read_input(path)?;
    let doc: ScenarioDoc = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse `{}` as a scenario", path.display()))?;
    let kind = kind_of(&doc.crdt)?;
    if doc.crdt.params.ops.is_some() {
        bail!("params.ops is not supported in simulation");
    }
    let mut events = Vec::with_capacity(doc.events.len());
    for (i, ev) in doc.events.iter().enumerate() {
        let event = match ev {
            EventDoc::Local { local } => Event::Local {
                replica: local.replica,
                op: SourceOp::parse(&local.op)
                    .map_err(|e| anyhow!("event {i}: {e}"))?,
            },
            EventDoc::Deliver { deliver } => Event::Deliver {
                replica: deliver.replica,
                origin: deliver.origin,
                seq: deliver.seq,
            },
            EventDoc::Plain(s) if s == "deliver_all" => Event::DeliverAll,
            EventDoc::Plain(s) => bail!("event {i}: unknown event `{s}`"),
        };
        events.push(event);
    }
    Ok((
        Scenario {
            kind,
            replicas: doc.replicas,
            seed: doc.seed,
            events,
        },
        digest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_documents_round_trip() {
        let text = r#"{
  "states": ["a", "b"],
  "initial": "a",
  "ops": ["x"],
  "transitions": [
    {"from": "a", "op": "x", "to": "b"},
    {"from": "b", "op": "x", "to": "a"}
  ]
}"#;
        let (doc, loaded) = parse_spec_document(text, "two").unwrap();
        let LoadedSpec::Finite(spec) = loaded else {
            panic!("expected a finite spec");
        };
        assert_eq!(spec.num_states(), 2);
        // Parse -> serialize -> parse preserves every field in order.
        let serialized = serde_json::to_string_pretty(&doc).unwrap();
        let reparsed: SpecDocument = serde_json::from_str(&serialized).unwrap();
        let original: serde_json::Value = serde_json::from_str(text).unwrap();
        let round: serde_json::Value =
            serde_json::from_str(&serde_json::to_string(&reparsed).unwrap()).unwrap();
        assert_eq!(original, round);
    }

    #[test]
    fn builtin_kinds_parse() {
        let doc: BuiltinDoc =
            serde_json::from_str(r#"{"builtin": "modcounter", "params": {"n": 5}}"#).unwrap();
        assert_eq!(kind_of(&doc).unwrap(), CrdtKind::mod_counter(5));

        let doc: BuiltinDoc = serde_json::from_str(
            r#"{"builtin": "tuple", "params": {"components": [
                {"builtin": "modcounter", "params": {"n": 2}},
                {"builtin": "tset", "params": {"universe": ["A"]}}
            ]}}"#,
        )
        .unwrap();
        assert_eq!(
            kind_of(&doc).unwrap(),
            CrdtKind::tuple([CrdtKind::mod_counter(2), CrdtKind::tset(["A"])])
        );

        let doc: BuiltinDoc = serde_json::from_str(r#"{"builtin": "frob"}"#).unwrap();
        assert!(kind_of(&doc).is_err());
    }

    #[test]
    fn ops_restriction_applies_to_the_finite_encoding() {
        let text = r#"{"builtin": "modcounter", "params": {"n": 5, "ops": ["inc"]}}"#;
        let (_, loaded) = parse_spec_document(text, "inconly").unwrap();
        let LoadedSpec::Finite(spec) = loaded else {
            panic!("expected finite");
        };
        assert_eq!(spec.op_names(), &["inc".to_string()]);
    }

    #[test]
    fn unbounded_builtin_loads_as_kind() {
        let (_, loaded) = parse_spec_document(r#"{"builtin": "counter"}"#, "c").unwrap();
        assert!(matches!(loaded, LoadedSpec::Unbounded(CrdtKind::Counter)));
    }
}
