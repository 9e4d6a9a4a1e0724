//! Run configuration: defaults, then a JSON file, then command-line
//! overrides, with the origin of every resolved value recorded.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use ligbind::encoder::ModelConfig;
use ligbind::physics::PhysicsConfig;
use ligbind::training::TrainConfig;

use crate::Fail;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Dataset directory holding `manifest.json`.
    pub data: Option<PathBuf>,
    /// Checkpoint to write.
    pub out: Option<PathBuf>,
    /// History CSV; defaults to the checkpoint path with `.history.csv`.
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub physics: PhysicsConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn validate(&self) -> ligbind::Result<()> {
        self.model.validate()?;
        self.physics.validate()?;
        self.train.validate()
    }

    pub fn history_path(&self) -> Option<PathBuf> {
        self.paths
            .history
            .clone()
            .or_else(|| self.paths.out.as_ref().map(|p| p.with_extension("history.csv")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    /// Dotted leaf path → origin.
    pub provenance: BTreeMap<String, Source>,
}

impl Resolved {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.config).expect("config serializes");
        s.push('\n');
        s
    }

    /// One `path = value (source)` line per leaf.
    pub fn provenance_report(&self) -> String {
        let value = serde_json::to_value(&self.config).expect("config serializes");
        let mut leaves = BTreeMap::new();
        collect_leaves("", &value, &mut leaves);
        let mut s = String::new();
        for (path, v) in leaves {
            let src = self.provenance.get(&path).copied().unwrap_or(Source::Default);
            s.push_str(&format!("{path} = {v} ({src})\n"));
        }
        s
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn collect_leaves(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                collect_leaves(&join(prefix, k), child, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn mark(prov: &mut BTreeMap<String, Source>, prefix: &str, v: &Value, src: Source) {
    let nested = format!("{prefix}.");
    prov.retain(|k, _| k != prefix && !k.starts_with(&nested));
    let mut leaves = BTreeMap::new();
    collect_leaves(prefix, v, &mut leaves);
    for k in leaves.into_keys() {
        prov.insert(k, src);
    }
}

fn merge(base: &mut Value, layer: &Value, prefix: &str, prov: &mut BTreeMap<String, Source>, src: Source) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, lv) in l {
                let path = join(prefix, k);
                match b.get_mut(k) {
                    Some(bv) if bv.is_object() && lv.is_object() => merge(bv, lv, &path, prov, src),
                    _ => {
                        b.insert(k.clone(), lv.clone());
                        mark(prov, &path, lv, src);
                    }
                }
            }
        }
        (base, layer) => {
            *base = layer.clone();
            mark(prov, prefix, layer, src);
        }
    }
}

/// Parses `a.b.c=value`. The value is read as JSON when possible and as a
/// bare string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value), Fail> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Fail::Config(format!("override `{s}` must have the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Fail::Config(format!("override `{s}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok((key.to_string(), value))
}

fn nest(path: &str, value: Value) -> Value {
    path.rsplit('.').fold(value, |acc, seg| {
        let mut m = Map::new();
        m.insert(seg.to_string(), acc);
        Value::Object(m)
    })
}

pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Resolved, Fail> {
    let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut provenance = BTreeMap::new();
    mark(&mut provenance, "", &value, Source::Default);
    provenance.remove("");

    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fail::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let layer: Value = serde_json::from_str(&text)
            .map_err(|e| Fail::Config(format!("config file {} is not valid JSON: {e}", path.display())))?;
        if !layer.is_object() {
            return Err(Fail::Config(format!("config file {} must hold a JSON object", path.display())));
        }
        merge(&mut value, &layer, "", &mut provenance, Source::File);
    }
    for (key, v) in overrides {
        merge(&mut value, &nest(key, v.clone()), "", &mut provenance, Source::Flag);
    }

    let config: RunConfig = serde_json::from_value(value).map_err(|e| Fail::Config(format!("invalid configuration: {e}")))?;
    config.validate().map_err(|e| Fail::Config(e.to_string()))?;
    Ok(Resolved { config, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"model": {"hidden_dim": 32, "num_heads": 2}, "train": {"max_epochs": 5}}"#).unwrap();
        let r = resolve(Some(&path), &[parse_override("model.hidden_dim=16").unwrap()]).unwrap();
        assert_eq!(r.config.model.hidden_dim, 16);
        assert_eq!(r.config.model.num_heads, 2);
        assert_eq!(r.config.train.max_epochs, 5);
        assert_eq!(r.provenance["model.hidden_dim"], Source::Flag);
        assert_eq!(r.provenance["model.num_heads"], Source::File);
        assert_eq!(r.provenance["model.k"], Source::Default);
    }

    #[test]
    fn printed_config_reproduces_itself() {
        let r = resolve(None, &[parse_override("physics.offset_bound=null").unwrap()]).unwrap();
        assert_eq!(r.config.physics.offset_bound, None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("printed.json");
        std::fs::write(&path, r.to_json()).unwrap();
        let again = resolve(Some(&path), &[]).unwrap();
        assert_eq!(again.config, r.config);
        assert_eq!(again.to_json(), r.to_json());
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        assert!(matches!(resolve(Some(Path::new("/nonexistent/c.json")), &[]), Err(Fail::Config(m)) if m.contains("/nonexistent/c.json")));
        assert!(matches!(resolve(None, &[parse_override("model.depth=3").unwrap()]), Err(Fail::Config(_))));
        assert!(matches!(resolve(None, &[parse_override("model.num_heads=3").unwrap()]), Err(Fail::Config(_))));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn string_overrides_fall_back_to_text() {
        let (k, v) = parse_override("paths.data=some/dir").unwrap();
        assert_eq!(k, "paths.data");
        assert_eq!(v, Value::String("some/dir".into()));
        let r = resolve(None, &[(k, v)]).unwrap();
        assert_eq!(r.config.paths.data, Some(PathBuf::from("some/dir")));
        assert_eq!(r.config.history_path(), None);
    }
}
