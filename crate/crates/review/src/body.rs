//! Request bodies, parsed by hand so that every rejection names the
//! offending field.

use serde_json::{Map, Value};

use seedtrack_core::segment::{BackendParams, BackendSpec};
use seedtrack_core::{BackendRegistry, LabelRunConfig};

use crate::error::ApiError;

type Parsed<T> = Result<T, ApiError>;

/// `{"frame_index": k, "points": [{"x": .., "y": ..}, ..]}`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReseedRequest {
    pub frame_index: usize,
    pub points: Vec<(u32, u32)>,
}

fn object<'a>(v: &'a Value, field: &str) -> Parsed<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| ApiError::bad_field(field, format!("`{field}` must be an object")))
}

fn unsigned(v: Option<&Value>, field: &str) -> Parsed<u64> {
    match v {
        None | Some(Value::Null) => Err(ApiError::bad_field(field, format!("missing `{field}`"))),
        Some(v) => v.as_u64().ok_or_else(|| {
            ApiError::bad_field(field, format!("`{field}` must be a non-negative integer, got {v}"))
        }),
    }
}

fn no_unknown_keys(map: &Map<String, Value>, prefix: &str, known: &[&str]) -> Parsed<()> {
    match map.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => {
            let field = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            Err(ApiError::bad_field(&field, format!("unknown field `{field}`")))
        }
        None => Ok(()),
    }
}

fn json(bytes: &[u8]) -> Parsed<Value> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::bad_field("body", format!("body is not valid JSON: {e}")))
}

pub fn reseed_request(bytes: &[u8]) -> Parsed<ReseedRequest> {
    let v = json(bytes)?;
    let body = object(&v, "body")?;
    no_unknown_keys(body, "", &["frame_index", "points"])?;
    let frame_index = unsigned(body.get("frame_index"), "frame_index")? as usize;
    let points = match body.get("points") {
        Some(Value::Array(a)) if !a.is_empty() => a,
        Some(Value::Array(_)) => return Err(ApiError::bad_field("points", "`points` is empty")),
        Some(_) => return Err(ApiError::bad_field("points", "`points` must be an array")),
        None => return Err(ApiError::bad_field("points", "missing `points`")),
    };
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let field = format!("points[{i}]");
        let p = object(p, &field)?;
        no_unknown_keys(p, &field, &["x", "y"])?;
        let coord = |axis: &str| -> Parsed<u32> {
            let f = format!("{field}.{axis}");
            let v = unsigned(p.get(axis), &f)?;
            u32::try_from(v).map_err(|_| ApiError::bad_field(&f, format!("`{f}` is too large")))
        };
        out.push((coord("x")?, coord("y")?));
    }
    Ok(ReseedRequest {
        frame_index,
        points: out,
    })
}

fn backend_spec(v: &Value, field: &str, known: &[&str]) -> Parsed<BackendSpec> {
    let check = |name: &str, f: &str| -> Parsed<()> {
        if known.contains(&name) {
            Ok(())
        } else {
            Err(ApiError::bad_field(
                f,
                format!("unknown backend `{name}` (available: {})", known.join(", ")),
            ))
        }
    };
    match v {
        Value::String(name) => {
            check(name, field)?;
            Ok(BackendSpec::named(name.clone()))
        }
        Value::Object(map) => {
            no_unknown_keys(map, field, &["name", "params"])?;
            let name_field = format!("{field}.name");
            let name = map
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| ApiError::bad_field(&name_field, format!("`{name_field}` must be a string")))?;
            check(name, &name_field)?;
            let mut params = BackendParams::new();
            if let Some(p) = map.get("params") {
                let pf = format!("{field}.params");
                for (k, v) in object(p, &pf)? {
                    let text = match v {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.to_string(),
                        Value::Bool(b) => b.to_string(),
                        _ => {
                            return Err(ApiError::bad_field(
                                format!("{pf}.{k}"),
                                "parameter values must be strings, numbers or booleans",
                            ))
                        }
                    };
                    params.insert(k.clone(), text);
                }
            }
            Ok(BackendSpec {
                name: name.to_string(),
                params,
            })
        }
        _ => Err(ApiError::bad_field(field, format!("`{field}` must be a name or an object"))),
    }
}

/// `{"config": {...}}`; an empty body or a missing `config` selects the
/// default backends.
pub fn label_request(bytes: &[u8], registry: &BackendRegistry) -> Parsed<LabelRunConfig> {
    let mut config = LabelRunConfig::default();
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(config);
    }
    let v = json(bytes)?;
    let body = object(&v, "body")?;
    no_unknown_keys(body, "", &["config"])?;
    let c = match body.get("config") {
        None | Some(Value::Null) => return Ok(config),
        Some(c) => object(c, "config")?,
    };
    no_unknown_keys(c, "config", &["segmenter", "tracker", "start_frame", "stop_frame"])?;
    if let Some(s) = c.get("segmenter") {
        config.segmenter = backend_spec(s, "config.segmenter", &registry.segmenter_names())?;
    }
    if let Some(t) = c.get("tracker") {
        config.tracker = backend_spec(t, "config.tracker", &registry.tracker_names())?;
    }
    for (key, slot) in [
        ("start_frame", &mut config.start_frame),
        ("stop_frame", &mut config.stop_frame),
    ] {
        match c.get(key) {
            None | Some(Value::Null) => {}
            v => *slot = Some(unsigned(v, &format!("config.{key}"))? as usize),
        }
    }
    Ok(config)
}
