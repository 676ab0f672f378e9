use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::adapter::{AdapterProcess, AdapterSegmenter, AdapterTracker, SharedAdapter, DEFAULT_TIMEOUT};
use super::{ChromaFloodSegmenter, OverlapTracker, PromptableSegmenter, Tracker, PROPOSAL_COUNT};
use crate::error::{Error, Result};

pub type BackendParams = BTreeMap<String, String>;

/// A backend selected by registry name plus its string parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    #[serde(default)]
    pub params: BackendParams,
}

impl BackendSpec {
    pub fn named(name: impl Into<String>) -> Self {
        BackendSpec {
            name: name.into(),
            params: BackendParams::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }
}

/// Shared resources for the backends of one run. Adapter backends with the
/// same command share a single child process.
#[derive(Default)]
pub struct BuildContext {
    adapters: HashMap<String, SharedAdapter>,
}

impl BuildContext {
    pub fn adapter(&mut self, params: &BackendParams) -> Result<SharedAdapter> {
        let command = params
            .get("command")
            .ok_or_else(|| Error::InvalidConfig("adapter backend needs a `command` param".into()))?;
        let timeout = match params.get("timeout_s") {
            Some(s) => Duration::from_secs_f64(parse_param::<f64>("timeout_s", s)?),
            None => DEFAULT_TIMEOUT,
        };
        if let Some(p) = self.adapters.get(command) {
            return Ok(p.clone());
        }
        let p = Arc::new(Mutex::new(AdapterProcess::spawn(command, timeout)?));
        self.adapters.insert(command.clone(), p.clone());
        Ok(p)
    }
}

type SegmenterFactory =
    Box<dyn Fn(&BackendParams, &mut BuildContext) -> Result<Box<dyn PromptableSegmenter>> + Send + Sync>;
type TrackerFactory =
    Box<dyn Fn(&BackendParams, &mut BuildContext) -> Result<Box<dyn Tracker>> + Send + Sync>;

/// Name → factory tables for segmenters and trackers.
pub struct BackendRegistry {
    segmenters: BTreeMap<String, SegmenterFactory>,
    trackers: BTreeMap<String, TrackerFactory>,
}

/// The segmenter/tracker pair driving one labeling run.
pub struct Backends {
    pub segmenter: Box<dyn PromptableSegmenter>,
    pub tracker: Box<dyn Tracker>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("segmenter", &self.segmenter.name())
            .field("tracker", &self.tracker.name())
            .finish()
    }
}

fn parse_param<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse param `{key}` = `{value}`")))
}

fn reject_unknown(params: &BackendParams, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::InvalidConfig(format!("unknown param `{k}`"))),
        None => Ok(()),
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            segmenters: BTreeMap::new(),
            trackers: BTreeMap::new(),
        }
    }

    /// Registry holding `chroma-flood`, `overlap` and the `adapter` pair.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register_segmenter("chroma-flood", |params, _| {
            reject_unknown(params, &["tolerances"])?;
            let seg = match params.get("tolerances") {
                Some(list) => {
                    let values: Vec<u8> = list
                        .split(',')
                        .map(|t| parse_param("tolerances", t))
                        .collect::<Result<_>>()?;
                    let arr: [u8; PROPOSAL_COUNT] = values.try_into().map_err(|_| {
                        Error::InvalidConfig(format!("need {PROPOSAL_COUNT} tolerances"))
                    })?;
                    ChromaFloodSegmenter::new(arr)?
                }
                None => ChromaFloodSegmenter::default(),
            };
            Ok(Box::new(seg))
        });
        r.register_tracker("overlap", |params, _| {
            reject_unknown(params, &["loss_threshold", "sigma_span"])?;
            let mut t = OverlapTracker::default();
            if params.contains_key("loss_threshold") || params.contains_key("sigma_span") {
                let loss = params
                    .get("loss_threshold")
                    .map(|v| parse_param("loss_threshold", v))
                    .transpose()?
                    .unwrap_or(super::DEFAULT_LOSS_THRESHOLD);
                let span = params
                    .get("sigma_span")
                    .map(|v| parse_param("sigma_span", v))
                    .transpose()?
                    .unwrap_or(super::DEFAULT_SIGMA_SPAN);
                t = OverlapTracker::new(loss, span)?;
            }
            Ok(Box::new(t))
        });
        r.register_segmenter("adapter", |params, ctx| {
            reject_unknown(params, &["command", "timeout_s"])?;
            Ok(Box::new(AdapterSegmenter::new(ctx.adapter(params)?)))
        });
        r.register_tracker("adapter", |params, ctx| {
            reject_unknown(params, &["command", "timeout_s"])?;
            Ok(Box::new(AdapterTracker::new(ctx.adapter(params)?)))
        });
        r
    }

    pub fn register_segmenter<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BackendParams, &mut BuildContext) -> Result<Box<dyn PromptableSegmenter>> + Send + Sync + 'static,
    {
        self.segmenters.insert(name.to_string(), Box::new(factory));
    }

    pub fn register_tracker<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&BackendParams, &mut BuildContext) -> Result<Box<dyn Tracker>> + Send + Sync + 'static,
    {
        self.trackers.insert(name.to_string(), Box::new(factory));
    }

    pub fn segmenter_names(&self) -> Vec<&str> {
        self.segmenters.keys().map(String::as_str).collect()
    }

    pub fn tracker_names(&self) -> Vec<&str> {
        self.trackers.keys().map(String::as_str).collect()
    }

    pub fn build(&self, segmenter: &BackendSpec, tracker: &BackendSpec) -> Result<Backends> {
        let mut ctx = BuildContext::default();
        let seg = self
            .segmenters
            .get(&segmenter.name)
            .ok_or_else(|| Error::UnknownBackend(segmenter.name.clone()))?;
        let trk = self
            .trackers
            .get(&tracker.name)
            .ok_or_else(|| Error::UnknownBackend(tracker.name.clone()))?;
        Ok(Backends {
            segmenter: seg(&segmenter.params, &mut ctx)?,
            tracker: trk(&tracker.params, &mut ctx)?,
        })
    }
}
