use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::RunReport;

/// Per-rater labeling times: rater id → (frame index, seconds).
pub type TimingLog = BTreeMap<String, Vec<(usize, f64)>>;

#[derive(Debug, Deserialize)]
struct TimingRow {
    rater: String,
    frame: usize,
    seconds: f64,
}

/// Reads a CSV timing log with header `rater,frame,seconds`.
pub fn read_timings(reader: impl Read) -> Result<TimingLog> {
    let mut log = TimingLog::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize::<TimingRow>() {
        let row = row.map_err(|e| Error::InvalidInput(format!("timing log: {e}")))?;
        if !(row.seconds.is_finite() && row.seconds > 0.0) {
            return Err(Error::InvalidInput(format!(
                "timing log: non-positive duration for rater `{}` frame {}",
                row.rater, row.frame
            )));
        }
        log.entry(row.rater).or_default().push((row.frame, row.seconds));
    }
    if log.is_empty() {
        return Err(Error::InvalidInput("timing log is empty".into()));
    }
    Ok(log)
}

/// Rates below 1 fps keep three decimals (`0.008`); faster rates drop
/// trailing zeros (`5`, `4.87`).
pub fn format_fps(fps: f64) -> String {
    if fps < 1.0 {
        return format!("{fps:.3}");
    }
    let s = format!("{fps:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub human_fps: f64,
    pub machine_fps: f64,
    /// machine_fps / human_fps
    pub speedup: f64,
    pub human_seconds_per_frame: f64,
    pub human_samples: usize,
    pub per_rater_fps: BTreeMap<String, f64>,
}

impl SpeedReport {
    /// Humans' fps from the mean seconds per frame pooled over all raters;
    /// the machine's from frames over wall-clock seconds.
    pub fn new(human: &TimingLog, machine: &RunReport) -> Result<SpeedReport> {
        let all: Vec<f64> = human.values().flatten().map(|(_, s)| *s).collect();
        if all.is_empty() {
            return Err(Error::InvalidInput("no human timings".into()));
        }
        let mean_spf = all.iter().sum::<f64>() / all.len() as f64;
        let machine_fps = machine.fps();
        if !(machine_fps.is_finite() && machine_fps > 0.0) {
            return Err(Error::InvalidInput("machine run has no measurable throughput".into()));
        }
        let per_rater_fps = human
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(id, v)| {
                let spf = v.iter().map(|(_, s)| s).sum::<f64>() / v.len() as f64;
                (id.clone(), 1.0 / spf)
            })
            .collect();
        let human_fps = 1.0 / mean_spf;
        Ok(SpeedReport {
            human_fps,
            machine_fps,
            speedup: machine_fps / human_fps,
            human_seconds_per_frame: mean_spf,
            human_samples: all.len(),
            per_rater_fps,
        })
    }

    /// `annotators fps / machine fps`, e.g. `0.008 fps / 5 fps`.
    pub fn cell(&self) -> String {
        format!("{} fps / {} fps", format_fps(self.human_fps), format_fps(self.machine_fps))
    }

    pub fn speedup_text(&self) -> String {
        let s = format!("{:.1}", self.speedup);
        format!("{}×", s.trim_end_matches('0').trim_end_matches('.'))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("annotation speed (annotators / machine): {}\n", self.cell());
        s.push_str(&format!("speedup: {}\n", self.speedup_text()));
        s.push_str(&format!(
            "human mean: {:.2} s/frame over {} samples\n",
            self.human_seconds_per_frame, self.human_samples
        ));
        for (id, fps) in &self.per_rater_fps {
            s.push_str(&format!("  {id:<12}{} fps\n", format_fps(*fps)));
        }
        s
    }
}
