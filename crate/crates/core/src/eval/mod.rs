//! Annotation quality and speed evaluation.
//!
//! Aggregates use the arithmetic mean and the sample standard deviation
//! (n − 1 denominator; 0 for a single value). Mean ± std cells are printed
//! with three decimals, e.g. `0.982 ± 0.011`.

pub mod rle;
mod speed;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

pub use speed::{format_fps, read_timings, SpeedReport, TimingLog};

/// `2|A∩B| / (|A|+|B|)`. Two empty masks agree perfectly (1.0).
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std, n }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDice {
    pub frame: usize,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub label: String,
    pub per_frame: Vec<FrameDice>,
    pub mean: f64,
    pub std: f64,
    pub n_frames: usize,
}

impl EvaluationReport {
    pub fn summary(&self) -> MeanStd {
        MeanStd {
            mean: self.mean,
            std: self.std,
            n: self.n_frames,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_frame.iter().map(|f| f.dice).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.label);
        for f in &self.per_frame {
            s.push_str(&format!("  frame {:>6}  dice {:.4}\n", f.frame, f.dice));
        }
        s.push_str(&format!("mean dice ({} frames): {}\n", self.n_frames, self.summary()));
        s.push_str(STD_FOOTER);
        s
    }
}

pub const STD_FOOTER: &str = "(± is the sample standard deviation, n-1 denominator)\n";

/// Per-frame Dice of `annotations` against `reference` on `frames`.
pub fn mean_dice(
    label: &str,
    annotations: &BTreeMap<usize, Mask>,
    reference: &BTreeMap<usize, Mask>,
    frames: &[usize],
) -> Result<EvaluationReport> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames to evaluate".into()));
    }
    let mut per_frame = Vec::with_capacity(frames.len());
    for &k in frames {
        let a = annotations
            .get(&k)
            .ok_or_else(|| Error::InvalidInput(format!("annotations lack frame {k}")))?;
        let r = reference
            .get(&k)
            .ok_or_else(|| Error::InvalidInput(format!("reference lacks frame {k}")))?;
        per_frame.push(FrameDice {
            frame: k,
            dice: dice(a, r)?,
        });
    }
    let values: Vec<f64> = per_frame.iter().map(|f| f.dice).collect();
    let agg = MeanStd::of(&values);
    Ok(EvaluationReport {
        label: label.to_string(),
        per_frame,
        mean: agg.mean,
        std: agg.std,
        n_frames: values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSelection {
    /// `n` indices at equal temporal spacing including first and last.
    Uniform(usize),
    /// Every `frame_count / n`-th frame starting at 0, `n` of them.
    Stride(usize),
    All,
}

impl std::str::FromStr for FrameSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bad frame selection `{s}`"));
        if s == "all" {
            return Ok(FrameSelection::All);
        }
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind {
            "uniform" => Ok(FrameSelection::Uniform(n)),
            "stride" => Ok(FrameSelection::Stride(n)),
            _ => Err(bad()),
        }
    }
}

pub fn select_frames(frame_count: usize, selection: FrameSelection) -> Vec<usize> {
    match selection {
        FrameSelection::All => (0..frame_count).collect(),
        FrameSelection::Uniform(n) | FrameSelection::Stride(n) if n >= frame_count => {
            (0..frame_count).collect()
        }
        FrameSelection::Uniform(0) | FrameSelection::Stride(0) => Vec::new(),
        FrameSelection::Uniform(1) => vec![0],
        FrameSelection::Uniform(n) => {
            let span = (frame_count - 1) as f64;
            (0..n)
                .map(|i| (i as f64 * span / (n - 1) as f64).round() as usize)
                .collect()
        }
        FrameSelection::Stride(n) => {
            let step = frame_count / n;
            (0..n).map(|i| i * step).collect()
        }
    }
}

/// Masks of several raters over the same frames; one of them is the reference.
#[derive(Debug, Clone)]
pub struct RaterSet {
    pub reference: String,
    pub raters: BTreeMap<String, BTreeMap<usize, Mask>>,
}

impl RaterSet {
    pub fn new(reference: &str, raters: BTreeMap<String, BTreeMap<usize, Mask>>) -> Result<Self> {
        let refs = raters
            .get(reference)
            .ok_or_else(|| Error::InvalidInput(format!("reference rater `{reference}` missing")))?;
        let frames: Vec<usize> = refs.keys().copied().collect();
        let dims = refs.values().next().map(Mask::dimensions);
        for (id, masks) in &raters {
            if masks.keys().copied().collect::<Vec<_>>() != frames {
                return Err(Error::InvalidInput(format!(
                    "rater `{id}` covers different frames than `{reference}`"
                )));
            }
            for m in masks.values() {
                if Some(m.dimensions()) != dims {
                    return Err(Error::ResolutionMismatch {
                        expected: dims.unwrap_or_default(),
                        got: m.dimensions(),
                    });
                }
            }
        }
        Ok(RaterSet {
            reference: reference.to_string(),
            raters,
        })
    }

    pub fn reference_masks(&self) -> &BTreeMap<usize, Mask> {
        &self.raters[&self.reference]
    }

    pub fn others(&self) -> impl Iterator<Item = (&String, &BTreeMap<usize, Mask>)> {
        self.raters.iter().filter(move |(id, _)| **id != self.reference)
    }
}

/// Reference-vs-machine agreement beside reference-vs-other-raters agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceRow {
    pub machine: EvaluationReport,
    /// All per-frame, per-rater values pooled.
    pub inter_rater: MeanStd,
    pub per_rater: Vec<EvaluationReport>,
}

impl ConcordanceRow {
    pub fn cell(&self) -> String {
        format!("{} | {}", self.machine.summary(), self.inter_rater)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<28}{}\n", "", "reference vs machine | reference vs raters (pooled)"));
        s.push_str(&format!("{:<28}{}\n", "", self.cell()));
        for r in &self.per_rater {
            s.push_str(&format!("  {:<26}{}  (n={})\n", r.label, r.summary(), r.n_frames));
        }
        s.push_str(STD_FOOTER);
        s
    }
}

pub fn concordance_report(
    raters: &RaterSet,
    machine: &BTreeMap<usize, Mask>,
    machine_label: &str,
    frames: &[usize],
) -> Result<ConcordanceRow> {
    let reference = raters.reference_masks();
    let machine_report = mean_dice(
        &format!("{} vs {machine_label}", raters.reference),
        machine,
        reference,
        frames,
    )?;
    let mut pooled = Vec::new();
    let mut per_rater = Vec::new();
    for (id, masks) in raters.others() {
        let r = mean_dice(&format!("{} vs {id}", raters.reference), masks, reference, frames)?;
        pooled.extend(r.values());
        per_rater.push(r);
    }
    if per_rater.is_empty() {
        return Err(Error::InvalidInput("need at least one rater besides the reference".into()));
    }
    Ok(ConcordanceRow {
        machine: machine_report,
        inter_rater: MeanStd::of(&pooled),
        per_rater,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(x0: u32, y0: u32) -> Mask {
        Mask::from_fn(8, 8, |x, y| (x0..x0 + 2).contains(&x) && (y0..y0 + 2).contains(&y))
    }

    fn brute_dice(a: &Mask, b: &Mask) -> f64 {
        let (mut ab, mut na, mut nb) = (0u64, 0u64, 0u64);
        for y in 0..a.height() {
            for x in 0..a.width() {
                let (pa, pb) = (a.get(x, y), b.get(x, y));
                ab += (pa && pb) as u64;
                na += pa as u64;
                nb += pb as u64;
            }
        }
        if na + nb == 0 {
            1.0
        } else {
            2.0 * ab as f64 / (na + nb) as f64
        }
    }

    #[test]
    fn dice_examples() {
        let a = block(0, 0);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &block(4, 4)).unwrap(), 0.0);
        // |A∩B| = 2, |A| = |B| = 4
        assert_eq!(dice(&a, &block(1, 0)).unwrap(), 0.5);
        assert_eq!(dice(&Mask::empty(8, 8), &Mask::empty(8, 8)).unwrap(), 1.0);
        assert_eq!(dice(&a, &Mask::empty(8, 8)).unwrap(), 0.0);
        assert!(matches!(
            dice(&a, &Mask::empty(4, 4)),
            Err(Error::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn mean_std_examples() {
        let m = MeanStd::of(&[1.0, 0.5]);
        assert_eq!(m.mean, 0.75);
        // sqrt((0.25² · 2) / 1)
        assert!((m.std - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[0.9]).std, 0.0);
        let canned = MeanStd {
            mean: 0.982,
            std: 0.011,
            n: 90,
        };
        assert_eq!(canned.to_string(), "0.982 ± 0.011");
    }

    #[test]
    fn identical_annotations_score_one() {
        let masks: BTreeMap<usize, Mask> = (0..90).map(|i| (i, block(i as u32 % 6, 1))).collect();
        let frames: Vec<usize> = (0..90).collect();
        let r = mean_dice("HA1 vs machine", &masks, &masks, &frames).unwrap();
        assert_eq!(r.summary().to_string(), "1.000 ± 0.000");
        assert_eq!(r.n_frames, 90);
    }

    #[test]
    fn missing_frame_rejected() {
        let a: BTreeMap<usize, Mask> = [(0, block(0, 0))].into();
        assert!(mean_dice("x", &a, &a, &[1]).is_err());
        assert!(mean_dice("x", &a, &a, &[]).is_err());
    }

    #[test]
    fn uniform_selection() {
        let f = select_frames(900, FrameSelection::Uniform(90));
        assert_eq!(f.len(), 90);
        assert_eq!(f[0], 0);
        assert_eq!(f[89], 899);
        for (i, &v) in f.iter().enumerate() {
            assert_eq!(v, (i as f64 * 899.0 / 89.0).round() as usize);
        }
        assert!(f.windows(2).all(|w| (10..=11).contains(&(w[1] - w[0]))));
        assert_eq!(select_frames(90, FrameSelection::Uniform(90)), (0..90).collect::<Vec<_>>());
        assert_eq!(select_frames(90, FrameSelection::Uniform(1)), vec![0]);
        assert_eq!(select_frames(10, FrameSelection::Stride(3)), vec![0, 3, 6]);
        assert_eq!(select_frames(4, FrameSelection::All), vec![0, 1, 2, 3]);
    }

    #[test]
    fn parse_selection() {
        assert_eq!("uniform:10".parse::<FrameSelection>().unwrap(), FrameSelection::Uniform(10));
        assert_eq!("all".parse::<FrameSelection>().unwrap(), FrameSelection::All);
        assert!("uniform:0".parse::<FrameSelection>().is_err());
        assert!("every:3".parse::<FrameSelection>().is_err());
    }

    fn raters(n: usize, shift: &[u32]) -> RaterSet {
        let mut map = BTreeMap::new();
        for (r, &s) in shift.iter().enumerate() {
            let masks = (0..n).map(|i| (i * 10, block(s, i as u32 % 4))).collect();
            map.insert(format!("HA{}", r + 1), masks);
        }
        RaterSet::new("HA1", map).unwrap()
    }

    #[test]
    fn concordance_all_identical() {
        let set = raters(10, &[0, 0, 0, 0, 0]);
        let machine = set.reference_masks().clone();
        let frames: Vec<usize> = set.reference_masks().keys().copied().collect();
        let row = concordance_report(&set, &machine, "machine", &frames).unwrap();
        assert_eq!(row.cell(), "1.000 ± 0.000 | 1.000 ± 0.000");
        assert_eq!(row.machine.n_frames, 10);
        assert_eq!(row.inter_rater.n, 40);
        assert_eq!(row.per_rater.len(), 4);
    }

    #[test]
    fn concordance_pools_all_raters() {
        // HA2 identical (dice 1), HA3 shifted by one column (dice 0.5)
        let set = raters(3, &[0, 0, 1]);
        let frames: Vec<usize> = set.reference_masks().keys().copied().collect();
        let row = concordance_report(&set, set.reference_masks(), "m", &frames).unwrap();
        let expected = MeanStd::of(&[1.0, 1.0, 1.0, 0.5, 0.5, 0.5]);
        assert_eq!(row.inter_rater, expected);
    }

    #[test]
    fn canned_concordance_format() {
        let row = ConcordanceRow {
            machine: EvaluationReport {
                label: "HA1 vs machine".into(),
                per_frame: vec![],
                mean: 0.983,
                std: 0.008,
                n_frames: 10,
            },
            inter_rater: MeanStd {
                mean: 0.986,
                std: 0.005,
                n: 40,
            },
            per_rater: vec![],
        };
        assert_eq!(row.cell(), "0.983 ± 0.008 | 0.986 ± 0.005");
    }

    #[test]
    fn rater_set_validation() {
        let mut map = BTreeMap::new();
        map.insert("HA1".to_string(), BTreeMap::from([(0, block(0, 0))]));
        map.insert("HA2".to_string(), BTreeMap::from([(1, block(0, 0))]));
        assert!(RaterSet::new("HA1", map.clone()).is_err());
        assert!(RaterSet::new("HA9", map).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Mask, Mask)> {
        (1u32..=64, 1u32..=64).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| (Mask::from_bits(w, h, a), Mask::from_bits(w, h, b)))
        })
    }

    proptest! {
        #[test]
        fn dice_matches_brute_force((a, b) in arb_pair()) {
            prop_assert_eq!(dice(&a, &b).unwrap(), brute_dice(&a, &b));
        }

        #[test]
        fn dice_symmetric_and_reflexive((a, b) in arb_pair()) {
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
            let d = dice(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn aggregate_recomputes(pairs in proptest::collection::vec(arb_pair(), 1..6)) {
            let mut ann = BTreeMap::new();
            let mut reference = BTreeMap::new();
            for (i, (a, b)) in pairs.into_iter().enumerate() {
                ann.insert(i, a);
                reference.insert(i, b);
            }
            let frames: Vec<usize> = ann.keys().copied().collect();
            let r = mean_dice("x", &ann, &reference, &frames).unwrap();
            let again = MeanStd::of(&r.values());
            prop_assert_eq!(r.summary(), again);
            for f in &r.per_frame {
                prop_assert_eq!(f.dice, brute_dice(&ann[&f.frame], &reference[&f.frame]));
            }
        }
    }
}
