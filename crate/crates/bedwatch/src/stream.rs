//! Operational stream processing: frame ingestion, per-frame risk scoring,
//! and alert debouncing with hysteresis.
//!
//! The monitor raises an alert after `raise_n` consecutive at-risk frames
//! and clears it after `clear_m` consecutive safe frames, suppressing
//! flicker-induced false alarms. Sessions are independent: interleaved
//! sessions in one stream each keep their own scoring and alert state, and
//! per-session event order is preserved.
//!
//! Robustness rules: malformed input lines become line-numbered diagnostics
//! and processing continues; frames whose geometry cannot be resolved (a
//! dropped-out head or knee, a degenerate bed contour) produce a score
//! flagged `degraded` that carries the session's previous label forward —
//! the monitor never silently drops a frame.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_features, FeatureConfig, Label};
use crate::frame::FrameRecord;
use crate::gbdt::Forest;
use crate::geometry::fit_bed_model;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid monitor config: {0}")]
    InvalidConfig(String),
    #[error("model feature schema cannot be served: {0}")]
    Schema(String),
}

/// Stateful line parser. Validates the frame schema and enforces
/// non-decreasing timestamps per session.
#[derive(Debug, Default)]
pub struct Ingestor {
    last_ts: HashMap<String, f64>,
}

/// A dataset line carries the frame under a "frame" key; the monitor
/// accepts those too so generated corpora can be replayed directly.
#[derive(Deserialize)]
struct FrameEnvelope {
    frame: FrameRecord,
}

impl Ingestor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest_line(&mut self, line: &str) -> Result<FrameRecord, IngestError> {
        let frame: FrameRecord = match serde_json::from_str(line) {
            Ok(frame) => frame,
            Err(frame_err) => match serde_json::from_str::<FrameEnvelope>(line) {
                Ok(env) => env.frame,
                Err(_) => return Err(IngestError::Parse(frame_err.to_string())),
            },
        };
        frame.validate().map_err(|e| IngestError::Validation(e.to_string()))?;
        if let Some(&last) = self.last_ts.get(&frame.session) {
            if frame.ts < last {
                return Err(IngestError::Validation(format!(
                    "non-monotone timestamp {} after {} in session '{}'",
                    frame.ts, last, frame.session
                )));
            }
        }
        self.last_ts.insert(frame.session.clone(), frame.ts);
        Ok(frame)
    }
}

/// One scored frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub ts: f64,
    pub session: String,
    pub probability: f64,
    pub label: Label,
    /// True when geometry could not be resolved and the label was carried
    /// forward from the session's last successful score.
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlertKind {
    Raised,
    Cleared,
}

/// A raised/cleared alert transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub ts: f64,
    pub session: String,
    pub kind: AlertKind,
    pub probability: f64,
    pub consecutive_frames: usize,
}

/// Output stream record: scores and alerts interleaved on one channel,
/// discriminated by a "record" tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum StreamRecord {
    Score(RiskScore),
    Alert(AlertEvent),
}

/// Scoring configuration.
#[derive(Debug, Clone)]
pub struct ScoreConfig {
    pub threshold: f64,
    pub feature_config: FeatureConfig,
    pub echo_features: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { threshold: 0.5, feature_config: FeatureConfig::default(), echo_features: false }
    }
}

/// Per-session carry state for degraded frames.
#[derive(Debug, Clone, Copy)]
struct Carry {
    label: Label,
    probability: f64,
}

/// Scores frames against a trained forest, carrying the last label forward
/// when a frame's geometry cannot be resolved. Before any successful score
/// a session's carry state is (NotAtRisk, probability 0.0).
pub struct Scorer {
    model: Forest,
    cfg: ScoreConfig,
    carry: HashMap<String, Carry>,
}

impl Scorer {
    pub fn new(model: Forest, cfg: ScoreConfig) -> Self {
        Self { model, cfg, carry: HashMap::new() }
    }

    pub fn model(&self) -> &Forest {
        &self.model
    }

    /// Scores one frame. Geometry failures degrade instead of erroring;
    /// the returned score always exists for a valid frame.
    pub fn score_frame(&mut self, frame: &FrameRecord) -> RiskScore {
        match self.try_score(frame) {
            Ok(score) => score,
            Err(_) => {
                let carry = self
                    .carry
                    .get(&frame.session)
                    .copied()
                    .unwrap_or(Carry { label: Label::NotAtRisk, probability: 0.0 });
                RiskScore {
                    ts: frame.ts,
                    session: frame.session.clone(),
                    probability: carry.probability,
                    label: carry.label,
                    degraded: true,
                    features: None,
                }
            }
        }
    }

    fn try_score(&mut self, frame: &FrameRecord) -> Result<RiskScore, Box<dyn std::error::Error>> {
        let skeleton = frame.skeleton()?;
        let bed = fit_bed_model(&frame.contour_points())?;
        let features =
            build_features(&skeleton, &bed, self.model.feature_set(), &self.cfg.feature_config)?;
        let probability = self.model.predict_proba(&features)?;
        let label =
            if probability >= self.cfg.threshold { Label::AtRisk } else { Label::NotAtRisk };
        self.carry.insert(frame.session.clone(), Carry { label, probability });
        Ok(RiskScore {
            ts: frame.ts,
            session: frame.session.clone(),
            probability,
            label,
            degraded: false,
            features: if self.cfg.echo_features {
                Some(features.values().to_vec())
            } else {
                None
            },
        })
    }
}

/// Debounce thresholds: raise after `raise_n` consecutive at-risk frames,
/// clear after `clear_m` consecutive safe frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DebounceConfig {
    pub raise_n: usize,
    pub clear_m: usize,
}

impl DebounceConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        if self.raise_n < 1 || self.clear_m < 1 {
            return Err(MonitorError::InvalidConfig(
                "raise and clear debounce must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
struct AlertState {
    consecutive_at_risk: usize,
    consecutive_clear: usize,
    active: bool,
    last_ts: f64,
    last_probability: f64,
}

/// Per-session alert state machine.
#[derive(Debug)]
pub struct AlertTracker {
    cfg: DebounceConfig,
    states: HashMap<String, AlertState>,
}

impl AlertTracker {
    pub fn new(cfg: DebounceConfig) -> Self {
        Self { cfg, states: HashMap::new() }
    }

    /// Feeds one scored frame; returns the event it triggered, if any.
    pub fn observe(&mut self, score: &RiskScore) -> Option<AlertEvent> {
        let state = self.states.entry(score.session.clone()).or_default();
        state.last_ts = score.ts;
        state.last_probability = score.probability;
        if score.label.is_at_risk() {
            state.consecutive_at_risk += 1;
            state.consecutive_clear = 0;
            if !state.active && state.consecutive_at_risk == self.cfg.raise_n {
                state.active = true;
                return Some(AlertEvent {
                    ts: score.ts,
                    session: score.session.clone(),
                    kind: AlertKind::Raised,
                    probability: score.probability,
                    consecutive_frames: self.cfg.raise_n,
                });
            }
        } else {
            state.consecutive_clear += 1;
            state.consecutive_at_risk = 0;
            if state.active && state.consecutive_clear == self.cfg.clear_m {
                state.active = false;
                return Some(AlertEvent {
                    ts: score.ts,
                    session: score.session.clone(),
                    kind: AlertKind::Cleared,
                    probability: score.probability,
                    consecutive_frames: self.cfg.clear_m,
                });
            }
        }
        None
    }

    /// End-of-stream: emits a final Cleared for every still-active session,
    /// in session order.
    pub fn flush(&mut self) -> Vec<AlertEvent> {
        let mut sessions: Vec<String> = self
            .states
            .iter()
            .filter(|(_, s)| s.active)
            .map(|(k, _)| k.clone())
            .collect();
        sessions.sort();
        sessions
            .into_iter()
            .map(|session| {
                let state = self.states.get_mut(&session).expect("session exists");
                state.active = false;
                AlertEvent {
                    ts: state.last_ts,
                    session,
                    kind: AlertKind::Cleared,
                    probability: state.last_probability,
                    consecutive_frames: state.consecutive_clear,
                }
            })
            .collect()
    }
}

/// Full monitor configuration.
#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub debounce: DebounceConfig,
    pub threshold: f64,
    pub echo_features: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            debounce: DebounceConfig { raise_n: 3, clear_m: 5 },
            threshold: 0.5,
            echo_features: false,
        }
    }
}

/// Stream totals, written to the diagnostic channel at end of stream.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MonitorSummary {
    pub frames: usize,
    pub degraded: usize,
    pub malformed: usize,
    pub raised: usize,
    pub cleared: usize,
}

/// Reads newline-delimited frames, writes scores and alert events to `out`
/// and per-line diagnostics to `diag`. Malformed lines never halt the
/// stream. Active alerts receive a final Cleared at end of stream.
pub fn run_monitor<R: BufRead, W: Write, D: Write>(
    input: R,
    model: Forest,
    cfg: &MonitorConfig,
    mut out: W,
    mut diag: D,
) -> Result<MonitorSummary, MonitorError> {
    cfg.debounce.validate()?;
    let mut ingestor = Ingestor::new();
    let mut scorer = Scorer::new(
        model,
        ScoreConfig {
            threshold: cfg.threshold,
            feature_config: FeatureConfig::default(),
            echo_features: cfg.echo_features,
        },
    );
    let mut tracker = AlertTracker::new(cfg.debounce);
    let mut summary = MonitorSummary::default();

    let write_record = |record: &StreamRecord, out: &mut W| -> Result<(), MonitorError> {
        serde_json::to_writer(&mut *out, record).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
        Ok(())
    };

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = match ingestor.ingest_line(&line) {
            Ok(frame) => frame,
            Err(e) => {
                summary.malformed += 1;
                writeln!(diag, "line {line_no}: {e}")?;
                continue;
            }
        };
        let score = scorer.score_frame(&frame);
        if score.degraded {
            summary.degraded += 1;
            writeln!(diag, "line {line_no}: degraded frame, carrying previous label")?;
        }
        summary.frames += 1;
        let event = tracker.observe(&score);
        write_record(&StreamRecord::Score(score), &mut out)?;
        if let Some(event) = event {
            match event.kind {
                AlertKind::Raised => summary.raised += 1,
                AlertKind::Cleared => summary.cleared += 1,
            }
            write_record(&StreamRecord::Alert(event), &mut out)?;
        }
    }

    for event in tracker.flush() {
        summary.cleared += 1;
        write_record(&StreamRecord::Alert(event), &mut out)?;
    }
    out.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(session: &str, ts: f64, risk: bool) -> RiskScore {
        RiskScore {
            ts,
            session: session.to_string(),
            probability: if risk { 0.9 } else { 0.1 },
            label: if risk { Label::AtRisk } else { Label::NotAtRisk },
            degraded: false,
            features: None,
        }
    }

    fn events_for(labels: &[bool], raise_n: usize, clear_m: usize) -> Vec<AlertEvent> {
        let mut tracker = AlertTracker::new(DebounceConfig { raise_n, clear_m });
        let mut events = Vec::new();
        for (i, &risk) in labels.iter().enumerate() {
            if let Some(e) = tracker.observe(&score("s", i as f64, risk)) {
                events.push(e);
            }
        }
        events.extend(tracker.flush());
        events
    }

    /// Declarative reference: after frame i the alert is active iff some
    /// raise happened without a later clear; a raise happens at i when the
    /// last N labels are all risk and the alert was inactive, a clear when
    /// the last M are all safe and it was active. Implemented by lookback
    /// over prefixes rather than counters.
    pub(crate) fn reference_events(labels: &[bool], n: usize, m: usize) -> Vec<(usize, AlertKind)> {
        let mut events = Vec::new();
        let mut active = false;
        for i in 0..labels.len() {
            let run_risk = (0..=i)
                .rev()
                .take_while(|&j| labels[j])
                .count();
            let run_safe = (0..=i)
                .rev()
                .take_while(|&j| !labels[j])
                .count();
            if !active && run_risk == n && labels[i] {
                // run == n exactly: longer runs re-trigger nothing.
                active = true;
                events.push((i, AlertKind::Raised));
            } else if active && run_safe == m && !labels[i] {
                active = false;
                events.push((i, AlertKind::Cleared));
            }
        }
        if active {
            events.push((labels.len().saturating_sub(1), AlertKind::Cleared));
        }
        events
    }

    #[test]
    fn below_debounce_never_raises() {
        let events = events_for(&[true, true, false, true, true, false], 3, 1);
        assert!(events.is_empty());
    }

    #[test]
    fn raise_at_exactly_n() {
        let events = events_for(&[false, true, true, true, true], 3, 5);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].kind, AlertKind::Raised);
        assert_eq!(events[0].ts, 3.0);
        assert_eq!(events[0].consecutive_frames, 3);
        // Flush clears the alert at end of stream.
        assert_eq!(events[1].kind, AlertKind::Cleared);
        assert_eq!(events[1].ts, 4.0);
    }

    #[test]
    fn alternating_labels_with_unit_debounce() {
        let events = events_for(&[true, false, true, false, true, false], 1, 1);
        assert_eq!(events.len(), 6);
        for (i, e) in events.iter().enumerate() {
            let expected = if i % 2 == 0 { AlertKind::Raised } else { AlertKind::Cleared };
            assert_eq!(e.kind, expected, "event {i}");
        }
    }

    #[test]
    fn events_alternate_per_session() {
        // Raised/Cleared must alternate regardless of the input pattern.
        for bits in 0..(1u32 << 10) {
            let labels: Vec<bool> = (0..10).map(|i| bits >> i & 1 == 1).collect();
            let events = events_for(&labels, 2, 2);
            for pair in events.windows(2) {
                assert_ne!(pair[0].kind, pair[1].kind, "bits {bits:010b}");
            }
        }
    }

    #[test]
    fn matches_reference_state_machine_exhaustively() {
        // All label sequences up to length 12, all N, M in {1, 2, 3}.
        for n in 1..=3usize {
            for m in 1..=3usize {
                for len in 0..=12usize {
                    for bits in 0..(1u64 << len) {
                        let labels: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
                        let got: Vec<(usize, AlertKind)> = events_for(&labels, n, m)
                            .iter()
                            .map(|e| (e.ts as usize, e.kind))
                            .collect();
                        let want = reference_events(&labels, n, m);
                        assert_eq!(got, want, "labels {labels:?} n={n} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn sessions_are_independent() {
        let mut tracker = AlertTracker::new(DebounceConfig { raise_n: 2, clear_m: 1 });
        assert!(tracker.observe(&score("a", 0.0, true)).is_none());
        assert!(tracker.observe(&score("b", 0.0, true)).is_none());
        // Session a reaches its debounce; b is unaffected by a's state.
        let raised = tracker.observe(&score("a", 1.0, true)).unwrap();
        assert_eq!(raised.session, "a");
        assert!(tracker.observe(&score("b", 1.0, false)).is_none());
        let raised_b = tracker.observe(&score("b", 2.0, true));
        assert!(raised_b.is_none(), "b's run was broken");
        // Flush clears only the active session.
        let flushed = tracker.flush();
        assert_eq!(flushed.len(), 1);
        assert_eq!(flushed[0].session, "a");
    }

    #[test]
    fn ingestor_validates_and_tracks_timestamps() {
        let mut ing = Ingestor::new();
        let frame = crate::frame::tests::sample_frame();
        let line = serde_json::to_string(&frame).unwrap();
        assert!(ing.ingest_line(&line).is_ok());

        // Earlier timestamp in the same session is rejected.
        let mut earlier = frame.clone();
        earlier.ts = 0.5;
        let line2 = serde_json::to_string(&earlier).unwrap();
        let err = ing.ingest_line(&line2).unwrap_err();
        assert!(matches!(err, IngestError::Validation(ref m) if m.contains("non-monotone")));

        // Same timestamp in another session is fine.
        let mut other = earlier.clone();
        other.session = "ward-4".into();
        let line3 = serde_json::to_string(&other).unwrap();
        assert!(ing.ingest_line(&line3).is_ok());

        // Wrong keypoint count names the count.
        let mut short = frame.clone();
        short.keypoints.pop();
        let line4 = serde_json::to_string(&short).unwrap();
        let err = ing.ingest_line(&line4).unwrap_err();
        assert!(matches!(err, IngestError::Validation(ref m) if m.contains("16")));

        assert!(matches!(ing.ingest_line("{ not json"), Err(IngestError::Parse(_))));
    }

    #[test]
    fn ingestor_unwraps_dataset_records() {
        let mut ing = Ingestor::new();
        let frame = crate::frame::tests::sample_frame();
        let line = format!(
            "{{\"label\":\"at_risk\",\"source_id\":\"x\",\"frame\":{}}}",
            serde_json::to_string(&frame).unwrap()
        );
        let got = ing.ingest_line(&line).unwrap();
        assert_eq!(got, frame);
    }
}
