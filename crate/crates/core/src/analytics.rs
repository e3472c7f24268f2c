//! Offline metrics over interaction logs: profile consistency of the apps
//! left on the device, alternatives engagement after selective notices,
//! profile-to-profile comparisons, and entry/exit concern tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{replay_session_with, Engine, NoticeDecision};
use crate::error::{AnalyticsError, EngineError};
use crate::eventlog::by_session;
use crate::model::{EventKind, SessionEvent};
use crate::stats::{welch_t, TestResult};

/// Sessions above this consistency/engagement rate count as "high".
pub const HIGH_BUCKET: f64 = 0.9;
/// Sessions below this rate count as "low".
pub const LOW_BUCKET: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    /// Profile selected when the session ended.
    pub profile_id: String,
    pub downloads_total: u32,
    pub downloads_consistent: u32,
    pub consistency_pct: f64,
    pub selective_notices: u32,
    pub alternatives_clicks: u32,
    /// `None` when the session saw no selective notice.
    pub engagement_rate: Option<f64>,
    pub ignored: u32,
}

/// Per-session engagement counts taken straight from the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngagementCounts {
    pub selective_notices: u32,
    /// Alternatives opened in response to a pending selective notice, at most one per notice.
    pub alternatives_clicks: u32,
    pub ignored: u32,
}

impl EngagementCounts {
    pub fn rate(&self) -> Option<f64> {
        (self.selective_notices > 0)
            .then(|| self.alternatives_clicks as f64 / self.selective_notices as f64)
    }
}

fn engagement_counts(events: &[SessionEvent]) -> EngagementCounts {
    let mut c = EngagementCounts::default();
    // app of the open selective notice, and whether it was already clicked
    let mut open: Option<(&str, bool)> = None;
    for ev in events {
        match &ev.kind {
            EventKind::SelectiveNoticeShown { app_id, .. } => {
                c.selective_notices += 1;
                open = Some((app_id, false));
            }
            EventKind::AlternativesOpened { app_id } => {
                if let Some((app, clicked @ false)) = open.as_mut() {
                    if *app == app_id.as_str() {
                        *clicked = true;
                        c.alternatives_clicks += 1;
                    }
                }
            }
            EventKind::NoticeIgnored { .. } => {
                c.ignored += 1;
                open = None;
            }
            EventKind::DownloadAttempt { .. } => open = None,
            _ => {}
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub per_session: BTreeMap<String, Option<f64>>,
    pub sessions_with_notices: usize,
    pub high: usize,
    pub low: usize,
    pub middle: usize,
}

/// Alternatives-opened per selective notice for every session, with the
/// high (> 0.9) / low (< 0.1) split over sessions that saw a notice.
pub fn engagement(log: &[SessionEvent]) -> EngagementReport {
    let mut per_session = BTreeMap::new();
    let (mut high, mut low, mut middle) = (0, 0, 0);
    for (sid, events) in by_session(log) {
        let rate = engagement_counts(&events).rate();
        match rate {
            Some(r) if r > HIGH_BUCKET => high += 1,
            Some(r) if r < LOW_BUCKET => low += 1,
            Some(_) => middle += 1,
            None => {}
        }
        per_session.insert(sid, rate);
    }
    EngagementReport {
        sessions_with_notices: high + low + middle,
        per_session,
        high,
        low,
        middle,
    }
}

/// Apps on the device at session end with the profile in effect when each
/// was downloaded, read directly from the log.
pub fn final_downloads(events: &[SessionEvent]) -> (BTreeMap<String, String>, Option<String>) {
    let mut profile: Option<String> = None;
    let mut phone = BTreeMap::new();
    for ev in events {
        match &ev.kind {
            EventKind::ProfileSelected { profile_id }
            | EventKind::ExploratoryNoticeAnswered { profile_id, .. } => {
                profile = Some(profile_id.clone());
            }
            EventKind::AppDownloaded { app_id } => {
                if let Some(p) = &profile {
                    phone.insert(app_id.clone(), p.clone());
                }
            }
            EventKind::AppRemoved { app_id } => {
                phone.remove(app_id);
            }
            _ => {}
        }
    }
    (phone, profile)
}

fn is_consistent(engine: &Engine, profile_id: &str, app_id: &str) -> Result<bool, EngineError> {
    let profile = engine.profile(profile_id)?;
    let score = engine.score(profile, engine.app(app_id)?)?;
    Ok(score.coefficient > engine.config().alternatives_above)
}

/// Consistency tally computed by scanning the raw log.
pub fn consistency_from_log(
    engine: &Engine,
    events: &[SessionEvent],
) -> Result<(u32, u32), EngineError> {
    let (phone, _) = final_downloads(events);
    let mut consistent = 0;
    for (app, profile) in &phone {
        consistent += u32::from(is_consistent(engine, profile, app)?);
    }
    Ok((consistent, phone.len() as u32))
}

/// Per-session result of replaying a log through the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedSession {
    pub decisions: Vec<NoticeDecision>,
    pub metrics: SessionMetrics,
}

/// Replays one session, maintaining the consistency tally incrementally, and
/// cross-checks it against the raw-log tally.
pub fn replay_metrics(engine: &Engine, events: &[SessionEvent]) -> Result<ReplayedSession, EngineError> {
    let mut phone: BTreeMap<String, bool> = BTreeMap::new();
    let mut failure: Option<EngineError> = None;
    let replay = replay_session_with(engine, events, |state, outcome| {
        for ev in &outcome.events {
            match ev {
                EventKind::AppDownloaded { app_id } => {
                    let profile = state.selected_profile_id.as_deref().unwrap_or_default();
                    match is_consistent(engine, profile, app_id) {
                        Ok(c) => {
                            phone.insert(app_id.clone(), c);
                        }
                        Err(e) => failure = Some(e),
                    }
                }
                EventKind::AppRemoved { app_id } => {
                    phone.remove(app_id);
                }
                _ => {}
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let total = phone.len() as u32;
    let consistent = phone.values().filter(|c| **c).count() as u32;
    let (raw_consistent, raw_total) = consistency_from_log(engine, events)?;
    if (raw_consistent, raw_total) != (consistent, total) {
        return Err(EngineError::ReplayMismatch {
            session: replay.session_id,
            seq: events.last().map_or(0, |e| e.seq),
            detail: format!(
                "replayed tally {consistent}/{total} differs from log tally {raw_consistent}/{raw_total}"
            ),
        });
    }
    let counts = engagement_counts(events);
    Ok(ReplayedSession {
        decisions: replay.decisions,
        metrics: SessionMetrics {
            profile_id: replay.final_state.selected_profile_id.unwrap_or_default(),
            session_id: replay.session_id,
            downloads_total: total,
            downloads_consistent: consistent,
            consistency_pct: if total == 0 {
                0.0
            } else {
                consistent as f64 / total as f64
            },
            selective_notices: counts.selective_notices,
            alternatives_clicks: counts.alternatives_clicks,
            engagement_rate: counts.rate(),
            ignored: counts.ignored,
        },
    })
}

/// Metrics for every session that ended with at least one app on the device.
pub fn consistency(engine: &Engine, log: &[SessionEvent]) -> Result<Vec<SessionMetrics>, EngineError> {
    let mut out = Vec::new();
    for events in by_session(log).values() {
        let replayed = replay_metrics(engine, events)?;
        if replayed.metrics.downloads_total > 0 {
            out.push(replayed.metrics);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub profile_a: String,
    pub profile_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub result: TestResult,
}

/// Pairwise Welch t tests on consistency between profile groups.
pub fn compare_profiles(metrics: &[SessionMetrics]) -> Result<Vec<ProfileComparison>, AnalyticsError> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for m in metrics {
        groups.entry(&m.profile_id).or_default().push(m.consistency_pct);
    }
    if let Some((p, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(AnalyticsError::TooFewSessions(p.to_string()));
    }
    let keys: Vec<&str> = groups.keys().copied().collect();
    let mut out = Vec::new();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            let (va, vb) = (&groups[a], &groups[b]);
            out.push(ProfileComparison {
                profile_a: a.to_string(),
                profile_b: b.to_string(),
                n_a: va.len(),
                n_b: vb.len(),
                mean_a: va.iter().sum::<f64>() / va.len() as f64,
                mean_b: vb.iter().sum::<f64>() / vb.len() as f64,
                result: welch_t(va, vb)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcernComparison {
    pub n_entry: usize,
    pub n_exit: usize,
    pub result: TestResult,
}

/// Welch t test between entry and exit concern ratings (sizes may differ).
pub fn entry_exit_concern(entry: &[f64], exit: &[f64]) -> Result<ConcernComparison, AnalyticsError> {
    Ok(ConcernComparison {
        n_entry: entry.len(),
        n_exit: exit.len(),
        result: welch_t(entry, exit)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnoreReason {
    pub session_id: String,
    pub app_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sessions_in_log: usize,
    pub sessions: Vec<SessionMetrics>,
    pub high_consistency: usize,
    pub low_consistency: usize,
    pub engagement: EngagementReport,
    pub comparisons: Vec<ProfileComparison>,
    /// Set when some profile has fewer than two sessions.
    pub comparison_skipped: Option<String>,
    pub entry_exit: Option<ConcernComparison>,
    pub ignore_reasons: Vec<IgnoreReason>,
}

pub fn build_report(
    engine: &Engine,
    log: &[SessionEvent],
    concerns: Option<(&[f64], &[f64])>,
) -> Result<Report, AnalyticsError> {
    let sessions = consistency(engine, log)?;
    let (comparisons, comparison_skipped) = match compare_profiles(&sessions) {
        Ok(c) => (c, None),
        Err(AnalyticsError::TooFewSessions(p)) => (Vec::new(), Some(p)),
        Err(e) => return Err(e),
    };
    let entry_exit = concerns
        .map(|(entry, exit)| entry_exit_concern(entry, exit))
        .transpose()?;
    let ignore_reasons = log
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::NoticeIgnored { app_id, reason } => Some(IgnoreReason {
                session_id: e.session_id.clone(),
                app_id: app_id.clone(),
                reason: reason.clone(),
            }),
            _ => None,
        })
        .collect();
    let session_ids: BTreeSet<&str> = log.iter().map(|e| e.session_id.as_str()).collect();
    Ok(Report {
        sessions_in_log: session_ids.len(),
        high_consistency: sessions.iter().filter(|m| m.consistency_pct > HIGH_BUCKET).count(),
        low_consistency: sessions.iter().filter(|m| m.consistency_pct < LOW_BUCKET).count(),
        sessions,
        engagement: engagement(log),
        comparisons,
        comparison_skipped,
        entry_exit,
        ignore_reasons,
    })
}

impl Report {
    /// Per-session table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "session_id",
            "profile_id",
            "downloads_total",
            "downloads_consistent",
            "consistency_pct",
            "selective_notices",
            "alternatives_clicks",
            "engagement_rate",
            "ignored",
        ])
        .expect("in-memory write");
        for m in &self.sessions {
            w.write_record([
                m.session_id.clone(),
                m.profile_id.clone(),
                m.downloads_total.to_string(),
                m.downloads_consistent.to_string(),
                format!("{:.6}", m.consistency_pct),
                m.selective_notices.to_string(),
                m.alternatives_clicks.to_string(),
                m.engagement_rate.map(|r| format!("{r:.6}")).unwrap_or_default(),
                m.ignored.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn summary(&self) -> String {
        let n = self.sessions.len();
        let pct = |c: usize, of: usize| {
            if of == 0 {
                0.0
            } else {
                100.0 * c as f64 / of as f64
            }
        };
        let mut s = String::new();
        s.push_str(&format!(
            "sessions in log: {}; with downloads: {}\n",
            self.sessions_in_log, n
        ));
        s.push_str(&format!(
            "high consistency (>90%): {} ({:.1}%)\nlow consistency (<10%): {} ({:.1}%)\n",
            self.high_consistency,
            pct(self.high_consistency, n),
            self.low_consistency,
            pct(self.low_consistency, n)
        ));
        let e = &self.engagement;
        s.push_str(&format!(
            "sessions with selective notices: {}\nalternatives engagement >90%: {} ({:.1}%), <10%: {} ({:.1}%), between: {}\n",
            e.sessions_with_notices,
            e.high,
            pct(e.high, e.sessions_with_notices),
            e.low,
            pct(e.low, e.sessions_with_notices),
            e.middle
        ));
        for c in &self.comparisons {
            s.push_str(&format!(
                "consistency {} (n={}, mean {:.3}) vs {} (n={}, mean {:.3}): t = {:.4}, df = {:.2}, p = {:.4}\n",
                c.profile_a,
                c.n_a,
                c.mean_a,
                c.profile_b,
                c.n_b,
                c.mean_b,
                c.result.statistic,
                c.result.df_or_groups,
                c.result.p_value
            ));
        }
        if let Some(p) = &self.comparison_skipped {
            s.push_str(&format!("profile comparison skipped: fewer than 2 sessions for {p}\n"));
        }
        if let Some(ee) = &self.entry_exit {
            s.push_str(&format!(
                "entry (n={}) vs exit (n={}) concern: t = {:.4}, df = {:.2}, p = {:.4}\n",
                ee.n_entry, ee.n_exit, ee.result.statistic, ee.result.df_or_groups, ee.result.p_value
            ));
        }
        s.push_str(&format!("ignore reasons recorded: {}\n", self.ignore_reasons.len()));
        let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &self.ignore_reasons {
            *tally.entry(r.reason.as_str()).or_default() += 1;
        }
        let mut tally: Vec<_> = tally.into_iter().collect();
        tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        for (reason, n) in tally {
            s.push_str(&format!("  {n:>4}  {reason}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, kind: EventKind) -> SessionEvent {
        SessionEvent {
            session_id: "s".into(),
            seq,
            elapsed_ms: seq,
            wall_ms: 0,
            kind,
        }
    }

    fn notice(seq: u64, app: &str) -> SessionEvent {
        ev(
            seq,
            EventKind::SelectiveNoticeShown {
                app_id: app.into(),
                accepting: 0,
                members: 10,
            },
        )
    }

    fn open(seq: u64, app: &str) -> SessionEvent {
        ev(seq, EventKind::AlternativesOpened { app_id: app.into() })
    }

    #[test]
    fn engagement_full_and_none() {
        let mut all = Vec::new();
        let mut none = Vec::new();
        for i in 0..5 {
            let app = format!("a{i}");
            all.push(notice(i * 2, &app));
            all.push(open(i * 2 + 1, &app));
            none.push(notice(i, &app));
        }
        assert_eq!(engagement_counts(&all).rate(), Some(1.0));
        assert_eq!(engagement_counts(&none).rate(), Some(0.0));
        assert_eq!(engagement_counts(&[]).rate(), None);
    }

    #[test]
    fn repeated_opens_count_once_per_notice() {
        let events = vec![notice(0, "a"), open(1, "a"), open(2, "a"), open(3, "b")];
        let c = engagement_counts(&events);
        assert_eq!(c.alternatives_clicks, 1);
    }

    #[test]
    fn final_downloads_excludes_removed() {
        let events = vec![
            ev(0, EventKind::ProfileSelected { profile_id: "p".into() }),
            ev(1, EventKind::DownloadAttempt { app_id: "a".into() }),
            ev(2, EventKind::AppDownloaded { app_id: "a".into() }),
            ev(3, EventKind::DownloadAttempt { app_id: "b".into() }),
            ev(4, EventKind::AppDownloaded { app_id: "b".into() }),
            ev(5, EventKind::AppRemoved { app_id: "a".into() }),
        ];
        let (phone, profile) = final_downloads(&events);
        assert_eq!(phone.keys().collect::<Vec<_>>(), vec!["b"]);
        assert_eq!(profile.as_deref(), Some("p"));
    }

    #[test]
    fn welch_comparison_needs_two_sessions() {
        let m = |p: &str, c: f64| SessionMetrics {
            session_id: format!("{p}{c}"),
            profile_id: p.into(),
            downloads_total: 1,
            downloads_consistent: 1,
            consistency_pct: c,
            selective_notices: 0,
            alternatives_clicks: 0,
            engagement_rate: None,
            ignored: 0,
        };
        let err = compare_profiles(&[m("a", 0.1), m("a", 0.2), m("b", 0.3)]).unwrap_err();
        assert!(matches!(err, AnalyticsError::TooFewSessions(p) if p == "b"));
    }

    #[test]
    fn entry_exit_sizes() {
        let entry: Vec<f64> = (0..111).map(|i| (i % 9 + 1) as f64).collect();
        let exit: Vec<f64> = (0..66).map(|i| (i % 7 + 2) as f64).collect();
        let r = entry_exit_concern(&entry, &exit).unwrap();
        assert_eq!((r.n_entry, r.n_exit), (111, 66));
        let same = entry_exit_concern(&entry, &entry).unwrap();
        assert_eq!(same.result.statistic, 0.0);
    }
}
