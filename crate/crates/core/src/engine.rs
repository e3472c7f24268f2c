//! The assistant core: minimal acceptability scoring, notice decisions on
//! download attempts, alternative suggestions, and the per-session state
//! machine that turns user actions into logged events.
//!
//! Every decision is a pure function of the session state, the catalog, the
//! profiles and the elapsed session time, so a session log can be replayed
//! through [`Engine::apply`] to reproduce it exactly.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::EngineError;
use crate::model::{
    AcceptabilityScore, AppRecord, EventKind, LightThresholds, SessionEvent, TrafficLight,
};
use crate::profiles::{ProfileDocument, ValueProfile};

/// Smallest number of members accepting any one of the app's practices.
///
/// Returns `(accepting, members)`; an app collecting nothing is accepted by
/// every member.
pub fn min_acceptance(profile: &ValueProfile, app: &AppRecord) -> Result<(u32, u32), EngineError> {
    let members = profile.member_count();
    if members == 0 {
        return Err(EngineError::EmptyProfile(profile.profile_id.clone()));
    }
    let mut min = members;
    for practice in &app.practices {
        let count = profile
            .acceptance_count
            .get(practice)
            .copied()
            .ok_or_else(|| EngineError::UnknownPractice {
                profile: profile.profile_id.clone(),
                practice: practice.to_string(),
            })?;
        min = min.min(count);
    }
    Ok((min, members))
}

/// Minimal acceptability coefficient with the default light boundaries.
pub fn coefficient(profile: &ValueProfile, app: &AppRecord) -> Result<AcceptabilityScore, EngineError> {
    score_with(profile, app, &LightThresholds::default())
}

pub fn score_with(
    profile: &ValueProfile,
    app: &AppRecord,
    thresholds: &LightThresholds,
) -> Result<AcceptabilityScore, EngineError> {
    let (accepting, members) = min_acceptance(profile, app)?;
    let coefficient = accepting as f64 / members as f64;
    Ok(AcceptabilityScore {
        coefficient,
        light: thresholds.classify(coefficient)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lights: LightThresholds,
    /// Alternatives must score strictly above this.
    pub alternatives_above: f64,
    /// Inclusive elapsed-time window in which the exploratory notice may fire.
    pub exploratory_from_ms: u64,
    pub exploratory_to_ms: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            lights: LightThresholds::default(),
            alternatives_above: 0.1,
            exploratory_from_ms: 210_000,
            exploratory_to_ms: 240_000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let l = &self.lights;
        if !(0.0 < l.red_below && l.red_below <= self.alternatives_above && self.alternatives_above < 1.0) {
            return Err(format!(
                "thresholds must satisfy 0 < red ({}) <= alternatives ({}) < 1",
                l.red_below, self.alternatives_above
            ));
        }
        if l.green_above < l.red_below || l.green_above >= 1.0 {
            return Err(format!("green threshold {} out of range", l.green_above));
        }
        if self.exploratory_from_ms >= self.exploratory_to_ms {
            return Err("exploratory window lower bound must be below upper bound".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoticeKind {
    Selective,
    Exploratory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingNotice {
    pub kind: NoticeKind,
    pub app_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub selected_profile_id: Option<String>,
    pub downloaded: BTreeSet<String>,
    pub exploratory_shown: bool,
    pub pending_notice: Option<PendingNotice>,
    /// Elapsed time of the last applied action.
    pub last_elapsed_ms: u64,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            selected_profile_id: None,
            downloaded: BTreeSet::new(),
            exploratory_shown: false,
            pending_notice: None,
            last_elapsed_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum NoticeDecision {
    Proceed {
        app_id: String,
        coefficient: f64,
        light: TrafficLight,
    },
    SelectiveNotice {
        app_id: String,
        coefficient: f64,
        light: TrafficLight,
        alternatives_available: bool,
    },
    ExploratoryNotice {
        app_id: String,
    },
}

impl NoticeDecision {
    pub fn app_id(&self) -> &str {
        match self {
            NoticeDecision::Proceed { app_id, .. }
            | NoticeDecision::SelectiveNotice { app_id, .. }
            | NoticeDecision::ExploratoryNotice { app_id } => app_id,
        }
    }
}

/// A catalog app with its score under some profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredApp {
    pub app_id: String,
    pub name: String,
    pub coefficient: f64,
    pub light: TrafficLight,
}

/// Something the participant did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum UserAction {
    SelectProfile { profile_id: String },
    ViewApp { app_id: String },
    Download { app_id: String },
    Ignore { reason: String },
    OpenAlternatives { app_id: String },
    AnswerExploratory { kept_profile: bool, new_profile_id: Option<String> },
    Remove { app_id: String },
}

/// Result of applying one action: the events to log, in order, plus any
/// decision or alternatives list to show.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub events: Vec<EventKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<NoticeDecision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternatives: Option<Vec<ScoredApp>>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    catalog: Catalog,
    profiles: ProfileDocument,
    config: EngineConfig,
}

impl Engine {
    pub fn new(catalog: Catalog, profiles: ProfileDocument, config: EngineConfig) -> Self {
        Engine {
            catalog,
            profiles,
            config,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn profiles(&self) -> &ProfileDocument {
        &self.profiles
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn profile(&self, profile_id: &str) -> Result<&ValueProfile, EngineError> {
        self.profiles
            .get(profile_id)
            .ok_or_else(|| EngineError::UnknownProfile(profile_id.to_string()))
    }

    pub fn app(&self, app_id: &str) -> Result<&AppRecord, EngineError> {
        self.catalog
            .app(app_id)
            .ok_or_else(|| EngineError::UnknownApp(app_id.to_string()))
    }

    pub fn score(&self, profile: &ValueProfile, app: &AppRecord) -> Result<AcceptabilityScore, EngineError> {
        score_with(profile, app, &self.config.lights)
    }

    /// Every catalog app scored under a profile, in app id order.
    pub fn score_catalog(&self, profile_id: &str) -> Result<Vec<ScoredApp>, EngineError> {
        let profile = self.profile(profile_id)?;
        self.catalog
            .apps
            .values()
            .map(|app| {
                let s = self.score(profile, app)?;
                Ok(ScoredApp {
                    app_id: app.app_id.clone(),
                    name: app.name.clone(),
                    coefficient: s.coefficient,
                    light: s.light,
                })
            })
            .collect()
    }

    /// Other members of the app's family scoring above the alternatives
    /// threshold, best first, ties by name.
    pub fn suggest_alternatives(
        &self,
        profile: &ValueProfile,
        app_id: &str,
    ) -> Result<Vec<ScoredApp>, EngineError> {
        let app = self.app(app_id)?;
        let family = app
            .family_id
            .as_deref()
            .ok_or_else(|| EngineError::NoFamily(app_id.to_string()))?;
        let mut out = Vec::new();
        for other in self.catalog.family_members(family) {
            if other.app_id == app.app_id {
                continue;
            }
            let s = self.score(profile, other)?;
            if s.coefficient > self.config.alternatives_above {
                out.push(ScoredApp {
                    app_id: other.app_id.clone(),
                    name: other.name.clone(),
                    coefficient: s.coefficient,
                    light: s.light,
                });
            }
        }
        out.sort_by(|a, b| {
            b.coefficient
                .total_cmp(&a.coefficient)
                .then_with(|| a.name.cmp(&b.name))
                .then_with(|| a.app_id.cmp(&b.app_id))
        });
        Ok(out)
    }

    fn selected_profile(&self, state: &SessionState) -> Result<&ValueProfile, EngineError> {
        let id = state
            .selected_profile_id
            .as_deref()
            .ok_or(EngineError::NoProfileSelected)?;
        self.profile(id)
    }

    /// Selective-notice rule alone: red apps get a notice, others proceed.
    fn evaluate_fit(&self, state: &SessionState, app_id: &str) -> Result<NoticeDecision, EngineError> {
        let profile = self.selected_profile(state)?;
        let app = self.app(app_id)?;
        let score = self.score(profile, app)?;
        if score.light == TrafficLight::Red {
            let alternatives_available = match self.suggest_alternatives(profile, app_id) {
                Ok(list) => !list.is_empty(),
                Err(EngineError::NoFamily(_)) => false,
                Err(e) => return Err(e),
            };
            Ok(NoticeDecision::SelectiveNotice {
                app_id: app_id.to_string(),
                coefficient: score.coefficient,
                light: score.light,
                alternatives_available,
            })
        } else {
            Ok(NoticeDecision::Proceed {
                app_id: app_id.to_string(),
                coefficient: score.coefficient,
                light: score.light,
            })
        }
    }

    /// Decides what happens when the participant taps download.
    ///
    /// The exploratory notice takes precedence once, inside its window;
    /// otherwise red apps raise a selective notice and everything else
    /// proceeds. Does not mutate `state`; see [`Engine::apply`].
    pub fn decide_on_download(
        &self,
        state: &SessionState,
        app_id: &str,
        elapsed_ms: u64,
    ) -> Result<NoticeDecision, EngineError> {
        self.selected_profile(state)?;
        self.app(app_id)?;
        let in_window = (self.config.exploratory_from_ms..=self.config.exploratory_to_ms)
            .contains(&elapsed_ms);
        if !state.exploratory_shown && in_window {
            return Ok(NoticeDecision::ExploratoryNotice {
                app_id: app_id.to_string(),
            });
        }
        self.evaluate_fit(state, app_id)
    }

    fn notice_events(&self, state: &mut SessionState, decision: &NoticeDecision, events: &mut Vec<EventKind>) -> Result<(), EngineError> {
        match decision {
            NoticeDecision::ExploratoryNotice { app_id } => {
                state.exploratory_shown = true;
                state.pending_notice = Some(PendingNotice {
                    kind: NoticeKind::Exploratory,
                    app_id: app_id.clone(),
                });
                events.push(EventKind::ExploratoryNoticeShown {
                    app_id: app_id.clone(),
                });
            }
            NoticeDecision::SelectiveNotice { app_id, .. } => {
                let profile = self.selected_profile(state)?;
                let (accepting, members) = min_acceptance(profile, self.app(app_id)?)?;
                state.pending_notice = Some(PendingNotice {
                    kind: NoticeKind::Selective,
                    app_id: app_id.clone(),
                });
                events.push(EventKind::SelectiveNoticeShown {
                    app_id: app_id.clone(),
                    accepting,
                    members,
                });
            }
            NoticeDecision::Proceed { app_id, .. } => {
                state.pending_notice = None;
                state.downloaded.insert(app_id.clone());
                events.push(EventKind::AppDownloaded {
                    app_id: app_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Applies one action, mutating `state` only on success.
    pub fn apply(
        &self,
        state: &mut SessionState,
        action: &UserAction,
        elapsed_ms: u64,
    ) -> Result<Outcome, EngineError> {
        if elapsed_ms < state.last_elapsed_ms {
            return Err(EngineError::ClockBackwards {
                now: elapsed_ms,
                last: state.last_elapsed_ms,
            });
        }
        let mut next = state.clone();
        next.last_elapsed_ms = elapsed_ms;
        let mut out = Outcome::default();
        match action {
            UserAction::SelectProfile { profile_id } => {
                self.profile(profile_id)?;
                next.selected_profile_id = Some(profile_id.clone());
                out.events.push(EventKind::ProfileSelected {
                    profile_id: profile_id.clone(),
                });
            }
            UserAction::ViewApp { app_id } => {
                self.app(app_id)?;
                out.events.push(EventKind::AppViewed {
                    app_id: app_id.clone(),
                });
            }
            UserAction::Download { app_id } => {
                if next.downloaded.contains(app_id) {
                    return Err(EngineError::AlreadyDownloaded(app_id.clone()));
                }
                let decision = self.decide_on_download(&next, app_id, elapsed_ms)?;
                out.events.push(EventKind::DownloadAttempt {
                    app_id: app_id.clone(),
                });
                self.notice_events(&mut next, &decision, &mut out.events)?;
                out.decision = Some(decision);
            }
            UserAction::Ignore { reason } => {
                let app_id = match &next.pending_notice {
                    Some(PendingNotice {
                        kind: NoticeKind::Selective,
                        app_id,
                    }) => app_id.clone(),
                    _ => return Err(EngineError::NoPendingNotice("selective")),
                };
                next.pending_notice = None;
                next.downloaded.insert(app_id.clone());
                out.events.push(EventKind::NoticeIgnored {
                    app_id: app_id.clone(),
                    reason: reason.clone(),
                });
                out.events.push(EventKind::AppDownloaded { app_id });
            }
            UserAction::OpenAlternatives { app_id } => {
                let profile = self.selected_profile(&next)?;
                out.alternatives = Some(self.suggest_alternatives(profile, app_id)?);
                out.events.push(EventKind::AlternativesOpened {
                    app_id: app_id.clone(),
                });
            }
            UserAction::AnswerExploratory {
                kept_profile,
                new_profile_id,
            } => {
                let app_id = match &next.pending_notice {
                    Some(PendingNotice {
                        kind: NoticeKind::Exploratory,
                        app_id,
                    }) => app_id.clone(),
                    _ => return Err(EngineError::NoPendingNotice("exploratory")),
                };
                if !kept_profile {
                    let id = new_profile_id
                        .as_deref()
                        .ok_or_else(|| EngineError::UnknownProfile(String::new()))?;
                    self.profile(id)?;
                    next.selected_profile_id = Some(id.to_string());
                }
                next.pending_notice = None;
                out.events.push(EventKind::ExploratoryNoticeAnswered {
                    kept_profile: *kept_profile,
                    profile_id: next
                        .selected_profile_id
                        .clone()
                        .ok_or(EngineError::NoProfileSelected)?,
                });
                // the interrupted attempt resumes under the fit rule only
                let decision = self.evaluate_fit(&next, &app_id)?;
                self.notice_events(&mut next, &decision, &mut out.events)?;
                out.decision = Some(decision);
            }
            UserAction::Remove { app_id } => {
                if !next.downloaded.remove(app_id) {
                    return Err(EngineError::NotDownloaded(app_id.clone()));
                }
                out.events.push(EventKind::AppRemoved {
                    app_id: app_id.clone(),
                });
            }
        }
        *state = next;
        Ok(out)
    }
}

/// Maps a logged event back to the action that produced it. Derived events
/// (notices shown, downloads) return `None`.
pub fn action_for(event: &EventKind) -> Option<UserAction> {
    match event {
        EventKind::ProfileSelected { profile_id } => Some(UserAction::SelectProfile {
            profile_id: profile_id.clone(),
        }),
        EventKind::AppViewed { app_id } => Some(UserAction::ViewApp {
            app_id: app_id.clone(),
        }),
        EventKind::DownloadAttempt { app_id } => Some(UserAction::Download {
            app_id: app_id.clone(),
        }),
        EventKind::NoticeIgnored { reason, .. } => Some(UserAction::Ignore {
            reason: reason.clone(),
        }),
        EventKind::AlternativesOpened { app_id } => Some(UserAction::OpenAlternatives {
            app_id: app_id.clone(),
        }),
        EventKind::ExploratoryNoticeAnswered {
            kept_profile,
            profile_id,
        } => Some(UserAction::AnswerExploratory {
            kept_profile: *kept_profile,
            new_profile_id: (!kept_profile).then(|| profile_id.clone()),
        }),
        EventKind::AppRemoved { app_id } => Some(UserAction::Remove {
            app_id: app_id.clone(),
        }),
        EventKind::SessionStarted { .. }
        | EventKind::SelectiveNoticeShown { .. }
        | EventKind::ExploratoryNoticeShown { .. }
        | EventKind::AppDownloaded { .. } => None,
    }
}

/// Outcome of replaying one session's log.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub session_id: String,
    pub decisions: Vec<NoticeDecision>,
    pub final_state: SessionState,
}

/// Re-drives a session's logged actions through the engine and checks that
/// every derived event matches the log exactly.
pub fn replay_session(engine: &Engine, events: &[SessionEvent]) -> Result<Replay, EngineError> {
    replay_session_with(engine, events, |_, _| {})
}

/// [`replay_session`] with a callback after every applied action, receiving
/// the updated state and the action's outcome.
pub fn replay_session_with<F>(
    engine: &Engine,
    events: &[SessionEvent],
    mut observe: F,
) -> Result<Replay, EngineError>
where
    F: FnMut(&SessionState, &Outcome),
{
    let session_id = events.first().map(|e| e.session_id.clone()).unwrap_or_default();
    let mut state = SessionState::new(session_id.clone());
    let mut decisions = Vec::new();
    let mut i = 0;
    let mismatch = |seq: u64, detail: String| EngineError::ReplayMismatch {
        session: session_id.clone(),
        seq,
        detail,
    };
    while i < events.len() {
        let ev = &events[i];
        if ev.session_id != session_id {
            return Err(mismatch(ev.seq, format!("foreign session {}", ev.session_id)));
        }
        if matches!(ev.kind, EventKind::SessionStarted { .. }) {
            i += 1;
            continue;
        }
        let action = action_for(&ev.kind)
            .ok_or_else(|| mismatch(ev.seq, format!("unexpected derived event {:?}", ev.kind)))?;
        let outcome = engine
            .apply(&mut state, &action, ev.elapsed_ms)
            .map_err(|e| mismatch(ev.seq, format!("action rejected: {e}")))?;
        let logged: Vec<&EventKind> = events[i..]
            .iter()
            .take(outcome.events.len())
            .map(|e| &e.kind)
            .collect();
        if logged.len() != outcome.events.len()
            || logged.iter().zip(&outcome.events).any(|(a, b)| *a != b)
        {
            return Err(mismatch(
                ev.seq,
                format!("expected {:?}, log has {:?}", outcome.events, logged),
            ));
        }
        i += outcome.events.len();
        observe(&state, &outcome);
        decisions.extend(outcome.decision);
    }
    Ok(Replay {
        session_id,
        decisions,
        final_state: state,
    })
}
