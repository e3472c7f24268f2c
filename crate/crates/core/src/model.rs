//! Shared domain types: Schwartz values, Apple-style data practices, survey
//! responses, catalog records, acceptability scores, and session events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// One of the ten basic human values, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueName {
    Power,
    Achievement,
    Hedonism,
    Stimulation,
    SelfDirection,
    Universalism,
    Benevolence,
    Tradition,
    Conformity,
    Security,
}

impl ValueName {
    pub const ALL: [ValueName; 10] = [
        ValueName::Power,
        ValueName::Achievement,
        ValueName::Hedonism,
        ValueName::Stimulation,
        ValueName::SelfDirection,
        ValueName::Universalism,
        ValueName::Benevolence,
        ValueName::Tradition,
        ValueName::Conformity,
        ValueName::Security,
    ];

    /// Position in the canonical ordering.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValueName::Power => "Power",
            ValueName::Achievement => "Achievement",
            ValueName::Hedonism => "Hedonism",
            ValueName::Stimulation => "Stimulation",
            ValueName::SelfDirection => "SelfDirection",
            ValueName::Universalism => "Universalism",
            ValueName::Benevolence => "Benevolence",
            ValueName::Tradition => "Tradition",
            ValueName::Conformity => "Conformity",
            ValueName::Security => "Security",
        }
    }

    /// Human-readable label used in persona copy.
    pub fn display_name(self) -> &'static str {
        match self {
            ValueName::SelfDirection => "Self-Direction",
            other => other.as_str(),
        }
    }

    /// Lower-case column stem used by the survey CSV schema.
    pub fn column_key(self) -> &'static str {
        match self {
            ValueName::Power => "power",
            ValueName::Achievement => "achievement",
            ValueName::Hedonism => "hedonism",
            ValueName::Stimulation => "stimulation",
            ValueName::SelfDirection => "self_direction",
            ValueName::Universalism => "universalism",
            ValueName::Benevolence => "benevolence",
            ValueName::Tradition => "tradition",
            ValueName::Conformity => "conformity",
            ValueName::Security => "security",
        }
    }
}

impl fmt::Display for ValueName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueName {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ValueName::ALL
            .into_iter()
            .find(|v| v.as_str() == s || v.column_key() == s)
            .ok_or_else(|| ModelError::UnknownName(s.to_string()))
    }
}

/// Importance rating on the 1 ("opposed") to 9 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueScore(u8);

impl ValueScore {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 9;

    pub fn new(score: i64) -> Result<Self, ModelError> {
        if (Self::MIN as i64..=Self::MAX as i64).contains(&score) {
            Ok(ValueScore(score as u8))
        } else {
            Err(ModelError::ScoreOutOfRange(score))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Serialize for ValueScore {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for ValueScore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(deserializer)?;
        ValueScore::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Complete map of the ten values to their scores.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValueVector([ValueScore; 10]);

impl ValueVector {
    pub fn new(scores: [ValueScore; 10]) -> Self {
        ValueVector(scores)
    }

    pub fn from_raw(scores: [i64; 10]) -> Result<Self, ModelError> {
        let mut out = [ValueScore(1); 10];
        for (slot, raw) in out.iter_mut().zip(scores) {
            *slot = ValueScore::new(raw)?;
        }
        Ok(ValueVector(out))
    }

    pub fn get(&self, value: ValueName) -> ValueScore {
        self.0[value.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ValueName, ValueScore)> + '_ {
        ValueName::ALL.into_iter().zip(self.0.iter().copied())
    }

    pub fn as_f64(&self) -> [f64; 10] {
        self.0.map(|s| s.get() as f64)
    }
}

impl Serialize for ValueVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<ValueName, ValueScore> = self.iter().collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ValueVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<ValueName, ValueScore>::deserialize(deserializer)?;
        let mut out = [ValueScore(1); 10];
        for value in ValueName::ALL {
            out[value.index()] = *map
                .get(&value)
                .ok_or_else(|| serde::de::Error::custom(format!("missing value {value}")))?;
        }
        Ok(ValueVector(out))
    }
}

/// Data categories from the App Store privacy labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DataType {
    HealthAndFitness,
    Financial,
    Location,
    SensitiveInfo,
    Contacts,
    PhoneContent,
    BrowsingHistory,
    SearchHistory,
    PurchaseHistory,
    UsageData,
    DiagnosticData,
    ContactInfo,
    OtherIdentifiers,
}

impl DataType {
    pub const ALL: [DataType; 13] = [
        DataType::HealthAndFitness,
        DataType::Financial,
        DataType::Location,
        DataType::SensitiveInfo,
        DataType::Contacts,
        DataType::PhoneContent,
        DataType::BrowsingHistory,
        DataType::SearchHistory,
        DataType::PurchaseHistory,
        DataType::UsageData,
        DataType::DiagnosticData,
        DataType::ContactInfo,
        DataType::OtherIdentifiers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::HealthAndFitness => "HealthAndFitness",
            DataType::Financial => "Financial",
            DataType::Location => "Location",
            DataType::SensitiveInfo => "SensitiveInfo",
            DataType::Contacts => "Contacts",
            DataType::PhoneContent => "PhoneContent",
            DataType::BrowsingHistory => "BrowsingHistory",
            DataType::SearchHistory => "SearchHistory",
            DataType::PurchaseHistory => "PurchaseHistory",
            DataType::UsageData => "UsageData",
            DataType::DiagnosticData => "DiagnosticData",
            DataType::ContactInfo => "ContactInfo",
            DataType::OtherIdentifiers => "OtherIdentifiers",
        }
    }

    pub fn column_key(self) -> &'static str {
        match self {
            DataType::HealthAndFitness => "health_and_fitness",
            DataType::Financial => "financial",
            DataType::Location => "location",
            DataType::SensitiveInfo => "sensitive_info",
            DataType::Contacts => "contacts",
            DataType::PhoneContent => "phone_content",
            DataType::BrowsingHistory => "browsing_history",
            DataType::SearchHistory => "search_history",
            DataType::PurchaseHistory => "purchase_history",
            DataType::UsageData => "usage_data",
            DataType::DiagnosticData => "diagnostic_data",
            DataType::ContactInfo => "contact_info",
            DataType::OtherIdentifiers => "other_identifiers",
        }
    }

    /// Contact info and other identifiers only exist in linked or tracked form.
    pub fn has_unlinked_form(self) -> bool {
        !matches!(self, DataType::ContactInfo | DataType::OtherIdentifiers)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataType::ALL
            .into_iter()
            .find(|d| d.as_str() == s || d.column_key() == s)
            .ok_or_else(|| ModelError::UnknownName(s.to_string()))
    }
}

/// How collected data relates to the user. Ordered from least to most invasive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CollectionMode {
    Unlinked,
    Linked,
    Tracked,
}

impl CollectionMode {
    pub const ALL: [CollectionMode; 3] = [
        CollectionMode::Unlinked,
        CollectionMode::Linked,
        CollectionMode::Tracked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CollectionMode::Unlinked => "Unlinked",
            CollectionMode::Linked => "Linked",
            CollectionMode::Tracked => "Tracked",
        }
    }

    pub fn column_key(self) -> &'static str {
        match self {
            CollectionMode::Unlinked => "unlinked",
            CollectionMode::Linked => "linked",
            CollectionMode::Tracked => "tracked",
        }
    }

    /// The next less invasive mode, if any.
    pub fn weaker(self) -> Option<CollectionMode> {
        match self {
            CollectionMode::Unlinked => None,
            CollectionMode::Linked => Some(CollectionMode::Unlinked),
            CollectionMode::Tracked => Some(CollectionMode::Linked),
        }
    }
}

impl FromStr for CollectionMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CollectionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.column_key() == s)
            .ok_or_else(|| ModelError::UnknownName(s.to_string()))
    }
}

/// A (collection mode, data type) pair an app may require.
///
/// Only 37 of the 39 grid cells are valid: contact info and other identifiers
/// have no unlinked form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Practice {
    mode: CollectionMode,
    data_type: DataType,
}

impl Practice {
    pub const COUNT: usize = 37;

    pub fn new(mode: CollectionMode, data_type: DataType) -> Result<Self, ModelError> {
        validate_practice(mode, data_type)
    }

    pub fn mode(self) -> CollectionMode {
        self.mode
    }

    pub fn data_type(self) -> DataType {
        self.data_type
    }

    /// Every valid practice, ordered by data type then mode.
    pub fn all() -> Vec<Practice> {
        DataType::ALL
            .into_iter()
            .flat_map(|dt| CollectionMode::ALL.into_iter().map(move |m| (m, dt)))
            .filter_map(|(m, dt)| Practice::new(m, dt).ok())
            .collect()
    }

    /// Survey CSV column name, e.g. `pref_linked_location`.
    pub fn column_name(self) -> String {
        format!(
            "pref_{}_{}",
            self.mode.column_key(),
            self.data_type.column_key()
        )
    }
}

impl fmt::Display for Practice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.mode.as_str(), self.data_type.as_str())
    }
}

impl FromStr for Practice {
    type Err = ModelError;

    /// Parses the `Mode:DataType` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mode, dt) = s
            .split_once(':')
            .ok_or_else(|| ModelError::UnknownName(s.to_string()))?;
        Practice::new(mode.parse()?, dt.parse()?)
    }
}

impl<'de> Deserialize<'de> for Practice {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            mode: CollectionMode,
            data_type: DataType,
        }
        let raw = Raw::deserialize(deserializer)?;
        Practice::new(raw.mode, raw.data_type).map_err(serde::de::Error::custom)
    }
}

/// Returns the practice iff the (mode, type) combination exists on a label.
pub fn validate_practice(mode: CollectionMode, dt: DataType) -> Result<Practice, ModelError> {
    if mode == CollectionMode::Unlinked && !dt.has_unlinked_form() {
        return Err(ModelError::InvalidPractice { mode, data_type: dt });
    }
    Ok(Practice {
        mode,
        data_type: dt,
    })
}

/// Set of practices a respondent is willing to accept. May be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceSet {
    accepted: BTreeSet<Practice>,
}

impl PreferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, practice: &Practice) -> bool {
        self.accepted.contains(practice)
    }

    pub fn insert(&mut self, practice: Practice) -> bool {
        self.accepted.insert(practice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Practice> {
        self.accepted.iter()
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn is_subset(&self, other: &PreferenceSet) -> bool {
        self.accepted.is_subset(&other.accepted)
    }
}

impl FromIterator<Practice> for PreferenceSet {
    fn from_iter<I: IntoIterator<Item = Practice>>(iter: I) -> Self {
        PreferenceSet {
            accepted: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurveyVariant {
    LoseIt,
    OpenLitterMap,
}

impl FromStr for SurveyVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LoseIt" | "lose_it" | "loseit" => Ok(SurveyVariant::LoseIt),
            "OpenLitterMap" | "open_litter_map" | "openlittermap" => {
                Ok(SurveyVariant::OpenLitterMap)
            }
            other => Err(ModelError::UnknownName(other.to_string())),
        }
    }
}

impl fmt::Display for SurveyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurveyVariant::LoseIt => "LoseIt",
            SurveyVariant::OpenLitterMap => "OpenLitterMap",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    pub general_values: ValueVector,
    pub app_values: ValueVector,
    pub preferences: PreferenceSet,
    pub survey_variant: SurveyVariant,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub keywords: BTreeSet<String>,
    pub practices: BTreeSet<Practice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrafficLight {
    Red,
    Yellow,
    Green,
}

/// Boundaries between traffic-light classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightThresholds {
    /// Coefficients strictly below this are red.
    pub red_below: f64,
    /// Coefficients strictly above this are green.
    pub green_above: f64,
}

impl Default for LightThresholds {
    fn default() -> Self {
        LightThresholds {
            red_below: 0.1,
            green_above: 0.5,
        }
    }
}

impl LightThresholds {
    pub fn classify(&self, coefficient: f64) -> Result<TrafficLight, ModelError> {
        if !(0.0..=1.0).contains(&coefficient) {
            return Err(ModelError::CoefficientOutOfRange(coefficient));
        }
        Ok(if coefficient < self.red_below {
            TrafficLight::Red
        } else if coefficient > self.green_above {
            TrafficLight::Green
        } else {
            TrafficLight::Yellow
        })
    }
}

/// Classifies with the default 0.1 / 0.5 boundaries. Both boundaries are yellow.
pub fn classify_light(coefficient: f64) -> Result<TrafficLight, ModelError> {
    LightThresholds::default().classify(coefficient)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptabilityScore {
    pub coefficient: f64,
    pub light: TrafficLight,
}

/// Reference to one participant session.
pub type SessionId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "PascalCase")]
pub enum EventKind {
    SessionStarted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entry_concern: Option<u8>,
    },
    ProfileSelected {
        profile_id: String,
    },
    AppViewed {
        app_id: String,
    },
    DownloadAttempt {
        app_id: String,
    },
    SelectiveNoticeShown {
        app_id: String,
        /// Minimum acceptance count over the app's practices.
        accepting: u32,
        members: u32,
    },
    NoticeIgnored {
        app_id: String,
        reason: String,
    },
    AlternativesOpened {
        app_id: String,
    },
    ExploratoryNoticeShown {
        app_id: String,
    },
    ExploratoryNoticeAnswered {
        kept_profile: bool,
        profile_id: String,
    },
    AppDownloaded {
        app_id: String,
    },
    AppRemoved {
        app_id: String,
    },
}

impl EventKind {
    pub fn app_id(&self) -> Option<&str> {
        match self {
            EventKind::AppViewed { app_id }
            | EventKind::DownloadAttempt { app_id }
            | EventKind::SelectiveNoticeShown { app_id, .. }
            | EventKind::NoticeIgnored { app_id, .. }
            | EventKind::AlternativesOpened { app_id }
            | EventKind::ExploratoryNoticeShown { app_id }
            | EventKind::AppDownloaded { app_id }
            | EventKind::AppRemoved { app_id } => Some(app_id),
            _ => None,
        }
    }
}

/// One record of the append-only interaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: SessionId,
    /// Per-session sequence number starting at 0.
    pub seq: u64,
    /// Milliseconds since the session started (monotonic).
    pub elapsed_ms: u64,
    /// Unix wall-clock milliseconds, audit only.
    pub wall_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Checks per-session ordering rules on an event sequence.
///
/// Timestamps must not decrease within a session and every download must be
/// preceded by an attempt for the same app.
pub fn check_session_order(events: &[SessionEvent]) -> Result<(), ModelError> {
    let mut last: BTreeMap<&str, u64> = BTreeMap::new();
    let mut attempted: BTreeSet<(&str, &str)> = BTreeSet::new();
    for ev in events {
        if let Some(prev) = last.insert(&ev.session_id, ev.elapsed_ms) {
            if ev.elapsed_ms < prev {
                return Err(ModelError::EventOrder(format!(
                    "session {} seq {}: elapsed_ms went backwards",
                    ev.session_id, ev.seq
                )));
            }
        }
        match &ev.kind {
            EventKind::DownloadAttempt { app_id } => {
                attempted.insert((&ev.session_id, app_id));
            }
            EventKind::AppDownloaded { app_id }
                if !attempted.contains(&(ev.session_id.as_str(), app_id.as_str())) => {
                    return Err(ModelError::EventOrder(format!(
                        "session {} seq {}: {app_id} downloaded without an attempt",
                        ev.session_id, ev.seq
                    )));
                }
            _ => {}
        }
    }
    Ok(())
}
