//! Value-centered privacy assistant: survey statistics, value profiles, an
//! app catalog with acceptability scoring, and a mock app store service.

pub mod analytics;
pub mod catalog;
pub mod client;
pub mod engine;
pub mod error;
pub mod eventlog;
pub mod model;
pub mod pipeline;
pub mod profiles;
pub mod service;
pub mod simulate;
pub mod stats;
pub mod survey;

pub use catalog::{build_catalog, Catalog, CatalogConfig, CatalogSource, ExclusionRule};
pub use engine::{Engine, EngineConfig, NoticeDecision, SessionState, UserAction};
pub use model::{
    AppRecord, CollectionMode, DataType, Practice, PreferenceSet, SessionEvent, SurveyResponse,
    TrafficLight, ValueName,
};
pub use profiles::{assemble_profiles, ProfileDocument, ValueProfile};
pub use survey::{ingest_csv, SurveyDataset};
