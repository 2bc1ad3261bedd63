//! Live test administration.
//!
//! A [`SessionService`] delivers items from fixed forms or by maximum
//! information, judges each 3-AFC choice against its triad, keeps an EAP
//! estimate current, and appends every state change to an event log before
//! applying it. Replaying the log rebuilds the same sessions.

mod events;
mod service;

use serde::{Deserialize, Serialize};

pub use events::{parse_events, EventKind, EventLog, SessionEvent};
pub use service::{
    Clock, ExportedSessions, IdGenerator, NextItem, ServiceConfig, SessionService, SessionSummary, StimulusRef, SystemClock,
    UuidGenerator,
};

use crate::irt::LatentAbility;

/// Stimulus exposure for each triad, in milliseconds.
pub const DEFAULT_EXPOSURE_MS: u64 = 3500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionMode {
    FixedForm,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Active,
    Complete,
}

/// Stopping rule for adaptive sessions: whichever of the two is reached first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePolicy {
    pub max_items: usize,
    pub se_target: f64,
}

impl Default for AdaptivePolicy {
    fn default() -> Self {
        Self {
            max_items: 36,
            se_target: 0.35,
        }
    }
}

/// What a new session administers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SessionPlan {
    FixedForm { form_id: String },
    Adaptive { policy: AdaptivePolicy },
}

impl SessionPlan {
    pub fn mode(&self) -> SessionMode {
        match self {
            SessionPlan::FixedForm { .. } => SessionMode::FixedForm,
            SessionPlan::Adaptive { .. } => SessionMode::Adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingItem {
    pub item_id: String,
    pub presented_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdministeredItem {
    pub item_id: String,
    /// UTC milliseconds.
    pub presented_at: u64,
    pub choice_index: u8,
    pub correct: bool,
    pub response_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub subject_alias: String,
    pub plan: SessionPlan,
    pub created_at: u64,
    pub administered: Vec<AdministeredItem>,
    pub pending: Option<PendingItem>,
    pub current_estimate: LatentAbility,
    pub status: SessionStatus,
}

impl Session {
    pub fn mode(&self) -> SessionMode {
        self.plan.mode()
    }

    pub fn responses(&self) -> Vec<(&str, bool)> {
        self.administered.iter().map(|a| (a.item_id.as_str(), a.correct)).collect()
    }

    pub fn has_seen(&self, item_id: &str) -> bool {
        self.administered.iter().any(|a| a.item_id == item_id)
    }
}
