use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};

use super::events::{EventKind, EventLog, SessionEvent};
use super::{AdaptivePolicy, AdministeredItem, PendingItem, Session, SessionMode, SessionPlan, SessionStatus, DEFAULT_EXPOSURE_MS};
use crate::assembly::SubsetManifest;
use crate::error::{Error, Result};
use crate::irt::{estimate_ability, item_information, AbilityMethod, FittedModel, LatentAbility, ResponseMatrix};
use crate::triads::Triad;

/// Source of UTC millisecond timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// Source of candidate session ids; collisions are retried.
pub trait IdGenerator: Send + Sync {
    fn next_id(&self) -> String;
}

pub struct UuidGenerator;

impl IdGenerator for UuidGenerator {
    fn next_id(&self) -> String {
        uuid::Uuid::new_v4().to_string()
    }
}

const ID_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_exposure")]
    pub exposure_ms: u64,
    /// Prefix of stimulus URLs; the image id is appended after a `/`.
    #[serde(default = "default_asset_base")]
    pub asset_base_url: String,
    #[serde(default)]
    pub default_policy: AdaptivePolicy,
}

fn default_exposure() -> u64 {
    DEFAULT_EXPOSURE_MS
}

fn default_asset_base() -> String {
    "/assets".into()
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            exposure_ms: DEFAULT_EXPOSURE_MS,
            asset_base_url: default_asset_base(),
            default_policy: AdaptivePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRef {
    pub image_id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextItem {
    pub session_id: String,
    pub item_id: String,
    /// 1-based position of this item within the session.
    pub position: usize,
    pub stimuli: Vec<StimulusRef>,
    pub exposure_ms: u64,
    pub presented_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub subject_alias: String,
    pub mode: SessionMode,
    pub status: SessionStatus,
    pub created_at: u64,
    pub n_administered: usize,
    pub theta: f64,
    pub standard_error: f64,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            subject_alias: s.subject_alias.clone(),
            mode: s.mode(),
            status: s.status,
            created_at: s.created_at,
            n_administered: s.administered.len(),
            theta: s.current_estimate.theta,
            standard_error: s.current_estimate.standard_error,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExportedSessions {
    /// Rows keyed by subject alias, columns in model item order.
    pub matrix: ResponseMatrix,
    pub sessions: Vec<SessionSummary>,
}

/// Concurrent session store backed by an event log.
///
/// Each session has its own lock; the log has one more. A mutation holds
/// its session's lock while it appends to the log, so a session's events
/// reach the log in the order they are applied.
pub struct SessionService {
    model: FittedModel,
    item_order: HashMap<String, usize>,
    triads: HashMap<String, Triad>,
    forms: BTreeMap<String, Vec<String>>,
    config: ServiceConfig,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    log: Mutex<EventLog>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdGenerator>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionService {
    /// Service with no sessions writing to `log`.
    pub fn new(model: FittedModel, triads: Vec<Triad>, forms: Vec<SubsetManifest>, config: ServiceConfig, log: EventLog) -> Result<Self> {
        let triads: HashMap<String, Triad> = triads.into_iter().map(|t| (t.triad_id.clone(), t)).collect();
        let missing: Vec<&str> = model.items.iter().map(|i| i.item_id.as_str()).filter(|id| !triads.contains_key(*id)).collect();
        if !missing.is_empty() {
            return Err(Error::ItemMismatch(format!("no triad for model items {missing:?}")));
        }
        let item_order: HashMap<String, usize> = model.items.iter().enumerate().map(|(k, i)| (i.item_id.clone(), k)).collect();
        let mut form_map = BTreeMap::new();
        for form in forms {
            let ids = form.bank.item_ids();
            if let Some(bad) = ids.iter().find(|id| !item_order.contains_key(*id)) {
                return Err(Error::UnknownItem(format!("{bad} (form `{}`)", form.name)));
            }
            if form_map.insert(form.name.clone(), ids).is_some() {
                return Err(Error::InvalidInput(format!("duplicate form `{}`", form.name)));
            }
        }
        Ok(Self {
            model,
            item_order,
            triads,
            forms: form_map,
            config,
            sessions: RwLock::new(BTreeMap::new()),
            log: Mutex::new(log),
            clock: Arc::new(SystemClock),
            ids: Arc::new(UuidGenerator),
        })
    }

    /// Service whose sessions are rebuilt from the log at `path`; new events append to it.
    pub fn open(model: FittedModel, triads: Vec<Triad>, forms: Vec<SubsetManifest>, config: ServiceConfig, path: &Path) -> Result<Self> {
        let (log, events) = EventLog::open(path)?;
        let service = Self::new(model, triads, forms, config, log)?;
        service.replay(&events)?;
        Ok(service)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_id_generator(mut self, ids: Arc<dyn IdGenerator>) -> Self {
        self.ids = ids;
        self
    }

    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn form_ids(&self) -> Vec<String> {
        self.forms.keys().cloned().collect()
    }

    /// Lines written so far when the log lives in memory.
    pub fn memory_log(&self) -> Vec<String> {
        lock(&self.log).memory_lines().to_vec()
    }

    /// Applies logged events in order without writing them again.
    pub fn replay(&self, events: &[SessionEvent]) -> Result<()> {
        for event in events {
            match &event.kind {
                EventKind::Created { .. } => {
                    let session = self.created(&event.session_id, event.at, &event.kind)?;
                    let mut map = self.sessions.write().unwrap_or_else(|p| p.into_inner());
                    if map.contains_key(&event.session_id) {
                        return Err(Error::Parse(format!("event {} recreates session `{}`", event.seq, event.session_id)));
                    }
                    map.insert(event.session_id.clone(), Arc::new(Mutex::new(session)));
                }
                kind => {
                    let handle = self.handle(&event.session_id)?;
                    let mut session = lock(&handle);
                    self.apply(&mut session, event.at, kind)?;
                }
            }
        }
        Ok(())
    }

    fn handle(&self, session_id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(session_id.to_string()))
    }

    fn created(&self, session_id: &str, at: u64, kind: &EventKind) -> Result<Session> {
        let EventKind::Created { subject_alias, plan } = kind else {
            unreachable!("only called for creation events");
        };
        match plan {
            SessionPlan::FixedForm { form_id } if !self.forms.contains_key(form_id) => {
                return Err(Error::UnknownForm(form_id.clone()));
            }
            SessionPlan::Adaptive { policy } if !(policy.se_target >= 0.0) => {
                return Err(Error::InvalidInput(format!("se_target {} must be non-negative", policy.se_target)));
            }
            _ => {}
        }
        let mut session = Session {
            session_id: session_id.to_string(),
            subject_alias: subject_alias.clone(),
            plan: plan.clone(),
            created_at: at,
            administered: Vec::new(),
            pending: None,
            current_estimate: LatentAbility::prior(subject_alias.as_str()),
            status: SessionStatus::Active,
        };
        if self.finished(&session) {
            session.status = SessionStatus::Complete;
        }
        Ok(session)
    }

    /// Stopping rule, evaluated after creation and after every response.
    fn finished(&self, s: &Session) -> bool {
        match &s.plan {
            SessionPlan::FixedForm { form_id } => s.administered.len() >= self.forms[form_id].len(),
            SessionPlan::Adaptive { policy } => {
                s.administered.len() >= policy.max_items
                    || s.administered.len() >= self.model.items.len()
                    || (!s.administered.is_empty() && s.current_estimate.standard_error <= policy.se_target)
            }
        }
    }

    fn select(&self, s: &Session) -> Option<String> {
        match &s.plan {
            SessionPlan::FixedForm { form_id } => self.forms[form_id].iter().find(|id| !s.has_seen(id)).cloned(),
            SessionPlan::Adaptive { .. } => {
                let theta = s.current_estimate.theta;
                let mut candidates: Vec<_> = self.model.items.iter().filter(|i| !s.has_seen(&i.item_id)).collect();
                candidates.sort_by(|a, b| a.item_id.cmp(&b.item_id));
                let mut best: Option<(f64, &str)> = None;
                for item in candidates {
                    let info = item_information(theta, item);
                    // equal up to rounding counts as a tie, which the lower id wins
                    match best {
                        Some((b, _)) if info <= b * (1.0 + 1e-12) => {}
                        _ => best = Some((info, &item.item_id)),
                    }
                }
                best.map(|(_, id)| id.to_string())
            }
        }
    }

    /// Validates `kind` against the session and applies it.
    fn apply(&self, s: &mut Session, at: u64, kind: &EventKind) -> Result<()> {
        if s.status == SessionStatus::Complete {
            return Err(Error::SessionComplete(s.session_id.clone()));
        }
        match kind {
            EventKind::Created { .. } => return Err(Error::InvalidInput(format!("session `{}` already exists", s.session_id))),
            EventKind::ItemIssued { item_id } => {
                if s.has_seen(item_id) || !self.item_order.contains_key(item_id) {
                    return Err(Error::StaleItem {
                        expected: None,
                        got: item_id.clone(),
                    });
                }
                s.pending = Some(PendingItem {
                    item_id: item_id.clone(),
                    presented_at: at,
                });
            }
            EventKind::Responded {
                item_id,
                choice_index,
                response_ms,
            } => {
                if *choice_index > 2 {
                    return Err(Error::InvalidChoice(*choice_index));
                }
                let pending = match &s.pending {
                    Some(p) if p.item_id == *item_id => p.clone(),
                    other => {
                        return Err(Error::StaleItem {
                            expected: other.as_ref().map(|p| p.item_id.clone()),
                            got: item_id.clone(),
                        })
                    }
                };
                let correct = self.triads[item_id].odd_one_out_index == *choice_index;
                s.administered.push(AdministeredItem {
                    item_id: item_id.clone(),
                    presented_at: pending.presented_at,
                    choice_index: *choice_index,
                    correct,
                    response_ms: *response_ms,
                });
                s.pending = None;
                s.current_estimate = estimate_ability(&s.subject_alias, &s.responses(), &self.model, AbilityMethod::Eap)?;
                if self.finished(s) {
                    s.status = SessionStatus::Complete;
                }
            }
        }
        Ok(())
    }

    /// Opens a session; the new id never collides with an existing one.
    pub fn create_session(&self, subject_alias: &str, plan: SessionPlan) -> Result<Session> {
        if subject_alias.trim().is_empty() {
            return Err(Error::InvalidInput("subject alias is empty".into()));
        }
        let mut map = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        let session_id = (0..ID_ATTEMPTS)
            .map(|_| self.ids.next_id())
            .find(|id| !id.is_empty() && !map.contains_key(id))
            .ok_or_else(|| Error::InvalidInput(format!("no unused session id after {ID_ATTEMPTS} attempts")))?;
        let at = self.clock.now_ms();
        let kind = EventKind::Created {
            subject_alias: subject_alias.to_string(),
            plan,
        };
        let session = self.created(&session_id, at, &kind)?;
        lock(&self.log).append(at, &session_id, kind)?;
        map.insert(session_id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    fn mutate(&self, session: &mut Session, kind: EventKind) -> Result<()> {
        let at = self.clock.now_ms();
        let mut next = session.clone();
        self.apply(&mut next, at, &kind)?;
        lock(&self.log).append(at, &session.session_id, kind)?;
        *session = next;
        Ok(())
    }

    fn describe(&self, s: &Session, pending: &PendingItem) -> NextItem {
        let triad = &self.triads[&pending.item_id];
        let base = self.config.asset_base_url.trim_end_matches('/');
        NextItem {
            session_id: s.session_id.clone(),
            item_id: pending.item_id.clone(),
            position: s.administered.len() + 1,
            stimuli: triad
                .presentation
                .iter()
                .map(|id| StimulusRef {
                    image_id: id.clone(),
                    url: format!("{base}/{id}"),
                })
                .collect(),
            exposure_ms: self.config.exposure_ms,
            presented_at: pending.presented_at,
        }
    }

    /// The item to show now. Asking again before responding returns the same item.
    pub fn next_item(&self, session_id: &str) -> Result<NextItem> {
        let handle = self.handle(session_id)?;
        let mut s = lock(&handle);
        if s.status == SessionStatus::Complete {
            return Err(Error::SessionComplete(session_id.to_string()));
        }
        if s.pending.is_none() {
            let item_id = self
                .select(&s)
                .ok_or_else(|| Error::SessionComplete(format!("{session_id} (no items left)")))?;
            self.mutate(&mut s, EventKind::ItemIssued { item_id })?;
        }
        let pending = s.pending.clone().expect("item was just issued");
        Ok(self.describe(&s, &pending))
    }

    /// Records the choice for the pending item; rejected requests leave the session unchanged.
    pub fn record_response(&self, session_id: &str, item_id: &str, choice_index: u8, response_ms: u64) -> Result<Session> {
        let handle = self.handle(session_id)?;
        let mut s = lock(&handle);
        self.mutate(
            &mut s,
            EventKind::Responded {
                item_id: item_id.to_string(),
                choice_index,
                response_ms,
            },
        )?;
        Ok(s.clone())
    }

    pub fn session(&self, session_id: &str) -> Result<Session> {
        let handle = self.handle(session_id)?;
        let session = lock(&handle).clone();
        Ok(session)
    }

    pub fn estimate(&self, session_id: &str) -> Result<LatentAbility> {
        Ok(self.session(session_id)?.current_estimate)
    }

    /// All sessions ordered by id.
    pub fn sessions(&self) -> Vec<Session> {
        let handles: Vec<_> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
        handles.iter().map(|h| lock(h).clone()).collect()
    }

    /// Every session as pretty JSON, ordered by id.
    pub fn snapshot_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.sessions())?)
    }

    /// Flattens sessions into a subject-by-item matrix; partial sessions only on request.
    pub fn export_sessions(&self, include_partial: bool) -> Result<ExportedSessions> {
        let mut sessions: Vec<Session> = self
            .sessions()
            .into_iter()
            .filter(|s| include_partial || s.status == SessionStatus::Complete)
            .collect();
        sessions.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.session_id.cmp(&b.session_id)));

        let used: HashSet<&str> = sessions.iter().flat_map(|s| s.administered.iter().map(|a| a.item_id.as_str())).collect();
        let columns: Vec<String> = self.model.items.iter().map(|i| i.item_id.clone()).filter(|id| used.contains(id.as_str())).collect();
        let column_of: HashMap<&str, usize> = columns.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();

        let mut aliases: HashMap<&str, usize> = HashMap::new();
        for s in &sessions {
            *aliases.entry(s.subject_alias.as_str()).or_default() += 1;
        }
        let mut rows = Vec::with_capacity(sessions.len());
        let mut cells = Vec::with_capacity(sessions.len() * columns.len());
        for s in &sessions {
            if aliases[s.subject_alias.as_str()] > 1 {
                warn!("alias `{}` has several sessions; rows are suffixed with session ids", s.subject_alias);
                rows.push(format!("{}#{}", s.subject_alias, s.session_id));
            } else {
                rows.push(s.subject_alias.clone());
            }
            let mut row = vec![None; columns.len()];
            for a in &s.administered {
                row[column_of[a.item_id.as_str()]] = Some(a.correct);
            }
            cells.extend(row);
        }
        Ok(ExportedSessions {
            matrix: ResponseMatrix::new(rows, columns, cells)?,
            sessions: sessions.iter().map(SessionSummary::from).collect(),
        })
    }
}
