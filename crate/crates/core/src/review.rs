//! Expert review of retention candidates.
//!
//! A panel of exactly three experts votes on each pending ticket. Once all
//! three have voted the ticket resolves from the number of approvals alone:
//!
//! | approvals | state                         |
//! |-----------|-------------------------------|
//! | 3         | `Accepted`                    |
//! | 2         | `RejectedWithJustification`   |
//! | 0 or 1    | `RejectedSingleApproval`      |
//!
//! With two approvals the dissenting vote must carry a justification; the
//! vote that would complete such a ticket without one is refused with
//! [`ReviewError::JustificationRequired`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::PersonalityLabel;

pub const PANEL_SIZE: usize = 3;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown expert {0}")]
    UnknownExpert(ExpertId),
    #[error("unknown ticket {0}")]
    UnknownTicket(TicketId),
    #[error("ticket {0} is closed")]
    TicketClosed(TicketId),
    #[error("expert {expert} already voted on ticket {ticket}")]
    AlreadyVoted { ticket: TicketId, expert: ExpertId },
    #[error("ticket {0}: the dissenting vote must be justified")]
    JustificationRequired(TicketId),
    #[error("panel must have exactly {PANEL_SIZE} distinct experts, got {0}")]
    InvalidPanel(usize),
    #[error("review log {path}: {message}")]
    Storage { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TicketId(pub u64);

impl fmt::Display for TicketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertId(String);

impl ExpertId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ExpertId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertPanel {
    experts: Vec<ExpertId>,
}

impl ExpertPanel {
    pub fn new<I, S>(ids: I) -> Result<Self, ReviewError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let experts: Vec<ExpertId> = ids.into_iter().map(|s| ExpertId(s.into())).collect();
        let mut distinct = experts.clone();
        distinct.sort();
        distinct.dedup();
        if experts.len() != PANEL_SIZE || distinct.len() != PANEL_SIZE || experts.iter().any(|e| e.0.is_empty()) {
            return Err(ReviewError::InvalidPanel(distinct.len()));
        }
        Ok(Self { experts })
    }

    pub fn experts(&self) -> &[ExpertId] {
        &self.experts
    }

    pub fn contains(&self, id: &ExpertId) -> bool {
        self.experts.contains(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub expert_id: ExpertId,
    pub decision: Decision,
    pub justification: Option<String>,
}

impl Vote {
    /// Blank justifications count as absent.
    pub fn new(expert: impl Into<String>, decision: Decision, justification: Option<&str>) -> Self {
        Self {
            expert_id: ExpertId(expert.into()),
            decision,
            justification: justification
                .map(str::trim)
                .filter(|j| !j.is_empty())
                .map(str::to_owned),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketState {
    Pending,
    Accepted,
    RejectedSingleApproval,
    RejectedWithJustification,
}

impl TicketState {
    pub fn as_str(self) -> &'static str {
        match self {
            TicketState::Pending => "pending",
            TicketState::Accepted => "accepted",
            TicketState::RejectedSingleApproval => "rejected_single_approval",
            TicketState::RejectedWithJustification => "rejected_with_justification",
        }
    }
}

/// Final state of a fully voted ticket.
pub fn resolve(approvals: usize) -> TicketState {
    match approvals {
        3 => TicketState::Accepted,
        2 => TicketState::RejectedWithJustification,
        _ => TicketState::RejectedSingleApproval,
    }
}

/// What would be retained: the reader's text and the recommended book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tweet_text: String,
    pub book_title: String,
    pub personality: PersonalityLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastVote {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    pub cast_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTicket {
    ticket_id: TicketId,
    candidate: Candidate,
    votes: BTreeMap<ExpertId, CastVote>,
    state: TicketState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    justification: Option<String>,
    opened_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closed_at: Option<DateTime<Utc>>,
}

impl ReviewTicket {
    pub fn id(&self) -> TicketId {
        self.ticket_id
    }

    pub fn candidate(&self) -> &Candidate {
        &self.candidate
    }

    pub fn votes(&self) -> &BTreeMap<ExpertId, CastVote> {
        &self.votes
    }

    pub fn state(&self) -> TicketState {
        self.state
    }

    /// Present only on `RejectedWithJustification` tickets.
    pub fn justification(&self) -> Option<&str> {
        self.justification.as_deref()
    }

    pub fn opened_at(&self) -> DateTime<Utc> {
        self.opened_at
    }

    pub fn closed_at(&self) -> Option<DateTime<Utc>> {
        self.closed_at
    }

    pub fn approvals(&self) -> usize {
        self.votes
            .values()
            .filter(|v| v.decision == Decision::Approve)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub ticket_id: TicketId,
    pub expert_id: ExpertId,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    pub cast_at: DateTime<Utc>,
    pub resulting_state: TicketState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingEntry {
    pub ticket: ReviewTicket,
    pub vote_count: usize,
    /// Whether the expert who asked has already voted on this ticket.
    pub voted_by_viewer: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct BoardState {
    next_id: u64,
    tickets: BTreeMap<TicketId, ReviewTicket>,
    audit: BTreeMap<TicketId, Vec<AuditEntry>>,
}

/// Ticket registry and vote log. Writers are serialized; readers clone an
/// immutable snapshot.
pub struct ReviewBoard {
    panel: ExpertPanel,
    state: RwLock<Arc<BoardState>>,
    writer: Mutex<Option<PathBuf>>,
}

impl fmt::Debug for ReviewBoard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReviewBoard")
            .field("panel", &self.panel)
            .field("tickets", &self.state.read().tickets.len())
            .finish()
    }
}

impl ReviewBoard {
    pub fn new(panel: ExpertPanel) -> Self {
        Self {
            panel,
            state: RwLock::new(Arc::new(BoardState {
                next_id: 1,
                ..BoardState::default()
            })),
            writer: Mutex::new(None),
        }
    }

    /// A board backed by a JSON file, rewritten atomically on every change.
    pub fn with_file(path: impl AsRef<Path>, panel: ExpertPanel) -> Result<Self, ReviewError> {
        let path = path.as_ref().to_path_buf();
        let board = Self::new(panel);
        if path.exists() {
            let storage = |message: String| ReviewError::Storage {
                path: path.clone(),
                message,
            };
            let body = fs::read(&path).map_err(|e| storage(e.to_string()))?;
            let state: BoardState = serde_json::from_slice(&body).map_err(|e| storage(e.to_string()))?;
            *board.state.write() = Arc::new(state);
        }
        *board.writer.lock() = Some(path);
        Ok(board)
    }

    pub fn panel(&self) -> &ExpertPanel {
        &self.panel
    }

    pub fn open_ticket(&self, candidate: Candidate) -> Result<ReviewTicket, ReviewError> {
        let writer = self.writer.lock();
        let mut next = (**self.state.read()).clone();
        let id = TicketId(next.next_id);
        next.next_id += 1;
        let ticket = ReviewTicket {
            ticket_id: id,
            candidate,
            votes: BTreeMap::new(),
            state: TicketState::Pending,
            justification: None,
            opened_at: Utc::now(),
            closed_at: None,
        };
        next.tickets.insert(id, ticket.clone());
        next.audit.insert(id, Vec::new());
        self.commit(writer.as_deref(), next)?;
        Ok(ticket)
    }

    pub fn ticket(&self, id: TicketId) -> Option<ReviewTicket> {
        self.state.read().tickets.get(&id).cloned()
    }

    pub fn cast_vote(&self, id: TicketId, vote: Vote) -> Result<ReviewTicket, ReviewError> {
        self.cast_vote_with(id, vote, |_| Ok::<(), ReviewError>(()))
            .map(|(ticket, _)| ticket)
    }

    /// Records a vote. When it resolves the ticket as `Accepted`,
    /// `on_accept` runs before anything is committed; if it fails the vote
    /// is not recorded and its error is returned.
    pub fn cast_vote_with<R, E, F>(
        &self,
        id: TicketId,
        vote: Vote,
        on_accept: F,
    ) -> Result<(ReviewTicket, Option<R>), E>
    where
        E: From<ReviewError>,
        F: FnOnce(&ReviewTicket) -> Result<R, E>,
    {
        let writer = self.writer.lock();
        let current = self.state.read().clone();
        if !self.panel.contains(&vote.expert_id) {
            return Err(ReviewError::UnknownExpert(vote.expert_id).into());
        }
        let mut ticket = current
            .tickets
            .get(&id)
            .cloned()
            .ok_or(ReviewError::UnknownTicket(id))?;
        if ticket.state != TicketState::Pending {
            return Err(ReviewError::TicketClosed(id).into());
        }
        if ticket.votes.contains_key(&vote.expert_id) {
            return Err(ReviewError::AlreadyVoted {
                ticket: id,
                expert: vote.expert_id,
            }
            .into());
        }

        let now = Utc::now();
        ticket.votes.insert(
            vote.expert_id.clone(),
            CastVote {
                decision: vote.decision,
                justification: vote.justification.clone(),
                cast_at: now,
            },
        );
        if ticket.votes.len() == PANEL_SIZE {
            let state = resolve(ticket.approvals());
            if state == TicketState::RejectedWithJustification {
                let dissent = ticket
                    .votes
                    .values()
                    .find(|v| v.decision == Decision::Reject)
                    .and_then(|v| v.justification.clone());
                match dissent {
                    Some(text) => ticket.justification = Some(text),
                    None => return Err(ReviewError::JustificationRequired(id).into()),
                }
            }
            ticket.state = state;
            ticket.closed_at = Some(now);
        }

        let retained = if ticket.state == TicketState::Accepted {
            Some(on_accept(&ticket)?)
        } else {
            None
        };

        let mut next = (*current).clone();
        next.audit.entry(id).or_default().push(AuditEntry {
            ticket_id: id,
            expert_id: vote.expert_id,
            decision: vote.decision,
            justification: vote.justification,
            cast_at: now,
            resulting_state: ticket.state,
        });
        next.tickets.insert(id, ticket.clone());
        self.commit(writer.as_deref(), next)?;
        Ok((ticket, retained))
    }

    /// Pending tickets, oldest first.
    pub fn pending_queue(&self, viewer: Option<&ExpertId>) -> Vec<PendingEntry> {
        let state = self.state.read().clone();
        let mut pending: Vec<&ReviewTicket> = state
            .tickets
            .values()
            .filter(|t| t.state == TicketState::Pending)
            .collect();
        pending.sort_by_key(|t| (t.opened_at, t.ticket_id));
        pending
            .into_iter()
            .map(|t| PendingEntry {
                vote_count: t.votes.len(),
                voted_by_viewer: viewer.is_some_and(|v| t.votes.contains_key(v)),
                ticket: t.clone(),
            })
            .collect()
    }

    pub fn audit_log(&self, id: TicketId) -> Result<Vec<AuditEntry>, ReviewError> {
        self.state
            .read()
            .audit
            .get(&id)
            .cloned()
            .ok_or(ReviewError::UnknownTicket(id))
    }

    pub fn tickets(&self) -> Vec<ReviewTicket> {
        self.state.read().tickets.values().cloned().collect()
    }

    fn commit(&self, path: Option<&Path>, next: BoardState) -> Result<(), ReviewError> {
        if let Some(path) = path {
            write_atomic(path, &serde_json::to_vec_pretty(&next).expect("board serializes"))
                .map_err(|e| ReviewError::Storage {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?;
        }
        *self.state.write() = Arc::new(next);
        Ok(())
    }
}

fn write_atomic(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp)?;
    file.write_all(body)?;
    file.sync_all()?;
    fs::rename(&tmp, path)
}
