//! JSON shapes shared by the HTTP service and the CLI.

use bookcbr::engine::{Pick, RecommendationKind};
use bookcbr::memory::Case;
use bookcbr::review::{AuditEntry, PendingEntry};
use bookcbr::{Recommendation, ReviewTicket};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// A score written as a JSON number with exactly eight decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score(pub f64);

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(format!("{:.8}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

#[derive(Debug, Serialize)]
pub struct PickBody {
    pub case_id: u64,
    pub book_title: String,
    pub personality: String,
    pub score: Score,
}

impl From<&Pick> for PickBody {
    fn from(p: &Pick) -> Self {
        Self {
            case_id: p.case_id.0,
            book_title: p.book_title.clone(),
            personality: p.personality.to_string(),
            score: Score(p.score),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RecommendationBody {
    pub kind: &'static str,
    pub picks: Vec<PickBody>,
    pub reliability_message: String,
    pub eligible_for_retention: bool,
    pub metric: String,
    pub metric_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<u64>,
}

impl RecommendationBody {
    pub fn new(rec: &Recommendation, ticket: Option<&ReviewTicket>) -> Self {
        Self {
            kind: match rec.kind {
                RecommendationKind::HighConfidence => "HighConfidence",
                RecommendationKind::LowConfidence => "LowConfidence",
            },
            picks: rec.picks.iter().map(PickBody::from).collect(),
            reliability_message: rec.reliability_message.clone(),
            eligible_for_retention: rec.eligible_for_retention,
            metric: rec.metric.to_string(),
            metric_fallback: rec.metric_fallback,
            ticket_id: ticket.map(|t| t.id().0),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VoteBody {
    pub expert_id: String,
    pub decision: bookcbr::Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    pub cast_at: String,
}

#[derive(Debug, Serialize)]
pub struct TicketBody {
    pub ticket_id: u64,
    pub state: &'static str,
    pub tweet_text: String,
    pub book_title: String,
    pub personality: String,
    pub score: Score,
    pub vote_count: usize,
    pub votes: Vec<VoteBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    pub opened_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_at: Option<String>,
}

impl From<&ReviewTicket> for TicketBody {
    fn from(t: &ReviewTicket) -> Self {
        let c = t.candidate();
        Self {
            ticket_id: t.id().0,
            state: t.state().as_str(),
            tweet_text: c.tweet_text.clone(),
            book_title: c.book_title.clone(),
            personality: c.personality.to_string(),
            score: Score(c.score),
            vote_count: t.votes().len(),
            votes: t
                .votes()
                .iter()
                .map(|(expert, v)| VoteBody {
                    expert_id: expert.to_string(),
                    decision: v.decision,
                    justification: v.justification.clone(),
                    cast_at: v.cast_at.to_rfc3339(),
                })
                .collect(),
            justification: t.justification().map(str::to_owned),
            opened_at: t.opened_at().to_rfc3339(),
            closed_at: t.closed_at().map(|c| c.to_rfc3339()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PendingBody {
    #[serde(flatten)]
    pub ticket: TicketBody,
    pub voted_by_you: bool,
}

impl From<&PendingEntry> for PendingBody {
    fn from(e: &PendingEntry) -> Self {
        Self {
            ticket: TicketBody::from(&e.ticket),
            voted_by_you: e.voted_by_viewer,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VoteResponse {
    #[serde(flatten)]
    pub ticket: TicketBody,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retained_case_id: Option<u64>,
    pub case_count: usize,
}

#[derive(Debug, Serialize)]
pub struct AuditBody {
    pub expert_id: String,
    pub decision: bookcbr::Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    pub cast_at: String,
    pub resulting_state: &'static str,
}

impl From<&AuditEntry> for AuditBody {
    fn from(e: &AuditEntry) -> Self {
        Self {
            expert_id: e.expert_id.to_string(),
            decision: e.decision,
            justification: e.justification.clone(),
            cast_at: e.cast_at.to_rfc3339(),
            resulting_state: e.resulting_state.as_str(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CaseBody {
    pub case_id: u64,
    pub text: String,
    pub book_title: String,
    pub personality: String,
    pub origin: bookcbr::Origin,
    pub created_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<u64>,
}

impl From<&Case> for CaseBody {
    fn from(c: &Case) -> Self {
        Self {
            case_id: c.id().0,
            text: c.text().to_owned(),
            book_title: c.book_title().to_owned(),
            personality: c.personality().to_string(),
            origin: c.origin(),
            created_at: c.created_at().to_rfc3339(),
            ticket_id: c.ticket_id().map(|t| t.0),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CasePage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub store_version: u64,
    pub cases: Vec<CaseBody>,
}

#[derive(Debug, Serialize)]
pub struct HealthBody {
    pub status: &'static str,
    pub store_version: u64,
    pub case_count: usize,
}

#[derive(Debug, Serialize)]
pub struct ImportBody {
    pub loaded: usize,
    pub case_count: usize,
    pub store_version: u64,
}
