//! Candidate mappings and majority-rule human adjudication.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::benchmark::LabeledPair;
use crate::classifier::Verdict;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::taxonomy::EsgActivity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    Pending,
    Accepted,
    Rejected,
}

impl CandidateStatus {
    pub fn is_final(self) -> bool {
        self != CandidateStatus::Pending
    }
}

impl std::str::FromStr for CandidateStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(CandidateStatus::Pending),
            "accepted" => Ok(CandidateStatus::Accepted),
            "rejected" => Ok(CandidateStatus::Rejected),
            _ => Err(Error::InvalidArgument(format!("unknown status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMapping {
    pub candidate_id: String,
    pub doc_id: String,
    pub chunk_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub activity_id: String,
    pub retrieval_score: f64,
    /// 1-based position in the activity's retrieval list.
    pub rank: usize,
    #[serde(default)]
    pub model_verdict: Option<Verdict>,
    /// Classification error, when the backend failed for this pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Confirm,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub candidate_id: String,
    pub annotator_id: String,
    pub decision: Decision,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Vote {
    pub fn now(candidate_id: impl Into<String>, annotator_id: impl Into<String>, decision: Decision) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Vote {
            candidate_id: candidate_id.into(),
            annotator_id: annotator_id.into(),
            decision,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationPolicy {
    pub panel_size: usize,
    /// Confirms needed to accept.
    pub quorum: usize,
    /// Finalize as soon as the outcome is forced instead of waiting for the full panel.
    #[serde(default)]
    pub early_finalization: bool,
}

impl Default for AdjudicationPolicy {
    fn default() -> Self {
        AdjudicationPolicy {
            panel_size: 3,
            quorum: 2,
            early_finalization: false,
        }
    }
}

impl AdjudicationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.quorum == 0 || self.quorum > self.panel_size {
            return Err(Error::InvalidArgument(format!(
                "quorum {} must be within 1..={}",
                self.quorum, self.panel_size
            )));
        }
        Ok(())
    }
}

/// Accepted once confirms reach the quorum, rejected once enough rejects make
/// the quorum unreachable, pending otherwise.
pub fn tally(votes: &[Vote], policy: &AdjudicationPolicy) -> Result<CandidateStatus> {
    policy.validate()?;
    let mut annotators = HashSet::new();
    for v in votes {
        if !annotators.insert(v.annotator_id.as_str()) {
            return Err(Error::DuplicateVote {
                candidate: v.candidate_id.clone(),
                annotator: v.annotator_id.clone(),
            });
        }
    }
    let confirms = votes.iter().filter(|v| v.decision == Decision::Confirm).count();
    let rejects = votes.len() - confirms;
    Ok(if confirms >= policy.quorum {
        CandidateStatus::Accepted
    } else if rejects > policy.panel_size - policy.quorum {
        CandidateStatus::Rejected
    } else {
        CandidateStatus::Pending
    })
}

/// Candidates and their votes for one project.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateStore {
    pub candidates: Vec<CandidateMapping>,
    pub votes: Vec<Vote>,
}

impl CandidateStore {
    pub fn get(&self, candidate_id: &str) -> Option<&CandidateMapping> {
        self.candidates.iter().find(|c| c.candidate_id == candidate_id)
    }

    pub fn votes_for<'a>(&'a self, candidate_id: &'a str) -> impl Iterator<Item = &'a Vote> + 'a {
        self.votes.iter().filter(move |v| v.candidate_id == candidate_id)
    }

    /// Records a vote and finalizes the candidate when the panel is complete
    /// (or earlier, if the policy allows and the outcome is forced).
    pub fn record_vote(&mut self, vote: Vote, policy: &AdjudicationPolicy) -> Result<CandidateStatus> {
        policy.validate()?;
        if vote.annotator_id.trim().is_empty() {
            return Err(Error::InvalidArgument("annotator_id must not be empty".into()));
        }
        let idx = self
            .candidates
            .iter()
            .position(|c| c.candidate_id == vote.candidate_id)
            .ok_or_else(|| Error::UnknownCandidate(vote.candidate_id.clone()))?;
        if self.candidates[idx].status.is_final() {
            return Err(Error::CandidateFinalized(vote.candidate_id.clone()));
        }
        let mut votes: Vec<Vote> = self.votes_for(&vote.candidate_id).cloned().collect();
        if votes.iter().any(|v| v.annotator_id == vote.annotator_id) {
            return Err(Error::DuplicateVote {
                candidate: vote.candidate_id.clone(),
                annotator: vote.annotator_id.clone(),
            });
        }
        if votes.len() >= policy.panel_size {
            return Err(Error::Validation(format!(
                "candidate {:?} already has a full panel",
                vote.candidate_id
            )));
        }
        votes.push(vote.clone());
        let outcome = tally(&votes, policy)?;
        let status = if votes.len() == policy.panel_size || policy.early_finalization {
            outcome
        } else {
            CandidateStatus::Pending
        };
        self.votes.push(vote);
        self.candidates[idx].status = status;
        Ok(status)
    }

    pub fn pending_ids(&self) -> Vec<String> {
        self.candidates
            .iter()
            .filter(|c| !c.status.is_final())
            .map(|c| c.candidate_id.clone())
            .collect()
    }
}

/// One labeled pair per finalized candidate: accepted → 1, rejected → 0.
pub fn export_adjudicated(
    candidates: &[CandidateMapping],
    documents: &[Document],
    activities: &[EsgActivity],
) -> Result<Vec<LabeledPair>> {
    let pending: Vec<String> = candidates
        .iter()
        .filter(|c| !c.status.is_final())
        .map(|c| c.candidate_id.clone())
        .collect();
    if !pending.is_empty() {
        return Err(Error::PendingCandidates(pending));
    }
    let docs: HashMap<&str, &Document> = documents.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let acts: BTreeMap<&str, &EsgActivity> = activities.iter().map(|a| (a.activity_id.as_str(), a)).collect();
    candidates
        .iter()
        .map(|c| {
            let doc = docs
                .get(c.doc_id.as_str())
                .ok_or_else(|| Error::Validation(format!("candidate {:?}: unknown document {:?}", c.candidate_id, c.doc_id)))?;
            let act = acts
                .get(c.activity_id.as_str())
                .ok_or_else(|| Error::Validation(format!("candidate {:?}: unknown activity {:?}", c.candidate_id, c.activity_id)))?;
            let text = doc
                .slice(c.char_start, c.char_end)
                .ok_or_else(|| Error::Validation(format!("candidate {:?}: span out of range", c.candidate_id)))?;
            Ok(LabeledPair::original(
                c.candidate_id.clone(),
                text,
                act.activity_id.clone(),
                act.short_description.clone(),
                u8::from(c.status == CandidateStatus::Accepted),
            ))
        })
        .collect()
}
