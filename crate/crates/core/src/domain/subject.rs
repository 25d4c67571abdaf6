use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectStatus {
    Registered,
    Trained,
    Qualified,
    Active,
    Rejected,
}

impl SubjectStatus {
    pub fn can_transition_to(self, next: SubjectStatus) -> bool {
        use SubjectStatus::*;
        matches!(
            (self, next),
            (Registered, Trained)
                | (Trained, Qualified)
                | (Qualified, Active)
                | (Active, Active)
                | (Active, Rejected)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("subject {subject_id}: illegal status transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub subject_id: String,
    pub from: SubjectStatus,
    pub to: SubjectStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedBatch {
    pub batch_id: u32,
    pub finished_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub status: SubjectStatus,
    pub completed_batches: Vec<CompletedBatch>,
    /// Fraction of this subject's scores flagged by the most recent screening.
    pub outlier_ratio: f64,
    #[serde(default)]
    pub test_attempts: u32,
}

impl SubjectProfile {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            status: SubjectStatus::Registered,
            completed_batches: Vec::new(),
            outlier_ratio: 0.0,
            test_attempts: 0,
        }
    }

    pub fn transition(&mut self, next: SubjectStatus) -> Result<(), TransitionError> {
        if !self.status.can_transition_to(next) {
            return Err(TransitionError {
                subject_id: self.subject_id.clone(),
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    pub fn has_completed(&self, batch_id: u32) -> bool {
        self.completed_batches.iter().any(|b| b.batch_id == batch_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SubjectStatus::*;

    #[test]
    fn forward_path_is_allowed() {
        let mut p = SubjectProfile::new("s1");
        for next in [Trained, Qualified, Active, Active, Rejected] {
            p.transition(next).unwrap();
        }
        assert_eq!(p.status, Rejected);
    }

    #[test]
    fn rejected_is_terminal_and_no_skipping() {
        let all = [Registered, Trained, Qualified, Active, Rejected];
        for to in all {
            assert!(!Rejected.can_transition_to(to));
        }
        let mut p = SubjectProfile::new("s1");
        let err = p.transition(Qualified).unwrap_err();
        assert_eq!(err.from, Registered);
        assert_eq!(p.status, Registered);
        assert!(!Trained.can_transition_to(Registered));
    }
}
