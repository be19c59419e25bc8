//! Background run bookkeeping.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::store::{read_json, write_json, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn is_final(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub sequence_id: String,
    pub state: JobState,
    pub frames_done: usize,
    pub frames_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// All jobs, persisted to `jobs.json` on every state change.
///
/// Jobs found queued or running at load time belonged to a previous process
/// and are marked failed.
#[derive(Debug)]
pub struct JobBoard {
    path: PathBuf,
    jobs: Mutex<BTreeMap<String, JobStatus>>,
}

impl JobBoard {
    pub fn load(path: PathBuf) -> Result<Self, StoreError> {
        let list: Vec<JobStatus> = read_json(&path)?.unwrap_or_default();
        let mut jobs: BTreeMap<String, JobStatus> = list.into_iter().map(|j| (j.job_id.clone(), j)).collect();
        let mut changed = false;
        for job in jobs.values_mut() {
            if !job.state.is_final() {
                job.state = JobState::Failed;
                job.error = Some("interrupted by service restart".into());
                changed = true;
            }
        }
        let board = Self {
            path,
            jobs: Mutex::new(jobs),
        };
        if changed {
            board.persist(&board.jobs.lock().expect("job lock"))?;
        }
        Ok(board)
    }

    fn persist(&self, jobs: &BTreeMap<String, JobStatus>) -> Result<(), StoreError> {
        let list: Vec<&JobStatus> = jobs.values().collect();
        write_json(&self.path, &list)
    }

    fn persist_logged(&self, jobs: &BTreeMap<String, JobStatus>) {
        if let Err(e) = self.persist(jobs) {
            log::error!("cannot persist jobs: {e}");
        }
    }

    pub fn create(&self, sequence_id: &str, frames_total: usize) -> JobStatus {
        let mut jobs = self.jobs.lock().expect("job lock");
        let job = JobStatus {
            job_id: format!("job-{:06}", jobs.len() + 1),
            sequence_id: sequence_id.to_string(),
            state: JobState::Queued,
            frames_done: 0,
            frames_total,
            error: None,
        };
        jobs.insert(job.job_id.clone(), job.clone());
        self.persist_logged(&jobs);
        job
    }

    pub fn get(&self, job_id: &str) -> Option<JobStatus> {
        self.jobs.lock().expect("job lock").get(job_id).cloned()
    }

    /// Moves a job forward; backward or repeated transitions are ignored.
    pub fn transition(&self, job_id: &str, state: JobState, error: Option<String>) {
        let mut jobs = self.jobs.lock().expect("job lock");
        if let Some(job) = jobs.get_mut(job_id) {
            if state > job.state && !job.state.is_final() {
                job.state = state;
                job.error = error;
                if state == JobState::Done {
                    job.frames_done = job.frames_total;
                }
                self.persist_logged(&jobs);
            }
        }
    }

    /// Records progress; the count never decreases.
    pub fn progress(&self, job_id: &str, frames_done: usize) {
        let mut jobs = self.jobs.lock().expect("job lock");
        if let Some(job) = jobs.get_mut(job_id) {
            job.frames_done = job.frames_done.max(frames_done.min(job.frames_total));
        }
    }
}
