//! Teacher loop service: publishes imagined rollouts of candidate plans,
//! records rankings, and retrains the contentment model from them.

pub mod candidates;
pub mod error;
pub mod http;
pub mod service;
pub mod store;

pub use candidates::{candidate_id, generate_candidates, select_diverse, Candidate, CandidateBundle};
pub use error::{Error, Result};
pub use http::{router, serve};
pub use service::{AgentStatus, ContentmentHandle, GenerateConfig, ModelHashes, RetrainReport, StatusReport, TeacherService};
pub use store::{CandidateStatus, CandidateSummary, Store};
