//! Agent roles, structured envelopes, prompt templates and validation.

pub mod envelopes;
pub mod gate;
pub mod llm;
pub mod merge;
pub mod parse;
pub mod mock;
pub mod roles;
pub mod suite;
pub mod templates;
pub mod text;
pub mod transport;

pub use envelopes::*;
pub use gate::{quality_gate, GateVerdict};
pub use merge::merge_feedback;
pub use parse::{parse_envelope, ParseLimits, ValidationError};
pub use roles::AgentRole;
pub use templates::{render_prompt, TemplateError};
pub use transport::{call_agent, AgentError, AgentReply, ChatRequest, HttpTransport, LlmTransport, ScriptedTransport, TransportError};
pub use mock::{MockAgents, MockConfig};
pub use suite::{
    AgentSuite, CodeContext, EvolveContext, FeedbackContext, FixContext, JudgeContext, RefineContext, RootContext,
    SynthesisContext,
};
pub use llm::LlmAgents;
