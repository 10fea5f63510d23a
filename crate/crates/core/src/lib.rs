//! Multi-agent code generation: self-retrieved exemplars, confidence-ranked
//! plans, plan-guided coding and sample-test debugging, with a
//! process-isolated judge and a Pass@k harness.

pub mod agents;
pub mod datasets;
pub mod domain;
pub mod eval;
pub mod executor;
pub mod llm;
pub mod script;
pub mod traversal;
