//! Prompt templates. Each lives in `prompts/<name>.v<N>.txt` and is
//! compiled in; `{{key}}` placeholders are filled by [`render`].

pub const PLANNER: &str = include_str!("../../prompts/planner.v1.txt");
pub const REPLANNER: &str = include_str!("../../prompts/replanner.v1.txt");
pub const JUDGE: &str = include_str!("../../prompts/judge.v1.txt");
pub const STATE: &str = include_str!("../../prompts/state.v1.txt");
pub const STATE_CONDITIONS: &str = include_str!("../../prompts/state_conditions.v1.txt");
pub const ACTOR: &str = include_str!("../../prompts/actor.v1.txt");
pub const VERIFY: &str = include_str!("../../prompts/verify.v1.txt");
pub const VERIFY_CONDITIONS: &str = include_str!("../../prompts/verify_conditions.v1.txt");
pub const RECOVERY: &str = include_str!("../../prompts/recovery.v1.txt");
pub const MENTOR: &str = include_str!("../../prompts/mentor.v1.txt");

/// Section titles shared by the prompts and the reply parsers.
pub mod sections {
    pub const INSTRUCTION: &str = "User Instruction";
    pub const APPS: &str = "Target Apps";
    pub const SUBTASK: &str = "Current Subtask";
    pub const ELEMENTS: &str = "Screen Elements";
    pub const ELEMENTS_BEFORE: &str = "Screen Elements Before";
    pub const ELEMENTS_AFTER: &str = "Screen Elements After";
    pub const HISTORY: &str = "Action History";
    pub const COMPLETED: &str = "Completed Subtasks";
    pub const CANDIDATES: &str = "Candidate Plans";
    pub const FAILED_SUBTASK: &str = "Failed Subtask";
    pub const FAILURE_REASON: &str = "Failure Reason";
    pub const RECOVERY_TARGET: &str = "Recovery Target";
    pub const KNOWN_PATH: &str = "Known Path";
    pub const ERRORS: &str = "Error Details";
    pub const KNOWLEDGE: &str = "Knowledge";

    pub const PLAN: &str = "Plan";
    pub const THOUGHT: &str = "Thought";
    pub const JUDGMENT: &str = "Judgment";
    pub const ACTION: &str = "Action";
    pub const VERDICT: &str = "Verdict";
    pub const REASON: &str = "Reason";
    pub const CUES: &str = "Guidance Cues";
    pub const SEQUENCES: &str = "Action Sequences";

    pub const STATE_DESCRIPTION: &str = "State Description";
    pub const PREDICTED_NEXT: &str = "Predicted Next State";
    pub const APP_INFERENCE: &str = "App Inference";
    pub const STATE_BEACON: &str = "State Beacon";
    pub const POSTCONDITION: &str = "Post-condition of Current State";
    pub const PRE_NEXT: &str = "Pre-condition of Next State";
}

/// Reply value of App Inference for launcher and system screens.
pub const SYSTEM_OPERATION: &str = "System Operation";

/// Fills `{{key}}` placeholders. Unknown placeholders are left in place so a
/// missing value is visible in the transcript.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

/// `- item` lines, or `(none)` for an empty list.
pub fn bullets<S: AsRef<str>>(items: &[S]) -> String {
    if items.is_empty() {
        return "(none)".into();
    }
    items.iter().map(|s| format!("- {}", s.as_ref())).collect::<Vec<_>>().join("\n")
}
