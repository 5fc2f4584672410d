//! Multi-level permission cascade governing tool invocation.
//!
//! Five levels, most-specific first: sandbox > session > agent > provider >
//! global. The first rule whose verb pattern matches decides; no match
//! falls through to the configurable default (allow as shipped).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyLevel {
    Global,
    Provider,
    Agent,
    Session,
    Sandbox,
}

impl PolicyLevel {
    pub const MOST_SPECIFIC_FIRST: [PolicyLevel; 5] = [
        PolicyLevel::Sandbox,
        PolicyLevel::Session,
        PolicyLevel::Agent,
        PolicyLevel::Provider,
        PolicyLevel::Global,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyLevel::Global => "global",
            PolicyLevel::Provider => "provider",
            PolicyLevel::Agent => "agent",
            PolicyLevel::Session => "session",
            PolicyLevel::Sandbox => "sandbox",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub level: PolicyLevel,
    pub verb_pattern: String,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub decision: Decision,
    /// The deciding rule, or `None` for the default.
    pub decided_by: Option<PolicyRule>,
}

impl PolicyDecision {
    pub fn allowed(&self) -> bool {
        self.decision == Decision::Allow
    }
}

/// Scan levels most-specific to global; within a level, list order wins.
pub fn evaluate_policy(verb: &str, rules: &[PolicyRule], default: Decision) -> PolicyDecision {
    for level in PolicyLevel::MOST_SPECIFIC_FIRST {
        for rule in rules.iter().filter(|r| r.level == level) {
            if glob_match(&rule.verb_pattern, verb) {
                return PolicyDecision { decision: rule.decision, decided_by: Some(rule.clone()) };
            }
        }
    }
    PolicyDecision { decision: default, decided_by: None }
}

/// Glob with `*` (any run) and `?` (one char).
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    // Iterative matcher with single-star backtracking.
    let (mut pi, mut ti) = (0usize, 0usize);
    let (mut star, mut star_t) = (None::<usize>, 0usize);
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some(pi);
            star_t = ti;
            pi += 1;
        } else if let Some(s) = star {
            pi = s + 1;
            star_t += 1;
            ti = star_t;
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}
