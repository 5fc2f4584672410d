//! Capability registry: which backend classes serve each verb.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three control-backend classes. `deterministic < ui_agent` is the
/// escalation order, with `direct_ui` as the fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendClass {
    Deterministic,
    UiAgent,
    DirectUi,
}

impl BackendClass {
    pub const ESCALATION_ORDER: [BackendClass; 3] =
        [BackendClass::Deterministic, BackendClass::UiAgent, BackendClass::DirectUi];

    pub fn name(&self) -> &'static str {
        match self {
            BackendClass::Deterministic => "deterministic",
            BackendClass::UiAgent => "ui_agent",
            BackendClass::DirectUi => "direct_ui",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityClass {
    Bounded,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capability {
    pub verb: String,
    pub backend: BackendClass,
    #[serde(rename = "cost")]
    pub cost_per_call: u64,
    #[serde(rename = "reliability")]
    pub reliability_class: ReliabilityClass,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CapabilityRegistry {
    #[serde(default, rename = "capability")]
    capabilities: Vec<Capability>,
}

impl CapabilityRegistry {
    pub fn parse(text: &str) -> Result<Self> {
        let registry: CapabilityRegistry = toml::from_str(text)
            .map_err(|e| Error::Config(format!("registry not parseable: {e}")))?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, cap) in self.capabilities.iter().enumerate() {
            if cap.backend == BackendClass::Deterministic
                && cap.reliability_class != ReliabilityClass::Bounded
            {
                return Err(Error::Config(format!(
                    "capability '{}': deterministic entries must be bounded",
                    cap.verb
                )));
            }
            if self.capabilities[..i]
                .iter()
                .any(|c| c.verb == cap.verb && c.backend == cap.backend)
            {
                return Err(Error::Config(format!(
                    "duplicate (verb, backend) pair: ({}, {})",
                    cap.verb,
                    cap.backend.name()
                )));
            }
        }
        Ok(())
    }

    pub fn add(&mut self, cap: Capability) -> Result<()> {
        if self.capabilities.iter().any(|c| c.verb == cap.verb && c.backend == cap.backend) {
            return Err(Error::Config(format!(
                "duplicate (verb, backend) pair: ({}, {})",
                cap.verb,
                cap.backend.name()
            )));
        }
        self.capabilities.push(cap);
        Ok(())
    }

    pub fn remove_verbs(&mut self, verbs: &[String]) {
        self.capabilities.retain(|c| !verbs.contains(&c.verb));
    }

    /// Capabilities for a verb, ordered deterministic, ui_agent, direct_ui;
    /// registry file order breaks ties within a class.
    pub fn lookup(&self, verb: &str) -> Vec<Capability> {
        let mut out = Vec::new();
        for class in BackendClass::ESCALATION_ORDER {
            for cap in &self.capabilities {
                if cap.verb == verb && cap.backend == class {
                    out.push(cap.clone());
                }
            }
        }
        out
    }

    pub fn capability(&self, verb: &str, class: BackendClass) -> Option<&Capability> {
        self.capabilities.iter().find(|c| c.verb == verb && c.backend == class)
    }

    pub fn all(&self) -> &[Capability] {
        &self.capabilities
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    fn default_registry() -> CapabilityRegistry {
        CapabilityRegistry::parse(assets::DEFAULT_REGISTRY).unwrap()
    }

    #[test]
    fn set_setting_is_deterministic_only() {
        let reg = default_registry();
        let caps = reg.lookup("set_setting");
        assert_eq!(caps.len(), 1);
        assert_eq!(caps[0].backend, BackendClass::Deterministic);
        assert_eq!(caps[0].reliability_class, ReliabilityClass::Bounded);
    }

    #[test]
    fn post_comment_is_ui_then_direct() {
        let reg = default_registry();
        let classes: Vec<_> = reg.lookup("post_comment").iter().map(|c| c.backend).collect();
        assert_eq!(classes, vec![BackendClass::UiAgent, BackendClass::DirectUi]);
    }

    #[test]
    fn unknown_verb_is_empty() {
        assert!(default_registry().lookup("no_such_verb").is_empty());
    }

    #[test]
    fn lookup_orders_any_insertion_order() {
        let mut reg = CapabilityRegistry::default();
        reg.add(Capability {
            verb: "v".into(),
            backend: BackendClass::DirectUi,
            cost_per_call: 5,
            reliability_class: ReliabilityClass::Probabilistic,
        })
        .unwrap();
        reg.add(Capability {
            verb: "v".into(),
            backend: BackendClass::Deterministic,
            cost_per_call: 3,
            reliability_class: ReliabilityClass::Bounded,
        })
        .unwrap();
        let classes: Vec<_> = reg.lookup("v").iter().map(|c| c.backend).collect();
        assert_eq!(classes, vec![BackendClass::Deterministic, BackendClass::DirectUi]);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let mut reg = default_registry();
        let err = reg.add(Capability {
            verb: "set_setting".into(),
            backend: BackendClass::Deterministic,
            cost_per_call: 3,
            reliability_class: ReliabilityClass::Bounded,
        });
        assert!(err.is_err());
    }

    #[test]
    fn probabilistic_deterministic_entry_rejected() {
        let text = r#"
[[capability]]
verb = "x"
backend = "deterministic"
cost = 3
reliability = "probabilistic"
"#;
        assert!(CapabilityRegistry::parse(text).is_err());
    }
}
