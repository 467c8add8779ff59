//! Versioned prompt templates with `{{name}}` placeholders.

use super::ScriptError;
use crate::episode::InstructionType;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! template {
    ($name:literal) => {
        Template { name: $name, text: include_str!(concat!("../../templates/v1/", $name, ".txt")) }
    };
}

pub const SENTIMENT: Template = template!("sentiment");
pub const OVERLAPPING: Template = template!("overlapping");
pub const NON_VERBAL: Template = template!("non_verbal");
pub const IDENTITY: Template = template!("identity");
pub const DYADIC: Template = template!("dyadic");
pub const TRIADIC: Template = template!("triadic");
pub const EXTENSION: Template = template!("extension");
pub const JUDGE: Template = template!("judge");

pub const ALL: [Template; 8] = [SENTIMENT, OVERLAPPING, NON_VERBAL, IDENTITY, DYADIC, TRIADIC, EXTENSION, JUDGE];

/// Dialogue template for a type; `None` for DirectText, which needs no service call.
pub fn dialogue_template(itype: InstructionType) -> Option<Template> {
    match itype {
        InstructionType::Sentiment => Some(SENTIMENT),
        InstructionType::Overlapping => Some(OVERLAPPING),
        InstructionType::NonVerbal => Some(NON_VERBAL),
        InstructionType::Identity => Some(IDENTITY),
        InstructionType::Dyadic => Some(DYADIC),
        InstructionType::Triadic => Some(TRIADIC),
        InstructionType::DirectText => None,
    }
}

impl Template {
    pub fn id(&self) -> String {
        format!("{TEMPLATE_VERSION}/{}", self.name)
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.text;
        while let Some(i) = rest.find("{{") {
            let Some(j) = rest[i..].find("}}") else { break };
            let name = &rest[i + 2..i + j];
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &rest[i + j + 2..];
        }
        out
    }

    /// Substitutes every placeholder. Unfilled or unknown names are errors.
    pub fn fill(&self, vars: &[(&str, &str)]) -> Result<String, ScriptError> {
        let names = self.placeholders();
        if let Some((unknown, _)) = vars.iter().find(|(k, _)| !names.contains(k)) {
            return Err(ScriptError::Template(format!("{} has no placeholder `{unknown}`", self.id())));
        }
        let mut out = self.text.to_string();
        for name in names {
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| ScriptError::Template(format!("{} needs `{name}`", self.id())))?;
            out = out.replace(&format!("{{{{{name}}}}}"), value);
        }
        Ok(out)
    }
}
