//! Prompt templates and the tagged-section conventions shared by all roles.
//!
//! Templates use `{{name}}` placeholders. A directory with files of the same
//! names as `data/prompts/*.txt` overrides the bundled set.

use std::path::Path;

use crate::assess::PartialAttributes;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub planner_system: String,
    pub plan_generation: String,
    pub plan_optimization: String,
    pub plan_refine: String,
    pub plan_reformat: String,
    pub coder_system: String,
    pub code: String,
    pub debugger_system: String,
    pub debug: String,
}

macro_rules! bundled {
    ($name:literal) => {
        include_str!(concat!("../../data/prompts/", $name, ".txt")).to_string()
    };
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            planner_system: bundled!("planner_system"),
            plan_generation: bundled!("plan_generation"),
            plan_optimization: bundled!("plan_optimization"),
            plan_refine: bundled!("plan_refine"),
            plan_reformat: bundled!("plan_reformat"),
            coder_system: bundled!("coder_system"),
            code: bundled!("code"),
            debugger_system: bundled!("debugger_system"),
            debug: bundled!("debug"),
        }
    }

    /// Bundled templates with any `<name>.txt` found in `dir` substituted.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::builtin();
        let slots: [(&str, &mut String); 9] = [
            ("planner_system", &mut t.planner_system),
            ("plan_generation", &mut t.plan_generation),
            ("plan_optimization", &mut t.plan_optimization),
            ("plan_refine", &mut t.plan_refine),
            ("plan_reformat", &mut t.plan_reformat),
            ("coder_system", &mut t.coder_system),
            ("code", &mut t.code),
            ("debugger_system", &mut t.debugger_system),
            ("debug", &mut t.debug),
        ];
        for (name, slot) in slots {
            let p = dir.join(format!("{name}.txt"));
            if p.exists() {
                *slot = std::fs::read_to_string(p)?;
            }
        }
        Ok(t)
    }
}

/// Substitutes `{{key}}` placeholders. Unknown placeholders are left as is.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

pub fn wrap(tag: &str, body: &str) -> String {
    format!("<{tag}>\n{}\n</{tag}>", body.trim_end())
}

/// Body of the first `<tag>...</tag>` section, trimmed. Attributes on the
/// opening tag (`<reference id="x">`) are allowed.
pub fn section<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}");
    let close = format!("</{tag}>");
    let mut from = 0;
    while let Some(i) = text[from..].find(&open) {
        let start = from + i;
        let after = &text[start + open.len()..];
        // reject prefixes of longer tag names
        if after.starts_with('>') || after.starts_with(' ') {
            let gt = start + open.len() + after.find('>')?;
            let end = gt + 1 + text[gt + 1..].find(&close)?;
            return Some(text[gt + 1..end].trim());
        }
        from = start + open.len();
    }
    None
}

/// Value of `attr="..."` on the first opening `<tag ...>`.
pub fn section_attr<'a>(text: &'a str, tag: &str, attr: &str) -> Option<&'a str> {
    let open = format!("<{tag} ");
    let start = text.find(&open)? + open.len();
    let head = &text[start..start + text[start..].find('>')?];
    let key = format!("{attr}=\"");
    let v = head.find(&key)? + key.len();
    Some(&head[v..v + head[v..].find('"')?])
}

/// Serializes a configuration block body.
pub fn config_toml(attrs: &PartialAttributes) -> String {
    toml::to_string(attrs).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPlan {
    pub plan_text: String,
    pub config: PartialAttributes,
    pub baseline: Option<PartialAttributes>,
}

/// Reads a planner completion. The `<config>` block is required; a
/// `<baseline>` block is required when `need_baseline` is set.
pub fn parse_plan(completion: &str, need_baseline: bool) -> Result<ParsedPlan, String> {
    let cfg = section(completion, "config").ok_or("no <config> block")?;
    let config: PartialAttributes = toml::from_str(cfg).map_err(|e| format!("<config> is not valid TOML: {e}"))?;
    if config.is_empty() {
        return Err("<config> block is empty".into());
    }
    let baseline = match section(completion, "baseline") {
        Some(b) => Some(toml::from_str(b).map_err(|e| format!("<baseline> is not valid TOML: {e}"))?),
        None if need_baseline => return Err("no <baseline> block".into()),
        None => None,
    };
    let plan_text = section(completion, "plan")
        .map(str::to_string)
        .unwrap_or_else(|| completion[..completion.find("<config").unwrap_or(0)].trim().to_string());
    Ok(ParsedPlan { plan_text, config, baseline })
}

/// Extracts the script from a coder or debugger completion: the `<code>`
/// section, else a fenced block, else the whole text.
pub fn extract_code(completion: &str) -> String {
    if let Some(c) = section(completion, "code") {
        return format!("{c}\n");
    }
    if let Some(i) = completion.find("```") {
        let rest = &completion[i + 3..];
        let body = &rest[rest.find('\n').map_or(0, |n| n + 1)..];
        if let Some(end) = body.find("```") {
            return body[..end].to_string();
        }
    }
    completion.to_string()
}
