//! Prompt templates and code extraction.
//!
//! Templates are plain text assets under `assets/prompts`, listed with their
//! sha256 in `MANIFEST.sha256`. Placeholders are `{name}` where `name` is made
//! of ASCII letters, digits, `_` and `-`. Substitution is single-pass, so
//! braces inside bound values (Python dict literals, say) are never expanded.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SystemGenerator,
    SystemReflector,
    TaskDescription,
    Init,
    StrWhitebox,
    StrBlackbox,
    Crossover,
    CrossoverNoReflection,
    Ltr,
    Mutation,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::SystemGenerator,
        TemplateId::SystemReflector,
        TemplateId::TaskDescription,
        TemplateId::Init,
        TemplateId::StrWhitebox,
        TemplateId::StrBlackbox,
        TemplateId::Crossover,
        TemplateId::CrossoverNoReflection,
        TemplateId::Ltr,
        TemplateId::Mutation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::SystemGenerator => "system_generator",
            TemplateId::SystemReflector => "system_reflector",
            TemplateId::TaskDescription => "task_description",
            TemplateId::Init => "init",
            TemplateId::StrWhitebox => "str_whitebox",
            TemplateId::StrBlackbox => "str_blackbox",
            TemplateId::Crossover => "crossover",
            TemplateId::CrossoverNoReflection => "crossover_no_reflection",
            TemplateId::Ltr => "ltr",
            TemplateId::Mutation => "mutation",
        }
    }

    /// Raw asset text, including its final newline.
    pub fn asset(self) -> &'static str {
        match self {
            TemplateId::SystemGenerator => include_str!("../assets/prompts/system_generator.txt"),
            TemplateId::SystemReflector => include_str!("../assets/prompts/system_reflector.txt"),
            TemplateId::TaskDescription => include_str!("../assets/prompts/task_description.txt"),
            TemplateId::Init => include_str!("../assets/prompts/init.txt"),
            TemplateId::StrWhitebox => include_str!("../assets/prompts/str_whitebox.txt"),
            TemplateId::StrBlackbox => include_str!("../assets/prompts/str_blackbox.txt"),
            TemplateId::Crossover => include_str!("../assets/prompts/crossover.txt"),
            TemplateId::CrossoverNoReflection => {
                include_str!("../assets/prompts/crossover_no_reflection.txt")
            }
            TemplateId::Ltr => include_str!("../assets/prompts/ltr.txt"),
            TemplateId::Mutation => include_str!("../assets/prompts/mutation.txt"),
        }
    }

    /// The system template paired with a user template, if any.
    fn system(self) -> Option<TemplateId> {
        match self {
            TemplateId::Init
            | TemplateId::Crossover
            | TemplateId::CrossoverNoReflection
            | TemplateId::Mutation => Some(TemplateId::SystemGenerator),
            TemplateId::StrWhitebox | TemplateId::StrBlackbox | TemplateId::Ltr => {
                Some(TemplateId::SystemReflector)
            }
            _ => None,
        }
    }

    fn role(self) -> Role {
        match self {
            TemplateId::SystemGenerator | TemplateId::SystemReflector => Role::System,
            _ => Role::User,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in placeholder_re().captures_iter(self.asset()) {
            let name = c[1].to_string();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The manifest shipped next to the templates: `<sha256>  <file name>` lines.
pub const MANIFEST: &str = include_str!("../assets/prompts/MANIFEST.sha256");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

pub type Bindings = BTreeMap<String, String>;

fn placeholder_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z0-9_\-]+)\}").expect("placeholder regex"))
}

/// Substitutes every placeholder of `template` in one pass. Trailing
/// whitespace of the result is dropped, so an empty final section leaves no
/// blank tail.
pub fn render_text(name: &str, template: &str, bindings: &Bindings) -> Result<String> {
    let mut missing = Vec::new();
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for c in placeholder_re().captures_iter(template) {
        let whole = c.get(0).expect("match");
        out.push_str(&template[last..whole.start()]);
        match bindings.get(&c[1]) {
            Some(v) => out.push_str(v),
            None => {
                if !missing.contains(&c[1].to_string()) {
                    missing.push(c[1].to_string());
                }
            }
        }
        last = whole.end();
    }
    out.push_str(&template[last..]);
    if !missing.is_empty() {
        return Err(EvoError::MissingBindings {
            template: name.to_string(),
            missing,
        });
    }
    out.truncate(out.trim_end().len());
    Ok(out)
}

/// Renders a template into its message sequence: a system message (for user
/// templates that have one) followed by the template's own message.
pub fn render(id: TemplateId, bindings: &Bindings) -> Result<Vec<Message>> {
    let mut msgs = Vec::with_capacity(2);
    if let Some(sys) = id.system() {
        msgs.push(Message::system(render_text(
            sys.name(),
            sys.asset(),
            bindings,
        )?));
    }
    let content = render_text(id.name(), id.asset(), bindings)?;
    msgs.push(Message {
        role: id.role(),
        content,
    });
    Ok(msgs)
}

/// Body of the last fenced code block, without the fence or its language tag.
pub fn extract_code(response: &str) -> Result<String> {
    let fences: Vec<usize> = response.match_indices("```").map(|(i, _)| i).collect();
    if fences.len() < 2 {
        return Err(EvoError::NoCodeBlock);
    }
    let pairs = fences.len() / 2;
    let open = fences[2 * (pairs - 1)] + 3;
    let close = fences[2 * (pairs - 1) + 1];
    let inner = &response[open..close];
    let body = match inner.find('\n') {
        Some(nl) => &inner[nl + 1..],
        None => inner,
    };
    let body = body.strip_suffix('\n').unwrap_or(body);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if body.trim().is_empty() {
        return Err(EvoError::EmptyCodeBlock);
    }
    Ok(body.to_string())
}

/// Renames versioned definitions (`name_v2`, `name_v0`, ...) back to `name`
/// so the evaluator always calls the plain entry point.
pub fn normalize_entry(code: &str, function_name: &str) -> String {
    let re = Regex::new(&format!(r"\b{}_v\d+\b", regex::escape(function_name))).expect("regex");
    re.replace_all(code, function_name).into_owned()
}

/// `def name(` becomes `def name_v{version}(`.
pub fn versioned_signature(signature: &str, function_name: &str, version: u32) -> String {
    signature.replacen(
        &format!("def {function_name}("),
        &format!("def {function_name}_v{version}("),
        1,
    )
}

/// Drops top-level import lines and the `def function_name(...)` header,
/// leaving the body that follows a versioned signature in a prompt.
pub fn code_body(code: &str, function_name: &str) -> String {
    let header = format!("def {function_name}");
    let mut out = Vec::new();
    let mut in_header = false;
    let mut header_done = false;
    let mut depth = 0i32;
    for line in code.lines() {
        if in_header {
            depth += paren_delta(line);
            if depth <= 0 && line.trim_end().ends_with(':') {
                in_header = false;
            }
            continue;
        }
        if !header_done && line.starts_with(&header) {
            let rest = &line[header.len()..];
            if rest.starts_with('(') || rest.starts_with(' ') {
                header_done = true;
                depth = paren_delta(line);
                if !(depth <= 0 && line.trim_end().ends_with(':')) {
                    in_header = true;
                }
                continue;
            }
        }
        if line.starts_with("import ") || (line.starts_with("from ") && line.contains(" import ")) {
            continue;
        }
        out.push(line);
    }
    while out.first().is_some_and(|l| l.trim().is_empty()) {
        out.remove(0);
    }
    out.join("\n")
}

fn paren_delta(line: &str) -> i32 {
    line.chars()
        .map(|c| match c {
            '(' | '[' => 1,
            ')' | ']' => -1,
            _ => 0,
        })
        .sum()
}
