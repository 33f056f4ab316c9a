//! Built-in task specifications and reference heuristic sources.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use hevo_core::ProblemKind;
use serde::{Deserialize, Serialize};

use crate::error::{EvoError, Result};
use crate::prompts::{render_text, Bindings, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    WhiteBox,
    BlackBox,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::WhiteBox => "white-box",
            Mode::BlackBox => "black-box",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = EvoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white-box" | "white_box" | "whitebox" => Ok(Mode::WhiteBox),
            "black-box" | "black_box" | "blackbox" => Ok(Mode::BlackBox),
            other => Err(EvoError::Config(format!(
                "unknown mode `{other}` (expected white-box or black-box)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Aco,
    Gls,
    Constructive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub mode: Mode,
    pub solver: SolverKind,
    pub problem: ProblemKind,
    pub function_name: String,
    pub problem_description: String,
    pub function_description: String,
    pub function_signature: String,
    pub seed_function: String,
    #[serde(default)]
    pub initial_long_term_reflection: String,
}

impl TaskSpec {
    /// `id` plus a `-black-box` suffix for black-box variants.
    pub fn key(&self) -> String {
        match self.mode {
            Mode::WhiteBox => self.id.clone(),
            Mode::BlackBox => format!("{}-black-box", self.id),
        }
    }

    pub fn task_description(&self) -> String {
        let b = Bindings::from([
            ("function_name".to_string(), self.function_name.clone()),
            (
                "problem_description".to_string(),
                self.problem_description.clone(),
            ),
            (
                "function_description".to_string(),
                self.function_description.clone(),
            ),
        ]);
        render_text(
            TemplateId::TaskDescription.name(),
            TemplateId::TaskDescription.asset(),
            &b,
        )
        .expect("task description bindings are complete")
    }

    /// Bindings shared by every template for this task.
    pub fn base_bindings(&self) -> Bindings {
        Bindings::from([
            ("function_name".to_string(), self.function_name.clone()),
            (
                "problem_description".to_string(),
                self.problem_description.clone(),
            ),
            (
                "function_description".to_string(),
                self.function_description.clone(),
            ),
            ("task_description".to_string(), self.task_description()),
            ("seed_function".to_string(), self.seed_function.clone()),
            (
                "initial_long-term_reflection".to_string(),
                self.initial_long_term_reflection.clone(),
            ),
        ])
    }

    /// Transcribed best heuristic for this task, when one is shipped.
    pub fn fixture(&self) -> Option<&'static str> {
        fixture(&self.id, self.mode)
    }
}

#[derive(Deserialize)]
struct CatalogFile {
    task: Vec<TaskSpec>,
}

/// Every built-in task, white-box variants first.
pub fn builtin_task_specs() -> &'static [TaskSpec] {
    static CATALOG: OnceLock<Vec<TaskSpec>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let file: CatalogFile =
            toml::from_str(include_str!("../assets/tasks.toml")).expect("built-in catalog parses");
        file.task
    })
}

pub fn task_ids() -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for t in builtin_task_specs() {
        if !ids.contains(&t.id) {
            ids.push(t.id.clone());
        }
    }
    ids
}

pub fn task(id: &str, mode: Mode) -> Result<&'static TaskSpec> {
    let id = id.to_ascii_lowercase().replace('-', "_");
    let specs = builtin_task_specs();
    if let Some(t) = specs.iter().find(|t| t.id == id && t.mode == mode) {
        return Ok(t);
    }
    if specs.iter().any(|t| t.id == id) {
        return Err(EvoError::Catalog(format!(
            "task `{id}` has no {mode} variant"
        )));
    }
    Err(EvoError::UnknownTask {
        id,
        known: task_ids(),
    })
}

/// Words that identify a problem; black-box prompts must contain none of them.
pub const LEAK_WORDS: [&str; 6] = ["tsp", "distance", "demand", "prize", "knapsack", "bin"];

/// Leaked words found in `text`. Tokens are maximal runs of ASCII letters,
/// compared case-insensitively, with plural `s`/`es` forms included.
pub fn leak_lint(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    for tok in text.split(|c: char| !c.is_ascii_alphabetic()) {
        let t = tok.to_ascii_lowercase();
        for w in LEAK_WORDS {
            let hit = t == w || t == format!("{w}s") || t == format!("{w}es");
            if hit && !found.contains(&w.to_string()) {
                found.push(w.to_string());
            }
        }
    }
    found
}

pub const NEAREST_NEIGHBOUR_SELECTOR: &str =
    include_str!("../assets/fixtures/nearest_neighbour.py");

pub fn fixture(id: &str, mode: Mode) -> Option<&'static str> {
    Some(match (id, mode) {
        ("tsp_gls", Mode::WhiteBox) => include_str!("../assets/fixtures/tsp_gls.py"),
        ("tsp_aco", Mode::BlackBox) => include_str!("../assets/fixtures/tsp_aco_black_box.py"),
        ("cvrp_aco", Mode::WhiteBox) => include_str!("../assets/fixtures/cvrp_aco.py"),
        ("op_aco", Mode::WhiteBox) => include_str!("../assets/fixtures/op_aco.py"),
        ("mkp_aco", Mode::BlackBox) => include_str!("../assets/fixtures/mkp_aco_black_box.py"),
        ("bpp_aco", Mode::WhiteBox) => include_str!("../assets/fixtures/bpp_aco.py"),
        ("tsp_constructive", Mode::WhiteBox) => {
            include_str!("../assets/fixtures/tsp_constructive.py")
        }
        _ => return None,
    })
}
