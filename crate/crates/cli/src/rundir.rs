//! Run directory layout.
//!
//! ```text
//! config.toml            effective configuration
//! transcript.jsonl       every chat exchange, sorted by tag
//! population/gen_XXX.json  population and reflection memory per generation
//! history.json           full run history
//! series.csv             evaluations,best_fitness,individual_id
//! best/heuristic.py      best valid heuristic
//! best/individual.json
//! status.json            complete | aborted, with counters
//! timestamps.json        wall-clock start and end (the only unstable file)
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use hevo_evo::engine::{EvoState, History, Individual, ReflectionMemory, RunObserver};
use serde::{Deserialize, Serialize};

pub struct RunDir {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub attempts: usize,
    pub evaluated: usize,
    pub best_fitness: Option<f64>,
    pub best_id: Option<usize>,
    pub history_digest: String,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    generation: usize,
    population: &'a [Individual],
    memory: &'a ReflectionMemory,
}

#[derive(Serialize, Deserialize)]
struct Timestamps {
    started_unix_s: f64,
    #[serde(default)]
    finished_unix_s: Option<f64>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

impl RunDir {
    /// Creates `root` and its subdirectories; refuses a non-empty directory.
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        if root.exists() && fs::read_dir(root)?.next().is_some() {
            bail!("run directory {} is not empty", root.display());
        }
        fs::create_dir_all(root.join("population"))?;
        fs::create_dir_all(root.join("best"))?;
        let dir = RunDir {
            root: root.to_path_buf(),
        };
        write_json(
            &dir.path("timestamps.json"),
            &Timestamps {
                started_unix_s: now(),
                finished_unix_s: None,
            },
        )?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn transcript(&self) -> PathBuf {
        self.path("transcript.jsonl")
    }

    pub fn write_config(&self, toml: &str) -> anyhow::Result<()> {
        Ok(fs::write(self.path("config.toml"), toml)?)
    }

    pub fn write_generation(&self, state: &EvoState) -> anyhow::Result<()> {
        write_json(
            &self
                .path("population")
                .join(format!("gen_{:03}.json", state.generation)),
            &Snapshot {
                generation: state.generation,
                population: &state.population.members,
                memory: &state.memory,
            },
        )
    }

    /// Writes history, series, best heuristic and status; returns the status.
    pub fn finish(&self, history: &History, error: Option<String>) -> anyhow::Result<RunStatus> {
        write_json(&self.path("history.json"), history)?;
        let mut w = csv::Writer::from_path(self.path("series.csv"))?;
        w.write_record(["evaluations", "best_fitness", "individual_id"])?;
        for p in &history.best_so_far {
            w.write_record([
                p.evaluations.to_string(),
                p.fitness.map(|f| f.to_string()).unwrap_or_default(),
                p.individual_id.map(|i| i.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        let best = history.best();
        if let Some(b) = best {
            fs::write(self.path("best/heuristic.py"), format!("{}\n", b.code))?;
            write_json(&self.path("best/individual.json"), b)?;
        }
        let status = RunStatus {
            status: if error.is_some() { "aborted" } else { "complete" }.into(),
            error,
            attempts: history.attempts(),
            evaluated: history.evaluated,
            best_fitness: best.and_then(|b| b.fitness),
            best_id: best.map(|b| b.id),
            history_digest: history.digest(),
        };
        write_json(&self.path("status.json"), &status)?;
        let ts_path = self.path("timestamps.json");
        let mut ts: Timestamps = serde_json::from_str(&fs::read_to_string(&ts_path)?)?;
        ts.finished_unix_s = Some(now());
        write_json(&ts_path, &ts)?;
        Ok(status)
    }
}

/// Persists a snapshot at every generation barrier. The first write error
/// is kept and reported after the run.
pub struct Persist<'a> {
    pub dir: &'a RunDir,
    pub error: Mutex<Option<anyhow::Error>>,
}

impl<'a> Persist<'a> {
    pub fn new(dir: &'a RunDir) -> Self {
        Persist {
            dir,
            error: Mutex::new(None),
        }
    }

    pub fn take_error(&self) -> Option<anyhow::Error> {
        self.error.lock().expect("persist lock").take()
    }
}

impl RunObserver for Persist<'_> {
    fn generation_done(&self, state: &EvoState) {
        if let Err(e) = self.dir.write_generation(state) {
            self.error.lock().expect("persist lock").get_or_insert(e);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    /// True when the run did not finish.
    pub partial: bool,
    /// (cumulative evaluations, all-time best fitness); `None` before the
    /// first valid heuristic.
    pub points: Vec<(usize, Option<f64>)>,
}

impl PlotSeries {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# partial={}\nevaluations,best_fitness\n", self.partial);
        for (x, y) in &self.points {
            out.push_str(&format!(
                "{x},{}\n",
                y.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// Best-so-far series of a run directory.
pub fn plot_data(root: &Path) -> anyhow::Result<PlotSeries> {
    let hist_path = root.join("history.json");
    if !hist_path.exists() {
        bail!("{} holds no run (history.json missing)", root.display());
    }
    let history: History = serde_json::from_str(&fs::read_to_string(&hist_path)?)
        .with_context(|| format!("cannot parse {}", hist_path.display()))?;
    let complete = fs::read_to_string(root.join("status.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<RunStatus>(&t).ok())
        .is_some_and(|s| s.status == "complete");
    Ok(PlotSeries {
        partial: !complete || history.aborted.is_some(),
        points: history
            .best_so_far
            .iter()
            .map(|p| (p.evaluations, p.fitness))
            .collect(),
    })
}
