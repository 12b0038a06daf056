//! File formats: orbit JSON, CSV tables with `#` header lines, run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sbc_orbits::continuation::SweepRecord;
use sbc_orbits::orbitrep::TrigOrbit;

pub const TOOL: &str = "sbc-orbits";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Bumped whenever a column or field changes meaning.
pub const SCHEMA: u32 = 1;

/// Deterministic part of the manifest, copied into every data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub schema: u32,
    pub command: String,
    pub config: Value,
}

impl Header {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Header {
            tool: TOOL.into(),
            version: VERSION.into(),
            schema: SCHEMA,
            command: command.into(),
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }

    /// `# key: value` lines for CSV files.
    pub fn csv_lines(&self) -> String {
        format!(
            "# tool: {}\n# version: {}\n# schema: {}\n# command: {}\n# config: {}\n",
            self.tool, self.version, self.schema, self.command, self.config
        )
    }
}

/// Run record with wall-clock data. Kept out of the data files so that
/// repeated runs produce identical outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub header: Header,
    pub started_unix: f64,
    pub elapsed_secs: f64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(header: Header, started: SystemTime, elapsed: Duration) -> Self {
        RunManifest {
            header,
            started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            elapsed_secs: elapsed.as_secs_f64(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Manifest location for a command writing into `dir`.
pub fn manifest_in(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// Manifest location next to a single output file.
pub fn manifest_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// An orbit on disk, optionally with the sweep diagnostics that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitFile {
    pub header: Header,
    #[serde(flatten)]
    pub orbit: TrigOrbit,
    #[serde(default)]
    pub final_l: Option<f64>,
    #[serde(default)]
    pub gamma_at_quarter: Option<f64>,
    #[serde(default)]
    pub flagged: bool,
    #[serde(default)]
    pub note: Option<String>,
}

impl OrbitFile {
    pub fn plain(header: Header, orbit: TrigOrbit) -> Self {
        OrbitFile {
            header,
            orbit,
            final_l: None,
            gamma_at_quarter: None,
            flagged: false,
            note: None,
        }
    }

    pub fn from_record(header: Header, r: &SweepRecord) -> Self {
        OrbitFile {
            header,
            orbit: r.orbit.clone(),
            final_l: Some(r.final_l),
            gamma_at_quarter: Some(r.gamma_at_quarter),
            flagged: r.flagged,
            note: r.note.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let f: OrbitFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        f.orbit.validate().with_context(|| format!("orbit in {}", path.display()))?;
        Ok(f)
    }
}

pub fn orbit_file_name(m: f64) -> String {
    format!("orbit_m{m:.3}.json")
}

/// CSV writer that emits the header lines before the column row.
pub fn csv_writer(path: &Path, header: &Header, columns: &[String]) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(header.csv_lines().as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns)?;
    Ok(w)
}

/// Shortest round-trip representation; NaN for missing values.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
