//! Shared plumbing: error codes, config loading, output files and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use slewplan_core::config::ScpConfig;
use slewplan_core::dynamics::{SatelliteParams, Trajectory};
use slewplan_core::quat::{UnitQuaternion, Vec3};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

const DETERMINISM: &str = "no random numbers are drawn; data files depend only on the inputs recorded here \
and carry no timestamps";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    args: Vec<String>,
    tool_version: &'static str,
    determinism: &'static str,
    config_hashes: &'a BTreeMap<String, String>,
    overrides: &'a [String],
    started_unix_s: u64,
    wall_clock_s: f64,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    outputs: Vec<String>,
}

/// One CLI invocation: collects hashes and output paths, and writes the
/// manifest exactly once when finished.
pub struct Run {
    command: String,
    out: PathBuf,
    started: Instant,
    started_unix_s: u64,
    hashes: BTreeMap<String, String>,
    overrides: Vec<String>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str, out: &Path) -> Self {
        Self {
            command: command.to_string(),
            out: out.to_path_buf(),
            started: Instant::now(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            hashes: BTreeMap::new(),
            overrides: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn ensure_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::config(format!("{}: {e}", self.out.display())))
    }

    pub fn hash_value<T: Serialize>(&mut self, name: &str, value: &T) {
        let json = serde_json::to_string(value).expect("config serializes");
        self.hashes.insert(name.to_string(), sha256_hex(json.as_bytes()));
    }

    /// Reads an input file and records its hash.
    pub fn input(&mut self, name: &str, path: &Path) -> CliResult<String> {
        let text = read_text(path)?;
        self.hashes.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn params(&mut self, path: Option<&Path>) -> CliResult<SatelliteParams> {
        let p = match path {
            Some(path) => {
                let text = self.input("params_file", path)?;
                serde_json::from_str::<SatelliteParams>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => SatelliteParams::reference(),
        };
        p.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.hash_value("params", &p);
        Ok(p)
    }

    /// Layers the optional JSON file and then each `KEY=VALUE` override on `base`.
    pub fn scp(&mut self, base: ScpConfig, path: Option<&Path>, sets: &[String]) -> CliResult<ScpConfig> {
        let mut cfg = base;
        if let Some(path) = path {
            let text = self.input("scp_file", path)?;
            cfg = ScpConfig::from_json_with_base(&text, &cfg)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        }
        for s in sets {
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set {s}: expected KEY=VALUE")))?;
            let value: serde_json::Value = serde_json::from_str(value)
                .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
            let over = serde_json::json!({ key: value }).to_string();
            cfg = ScpConfig::from_json_with_base(&over, &cfg).map_err(|e| CliError::config(format!("--set {s}: {e}")))?;
            self.overrides.push(s.clone());
        }
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        self.ensure_out()?;
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes a trajectory CSV and checks that it reads back within tolerance
    /// of the unit-norm and actuator-bound invariants.
    pub fn write_trajectory(&mut self, name: &str, traj: &Trajectory, p: &SatelliteParams) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, p.jr).map_err(|e| CliError::failure(e.to_string()))?;
        let back = Trajectory::read_csv(buf.as_slice()).map_err(|e| CliError::failure(e.to_string()))?;
        let (qn, r, u) = back.invariant_violations(p);
        if qn > 1e-6 || r > 1e-6 || u > 1e-6 {
            return Err(CliError::failure(format!(
                "{name} fails re-validation: |‖q‖−1| {qn:.3e}, rotor excess {r:.3e}, torque excess {u:.3e}"
            )));
        }
        self.write_text(name, std::str::from_utf8(&buf).expect("csv is utf-8"))
    }

    /// Writes `manifest.json` and returns the exit code.
    pub fn finish(self, args: Vec<String>, outcome: &CliResult<i32>) -> i32 {
        let (code, error) = match outcome {
            Ok(c) => (*c, None),
            Err(e) => (e.code, Some(e.message.as_str())),
        };
        let manifest = Manifest {
            command: &self.command,
            args,
            tool_version: env!("CARGO_PKG_VERSION"),
            determinism: DETERMINISM,
            config_hashes: &self.hashes,
            overrides: &self.overrides,
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            exit_code: code,
            error,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        if self.ensure_out().is_err() {
            return code;
        }
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        if let Err(e) = fs::write(&path, text) {
            eprintln!("error: {}: {e}", path.display());
            return code.max(EXIT_FAILURE);
        }
        code
    }
}

pub fn parse_floats(s: &str, n: Option<usize>) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::config(format!("{s:?}: {e}")))?;
    if let Some(n) = n {
        if v.len() != n {
            return Err(CliError::config(format!("{s:?}: expected {n} comma-separated numbers")));
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::config(format!("{s:?}: values must be finite")));
    }
    Ok(v)
}

pub fn parse_axis(s: &str) -> CliResult<Vec3> {
    match s.trim() {
        "x" => Ok(Vec3::x()),
        "y" => Ok(Vec3::y()),
        "z" => Ok(Vec3::z()),
        other => {
            let v = parse_floats(other, Some(3))?;
            let a = Vec3::new(v[0], v[1], v[2]);
            if a.norm() == 0.0 {
                return Err(CliError::config(format!("axis {s:?} has zero length")));
            }
            Ok(a.normalize())
        }
    }
}

pub fn parse_quat(s: &str) -> CliResult<UnitQuaternion> {
    let v = parse_floats(s, Some(4))?;
    UnitQuaternion::try_from([v[0], v[1], v[2], v[3]]).map_err(|e| CliError::config(format!("quaternion {s:?}: {e}")))
}
