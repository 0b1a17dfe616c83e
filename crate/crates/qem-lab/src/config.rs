//! Experiment configuration: defaults per experiment, JSON config files, and
//! command-line overrides (flags win over the file, the file wins over the
//! defaults).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which driver to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    BlochX,
    BlochRx,
    AmpDampX,
    AmpDampRx,
    QaoaMud,
    BoundsTable,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::BlochX,
        Experiment::BlochRx,
        Experiment::AmpDampX,
        Experiment::AmpDampRx,
        Experiment::QaoaMud,
        Experiment::BoundsTable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::BlochX => "bloch_x",
            Experiment::BlochRx => "bloch_rx",
            Experiment::AmpDampX => "amp_damp_x",
            Experiment::AmpDampRx => "amp_damp_rx",
            Experiment::QaoaMud => "qaoa_mud",
            Experiment::BoundsTable => "bounds_table",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                format!("unknown experiment '{s}' (expected one of {})", names.join(", "))
            })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An estimation mode an experiment can run. Config files use the snake_case
/// tokens; the CLI additionally accepts the short forms `exact`, `mc-emp`
/// and `mc-concat`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSel {
    Noqem,
    ExactQem,
    McEmpirical,
    McConcat,
}

impl ModeSel {
    pub const ALL: [ModeSel; 4] =
        [ModeSel::Noqem, ModeSel::ExactQem, ModeSel::McEmpirical, ModeSel::McConcat];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeSel::Noqem => "noqem",
            ModeSel::ExactQem => "exact_qem",
            ModeSel::McEmpirical => "mc_empirical",
            ModeSel::McConcat => "mc_concat",
        }
    }
}

impl FromStr for ModeSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noqem" => Ok(ModeSel::Noqem),
            "exact" | "exact_qem" => Ok(ModeSel::ExactQem),
            "mc-emp" | "mc_empirical" => Ok(ModeSel::McEmpirical),
            "mc-concat" | "mc_concat" => Ok(ModeSel::McConcat),
            other => Err(format!(
                "unknown mode '{other}' (expected noqem, exact, mc-emp or mc-concat)"
            )),
        }
    }
}

/// Full description of one experiment run. Serializes to the JSON schema
/// accepted via `--config`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Gate-count grid for the single-qubit experiments and the bounds table.
    pub ng_list: Vec<usize>,
    /// Stage grid for the QAOA experiment.
    pub p_list: Vec<usize>,
    /// Depolarizing error probability per gate.
    pub eps: f64,
    /// Amplitude-damping probability per gate.
    pub gamma: f64,
    /// Rotation angle in radians for the Rx experiments.
    pub theta: f64,
    /// Per-gate sampling budget of the mitigation estimators.
    pub ns: u64,
    /// Monte Carlo repetitions per grid point.
    pub trials: u64,
    pub seed: u64,
    pub modes: Vec<ModeSel>,
    pub out_path: String,
    /// Qubit count used by the bounds table.
    pub qubits: usize,
}

impl ExperimentConfig {
    /// Canonical defaults for the given experiment.
    pub fn base(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            ng_list: vec![1, 2, 3, 5, 7, 10, 16, 25, 40, 63, 100, 158, 251, 398, 631, 1000],
            p_list: vec![9, 16, 25, 36, 49, 64, 81],
            eps: if experiment == Experiment::QaoaMud { 3e-4 } else { 1e-3 },
            gamma: 1e-3,
            theta: std::f64::consts::PI / 256.0,
            ns: 5000,
            trials: 200,
            seed: 7,
            modes: ModeSel::ALL.to_vec(),
            out_path: "out".into(),
            qubits: 1,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.ns >= 1, "ns must be at least 1");
        anyhow::ensure!(self.trials >= 1, "trials must be at least 1");
        anyhow::ensure!(
            (0.0..0.75).contains(&self.eps),
            "eps must lie in [0, 3/4), got {}",
            self.eps
        );
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.gamma),
            "gamma must lie in [0, 1], got {}",
            self.gamma
        );
        anyhow::ensure!(!self.modes.is_empty(), "at least one mode must be enabled");
        anyhow::ensure!(self.qubits >= 1, "qubits must be at least 1");
        Ok(())
    }

    pub fn has_mode(&self, m: ModeSel) -> bool {
        self.modes.contains(&m)
    }

    /// SHA-256 of the canonical JSON serialization, for the run manifest.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Optional overrides collected from a config file or from CLI flags.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<Experiment>,
    pub ng_list: Option<Vec<usize>>,
    pub p_list: Option<Vec<usize>>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub ns: Option<u64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub modes: Option<Vec<ModeSel>>,
    pub out_path: Option<String>,
    pub qubits: Option<usize>,
}

impl ConfigOverrides {
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let overrides: ConfigOverrides = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))?;
        Ok(overrides)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.experiment {
            cfg.experiment = v;
        }
        if let Some(v) = &self.ng_list {
            cfg.ng_list = v.clone();
        }
        if let Some(v) = &self.p_list {
            cfg.p_list = v.clone();
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        if let Some(v) = self.ns {
            cfg.ns = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.modes {
            cfg.modes = v.clone();
        }
        if let Some(v) = &self.out_path {
            cfg.out_path = v.clone();
        }
        if let Some(v) = self.qubits {
            cfg.qubits = v;
        }
    }
}

/// Parses a gate-count grid: either a comma list `10,50,100` or an inclusive
/// range `1..1000`.
pub fn parse_usize_grid(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|e| format!("bad range start '{lo}': {e}"))?;
        let hi: usize = hi.trim().parse().map_err(|e| format!("bad range end '{hi}': {e}"))?;
        if hi < lo {
            return Err(format!("empty range {lo}..{hi}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|tok| {
            tok.trim().parse::<usize>().map_err(|e| format!("bad grid entry '{tok}': {e}"))
        })
        .collect()
}

/// Parses the `--modes` flag: comma-separated mode tokens.
pub fn parse_modes(s: &str) -> Result<Vec<ModeSel>, String> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let m: ModeSel = tok.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err("mode list is empty".into());
    }
    Ok(out)
}
