//! Experiment configuration: parsing, validation, defaulting and the
//! canonical hash.
//!
//! The resolved config contains only result-determining fields (model,
//! schedule, profile, prior, probes, reps, seed); execution parameters such
//! as the thread count and output directory never enter the hash, so runs at
//! different thread counts produce identical artifacts.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qla_core::models::{ModelKind, ModelSpec, SyntheticExtras};
use qla_core::space::ScalingSchedule;
use qla_core::verification::{ConditionFamily, ConditionProfile};
use qla_core::{ParameterSpace, Prior};

pub const KNOWN_PROBES: [&str; 9] = [
    "pld_tail",
    "identifiability",
    "condition_norm",
    "gamma_uniform_consistency",
    "efficiency_residual",
    "mle_bayes_gap",
    "moment_convergence",
    "studentized_normality",
    "qbe_integrability",
];

// --- raw layer: exactly what the file may contain -------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    schedule: Vec<f64>,
    profile: Option<RawProfile>,
    prior: Option<RawPrior>,
    #[serde(default)]
    probes: Vec<RawProbe>,
    reps: u64,
    seed: u64,
    threads: Option<toml::Value>,
    out_dir: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    theta_star: f64,
    horizon: Option<f64>,
    mesh: Option<f64>,
    c_gamma: Option<f64>,
    kappa: Option<f64>,
    gamma_exp: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    alpha: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    rho1: Option<f64>,
    rho2: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
    mode: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    kind: String,
    slope: Option<f64>,
    mean: Option<f64>,
    sd: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    name: String,
    reps: Option<u64>,
    r_grid: Option<Vec<f64>>,
    grid_size: Option<u64>,
    k: Option<f64>,
    q: Option<f64>,
    delta: Option<f64>,
    nodes_per_dim: Option<u64>,
}

// --- resolved layer: every default made explicit ---------------------------

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ResolvedModel {
    pub kind: String,
    pub theta_star: f64,
    pub horizon: f64,
    pub mesh: f64,
    pub c_gamma: f64,
    pub kappa: f64,
    pub gamma_exp: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ResolvedProfile {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho1: f64,
    pub rho2: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub mode: String,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ResolvedPrior {
    pub kind: String,
    pub slope: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ResolvedProbe {
    pub name: String,
    pub reps: u64,
    pub r_grid: Vec<f64>,
    pub grid_size: u64,
    pub k: f64,
    pub q: f64,
    pub delta: f64,
    pub nodes_per_dim: u64,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct ResolvedConfig {
    pub model: ResolvedModel,
    pub schedule: Vec<f64>,
    pub profile: ResolvedProfile,
    pub prior: ResolvedPrior,
    pub probes: Vec<ResolvedProbe>,
    pub reps: u64,
    pub seed: u64,
}

/// Execution preferences carried by the file but excluded from the config
/// identity.
#[derive(Clone, Debug, Default)]
pub struct ExecDefaults {
    pub threads: Option<usize>,
    pub out_dir: Option<String>,
}

impl ResolvedConfig {
    /// Canonical serialization (fixed field order) used for hashing and for
    /// the on-disk resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let kind = ModelKind::parse(&self.model.kind)?;
        let spec = match kind {
            ModelKind::OuDrift => {
                ModelSpec::ou_drift(self.model.theta_star, self.model.horizon, self.model.mesh)
            }
            ModelKind::VolContrast => ModelSpec::vol_contrast(
                self.model.theta_star,
                self.model.horizon as usize,
                self.model.mesh,
            ),
            ModelKind::SyntheticLaq => ModelSpec::synthetic_laq(
                self.model.theta_star,
                self.model.horizon,
                SyntheticExtras {
                    c_gamma: self.model.c_gamma,
                    kappa: self.model.kappa,
                    gamma_exp: self.model.gamma_exp,
                },
            ),
        };
        Ok(spec)
    }

    pub fn scaling_schedule(&self) -> Result<ScalingSchedule> {
        Ok(ScalingSchedule::isotropic(self.schedule.clone(), 1)?)
    }

    pub fn condition_profile(&self) -> Result<ConditionProfile> {
        let mode = match self.profile.mode.as_str() {
            "S" => ConditionFamily::S,
            "T" => ConditionFamily::T,
            "U" => ConditionFamily::U,
            other => bail!("profile.mode must be one of S, T, U; got '{other}'"),
        };
        Ok(ConditionProfile::new(
            self.profile.alpha,
            self.profile.beta1,
            self.profile.beta2,
            self.profile.rho1,
            self.profile.rho2,
            self.profile.l,
            mode,
        )?)
    }

    pub fn prior_for(&self, space: &ParameterSpace) -> Result<Prior> {
        Ok(match self.prior.kind.as_str() {
            "uniform" => Prior::uniform(space),
            "linear" => Prior::linear(self.prior.slope, space)?,
            "truncated-normal" => Prior::truncated_normal(self.prior.mean, self.prior.sd, space)?,
            other => bail!("prior.kind must be uniform | linear | truncated-normal; got '{other}'"),
        })
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a config file, filling every default explicitly.
pub fn parse_config(path: &std::path::Path) -> Result<(ResolvedConfig, ExecDefaults)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<(ResolvedConfig, ExecDefaults)> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| anyhow::anyhow!("config parse error: {e}"))?;

    if raw.reps < 100 {
        bail!("reps must be >= 100, got {}", raw.reps);
    }
    if raw.schedule.len() < 2 {
        bail!(
            "schedule must list at least 2 scale values, got {}",
            raw.schedule.len()
        );
    }
    if !raw.schedule.windows(2).all(|w| w[0] < w[1]) {
        bail!("schedule must be strictly increasing");
    }

    let kind = ModelKind::parse(&raw.model.kind)?;
    let model = ResolvedModel {
        kind: kind.name().to_string(),
        theta_star: raw.model.theta_star,
        horizon: raw
            .model
            .horizon
            .unwrap_or_else(|| *raw.schedule.last().unwrap()),
        mesh: raw.model.mesh.unwrap_or(0.01),
        c_gamma: raw.model.c_gamma.unwrap_or(0.5),
        kappa: raw.model.kappa.unwrap_or(0.5),
        gamma_exp: raw.model.gamma_exp.unwrap_or(0.25),
    };

    let p = raw.profile.unwrap_or(RawProfile {
        alpha: None,
        beta1: None,
        beta2: None,
        rho1: None,
        rho2: None,
        l: None,
        mode: None,
    });
    let alpha = p.alpha.unwrap_or(0.2);
    let beta1 = p.beta1.unwrap_or(0.3);
    let beta2 = p.beta2.unwrap_or(0.05);
    let rho2 = p.rho2.unwrap_or(0.5);
    let l = p.l.unwrap_or(2.0);
    let rho1 = match p.rho1 {
        Some(r) => r,
        None => ConditionProfile::find_rho1(alpha, beta1, beta2, rho2)
            .map_err(|e| anyhow::anyhow!("profile: {e}"))?,
    };
    let profile = ResolvedProfile {
        alpha,
        beta1,
        beta2,
        rho1,
        rho2,
        l,
        mode: p.mode.unwrap_or_else(|| "S".to_string()),
    };

    let pr = raw.prior.unwrap_or(RawPrior {
        kind: "uniform".into(),
        slope: None,
        mean: None,
        sd: None,
    });
    let prior = ResolvedPrior {
        kind: pr.kind,
        slope: pr.slope.unwrap_or(0.0),
        mean: pr.mean.unwrap_or(0.0),
        sd: pr.sd.unwrap_or(1.0),
    };

    let mut probes = Vec::with_capacity(raw.probes.len());
    for rp in raw.probes {
        if !KNOWN_PROBES.contains(&rp.name.as_str()) {
            bail!(
                "unknown probe '{}'; known probes: {}",
                rp.name,
                KNOWN_PROBES.join(", ")
            );
        }
        probes.push(ResolvedProbe {
            name: rp.name,
            reps: rp.reps.unwrap_or(raw.reps),
            r_grid: rp.r_grid.unwrap_or_else(|| vec![2.0, 3.0, 4.0, 5.0, 6.0]),
            grid_size: rp.grid_size.unwrap_or(10_000),
            k: rp.k.unwrap_or(2.0),
            q: rp.q.unwrap_or(2.0),
            delta: rp.delta.unwrap_or(0.5),
            nodes_per_dim: rp.nodes_per_dim.unwrap_or(201),
        });
    }

    let resolved = ResolvedConfig {
        model,
        schedule: raw.schedule,
        profile,
        prior,
        probes,
        reps: raw.reps,
        seed: raw.seed,
    };

    // Everything must actually construct: model spec, schedule, profile and
    // prior validation happen here so bad values fail at parse time.
    let spec = resolved.model_spec()?;
    let space = spec.parameter_space()?;
    resolved.scaling_schedule()?;
    resolved.condition_profile()?;
    resolved.prior_for(&space)?;
    // The model must also be simulable at every scheduled scale.
    for &t in &resolved.schedule {
        spec.with_horizon(t).parameter_space()?;
    }

    let threads = match raw.threads {
        None => None,
        Some(toml::Value::String(s)) if s == "auto" => None,
        Some(toml::Value::Integer(n)) if n >= 1 => Some(n as usize),
        Some(other) => bail!("threads must be a positive integer or \"auto\", got {other}"),
    };
    Ok((
        resolved,
        ExecDefaults {
            threads,
            out_dir: raw.out_dir,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schedule = [50.0, 100.0, 200.0, 400.0]
reps = 2000
seed = 1

[model]
kind = "ou-drift"
theta_star = 1.0
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let (cfg, exec) = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.model.mesh, 0.01);
        assert_eq!(cfg.model.horizon, 400.0);
        assert_eq!(cfg.profile.alpha, 0.2);
        assert_eq!(cfg.profile.rho1, 0.125);
        assert_eq!(cfg.prior.kind, "uniform");
        assert!(cfg.probes.is_empty());
        assert!(exec.threads.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let bad = format!("{MINIMAL}\nwibble = 3\n");
        let err = parse_config_str(&bad).unwrap_err().to_string();
        assert!(err.contains("wibble"), "{err}");
    }

    #[test]
    fn profile_inequalities_are_checked() {
        let bad = format!("{MINIMAL}\n[profile]\nrho2 = 1.2\n");
        let err = parse_config_str(&bad).unwrap_err().to_string();
        assert!(err.contains("rho2"), "{err}");
    }

    #[test]
    fn unknown_probe_names_are_rejected() {
        let bad = format!("{MINIMAL}\n[[probes]]\nname = \"no_such_probe\"\n");
        let err = parse_config_str(&bad).unwrap_err().to_string();
        assert!(err.contains("no_such_probe"), "{err}");
    }

    #[test]
    fn textually_different_configs_hash_identically() {
        // Same resolved values, different formatting, ordering and explicit
        // defaults.
        let spelled_out = r#"
seed = 1
reps = 2000
schedule = [50.0, 100.0, 200.0, 400.0]

[model]
kind = "ou-drift"
theta_star = 1.0
mesh = 0.01
horizon = 400.0

[profile]
alpha = 0.2

[prior]
kind = "uniform"
"#;
        let (a, _) = parse_config_str(MINIMAL).unwrap();
        let (b, _) = parse_config_str(spelled_out).unwrap();
        assert_eq!(a.hash(), b.hash());
        // And a genuinely different config hashes differently.
        let (c, _) = parse_config_str(&MINIMAL.replace("seed = 1", "seed = 2")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn reps_and_schedule_floors() {
        assert!(parse_config_str(&MINIMAL.replace("reps = 2000", "reps = 50")).is_err());
        assert!(parse_config_str(&MINIMAL.replace(
            "schedule = [50.0, 100.0, 200.0, 400.0]",
            "schedule = [50.0]"
        ))
        .is_err());
    }
}
