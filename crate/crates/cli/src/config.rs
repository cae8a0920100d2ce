//! Run configuration: a TOML file merged with command-line flags, validated up front.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use csrg::oinf::{ChanceSpec, JointMode, VBox};
use csrg::prob::Probability;
use csrg::settings::NumericSettings;
use csrg::sim::ReferenceProfile;
use serde::{Deserialize, Serialize};

use crate::modelfile::{load_model, LoadedModel, ModeName};
use crate::output::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GovernorChoice {
    Off,
    Alg1,
    Alg2,
}

impl std::str::FromStr for GovernorChoice {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "alg1" => Ok(Self::Alg1),
            "alg2" => Ok(Self::Alg2),
            _ => bail!("governor must be off, alg1 or alg2, not {s:?}"),
        }
    }
}

/// Command-line flags shared by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in model name or model file.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// individual, ra or ce.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Confidence level: per row in individual mode, joint otherwise.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// off, alg1 or alg2.
    #[arg(long, global = true)]
    pub governor: Option<String>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Reference profile CSV with columns `start_step, v_0, …`.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Cap on the prediction horizon of the set construction.
    #[arg(long, global = true)]
    pub tmax: Option<usize>,
    /// Reference box as `lo,hi` per channel: `lo_0,hi_0,lo_1,hi_1,…`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub vbox: Option<String>,
    /// Number of support directions for projections.
    #[arg(long, global = true)]
    pub dirs: Option<usize>,
    /// Projection coordinates by name or index, comma separated.
    #[arg(long, global = true)]
    pub coords: Option<String>,
    /// Output-count range `a..b` (inclusive) for compare-joint.
    #[arg(long, global = true)]
    pub ny: Option<String>,
    /// Constraint-count range `a..b` (inclusive) for compare-joint.
    #[arg(long, global = true)]
    pub ng: Option<String>,
    /// Relative margin that keeps steady-state rows strictly feasible.
    #[arg(long, global = true)]
    pub eps_rel: Option<f64>,
    /// Steps after convergence skipped before averaging deviations.
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    /// Reuse a previously exported set instead of building one.
    #[arg(long, global = true)]
    pub set: Option<PathBuf>,
}

/// The config file schema. Every key is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<String>,
    pub mode: Option<ModeName>,
    pub beta: Option<f64>,
    pub governor: Option<GovernorChoice>,
    pub steps: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub profile: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tmax: Option<usize>,
    pub vbox: Option<Vec<f64>>,
    pub dirs: Option<usize>,
    pub coords: Option<Vec<String>>,
    pub ny: Option<[usize; 2]>,
    pub ng: Option<[usize; 2]>,
    pub eps_rel: Option<f64>,
    pub burn_in: Option<usize>,
    pub set: Option<PathBuf>,
    #[serde(default)]
    pub numeric: NumericOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericOverrides {
    pub lu_pivot_rel: Option<f64>,
    pub lyap_increment_rel: Option<f64>,
    pub lyap_max_doublings: Option<usize>,
    pub chol_pivot_rel: Option<f64>,
    pub pd_pivot_abs: Option<f64>,
    pub zero_variance: Option<f64>,
    pub row_tol: Option<f64>,
    pub feas_tol: Option<f64>,
    pub dual_tol: Option<f64>,
    pub qp_regularization: Option<f64>,
    pub ball_tol: Option<f64>,
    pub lp_big: Option<f64>,
}

/// Resolved numeric settings, spelled out for the report and the config hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericValues {
    pub lu_pivot_rel: f64,
    pub lyap_increment_rel: f64,
    pub lyap_max_doublings: usize,
    pub chol_pivot_rel: f64,
    pub pd_pivot_abs: f64,
    pub zero_variance: f64,
    pub row_tol: f64,
    pub feas_tol: f64,
    pub dual_tol: f64,
    pub qp_regularization: f64,
    pub ball_tol: f64,
    pub lp_big: f64,
}

impl NumericOverrides {
    fn apply(&self) -> anyhow::Result<NumericSettings> {
        let mut s = NumericSettings::default();
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(x) = self.$f {
                    if !(x > 0.0 && x.is_finite()) {
                        bail!("invalid value for `numeric.{}`: must be positive and finite", stringify!($f));
                    }
                    s.$f = x;
                }
            )*};
        }
        set!(
            lu_pivot_rel,
            lyap_increment_rel,
            chol_pivot_rel,
            pd_pivot_abs,
            zero_variance,
            row_tol,
            feas_tol,
            dual_tol,
            qp_regularization,
            ball_tol,
            lp_big
        );
        if let Some(n) = self.lyap_max_doublings {
            if n == 0 {
                bail!("invalid value for `numeric.lyap_max_doublings`: must be at least 1");
            }
            s.lyap_max_doublings = n;
        }
        Ok(s)
    }
}

fn numeric_values(s: &NumericSettings) -> NumericValues {
    NumericValues {
        lu_pivot_rel: s.lu_pivot_rel,
        lyap_increment_rel: s.lyap_increment_rel,
        lyap_max_doublings: s.lyap_max_doublings,
        chol_pivot_rel: s.chol_pivot_rel,
        pd_pivot_abs: s.pd_pivot_abs,
        zero_variance: s.zero_variance,
        row_tol: s.row_tol,
        feas_tol: s.feas_tol,
        dual_tol: s.dual_tol,
        qp_regularization: s.qp_regularization,
        ball_tol: s.ball_tol,
        lp_big: s.lp_big,
    }
}

/// Every effective setting of a run. Serialized into reports and hashed into headers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_digest: Option<String>,
    pub mode: ModeName,
    /// Per-row levels after any joint allocation.
    pub betas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_beta: Option<f64>,
    pub governor: GovernorChoice,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub tmax: usize,
    pub eps_rel: f64,
    pub vbox: Vec<f64>,
    pub dirs: usize,
    pub coords: Vec<String>,
    pub burn_in: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set_digest: Option<String>,
    /// `[start_step, v_0, …]` per profile segment.
    pub profile: Vec<Vec<f64>>,
    pub numeric: NumericValues,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Digest of every setting that can change results; the output directory is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        sha256_hex(c.to_toml().as_bytes())
    }
}

/// A validated run: the effective config plus the model it selects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: LoadedModel,
    pub settings: NumericSettings,
    /// `CSRG_NUM_THREADS`; results do not depend on it.
    pub threads: Option<usize>,
}

fn field<T>(name: &str, r: anyhow::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| anyhow!("invalid value for `{name}`: {e}"))
}

fn parse_range(name: &str, s: &str) -> anyhow::Result<[usize; 2]> {
    field(
        name,
        (|| {
            let (a, b) = s
                .split_once("..=")
                .or_else(|| s.split_once(".."))
                .ok_or_else(|| anyhow!("expected `a..b`, got {s:?}"))?;
            Ok([a.trim().parse()?, b.trim().parse()?])
        })(),
    )
}

fn parse_list(name: &str, s: &str) -> anyhow::Result<Vec<f64>> {
    field(
        name,
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("{x:?}: {e}")))
            .collect(),
    )
}

pub fn read_config_file(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| anyhow!("config {}: {e}", path.display()))
}

/// Reads a profile CSV: a `start_step,v_0,…` header and one row per segment.
pub fn read_profile(path: &Path) -> anyhow::Result<ReferenceProfile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading profile {}", path.display()))?;
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let head = rd.headers()?.clone();
    if head.get(0) != Some("start_step") || head.len() < 2 {
        bail!(
            "profile {}: first column must be `start_step` followed by reference channels",
            path.display()
        );
    }
    let mut segments = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let at = |e: anyhow::Error| anyhow!("profile {}, data row {}: {e}", path.display(), k + 1);
        let start: usize = rec[0].parse().map_err(|e| at(anyhow!("start_step: {e}")))?;
        let value = rec
            .iter()
            .skip(1)
            .map(|x| x.parse::<f64>().map_err(|e| at(anyhow!("{x:?}: {e}"))))
            .collect::<anyhow::Result<Vec<_>>>()?;
        segments.push((start, value));
    }
    ReferenceProfile::new(segments).map_err(|e| anyhow!("profile {}: {e}", path.display()))
}

fn level(name: &str, b: f64) -> anyhow::Result<Probability> {
    let p = field(name, Probability::new(b).map_err(anyhow::Error::from))?;
    if b <= 0.5 {
        bail!("invalid value for `{name}`: {b} must exceed 0.5");
    }
    Ok(p)
}

/// Applies mode and level choices to the model's constraint rows.
fn respec(
    spec: &ChanceSpec,
    mode: Option<ModeName>,
    beta: Option<f64>,
) -> anyhow::Result<ChanceSpec> {
    let current = ModeName::of(&spec.mode);
    let joint = match spec.mode {
        JointMode::Individual => None,
        JointMode::RiskAllocation(b) | JointMode::ConfidenceEllipsoid(b) => Some(b),
    };
    let (g, bounds) = (spec.g_mat.clone(), spec.bounds.clone());
    let out = match (mode.unwrap_or(current), beta) {
        (ModeName::Individual, Some(b)) => {
            ChanceSpec::individual(g, bounds, vec![level("beta", b)?; spec.n_g()])
        }
        (ModeName::Individual, None) if current == ModeName::Individual => return Ok(spec.clone()),
        (ModeName::Individual, None) => {
            bail!("invalid value for `mode`: individual mode on a joint model needs `beta`")
        }
        (m, b) => {
            let b = match (b, joint) {
                (Some(b), _) => level("beta", b)?,
                (None, Some(j)) => j,
                (None, None) => bail!(
                    "invalid value for `mode`: {} needs a joint `beta`",
                    m.as_str()
                ),
            };
            if m == ModeName::Ra {
                ChanceSpec::risk_allocation(g, bounds, b)
            } else {
                ChanceSpec::confidence_ellipsoid(g, bounds, b)
            }
        }
    };
    out.map_err(|e| anyhow!("invalid constraint levels: {e}"))
}

/// Merges config file and flags, loads the model and validates every field.
pub fn resolve(flags: &Flags) -> anyhow::Result<Resolved> {
    let file = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => ConfigFile::default(),
    };
    let model_src = flags
        .model
        .clone()
        .or(file.model.clone())
        .ok_or_else(|| anyhow!("no model given; pass --model or set `model` in the config"))?;
    let (mut model, model_bytes) = load_model(&model_src)?;

    let mode = match &flags.mode {
        Some(s) => Some(field("mode", s.parse())?),
        None => file.mode,
    };
    let beta = flags.beta.or(file.beta);
    model.spec = respec(&model.spec, mode, beta)?;
    let governor = match &flags.governor {
        Some(s) => field("governor", s.parse())?,
        None => file.governor.unwrap_or(match model.algorithm {
            csrg::governor::Algorithm::Alg1 => GovernorChoice::Alg1,
            csrg::governor::Algorithm::Alg2 => GovernorChoice::Alg2,
        }),
    };

    if let Some(p) = flags.profile.as_ref().or(file.profile.as_ref()) {
        model.profile = read_profile(p)?;
    }
    if model.profile.dim() != model.n_v() {
        bail!(
            "invalid value for `profile`: {} channels, the model has {} references",
            model.profile.dim(),
            model.n_v()
        );
    }

    let vbox = match &flags.vbox {
        Some(s) => Some(parse_list("vbox", s)?),
        None => file.vbox.clone(),
    };
    if let Some(vb) = vbox {
        if vb.len() != 2 * model.n_v() || vb.iter().any(|x| !x.is_finite()) {
            bail!(
                "invalid value for `vbox`: expected {} finite numbers `lo,hi` per channel",
                2 * model.n_v()
            );
        }
        let lo = vb.iter().step_by(2).copied().collect();
        let hi = vb.iter().skip(1).step_by(2).copied().collect();
        model.v_box = VBox::new(lo, hi);
    }

    let steps = flags.steps.or(file.steps).unwrap_or(model.steps);
    let runs = flags.runs.or(file.runs).unwrap_or(1000);
    let tmax = flags.tmax.or(file.tmax).unwrap_or(1000);
    let dirs = flags.dirs.or(file.dirs).unwrap_or(360);
    let eps_rel = flags.eps_rel.or(file.eps_rel).unwrap_or(1e-3);
    let burn_in = flags.burn_in.or(file.burn_in).unwrap_or(100);
    for (name, v, min) in [
        ("steps", steps, 1),
        ("runs", runs, 1),
        ("tmax", tmax, 1),
        ("dirs", dirs, 3),
    ] {
        if v < min {
            bail!("invalid value for `{name}`: must be at least {min}");
        }
    }
    if !(eps_rel > 0.0 && eps_rel < 0.5) {
        bail!("invalid value for `eps_rel`: must lie in (0, 0.5)");
    }
    let coords = match &flags.coords {
        Some(s) => s.split(',').map(|c| c.trim().to_string()).collect(),
        None => file
            .coords
            .clone()
            .unwrap_or_else(|| model.z_names().into_iter().take(2).collect()),
    };
    if !(coords.len() == 2 || coords.len() == 3) {
        bail!("invalid value for `coords`: give 2 or 3 coordinates");
    }
    for c in &coords {
        field("coords", model.z_index(c))?;
    }
    let settings = file.numeric.apply()?;
    let set = flags.set.clone().or(file.set.clone());
    let set_digest = match &set {
        Some(p) => Some(sha256_hex(
            &std::fs::read(p).with_context(|| format!("reading set {}", p.display()))?,
        )),
        None => None,
    };
    let threads = match std::env::var("CSRG_NUM_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => bail!("invalid value for `CSRG_NUM_THREADS`: {s:?} is not a positive integer"),
        },
        Err(_) => None,
    };
    let joint_beta = match model.spec.mode {
        JointMode::Individual => None,
        JointMode::RiskAllocation(b) | JointMode::ConfidenceEllipsoid(b) => Some(b.value()),
    };
    let config = RunConfig {
        model: model_src,
        model_digest: model_bytes.map(|b| sha256_hex(&b)),
        mode: ModeName::of(&model.spec.mode),
        betas: model.spec.betas.iter().map(|b| b.value()).collect(),
        joint_beta,
        governor,
        steps,
        runs,
        seed: flags.seed.or(file.seed).unwrap_or(0),
        out: flags
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        tmax,
        eps_rel,
        vbox: model
            .v_box
            .lo
            .iter()
            .zip(&model.v_box.hi)
            .flat_map(|(l, h)| [*l, *h])
            .collect(),
        dirs,
        coords,
        burn_in,
        set,
        set_digest,
        profile: model
            .profile
            .segments()
            .iter()
            .map(|(s, v)| {
                std::iter::once(*s as f64)
                    .chain(v.iter().copied())
                    .collect()
            })
            .collect(),
        numeric: numeric_values(&settings),
    };
    Ok(Resolved {
        config,
        model,
        settings,
        threads,
    })
}

/// Settings of `compare-joint`, which needs no model unless it supplies the level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareConfig {
    pub beta: f64,
    pub ny: [usize; 2],
    pub ng: [usize; 2],
    pub out: PathBuf,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl CompareConfig {
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        sha256_hex(toml::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn resolve_compare(flags: &Flags) -> anyhow::Result<CompareConfig> {
    let file = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => ConfigFile::default(),
    };
    let model = flags.model.clone().or(file.model.clone());
    let beta = match (flags.beta.or(file.beta), &model) {
        (Some(b), _) => b,
        (None, Some(src)) => match load_model(src)?.0.spec.mode {
            JointMode::RiskAllocation(b) | JointMode::ConfidenceEllipsoid(b) => b.value(),
            JointMode::Individual => {
                bail!("invalid value for `beta`: model {src:?} has no joint level; pass --beta")
            }
        },
        (None, None) => {
            bail!("invalid value for `beta`: pass --beta or a model with a joint level")
        }
    };
    level("beta", beta)?;
    let ny = match &flags.ny {
        Some(s) => parse_range("ny", s)?,
        None => file.ny.unwrap_or([1, 8]),
    };
    let ng = match &flags.ng {
        Some(s) => parse_range("ng", s)?,
        None => file.ng.unwrap_or([1, 20]),
    };
    for (name, r) in [("ny", ny), ("ng", ng)] {
        if r[0] == 0 || r[0] > r[1] {
            bail!("invalid value for `{name}`: need 1 ≤ a ≤ b");
        }
    }
    Ok(CompareConfig {
        beta,
        ny,
        ng,
        out: flags
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(model: &str) -> Flags {
        Flags {
            model: Some(model.into()),
            ..Flags::default()
        }
    }

    #[test]
    fn defaults_come_from_the_model() {
        let r = resolve(&flags("gtm-lateral")).unwrap();
        assert_eq!(r.config.mode, ModeName::Ra);
        assert_eq!(r.config.joint_beta, Some(0.98));
        assert_eq!(r.config.steps, 600);
        assert_eq!(r.config.coords, vec!["beta", "p"]);
        assert_eq!(r.config.governor, GovernorChoice::Alg1);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "model = \"gtm-lateral\"\nseed = 5\nsteps = 50\n[numeric]\nrow_tol = 1e-8\n",
        )
        .unwrap();
        let f = Flags {
            config: Some(p),
            seed: Some(6),
            ..Flags::default()
        };
        let r = resolve(&f).unwrap();
        assert_eq!((r.config.seed, r.config.steps), (6, 50));
        assert_eq!(r.settings.row_tol, 1e-8);
    }

    #[test]
    fn unknown_config_key_names_line_and_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "model = \"scalar\"\n\nsede = 5\n").unwrap();
        let f = Flags {
            config: Some(p),
            ..Flags::default()
        };
        let err = resolve(&f).unwrap_err().to_string();
        assert!(err.contains("sede") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_values_name_the_field() {
        let mut f = flags("gtm-longitudinal");
        f.beta = Some(0.3);
        assert!(resolve(&f).unwrap_err().to_string().contains("`beta`"));
        let mut f = flags("gtm-longitudinal");
        f.mode = Some("ra".into());
        assert!(resolve(&f).unwrap_err().to_string().contains("`mode`"));
        let mut f = flags("gtm-longitudinal");
        f.vbox = Some("1,2,3".into());
        assert!(resolve(&f).unwrap_err().to_string().contains("`vbox`"));
        let mut f = flags("gtm-longitudinal");
        f.coords = Some("alpha,gamma".into());
        assert!(resolve(&f).unwrap_err().to_string().contains("`coords`"));
        let f = Flags {
            beta: Some(0.98),
            ny: Some("3..1".into()),
            ..Flags::default()
        };
        assert!(resolve_compare(&f)
            .unwrap_err()
            .to_string()
            .contains("`ny`"));
    }

    #[test]
    fn compare_level_sources() {
        let f = Flags {
            model: Some("gtm-lateral".into()),
            ..Flags::default()
        };
        let c = resolve_compare(&f).unwrap();
        assert_eq!((c.beta, c.ny, c.ng), (0.98, [1, 8], [1, 20]));
        assert!(resolve_compare(&Flags::default()).is_err());
        let f = Flags {
            model: Some("gtm-longitudinal".into()),
            ..Flags::default()
        };
        assert!(resolve_compare(&f)
            .unwrap_err()
            .to_string()
            .contains("`beta`"));
        let f = Flags {
            beta: Some(0.9),
            ny: Some("2..=3".into()),
            ..Flags::default()
        };
        assert_eq!(resolve_compare(&f).unwrap().ny, [2, 3]);
    }

    #[test]
    fn mode_switches() {
        let mut f = flags("gtm-lateral");
        f.mode = Some("ce".into());
        let r = resolve(&f).unwrap();
        assert_eq!(r.config.mode, ModeName::Ce);
        assert_eq!(r.config.joint_beta, Some(0.98));
        let mut f = flags("gtm-longitudinal");
        f.mode = Some("ra".into());
        f.beta = Some(0.95);
        let r = resolve(&f).unwrap();
        assert!(r
            .config
            .betas
            .iter()
            .all(|&b| (b - (0.95 + 11.0) / 12.0).abs() < 1e-15));
    }

    #[test]
    fn hash_tracks_content() {
        let a = resolve(&flags("scalar")).unwrap().config;
        let mut f = flags("scalar");
        f.seed = Some(1);
        let b = resolve(&f).unwrap().config;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), resolve(&flags("scalar")).unwrap().config.hash());
        let mut f = flags("scalar");
        f.out = Some("elsewhere".into());
        assert_eq!(a.hash(), resolve(&f).unwrap().config.hash());
    }

    #[test]
    fn profile_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, "# steps\nstart_step,v_0\n0,0.0\n5, 0.25\n").unwrap();
        let prof = read_profile(&p).unwrap();
        assert_eq!(prof.segments(), &[(0, vec![0.0]), (5, vec![0.25])]);
        std::fs::write(&p, "start_step,v_0\n0,zero\n").unwrap();
        assert!(read_profile(&p)
            .unwrap_err()
            .to_string()
            .contains("data row 1"));
    }

    #[test]
    fn shipped_profiles_match_builtins() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../profiles");
        for name in ["gtm-longitudinal", "gtm-lateral"] {
            let prof = read_profile(&root.join(format!("{name}.csv"))).unwrap();
            assert_eq!(
                prof,
                csrg::aircraft::builtin(name).unwrap().profile,
                "{name}"
            );
        }
    }
}
