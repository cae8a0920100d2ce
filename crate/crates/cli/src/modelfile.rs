//! Model description files: an editable TOML form of an example bundle.

use anyhow::{anyhow, bail, Context};
use csrg::aircraft::{builtin, ExampleBundle, BUILTIN_NAMES};
use csrg::governor::Algorithm;
use csrg::linalg::Mat;
use csrg::model::{assemble_with, discretize_zoh, ClosedLoopModel, ControllerModel, PlantModel};
use csrg::oinf::{ChanceSpec, JointMode, VBox};
use csrg::prob::Probability;
use csrg::settings::NumericSettings;
use csrg::sim::ReferenceProfile;
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT: &str = "csrg-model/1";

/// Everything needed to build a set and simulate one loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub name: String,
    pub plant: PlantModel,
    pub controller: ControllerModel,
    pub dt: f64,
    pub w: Mat,
    pub spec: ChanceSpec,
    pub q: Mat,
    pub r: Mat,
    pub delta: f64,
    pub algorithm: Algorithm,
    pub v_box: VBox,
    pub profile: ReferenceProfile,
    pub steps: usize,
    pub state_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl From<ExampleBundle> for LoadedModel {
    fn from(b: ExampleBundle) -> Self {
        Self {
            name: b.name.into(),
            plant: b.plant,
            controller: b.controller,
            dt: b.dt,
            w: b.w,
            spec: b.spec,
            q: b.q,
            r: b.r,
            delta: b.delta,
            algorithm: b.algorithm,
            v_box: b.v_box,
            profile: b.profile,
            steps: b.steps,
            state_names: b.state_names.iter().map(|s| s.to_string()).collect(),
            output_names: b.output_names.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LoadedModel {
    pub fn assemble(&self, settings: NumericSettings) -> anyhow::Result<ClosedLoopModel> {
        Ok(assemble_with(
            self.plant.clone(),
            self.controller.clone(),
            self.w.clone(),
            settings,
        )?)
    }

    pub fn n_xp(&self) -> usize {
        self.plant.a.rows()
    }

    pub fn n_xu(&self) -> usize {
        self.controller.a_u.rows()
    }

    pub fn n_v(&self) -> usize {
        self.controller.b_v.cols()
    }

    /// Names of the coordinates of `z = (x_p, x_u, v)`.
    pub fn z_names(&self) -> Vec<String> {
        let mut out = self.state_names.clone();
        out.extend((0..self.n_xu()).map(|i| format!("xu{i}")));
        out.extend((0..self.n_v()).map(|i| format!("v{i}")));
        out
    }

    /// Resolves a coordinate by name or index into `z`.
    pub fn z_index(&self, key: &str) -> anyhow::Result<usize> {
        let names = self.z_names();
        if let Some(i) = names.iter().position(|n| n == key) {
            return Ok(i);
        }
        if key == "v" && self.n_v() == 1 {
            return Ok(names.len() - 1);
        }
        match key.parse::<usize>() {
            Ok(i) if i < names.len() => Ok(i),
            _ => bail!("unknown coordinate {key:?}; known: {}", names.join(", ")),
        }
    }
}

/// A built-in name or a path to a model file.
pub fn load_model(source: &str) -> anyhow::Result<(LoadedModel, Option<Vec<u8>>)> {
    if let Some(b) = builtin(source) {
        return Ok((b.into(), None));
    }
    let path = std::path::Path::new(source);
    if !path.exists() {
        bail!(
            "model {source:?} is neither a built-in ({}) nor an existing file",
            BUILTIN_NAMES.join(", ")
        );
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {source}"))?;
    let text = std::str::from_utf8(&bytes).context("model file is not UTF-8")?;
    let file: ModelFile = toml::from_str(text).map_err(|e| anyhow!("{source}: {e}"))?;
    let model = file
        .to_model()
        .with_context(|| format!("in model file {source}"))?;
    Ok((model, Some(bytes)))
}

/// Nested rows. A matrix without rows is written `[]`; its column count comes from context.
type Rows = Vec<Vec<f64>>;

fn rows_of(m: &Mat) -> Rows {
    m.to_rows()
}

fn mat_of(field: &str, rows: &Rows, cols_if_empty: usize) -> anyhow::Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        bail!("`{field}` has rows of different lengths");
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        bail!("`{field}` has non-finite entries");
    }
    Ok(Mat::from_vec(
        rows.len(),
        cols,
        rows.iter().flatten().copied().collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub name: String,
    /// Sample time in seconds.
    pub dt: f64,
    #[serde(default)]
    pub state_names: Vec<String>,
    #[serde(default)]
    pub output_names: Vec<String>,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub disturbance: DisturbanceSection,
    pub constraints: ConstraintSection,
    pub governor: GovernorSection,
    pub reference: ReferenceSection,
}

/// Discrete-time plant. Omit `a`, `b_u`, `b_w` and give `[plant.continuous]` to sample by zero-order hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_u: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_w: Option<Rows>,
    pub c: Rows,
    pub d_u: Rows,
    pub d_w: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSection {
    pub a: Rows,
    pub b_u: Rows,
    pub b_w: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k_p: Rows,
    pub k_u: Rows,
    pub b_v: Rows,
    pub a_p: Rows,
    pub a_u: Rows,
    pub d_v: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub w: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Individual,
    Ra,
    Ce,
}

impl std::str::FromStr for ModeName {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "individual" => Ok(Self::Individual),
            "ra" => Ok(Self::Ra),
            "ce" => Ok(Self::Ce),
            _ => bail!("mode must be individual, ra or ce, not {s:?}"),
        }
    }
}

impl ModeName {
    pub fn of(mode: &JointMode) -> Self {
        match mode {
            JointMode::Individual => Self::Individual,
            JointMode::RiskAllocation(_) => Self::Ra,
            JointMode::ConfidenceEllipsoid(_) => Self::Ce,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Individual => "individual",
            Self::Ra => "ra",
            Self::Ce => "ce",
        }
    }
}

/// Rows `G_iᵀ y ≤ g_i`; `g` has one column per constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub g: Rows,
    pub bounds: Vec<f64>,
    pub mode: ModeName,
    /// Per-row levels in individual mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Joint level in `ra` and `ce` modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgName {
    Alg1,
    Alg2,
}

impl From<Algorithm> for AlgName {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Alg1 => Self::Alg1,
            Algorithm::Alg2 => Self::Alg2,
        }
    }
}

impl From<AlgName> for Algorithm {
    fn from(a: AlgName) -> Self {
        match a {
            AlgName::Alg1 => Algorithm::Alg1,
            AlgName::Alg2 => Algorithm::Alg2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernorSection {
    pub q: Rows,
    pub r: Rows,
    pub delta: f64,
    pub algorithm: AlgName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub steps: usize,
    pub segment: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: usize,
    pub value: Vec<f64>,
}

fn probability(field: &str, x: f64) -> anyhow::Result<Probability> {
    Probability::new(x).map_err(|e| anyhow!("`{field}`: {e}"))
}

impl ModelFile {
    pub fn from_model(m: &LoadedModel) -> Self {
        let (mode, betas, beta) = match m.spec.mode {
            JointMode::Individual => (
                ModeName::Individual,
                Some(m.spec.betas.iter().map(|b| b.value()).collect()),
                None,
            ),
            JointMode::RiskAllocation(b) => (ModeName::Ra, None, Some(b.value())),
            JointMode::ConfidenceEllipsoid(b) => (ModeName::Ce, None, Some(b.value())),
        };
        Self {
            format: MODEL_FORMAT.into(),
            name: m.name.clone(),
            dt: m.dt,
            state_names: m.state_names.clone(),
            output_names: m.output_names.clone(),
            plant: PlantSection {
                a: Some(rows_of(&m.plant.a)),
                b_u: Some(rows_of(&m.plant.b_u)),
                b_w: Some(rows_of(&m.plant.b_w)),
                c: rows_of(&m.plant.c),
                d_u: rows_of(&m.plant.d_u),
                d_w: rows_of(&m.plant.d_w),
                continuous: None,
            },
            controller: ControllerSection {
                k_p: rows_of(&m.controller.k_p),
                k_u: rows_of(&m.controller.k_u),
                b_v: rows_of(&m.controller.b_v),
                a_p: rows_of(&m.controller.a_p),
                a_u: rows_of(&m.controller.a_u),
                d_v: rows_of(&m.controller.d_v),
            },
            disturbance: DisturbanceSection { w: rows_of(&m.w) },
            constraints: ConstraintSection {
                g: rows_of(&m.spec.g_mat),
                bounds: m.spec.bounds.clone(),
                mode,
                betas,
                beta,
            },
            governor: GovernorSection {
                q: rows_of(&m.q),
                r: rows_of(&m.r),
                delta: m.delta,
                algorithm: m.algorithm.into(),
            },
            reference: ReferenceSection {
                v_lo: m.v_box.lo.clone(),
                v_hi: m.v_box.hi.clone(),
                steps: m.steps,
                segment: m
                    .profile
                    .segments()
                    .iter()
                    .map(|(start, value)| Segment {
                        start: *start,
                        value: value.clone(),
                    })
                    .collect(),
            },
        }
    }

    pub fn to_model(&self) -> anyhow::Result<LoadedModel> {
        if self.format != MODEL_FORMAT {
            bail!("`format` is {:?}, expected {MODEL_FORMAT:?}", self.format);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bail!("`dt` must be positive");
        }
        let p = &self.plant;
        let (a, b_u, b_w) = match (&p.continuous, &p.a, &p.b_u, &p.b_w) {
            (None, Some(a), Some(b_u), Some(b_w)) => (
                mat_of("plant.a", a, 0)?,
                mat_of("plant.b_u", b_u, 0)?,
                mat_of("plant.b_w", b_w, 0)?,
            ),
            (Some(c), None, None, None) => {
                let a = mat_of("plant.continuous.a", &c.a, 0)?;
                let b_u = mat_of("plant.continuous.b_u", &c.b_u, 0)?;
                let b_w = mat_of("plant.continuous.b_w", &c.b_w, 0)?;
                let (ad, bs) = discretize_zoh(&a, &[&b_u, &b_w], self.dt)
                    .map_err(|e| anyhow!("sampling `plant.continuous`: {e}"))?;
                (ad, bs[0].clone(), bs[1].clone())
            }
            _ => bail!(
                "`plant` needs either `a`, `b_u`, `b_w` or a `[plant.continuous]` table, not both"
            ),
        };
        let n_xp = a.rows();
        if b_u.rows() != n_xp || b_w.rows() != n_xp {
            bail!("`plant.b_u` and `plant.b_w` need {n_xp} rows");
        }
        let n_u = b_u.cols();
        let plant = PlantModel {
            c: mat_of("plant.c", &p.c, n_xp)?,
            d_u: mat_of("plant.d_u", &p.d_u, n_u)?,
            d_w: mat_of("plant.d_w", &p.d_w, b_w.cols())?,
            a,
            b_u,
            b_w,
        };
        let c = &self.controller;
        let b_v = mat_of("controller.b_v", &c.b_v, 0)?;
        let n_v = b_v.cols();
        let k_u = mat_of("controller.k_u", &c.k_u, 0)?;
        let n_xu = if c.a_u.is_empty() { 0 } else { c.a_u.len() };
        let k_u = if k_u.rows() == 0 {
            Mat::zeros(n_u, n_xu)
        } else {
            k_u
        };
        let controller = ControllerModel {
            k_p: mat_of("controller.k_p", &c.k_p, n_xp)?,
            k_u,
            b_v,
            a_p: mat_of("controller.a_p", &c.a_p, n_xp)?,
            a_u: if n_xu == 0 {
                Mat::zeros(0, 0)
            } else {
                mat_of("controller.a_u", &c.a_u, 0)?
            },
            d_v: mat_of("controller.d_v", &c.d_v, n_v)?,
        };
        let w = mat_of("disturbance.w", &self.disturbance.w, 0)?;

        let cs = &self.constraints;
        let g = mat_of("constraints.g", &cs.g, cs.bounds.len())?;
        let spec = match (cs.mode, &cs.betas, cs.beta) {
            (ModeName::Individual, Some(betas), None) => {
                let betas = betas
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| probability(&format!("constraints.betas[{i}]"), b))
                    .collect::<anyhow::Result<Vec<_>>>()?;
                ChanceSpec::individual(g, cs.bounds.clone(), betas)
            }
            (ModeName::Ra, None, Some(b)) => ChanceSpec::risk_allocation(
                g,
                cs.bounds.clone(),
                probability("constraints.beta", b)?,
            ),
            (ModeName::Ce, None, Some(b)) => ChanceSpec::confidence_ellipsoid(
                g,
                cs.bounds.clone(),
                probability("constraints.beta", b)?,
            ),
            (ModeName::Individual, _, _) => {
                bail!("individual mode takes `constraints.betas` and no `beta`")
            }
            _ => bail!("joint modes take `constraints.beta` and no `betas`"),
        }
        .map_err(|e| anyhow!("`constraints`: {e}"))?;

        let gv = &self.governor;
        let rf = &self.reference;
        if rf.v_lo.len() != rf.v_hi.len() {
            bail!("`reference.v_lo` and `reference.v_hi` differ in length");
        }
        let profile = ReferenceProfile::new(
            rf.segment
                .iter()
                .map(|s| (s.start, s.value.clone()))
                .collect(),
        )
        .map_err(|e| anyhow!("`reference.segment`: {e}"))?;
        let state_names = if self.state_names.is_empty() {
            (0..n_xp).map(|i| format!("x{i}")).collect()
        } else {
            self.state_names.clone()
        };
        if state_names.len() != n_xp {
            bail!(
                "`state_names` has {} entries for {n_xp} states",
                state_names.len()
            );
        }
        let n_y = plant.c.rows();
        let output_names = if self.output_names.is_empty() {
            (0..n_y).map(|i| format!("y{i}")).collect()
        } else {
            self.output_names.clone()
        };
        if output_names.len() != n_y {
            bail!(
                "`output_names` has {} entries for {n_y} outputs",
                output_names.len()
            );
        }
        Ok(LoadedModel {
            name: self.name.clone(),
            plant,
            controller,
            dt: self.dt,
            w,
            spec,
            q: mat_of("governor.q", &gv.q, 0)?,
            r: mat_of("governor.r", &gv.r, 0)?,
            delta: gv.delta,
            algorithm: gv.algorithm.into(),
            v_box: VBox::new(rf.v_lo.clone(), rf.v_hi.clone()),
            profile,
            steps: rf.steps,
            state_names,
            output_names,
        })
    }
}

pub fn to_toml(m: &LoadedModel) -> anyhow::Result<String> {
    Ok(toml::to_string(&ModelFile::from_model(m))?)
}
