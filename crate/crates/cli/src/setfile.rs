//! Admissible-set export.

use anyhow::{anyhow, bail};
use csrg::oinf::{JointMode, OinfOptions, OinfResult, Polyhedron, VBox};
use csrg::prob::Probability;
use csrg::solver::Halfspace;
use serde::{Deserialize, Serialize};

use crate::modelfile::ModeName;
use crate::output::Header;

pub const SET_KIND: &str = "set/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetFile {
    pub header: Header,
    pub meta: SetMeta,
    pub row: Vec<Row>,
    #[serde(default)]
    pub tilde_row: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetMeta {
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_beta: Option<f64>,
    pub t_star: usize,
    pub n_xp: usize,
    pub n_xu: usize,
    pub n_v: usize,
    pub eps_rel: f64,
    pub t_max: usize,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub reference_center: Vec<f64>,
    /// Tightened right-hand sides, one row per prediction step.
    pub tightening: Vec<Vec<f64>>,
}

/// One halfspace `a·z ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub a: Vec<f64>,
    pub b: f64,
}

fn rows_out(p: &Polyhedron) -> Vec<Row> {
    p.rows
        .iter()
        .map(|h| Row {
            a: h.a.clone(),
            b: h.b,
        })
        .collect()
}

fn rows_in(rows: &[Row], dim: usize, what: &str) -> anyhow::Result<Vec<Halfspace>> {
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            if r.a.len() != dim {
                bail!("{what}[{k}] has {} coefficients, expected {dim}", r.a.len());
            }
            Ok(Halfspace::new(r.a.clone(), r.b))
        })
        .collect()
}

impl SetFile {
    pub fn new(header: Header, res: &OinfResult) -> Self {
        let joint_beta = match res.mode {
            JointMode::Individual => None,
            JointMode::RiskAllocation(b) | JointMode::ConfidenceEllipsoid(b) => Some(b.value()),
        };
        Self {
            header,
            meta: SetMeta {
                mode: ModeName::of(&res.mode),
                joint_beta,
                t_star: res.t_star,
                n_xp: res.set.n_xp,
                n_xu: res.set.n_xu,
                n_v: res.set.n_v,
                eps_rel: res.options.eps_rel,
                t_max: res.options.t_max,
                v_lo: res.options.v_box.lo.clone(),
                v_hi: res.options.v_box.hi.clone(),
                reference_center: res.reference_center.clone(),
                tightening: res.tightening_table.clone(),
            },
            row: rows_out(&res.set),
            tilde_row: rows_out(&res.tilde_omega),
        }
    }

    pub fn to_result(&self) -> anyhow::Result<OinfResult> {
        let m = &self.meta;
        let level = |b: Option<f64>| -> anyhow::Result<Probability> {
            let b = b.ok_or_else(|| anyhow!("joint mode needs `meta.joint_beta`"))?;
            Probability::new(b).map_err(|e| anyhow!("`meta.joint_beta`: {e}"))
        };
        let mode = match m.mode {
            ModeName::Individual => JointMode::Individual,
            ModeName::Ra => JointMode::RiskAllocation(level(m.joint_beta)?),
            ModeName::Ce => JointMode::ConfidenceEllipsoid(level(m.joint_beta)?),
        };
        if m.v_lo.len() != m.n_v || m.v_hi.len() != m.n_v {
            bail!("`meta.v_lo`/`meta.v_hi` must have {} entries", m.n_v);
        }
        let mut set = Polyhedron::new(m.n_xp, m.n_xu, m.n_v);
        set.rows = rows_in(&self.row, set.dim(), "row")?;
        let mut tilde_omega = Polyhedron::new(0, 0, m.n_v);
        tilde_omega.rows = rows_in(&self.tilde_row, m.n_v, "tilde_row")?;
        let mut options = OinfOptions::new(VBox::new(m.v_lo.clone(), m.v_hi.clone()));
        options.eps_rel = m.eps_rel;
        options.t_max = m.t_max;
        Ok(OinfResult {
            set,
            t_star: m.t_star,
            tilde_omega,
            tightening_table: m.tightening.clone(),
            mode,
            options,
            reference_center: m.reference_center.clone(),
        })
    }
}

pub fn to_toml(header: Header, res: &OinfResult) -> anyhow::Result<String> {
    Ok(toml::to_string(&SetFile::new(header, res))?)
}

pub fn from_toml(text: &str) -> anyhow::Result<(Header, OinfResult)> {
    let file: SetFile = toml::from_str(text)?;
    if file.header.kind != SET_KIND {
        bail!("file kind is {:?}, expected {SET_KIND:?}", file.header.kind);
    }
    let res = file.to_result()?;
    Ok((file.header, res))
}
