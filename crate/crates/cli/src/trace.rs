//! Closed-loop trace CSV.
//!
//! Columns: `step, time_s, x_p…, x_u…, v…, r…, u…, y…, branch, J, viol`.
//! `branch` is `optimized`, `command`, `fallback` or `off`; `J` is `NaN` without a
//! governor; `viol` has one `0`/`1` character per constraint row.

use anyhow::{anyhow, bail, Context};
use csrg::sim::SimTrace;

use crate::output::{fmt_f64, parse_f64, Header};

pub const TRACE_KIND: &str = "trace/1";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time_s: f64,
    pub x_p: Vec<f64>,
    pub x_u: Vec<f64>,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub branch: String,
    pub cost: f64,
    pub viol: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: Header,
    pub dt: f64,
    pub state_names: Vec<String>,
    pub output_names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl TraceFile {
    pub fn from_sim(
        header: Header,
        trace: &SimTrace,
        state_names: &[String],
        output_names: &[String],
    ) -> Self {
        let rows = trace
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| TraceRow {
                step: t,
                time_s: t as f64 * trace.dt,
                x_p: s.x_p.clone(),
                x_u: s.x_u.clone(),
                v: s.v.clone(),
                r: s.r.clone(),
                u: s.u.clone(),
                y: s.y.clone(),
                branch: s.branch().map_or("off", |b| b.as_str()).to_string(),
                cost: s.diag.as_ref().map_or(f64::NAN, |d| d.cost),
                viol: s.violations.clone(),
            })
            .collect();
        Self {
            header,
            dt: trace.dt,
            state_names: state_names.to_vec(),
            output_names: output_names.to_vec(),
            rows,
        }
    }

    fn columns(&self) -> Vec<String> {
        let first = self.rows.first();
        let n = |f: fn(&TraceRow) -> usize| first.map_or(0, f);
        let mut cols = vec!["step".to_string(), "time_s".to_string()];
        cols.extend(self.state_names.iter().map(|s| format!("xp_{s}")));
        cols.extend((0..n(|r| r.x_u.len())).map(|i| format!("xu_{i}")));
        cols.extend((0..n(|r| r.v.len())).map(|i| format!("v_{i}")));
        cols.extend((0..n(|r| r.r.len())).map(|i| format!("r_{i}")));
        cols.extend((0..n(|r| r.u.len())).map(|i| format!("u_{i}")));
        cols.extend(self.output_names.iter().map(|s| format!("y_{s}")));
        cols.extend(["branch", "J", "viol"].map(String::from));
        cols
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut out = self.header.comment_lines();
        out.push_str(&format!("# dt: {}\n", fmt_f64(self.dt)));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns())?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), fmt_f64(r.time_s)];
            for block in [&r.x_p, &r.x_u, &r.v, &r.r, &r.u, &r.y] {
                rec.extend(block.iter().map(|&x| fmt_f64(x)));
            }
            rec.push(r.branch.clone());
            rec.push(fmt_f64(r.cost));
            rec.push(r.viol.iter().map(|&b| if b { '1' } else { '0' }).collect());
            w.write_record(&rec)?;
        }
        out.push_str(std::str::from_utf8(&w.into_inner()?)?);
        Ok(out)
    }

    pub fn from_csv(text: &str) -> anyhow::Result<Self> {
        let (header, extras) = Header::parse_comments(text)?;
        if header.kind != TRACE_KIND {
            bail!("file kind is {:?}, expected {TRACE_KIND:?}", header.kind);
        }
        let dt = extras
            .iter()
            .find(|(k, _)| k == "dt")
            .ok_or_else(|| anyhow!("trace header is missing `dt`"))
            .and_then(|(_, v)| parse_f64(v))?;
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let cols: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        let pick = |prefix: &str| -> Vec<usize> {
            cols.iter()
                .enumerate()
                .filter(|(_, c)| c.starts_with(prefix))
                .map(|(i, _)| i)
                .collect()
        };
        let blocks = ["xp_", "xu_", "v_", "r_", "u_", "y_"].map(pick);
        let at = |name: &str| {
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| anyhow!("trace is missing column `{name}`"))
        };
        let (i_step, i_time, i_branch, i_cost, i_viol) = (
            at("step")?,
            at("time_s")?,
            at("branch")?,
            at("J")?,
            at("viol")?,
        );
        let state_names = blocks[0]
            .iter()
            .map(|&i| cols[i]["xp_".len()..].to_string())
            .collect();
        let output_names = blocks[5]
            .iter()
            .map(|&i| cols[i]["y_".len()..].to_string())
            .collect();
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = k + 1;
            let num = |i: usize| {
                parse_f64(&rec[i]).with_context(|| format!("data row {line}, column `{}`", cols[i]))
            };
            let vec_of = |idx: &[usize]| {
                idx.iter()
                    .map(|&i| num(i))
                    .collect::<anyhow::Result<Vec<_>>>()
            };
            let viol = rec[i_viol]
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(anyhow!("data row {line}: bad `viol` flag {c:?}")),
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            rows.push(TraceRow {
                step: rec[i_step]
                    .parse()
                    .with_context(|| format!("data row {line}, column `step`"))?,
                time_s: num(i_time)?,
                x_p: vec_of(&blocks[0])?,
                x_u: vec_of(&blocks[1])?,
                v: vec_of(&blocks[2])?,
                r: vec_of(&blocks[3])?,
                u: vec_of(&blocks[4])?,
                y: vec_of(&blocks[5])?,
                branch: rec[i_branch].to_string(),
                cost: num(i_cost)?,
                viol,
            });
        }
        Ok(Self {
            header,
            dt,
            state_names,
            output_names,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use csrg::aircraft::builtin;
    use csrg::governor::GovernorConfig;
    use csrg::oinf::build_oinf;
    use csrg::sim::{run_closed_loop, RngStream, SimSetup};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn trace(name: &str, governed: bool) -> TraceFile {
        let b = builtin(name).unwrap();
        let m = b.model().unwrap();
        let res = build_oinf(&m, &b.spec, &b.oinf_options()).unwrap();
        let cfg =
            GovernorConfig::new(&m, b.q.clone(), b.r.clone(), b.delta, b.algorithm, res).unwrap();
        let xp0 = vec![0.0; m.dims().n_xp];
        let xu0 = vec![0.0; m.dims().n_xu];
        let setup = SimSetup {
            model: &m,
            governor: governed.then_some(&cfg),
            constraints: &b.spec,
            profile: &b.profile,
            x0: (&xp0, &xu0),
            steps: 40,
        };
        let sim = run_closed_loop(&setup, b.dt, &mut RngStream::new(9)).unwrap();
        TraceFile::from_sim(
            Header::new(TRACE_KIND, "ff", 9, name),
            &sim,
            &names(&b.state_names),
            &names(&b.output_names),
        )
    }

    fn same_bits(a: &TraceFile, b: &TraceFile) -> bool {
        let flat = |t: &TraceFile| -> Vec<u64> {
            t.rows
                .iter()
                .flat_map(|r| {
                    [r.time_s, r.cost]
                        .into_iter()
                        .chain(
                            r.x_p
                                .iter()
                                .chain(&r.x_u)
                                .chain(&r.v)
                                .chain(&r.r)
                                .chain(&r.u)
                                .chain(&r.y)
                                .copied(),
                        )
                        .map(f64::to_bits)
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        flat(a) == flat(b)
    }

    #[test]
    fn round_trip_bit_exact() {
        for (name, governed) in [
            ("integrator", true),
            ("gtm-longitudinal", true),
            ("scalar", false),
        ] {
            let t = trace(name, governed);
            let back = TraceFile::from_csv(&t.to_csv().unwrap()).unwrap();
            assert!(same_bits(&t, &back), "{name}");
            assert_eq!(back.header, t.header);
            assert_eq!(back.rows.len(), t.rows.len());
            for (a, b) in t.rows.iter().zip(&back.rows) {
                assert_eq!((a.step, &a.branch, &a.viol), (b.step, &b.branch, &b.viol));
            }
        }
    }

    #[test]
    fn column_order() {
        let t = trace("integrator", true);
        let csv = t.to_csv().unwrap();
        let head = csv.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(
            head,
            "step,time_s,xp_x,xu_0,v_0,r_0,u_0,y_x,y_u,branch,J,viol"
        );
    }

    #[test]
    fn ungoverned_rows() {
        let t = trace("scalar", false);
        assert!(t.rows.iter().all(|r| r.branch == "off" && r.cost.is_nan()));
    }

    #[test]
    fn bad_flag_is_located() {
        let t = trace("scalar", false);
        let csv = t.to_csv().unwrap();
        let broken = csv.replacen(",off,NaN,0\n", ",off,NaN,x\n", 1);
        let err = TraceFile::from_csv(&broken).unwrap_err().to_string();
        assert!(err.contains("data row 1"), "{err}");
    }
}
