use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::table::Table;
use crate::{Error, Result};

/// Per-step simulation record on a uniform time grid.
///
/// CSV columns, in order: `t, r, u, u_delayed, y_h, y_p, y_m, e_norm`,
/// then `x_hp[i]`, `x_m[i]`, `e[i]`, `theta1[i]`, `theta_x[i]` for each state
/// `i`, `lambda1[j]` for each exported η-grid index `j`, then `phi, kr,
/// margin` and `V` when the functional was evaluated.
#[derive(Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub n: usize,
    /// Exported η-grid indices and their η values.
    pub lambda_index: Vec<usize>,
    pub lambda_eta: Vec<f64>,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub u_delayed: Vec<f64>,
    pub y_h: Vec<f64>,
    pub y_p: Vec<f64>,
    pub y_m: Vec<f64>,
    pub x_hp: Vec<Vec<f64>>,
    pub x_m: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub theta1: Vec<Vec<f64>>,
    pub theta_x: Vec<Vec<f64>>,
    pub lambda1: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub kr: Vec<f64>,
    pub margin: Vec<f64>,
    pub v: Option<Vec<f64>>,
}

impl std::fmt::Debug for Trace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trace")
            .field("n", &self.n)
            .field("len", &self.len())
            .field("t_end", &self.t.last())
            .finish_non_exhaustive()
    }
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn e_norm(&self, i: usize) -> f64 {
        self.e[i].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// RMS of `‖e‖` over samples with `t ∈ [t0, t1)`.
    pub fn rms_error(&self, t0: f64, t1: f64) -> f64 {
        let (mut acc, mut k) = (0.0, 0usize);
        for i in 0..self.len() {
            if self.t[i] >= t0 && self.t[i] < t1 {
                acc += self.e[i].iter().map(|v| v * v).sum::<f64>();
                k += 1;
            }
        }
        if k == 0 {
            f64::NAN
        } else {
            (acc / k as f64).sqrt()
        }
    }

    pub fn headers(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "r", "u", "u_delayed", "y_h", "y_p", "y_m", "e_norm"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for name in ["x_hp", "x_m", "e", "theta1", "theta_x"] {
            h.extend((0..self.n).map(|i| format!("{name}[{i}]")));
        }
        h.extend(self.lambda_index.iter().map(|j| format!("lambda1[{j}]")));
        h.extend(["phi", "kr", "margin"].iter().map(|s| s.to_string()));
        if self.v.is_some() {
            h.push("V".into());
        }
        h
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![
            self.t[i],
            self.r[i],
            self.u[i],
            self.u_delayed[i],
            self.y_h[i],
            self.y_p[i],
            self.y_m[i],
            self.e_norm(i),
        ];
        for block in [&self.x_hp, &self.x_m, &self.e, &self.theta1, &self.theta_x] {
            row.extend_from_slice(&block[i]);
        }
        row.extend_from_slice(&self.lambda1[i]);
        row.extend_from_slice(&[self.phi[i], self.kr[i], self.margin[i]]);
        if let Some(v) = &self.v {
            row.push(v[i]);
        }
        row
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(self.headers());
        for i in 0..self.len() {
            t.push_row(&self.row(i)).expect("row width matches headers");
        }
        t
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.to_table().write_csv(w)
    }

    /// One JSON object per step keyed by the CSV column names.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let headers = self.headers();
        for i in 0..self.len() {
            let obj: serde_json::Map<String, serde_json::Value> = headers
                .iter()
                .zip(self.row(i))
                .map(|(h, v)| (h.clone(), serde_json::json!(v)))
                .collect();
            serde_json::to_writer(&mut w, &obj)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a trace from its CSV table.
    pub fn from_table(tab: &Table) -> Result<Self> {
        let col = |name: &str| tab.require(name).map(<[f64]>::to_vec);
        let n = (0..).take_while(|i| tab.column(&format!("x_hp[{i}]")).is_some()).count();
        let lambda_index: Vec<usize> = tab
            .headers
            .iter()
            .filter_map(|h| h.strip_prefix("lambda1[").and_then(|s| s.strip_suffix(']')))
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad lambda column index '{s}'"))))
            .collect::<Result<_>>()?;
        let rows = tab.n_rows();
        let block = |name: &str| -> Result<Vec<Vec<f64>>> {
            let cols: Vec<&[f64]> = (0..n).map(|i| tab.require(&format!("{name}[{i}]"))).collect::<Result<_>>()?;
            Ok((0..rows).map(|k| cols.iter().map(|c| c[k]).collect()).collect())
        };
        let lcols: Vec<&[f64]> = lambda_index
            .iter()
            .map(|j| tab.require(&format!("lambda1[{j}]")))
            .collect::<Result<_>>()?;
        Ok(Self {
            n,
            lambda_eta: Vec::new(),
            t: col("t")?,
            r: col("r")?,
            u: col("u")?,
            u_delayed: col("u_delayed")?,
            y_h: col("y_h")?,
            y_p: col("y_p")?,
            y_m: col("y_m")?,
            x_hp: block("x_hp")?,
            x_m: block("x_m")?,
            e: block("e")?,
            theta1: block("theta1")?,
            theta_x: block("theta_x")?,
            lambda1: (0..rows).map(|k| lcols.iter().map(|c| c[k]).collect()).collect(),
            lambda_index,
            phi: col("phi")?,
            kr: col("kr")?,
            margin: col("margin")?,
            v: tab.column("V").map(<[f64]>::to_vec),
        })
    }

    /// First `len` rows.
    pub fn prefix(&self, len: usize) -> Self {
        let cut = |v: &Vec<f64>| v[..len.min(v.len())].to_vec();
        let cutv = |v: &Vec<Vec<f64>>| v[..len.min(v.len())].to_vec();
        Self {
            n: self.n,
            lambda_index: self.lambda_index.clone(),
            lambda_eta: self.lambda_eta.clone(),
            t: cut(&self.t),
            r: cut(&self.r),
            u: cut(&self.u),
            u_delayed: cut(&self.u_delayed),
            y_h: cut(&self.y_h),
            y_p: cut(&self.y_p),
            y_m: cut(&self.y_m),
            x_hp: cutv(&self.x_hp),
            x_m: cutv(&self.x_m),
            e: cutv(&self.e),
            theta1: cutv(&self.theta1),
            theta_x: cutv(&self.theta_x),
            lambda1: cutv(&self.lambda1),
            phi: cut(&self.phi),
            kr: cut(&self.kr),
            margin: cut(&self.margin),
            v: self.v.as_ref().map(cut),
        }
    }
}
