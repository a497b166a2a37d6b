//! File formats: MDPs as JSON, datasets and result tables as CSV.
//!
//! JSON numbers are written in shortest round-trip form, so reading a file
//! back reproduces every `f64` bit for bit. CSV floats use 17 significant digits.

use crate::error::{Error, Result};
use crate::generators::{Dataset, Transition};
use crate::mdp::TabularMdp;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Lossless text form of a float.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub r_max: f64,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    pub init_dist: Vec<f64>,
}

impl MdpFile {
    pub fn from_mdp<T: Scalar>(mdp: &TabularMdp<T>) -> Self {
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        Self {
            n_states: n,
            n_actions: k,
            r_max: mdp.r_max().as_f64(),
            reward: (0..n).map(|s| (0..k).map(|a| mdp.reward(s, a).as_f64()).collect()).collect(),
            transition: (0..n)
                .map(|s| (0..k).map(|a| mdp.row(s, a).iter().map(|p| p.as_f64()).collect()).collect())
                .collect(),
            init_dist: mdp.init_dist().iter().map(|p| p.as_f64()).collect(),
        }
    }

    /// Builds and validates the MDP.
    pub fn to_mdp<T: Scalar>(&self) -> Result<TabularMdp<T>> {
        let (n, k) = (self.n_states, self.n_actions);
        if self.reward.len() != n || self.reward.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!("reward must be {n} x {k}")));
        }
        if self.transition.len() != n
            || self.transition.iter().any(|rows| rows.len() != k || rows.iter().any(|p| p.len() != n))
        {
            return Err(Error::Dimension(format!("transition must be {n} x {k} x {n}")));
        }
        let lit = |x: &f64| T::lit(*x);
        TabularMdp::new_validated(
            n,
            k,
            self.transition.iter().flatten().flatten().map(lit).collect(),
            self.reward.iter().flatten().map(lit).collect(),
            T::lit(self.r_max),
            self.init_dist.iter().map(lit).collect(),
        )
    }
}

pub fn write_mdp_json<T: Scalar, W: Write>(mdp: &TabularMdp<T>, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &MdpFile::from_mdp(mdp)).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_mdp_json<T: Scalar, R: Read>(input: R) -> Result<TabularMdp<T>> {
    let file: MdpFile = serde_json::from_reader(input).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_mdp()
}

pub fn load_mdp<T: Scalar>(path: &Path) -> Result<TabularMdp<T>> {
    read_mdp_json(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TransitionRow {
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
}

/// Writes `s,a,r,s_next` rows in dataset order.
pub fn write_dataset_csv<T: Scalar, W: Write>(dataset: &Dataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "a", "r", "s_next"]).map_err(csv_err)?;
    for t in &dataset.transitions {
        w.write_record([t.s.to_string(), t.a.to_string(), fmt_float(t.r.as_f64()), t.s_next.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<T: Scalar, R: Read>(input: R) -> Result<Dataset<T>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["s", "a", "r", "s_next"] {
        return Err(Error::Parse(format!("dataset header must be s,a,r,s_next, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let transitions = r
        .deserialize::<TransitionRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(Transition { s: row.s, a: row.a, r: T::lit(row.r), s_next: row.s_next })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(transitions))
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    read_dataset_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Writes a header plus rows of already formatted cells.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Dimension(format!("row has {} cells, header {}", row.len(), header.len())));
        }
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV into its header and string rows.
pub fn read_table<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()).map_err(csv_err))
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}
