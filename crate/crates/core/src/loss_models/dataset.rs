use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};

/// Features, targets and a binary group attribute. Group `0` is the
/// minority: `1 <= n0 <= n1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedDataset {
    features: Matrix,
    targets: Vec<f64>,
    group: Vec<u8>,
    n0: usize,
    n1: usize,
}

impl GroupedDataset {
    pub fn new(features: Matrix, targets: Vec<f64>, group: Vec<u8>) -> Result<Self> {
        let n = features.rows();
        if features.cols() == 0 {
            return Err(Error::InvalidDataset("feature dimension must be at least 1".into()));
        }
        if targets.len() != n || group.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows, {} targets, {} group labels",
                n,
                targets.len(),
                group.len()
            )));
        }
        if !features.is_finite() || !all_finite(&targets) {
            return Err(Error::NonFinite("dataset"));
        }
        if let Some(bad) = group.iter().find(|&&a| a > 1) {
            return Err(Error::InvalidDataset(format!("group label {bad} is not 0 or 1")));
        }
        let n0 = group.iter().filter(|&&a| a == 0).count();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            return Err(Error::InvalidDataset(format!(
                "both groups must be nonempty (n0 = {n0}, n1 = {n1})"
            )));
        }
        if n0 > n1 {
            return Err(Error::InvalidDataset(format!(
                "group 0 must be the minority (n0 = {n0} > n1 = {n1})"
            )));
        }
        Ok(Self {
            features,
            targets,
            group,
            n0,
            n1,
        })
    }

    /// One-dimensional data whose least-squares split loss is, after
    /// scaling by `n / m`, the toy loss with imbalance `k / m`: `m` majority
    /// rows `(x = 1, y = 0)` and `k` minority rows `(x = 1, y = c)`.
    pub fn toy_embedding(m: usize, k: usize, c: f64) -> Result<Self> {
        let n = m + k;
        let features = Matrix::from_row_major(n, 1, vec![1.0; n])?;
        let mut targets = vec![0.0; m];
        targets.extend(std::iter::repeat_n(c, k));
        let mut group = vec![1u8; m];
        group.extend(std::iter::repeat_n(0u8, k));
        Self::new(features, targets, group)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn groups(&self) -> &[u8] {
        &self.group
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Row indices of one group, in dataset order.
    pub fn indices(&self, group: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.group[i] == group).collect()
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[cols.len() - 2] != "y" || cols[cols.len() - 1] != "a" {
            return Err(Error::InvalidDataset("header must be x_0,...,x_{d-1},y,a".into()));
        }
        let d = cols.len() - 2;
        for (j, name) in cols[..d].iter().enumerate() {
            if *name != format!("x_{j}") {
                return Err(Error::InvalidDataset(format!(
                    "column {j} is `{name}`, expected `x_{j}`"
                )));
            }
        }
        let mut data = Vec::new();
        let mut targets = Vec::new();
        let mut group = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidDataset(format!("record {}: `{s}`: {e}", line + 1)))
            };
            for field in rec.iter().take(d) {
                data.push(parse(field)?);
            }
            targets.push(parse(&rec[d])?);
            group.push(match rec[d + 1].trim() {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(Error::InvalidDataset(format!(
                        "record {}: group `{other}` is not 0 or 1",
                        line + 1
                    )))
                }
            });
        }
        let n = targets.len();
        Self::new(Matrix::from_row_major(n, d, data)?, targets, group)
    }

    pub fn to_csv_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        header.push("a".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.targets[i].to_string());
            rec.push(self.group[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_csv_writer(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
