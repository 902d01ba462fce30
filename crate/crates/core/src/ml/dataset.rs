//! Subjects × angle features, read from and written to CSV with header
//! `subject_id,label,<angle codes...>`. Label 1 is the positive (ASD) class,
//! 0 the control class.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::bifurcation::AngleCode;
use crate::error::{Error, Result};

pub const CONTROL: u8 = 0;
pub const POSITIVE: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub features: Vec<AngleCode>,
    /// n × m, row per subject.
    pub data: DMatrix<f64>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, labels: Vec<u8>, features: Vec<AngleCode>, data: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if n < 2 {
            return Err(Error::Dataset(format!("need at least 2 subjects, found {n}")));
        }
        if labels.len() != n || data.nrows() != n || data.ncols() != features.len() {
            return Err(Error::Dataset(format!(
                "shape mismatch: {n} ids, {} labels, {}x{} data for {} features",
                labels.len(),
                data.nrows(),
                data.ncols(),
                features.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Dataset(format!("label {l} is not 0 or 1")));
        }
        for (j, f) in features.iter().enumerate() {
            if features[..j].contains(f) {
                return Err(Error::Dataset(format!("duplicate column {f}")));
            }
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!(
                "non-finite value for subject {} column {}",
                ids[i % n],
                features[i / n]
            )));
        }
        Ok(Self {
            ids,
            labels,
            features,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.features.len()
    }

    /// (controls, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == POSITIVE).count();
        (self.n() - pos, pos)
    }

    pub fn require_both_classes(&self) -> Result<()> {
        match self.class_counts() {
            (0, _) | (_, 0) => Err(Error::SingleClass),
            _ => Ok(()),
        }
    }

    pub fn column(&self, code: &AngleCode) -> Option<usize> {
        self.features.iter().position(|f| f == code)
    }

    pub fn columns(&self, codes: &[AngleCode]) -> Result<Vec<usize>> {
        codes
            .iter()
            .map(|c| self.column(c).ok_or_else(|| Error::MissingAngle(c.to_string())))
            .collect()
    }

    /// Data restricted to `cols`, in that order.
    pub fn select(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), cols.len(), |i, j| self.data[(i, cols[j])])
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "subject_id" || &header[1] != "label" {
            return Err(Error::Dataset(
                "header must be subject_id,label followed by angle codes".into(),
            ));
        }
        let features = header
            .iter()
            .skip(2)
            .map(|h| h.parse::<AngleCode>())
            .collect::<Result<Vec<_>>>()?;
        let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let id = rec[0].to_string();
            let label = match &rec[1] {
                "0" => CONTROL,
                "1" => POSITIVE,
                other => return Err(Error::Dataset(format!("line {line}: label {other:?} is not 0 or 1"))),
            };
            for (j, cell) in rec.iter().skip(2).enumerate() {
                if cell.is_empty() {
                    return Err(Error::Dataset(format!("line {line}: missing value for {}", features[j])));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Dataset(format!("line {line}: {cell:?} is not a number")))?;
                values.push(v);
            }
            ids.push(id);
            labels.push(label);
        }
        let n = ids.len();
        let m = features.len();
        let data = DMatrix::from_row_slice(n, m, &values);
        Self::new(ids, labels, features, data)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["subject_id".to_string(), "label".to_string()];
        header.extend(self.features.iter().map(|f| f.to_string()));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.ids[i].clone(), self.labels[i].to_string()];
            rec.extend((0..self.m()).map(|j| self.data[(i, j)].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
