//! Paired `(θ, x)` training data and its CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::SummaryStats;
use crate::theta::ThetaVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub theta: ThetaVector,
    pub x: SummaryStats,
    /// Proposal round that produced the pair; 0 is the prior round.
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    pairs: Vec<TrainingPair>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        TrainingSet {
            dim,
            pairs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn push(&mut self, theta: ThetaVector, x: SummaryStats, round: u32) -> Result<()> {
        Error::check_dim(self.dim, theta.len())?;
        Error::check_dim(self.dim, x.len())?;
        self.pairs.push(TrainingPair { theta, x, round });
        Ok(())
    }

    pub fn extend(&mut self, other: TrainingSet) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        Error::check_dim(self.dim, other.dim)?;
        self.pairs.extend(other.pairs);
        Ok(())
    }

    /// Relabels every pair with `round`.
    pub fn with_round(mut self, round: u32) -> Self {
        for p in &mut self.pairs {
            p.round = round;
        }
        self
    }

    pub fn thetas(&self) -> impl Iterator<Item = &ThetaVector> {
        self.pairs.iter().map(|p| &p.theta)
    }

    pub fn header(dim: usize) -> Vec<String> {
        (1..=dim)
            .map(|k| format!("theta_{k}"))
            .chain((1..=dim).map(|k| format!("x_{k}")))
            .chain(std::iter::once("round".to_string()))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header(self.dim))?;
        for p in &self.pairs {
            let row: Vec<String> = p
                .theta
                .iter()
                .chain(p.x.iter())
                .map(|v| v.to_string())
                .chain(std::iter::once(p.round.to_string()))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 3 || header.len() % 2 == 0 {
            return Err(Error::Parse(format!("bad training-set header: {header:?}")));
        }
        let dim = (header.len() - 1) / 2;
        let expected = Self::header(dim);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse(format!(
                "training-set header {header:?} does not match {expected:?}"
            )));
        }
        let mut set = TrainingSet::new(dim);
        for rec in r.records() {
            let rec = rec?;
            let nums = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
                range
                    .map(|k| {
                        rec[k]
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("field `{}`: {e}", &rec[k])))
                    })
                    .collect()
            };
            let theta = ThetaVector::new(nums(0..dim)?)?;
            let x = SummaryStats::new(nums(dim..2 * dim)?);
            let round = rec[2 * dim]
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("round `{}`: {e}", &rec[2 * dim])))?;
            set.push(theta, x, round)?;
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_writes_header_only() {
        let mut buf = Vec::new();
        TrainingSet::new(3).write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "theta_1,theta_2,theta_3,x_1,x_2,x_3,round\n"
        );
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut set = TrainingSet::new(2);
        set.push(
            ThetaVector::new(vec![0.1 + 0.2, -1e-300]).unwrap(),
            SummaryStats::new(vec![3.0, 2.0 - (-0.75f64).exp()]),
            0,
        )
        .unwrap();
        set.push(ThetaVector::zeros(2), SummaryStats::zeros(2), 4).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        assert_eq!(TrainingSet::read_csv(&buf[..]).unwrap(), set);
    }

    #[test]
    fn rejects_mismatched_rows() {
        let mut set = TrainingSet::new(2);
        assert!(set.push(ThetaVector::zeros(3), SummaryStats::zeros(2), 0).is_err());
        assert!(TrainingSet::read_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
    }
}
