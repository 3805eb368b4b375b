use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamLayout, ParameterState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub chain: usize,
    pub block: String,
    pub rate: f64,
}

/// Retained draws, one row per draw, chains stacked in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draws {
    pub names: Vec<String>,
    pub n_chains: usize,
    chain: Vec<usize>,
    iter: Vec<usize>,
    values: Vec<f64>,
    pub spec: Option<ModelSpec>,
    pub n_groups: usize,
    pub acceptance: Vec<BlockAcceptance>,
    pub warnings: Vec<String>,
}

impl Draws {
    pub fn empty(names: Vec<String>, n_chains: usize) -> Self {
        Self {
            names,
            n_chains,
            chain: Vec::new(),
            iter: Vec::new(),
            values: Vec::new(),
            spec: None,
            n_groups: 0,
            acceptance: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Draws from per-chain sample vectors of a single parameter.
    pub fn from_chains(name: &str, chains: &[Vec<f64>]) -> Self {
        let mut d = Self::empty(vec![name.to_string()], chains.len());
        for (c, xs) in chains.iter().enumerate() {
            for (t, &x) in xs.iter().enumerate() {
                d.push(c, t + 1, &[x]);
            }
        }
        d
    }

    pub fn push(&mut self, chain: usize, iter: usize, row: &[f64]) {
        assert_eq!(row.len(), self.names.len(), "row width");
        self.chain.push(chain);
        self.iter.push(iter);
        self.values.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }
    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.names.len()
    }
    pub fn chain_of(&self, s: usize) -> usize {
        self.chain[s]
    }
    pub fn iter_of(&self, s: usize) -> usize {
        self.iter[s]
    }
    pub fn row(&self, s: usize) -> &[f64] {
        let d = self.dim();
        &self.values[s * d..(s + 1) * d]
    }
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.values[s * d..(s + 1) * d]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Invalid(format!("no parameter named '{name}' in draws")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.index_of(name)?;
        Ok(self.column_at(k))
    }

    pub fn column_at(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|s| self.row(s)[k]).collect()
    }

    /// Samples of parameter `k` split by chain.
    pub fn chains_at(&self, k: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains];
        for s in 0..self.len() {
            out[self.chain[s]].push(self.row(s)[k]);
        }
        out
    }

    /// Full rows grouped by chain.
    pub fn chain_rows(&self) -> Vec<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); self.n_chains];
        for s in 0..self.len() {
            out[self.chain[s]].push(self.row(s).to_vec());
        }
        out
    }

    /// The model state of draw `s`; needs the spec echo.
    pub fn state(&self, s: usize) -> Result<ParameterState> {
        let spec = self.spec.as_ref().ok_or_else(|| Error::Invalid("draws carry no model spec".into()))?;
        ParamLayout::new(spec, self.n_groups).unflatten(self.row(s))
    }

    /// `chain,iter,<names...>` with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "chain,iter")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for s in 0..self.len() {
            write!(w, "{},{}", self.chain[s], self.iter[s])?;
            for v in self.row(s) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses the format written by [`Draws::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let io = |e: std::io::Error| Error::Invalid(format!("reading draws: {e}"));
        let header = lines.next().ok_or_else(|| Error::Invalid("draws file is empty".into()))?.map_err(io)?;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 2 || cols[0] != "chain" || cols[1] != "iter" {
            return Err(Error::Invalid("draws header must start with chain,iter".into()));
        }
        let mut d = Self::empty(cols[2..].iter().map(|s| s.to_string()).collect(), 0);
        let mut row = Vec::with_capacity(d.dim());
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Invalid(format!("draws line {}: {what}", ln + 2));
            let mut f = line.trim_end().split(',');
            let chain: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad chain id"))?;
            let iter: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad iteration"))?;
            row.clear();
            for cell in f {
                row.push(cell.parse::<f64>().map_err(|_| bad(&format!("non-numeric value '{cell}'")))?);
            }
            if row.len() != d.dim() {
                return Err(bad(&format!("{} values, expected {}", row.len(), d.dim())));
            }
            d.n_chains = d.n_chains.max(chain + 1);
            d.push(chain, iter, &row);
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut d = Draws::empty(vec!["a".into(), "b".into()], 2);
        d.push(0, 5, &[0.1, -1.0 / 3.0]);
        d.push(1, 5, &[1e-300, 12345.678901234567]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Draws::read_csv(&buf[..]).unwrap();
        assert_eq!(back.names, d.names);
        assert_eq!(back.n_chains, 2);
        for s in 0..2 {
            assert_eq!(back.row(s), d.row(s));
        }
        assert!(Draws::read_csv(&b"chain,iter,a\n0,1,x\n"[..]).is_err());
    }
}
