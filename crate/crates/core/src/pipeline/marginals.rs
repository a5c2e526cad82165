use crate::accounting::Sensitivity;
use crate::error::{Error, Result};

use super::dataset::CategoricalDataset;

/// Counts over the value combinations of one to three columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalQuery {
    columns: Vec<usize>,
    shape: Vec<usize>,
}

impl MarginalQuery {
    pub fn new(dataset: &CategoricalDataset, columns: Vec<usize>) -> Result<Self> {
        if columns.is_empty() || columns.len() > 3 {
            return Err(Error::InvalidArgument(format!("marginal over {} columns", columns.len())));
        }
        let mut seen = columns.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != columns.len() {
            return Err(Error::InvalidArgument(format!("repeated column in {columns:?}")));
        }
        let mut shape = Vec::with_capacity(columns.len());
        for &c in &columns {
            let col = dataset
                .columns()
                .get(c)
                .ok_or_else(|| Error::UnknownColumn(format!("column index {c}")))?;
            shape.push(col.cardinality());
        }
        Ok(MarginalQuery { columns, shape })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn cell_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Row-major cell of `row`, the last column varying fastest.
    pub fn cell_of(&self, row: &[u16]) -> usize {
        self.columns.iter().zip(&self.shape).fold(0, |acc, (&c, &k)| acc * k + row[c] as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub query: MarginalQuery,
    pub counts: Vec<f64>,
}

impl MarginalTable {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// The label's one-way marginal followed by every (feature, label) pair.
pub fn label_pair_queries(dataset: &CategoricalDataset) -> Result<Vec<MarginalQuery>> {
    let label = dataset.label()?;
    let mut queries = vec![MarginalQuery::new(dataset, vec![label])?];
    for j in (0..dataset.width()).filter(|&j| j != label) {
        queries.push(MarginalQuery::new(dataset, vec![j, label])?);
    }
    Ok(queries)
}

/// Exact counts of every query and their joint l2 sensitivity `sqrt(Q)`
/// under adding or removing one row.
pub fn evaluate_marginals(dataset: &CategoricalDataset, queries: &[MarginalQuery]) -> Result<(Vec<MarginalTable>, Sensitivity)> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no marginal queries".into()));
    }
    let mut tables: Vec<MarginalTable> =
        queries.iter().map(|q| MarginalTable { query: q.clone(), counts: vec![0.0; q.cell_count()] }).collect();
    for row in dataset.iter_rows() {
        for t in &mut tables {
            let cell = t.query.cell_of(row);
            t.counts[cell] += 1.0;
        }
    }
    Ok((tables, Sensitivity::new((queries.len() as f64).sqrt())?))
}

pub fn flatten(tables: &[MarginalTable]) -> Vec<f64> {
    tables.iter().flat_map(|t| t.counts.iter().copied()).collect()
}

pub fn unflatten(queries: &[MarginalQuery], values: &[f64]) -> Result<Vec<MarginalTable>> {
    let expected: usize = queries.iter().map(MarginalQuery::cell_count).sum();
    if values.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: values.len() });
    }
    let mut offset = 0;
    Ok(queries
        .iter()
        .map(|q| {
            let n = q.cell_count();
            let t = MarginalTable { query: q.clone(), counts: values[offset..offset + n].to_vec() };
            offset += n;
            t
        })
        .collect())
}
