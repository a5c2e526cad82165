use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::Rng as _;

use crate::composition::Subset;
use crate::error::{Error, Result};
use crate::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub categories: Vec<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Self {
        Column { name: name.into(), categories }
    }

    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }
}

/// Row-major table of category indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalDataset {
    columns: Vec<Column>,
    cells: Vec<u16>,
    rows: usize,
    label: Option<usize>,
}

impl CategoricalDataset {
    pub fn new(columns: Vec<Column>, cells: Vec<u16>, label: Option<usize>) -> Result<Self> {
        let width = columns.len();
        if width == 0 {
            return Err(Error::EmptyData("dataset has no columns".into()));
        }
        if cells.len() % width != 0 {
            return Err(Error::DimensionMismatch { expected: width, actual: cells.len() % width });
        }
        if let Some(l) = label {
            if l >= width {
                return Err(Error::InvalidArgument(format!("label column {l} out of range")));
            }
        }
        for c in &columns {
            if c.categories.is_empty() || c.categories.len() > u16::MAX as usize {
                return Err(Error::InvalidArgument(format!("column {} has {} categories", c.name, c.categories.len())));
            }
        }
        for (i, &v) in cells.iter().enumerate() {
            let col = &columns[i % width];
            if v as usize >= col.cardinality() {
                return Err(Error::InvalidArgument(format!(
                    "row {} column {}: index {v} >= {}",
                    i / width,
                    col.name,
                    col.cardinality()
                )));
            }
        }
        let rows = cells.len() / width;
        Ok(CategoricalDataset { columns, cells, rows, label })
    }

    /// A dataset with the same columns and no rows.
    pub fn empty_like(&self) -> Self {
        CategoricalDataset { columns: self.columns.clone(), cells: Vec::new(), rows: 0, label: self.label }
    }

    pub(crate) fn from_parts_unchecked(columns: Vec<Column>, cells: Vec<u16>, label: Option<usize>) -> Self {
        let rows = cells.len() / columns.len();
        CategoricalDataset { columns, cells, rows, label }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, r: usize) -> &[u16] {
        let w = self.width();
        &self.cells[r * w..(r + 1) * w]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u16]> {
        self.cells.chunks_exact(self.width())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn label(&self) -> Result<usize> {
        self.label.ok_or_else(|| Error::UnknownColumn("label column missing".into()))
    }

    pub fn with_label(mut self, name: &str) -> Result<Self> {
        self.label = Some(self.column_index(name)?);
        Ok(self)
    }

    pub fn same_schema(&self, other: &Self) -> bool {
        self.columns == other.columns && self.label == other.label
    }
}

impl Subset for CategoricalDataset {
    fn row_count(&self) -> usize {
        self.rows
    }

    fn subset(&self, rows: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(rows.len() * self.width());
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        CategoricalDataset::from_parts_unchecked(self.columns.clone(), cells, self.label)
    }
}

/// How one CSV column becomes a categorical column.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// Distinct values, sorted.
    Keep,
    Drop,
    /// Half-open bins between consecutive edges. Values below the first edge
    /// fall in the first bin; values at or above the last edge fall in an
    /// extra `>=last` bin when `overflow` is set, else in the last bin.
    Bins { edges: Vec<f64>, overflow: bool },
    /// "positive" or "not positive".
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub transforms: Vec<(String, Transform)>,
    pub label: String,
    pub missing_markers: Vec<String>,
    /// Trailing characters removed from every value before it is read.
    pub strip_suffix: Option<char>,
}

impl Schema {
    /// Every column kept as-is.
    pub fn plain(label: &str) -> Self {
        Schema {
            transforms: Vec::new(),
            label: label.to_string(),
            missing_markers: vec!["?".into(), String::new()],
            strip_suffix: None,
        }
    }

    /// Preprocessing of the UCI Adult census extract.
    pub fn adult() -> Self {
        let decades = |lo: i32, hi: i32| (lo..=hi).step_by(10).map(f64::from).collect::<Vec<_>>();
        Schema {
            transforms: vec![
                ("fnlwgt".into(), Transform::Drop),
                ("educational-num".into(), Transform::Drop),
                ("age".into(), Transform::Bins { edges: decades(10, 90), overflow: false }),
                ("hours-per-week".into(), Transform::Bins { edges: decades(0, 90), overflow: true }),
                ("capital-gain".into(), Transform::Positive),
                ("capital-loss".into(), Transform::Positive),
            ],
            label: "income".into(),
            missing_markers: vec!["?".into(), String::new()],
            strip_suffix: Some('.'),
        }
    }

    fn transform(&self, name: &str) -> &Transform {
        self.transforms.iter().find(|(n, _)| n == name).map(|(_, t)| t).unwrap_or(&Transform::Keep)
    }
}

fn bin_labels(edges: &[f64], overflow: bool) -> Vec<String> {
    let mut labels: Vec<String> = edges.windows(2).map(|w| format!("[{},{})", w[0], w[1])).collect();
    if overflow {
        labels.push(format!(">={}", edges[edges.len() - 1]));
    }
    labels
}

fn bin_index(x: f64, edges: &[f64], overflow: bool) -> usize {
    let n = edges.len() - 1;
    if x >= edges[n] {
        return if overflow { n } else { n - 1 };
    }
    edges[1..n].iter().take_while(|&&e| x >= e).count()
}

/// Reads a CSV with a header row and applies `schema`.
pub fn load_and_discretize(path: &Path, schema: &Schema) -> Result<CategoricalDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_and_discretize(file, schema)
}

pub fn read_and_discretize<R: std::io::Read>(input: R, schema: &Schema) -> Result<CategoricalDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for (name, _) in &schema.transforms {
        if !header.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }
    if !header.contains(&schema.label) {
        return Err(Error::UnknownColumn(schema.label.clone()));
    }
    for t in schema.transforms.iter().map(|(_, t)| t) {
        if let Transform::Bins { edges, .. } = t {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument(format!("bin edges {edges:?}")));
            }
        }
    }
    let kept: Vec<usize> = (0..header.len()).filter(|&i| *schema.transform(&header[i]) != Transform::Drop).collect();

    let mut raw: Vec<Vec<String>> = Vec::new();
    'records: for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse(format!("row {}: {} fields, expected {}", line + 1, record.len(), header.len())));
        }
        let mut row = Vec::with_capacity(kept.len());
        for &i in &kept {
            let mut v = record[i].to_string();
            if let Some(c) = schema.strip_suffix {
                if v.ends_with(c) {
                    v.pop();
                }
            }
            if schema.missing_markers.contains(&v) {
                continue 'records;
            }
            row.push(v);
        }
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(Error::EmptyData("no complete rows".into()));
    }

    let mut columns = Vec::with_capacity(kept.len());
    let mut cells = vec![0u16; raw.len() * kept.len()];
    for (j, &i) in kept.iter().enumerate() {
        let name = &header[i];
        let (categories, index): (Vec<String>, Box<dyn Fn(&str) -> Result<usize>>) = match schema.transform(name) {
            Transform::Keep => {
                let distinct: BTreeSet<&str> = raw.iter().map(|r| r[j].as_str()).collect();
                let categories: Vec<String> = distinct.into_iter().map(str::to_string).collect();
                let lookup: HashMap<String, usize> =
                    categories.iter().enumerate().map(|(k, c)| (c.clone(), k)).collect();
                (categories, Box::new(move |v| Ok(lookup[v])))
            }
            Transform::Bins { edges, overflow } => {
                let (edges, overflow) = (edges.clone(), *overflow);
                let col = name.clone();
                (
                    bin_labels(&edges, overflow),
                    Box::new(move |v| {
                        let x: f64 = v.parse().map_err(|_| Error::Parse(format!("column {col}: {v:?} is not a number")))?;
                        Ok(bin_index(x, &edges, overflow))
                    }),
                )
            }
            Transform::Positive => {
                let col = name.clone();
                (
                    vec!["not positive".into(), "positive".into()],
                    Box::new(move |v| {
                        let x: f64 = v.parse().map_err(|_| Error::Parse(format!("column {col}: {v:?} is not a number")))?;
                        Ok(usize::from(x > 0.0))
                    }),
                )
            }
            Transform::Drop => unreachable!("dropped columns are filtered"),
        };
        for (r, row) in raw.iter().enumerate() {
            cells[r * kept.len() + j] = index(&row[j])? as u16;
        }
        columns.push(Column::new(name.clone(), categories));
    }
    let label = columns.iter().position(|c| c.name == schema.label);
    CategoricalDataset::new(columns, cells, label)
}

/// Shape of the generated census-like table: (name, categories).
const GENERATED_COLUMNS: [(&str, usize); 13] = [
    ("age", 8),
    ("workclass", 7),
    ("education", 16),
    ("marital-status", 7),
    ("occupation", 14),
    ("relationship", 6),
    ("race", 5),
    ("gender", 2),
    ("capital-gain", 2),
    ("capital-loss", 2),
    ("hours-per-week", 10),
    ("native-country", 12),
    ("income", 2),
];

pub const DEFAULT_GENERATED_ROWS: usize = 20_000;
const STRUCTURE_SEED: u64 = 0xad17;

/// Generates a 13-column categorical table with the Adult column layout.
///
/// A hidden three-level factor drives both the label and every feature, so
/// features carry label information and are correlated with each other.
/// The structure is fixed; `seed` only drives the rows.
pub fn generate_dataset(rows: usize, seed: u64) -> Result<CategoricalDataset> {
    if rows == 0 {
        return Err(Error::EmptyData("zero rows requested".into()));
    }
    let mut structure = crate::seeded_rng(STRUCTURE_SEED);
    let label_col = GENERATED_COLUMNS.len() - 1;
    let mut columns = Vec::new();
    // logits[col][factor][label][category]
    let mut cdfs: Vec<Vec<Vec<Vec<f64>>>> = Vec::new();
    for (name, k) in GENERATED_COLUMNS {
        let categories = if name == "income" {
            vec!["<=50K".to_string(), ">50K".to_string()]
        } else {
            (0..k).map(|c| format!("{name}-{c}")).collect()
        };
        columns.push(Column::new(name, categories));
        if name == "income" {
            cdfs.push(Vec::new());
            continue;
        }
        let base: Vec<f64> = (0..k).map(|_| structure.random_range(-1.5..1.5)).collect();
        let by_label: Vec<f64> = (0..k).map(|_| structure.random_range(-1.0..1.0)).collect();
        let by_factor: Vec<Vec<f64>> = (0..3).map(|_| (0..k).map(|_| structure.random_range(-1.2..1.2)).collect()).collect();
        let mut per_factor = Vec::new();
        for f in 0..3 {
            let mut per_label = Vec::new();
            for y in 0..2 {
                let w: Vec<f64> =
                    (0..k).map(|c| (base[c] + by_label[c] * y as f64 + by_factor[f][c]).exp()).collect();
                let total: f64 = w.iter().sum();
                let mut acc = 0.0;
                per_label.push(w.iter().map(|x| {
                    acc += x / total;
                    acc
                }).collect());
            }
            per_factor.push(per_label);
        }
        cdfs.push(per_factor);
    }
    let factor_cdf = [0.35, 0.75, 1.0];
    let p_label = [0.08, 0.25, 0.55];

    let mut rng = crate::seeded_rng(seed);
    let width = columns.len();
    let mut cells = vec![0u16; rows * width];
    for r in 0..rows {
        let u: f64 = rng.random();
        let f = factor_cdf.iter().position(|&c| u < c).unwrap_or(2);
        let y = usize::from(rng.random::<f64>() < p_label[f]);
        for j in 0..width {
            let v = if j == label_col {
                y
            } else {
                let cdf = &cdfs[j][f][y];
                let u: f64 = rng.random();
                cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
            };
            cells[r * width + j] = v as u16;
        }
    }
    CategoricalDataset::new(columns, cells, Some(label_col))
}

/// Row indices of a train, validation and test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// 40/40/20 split. Train is a uniform random subset; validation and test
/// are drawn from the rest stratified by label.
pub fn split(dataset: &CategoricalDataset, seed: u64) -> Result<SplitIndices> {
    let label = dataset.label()?;
    let n = dataset.rows();
    let n_train = (0.4 * n as f64).round() as usize;
    let n_val = (0.4 * n as f64).round() as usize;
    let n_rest = n - n_train;

    let mut rng: Rng = crate::seeded_rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let train = order[..n_train].to_vec();
    let rest = &order[n_train..];

    let k = dataset.columns()[label].cardinality();
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &r in rest {
        by_label[dataset.row(r)[label] as usize].push(r);
    }
    // Largest remainder allocation of validation rows to label strata.
    let share = if n_rest == 0 { 0.0 } else { n_val as f64 / n_rest as f64 };
    let mut quota: Vec<usize> = by_label.iter().map(|g| (g.len() as f64 * share).floor() as usize).collect();
    let mut remainders: Vec<(f64, usize)> =
        by_label.iter().enumerate().map(|(i, g)| (g.len() as f64 * share - quota[i] as f64, i)).collect();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = n_val - quota.iter().sum::<usize>();
    for &(_, i) in remainders.iter().take(missing) {
        quota[i] += 1;
    }
    let mut validation = Vec::with_capacity(n_val);
    let mut test = Vec::with_capacity(n_rest - n_val);
    for (g, q) in by_label.iter().zip(quota) {
        validation.extend_from_slice(&g[..q]);
        test.extend_from_slice(&g[q..]);
    }
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, validation, test })
}
