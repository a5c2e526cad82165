use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::Rng;

use super::dataset::CategoricalDataset;
use super::marginals::MarginalTable;

fn clamped_weights(counts: &[f64], what: &str) -> Vec<f64> {
    let w: Vec<f64> = counts.iter().map(|&c| if c > 0.0 { c } else { 0.0 }).collect();
    if w.iter().sum::<f64>() > 0.0 {
        w
    } else {
        log::warn!("{what}: no positive mass after clamping, sampling uniformly");
        vec![1.0; counts.len()]
    }
}

/// Sampler that draws the label from its noisy one-way marginal and each
/// feature from its noisy (feature, label) conditional.
#[derive(Debug, Clone)]
pub struct NaiveBayesSampler {
    like: CategoricalDataset,
    label_dist: WeightedIndex<f64>,
    /// `feature_dists[j][y]`, `None` at the label column.
    feature_dists: Vec<Option<Vec<WeightedIndex<f64>>>>,
}

impl NaiveBayesSampler {
    /// `like` supplies the column layout. Negative counts are clamped to
    /// zero; a distribution with no mass left falls back to uniform.
    pub fn from_marginals(like: &CategoricalDataset, tables: &[MarginalTable]) -> Result<Self> {
        let label = like.label()?;
        let k_label = like.columns()[label].cardinality();
        let label_table = tables
            .iter()
            .find(|t| t.query.columns() == [label])
            .ok_or_else(|| Error::Precondition("label marginal missing".into()))?;
        let label_dist = WeightedIndex::new(clamped_weights(&label_table.counts, "label marginal"))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;

        let mut feature_dists = Vec::with_capacity(like.width());
        for j in 0..like.width() {
            if j == label {
                feature_dists.push(None);
                continue;
            }
            let name = &like.columns()[j].name;
            let k = like.columns()[j].cardinality();
            let table = tables
                .iter()
                .find(|t| t.query.columns() == [j, label] || t.query.columns() == [label, j])
                .ok_or_else(|| Error::Precondition(format!("pair marginal ({name}, label) missing")))?;
            let label_first = table.query.columns()[0] == label;
            let mut per_label = Vec::with_capacity(k_label);
            for y in 0..k_label {
                let counts: Vec<f64> = (0..k)
                    .map(|v| if label_first { table.counts[y * k + v] } else { table.counts[v * k_label + y] })
                    .collect();
                let w = clamped_weights(&counts, &format!("{name} given label {y}"));
                per_label.push(WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(e.to_string()))?);
            }
            feature_dists.push(Some(per_label));
        }
        Ok(NaiveBayesSampler { like: like.empty_like(), label_dist, feature_dists })
    }

    pub fn sample(&self, n_rows: usize, rng: &mut Rng) -> CategoricalDataset {
        let label = self.like.label().expect("checked at construction");
        let width = self.like.width();
        let mut cells = vec![0u16; n_rows * width];
        for row in cells.chunks_exact_mut(width) {
            let y = self.label_dist.sample(rng);
            row[label] = y as u16;
            for (j, dists) in self.feature_dists.iter().enumerate() {
                if let Some(d) = dists {
                    row[j] = d[y].sample(rng) as u16;
                }
            }
        }
        CategoricalDataset::from_parts_unchecked(self.like.columns().to_vec(), cells, Some(label))
    }
}

/// Synthetic rows from noisy label and (feature, label) marginals.
pub fn synthesize(like: &CategoricalDataset, tables: &[MarginalTable], n_rows: usize, rng: &mut Rng) -> Result<CategoricalDataset> {
    Ok(NaiveBayesSampler::from_marginals(like, tables)?.sample(n_rows, rng))
}

/// Categorical naive Bayes with add-one smoothing.
#[derive(Debug, Clone)]
pub struct NaiveBayes {
    label: usize,
    log_prior: Vec<f64>,
    /// `log_likelihood[j][y * k_j + v]`.
    log_likelihood: Vec<Vec<f64>>,
}

impl NaiveBayes {
    pub fn fit(data: &CategoricalDataset) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::EmptyData("no training rows".into()));
        }
        let label = data.label()?;
        let cards: Vec<usize> = data.columns().iter().map(|c| c.cardinality()).collect();
        let k_label = cards[label];
        let mut class_counts = vec![0usize; k_label];
        let mut counts: Vec<Vec<usize>> = cards.iter().map(|&k| vec![0; k * k_label]).collect();
        for row in data.iter_rows() {
            let y = row[label] as usize;
            class_counts[y] += 1;
            for (j, &v) in row.iter().enumerate() {
                counts[j][y * cards[j] + v as usize] += 1;
            }
        }
        let n = data.rows() as f64;
        let log_prior = class_counts.iter().map(|&c| ((c as f64 + 1.0) / (n + k_label as f64)).ln()).collect();
        let log_likelihood = counts
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == label {
                    return Vec::new();
                }
                let k = cards[j];
                c.iter()
                    .enumerate()
                    .map(|(i, &x)| ((x as f64 + 1.0) / (class_counts[i / k] as f64 + k as f64)).ln())
                    .collect()
            })
            .collect();
        Ok(NaiveBayes { label, log_prior, log_likelihood })
    }

    /// Most probable label; ties go to the lower index.
    pub fn predict(&self, row: &[u16]) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for (y, &prior) in self.log_prior.iter().enumerate() {
            let mut score = prior;
            for (j, ll) in self.log_likelihood.iter().enumerate() {
                if j != self.label {
                    let k = ll.len() / self.log_prior.len();
                    score += ll[y * k + row[j] as usize];
                }
            }
            if score > best.0 {
                best = (score, y);
            }
        }
        best.1
    }

    pub fn accuracy(&self, eval: &CategoricalDataset) -> Result<f64> {
        if eval.rows() == 0 {
            return Err(Error::EmptyData("no evaluation rows".into()));
        }
        let label = eval.label()?;
        let hits = eval.iter_rows().filter(|r| self.predict(r) == r[label] as usize).count();
        Ok(hits as f64 / eval.rows() as f64)
    }
}

/// Trains on `synthetic` and returns accuracy on `eval`.
pub fn train_and_score(synthetic: &CategoricalDataset, eval: &CategoricalDataset) -> Result<f64> {
    if !synthetic.same_schema(eval) {
        return Err(Error::InvalidArgument("training and evaluation columns differ".into()));
    }
    NaiveBayes::fit(synthetic)?.accuracy(eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::{generate_dataset, Column};
    use crate::pipeline::marginals::{evaluate_marginals, label_pair_queries};
    use rand::Rng as _;

    fn two_column(cells: Vec<u16>) -> CategoricalDataset {
        let cols = vec![
            Column::new("x", vec!["a".into(), "b".into()]),
            Column::new("y", vec!["0".into(), "1".into()]),
        ];
        CategoricalDataset::new(cols, cells, Some(1)).unwrap()
    }

    #[test]
    fn zero_noise_marginals_are_reproduced() {
        let real = generate_dataset(20_000, 2).unwrap();
        let qs = label_pair_queries(&real).unwrap();
        let (tables, _) = evaluate_marginals(&real, &qs).unwrap();
        let n = 200_000;
        let synth = synthesize(&real, &tables, n, &mut crate::seeded_rng(5)).unwrap();
        for j in 0..real.width() {
            let k = real.columns()[j].cardinality();
            let freq = |d: &CategoricalDataset| {
                let mut f = vec![0.0; k];
                for r in d.iter_rows() {
                    f[r[j] as usize] += 1.0 / d.rows() as f64;
                }
                f
            };
            for (p, q) in freq(&real).iter().zip(freq(&synth)) {
                let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12;
                assert!((p - q).abs() <= tol, "column {j}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn label_frequency_follows_marginal() {
        let like = two_column(vec![0, 0]);
        let qs = label_pair_queries(&like).unwrap();
        let tables = vec![
            MarginalTable { query: qs[0].clone(), counts: vec![0.7, 0.3] },
            MarginalTable { query: qs[1].clone(), counts: vec![1.0, 1.0, 1.0, 1.0] },
        ];
        let s = synthesize(&like, &tables, 100_000, &mut crate::seeded_rng(1)).unwrap();
        let zeros = s.iter_rows().filter(|r| r[1] == 0).count() as f64 / 1e5;
        assert!((zeros - 0.7).abs() < 0.005, "{zeros}");
    }

    #[test]
    fn all_negative_marginal_falls_back_to_uniform() {
        let like = two_column(vec![0, 0]);
        let qs = label_pair_queries(&like).unwrap();
        let tables = vec![
            MarginalTable { query: qs[0].clone(), counts: vec![-3.0, -1.0] },
            MarginalTable { query: qs[1].clone(), counts: vec![-1.0, 0.0, -2.0, 0.0] },
        ];
        let s = synthesize(&like, &tables, 40_000, &mut crate::seeded_rng(1)).unwrap();
        let ones = s.iter_rows().filter(|r| r[1] == 1).count() as f64 / 4e4;
        let bs = s.iter_rows().filter(|r| r[0] == 1).count() as f64 / 4e4;
        assert!((ones - 0.5).abs() < 0.02 && (bs - 0.5).abs() < 0.02);
    }

    #[test]
    fn missing_pair_marginal_is_an_error() {
        let like = two_column(vec![0, 0]);
        let qs = label_pair_queries(&like).unwrap();
        let tables = vec![MarginalTable { query: qs[0].clone(), counts: vec![1.0, 1.0] }];
        assert!(matches!(synthesize(&like, &tables, 10, &mut crate::seeded_rng(1)), Err(Error::Precondition(_))));
    }

    #[test]
    fn single_label_scores_one() {
        let d = two_column(vec![0, 1, 1, 1, 0, 1]);
        assert_eq!(train_and_score(&d, &d).unwrap(), 1.0);
    }

    #[test]
    fn predictive_feature_scores_one() {
        let d = two_column(vec![0, 0, 1, 1, 0, 0, 1, 1, 1, 1]);
        assert_eq!(train_and_score(&d, &d).unwrap(), 1.0);
    }

    #[test]
    fn independent_labels_score_half() {
        let mut accs = Vec::new();
        for s in 0..20 {
            let mut rng = crate::seeded_rng(100 + s);
            let mut draw = |n: usize| {
                let cells: Vec<u16> = (0..2 * n).map(|_| rng.random_range(0..2u16)).collect();
                two_column(cells)
            };
            let (train, eval) = (draw(2000), draw(2000));
            accs.push(train_and_score(&train, &eval).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn empty_training_data() {
        let d = two_column(vec![0, 1]);
        assert!(matches!(train_and_score(&d.empty_like(), &d), Err(Error::EmptyData(_))));
    }
}
