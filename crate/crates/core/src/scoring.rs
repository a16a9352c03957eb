//! Cross-model z-score normalisation, category aggregation and ranking.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::metrics::{Category, Metric, MetricReport, Quantity};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("need at least 2 models to score, got {0}")]
    TooFewModels(usize),
    #[error("category `{0}` has no metrics")]
    EmptyCategory(Category),
    #[error("metric `{0}` is assigned to more than one category")]
    DuplicateMetric(Metric),
    #[error("duplicate model name `{0}`")]
    DuplicateModel(String),
}

/// Which metrics feed which category score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub entries: Vec<(Category, Vec<Metric>)>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        let mut entries = Vec::new();
        for c in Category::ALL {
            let ms = Metric::ALL.into_iter().filter(|m| m.category() == c).collect();
            entries.push((c, ms));
        }
        Self { entries }
    }
}

impl CategoryMap {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let mut seen: Vec<Metric> = Vec::new();
        for (c, ms) in &self.entries {
            if ms.is_empty() {
                return Err(ScoreError::EmptyCategory(*c));
            }
            for m in ms {
                if seen.contains(m) {
                    return Err(ScoreError::DuplicateMetric(*m));
                }
                seen.push(*m);
            }
        }
        Ok(())
    }

    pub fn categories(&self) -> Vec<Category> {
        self.entries.iter().map(|(c, _)| *c).collect()
    }

    pub fn metrics(&self) -> Vec<Metric> {
        self.entries.iter().flat_map(|(_, ms)| ms.iter().copied()).collect()
    }

    pub fn category_of(&self, m: Metric) -> Option<Category> {
        self.entries.iter().find(|(_, ms)| ms.contains(&m)).map(|(c, _)| *c)
    }
}

/// Model × (quantity, metric) table of raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    pub models: Vec<String>,
    pub columns: Vec<(Quantity, Metric)>,
    /// `values[model][column]`; `None` where the metric is unavailable.
    pub values: Vec<Vec<Option<f64>>>,
}

impl MetricMatrix {
    pub fn from_reports(reports: &[MetricReport], map: &CategoryMap) -> Result<Self, ScoreError> {
        let mut models: Vec<String> = Vec::new();
        for r in reports {
            if models.contains(&r.model) {
                return Err(ScoreError::DuplicateModel(r.model.clone()));
            }
            models.push(r.model.clone());
        }
        let columns: Vec<(Quantity, Metric)> = Quantity::ALL
            .into_iter()
            .flat_map(|q| map.metrics().into_iter().map(move |m| (q, m)))
            .collect();
        let values = reports
            .iter()
            .map(|r| columns.iter().map(|&(q, m)| r.value(q, m).filter(|v| v.is_finite())).collect())
            .collect();
        Ok(Self {
            models,
            columns,
            values,
        })
    }

    pub fn column_index(&self, q: Quantity, m: Metric) -> Option<usize> {
        self.columns.iter().position(|c| *c == (q, m))
    }

    pub fn get(&self, model: usize, q: Quantity, m: Metric) -> Option<f64> {
        self.column_index(q, m).and_then(|c| self.values[model][c])
    }
}

/// Orients every column so that lower is better (Theil C becomes `1 − C`).
pub fn directionalize(matrix: &MetricMatrix) -> MetricMatrix {
    let mut out = matrix.clone();
    for (c, (_, m)) in matrix.columns.iter().enumerate() {
        if m.higher_is_better() {
            for row in &mut out.values {
                row[c] = row[c].map(|v| 1.0 - v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    pub models: Vec<String>,
    pub columns: Vec<(Quantity, Metric)>,
    pub values: Vec<Vec<Option<f64>>>,
    /// Columns whose available values had zero spread; scored 0.
    pub constant_columns: Vec<(Quantity, Metric)>,
}

/// Column-wise `(x − mean) / std` across models, population std, ignoring
/// missing cells.
pub fn zscore_normalize(matrix: &MetricMatrix) -> Result<ZScores, ScoreError> {
    if matrix.models.len() < 2 {
        return Err(ScoreError::TooFewModels(matrix.models.len()));
    }
    let mut values = matrix.values.clone();
    let mut constant_columns = Vec::new();
    for (c, col) in matrix.columns.iter().enumerate() {
        let present: Vec<f64> = matrix.values.iter().filter_map(|row| row[c]).collect();
        if present.is_empty() {
            continue;
        }
        let m = math::mean(&present);
        let sd = math::std_pop(&present);
        let constant = !(sd > 1e-12 * (1.0 + math::abs(m)));
        if constant {
            constant_columns.push(*col);
        }
        for row in &mut values {
            row[c] = row[c].map(|v| if constant { 0.0 } else { (v - m) / sd });
        }
    }
    Ok(ZScores {
        models: matrix.models.clone(),
        columns: matrix.columns.clone(),
        values,
        constant_columns,
    })
}

/// Mean z-score per model, quantity and category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub models: Vec<String>,
    pub categories: Vec<Category>,
    /// `per_quantity[model][quantity][category]`, quantities in
    /// [`Quantity::ALL`] order.
    pub per_quantity: Vec<Vec<Vec<Option<f64>>>>,
}

impl CategoryScores {
    pub fn get(&self, model: usize, q: Quantity, c: Category) -> Option<f64> {
        let qi = Quantity::ALL.iter().position(|x| *x == q)?;
        let ci = self.categories.iter().position(|x| *x == c)?;
        self.per_quantity[model][qi][ci]
    }

    /// Category score averaged over quantities.
    pub fn category_mean(&self, model: usize, c: Category) -> Option<f64> {
        let ci = self.categories.iter().position(|x| *x == c)?;
        let v: Vec<f64> = self.per_quantity[model].iter().filter_map(|row| row[ci]).collect();
        (!v.is_empty()).then(|| math::mean(&v))
    }
}

pub fn category_scores(z: &ZScores, map: &CategoryMap) -> Result<CategoryScores, ScoreError> {
    map.validate()?;
    let categories = map.categories();
    let per_quantity = (0..z.models.len())
        .map(|mi| {
            Quantity::ALL
                .iter()
                .map(|&q| {
                    map.entries
                        .iter()
                        .map(|(_, ms)| {
                            let v: Vec<f64> = ms
                                .iter()
                                .filter_map(|&m| {
                                    let c = z.columns.iter().position(|col| *col == (q, m))?;
                                    z.values[mi][c]
                                })
                                .collect();
                            (!v.is_empty()).then(|| math::mean(&v))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(CategoryScores {
        models: z.models.clone(),
        categories,
        per_quantity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub model: String,
    pub final_score: f64,
    pub error_score: Option<f64>,
}

/// Equal-weight mean over every available (quantity, category) score, ranked
/// ascending. Ties fall back to the error-category score, then the name.
/// Models with no available score rank last.
pub fn aggregate_final(scores: &CategoryScores) -> Vec<RankedModel> {
    let mut out: Vec<RankedModel> = scores
        .models
        .iter()
        .enumerate()
        .map(|(mi, name)| {
            let all: Vec<f64> = scores.per_quantity[mi].iter().flatten().filter_map(|v| *v).collect();
            RankedModel {
                rank: 0,
                model: name.clone(),
                final_score: if all.is_empty() { f64::INFINITY } else { math::mean(&all) },
                error_score: scores.category_mean(mi, Category::Error),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.final_score
            .total_cmp(&b.final_score)
            .then_with(|| {
                a.error_score
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&b.error_score.unwrap_or(f64::INFINITY))
            })
            .then_with(|| a.model.cmp(&b.model))
    });
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    out
}

/// Every intermediate table of one scoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub raw: MetricMatrix,
    pub directional: MetricMatrix,
    pub zscores: ZScores,
    pub categories: CategoryScores,
    pub ranking: Vec<RankedModel>,
}

pub fn score(reports: &[MetricReport], map: &CategoryMap) -> Result<Scoreboard, ScoreError> {
    map.validate()?;
    let raw = MetricMatrix::from_reports(reports, map)?;
    let directional = directionalize(&raw);
    let zscores = zscore_normalize(&directional)?;
    let categories = category_scores(&zscores, map)?;
    let ranking = aggregate_final(&categories);
    Ok(Scoreboard {
        raw,
        directional,
        zscores,
        categories,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;
    use alloc::vec;
    use crate::metrics::MetricCell;
    use proptest::prelude::*;

    fn report(name: &str, f: impl Fn(Quantity, Metric) -> Option<f64>) -> MetricReport {
        let mut cells = BTreeMap::new();
        for q in Quantity::ALL {
            for m in Metric::ALL {
                cells.insert(
                    (q, m),
                    MetricCell {
                        value: f(q, m),
                        n_segments: 1,
                        flags: vec![],
                    },
                );
            }
        }
        MetricReport {
            model: name.into(),
            cells,
            weights: vec![],
        }
    }

    #[test]
    fn three_model_zscores() {
        let reports = [
            report("a", |_, m| Some(if m == Metric::Mae { 1.0 } else { 0.0 })),
            report("b", |_, m| Some(if m == Metric::Mae { 2.0 } else { 0.0 })),
            report("c", |_, m| Some(if m == Metric::Mae { 3.0 } else { 0.0 })),
        ];
        let map = CategoryMap::default();
        let raw = MetricMatrix::from_reports(&reports, &map).unwrap();
        let z = zscore_normalize(&raw).unwrap();
        let c = z.columns.iter().position(|c| *c == (Quantity::Speed, Metric::Mae)).unwrap();
        let s = math::sqrt(1.5);
        assert!((z.values[0][c].unwrap() + s).abs() < 1e-12);
        assert_eq!(z.values[1][c].unwrap(), 0.0);
        assert!((z.values[2][c].unwrap() - s).abs() < 1e-12);
        let k = z.columns.iter().position(|c| *c == (Quantity::Speed, Metric::Ks)).unwrap();
        assert!(z.values.iter().all(|r| r[k] == Some(0.0)));
        assert!(z.constant_columns.contains(&(Quantity::Speed, Metric::Ks)));
    }

    #[test]
    fn theil_c_is_flipped() {
        let reports = [
            report("good", |_, m| Some(if m == Metric::TheilC { 1.0 } else { 0.0 })),
            report("bad", |_, m| Some(if m == Metric::TheilC { 0.2 } else { 0.0 })),
        ];
        let map = CategoryMap::default();
        let raw = MetricMatrix::from_reports(&reports, &map).unwrap();
        let d = directionalize(&raw);
        assert_eq!(d.get(0, Quantity::Acceleration, Metric::TheilC), Some(0.0));
        assert!((d.get(1, Quantity::Acceleration, Metric::TheilC).unwrap() - 0.8).abs() < 1e-15);
        let board = score(&reports, &map).unwrap();
        assert_eq!(board.ranking[0].model, "good");
    }

    #[test]
    fn missing_cells_are_excluded() {
        let reports = [
            report("a", |_, m| Some(if m == Metric::Dtw { 1.0 } else { 0.0 })),
            report("b", |_, m| if m == Metric::Dtw { None } else { Some(0.0) }),
            report("c", |_, m| Some(if m == Metric::Dtw { 3.0 } else { 0.0 })),
        ];
        let board = score(&reports, &CategoryMap::default()).unwrap();
        let col = board.zscores.columns.iter().position(|c| c.1 == Metric::Dtw).unwrap();
        assert_eq!(board.zscores.values[0][col], Some(-1.0));
        assert_eq!(board.zscores.values[1][col], None);
        assert_eq!(board.zscores.values[2][col], Some(1.0));
    }

    #[test]
    fn single_model_is_rejected() {
        let reports = [report("a", |_, _| Some(0.0))];
        assert_eq!(
            score(&reports, &CategoryMap::default()).unwrap_err(),
            ScoreError::TooFewModels(1)
        );
    }

    #[test]
    fn empty_category_is_rejected() {
        let map = CategoryMap {
            entries: vec![(Category::Error, vec![Metric::Mae]), (Category::Similarity, vec![])],
        };
        let reports = [report("a", |_, _| Some(0.0)), report("b", |_, _| Some(1.0))];
        assert_eq!(
            score(&reports, &map).unwrap_err(),
            ScoreError::EmptyCategory(Category::Similarity)
        );
    }

    #[test]
    fn custom_category_map() {
        let map = CategoryMap {
            entries: vec![(Category::Error, vec![Metric::Rmse]), (Category::Similarity, vec![Metric::Ks])],
        };
        let reports = [
            report("a", |_, m| Some(if m == Metric::Rmse { 1.0 } else { 0.5 })),
            report("b", |_, m| Some(if m == Metric::Rmse { 2.0 } else { 0.1 })),
        ];
        let board = score(&reports, &map).unwrap();
        assert_eq!(board.raw.columns.len(), 6);
        // rmse z: a −1, b +1; ks z: a +1, b −1 → tie; error score breaks it
        assert_eq!(board.ranking[0].model, "a");
        assert!((board.ranking[0].final_score - board.ranking[1].final_score).abs() < 1e-12);
    }

    #[test]
    fn ties_fall_back_to_name() {
        let reports = [report("zeta", |_, _| Some(1.0)), report("alpha", |_, _| Some(1.0))];
        let board = score(&reports, &CategoryMap::default()).unwrap();
        assert_eq!(board.ranking[0].model, "alpha");
        assert_eq!(board.ranking[1].rank, 2);
    }

    proptest! {
        #[test]
        fn zscore_columns_are_standardised(vals in proptest::collection::vec(-100.0f64..100.0, 2..8)) {
            let reports: Vec<MetricReport> = vals
                .iter()
                .enumerate()
                .map(|(i, v)| report(&alloc::format!("m{i}"), |_, _| Some(*v)))
                .collect();
            let raw = MetricMatrix::from_reports(&reports, &CategoryMap::default()).unwrap();
            let z = zscore_normalize(&raw).unwrap();
            let col: Vec<f64> = z.values.iter().map(|r| r[0].unwrap()).collect();
            prop_assert!(math::mean(&col).abs() < 1e-9);
            let sd = math::std_pop(&col);
            prop_assert!(sd.abs() < 1e-9 || (sd - 1.0).abs() < 1e-9);
        }

        #[test]
        fn ranking_invariant_to_affine_rescale(vals in proptest::collection::vec(0.0f64..10.0, 36),
                                               scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let make = |f: &dyn Fn(f64) -> f64| -> Vec<MetricReport> {
                (0..3).map(|i| report(&alloc::format!("m{i}"), |q, m| {
                    let qi = q as usize;
                    let mi = Metric::ALL.iter().position(|x| *x == m).unwrap();
                    let k = (qi * 12 + mi + i * 7) % 36;
                    Some(f(vals[k]))
                })).collect()
            };
            let a = score(&make(&|v| v), &CategoryMap::default()).unwrap();
            let b = score(&make(&|v| v * scale + shift), &CategoryMap::default()).unwrap();
            for (x, y) in a.ranking.iter().zip(&b.ranking) {
                prop_assert!((x.final_score - y.final_score).abs() < 1e-6);
            }
        }
    }
}
