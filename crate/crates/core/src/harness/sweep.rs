use std::fmt::{self, Write as _};

use crate::corpus::Corpus;
use crate::embedding::Pretrained;
use crate::metrics::MetricsReport;
use crate::nn::{ConfigError, ModelConfig};

use super::config_file::set_field;
use super::cv::{cross_validate, CvOptions};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("sweep spec has no variants")]
    Empty,
    #[error("line {line}: expected `name: key=value ...`")]
    Syntax { line: usize },
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
    #[error("variant `{name}`: {source}")]
    Invalid {
        name: String,
        #[source]
        source: ConfigError,
    },
    #[error("unknown preset `{0}` (expected widths, layers or depths)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepVariant {
    pub name: String,
    pub config: ModelConfig,
}

/// An ordered list of architecture variants, each a full config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    variants: Vec<SweepVariant>,
}

impl SweepSpec {
    pub fn new(variants: Vec<SweepVariant>) -> Result<Self, SweepError> {
        if variants.is_empty() {
            return Err(SweepError::Empty);
        }
        for v in &variants {
            v.config.validate().map_err(|source| SweepError::Invalid {
                name: v.name.clone(),
                source,
            })?;
        }
        Ok(SweepSpec { variants })
    }

    pub fn variants(&self) -> &[SweepVariant] {
        &self.variants
    }

    /// Every non-empty subset of widths {2,3,4,5} (by size, then
    /// lexicographically) on two conv layers, two dense layers, with dropout.
    pub fn width_grid(base: &ModelConfig) -> Result<Self, SweepError> {
        let all = [2usize, 3, 4, 5];
        let mut subsets: Vec<Vec<usize>> = (1u32..16)
            .map(|bits| {
                all.iter()
                    .enumerate()
                    .filter(|(i, _)| bits & (1 << i) != 0)
                    .map(|(_, &w)| w)
                    .collect()
            })
            .collect();
        subsets.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let base = ModelConfig {
            conv_depth: 2,
            dense_depth: 2,
            dropout: nonzero_dropout(base),
            ..base.clone()
        };
        Self::new(
            subsets
                .into_iter()
                .map(|widths| SweepVariant {
                    name: widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
                    config: ModelConfig {
                        filter_widths: widths,
                        ..base.clone()
                    },
                })
                .collect(),
        )
    }

    /// Ten conv/dense depth combinations (conv 1-2, dense 1-3), with and
    /// without dropout.
    pub fn layer_grid(base: &ModelConfig) -> Result<Self, SweepError> {
        let rows = [
            (1, 1, false),
            (1, 2, false),
            (1, 2, true),
            (1, 3, false),
            (1, 3, true),
            (2, 1, false),
            (2, 2, false),
            (2, 2, true),
            (2, 3, false),
            (2, 3, true),
        ];
        Self::new(
            rows.iter()
                .map(|&(c, d, drop)| layer_variant(base, c, d, drop))
                .collect(),
        )
    }

    /// Conv depth 1-4, two dense layers, with dropout.
    pub fn depth_grid(base: &ModelConfig) -> Result<Self, SweepError> {
        Self::new((1..=4).map(|c| layer_variant(base, c, 2, true)).collect())
    }

    pub fn preset(name: &str, base: &ModelConfig) -> Result<Self, SweepError> {
        match name {
            "widths" => Self::width_grid(base),
            "layers" => Self::layer_grid(base),
            "depths" => Self::depth_grid(base),
            other => Err(SweepError::UnknownPreset(other.to_string())),
        }
    }

    /// One variant per line: `name: key=value key=value ...`, each override
    /// applied on top of `base`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, base: &ModelConfig) -> Result<Self, SweepError> {
        let mut variants = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (name, rest) = trimmed.split_once(':').ok_or(SweepError::Syntax { line })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(SweepError::Syntax { line });
            }
            let mut config = base.clone();
            for pair in rest.split_whitespace() {
                let (key, value) = pair.split_once('=').ok_or(SweepError::Syntax { line })?;
                set_field(&mut config, key, value).map_err(|message| SweepError::Field { line, message })?;
            }
            variants.push(SweepVariant {
                name: name.to_string(),
                config,
            });
        }
        Self::new(variants)
    }
}

fn nonzero_dropout(base: &ModelConfig) -> f64 {
    if base.dropout > 0.0 {
        base.dropout
    } else {
        ModelConfig::default().dropout
    }
}

fn layer_variant(base: &ModelConfig, conv: usize, dense: usize, dropout: bool) -> SweepVariant {
    let mut name = format!("{conv}-CNN + {dense}-Dense");
    if dropout {
        name.push_str(" + Dropout");
    }
    SweepVariant {
        name,
        config: ModelConfig {
            conv_depth: conv,
            dense_depth: dense,
            dropout: if dropout { nonzero_dropout(base) } else { 0.0 },
            ..base.clone()
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub name: String,
    pub config: ModelConfig,
    /// The cross-validated mean, or the error that stopped this variant.
    pub result: Result<MetricsReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Index of the best row: highest F1, then highest exact match, then
    /// lowest Hamming loss; earlier rows win full ties.
    pub best: Option<usize>,
}

impl SweepTable {
    pub fn from_rows(rows: Vec<SweepRow>) -> Self {
        let mut best: Option<(usize, &MetricsReport)> = None;
        for (i, row) in rows.iter().enumerate() {
            if let Ok(r) = &row.result {
                let better = match best {
                    None => true,
                    Some((_, b)) => (r.f1, r.exact_match, -r.hamming_loss) > (b.f1, b.exact_match, -b.hamming_loss),
                };
                if better {
                    best = Some((i, r));
                }
            }
        }
        let best = best.map(|(i, _)| i);
        SweepTable { rows, best }
    }

    pub fn get(&self, name: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variant,filter_widths,conv_depth,dense_depth,dropout,precision,recall,f1,hamming_loss,jaccard,exact_match,best,error\n",
        );
        for (i, row) in self.rows.iter().enumerate() {
            let c = &row.config;
            let widths: Vec<String> = c.filter_widths.iter().map(|w| w.to_string()).collect();
            let _ = write!(
                out,
                "\"{}\",{},{},{},{},",
                row.name.replace('"', "\"\""),
                widths.join(" "),
                c.conv_depth,
                c.dense_depth,
                c.dropout
            );
            let star = if self.best == Some(i) { "*" } else { "" };
            match &row.result {
                Ok(r) => {
                    let _ = writeln!(out, "{},{star},", r.csv_row());
                }
                Err(e) => {
                    let _ = writeln!(out, ",,,,,,,\"{}\"", e.replace('"', "\"\""));
                }
            }
        }
        out
    }
}

impl fmt::Display for SweepTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(7);
        writeln!(
            f,
            "  {:<width$} {:>9} {:>9} {:>9} {:>12} {:>9} {:>11}",
            "Variant", "Precision", "Recall", "F1-score", "Hamming loss", "Jaccard", "Exact match"
        )?;
        for (i, row) in self.rows.iter().enumerate() {
            let mark = if self.best == Some(i) { '*' } else { ' ' };
            match &row.result {
                Ok(r) => writeln!(
                    f,
                    "{mark} {:<width$} {:>9.3} {:>9.3} {:>9.3} {:>12.4} {:>9.3} {:>11.3}",
                    row.name, r.precision, r.recall, r.f1, r.hamming_loss, r.jaccard, r.exact_match
                )?,
                Err(e) => writeln!(f, "{mark} {:<width$} failed: {e}", row.name)?,
            }
        }
        Ok(())
    }
}

/// Cross-validates every variant in order. A failing variant records its
/// error and the sweep moves on.
pub fn sweep(corpus: &Corpus, spec: &SweepSpec, pretrained: Option<&Pretrained>, options: &CvOptions) -> SweepTable {
    let rows = spec
        .variants
        .iter()
        .map(|v| SweepRow {
            name: v.name.clone(),
            config: v.config.clone(),
            result: cross_validate(corpus, &v.config, pretrained, options)
                .map(|r| r.mean)
                .map_err(|e| e.to_string()),
        })
        .collect();
    SweepTable::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_gazetteer, builtin_templates, synth_generate};
    use crate::exec::Execution;
    use crate::metrics::{aggregate, InstanceScores};

    #[test]
    fn width_grid_inventory() {
        let spec = SweepSpec::width_grid(&ModelConfig::default()).unwrap();
        let names: Vec<&str> = spec.variants().iter().map(|v| v.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "2", "3", "4", "5", "2,3", "2,4", "2,5", "3,4", "3,5", "4,5", "2,3,4", "2,3,5", "2,4,5", "3,4,5",
                "2,3,4,5"
            ]
        );
        assert!(spec
            .variants()
            .iter()
            .all(|v| v.config.conv_depth == 2 && v.config.dropout > 0.0));
    }

    #[test]
    fn layer_presets() {
        let t5 = SweepSpec::layer_grid(&ModelConfig::default()).unwrap();
        assert_eq!(t5.variants().len(), 10);
        assert_eq!(t5.variants()[0].name, "1-CNN + 1-Dense");
        assert_eq!(t5.variants()[0].config.dropout, 0.0);
        assert_eq!(t5.variants()[7].name, "2-CNN + 2-Dense + Dropout");
        let t6 = SweepSpec::depth_grid(&ModelConfig::default()).unwrap();
        let depths: Vec<usize> = t6.variants().iter().map(|v| v.config.conv_depth).collect();
        assert_eq!(depths, [1, 2, 3, 4]);
        assert!(matches!(
            SweepSpec::preset("grid9", &ModelConfig::default()),
            Err(SweepError::UnknownPreset(_))
        ));
    }

    #[test]
    fn parse_spec_file() {
        let text = "# widths\nsingle: filter_widths=3\ncombined: filter_widths=2,3,4 conv_depth=2\n";
        let spec = SweepSpec::parse(text, &ModelConfig::default()).unwrap();
        assert_eq!(spec.variants()[0].config.filter_widths, vec![3]);
        assert_eq!(spec.variants()[1].config.conv_depth, 2);
        assert!(matches!(
            SweepSpec::parse("", &ModelConfig::default()),
            Err(SweepError::Empty)
        ));
        assert!(matches!(
            SweepSpec::parse("x: seq_len=oops", &ModelConfig::default()),
            Err(SweepError::Field { line: 1, .. })
        ));
        assert!(matches!(
            SweepSpec::parse("x: dropout=2", &ModelConfig::default()),
            Err(SweepError::Invalid { .. })
        ));
    }

    fn row(name: &str, scores: InstanceScores) -> SweepRow {
        SweepRow {
            name: name.into(),
            config: ModelConfig::default(),
            result: Ok(aggregate(&[scores]).unwrap()),
        }
    }

    #[test]
    fn best_row_tie_breaks() {
        let base = InstanceScores {
            precision: 0.9,
            recall: 0.9,
            f1: 0.9,
            hamming_loss: 0.1,
            jaccard: 0.8,
            exact_match: 0.0,
        };
        let higher_em = InstanceScores {
            exact_match: 1.0,
            ..base
        };
        let lower_hl = InstanceScores {
            exact_match: 1.0,
            hamming_loss: 0.0,
            ..base
        };
        let failed = SweepRow {
            name: "broken".into(),
            config: ModelConfig::default(),
            result: Err("boom".into()),
        };
        let table = SweepTable::from_rows(vec![
            row("a", base),
            failed,
            row("b", higher_em),
            row("c", lower_hl),
            row("d", lower_hl),
        ]);
        assert_eq!(table.best, Some(3));
        let csv = table.to_csv();
        assert!(csv.lines().nth(2).unwrap().ends_with("\"boom\""));
        assert!(csv.lines().nth(4).unwrap().ends_with(",*,"));
        assert!(table.to_string().contains("broken"));
    }

    #[test]
    fn single_variant_equals_cross_validation() {
        let corpus = synth_generate(&builtin_gazetteer(), &builtin_templates(), 24, 1).unwrap();
        let config = ModelConfig {
            seq_len: 12,
            embedding_dim: 6,
            filter_widths: vec![2],
            feature_maps: 3,
            pool_window: 2,
            dense_hidden: 8,
            batch_size: 6,
            epochs: 2,
            ..ModelConfig::default()
        };
        let spec = SweepSpec::new(vec![SweepVariant {
            name: "only".into(),
            config: config.clone(),
        }])
        .unwrap();
        let options = CvOptions {
            folds: 3,
            execution: Execution::Sequential,
            ..CvOptions::default()
        };
        let table = sweep(&corpus, &spec, None, &options);
        let cv = cross_validate(&corpus, &config, None, &options).unwrap();
        assert_eq!(table.rows[0].result, Ok(cv.mean));
        assert_eq!(table.best, Some(0));
        assert_eq!(table.to_csv(), sweep(&corpus, &spec, None, &options).to_csv());
    }

    #[test]
    fn failures_are_recorded_and_the_sweep_continues() {
        let corpus = synth_generate(&builtin_gazetteer(), &builtin_templates(), 4, 1).unwrap();
        let small = ModelConfig {
            seq_len: 10,
            embedding_dim: 4,
            feature_maps: 2,
            dense_hidden: 4,
            epochs: 1,
            ..ModelConfig::default()
        };
        let spec = SweepSpec::new(vec![
            SweepVariant {
                name: "a".into(),
                config: small.clone(),
            },
            SweepVariant {
                name: "b".into(),
                config: small,
            },
        ])
        .unwrap();
        // 4 examples cannot be split into 10 folds.
        let table = sweep(&corpus, &spec, None, &CvOptions::default());
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.result.is_err()));
        assert_eq!(table.best, None);
    }
}
