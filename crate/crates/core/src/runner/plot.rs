//! Plot-ready panel files from a results table.
//!
//! Each figure selects rows (by metric and filters), splits them into
//! panels by the values of its panel fields, and writes one delimited file
//! per panel with columns `x,series,value,mc_se`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::results::{scenario_record, ResultRow, RESULTS_HEADER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Outcome,
    Design,
    MuC,
    PiC,
    SigmaW2,
    Effect,
    NClusters,
    ClusterSize,
    Interims,
    Boundary,
    Icc,
}

impl Field {
    pub fn column(self) -> &'static str {
        match self {
            Field::Outcome => "outcome",
            Field::Design => "design",
            Field::MuC => "mu_c",
            Field::PiC => "pi_c",
            Field::SigmaW2 => "sigma_w2",
            Field::Effect => "effect",
            Field::NClusters => "n_clusters",
            Field::ClusterSize => "cluster_size",
            Field::Interims => "interims",
            Field::Boundary => "boundary",
            Field::Icc => "icc",
        }
    }

    fn index(self) -> usize {
        RESULTS_HEADER
            .iter()
            .position(|c| *c == self.column())
            .expect("every field is a results column")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Rows with zero true effect.
    Fpr,
    /// Rows with a non-zero true effect.
    Power,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FacetValue {
    Number(f64),
    Text(String),
}

impl FacetValue {
    fn matches(&self, cell: &str) -> bool {
        match self {
            FacetValue::Number(x) => cell.parse::<f64>().is_ok_and(|c| (c - x).abs() < 1e-12),
            FacetValue::Text(t) => match (t.parse::<f64>(), cell.parse::<f64>()) {
                (Ok(a), Ok(b)) => (a - b).abs() < 1e-12,
                _ => t == cell,
            },
        }
    }

    fn label(&self) -> String {
        match self {
            FacetValue::Number(x) => x.to_string(),
            FacetValue::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Filter {
    pub field: Field,
    pub value: FacetValue,
}

/// A panel dimension; with no explicit values the panels follow the data,
/// otherwise every listed value must be present.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Facet {
    pub field: Field,
    #[serde(default)]
    pub values: Vec<FacetValue>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FigureSpec {
    pub name: String,
    pub metric: Metric,
    pub x: Field,
    pub series: Vec<Field>,
    #[serde(default)]
    pub panels: Vec<Facet>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    /// Target line (0.05 FPR, 0.8 power, ...) emitted as a `reference` series.
    pub reference: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct FigureFile {
    figure: Vec<FigureSpec>,
}

/// Parses `[[figure]]` tables from TOML.
pub fn parse_figures(text: &str) -> Result<Vec<FigureSpec>> {
    toml::from_str::<FigureFile>(text)
        .map(|f| f.figure)
        .map_err(|e| Error::invalid(format!("figure spec: {e}")))
}

fn facet(field: Field) -> Facet {
    Facet { field, values: Vec::new() }
}

fn filter(field: Field, value: &str) -> Filter {
    Filter {
        field,
        value: FacetValue::Text(value.to_string()),
    }
}

pub const PRESETS: [&str; 6] = [
    "fpr-vs-icc",
    "power-vs-effect",
    "fpr-vs-looks",
    "power-vs-looks",
    "binary-fpr-vs-baseline",
    "binary-power-vs-effect",
];

impl FigureSpec {
    /// Built-in figure layouts: false positive rate against ICC, power
    /// against effect, either against the number of interim looks, and the
    /// binary-outcome counterparts. `reference` overrides the default
    /// target line (0.05 for FPR panels, 0.8 for power panels).
    pub fn preset(name: &str, reference: Option<f64>) -> Result<Self> {
        use Field::*;
        let (metric, x, series, panels, filters) = match name {
            "fpr-vs-icc" => (
                Metric::Fpr,
                Icc,
                vec![Design, NClusters],
                vec![facet(Boundary)],
                vec![filter(Outcome, "continuous"), filter(Interims, "1")],
            ),
            "power-vs-effect" => (
                Metric::Power,
                Effect,
                vec![Design, NClusters],
                vec![facet(Icc), facet(Boundary)],
                vec![filter(Outcome, "continuous"), filter(Interims, "1")],
            ),
            "fpr-vs-looks" => (
                Metric::Fpr,
                Interims,
                vec![Design, NClusters, Icc],
                vec![facet(ClusterSize), facet(Boundary)],
                vec![filter(Outcome, "continuous")],
            ),
            "power-vs-looks" => (
                Metric::Power,
                Interims,
                vec![Design, NClusters, Effect],
                vec![facet(Icc), facet(ClusterSize), facet(Boundary)],
                vec![filter(Outcome, "continuous")],
            ),
            "binary-fpr-vs-baseline" => (
                Metric::Fpr,
                PiC,
                vec![Design, NClusters, Icc],
                vec![facet(Boundary)],
                vec![filter(Outcome, "binary"), filter(Interims, "1")],
            ),
            "binary-power-vs-effect" => (
                Metric::Power,
                Effect,
                vec![Design, NClusters],
                vec![facet(Icc), facet(PiC), facet(Boundary)],
                vec![filter(Outcome, "binary"), filter(Interims, "1")],
            ),
            other => {
                return Err(Error::invalid(format!(
                    "unknown preset `{other}` (available: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        let default_reference = match metric {
            Metric::Fpr => 0.05,
            Metric::Power => 0.8,
        };
        Ok(Self {
            name: name.to_string(),
            metric,
            x,
            series,
            panels,
            filters,
            reference: Some(reference.unwrap_or(default_reference)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub x: String,
    pub series: String,
    pub value: f64,
    pub mc_se: f64,
}

/// Groups the figure's rows into panels keyed by file stem.
pub fn build_panels(rows: &[ResultRow], figure: &FigureSpec) -> Result<BTreeMap<String, Vec<PanelRow>>> {
    let records: Vec<(Vec<String>, &ResultRow)> = rows
        .iter()
        .map(|r| (scenario_record(&r.run), r))
        .filter(|(rec, _)| {
            let effect: f64 = rec[Field::Effect.index()].parse().unwrap_or(f64::NAN);
            match figure.metric {
                Metric::Fpr => effect == 0.0,
                Metric::Power => effect != 0.0,
            }
        })
        .filter(|(rec, _)| figure.filters.iter().all(|f| f.value.matches(&rec[f.field.index()])))
        .collect();
    if records.is_empty() {
        return Err(Error::MissingFacets(vec![format!("{}: no results match the figure", figure.name)]));
    }

    let mut panels: BTreeMap<String, Vec<PanelRow>> = BTreeMap::new();
    for (rec, row) in &records {
        let stem = std::iter::once(figure.name.clone())
            .chain(
                figure
                    .panels
                    .iter()
                    .map(|p| format!("{}={}", p.field.column(), rec[p.field.index()])),
            )
            .collect::<Vec<_>>()
            .join("__");
        let series = figure
            .series
            .iter()
            .map(|f| format!("{}={}", f.column(), rec[f.index()]))
            .collect::<Vec<_>>()
            .join("|");
        panels.entry(stem).or_default().push(PanelRow {
            x: rec[figure.x.index()].clone(),
            series,
            value: row.rejection_rate,
            mc_se: row.mc_se,
        });
    }

    let mut missing = Vec::new();
    let mut combos: Vec<Vec<(Field, FacetValue)>> = vec![Vec::new()];
    for p in figure.panels.iter().filter(|p| !p.values.is_empty()) {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                p.values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((p.field, v.clone()));
                    c
                })
            })
            .collect();
    }
    for combo in combos.iter().filter(|c| !c.is_empty()) {
        let present = records
            .iter()
            .any(|(rec, _)| combo.iter().all(|(f, v)| v.matches(&rec[f.index()])));
        if !present {
            let label = combo
                .iter()
                .map(|(f, v)| format!("{}={}", f.column(), v.label()))
                .collect::<Vec<_>>()
                .join(", ");
            missing.push(format!("{}: {label}", figure.name));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFacets(missing));
    }

    let numeric = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
    for rows in panels.values_mut() {
        rows.sort_by(|a, b| a.series.cmp(&b.series).then(numeric(&a.x).total_cmp(&numeric(&b.x))));
        if let Some(reference) = figure.reference {
            let mut xs: Vec<String> = rows.iter().map(|r| r.x.clone()).collect();
            xs.sort_by(|a, b| numeric(a).total_cmp(&numeric(b)));
            xs.dedup();
            rows.extend(xs.into_iter().map(|x| PanelRow {
                x,
                series: "reference".into(),
                value: reference,
                mc_se: 0.0,
            }));
        }
    }
    Ok(panels)
}

/// Writes every panel of every figure into `out_dir`.
pub fn emit_plot_data(rows: &[ResultRow], figures: &[FigureSpec], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if figures.is_empty() {
        return Err(Error::invalid("no figures requested"));
    }
    let built = figures
        .iter()
        .map(|f| build_panels(rows, f))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for panels in built {
        for (stem, rows) in panels {
            let path = out_dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["x", "series", "value", "mc_se"])?;
            for r in rows {
                w.write_record(&[r.x, r.series, r.value.to_string(), r.mc_se.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_field_has_a_column() {
        for f in [Field::Outcome, Field::Design, Field::PiC, Field::NClusters, Field::Icc, Field::Boundary] {
            assert_eq!(RESULTS_HEADER[f.index()], f.column());
        }
    }

    #[test]
    fn facet_values_match_numerically() {
        assert!(FacetValue::Number(0.5).matches("0.5"));
        assert!(FacetValue::Number(20.0).matches("20"));
        assert!(FacetValue::Text("0.50".into()).matches("0.5"));
        assert!(FacetValue::Text("design1".into()).matches("design1"));
        assert!(!FacetValue::Text("design1".into()).matches("design2"));
    }

    #[test]
    fn presets_have_default_references() {
        for name in PRESETS {
            let f = FigureSpec::preset(name, None).unwrap();
            let want = match f.metric {
                Metric::Fpr => 0.05,
                Metric::Power => 0.8,
            };
            assert_eq!(f.reference, Some(want));
        }
    }

    #[test]
    fn figure_file_parses() {
        let figures = parse_figures(
            "[[figure]]\nname = \"a\"\nmetric = \"power\"\nx = \"effect\"\nseries = [\"design\"]\nfilters = [{ field = \"outcome\", value = \"binary\" }]\n",
        )
        .unwrap();
        assert_eq!(figures[0].filters[0].field, Field::Outcome);
        assert!(parse_figures("[[figure]]\nname = \"a\"\n").is_err());
    }
}
