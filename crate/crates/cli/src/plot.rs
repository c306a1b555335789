//! Figure data as labelled CSV files.
//!
//! Each figure is one CSV whose first column is the x axis. Leading `#`
//! lines give every column's label and unit, so the files load unchanged
//! through the numeric table reader. `plots.json` indexes the figures.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use crossover_core::table::Table;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub label: String,
    pub unit: String,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, label: impl Into<String>, unit: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), label: label.into(), unit: unit.into(), values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure {
    pub name: String,
    pub title: String,
    pub x: Column,
    pub series: Vec<Column>,
}

impl Figure {
    pub fn new(name: impl Into<String>, title: impl Into<String>, x: Column) -> Self {
        Self { name: name.into(), title: title.into(), x, series: Vec::new() }
    }

    pub fn with(mut self, column: Column) -> Self {
        self.series.push(column);
        self
    }

    fn columns(&self) -> impl Iterator<Item = &Column> {
        std::iter::once(&self.x).chain(&self.series)
    }

    fn validate(&self) -> Result<()> {
        ensure!(!self.series.is_empty(), "figure '{}' has no series", self.name);
        for c in self.columns() {
            ensure!(
                !c.label.trim().is_empty() && !c.unit.trim().is_empty(),
                "figure '{}': column '{}' needs a label and a unit",
                self.name,
                c.name
            );
            ensure!(
                c.values.len() == self.x.values.len(),
                "figure '{}': column '{}' has {} values, x has {}",
                self.name,
                c.name,
                c.values.len(),
                self.x.values.len()
            );
        }
        Ok(())
    }

    pub fn to_table(&self) -> Table {
        let mut table = Table::new(self.columns().map(|c| c.name.clone()).collect());
        table.columns = self.columns().map(|c| c.values.clone()).collect();
        table
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.title)?;
        for c in self.columns() {
            writeln!(w, "# {}: {} [{}]", c.name, c.label, c.unit)?;
        }
        self.to_table().write_csv(w)?;
        Ok(())
    }
}

/// Named figures written together into one directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PlotBundle {
    pub figures: Vec<Figure>,
}

impl PlotBundle {
    pub fn push(&mut self, figure: Figure) -> Result<()> {
        figure.validate()?;
        if self.figures.iter().any(|f| f.name == figure.name) {
            bail!("duplicate figure '{}'", figure.name);
        }
        self.figures.push(figure);
        Ok(())
    }

    #[cfg(test)]
    pub fn get(&self, name: &str) -> Option<&Figure> {
        self.figures.iter().find(|f| f.name == name)
    }

    /// Writes `<name>.csv` per figure plus `plots.json`; returns the CSV paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut paths = Vec::new();
        for f in &self.figures {
            let path = dir.join(format!("{}.csv", f.name));
            let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            f.write_csv(std::io::BufWriter::new(file))?;
            paths.push(path);
        }
        let manifest = dir.join("plots.json");
        std::fs::write(&manifest, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", manifest.display()))?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig() -> Figure {
        Figure::new("out", "Plant output", Column::new("t", "time", "s", vec![0.0, 0.5]))
            .with(Column::new("y_p", "plant output", "1", vec![1.0, -2.5e-17]))
    }

    #[test]
    fn csv_round_trips_through_table_reader() {
        let mut buf = Vec::new();
        fig().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# Plant output\n# t: time [s]\n# y_p: plant output [1]\n"));
        let back = Table::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, fig().to_table());
    }

    #[test]
    fn labels_units_and_lengths_are_enforced() {
        let mut bundle = PlotBundle::default();
        let mut bad = fig();
        bad.series[0].unit.clear();
        assert!(bundle.push(bad).is_err());
        let mut short = fig();
        short.series[0].values.pop();
        assert!(bundle.push(short).is_err());
        assert!(bundle.push(Figure::new("x", "t", Column::new("t", "time", "s", vec![]))).is_err());
        bundle.push(fig()).unwrap();
        assert!(bundle.push(fig()).is_err());
    }

    #[test]
    fn manifest_lists_columns_without_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut bundle = PlotBundle::default();
        bundle.push(fig()).unwrap();
        let paths = bundle.write(dir.path()).unwrap();
        assert_eq!(paths, vec![dir.path().join("out.csv")]);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("plots.json")).unwrap()).unwrap();
        assert_eq!(manifest["figures"][0]["series"][0]["unit"], "1");
        assert!(manifest["figures"][0]["x"].get("values").is_none());
    }
}
