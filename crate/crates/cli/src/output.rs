//! CSV tables and the files written for them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::Formats;
use crate::svg::{self, PlotSpec};

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comma-separated, header row, LF line endings, 17 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Files written by one command; removed again if the command fails.
pub struct OutputSet {
    dir: PathBuf,
    formats: Formats,
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(dir: &Path, formats: Formats) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Writes `<stem>.csv` and, when plotting is requested, one SVG per
    /// `(file stem, plot)` rendered from the same CSV text.
    pub fn emit(&mut self, stem: &str, table: &Table, plots: &[(String, PlotSpec)]) -> Result<()> {
        let csv_text = table.to_csv()?;
        if self.formats.csv {
            self.write(&format!("{stem}.csv"), &csv_text)?;
        }
        if self.formats.svg {
            for (plot_stem, spec) in plots {
                let svg_text = svg::render(&csv_text, spec)?;
                self.write(&format!("{plot_stem}.svg"), &svg_text)?;
            }
        }
        Ok(())
    }

    pub fn discard(self) {
        for path in self.written {
            let _ = fs::remove_file(path);
        }
    }
}
