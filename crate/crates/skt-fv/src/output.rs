//! Plain-text run outputs: diagnostics CSV streams, field snapshots, and
//! study tables. All numbers are written in full-precision scientific
//! notation.

use crate::diagnostics::{fmt_full, DiagnosticsRecord, CSV_HEADER};
use crate::error::Result;
use crate::grid::Mesh;
use crate::scheme::State;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Owns an output directory; creates it on construction.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.file(name), contents)?;
        Ok(())
    }

    /// Writes a diagnostics CSV with the standard header.
    pub fn write_diagnostics(&self, name: &str, records: &[DiagnosticsRecord]) -> Result<()> {
        let mut out = String::with_capacity(64 * (records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for rec in records {
            out.push_str(&rec.csv_row());
            out.push('\n');
        }
        self.write_text(name, &out)
    }

    /// Writes a field snapshot: `x,u1,u2` rows in 1D, `x,y,u1,u2` in 2D.
    pub fn write_field(&self, name: &str, state: &State, mesh: &Mesh) -> Result<()> {
        let mut out = String::new();
        match mesh {
            Mesh::One(g) => {
                out.push_str("x,u1,u2\n");
                for i in 0..g.n_cells {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        fmt_full(g.center(i)),
                        fmt_full(state.u1[i]),
                        fmt_full(state.u2[i])
                    ));
                }
            }
            Mesh::Two(g) => {
                out.push_str("x,y,u1,u2\n");
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        let (x, y) = g.center(i, j);
                        let idx = g.idx(i, j);
                        out.push_str(&format!(
                            "{},{},{},{}\n",
                            fmt_full(x),
                            fmt_full(y),
                            fmt_full(state.u1[idx]),
                            fmt_full(state.u2[idx])
                        ));
                    }
                }
            }
        }
        self.write_text(name, &out)
    }

    /// Writes a generic table with a header row.
    pub fn write_table(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let mut out = String::new();
        out.push_str(header);
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_full(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        self.write_text(name, &out)
    }
}

/// Streaming CSV writer used by long runs to emit rows as they are accepted.
pub struct DiagnosticsStream {
    file: fs::File,
}

impl DiagnosticsStream {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = fs::File::create(path)?;
        writeln!(file, "{CSV_HEADER}")?;
        Ok(DiagnosticsStream { file })
    }

    pub fn push(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.file, "{}", record.csv_row())?;
        Ok(())
    }
}
