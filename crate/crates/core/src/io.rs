//! File formats: point and basis CSV, the mesh document, OBJ export and
//! JSON reports.
//!
//! Point files are headerless CSV with one point per row, written with 17
//! significant digits so values round-trip exactly. The mesh document is
//! pretty-printed JSON; floats use the shortest representation that parses
//! back to the same value, which makes write → read → write byte-identical.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Complex, ComplexError, VertexId};
use crate::datasets::{DatasetError, EmbeddingBasis};
use crate::pipeline::TriangulationConfig;
use crate::spatial::{IndexMode, PointCloud};

pub const MESH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid mesh document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid mesh: {0}")]
    Complex(#[from] ComplexError),
    #[error("invalid basis: {0}")]
    Basis(#[from] DatasetError),
    #[error("{0}")]
    Format(String),
}

/// Writes rows of numbers as headerless CSV with 17 significant digits.
pub fn write_rows<W: Write, R: AsRef<[f64]>>(out: W, rows: &[R]) -> Result<(), IoError> {
    let mut w = BufWriter::new(out);
    for row in rows {
        let mut first = true;
        for x in row.as_ref() {
            if !first {
                w.write_all(b",")?;
            }
            write!(w, "{x:.16e}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses headerless CSV rows of equal length. Blank lines are skipped.
pub fn read_rows<R: Read>(mut input: R) -> Result<Vec<Vec<f64>>, IoError> {
    let mut text = Vec::new();
    input.read_to_end(&mut text)?;
    // the reader's own line counter ignores skipped blank lines, and a
    // record's offset points at the blank lines preceding it
    let line_at = |pos: Option<&csv::Position>| {
        pos.map_or(0, |p| {
            let mut at = p.byte() as usize;
            while at < text.len() && matches!(text[at], b'\n' | b'\r') {
                at += 1;
            }
            1 + text[..at].iter().filter(|&&b| b == b'\n').count()
        })
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_slice());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = line_at(e.position());
            IoError::Parse { line, message: e.to_string() }
        })?;
        let line = line_at(record.position());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| IoError::Parse { line, message: format!("not a finite number: {f:?}") })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(IoError::Parse {
                    line,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_points(path: &Path, points: &[Vec<f64>]) -> Result<(), IoError> {
    write_rows(File::create(path)?, points)
}

pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    let rows = read_rows(File::open(path)?)?;
    if rows.is_empty() {
        return Err(IoError::Format(format!("{} contains no points", path.display())));
    }
    Ok(rows)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, IoError> {
    PointCloud::with_mode(read_points(path)?, IndexMode::Auto).map_err(|e| IoError::Format(e.to_string()))
}

/// Writes the three basis vectors as three rows.
pub fn write_basis(path: &Path, basis: &EmbeddingBasis) -> Result<(), IoError> {
    write_rows(File::create(path)?, basis.vectors())
}

pub fn read_basis(path: &Path) -> Result<EmbeddingBasis, IoError> {
    let rows = read_rows(File::open(path)?)?;
    let [a, b, c]: [Vec<f64>; 3] =
        rows.try_into().map_err(|r: Vec<Vec<f64>>| IoError::Format(format!("basis needs 3 rows, found {}", r.len())))?;
    Ok(EmbeddingBasis::new([a, b, c])?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshVertex {
    pub id: VertexId,
    pub source: usize,
    pub coords: Vec<f64>,
}

/// Serialized form of a complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub version: u32,
    pub ambient_dim: usize,
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<[VertexId; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TriangulationConfig>,
}

impl MeshDocument {
    pub fn from_complex(complex: &Complex, config: Option<&TriangulationConfig>) -> Self {
        let vertices: Vec<MeshVertex> = complex
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| MeshVertex { id: i as VertexId, source: v.source, coords: v.coords.clone() })
            .collect();
        Self {
            version: MESH_VERSION,
            ambient_dim: vertices.first().map_or(0, |v| v.coords.len()),
            vertices,
            triangles: complex.triangles().to_vec(),
            config: config.cloned(),
        }
    }

    /// Rebuilds the complex, re-checking every structural invariant.
    pub fn to_complex(&self) -> Result<Complex, IoError> {
        if self.version != MESH_VERSION {
            return Err(IoError::Format(format!("unsupported mesh version {}", self.version)));
        }
        let mut complex = Complex::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id as usize != i {
                return Err(IoError::Format(format!("vertex ids must be 0..n in order; found {} at {i}", v.id)));
            }
            if v.coords.len() != self.ambient_dim {
                return Err(IoError::Format(format!(
                    "vertex {i} has {} coordinates, expected {}",
                    v.coords.len(),
                    self.ambient_dim
                )));
            }
            complex.add_vertex(v.coords.clone(), v.source)?;
        }
        for t in &self.triangles {
            complex.add_triangle(t[0], t[1], t[2])?;
        }
        complex.validate()?;
        Ok(complex)
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_mesh(path: &Path, complex: &Complex, config: Option<&TriangulationConfig>) -> Result<(), IoError> {
    std::fs::write(path, MeshDocument::from_complex(complex, config).to_json()?)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<(Complex, MeshDocument), IoError> {
    let doc = MeshDocument::from_json(&std::fs::read_to_string(path)?)?;
    Ok((doc.to_complex()?, doc))
}

/// Writes any serializable report as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Three-dimensional coordinates for display: the basis coordinates when a
/// basis is given, otherwise the projection onto the vertices' top three
/// principal directions.
pub fn display_coordinates(complex: &Complex, basis: Option<&EmbeddingBasis>) -> Result<Vec<[f64; 3]>, IoError> {
    let coords: Vec<Vec<f64>> = complex.vertices().iter().map(|v| v.coords.clone()).collect();
    if let Some(b) = basis {
        return coords.iter().map(|x| b.unembed(x).map_err(IoError::from)).collect();
    }
    if coords.is_empty() {
        return Ok(Vec::new());
    }
    let dim = coords[0].len();
    if dim <= 3 {
        return Ok(coords.iter().map(|x| [0, 1, 2].map(|i| x.get(i).copied().unwrap_or(0.0))).collect());
    }
    let cloud = PointCloud::with_mode(coords.clone(), IndexMode::Linear).map_err(|e| IoError::Format(e.to_string()))?;
    let (mean, axes) = cloud.principal_axes(3);
    Ok(coords
        .iter()
        .map(|x| {
            [0, 1, 2].map(|r| (0..dim).map(|j| axes[(r, j)] * (x[j] - mean[j])).sum::<f64>())
        })
        .collect())
}

/// Wavefront OBJ text for the complex.
pub fn obj_string(complex: &Complex, basis: Option<&EmbeddingBasis>) -> Result<String, IoError> {
    let mut s = String::new();
    for p in display_coordinates(complex, basis)? {
        s.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    for t in complex.triangles() {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    Ok(s)
}

pub fn write_obj(path: &Path, complex: &Complex, basis: Option<&EmbeddingBasis>) -> Result<(), IoError> {
    std::fs::write(path, obj_string(complex, basis)?)?;
    Ok(())
}
