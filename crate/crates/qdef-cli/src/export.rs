//! OBJ meshes and CSV traces. Floats are written with 17 significant digits,
//! which `f64::from_str` reads back bit for bit.

use std::path::Path;

use nalgebra::Vector3;

use crate::report::write_atomic;
use crate::CliError;

/// Rectangular point grid, row-major: `points[i * cols + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGrid {
    pub rows: usize,
    pub cols: usize,
    pub points: Vec<Vector3<f64>>,
}

impl PointGrid {
    pub fn new(rows: usize, cols: usize, points: Vec<Vector3<f64>>) -> Result<Self, CliError> {
        if rows < 2 || cols < 2 || points.len() != rows * cols {
            return Err(CliError::Export(format!(
                "mesh needs a rectangular grid of at least 2x2, got {rows}x{cols} with {} points",
                points.len()
            )));
        }
        Ok(PointGrid { rows, cols, points })
    }
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Vertices and triangles; each quad splits along its `(i, j) → (i+1, j+1)` diagonal.
pub fn obj_string(grid: &PointGrid) -> String {
    let mut s = String::with_capacity(grid.points.len() * 80);
    for p in &grid.points {
        s.push_str(&format!("v {} {} {}\n", fmt_float(p.x), fmt_float(p.y), fmt_float(p.z)));
    }
    let id = |i: usize, j: usize| i * grid.cols + j + 1;
    for i in 0..grid.rows - 1 {
        for j in 0..grid.cols - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            s.push_str(&format!("f {a} {b} {c}\nf {a} {c} {d}\n"));
        }
    }
    s
}

pub fn export_mesh(grid: &PointGrid, path: &Path) -> Result<(), CliError> {
    write_atomic(path, obj_string(grid).as_bytes())
}

/// Parsed OBJ content: vertices and 1-based triangle indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

pub fn parse_obj(text: &str) -> Result<ObjMesh, CliError> {
    let bad = |line: &str| CliError::Export(format!("malformed OBJ line: {line:?}"));
    let mut mesh = ObjMesh { vertices: Vec::new(), faces: Vec::new() };
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xs: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(line))?;
                let [x, y, z] = xs[..] else { return Err(bad(line)) };
                mesh.vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let ids: Vec<usize> = it.map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(line))?;
                let [a, b, c] = ids[..] else { return Err(bad(line)) };
                if [a, b, c].iter().any(|&k| k == 0 || k > mesh.vertices.len()) {
                    return Err(bad(line));
                }
                mesh.faces.push([a, b, c]);
            }
            None => {}
            Some(_) => return Err(bad(line)),
        }
    }
    Ok(mesh)
}

/// Named, equal-length columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Trace {
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self, CliError> {
        if let Some((_, first)) = columns.first() {
            if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != first.len()) {
                return Err(CliError::Export(format!("column {name:?} length differs from the first column")));
            }
        }
        Ok(Trace { columns })
    }

    pub fn with_names(names: &[&str], columns: Vec<Vec<f64>>) -> Result<Self, CliError> {
        Self::new(names.iter().map(|n| n.to_string()).zip(columns).collect())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |(_, c)| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn csv_bytes(trace: &Trace) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace.columns.iter().map(|(n, _)| n.as_str()))?;
    for k in 0..trace.len() {
        w.write_record(trace.columns.iter().map(|(_, c)| fmt_float(c[k])))?;
    }
    w.into_inner().map_err(|e| CliError::Export(e.to_string()))
}

pub fn export_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    write_atomic(path, &csv_bytes(trace)?)
}

pub fn parse_csv(bytes: &[u8]) -> Result<Trace, CliError> {
    let mut r = csv::Reader::from_reader(bytes);
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        for (col, field) in cols.iter_mut().zip(rec?.iter()) {
            col.push(field.parse::<f64>().map_err(|e| CliError::Export(format!("bad CSV float {field:?}: {e}")))?);
        }
    }
    Trace::new(names.into_iter().zip(cols).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> PointGrid {
        let pts = (0..rows * cols)
            .map(|k| {
                let t = k as f64 * 0.37;
                Vector3::new(t.sin() / 3.0, t.cos() * 1e-7, std::f64::consts::PI * t)
            })
            .collect();
        PointGrid::new(rows, cols, pts).unwrap()
    }

    #[test]
    fn counts() {
        let m = parse_obj(&obj_string(&grid(2, 2))).unwrap();
        assert_eq!((m.vertices.len(), m.faces.len()), (4, 2));
        assert_eq!(m.faces, vec![[1, 3, 4], [1, 4, 2]]);
        let m = parse_obj(&obj_string(&grid(64, 64))).unwrap();
        assert_eq!((m.vertices.len(), m.faces.len()), (4096, 7938));
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let g = grid(5, 7);
        let m = parse_obj(&obj_string(&g)).unwrap();
        assert_eq!(m.vertices, g.points);
        assert!(PointGrid::new(1, 4, vec![Vector3::zeros(); 4]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = Trace::with_names(&["a", "b,c"], vec![vec![0.1, -2.5e-300, 1.0 / 3.0], vec![f64::MAX, 0.0, -0.0]]).unwrap();
        let bytes = csv_bytes(&t).unwrap();
        assert!(String::from_utf8_lossy(&bytes).starts_with("a,\"b,c\"\n"));
        assert_eq!(parse_csv(&bytes).unwrap(), t);
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = Trace::with_names(&["s", "t"], vec![vec![], vec![]]).unwrap();
        assert_eq!(csv_bytes(&t).unwrap(), b"s,t\n");
        assert!(Trace::with_names(&["s", "t"], vec![vec![1.0], vec![]]).is_err());
    }
}
