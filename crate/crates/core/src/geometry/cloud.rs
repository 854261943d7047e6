use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// An `N×3` matrix of finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
}

impl PointCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.ncols() != 3 {
            return Err(Error::InvalidInput(format!(
                "point cloud must have 3 columns, got {}",
                points.ncols()
            )));
        }
        if points.nrows() == 0 {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some((idx, _)) = points.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinate at point {} axis {}",
                idx / 3,
                idx % 3
            )));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Result<Self> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((rows.len(), 3), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.points
    }

    pub fn centroid(&self) -> [f64; 3] {
        let c = self.points.mean_axis(Axis(0)).expect("non-empty cloud");
        [c[0], c[1], c[2]]
    }

    /// Copy translated to its centroid and scaled so the bounding-box
    /// diagonal equals `diagonal`.
    pub fn normalized(&self, diagonal: f64) -> PointCloud {
        let c = self.centroid();
        let mut pts = self.points.clone();
        for mut row in pts.rows_mut() {
            for (v, m) in row.iter_mut().zip(c) {
                *v -= m;
            }
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for row in pts.rows() {
            for a in 0..3 {
                lo[a] = lo[a].min(row[a]);
                hi[a] = hi[a].max(row[a]);
            }
        }
        let diag = (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
        if diag > 0.0 {
            pts.mapv_inplace(|v| v * diagonal / diag);
        }
        PointCloud { points: pts }
    }
}

/// Writes `cloud` as xyz-ascii: one `x y z` line per point, `\n` endings,
/// shortest round-trip decimal formatting.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    for row in cloud.points.rows() {
        writeln!(out, "{} {} {}", row[0], row[1], row[2])
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    out.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads an xyz-ascii file. Accepts scientific notation, CRLF line endings
/// and blank lines; anything else is a parse error naming file and line.
pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut flat = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(i + 1, format!("not a number: {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(i + 1, format!("non-finite coordinate {tok:?}")));
            }
            flat.push(v);
            count += 1;
        }
        if count != 3 {
            return Err(parse_err(i + 1, format!("expected 3 values, found {count}")));
        }
    }
    if flat.is_empty() {
        return Err(parse_err(1, "file holds no points".into()));
    }
    let n = flat.len() / 3;
    let points = Array2::from_shape_vec((n, 3), flat).expect("3 values per row");
    PointCloud::new(points)
}

/// Reads every `*.xyz` file in `dir`, in file-name order.
pub fn read_xyz_dir(dir: &Path) -> Result<Vec<PointCloud>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?.path();
        if path.extension().is_some_and(|x| x == "xyz") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no .xyz files in {}", dir.display())));
    }
    paths.sort();
    paths.iter().map(|p| read_xyz(p)).collect()
}

/// Writes `prefix_0000.xyz`, `prefix_0001.xyz`, … into `dir` and returns the
/// file names.
pub fn write_xyz_dir(dir: &Path, prefix: &str, clouds: &[PointCloud]) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let name = format!("{prefix}_{i:04}.xyz");
            write_xyz(&dir.join(&name), c)?;
            Ok(name)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite_and_wrong_shape() {
        assert!(PointCloud::new(array![[0.0, f64::NAN, 0.0]]).is_err());
        assert!(PointCloud::new(array![[0.0, 1.0]]).is_err());
        assert!(PointCloud::new(Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn xyz_accepts_crlf_and_scientific() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.xyz");
        fs::write(&path, "1e-3 2.5E2 -3\r\n0 0 0\r\n").unwrap();
        let cloud = read_xyz(&path).unwrap();
        assert_eq!(cloud.points(), &array![[1e-3, 250.0, -3.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn xyz_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        fs::write(&path, "0 0 0\n1 2\n").unwrap();
        match read_xyz(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn xyz_write_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.xyz");
        let cloud = PointCloud::new(array![[0.1, -1.0 / 3.0, 1e-300], [1e20, 2.0, -0.0]]).unwrap();
        write_xyz(&path, &cloud).unwrap();
        assert_eq!(read_xyz(&path).unwrap(), cloud);
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn normalized_has_requested_diagonal() {
        let cloud = PointCloud::from_rows(&[[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [1.0, 5.0, 1.0]]).unwrap();
        let n = cloud.normalized(2.0);
        let c = n.centroid();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
        let d = (n.points()[[1, 0]] - n.points()[[0, 0]]).powi(2)
            + (n.points()[[2, 1]] - n.points()[[0, 1]]).powi(2);
        assert!((d.sqrt() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn directory_round_trip_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let clouds: Vec<PointCloud> = (0..3)
            .map(|i| PointCloud::from_rows(&[[i as f64, 0.5, -1.0], [0.0, 1.0, 2.0]]).unwrap())
            .collect();
        let names = write_xyz_dir(dir.path(), "sample", &clouds).unwrap();
        assert_eq!(names[2], "sample_0002.xyz");
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        assert_eq!(read_xyz_dir(dir.path()).unwrap(), clouds);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(read_xyz_dir(empty.path()), Err(Error::InvalidInput(_))));
    }
}
