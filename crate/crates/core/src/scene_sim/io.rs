//! ASCII PLY for laser clouds and JSON documents for everything else.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use thiserror::Error;

use super::PointCloud;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed PLY: {0}")]
    Ply(String),
    #[error("malformed JSON in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io { path: path.display().to_string(), source }
}

/// Serializes a cloud as ASCII PLY with `x y z nx ny nz target_id` per vertex.
pub fn ply_string(cloud: &PointCloud) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double nx\nproperty double ny\nproperty double nz\nproperty int target_id\nend_header\n",
        cloud.len()
    );
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let n = cloud.normals.get(i).copied().unwrap_or_else(Vector3::zeros);
        let l = cloud.labels.get(i).copied().unwrap_or(-1);
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {}", p.x, p.y, p.z, n.x, n.y, n.z, l);
    }
    s
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    std::fs::write(path, ply_string(cloud)).map_err(|e| io_err(path, e))
}

pub fn parse_ply(text: &str) -> Result<PointCloud, IoError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(IoError::Ply("missing 'ply' magic".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    for line in lines.by_ref() {
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("format") => {
                if it.next() != Some("ascii") {
                    return Err(IoError::Ply("only ascii PLY is supported".into()));
                }
            }
            Some("element") => {
                if it.next() == Some("vertex") {
                    count = it.next().and_then(|c| c.parse::<usize>().ok());
                }
            }
            Some("property") => {
                if let Some(name) = it.nth(1) {
                    props.push(name.to_string());
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| IoError::Ply("missing vertex count".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(IoError::Ply("missing x/y/z properties".into())),
    };
    let normal_cols = (col("nx"), col("ny"), col("nz"));
    let label_col = col("target_id");
    let mut cloud = PointCloud::default();
    for (row, line) in lines.take(count).enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize| -> Result<f64, IoError> {
            vals.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| IoError::Ply(format!("bad value in vertex row {row}")))
        };
        cloud.points.push(Vector3::new(num(ix)?, num(iy)?, num(iz)?));
        cloud.normals.push(match normal_cols {
            (Some(a), Some(b), Some(c)) => Vector3::new(num(a)?, num(b)?, num(c)?),
            _ => Vector3::zeros(),
        });
        cloud.labels.push(match label_col {
            Some(i) => num(i)? as i64,
            None => -1,
        });
    }
    if cloud.len() != count {
        return Err(IoError::Ply(format!("expected {count} vertices, found {}", cloud.len())));
    }
    Ok(cloud)
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_ply(&text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.display().to_string(), source })
}

pub fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    crate::jsonfmt::write_file(path, value).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_round_trip() {
        let cloud = PointCloud {
            points: vec![Vector3::new(0.1, -2.0, 3.5e-3), Vector3::new(1.0 / 3.0, 0.0, 7.0)],
            normals: vec![Vector3::z(), -Vector3::x()],
            labels: vec![2, -1],
        };
        let back = parse_ply(&ply_string(&cloud)).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn rejects_truncated_files() {
        let mut s = ply_string(&PointCloud::from_points(vec![Vector3::zeros(); 3]));
        s.truncate(s.len() - 20);
        assert!(parse_ply(&s).is_err());
        assert!(parse_ply("hello").is_err());
    }
}
