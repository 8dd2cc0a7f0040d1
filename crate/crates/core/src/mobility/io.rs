//! File formats: the trajectory CSV and the `STMM` binary tensor container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::GridSystem;
use super::matrix::MobilityMatrix;
use super::trajectory::{Dataset, TrajectoryRecord};
use crate::error::{Error, Result};

pub const STMM_MAGIC: &[u8; 4] = b"STMM";
/// Record layout: `T: u32, N: u32` followed by `T·N·N` f64 values.
pub const STMM_VERSION_MATRIX: u16 = 1;
/// Flat layout: `count: u32, 0: u32` followed by `count` f64 values.
pub const STMM_VERSION_FLAT: u16 = 2;

const HEADER: [&str; 5] = ["user_id", "day", "hour", "lat", "lon"];

/// Parses trajectory CSV text. Lines starting with `#` are provenance
/// comments and are skipped. An optional trailing `synthetic` column is
/// accepted.
pub fn parse_csv(source: &str, text: &str, hours_per_day: usize) -> Result<Vec<TrajectoryRecord>> {
    parse_reader(source, text.as_bytes(), hours_per_day)
}

pub fn read_csv(path: &Path, hours_per_day: usize) -> Result<Vec<TrajectoryRecord>> {
    let file = File::open(path)?;
    parse_reader(&path.display().to_string(), BufReader::new(file), hours_per_day)
}

fn parse_reader<R: Read>(source: &str, reader: R, hours_per_day: usize) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let ok = cols.len() >= 5
        && cols[..5] == HEADER
        && (cols.len() == 5 || (cols.len() == 6 && cols[5] == "synthetic"));
    if !ok {
        return Err(parse_err(
            1,
            format!("expected header 'user_id,day,hour,lat,lon[,synthetic]', got '{}'", cols.join(",")),
        ));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        let user_id = field(0).to_string();
        if user_id.is_empty() {
            return Err(parse_err(line, "empty user_id".into()));
        }
        let day: i64 = field(1)
            .parse()
            .map_err(|_| parse_err(line, format!("bad day '{}'", field(1))))?;
        let hour: u32 = field(2)
            .parse()
            .map_err(|_| parse_err(line, format!("bad hour '{}'", field(2))))?;
        if hour as usize >= hours_per_day {
            return Err(parse_err(line, format!("hour {hour} outside [0, {hours_per_day})")));
        }
        let lat: f64 = field(3)
            .parse()
            .map_err(|_| parse_err(line, format!("bad lat '{}'", field(3))))?;
        let lon: f64 = field(4)
            .parse()
            .map_err(|_| parse_err(line, format!("bad lon '{}'", field(4))))?;
        if !lat.is_finite() || !lon.is_finite() {
            return Err(parse_err(line, "non-finite coordinate".into()));
        }
        out.push(TrajectoryRecord {
            user_id,
            day,
            hour,
            lat,
            lon,
        });
    }
    Ok(out)
}

/// Writes a dataset in the ingestion schema. `provenance` lines are
/// emitted first as `#` comments; `synthetic` appends a `synthetic=1`
/// column.
pub fn write_csv(path: &Path, dataset: &Dataset, provenance: &[String], synthetic: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(render_csv(dataset, provenance, synthetic).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn render_csv(dataset: &Dataset, provenance: &[String], synthetic: bool) -> String {
    let mut s = String::new();
    for p in provenance {
        if !p.starts_with('#') {
            s.push_str("# ");
        }
        s.push_str(p);
        s.push('\n');
    }
    s.push_str(&HEADER.join(","));
    if synthetic {
        s.push_str(",synthetic");
    }
    s.push('\n');
    for t in &dataset.trajectories {
        for p in &t.points {
            s.push_str(&format!("{},{},{},{},{}", t.user_id, t.day, p.hour, p.lat, p.lon));
            if synthetic {
                s.push_str(",1");
            }
            s.push('\n');
        }
    }
    s
}

/// Sidecar describing an `STMM` matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub grid: GridSystem,
    pub owners: Vec<String>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

pub fn encode_matrices(matrices: &[MobilityMatrix]) -> Vec<u8> {
    let mut buf = Vec::new();
    for m in matrices {
        buf.extend_from_slice(STMM_MAGIC);
        buf.extend_from_slice(&STMM_VERSION_MATRIX.to_le_bytes());
        buf.extend_from_slice(&(m.hours() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.n() as u32).to_le_bytes());
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

/// Writes matrices back to back as `STMM` records plus a JSON sidecar at
/// `<path>.json` holding the grid bounds and record owners.
pub fn write_matrices(path: &Path, matrices: &[MobilityMatrix], grid: &GridSystem, provenance: &[String]) -> Result<()> {
    std::fs::write(path, encode_matrices(matrices))?;
    let sidecar = MatrixSidecar {
        grid: grid.clone(),
        owners: matrices.iter().map(|m| m.owner.clone()).collect(),
        provenance: provenance.to_vec(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, path: &Path) -> Result<&'a [u8]> {
    if *pos + n > bytes.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("truncated at byte {}", *pos),
        });
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn u16_at(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32_at(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode_matrices(bytes: &[u8], owners: &[String], path: &Path) -> Result<Vec<MobilityMatrix>> {
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let magic = take(bytes, &mut pos, 4, path)?;
        if magic != STMM_MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "bad magic".into(),
            });
        }
        let version = u16_at(take(bytes, &mut pos, 2, path)?);
        if version != STMM_VERSION_MATRIX {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("unsupported record version {version}"),
            });
        }
        let t = u32_at(take(bytes, &mut pos, 4, path)?) as usize;
        let n = u32_at(take(bytes, &mut pos, 4, path)?) as usize;
        let raw = take(bytes, &mut pos, t * n * n * 8, path)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let owner = owners.get(out.len()).cloned().unwrap_or_else(|| out.len().to_string());
        out.push(MobilityMatrix::from_data(owner, t, n, data)?);
    }
    if !owners.is_empty() && owners.len() != out.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("sidecar lists {} owners for {} records", owners.len(), out.len()),
        });
    }
    Ok(out)
}

pub fn read_matrices(path: &Path) -> Result<(Vec<MobilityMatrix>, MatrixSidecar)> {
    let sidecar: MatrixSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let bytes = std::fs::read(path)?;
    let matrices = decode_matrices(&bytes, &sidecar.owners, path)?;
    Ok((matrices, sidecar))
}

/// Flat tensor payload in the same container: used for parameter
/// checkpoints, whose shapes live in a JSON manifest.
pub fn encode_flat(values: &[f64]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(14 + values.len() * 8);
    buf.extend_from_slice(STMM_MAGIC);
    buf.extend_from_slice(&STMM_VERSION_FLAT.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_flat(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4, path)? != STMM_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "bad magic".into(),
        });
    }
    let version = u16_at(take(bytes, &mut pos, 2, path)?);
    if version != STMM_VERSION_FLAT {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("expected flat record, got version {version}"),
        });
    }
    let count = u32_at(take(bytes, &mut pos, 4, path)?) as usize;
    take(bytes, &mut pos, 4, path)?;
    let raw = take(bytes, &mut pos, count * 8, path)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_and_comments() {
        let text = "# provenance\nuser_id,day,hour,lat,lon\nu1,0,3,43.1,-89.4\nu2,1,23,43.2,-89.3\n";
        let recs = parse_csv("mem", text, 24).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].hour, 23);
        let ds = Dataset::from_records(&recs);
        let rendered = render_csv(&ds, &["hash=abc".into()], true);
        assert!(rendered.starts_with("# hash=abc\nuser_id,day,hour,lat,lon,synthetic\n"));
        let back = parse_csv("mem", &rendered, 24).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "user_id,day,hour,lat,lon\nu1,0,3,43.1,-89.4\nu1,0,x,43.1,-89.4\n";
        match parse_csv("mem", text, 24) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "user_id,day,hour,lat,lon\nu1,0,30,43.1,-89.4\n";
        assert!(matches!(parse_csv("mem", text, 24), Err(Error::Parse { line: 2, .. })));
        let text = "user,day,hour,lat,lon\n";
        assert!(matches!(parse_csv("mem", text, 24), Err(Error::Parse { line: 1, .. })));
        let text = "user_id,day,hour,lat,lon\nu1,0,3,43.1\n";
        assert!(matches!(parse_csv("mem", text, 24), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn stmm_layout_is_exact() {
        let m = MobilityMatrix::from_data("a", 2, 1, vec![1.0, 0.5]).unwrap();
        let bytes = encode_matrices(&[m.clone()]);
        assert_eq!(&bytes[..4], b"STMM");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &1u32.to_le_bytes());
        assert_eq!(&bytes[14..22], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 16);
        let back = decode_matrices(&bytes, &["a".into()], Path::new("mem")).unwrap();
        assert_eq!(back, vec![m]);
        assert!(decode_matrices(&bytes[..20], &[], Path::new("mem")).is_err());
    }

    #[test]
    fn matrix_files_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSystem::new(0.0, 1.0, 0.0, 1.0, 2, 3).unwrap();
        let mut a = MobilityMatrix::zeros("a", 3, 2);
        a.slice_mut(0)[1] = 1.0;
        let b = MobilityMatrix::zeros("b", 3, 2);
        let path = dir.path().join("m.stmm");
        write_matrices(&path, &[a.clone(), b.clone()], &grid, &[]).unwrap();
        let (ms, side) = read_matrices(&path).unwrap();
        assert_eq!(ms, vec![a, b]);
        assert_eq!(side.grid, grid);
    }

    #[test]
    fn flat_roundtrip() {
        let v = vec![1.5, -2.0, f64::MIN_POSITIVE];
        let b = encode_flat(&v);
        assert_eq!(decode_flat(&b, Path::new("x")).unwrap(), v);
    }
}
