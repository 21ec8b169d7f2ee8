//! Artifact writers and readers. Every float is printed with 17 significant
//! digits in scientific notation so outputs are byte-stable and round-trip
//! exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use gantk::synthesis::TracePoint;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::{CliError, Result};

/// `v` with 17 significant digits, e.g. `2.5000000000000000e-1`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Compact JSON with floats rendered by [`fmt_f64`]; non-finite values
/// become `null`.
struct FixedFloats;

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value.serialize(&mut ser).map_err(|e| CliError::Config(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, to_json(value)?.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Path(path.to_path_buf(), e.to_string()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::Path(path.to_path_buf(), e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Path(path.to_path_buf(), e.to_string())
}

pub fn write_trace(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["iter", "loss", "grad_norm", "min_grad_sq"]).map_err(&err)?;
    for t in trace {
        w.write_record([t.iter.to_string(), fmt_f64(t.loss), fmt_f64(t.grad_norm), fmt_f64(t.min_grad_sq)])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::Path(path.to_path_buf(), e.to_string()))
}

/// One row per point, header `x0,x1,..`.
pub fn write_points(path: &Path, points: &DMatrix<f64>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record((0..points.ncols()).map(|j| format!("x{j}"))).map_err(&err)?;
    for r in points.row_iter() {
        w.write_record(r.iter().map(|v| fmt_f64(*v))).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::Path(path.to_path_buf(), e.to_string()))
}

pub fn read_points(path: &Path) -> Result<DMatrix<f64>> {
    let err = csv_err(path);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    let mut data = Vec::new();
    let mut ncols = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(&err)?;
        if *ncols.get_or_insert(rec.len()) != rec.len() {
            return Err(CliError::Path(path.to_path_buf(), format!("row {i} has {} fields", rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::Path(path.to_path_buf(), format!("row {i}: not a number: {field:?}")))?;
            data.push(v);
        }
    }
    let ncols = ncols.ok_or_else(|| CliError::Path(path.to_path_buf(), "no data rows".into()))?;
    Ok(DMatrix::from_row_slice(data.len() / ncols, ncols, &data))
}

/// Binary greyscale PGM; values are clamped to `[0, 1]` and scaled to 255.
pub fn encode_pgm(image: &[f64], height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(image.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Parses a `P5` file with maxval 255 into `(height, width, pixels in [0, 1])`.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM".into());
    }
    let mut num = || -> std::result::Result<usize, String> {
        let t = token()?;
        t.parse().map_err(|_| format!("bad header field {t:?}"))
    };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let body = &bytes[pos + 1..];
    if body.len() != width * height {
        return Err(format!("expected {} pixels, found {}", width * height, body.len()));
    }
    Ok((height, width, body.iter().map(|&b| b as f64 / 255.0).collect()))
}

/// Writes every row of `rows` as `dir/NNNNN.pgm`.
pub fn write_images(dir: &Path, rows: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Path(dir.to_path_buf(), e.to_string()))?;
    for (i, r) in rows.row_iter().enumerate() {
        let pixels: Vec<f64> = r.iter().copied().collect();
        write_file(&dir.join(format!("{i:05}.pgm")), &encode_pgm(&pixels, shape.0, shape.1))?;
    }
    Ok(())
}

/// Reads every `*.pgm` in `dir`, in file-name order, as row-major rows.
pub fn read_images(dir: &Path) -> Result<(DMatrix<f64>, (usize, usize))> {
    let err = |m: String| CliError::Path(dir.to_path_buf(), m);
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| err(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(err("no .pgm files".into()));
    }
    let mut shape = None;
    let mut data = Vec::new();
    for p in &names {
        let bytes = fs::read(p).map_err(|e| CliError::Path(p.clone(), e.to_string()))?;
        let (h, w, px) = decode_pgm(&bytes).map_err(|m| CliError::Path(p.clone(), m))?;
        if *shape.get_or_insert((h, w)) != (h, w) {
            return Err(CliError::Path(p.clone(), "image size differs from the first image".into()));
        }
        data.extend(px);
    }
    let (h, w) = shape.expect("at least one image");
    Ok((DMatrix::from_row_slice(names.len(), h * w, &data), (h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits_and_round_trip() {
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_uses_fixed_floats() {
        let v = serde_json::json!({"a": 0.5, "b": 3, "c": f64::NAN});
        assert_eq!(to_json(&v).unwrap(), "{\"a\":5.0000000000000000e-1,\"b\":3,\"c\":null}\n");
        let back: serde_json::Value = serde_json::from_str(&to_json(&v).unwrap()).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.5));
    }

    #[test]
    fn pgm_header_and_round_trip() {
        let px: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let bytes = encode_pgm(&px, 2, 3);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 6);
        let (h, w, back) = decode_pgm(&bytes).unwrap();
        assert_eq!((h, w), (2, 3));
        for (a, b) in px.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 255.0);
        }
        assert!(decode_pgm(b"P6\n1 1\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn csv_files_round_trip_with_lf_endings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let pts = DMatrix::from_row_slice(2, 2, &[0.1, -2.0, 1e-20, 3.5]);
        write_points(&path, &pts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1\n") && !text.contains('\r'));
        assert_eq!(read_points(&path).unwrap(), pts);
        let trace = [TracePoint {
            iter: 0,
            loss: 1.0,
            grad_norm: 2.0,
            min_grad_sq: 4.0,
        }];
        let tpath = dir.path().join("t.csv");
        write_trace(&tpath, &trace).unwrap();
        assert_eq!(
            std::fs::read_to_string(&tpath).unwrap(),
            "iter,loss,grad_norm,min_grad_sq\n0,1.0000000000000000e0,2.0000000000000000e0,4.0000000000000000e0\n"
        );
    }
}
