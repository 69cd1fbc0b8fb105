//! Gaussian maps as PLY vertex lists, using the property names common to
//! splat viewers: `x y z f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3`.
//!
//! `f_rest` is stored channel-major (all red coefficients first); opacity is
//! the logit, scales are logarithms, `rot` is `(w, x, y, z)`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use splatwise_core::gaussian::{GaussianMap, GaussianPrimitive, SH_COEFFS};

use crate::error::{DataError, Result};

const REST: usize = SH_COEFFS - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    BinaryLittleEndian,
    Ascii,
}

pub fn property_names() -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..3 * REST).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

/// Ignored on load; some exporters write zero normals.
const OPTIONAL: [&str; 3] = ["nx", "ny", "nz"];

fn to_row(p: &GaussianPrimitive<f32>) -> Vec<f32> {
    let mut row = Vec::with_capacity(59);
    row.extend_from_slice(&p.position);
    row.extend_from_slice(&p.sh[..3]);
    for c in 0..3 {
        for k in 1..SH_COEFFS {
            row.push(p.sh[k * 3 + c]);
        }
    }
    row.push(p.opacity_logit);
    row.extend_from_slice(&p.log_scale);
    row.extend_from_slice(&p.rotation);
    row
}

fn from_row(row: &[f32]) -> GaussianPrimitive<f32> {
    let mut p = GaussianPrimitive::zeroed();
    p.position.copy_from_slice(&row[0..3]);
    p.sh[..3].copy_from_slice(&row[3..6]);
    for c in 0..3 {
        for k in 1..SH_COEFFS {
            p.sh[k * 3 + c] = row[6 + c * REST + (k - 1)];
        }
    }
    let o = 6 + 3 * REST;
    p.opacity_logit = row[o];
    p.log_scale.copy_from_slice(&row[o + 1..o + 4]);
    p.rotation.copy_from_slice(&row[o + 4..o + 8]);
    p
}

pub fn write_map<W: Write>(map: &GaussianMap<f32>, format: PlyFormat, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "ply")?;
    match format {
        PlyFormat::BinaryLittleEndian => writeln!(w, "format binary_little_endian 1.0")?,
        PlyFormat::Ascii => writeln!(w, "format ascii 1.0")?,
    }
    writeln!(w, "element vertex {}", map.len())?;
    for name in property_names() {
        writeln!(w, "property float {name}")?;
    }
    writeln!(w, "end_header")?;
    for p in map.primitives() {
        let row = to_row(p);
        match format {
            PlyFormat::BinaryLittleEndian => {
                for v in row {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            PlyFormat::Ascii => {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
    }
    w.flush()
}

pub fn save_map(path: &Path, map: &GaussianMap<f32>, format: PlyFormat) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    write_map(map, format, file).map_err(|e| DataError::io(path, e))
}

#[derive(Clone, Copy, PartialEq)]
enum Scalar {
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "float" | "float32" => Some(Self::F32),
            "double" | "float64" => Some(Self::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

pub fn read_map<R: Read>(input: R, path: &Path) -> Result<GaussianMap<f32>> {
    let mut r = BufReader::new(input);
    let bad = |m: String| DataError::format(path, m);
    let expected = property_names();
    let layout_error = |found: &[String]| {
        bad(format!(
            "unsupported vertex layout [{}]; expected float properties {} (nx ny nz optional)",
            found.join(" "),
            expected.join(" ")
        ))
    };

    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<R>| -> Result<String> {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| DataError::io(path, e))?;
        if n == 0 {
            return Err(DataError::format(path, "unexpected end of header"));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut r)? != "ply" {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut r)?;
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", other, ..] => return Err(bad(format!("unsupported PLY format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad(format!("bad vertex count '{n}'")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", ty, name] if in_vertex => {
                names.push(name.to_string());
                let Some(s) = Scalar::parse(ty) else { return Err(layout_error(&names)) };
                props.push((name.to_string(), s));
            }
            ["property", ..] if in_vertex => return Err(layout_error(&names)),
            ["property", ..] => {}
            _ => return Err(bad(format!("unexpected header line '{l}'"))),
        }
    }
    let format = format.ok_or_else(|| bad("missing format line".into()))?;
    let count = count.ok_or_else(|| bad("missing vertex element".into()))?;

    // Column of each expected property within a row.
    let mut slot = vec![usize::MAX; expected.len()];
    for (col, (name, _)) in props.iter().enumerate() {
        match expected.iter().position(|e| e == name) {
            Some(i) if slot[i] == usize::MAX => slot[i] = col,
            Some(_) => return Err(layout_error(&names)),
            None if OPTIONAL.contains(&name.as_str()) => {}
            None => return Err(layout_error(&names)),
        }
    }
    if slot.contains(&usize::MAX) {
        return Err(layout_error(&names));
    }

    let mut values = vec![0f64; props.len()];
    let mut row = vec![0f32; expected.len()];
    let mut prims = Vec::with_capacity(count);
    let mut text = String::new();
    for v in 0..count {
        match format {
            PlyFormat::BinaryLittleEndian => {
                for (k, (_, s)) in props.iter().enumerate() {
                    let mut buf = [0u8; 8];
                    r.read_exact(&mut buf[..s.size()])
                        .map_err(|_| bad(format!("truncated data at vertex {v}")))?;
                    values[k] = match s {
                        Scalar::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
                        Scalar::F64 => f64::from_le_bytes(buf),
                    };
                }
            }
            PlyFormat::Ascii => {
                text.clear();
                r.read_line(&mut text).map_err(|e| DataError::io(path, e))?;
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != props.len() {
                    return Err(bad(format!("vertex {v}: {} values, expected {}", fields.len(), props.len())));
                }
                for (k, f) in fields.iter().enumerate() {
                    let parsed = match props[k].1 {
                        Scalar::F32 => f.parse::<f32>().map(f64::from).ok(),
                        Scalar::F64 => f.parse::<f64>().ok(),
                    };
                    values[k] = parsed.ok_or_else(|| bad(format!("vertex {v}: bad number '{f}'")))?;
                }
            }
        }
        for (i, &col) in slot.iter().enumerate() {
            row[i] = values[col] as f32;
        }
        prims.push(from_row(&row));
    }
    Ok(GaussianMap::from_primitives(prims))
}

pub fn load_map(path: &Path) -> Result<GaussianMap<f32>> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_map(file, path)
}
