//! Per-pixel maps and their on-disk formats.
//!
//! Both binary formats are little-endian with a 5-byte magic and a
//! `u32 width, u32 height` header, followed by row-major pixels:
//!
//! | format  | magic   | pixel payload                | invalid pixel   |
//! |---------|---------|------------------------------|-----------------|
//! | normals | `SNMP1` | three `f32` (x, y, z)        | three quiet NaN |
//! | κ       | `SKMP1` | one `f32`                    | quiet NaN       |
//!
//! Maps hold their pixels at `f32` precision, so `read(write(m)) == m`
//! bit for bit.
//!
//! CSV output uses a header line, `,` separators, `.` decimals and `\n`
//! line endings; reals are printed in shortest round-trip form.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sphere::{normalize, UnitVector3, Vec3};

pub const NORMAL_MAGIC: &[u8; 5] = b"SNMP1";
pub const KAPPA_MAGIC: &[u8; 5] = b"SKMP1";
const HEADER_LEN: usize = 5 + 4 + 4;
/// Stored normals must be unit length to within this.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A grid of optional unit normals (absent = no ground truth / invalid).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    pixels: Vec<Option<[f32; 3]>>,
}

impl NormalMap {
    /// A map with every pixel invalid.
    pub fn new(width: usize, height: usize) -> Self {
        NormalMap {
            width,
            height,
            pixels: vec![None; width * height],
        }
    }

    pub fn from_directions(
        width: usize,
        height: usize,
        directions: &[Option<UnitVector3>],
    ) -> Result<Self> {
        if directions.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} map",
                directions.len()
            )));
        }
        let mut m = NormalMap::new(width, height);
        for (i, d) in directions.iter().enumerate() {
            m.set(i, *d);
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.pixels[i].is_some()
    }

    /// The stored `f32` components, if the pixel is valid.
    pub fn raw(&self, i: usize) -> Option<[f32; 3]> {
        self.pixels[i]
    }

    /// The pixel as a unit vector (renormalized in `f64`).
    pub fn get(&self, i: usize) -> Option<UnitVector3> {
        self.pixels[i].map(|[x, y, z]| {
            normalize(Vec3::new(x as f64, y as f64, z as f64)).expect("stored normals are unit")
        })
    }

    pub fn set(&mut self, i: usize, n: Option<UnitVector3>) {
        self.pixels[i] = n.map(|n| [n.x() as f32, n.y() as f32, n.z() as f32]);
    }

    pub fn directions(&self) -> impl Iterator<Item = Option<UnitVector3>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 12 * self.len());
        write_header(&mut out, NORMAL_MAGIC, self.width, self.height);
        for p in &self.pixels {
            let v = p.unwrap_or([f32::NAN; 3]);
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (width, height) = read_header(bytes, NORMAL_MAGIC, 12)?;
        let mut pixels = Vec::with_capacity(width * height);
        for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(12).enumerate() {
            let offset = (HEADER_LEN + 12 * i) as u64;
            let c = [f32_at(chunk, 0), f32_at(chunk, 4), f32_at(chunk, 8)];
            let nans = c.iter().filter(|v| v.is_nan()).count();
            match nans {
                3 => pixels.push(None),
                0 => {
                    let norm = Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64).norm();
                    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
                        return Err(Error::format(
                            offset,
                            format!("pixel {i} has norm {norm}, expected 1"),
                        ));
                    }
                    pixels.push(Some(c));
                }
                _ => {
                    return Err(Error::format(
                        offset,
                        format!("pixel {i} mixes NaN and finite components"),
                    ))
                }
            }
        }
        Ok(NormalMap {
            width,
            height,
            pixels,
        })
    }
}

/// A grid of optional concentrations κ ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaMap {
    width: usize,
    height: usize,
    pixels: Vec<Option<f32>>,
}

impl KappaMap {
    pub fn new(width: usize, height: usize) -> Self {
        KappaMap {
            width,
            height,
            pixels: vec![None; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: &[Option<f64>]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} map",
                values.len()
            )));
        }
        let mut m = KappaMap::new(width, height);
        for (i, v) in values.iter().enumerate() {
            m.set(i, *v)?;
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.pixels[i].map(f64::from)
    }

    pub fn set(&mut self, i: usize, kappa: Option<f64>) -> Result<()> {
        if let Some(k) = kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::domain("kappa", k, "[0, ∞)"));
            }
        }
        self.pixels[i] = kappa.map(|k| k as f32);
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.len());
        write_header(&mut out, KAPPA_MAGIC, self.width, self.height);
        for p in &self.pixels {
            out.extend_from_slice(&p.unwrap_or(f32::NAN).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (width, height) = read_header(bytes, KAPPA_MAGIC, 4)?;
        let mut pixels = Vec::with_capacity(width * height);
        for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32_at(chunk, 0);
            if v.is_nan() {
                pixels.push(None);
            } else if v >= 0.0 && v.is_finite() {
                pixels.push(Some(v));
            } else {
                return Err(Error::format(
                    (HEADER_LEN + 4 * i) as u64,
                    format!("pixel {i} has κ = {v}, expected a finite value ≥ 0"),
                ));
            }
        }
        Ok(KappaMap {
            width,
            height,
            pixels,
        })
    }
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 5], width: usize, height: usize) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_header(bytes: &[u8], magic: &[u8; 5], pixel_bytes: usize) -> Result<(usize, usize)> {
    if bytes.len() < magic.len() || &bytes[..5] != magic {
        return Err(Error::format(
            0,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    let width = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let height = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(pixel_bytes))
        .and_then(|n| n.checked_add(HEADER_LEN));
    match expected {
        Some(e) if e == bytes.len() => Ok((width, height)),
        Some(e) if e > bytes.len() => Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated: {width}x{height} map needs {e} bytes, file has {}",
                bytes.len()
            ),
        )),
        Some(e) => Err(Error::format(
            e as u64,
            format!(
                "{} trailing bytes after a {width}x{height} map",
                bytes.len() - e
            ),
        )),
        None => Err(Error::format(5, "declared size overflows")),
    }
}

pub fn write_normal_map(path: impl AsRef<Path>, map: &NormalMap) -> Result<()> {
    fs::write(path, map.encode())?;
    Ok(())
}

pub fn read_normal_map(path: impl AsRef<Path>) -> Result<NormalMap> {
    NormalMap::decode(&fs::read(path)?)
}

pub fn write_kappa_map(path: impl AsRef<Path>, map: &KappaMap) -> Result<()> {
    fs::write(path, map.encode())?;
    Ok(())
}

pub fn read_kappa_map(path: impl AsRef<Path>) -> Result<KappaMap> {
    KappaMap::decode(&fs::read(path)?)
}

/// Minimal CSV emitter.
pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
        })
    }

    pub fn row<T: std::fmt::Display>(&mut self, fields: &[T]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        let mut first = true;
        for f in fields {
            if !first {
                self.out.write_all(b",")?;
            }
            first = false;
            write!(self.out, "{f}")?;
        }
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Creates `path` and returns a CSV writer on it.
pub fn csv_file(
    path: impl AsRef<Path>,
    header: &[&str],
) -> Result<CsvWriter<std::io::BufWriter<fs::File>>> {
    CsvWriter::new(std::io::BufWriter::new(fs::File::create(path)?), header)
}

/// Writes unit vectors as CSV with header `x,y,z`.
pub fn write_vectors_csv<W: Write>(out: W, vectors: &[UnitVector3]) -> Result<W> {
    let mut w = CsvWriter::new(out, &["x", "y", "z"])?;
    for v in vectors {
        w.row(&v.to_array())?;
    }
    w.finish()
}

/// Parses a CSV of directions. An optional `x,y,z` header line is skipped;
/// rows are renormalized, and zero rows are rejected.
pub fn parse_vectors_csv(text: &str) -> Result<Vec<UnitVector3>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (lineno, line) in text.split('\n').enumerate() {
        let here = offset;
        offset += line.len() as u64 + 1;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || (lineno == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::format(
                here,
                format!("line {}: expected 3 fields", lineno + 1),
            ));
        }
        let mut v = [0.0; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| {
                Error::format(here, format!("line {}: bad number {f:?}", lineno + 1))
            })?;
        }
        let raw = Vec3::from_array(v);
        // keep already-unit rows bit-exact
        let u = if (raw.norm() - 1.0).abs() < 1e-12 {
            UnitVector3::from_unit_unchecked(raw)
        } else {
            normalize(raw)
                .map_err(|_| Error::format(here, format!("line {}: zero vector", lineno + 1)))?
        };
        out.push(u);
    }
    Ok(out)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use crate::sampling::random_unit_vector;

    #[test]
    fn single_pixel_file_is_25_bytes() {
        let m = NormalMap::from_directions(1, 1, &[Some(UnitVector3::Z)]).unwrap();
        let bytes = m.encode();
        assert_eq!(bytes.len(), 25);
        assert_eq!(&bytes[..5], b"SNMP1");
        assert_eq!(&bytes[5..13], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[21..25], &1.0f32.to_le_bytes());
        assert_eq!(NormalMap::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn invalid_pixel_is_nan_triplet() {
        let m = NormalMap::from_directions(2, 1, &[None, Some(UnitVector3::X)]).unwrap();
        let bytes = m.encode();
        for i in 0..3 {
            let v = f32_at(&bytes, 13 + 4 * i);
            assert!(v.is_nan());
        }
        let back = NormalMap::decode(&bytes).unwrap();
        assert!(!back.is_valid(0));
        assert_eq!(back.get(1), Some(UnitVector3::X));
    }

    #[test]
    fn random_map_roundtrip() {
        let mut rng = RngState::new(64);
        let dirs: Vec<_> = (0..64 * 64)
            .map(|i| (i % 13 != 0).then(|| random_unit_vector(&mut rng)))
            .collect();
        let m = NormalMap::from_directions(64, 64, &dirs).unwrap();
        let back = NormalMap::decode(&m.encode()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.encode(), m.encode());
    }

    #[test]
    fn normal_format_errors() {
        let m = NormalMap::from_directions(2, 1, &[Some(UnitVector3::X), Some(UnitVector3::Y)])
            .unwrap();
        let good = m.encode();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            NormalMap::decode(&bad),
            Err(Error::Format { offset: 0, .. })
        ));

        assert!(matches!(
            NormalMap::decode(&good[..good.len() - 1]),
            Err(Error::Format { offset: 36, .. })
        ));
        assert!(NormalMap::decode(&good[..7]).is_err());

        let mut longer = good.clone();
        longer.push(0);
        assert!(matches!(
            NormalMap::decode(&longer),
            Err(Error::Format { offset: 37, .. })
        ));

        let mut non_unit = good.clone();
        non_unit[25..29].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(
            NormalMap::decode(&non_unit),
            Err(Error::Format { offset: 25, .. })
        ));

        let mut mixed = good;
        mixed[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            NormalMap::decode(&mixed),
            Err(Error::Format { offset: 13, .. })
        ));
    }

    #[test]
    fn kappa_roundtrip_and_errors() {
        let ones = KappaMap::from_values(3, 2, &[Some(1.0); 6]).unwrap();
        assert_eq!(KappaMap::decode(&ones.encode()).unwrap(), ones);
        let zeros = KappaMap::from_values(2, 2, &[Some(0.0); 4]).unwrap();
        assert_eq!(KappaMap::decode(&zeros.encode()).unwrap().get(3), Some(0.0));

        let mut bytes = ones.encode();
        bytes[13..17].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(
            KappaMap::decode(&bytes),
            Err(Error::Format { offset: 13, .. })
        ));
        assert!(KappaMap::decode(&ones.encode()[..20]).is_err());
        assert!(KappaMap::decode(b"SNMP1\x01\0\0\0\x01\0\0\0\0\0\0\0").is_err());
        assert!(KappaMap::from_values(1, 1, &[Some(-0.5)]).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.snmp");
        let m = NormalMap::from_directions(1, 2, &[Some(UnitVector3::Y), None]).unwrap();
        write_normal_map(&p, &m).unwrap();
        assert_eq!(read_normal_map(&p).unwrap(), m);
        assert!(matches!(
            read_normal_map(dir.path().join("missing")),
            Err(Error::Io(_))
        ));

        let p = dir.path().join("k.skmp");
        let k = KappaMap::from_values(2, 1, &[Some(3.5), None]).unwrap();
        write_kappa_map(&p, &k).unwrap();
        assert_eq!(read_kappa_map(&p).unwrap(), k);
    }

    #[test]
    fn csv_vectors_roundtrip_exactly() {
        let mut rng = RngState::new(5);
        let v: Vec<_> = (0..20).map(|_| random_unit_vector(&mut rng)).collect();
        let bytes = write_vectors_csv(Vec::new(), &v).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("x,y,z\n"));
        assert!(!text.contains('\r'));
        let back = parse_vectors_csv(&text).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.to_array(), b.to_array());
        }
        assert!(parse_vectors_csv("1,2\n").is_err());
        assert!(parse_vectors_csv("0,0,0\n").is_err());
        assert!(parse_vectors_csv("x,y,z\n1,a,0\n").is_err());
    }
}
