//! Trajectory files.
//!
//! CSV: header `t,x,y,z`, one row per sample, every value written with 17
//! significant digits so that it parses back to the same `f64`.
//!
//! Binary (`ATLB`): magic `ATLB`, `u16` version, `u64` sample count, `f64`
//! dt, `f64` t0, then `x, y, z` per sample; all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{State, Trajectory};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"ATLB";
pub const BINARY_VERSION: u16 = 1;

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryFormat {
    #[default]
    Csv,
    Binary,
}

impl TrajectoryFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TrajectoryFormat::Csv => "csv",
            TrajectoryFormat::Binary => "atlb",
        }
    }
}

pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "z"])?;
    for (k, s) in traj.samples().iter().enumerate() {
        w.write_record([
            fmt_f64(traj.time(k)),
            fmt_f64(s.x),
            fmt_f64(s.y),
            fmt_f64(s.z),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV trajectory. `dt` comes from the file's time column unless
/// given explicitly (a dataset manifest stores it exactly).
pub fn read_csv<R: Read>(input: R, dt: Option<f64>, origin: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "x", "y", "z"] {
        return Err(Error::format(origin, "expected header t,x,y,z"));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(origin, format!("bad number: {e}")))?;
        if vals.len() != 4 {
            return Err(Error::format(origin, "expected 4 columns"));
        }
        times.push(vals[0]);
        samples.push(State::new(vals[1], vals[2], vals[3]));
    }
    if samples.is_empty() {
        return Err(Error::format(origin, "no samples"));
    }
    let dt = match dt {
        Some(dt) => dt,
        None if times.len() >= 2 => (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64,
        None => return Err(Error::format(origin, "cannot infer dt from a single sample")),
    };
    Trajectory::new(samples, dt, times[0])
}

pub fn write_binary<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(traj.len() as u64).to_le_bytes())?;
    out.write_all(&traj.dt().to_le_bytes())?;
    out.write_all(&traj.t0().to_le_bytes())?;
    for s in traj.samples() {
        for v in s.to_array() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_binary<R: Read>(mut input: R, origin: &Path) -> Result<Trajectory> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::format(origin, "bad magic (expected ATLB)"));
    }
    let mut v = [0u8; 2];
    input.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != BINARY_VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let n = read_u64(&mut input)? as usize;
    let dt = read_f64(&mut input)?;
    let t0 = read_f64(&mut input)?;
    let mut samples = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let x = read_f64(&mut input)?;
        let y = read_f64(&mut input)?;
        let z = read_f64(&mut input)?;
        samples.push(State::new(x, y, z));
    }
    Trajectory::new(samples, dt, t0)
}

pub fn save(traj: &Trajectory, path: &Path, format: TrajectoryFormat) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    match format {
        TrajectoryFormat::Csv => write_csv(traj, f),
        TrajectoryFormat::Binary => write_binary(traj, f),
    }
}

/// Loads a trajectory, picking the format from the file's leading bytes.
pub fn load(path: &Path, dt: Option<f64>) -> Result<Trajectory> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.starts_with(BINARY_MAGIC) {
        read_binary(bytes.as_slice(), path)
    } else {
        read_csv(bytes.as_slice(), dt, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{integrate, LorenzParams};
    use proptest::prelude::*;

    fn sample_traj() -> Trajectory {
        integrate(
            State::new(1.0, 1.0, 1.0),
            &LorenzParams::default(),
            0.01,
            50,
            3,
        )
        .unwrap()
    }

    #[test]
    fn csv_layout() {
        let t = sample_traj();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,y,z"));
        assert!(lines.next().unwrap().starts_with("2.9999999999999999e-2,"));
        let back = read_csv(buf.as_slice(), Some(0.01), Path::new("mem")).unwrap();
        assert_eq!(back.samples(), t.samples());
        assert_eq!(back.t0(), t.t0());
    }

    #[test]
    fn binary_layout() {
        let t = sample_traj();
        let mut buf = Vec::new();
        write_binary(&t, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ATLB");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(buf.len(), 4 + 2 + 8 + 8 + 8 + 50 * 24);
        let back = read_binary(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(read_binary(&b"XXXX\x01\x00"[..], Path::new("m")).is_err());
        assert!(read_csv(&b"a,b,c\n1,2,3\n"[..], None, Path::new("m")).is_err());
        assert!(read_csv(&b"t,x,y,z\n0,1,2,3\n"[..], None, Path::new("m")).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            xs in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6, -1e-300f64..1e300), 1..40),
            dt in 1e-6f64..10.0,
        ) {
            let samples: Vec<State> = xs.iter().map(|&(x, y, z)| State::new(x, y, z)).collect();
            let t = Trajectory::new(samples, dt, 0.0).unwrap();
            let mut buf = Vec::new();
            write_csv(&t, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), Some(dt), Path::new("mem")).unwrap();
            prop_assert_eq!(back.samples(), t.samples());
        }
    }
}
