//! Little-endian binary formats: velocity series and checkpoints.
//!
//! Layout shared by both:
//!
//! ```text
//! magic     [u8; 8]
//! version   u32
//! nx ny np  u32 u32 u32
//! nframes   u32
//! times     f64 * nframes
//! frames    (u, v, omega) per frame, each nx*ny*np f64, x fastest then y then p
//! ```
//!
//! A checkpoint has exactly one frame followed by the arrays of T, q_v, q_c, q_r
//! in the same order; its frame time is the state time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Dims, Grid};
use crate::real::Real;
use crate::state::MoistState;
use crate::velocity::{validate_velocity, ValidationTolerance, VelocityField, VelocityProvider};

pub const VELOCITY_MAGIC: [u8; 8] = *b"WCVELSER";
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"WCCHKPT\0";
pub const FORMAT_VERSION: u32 = 1;

struct Header {
    dims: Dims,
    times: Vec<f64>,
}

fn write_header(w: &mut impl Write, magic: [u8; 8], dims: Dims, times: &[f64]) -> std::io::Result<()> {
    w.write_all(&magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for n in [dims.nx, dims.ny, dims.np, times.len()] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    for t in times {
        w.write_all(&t.to_le_bytes())?;
    }
    Ok(())
}

fn write_array<S: Real>(w: &mut impl Write, values: impl Iterator<Item = S>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

struct Reader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                self.malformed("file is truncated")
            } else {
                Error::io(self.path, e)
            }
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn array<S: Real>(&mut self, n: usize) -> Result<Vec<S>> {
        (0..n).map(|_| self.f64().map(S::lit)).collect()
    }

    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn header(&mut self, magic: [u8; 8]) -> Result<Header> {
        let m: [u8; 8] = self.bytes()?;
        if m != magic {
            return Err(self.malformed(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(self.malformed(format!("unsupported version {version}")));
        }
        let (nx, ny, np, nframes) = (self.u32()?, self.u32()?, self.u32()?, self.u32()?);
        if nx == 0 || ny == 0 || np == 0 {
            return Err(self.malformed("grid dimensions must be positive"));
        }
        let times = (0..nframes).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Header {
            dims: Dims {
                nx: nx as usize,
                ny: ny as usize,
                np: np as usize,
            },
            times,
        })
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut rest = [0u8; 1];
        match self.inner.read(&mut rest) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.malformed("trailing bytes after the last array")),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }
}

pub fn write_velocity_series<S: Real>(w: &mut impl Write, frames: &[VelocityField<S>]) -> std::io::Result<()> {
    let dims = frames.first().map(|f| f.dims()).unwrap_or(Dims { nx: 0, ny: 0, np: 0 });
    let times: Vec<f64> = frames.iter().map(|f| f.t.as_f64()).collect();
    write_header(w, VELOCITY_MAGIC, dims, &times)?;
    for f in frames {
        write_array(w, f.u.iter().copied())?;
        write_array(w, f.v.iter().copied())?;
        write_array(w, f.omega.iter().copied())?;
    }
    Ok(())
}

/// Reads every frame; face velocities are rebuilt from the centre samples.
/// `path` is only used in error messages.
pub fn read_velocity_series<S: Real>(r: impl Read, path: &Path) -> Result<Vec<VelocityField<S>>> {
    let mut rd = Reader { inner: r, path };
    let h = rd.header(VELOCITY_MAGIC)?;
    if h.times.is_empty() {
        return Err(rd.malformed("velocity series has no frames"));
    }
    let n = h.dims.cells();
    let mut frames = Vec::with_capacity(h.times.len());
    for &t in &h.times {
        let (u, v, w) = (rd.array(n)?, rd.array(n)?, rd.array(n)?);
        frames.push(VelocityField::from_centers(h.dims, S::lit(t), u, v, w)?);
    }
    rd.expect_end()?;
    Ok(frames)
}

pub fn save_velocity_series<S: Real>(path: &Path, frames: &[VelocityField<S>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_velocity_series(&mut w, frames)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_velocity_series<S: Real>(path: &Path) -> Result<Vec<VelocityField<S>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_velocity_series(BufReader::new(file), path)
}

/// Loads a series, checks it against `grid` and validates every frame.
pub fn load_velocity_provider<S: Real>(path: &Path, grid: &Grid<S>, tol: ValidationTolerance<S>) -> Result<VelocityProvider<S>> {
    let frames = load_velocity_series(path)?;
    if frames[0].dims() != grid.dims() {
        return Err(Error::InvalidVelocity(format!(
            "{}: file grid {:?} does not match configured grid {:?}",
            path.display(),
            frames[0].dims(),
            grid.dims()
        )));
    }
    for f in &frames {
        let report = validate_velocity(f, grid, tol);
        if !report.passed() {
            return Err(Error::InvalidVelocity(format!("{}: {report}", path.display())));
        }
    }
    VelocityProvider::series(frames)
}

pub fn write_checkpoint<S: Real>(w: &mut impl Write, state: &MoistState<S>, vel: &VelocityField<S>) -> std::io::Result<()> {
    write_header(w, CHECKPOINT_MAGIC, state.dims(), &[state.t.as_f64()])?;
    write_array(w, vel.u.iter().copied())?;
    write_array(w, vel.v.iter().copied())?;
    write_array(w, vel.omega.iter().copied())?;
    for f in &state.fields {
        write_array(w, f.interior())?;
    }
    Ok(())
}

/// Reads a checkpoint back into a state and the velocity at its time.
pub fn read_checkpoint<S: Real>(r: impl Read, path: &Path) -> Result<(MoistState<S>, VelocityField<S>)> {
    let mut rd = Reader { inner: r, path };
    let h = rd.header(CHECKPOINT_MAGIC)?;
    if h.times.len() != 1 {
        return Err(rd.malformed(format!("checkpoint must hold one frame, found {}", h.times.len())));
    }
    let n = h.dims.cells();
    let t = S::lit(h.times[0]);
    let (u, v, w) = (rd.array(n)?, rd.array(n)?, rd.array(n)?);
    let vel = VelocityField::from_centers(h.dims, t, u, v, w)?;
    let mut state = MoistState::zeros(h.dims);
    state.t = t;
    for f in &mut state.fields {
        *f = ScalarField::from_interior(h.dims, &rd.array::<S>(n)?)?;
    }
    rd.expect_end()?;
    Ok((state, vel))
}

pub fn save_checkpoint<S: Real>(path: &Path, state: &MoistState<S>, vel: &VelocityField<S>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, state, vel)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Real>(path: &Path) -> Result<(MoistState<S>, VelocityField<S>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}
