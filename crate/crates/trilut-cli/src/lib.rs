//! Library half of the trilut CLI: the on-disk packed-weight format, seeded
//! problem generators, the benchmark runner, the verification driver, and
//! the quantized-layer demo. The binary in `main.rs` is a thin argument
//! parser over these.

pub mod bench;
pub mod demo;
pub mod gen;
pub mod verify;
pub mod weight_file;

use std::fmt;

/// CLI-level error with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    /// Invalid inputs or configuration (packing, shapes, tiles): exit 2.
    Lib(trilut::Error),
    /// Malformed files or arguments: exit 1.
    Format(String),
    /// A kernel disagreed with the oracle: exit 1.
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Format(msg) => write!(f, "{msg}"),
            CliError::VerifyFailed(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<trilut::Error> for CliError {
    fn from(e: trilut::Error) -> Self {
        CliError::Lib(e)
    }
}

/// A problem shape given as `MxK` or `MxKxN` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeSpec {
    pub m: usize,
    pub k: usize,
    pub n: Option<usize>,
}

impl std::str::FromStr for ShapeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        if !(parts.len() == 2 || parts.len() == 3) {
            return Err(format!("shape '{s}' must be MxK or MxKxN"));
        }
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad dimension '{p}' in shape '{s}'"))
        };
        Ok(ShapeSpec {
            m: parse(parts[0])?,
            k: parse(parts[1])?,
            n: if parts.len() == 3 {
                Some(parse(parts[2])?)
            } else {
                None
            },
        })
    }
}

/// Comma-separated thread counts, e.g. `1,4`.
pub fn parse_threads_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let t: usize = part
            .trim()
            .parse()
            .map_err(|_| format!("bad thread count '{part}'"))?;
        if t == 0 {
            return Err("thread count must be >= 1".into());
        }
        out.push(t);
    }
    if out.is_empty() {
        return Err("empty thread list".into());
    }
    Ok(out)
}

/// Tile and hardware parameters shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct KernelParams {
    pub l1_bytes: usize,
    pub simd_bits: usize,
    pub n_tile: Option<usize>,
    pub k_tile: Option<usize>,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            l1_bytes: trilut::kernel::DEFAULT_L1_BYTES,
            simd_bits: trilut::kernel::DEFAULT_SIMD_BITS,
            n_tile: None,
            k_tile: None,
        }
    }
}

impl KernelParams {
    /// Resolves a kernel configuration for a schedule, applying overrides.
    pub fn config_for(
        &self,
        schedule: &trilut::GroupSchedule,
    ) -> Result<trilut::KernelConfig, trilut::Error> {
        let g = schedule.g_max();
        let n_tile = match self.n_tile {
            Some(n) => n,
            None => trilut::kernel::default_n_tile(self.simd_bits)?,
        };
        let k_tile = match self.k_tile {
            Some(k) => k,
            None => trilut::kernel::select_k_tile(g, self.l1_bytes, n_tile)?,
        };
        let groups_per_tile = (k_tile / g as usize).max(1);
        let cfg = trilut::KernelConfig {
            k_tile,
            n_tile,
            block_b: trilut::block_bound(g).min(groups_per_tile),
            threads: 1,
            l1_bytes: self.l1_bytes,
            simd_bits: self.simd_bits,
        };
        cfg.validate_for(schedule)?;
        Ok(cfg)
    }
}
