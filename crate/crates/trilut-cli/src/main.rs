use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trilut::{bits_per_weight, pack_matrix, unpack_matrix, PackingMode, TernaryMatrix};
use trilut_cli::bench::{run_bench, KernelKind, CSV_HEADER};
use trilut_cli::demo::demo_layer;
use trilut_cli::verify::{verify_file, verify_suite, DEFAULT_SHAPES, DEFAULT_TOKEN_COUNTS};
use trilut_cli::{gen, weight_file, CliError, KernelParams, ShapeSpec};

/// Ternary mixed-precision GeMM toolkit: pack weights, verify kernels
/// bit-exactly against the naive oracle, benchmark, and run a quantized
/// layer end to end.
#[derive(Parser)]
#[command(name = "trilut", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TileArgs {
    /// L1 data cache budget in bytes for tile selection
    #[arg(long, default_value_t = trilut::kernel::DEFAULT_L1_BYTES)]
    l1_bytes: usize,
    /// SIMD register width in bits (determines the token-tile lane count)
    #[arg(long, default_value_t = trilut::kernel::DEFAULT_SIMD_BITS)]
    simd_bits: usize,
    /// Token-tile width override
    #[arg(long)]
    n_tile: Option<usize>,
    /// K-tile feature budget override
    #[arg(long)]
    k_tile: Option<usize>,
}

impl TileArgs {
    fn params(&self) -> KernelParams {
        KernelParams {
            l1_bytes: self.l1_bytes,
            simd_bits: self.simd_bits,
            n_tile: self.n_tile,
            k_tile: self.k_tile,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pack ternary weights into a .vlt file (random or from a raw trit file)
    Pack {
        /// Weight shape MxK
        #[arg(long)]
        shape: ShapeSpec,
        #[arg(long, default_value = "mixed")]
        mode: PackingMode,
        /// Raw input of M*K signed bytes in {-1, 0, 1}; random when omitted
        #[arg(long)]
        input: Option<PathBuf>,
        /// Seed for random weight generation
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        weight_scale: f32,
        /// Output file
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tiles: TileArgs,
    },
    /// Recover raw trits from a packed file
    Unpack {
        #[arg(long)]
        input: PathBuf,
        /// Output file of M*K signed bytes
        #[arg(long)]
        out: PathBuf,
    },
    /// Run kernels against the naive INT32 oracle; nonzero exit on mismatch
    Verify {
        /// Shape MxKxN (repeatable); MxK expands over the default N sweep
        #[arg(long)]
        shape: Vec<ShapeSpec>,
        /// Restrict to one packing mode (default: every applicable mode)
        #[arg(long)]
        mode: Option<PackingMode>,
        /// Verify a packed file instead of generated shapes
        #[arg(long)]
        file: Option<PathBuf>,
        /// Raw trit file to treat as ground truth for --file
        #[arg(long)]
        against: Option<PathBuf>,
        /// Thread counts to exercise, e.g. 1,4
        #[arg(long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tiles: TileArgs,
    },
    /// Benchmark kernels and emit CSV
    Bench {
        /// Shape MxKxN (repeatable); MxK expands over the default N sweep
        #[arg(long)]
        shape: Vec<ShapeSpec>,
        /// Kernels to time
        #[arg(long, value_delimiter = ',', default_values_t = KernelKind::ALL)]
        kernels: Vec<KernelKind>,
        /// Restrict to one packing mode (default: every applicable mode)
        #[arg(long)]
        mode: Option<PackingMode>,
        /// Thread counts, e.g. 1,4
        #[arg(long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write CSV here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Zero the timing fields (byte-stable output for golden tests)
        #[arg(long)]
        no_timing: bool,
        #[command(flatten)]
        tiles: TileArgs,
    },
    /// Quantize FP32 activations, multiply, rescale, and report the error
    /// against an FP32 reference
    DemoLayer {
        /// Shape MxKxN
        #[arg(long)]
        shape: ShapeSpec,
        #[arg(long, default_value = "mixed")]
        mode: PackingMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tiles: TileArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn expand_shapes(shapes: &[ShapeSpec], defaults: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    if shapes.is_empty() {
        for &(m, k) in defaults {
            for &n in &DEFAULT_TOKEN_COUNTS {
                out.push((m, k, n));
            }
        }
    } else {
        for s in shapes {
            match s.n {
                Some(n) => out.push((s.m, s.k, n)),
                None => {
                    for &n in &DEFAULT_TOKEN_COUNTS {
                        out.push((s.m, s.k, n));
                    }
                }
            }
        }
    }
    out
}

/// Model-derived fixtures benched when no --shape is given.
const BENCH_SHAPES: [(usize, usize); 3] = [(320, 3200), (128, 8640), (4096, 14436)];

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Pack {
            shape,
            mode,
            input,
            seed,
            weight_scale,
            out,
            tiles,
        } => {
            let (m, k) = (shape.m, shape.k);
            let weights = match input {
                Some(path) => {
                    let raw = std::fs::read(&path)?;
                    let data: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
                    TernaryMatrix::new(m, k, data, weight_scale)?
                }
                None => gen::random_ternary(m, k, weight_scale, &mut gen::rng_for(seed)),
            };
            let schedule = trilut::make_group_schedule(k, mode)?;
            let cfg = tiles.params().config_for(&schedule)?;
            let packed = pack_matrix(&weights, mode, &cfg)?;
            weight_file::save(&out, &packed, mode)?;
            println!(
                "packed {m}x{k} mode={mode} groups={} m_tile={} k_tile_groups={} payload={} bytes bpw={:.2}",
                packed.schedule().len(),
                packed.m_tile(),
                packed.k_tile_groups(),
                packed.payload().len(),
                bits_per_weight(packed.schedule()),
            );
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Unpack { input, out } => {
            let (packed, mode) = weight_file::load(&input)?;
            let weights = unpack_matrix(&packed)?;
            let raw: Vec<u8> = weights.data().iter().map(|&t| t as u8).collect();
            std::fs::write(&out, &raw)?;
            println!(
                "unpacked {}x{} mode={mode} bpw={:.2} -> {} ({} bytes)",
                packed.m(),
                packed.k(),
                bits_per_weight(packed.schedule()),
                out.display(),
                raw.len()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Verify {
            shape,
            mode,
            file,
            against,
            threads,
            seed,
            tiles,
        } => {
            let params = tiles.params();
            let report = match file {
                Some(path) => {
                    let n = shape.first().and_then(|s| s.n).unwrap_or(32);
                    verify_file(&path, against.as_deref(), n, &threads, seed, &params)?
                }
                None => {
                    let shapes = expand_shapes(&shape, &DEFAULT_SHAPES);
                    let modes: Vec<PackingMode> = match mode {
                        Some(m) => vec![m],
                        None => PackingMode::ALL.to_vec(),
                    };
                    verify_suite(&shapes, &modes, &threads, seed, &params)?
                }
            };
            for line in &report.lines {
                println!("{line}");
            }
            println!(
                "verify: {} cases, {} failures",
                report.cases, report.failures
            );
            if report.failures > 0 {
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }

        Command::Bench {
            shape,
            kernels,
            mode,
            threads,
            repeats,
            seed,
            csv,
            no_timing,
            tiles,
        } => {
            let params = tiles.params();
            let shapes = expand_shapes(&shape, &BENCH_SHAPES);
            let modes: Vec<PackingMode> = match mode {
                Some(m) => vec![m],
                None => PackingMode::ALL.to_vec(),
            };
            let mut rows = vec![CSV_HEADER.to_string()];
            for &(m, k, n) in &shapes {
                for &md in &modes {
                    if trilut::make_group_schedule(k, md).is_err() {
                        eprintln!("# skip M={m} K={k} N={n} mode={md}: K not packable");
                        continue;
                    }
                    for &kernel in &kernels {
                        for &t in &threads {
                            let outcome = run_bench(
                                m, k, n, kernel, md, t, repeats, seed, &params, !no_timing,
                            )?;
                            eprintln!(
                                "# M={m} K={k} N={n} kernel={kernel} mode={md} threads={t} checksum={:#018x}",
                                outcome.checksum
                            );
                            rows.push(outcome.record.to_csv_row());
                        }
                    }
                }
            }
            let body = rows.join("\n") + "\n";
            match csv {
                Some(path) => {
                    let mut f = std::fs::File::create(&path)?;
                    f.write_all(body.as_bytes())?;
                    eprintln!("# wrote {}", path.display());
                }
                None => print!("{body}"),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::DemoLayer {
            shape,
            mode,
            seed,
            tiles,
        } => {
            let n = shape.n.ok_or_else(|| {
                CliError::Format("demo-layer needs a full MxKxN shape".into())
            })?;
            let report = demo_layer(shape.m, shape.k, n, mode, seed, &tiles.params())?;
            println!(
                "demo-layer {}x{}x{} mode={mode} seed={seed}",
                report.m, report.k, report.n
            );
            println!("max abs err: {:.6e}", report.max_abs_err);
            println!("max rel err: {:.4}%", report.max_rel_err * 100.0);
            println!(
                "rounding bound: {:.6e} (within bound: {})",
                report.max_bound, report.within_bound
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
