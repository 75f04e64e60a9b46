use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ccabeam::array::{ArrayGeometry, ElementPattern};
use ccabeam::codebook::{pattern_table, Codebook, LayerId};
use ccabeam::sim::{emit_outputs, latency_estimate, run_batch, summarize_se, Scheme, SimConfig};

#[derive(Parser)]
#[command(name = "ccabeam", version, about = "Beam tracking simulator for UAV links with cylindrical conformal arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; defaults are used for absent keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set mobility.sigma_r2=0.06`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SimConfig> {
        let mut c = match &self.config {
            Some(p) => SimConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => SimConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("'{kv}' is not KEY=VALUE"))?;
            c = c.with_override(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// First seed; run `r` uses `seed + r`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scheme to evaluate, repeatable, or `all`. Defaults to the configured scheme.
    #[arg(long)]
    scheme: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte-Carlo simulations and write CSV tables and a manifest.
    Run(RunArgs),
    /// Repeat `run` for each value of one configuration key.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted configuration key, e.g. `injected_error`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Build, inspect or export codebooks.
    Codebook {
        #[command(subcommand)]
        action: CodebookCmd,
    },
    /// Latency budget from the configured constants.
    Latency {
        #[command(flatten)]
        config: ConfigArgs,
        /// Mean mmWave rate per user in bit/s.
        #[arg(long, default_value_t = 1e9)]
        rate: f64,
        /// Largest link distance in meters.
        #[arg(long, default_value_t = 100.0)]
        distance: f64,
        /// Local processing per exchange slot, seconds.
        #[arg(long, default_value_t = 0.0)]
        local_e: f64,
        /// Local processing per tracking slot, seconds.
        #[arg(long, default_value_t = 0.0)]
        local_t: f64,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    /// Transmitting UAV array (`m_t x n_t`).
    Tx,
    /// Receiving UAV array (`m_r x n_r`).
    Rx,
}

#[derive(Args)]
struct BookArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "rx")]
    side: Side,
}

impl BookArgs {
    fn geometry(&self) -> Result<(SimConfig, ArrayGeometry, ElementPattern)> {
        let c = self.config.load()?;
        let (m, n) = match self.side {
            Side::Tx => (c.m_t, c.n_t),
            Side::Rx => (c.m_r, c.n_r),
        };
        let g = ArrayGeometry::cylindrical(m, n, c.r_cyl, c.lambda_c)?;
        let p = ElementPattern::new(c.delta_alpha, c.delta_beta)?;
        Ok((c, g, p))
    }

    fn build(&self) -> Result<Codebook> {
        let (_, g, p) = self.geometry()?;
        Ok(Codebook::build_default(&g, &p)?)
    }
}

#[derive(Subcommand)]
enum CodebookCmd {
    /// Build every default layer and write them as JSON.
    Build {
        #[command(flatten)]
        book: BookArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one line per layer.
    Inspect {
        #[command(flatten)]
        book: BookArgs,
    },
    /// Write selected layers (e.g. `--layer 112x21`) as JSON.
    Export {
        #[command(flatten)]
        book: BookArgs,
        #[arg(long, required = true)]
        layer: Vec<LayerId>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Azimuth pattern cuts of one layer as CSV.
    Pattern {
        #[command(flatten)]
        book: BookArgs,
        #[arg(long)]
        layer: LayerId,
        /// Elevation of the cut in degrees.
        #[arg(long, default_value_t = 90.0)]
        elevation: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_schemes(names: &[String], fallback: Scheme) -> Result<Vec<Scheme>> {
    if names.is_empty() {
        return Ok(vec![fallback]);
    }
    let mut out = Vec::new();
    for n in names {
        let add: Vec<Scheme> = if n == "all" { Scheme::ALL.to_vec() } else { vec![n.parse()?] };
        for s in add {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn execute(config: &SimConfig, schemes: &[Scheme], out: &Path) -> Result<()> {
    let outputs = run_batch(config, schemes)?;
    let files = emit_outputs(&outputs, config, out)?;
    println!("{:<16} {:>8} {:>12}", "scheme", "power_w", "mean_sum_se");
    for r in summarize_se(&outputs) {
        println!("{:<16} {:>8} {:>12.4}", r.scheme.name(), r.power, r.mean_sum_se);
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn prepare(args: &RunArgs) -> Result<(SimConfig, Vec<Scheme>, PathBuf)> {
    let mut c = args.config.load()?;
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(r) = args.runs {
        c.runs = r;
    }
    if let Some(o) = &args.out {
        c.output = o.clone();
    }
    c.validate()?;
    let schemes = parse_schemes(&args.scheme, c.scheme)?;
    let out = c.output.clone();
    Ok((c, schemes, out))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let (c, schemes, out) = prepare(&args)?;
            execute(&c, &schemes, &out)?;
        }
        Command::Sweep { run, param, values } => {
            let (c, schemes, out) = prepare(&run)?;
            for v in &values {
                let cv = c.with_override(&param, v)?;
                cv.validate()?;
                let dir = out.join(format!("{param}={v}"));
                println!("== {param} = {v}");
                execute(&cv, &schemes, &dir)?;
            }
        }
        Command::Codebook { action } => match action {
            CodebookCmd::Build { book, out } => {
                let cb = book.build()?;
                let ids: Vec<LayerId> = cb.layers().map(|l| l.id).collect();
                cb.export(&ids)?.write_json(&out)?;
                println!("{} layers, {} codewords -> {}", ids.len(), cb.codeword_count(), out.display());
            }
            CodebookCmd::Inspect { book } => {
                let cb = book.build()?;
                let g = cb.geometry();
                println!("array {}x{}, N_act,max = {}", g.m(), g.n(), cb.n_act_max());
                println!("{:>8} {:>10} {:>10} {:>6} {:>6} {:>10}", "layer", "bw_a_deg", "bw_e_deg", "n_az", "n_el", "codewords");
                for l in cb.layers() {
                    println!(
                        "{:>8} {:>10.3} {:>10.3} {:>6} {:>6} {:>10}",
                        l.id.to_string(),
                        l.bw_a.to_degrees(),
                        l.bw_e.to_degrees(),
                        l.n_az,
                        l.n_el,
                        l.len()
                    );
                }
            }
            CodebookCmd::Export { book, layer, out } => {
                book.build()?.export(&layer)?.write_json(&out)?;
                println!("exported {} layers -> {}", layer.len(), out.display());
            }
            CodebookCmd::Pattern { book, layer, elevation, step, out } => {
                if !(step > 0.0) {
                    bail!("step must be positive");
                }
                let (_, g, p) = book.geometry()?;
                let rows = pattern_table(&g, &p, layer, elevation.to_radians(), step)?;
                let mut w = String::from("codeword,azimuth_deg,gain_db\n");
                for r in &rows {
                    w.push_str(&format!("{},{},{}\n", r.codeword, r.azimuth_deg, r.gain_db));
                }
                std::fs::write(&out, w)?;
                println!("{} rows -> {}", rows.len(), out.display());
            }
        },
        Command::Latency { config, rate, distance, local_e, local_t } => {
            let c = config.load()?;
            let l = latency_estimate(&c, rate, distance, local_e, local_t);
            let ms = |v: f64| v * 1e3;
            println!("t_msi    {:.6} ms", ms(l.t_msi));
            println!("t_tra    {:.6} ms", ms(l.t_tra));
            println!("t_pro    {:.6} ms", ms(l.t_pro));
            println!("total_e  {:.6} ms", ms(l.total_e));
            println!("total_t  {:.6} ms", ms(l.total_t));
            println!("t_ave    {:.6} ms over 1 + {} slots", ms(l.average), c.t);
        }
        Command::Config { config } => {
            print!("{}", config.load()?.to_toml_string()?);
        }
    }
    Ok(())
}
