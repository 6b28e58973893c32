//! CSV outputs. Every file starts with `#` comment lines carrying the
//! program version, the seed and the effective configuration.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use pmgp_core::pm_mcmc::ChainRecord;
use pmgp_core::predict::PredictiveSummary;
use pmgp_core::{Dataset, Hyperparams};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{BenchRow, RStudyResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance written at the top of every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunHeader {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl RunHeader {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        let config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        Self { command: command.to_string(), seed, config }
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# pmgp {VERSION}")?;
        writeln!(w, "# command: {}", self.command)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# config: {}", self.config)
    }
}

/// Opens `path` for writing; `-` means standard output.
pub fn create(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn finish(path: &Path, res: io::Result<()>) -> Result<()> {
    res.map_err(|e| Error::io(path, e))
}

pub fn write_dataset(path: &Path, data: &Dataset, header: &RunHeader) -> Result<()> {
    let mut w = create(path)?;
    finish(path, write_dataset_to(&mut w, data, header).and_then(|_| w.flush()))
}

pub fn write_dataset_to(w: &mut impl Write, data: &Dataset, header: &RunHeader) -> io::Result<()> {
    header.write_to(w)?;
    let cols: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{},y", cols.join(","))?;
    for i in 0..data.n() {
        for v in data.x().row(i) {
            write!(w, "{v},")?;
        }
        writeln!(w, "{}", data.y()[i] as i32)?;
    }
    Ok(())
}

pub fn write_chains(path: &Path, chains: &[ChainRecord], header: &RunHeader) -> Result<()> {
    let mut w = create(path)?;
    finish(path, write_chains_to(&mut w, chains, header).and_then(|_| w.flush()))
}

/// Columns `iteration, chain_id, log_sigma, log_tau_1.., log_estimate, accepted`.
pub fn write_chains_to(w: &mut impl Write, chains: &[ChainRecord], header: &RunHeader) -> io::Result<()> {
    header.write_to(w)?;
    let n_tau = chains.first().and_then(|c| c.thetas.first()).map_or(1, |t| t.dim() - 1);
    let taus: Vec<String> = (1..=n_tau).map(|j| format!("log_tau_{j}")).collect();
    writeln!(w, "iteration,chain_id,log_sigma,{},log_estimate,accepted", taus.join(","))?;
    for c in chains {
        for k in 0..c.thetas.len() {
            write!(w, "{},{},{}", c.iterations[k], c.chain_id, c.thetas[k].log_sigma())?;
            for t in c.thetas[k].log_lengthscales() {
                write!(w, ",{t}")?;
            }
            writeln!(w, ",{},{}", c.log_estimates[k], c.accept_flags[k] as u8)?;
        }
    }
    Ok(())
}

/// One θ sample read back from a chain file.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub chain_id: usize,
    pub iteration: usize,
    pub theta: Hyperparams,
}

pub fn read_chains(path: &Path) -> Result<Vec<ChainSample>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, what: &str| Error::input(format!("{}:{line}: {what}", path.display()));
    let mut out = Vec::new();
    let mut header: Option<Vec<String>> = None;
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let Some(h) = &header else {
            if fields.first() != Some(&"iteration") || fields.get(2) != Some(&"log_sigma") {
                return Err(bad(no + 1, "not a chain file"));
            }
            header = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        };
        if fields.len() != h.len() {
            return Err(bad(no + 1, "wrong number of fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(no + 1, "bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(no + 1, "bad integer"));
        let log_sigma = num(fields[2])?;
        let taus = fields[3..fields.len() - 2].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        out.push(ChainSample {
            iteration: int(fields[0])?,
            chain_id: int(fields[1])?,
            theta: Hyperparams::new(log_sigma, taus)?,
        });
    }
    if header.is_none() {
        return Err(Error::input(format!("{}: empty chain file", path.display())));
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[PredictiveSummary], header: &RunHeader) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        header.write_to(&mut w)?;
        writeln!(w, "test_index,mean_prob,mc_std_error")?;
        for (i, p) in preds.iter().enumerate() {
            writeln!(w, "{i},{},{}", p.mean_prob, p.mc_std_error)?;
        }
        w.flush()
    })();
    finish(path, res)
}

/// Long format: one `method, n, theta_index, r` row per value.
pub fn write_rstudy(path: &Path, results: &[RStudyResult], header: &RunHeader) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        header.write_to(&mut w)?;
        writeln!(w, "method,n,theta_index,r")?;
        for res in results {
            for (k, r) in res.r_values.iter().enumerate() {
                writeln!(w, "{},{},{k},{r}", res.method, res.n)?;
            }
        }
        w.flush()
    })();
    finish(path, res)
}

pub fn write_bench(path: &Path, rows: &[BenchRow], header: &RunHeader) -> Result<()> {
    let mut w = create(path)?;
    let res = (|| {
        header.write_to(&mut w)?;
        writeln!(w, "dataset,n,d,covariance,method,n_imp,acceptance_mean,acceptance_sd,warmup_acceptance,cell")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},\"{}\"",
                r.dataset,
                r.n,
                r.d,
                r.covariance,
                r.method,
                r.n_imp,
                r.acceptance_mean,
                r.acceptance_sd,
                r.warmup_acceptance,
                r.cell()
            )?;
        }
        w.flush()
    })();
    finish(path, res)
}
