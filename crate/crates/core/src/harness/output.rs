//! CSV persistence of sweep results. Floats are written with Rust's
//! shortest round-trip formatting, so reading a file back gives the same bits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{RmseReport, TrialResult};
use crate::pipeline::Method;

/// One row per trial per method:
/// `method,snr_db,trial,est_doa_1..est_doa_Q,rmse,failed,solve_ms`.
pub fn write_results_csv<W: Write>(mut out: W, trials: &[TrialResult], q: usize) -> io::Result<()> {
    write!(out, "method,snr_db,trial")?;
    for i in 1..=q {
        write!(out, ",est_doa_{i}")?;
    }
    writeln!(out, ",rmse,failed,solve_ms")?;
    for t in trials {
        for o in &t.outcomes {
            write!(out, "{},{:?},{}", o.method, t.snr_db, t.trial)?;
            for i in 0..q {
                match o.doas.get(i) {
                    Some(v) => write!(out, ",{v:?}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out, ",{:?},{},{:?}", o.rmse, o.failed(), o.solve_ms)?;
        }
    }
    Ok(())
}

/// One row per (method, SNR):
/// `method,snr_db,rmse,failure_rate,n,rmse_detected,not_converged`.
/// Timing is left out so that reruns produce identical files.
pub fn write_aggregate_csv<W: Write>(mut out: W, report: &RmseReport) -> io::Result<()> {
    writeln!(out, "method,snr_db,rmse,failure_rate,n,rmse_detected,not_converged")?;
    for c in &report.cells {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{},{:?},{}",
            c.method,
            c.snr_db,
            c.rmse,
            c.failure_rate(),
            c.n_trials,
            c.rmse_detected,
            c.not_converged
        )?;
    }
    Ok(())
}

/// Writes every kept spectrum to `dir/spectrum_<method>_snr<k>_trial<t>.csv`
/// and returns the number of files written.
pub fn write_spectra(dir: &Path, trials: &[TrialResult]) -> io::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut n = 0;
    for t in trials {
        for o in &t.outcomes {
            if let Some(spec) = &o.spectrum {
                let name = format!("spectrum_{}_snr{}_trial{}.csv", o.method, t.snr_index, t.trial);
                spec.write_csv(io::BufWriter::new(fs::File::create(dir.join(name))?))?;
                n += 1;
            }
        }
    }
    Ok(n)
}

/// File-name friendly method tag.
pub fn method_slug(m: Method) -> String {
    m.name().to_ascii_lowercase()
}
