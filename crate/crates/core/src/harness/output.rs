use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::{AggregateRow, TrajectoryRow};
use crate::error::{Error, Result};

pub(crate) const TRAJECTORY_HEADER: &str = "replication,iter,cum_samples,cum_prox,cum_inner,gap,dist_sq,elapsed_ms";
pub(crate) const AGGREGATE_HEADER: &str = "iter,cum_samples,mean_gap,ci_gap,mean_dist_sq,ci_dist_sq";

/// Decimal scientific notation with 17 significant digits, enough to
/// round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// File-name-safe form of a label.
pub(crate) fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub(crate) fn trajectory_csv(replication: u64, rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{replication},{},{},{},{},{},{},{}",
            r.iter,
            r.cum_samples,
            r.cum_prox,
            r.cum_inner,
            opt(r.gap),
            opt(r.dist_sq),
            format_float(r.elapsed_ms)
        );
    }
    out
}

pub(crate) fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iter,
            r.cum_samples,
            opt(r.mean_gap),
            opt(r.ci_gap),
            opt(r.mean_dist_sq),
            opt(r.ci_dist_sq)
        );
    }
    out
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
