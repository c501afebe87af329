//! Time-major CSV export of a path batch.

use std::io::Write;

use crate::paths::{Channel, PathBatch};
use crate::SimError;

/// One row per (time, path), times outermost, with a header row.
pub fn write_csv<W: Write>(batch: &PathBatch, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "path".to_string(), "eta".to_string(), "tau".to_string()];
    header.extend(Channel::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for (i, t) in batch.times.iter().enumerate() {
        for p in 0..batch.n {
            let mut row = vec![
                format!("{t}"),
                p.to_string(),
                format!("{}", batch.eta[p]),
                batch.tau[p].map_or("inf".to_string(), |v| format!("{v}")),
            ];
            row.extend(Channel::ALL.iter().map(|c| format!("{}", batch.value(p, i, *c))));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| SimError::Export(e.to_string()))?;
    Ok(())
}
