//! CSV output. Every file starts with one `#` comment line naming the tool
//! version and the resolved parameters, followed by a header row.

use std::io::Write;

use crate::error::{Error, Result};
use crate::hosidf::HarmonicResponse;
use crate::linsys::mag_db;
use crate::timesim::SimulationTrace;

pub const HOSIDF_COLUMNS: [&str; 6] = ["omega_rad_s", "harmonic_n", "re", "im", "mag_db", "phase_deg_unwrapped"];
pub const TRACE_COLUMNS: [&str; 6] = ["t", "r", "y", "e", "u", "x_rl"];
pub const RESET_COLUMNS: [&str; 2] = ["t_reset", "jump"];

/// The comment line: `# cloc <version>; key=value; ...`.
pub fn header_line(params: &[(String, String)]) -> String {
    let mut line = format!("# cloc {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in params {
        line.push_str("; ");
        line.push_str(k);
        line.push('=');
        // keep the header a single line whatever the value holds
        line.extend(v.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }));
    }
    line
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a table of text fields: header comment, column names, rows.
pub fn write_records<W: Write>(
    mut out: W,
    params: &[(String, String)],
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    writeln!(out, "{}", header_line(params))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns).map_err(csv_error)?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::Parameter(format!(
                "row has {} fields, table has {} columns",
                row.len(),
                columns.len()
            )));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// [`write_records`] for numeric rows (shortest round-trip formatting).
pub fn write_table<W: Write>(
    out: W,
    params: &[(String, String)],
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let rows = rows.into_iter().map(|r| r.iter().map(|v| v.to_string()).collect());
    write_records(out, params, columns, rows)
}

/// Harmonic response in long format: one row per (frequency, harmonic),
/// ordered by grid index then harmonic. Even harmonics are not listed.
pub fn write_hosidf<W: Write>(out: W, params: &[(String, String)], resp: &HarmonicResponse) -> Result<()> {
    let rows = (0..resp.frequencies.len()).flat_map(|i| {
        resp.harmonics.iter().enumerate().map(move |(row, n)| {
            let v = resp.values[row][i];
            vec![
                resp.frequencies[i],
                *n as f64,
                v.re,
                v.im,
                mag_db(v),
                resp.phase_unwrapped[row][i].to_degrees(),
            ]
        })
    });
    write_table(out, params, &HOSIDF_COLUMNS, rows)
}

pub fn write_trace<W: Write>(out: W, params: &[(String, String)], trace: &SimulationTrace) -> Result<()> {
    let rows = (0..trace.len()).map(|i| {
        vec![
            trace.time[i],
            trace.reference[i],
            trace.output[i],
            trace.error[i],
            trace.control[i],
            trace.reset_signal[i],
        ]
    });
    write_table(out, params, &TRACE_COLUMNS, rows)
}

pub fn write_resets<W: Write>(out: W, params: &[(String, String)], trace: &SimulationTrace) -> Result<()> {
    let rows = trace
        .reset_instants
        .iter()
        .zip(&trace.reset_jumps)
        .map(|(t, j)| vec![*t, *j]);
    write_table(out, params, &RESET_COLUMNS, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hosidf::{sweep, Analysis};
    use crate::resetsys::make_fore;

    fn params() -> Vec<(String, String)> {
        vec![
            ("omega_r".into(), "1 rad/s".into()),
            ("note".into(), "two\nlines".into()),
        ]
    }

    #[test]
    fn header_is_one_line_with_version() {
        let h = header_line(&params());
        assert!(h.starts_with("# cloc ") && h.contains("omega_r=1 rad/s"));
        assert!(!h.contains('\n'));
    }

    #[test]
    fn hosidf_table_layout() {
        let fore = make_fore(1.0, 0.0).unwrap();
        let resp = sweep(Analysis::Conventional(&fore), &[1.0, 10.0], 3).unwrap();
        let mut buf = Vec::new();
        write_hosidf(&mut buf, &params(), &resp).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], HOSIDF_COLUMNS.join(","));
        assert_eq!(lines.len(), 2 + 2 * resp.harmonics.len());
        let first: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first[0], 1.0);
        assert_eq!(first[1], 1.0);
        assert_eq!(first[2], resp.values[0][0].re);
    }

    #[test]
    fn output_is_deterministic() {
        let fore = make_fore(1.0, 0.5).unwrap();
        let grid = crate::linsys::log_grid(0.1, 100.0, 50).unwrap();
        let render = || {
            let resp = sweep(Analysis::Conventional(&fore), &grid, 9).unwrap();
            let mut buf = Vec::new();
            write_hosidf(&mut buf, &params(), &resp).unwrap();
            buf
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let mut buf = Vec::new();
        assert!(write_table(&mut buf, &[], &["a", "b"], vec![vec![1.0]]).is_err());
    }
}
