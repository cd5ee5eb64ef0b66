//! Control files: CSV with a `t_hours` column and one lift column in bar per
//! compressor (`u_bar` when there is a single compressor, `u_bar:<id>`
//! otherwise). Rows are interpolated linearly onto the time grid.

use std::path::Path;

use gasgrid_core::model::Network;
use gasgrid_core::sim::{ControlVector, Simulator, TimeSeries};
use gasgrid_core::{BAR, HOUR};

use crate::error::{Error, Result};
use crate::format::fmt9;

fn headers(network: &Network) -> Vec<String> {
    let comps = &network.gas.compressors;
    let mut h = vec![String::from("t_hours")];
    if comps.len() == 1 {
        h.push("u_bar".into());
    } else {
        h.extend(comps.iter().map(|c| format!("u_bar:{}", c.id)));
    }
    h
}

/// Reads a control file and samples it at every grid point of `sim`.
pub fn load_control(path: &Path, sim: &Simulator) -> Result<ControlVector> {
    let network = sim.system().network();
    let expected = headers(network);
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let found: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if found != expected {
        return Err(Error::input(path, format!("expected columns {}, found {}", expected.join(","), found.join(","))));
    }
    let nc = expected.len() - 1;
    let mut columns = vec![Vec::new(); nc];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let values: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::input(path, format!("row {}: {e}", line + 2)))?;
        for (c, col) in columns.iter_mut().enumerate() {
            col.push((values[0] * HOUR, values[c + 1] * BAR));
        }
    }
    if columns.first().is_some_and(|c| c.is_empty()) {
        return Err(Error::input(path, "no control rows"));
    }
    let series = columns
        .into_iter()
        .map(|c| TimeSeries::new(c).map_err(|e| Error::input(path, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity((sim.steps() + 1) * nc);
    for j in 0..=sim.steps() {
        values.extend(series.iter().map(|s| s.value_at(sim.time(j))));
    }
    Ok(ControlVector::new(values, nc)?)
}

/// CSV text of `control` on the grid with step `dt` (s).
pub fn control_csv(network: &Network, control: &ControlVector, dt: f64) -> String {
    let mut out = headers(network).join(",");
    out.push('\n');
    for j in 0..control.points() {
        out.push_str(&fmt9(j as f64 * dt / HOUR));
        for u in control.at(j) {
            out.push(',');
            out.push_str(&fmt9(u / BAR));
        }
        out.push('\n');
    }
    out
}

pub fn save_control(path: &Path, network: &Network, control: &ControlVector, dt: f64) -> Result<()> {
    std::fs::write(path, control_csv(network, control, dt)).map_err(Error::io(path))
}
