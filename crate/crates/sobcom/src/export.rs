//! Deterministic result serialization: RFC-4180 CSV tables with fixed
//! 17-significant-digit floats, plus JSON sidecars. Identical inputs
//! produce byte-identical files, so runs can be hash-compared.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::discretize::{Discretization, LocalMassProfile};
use crate::groundstate::{RadialProfile, SolverResult};
use crate::levelmap::diagnostics::{WeightMethod, WeightTable};
use crate::{Error, Result};

/// Shortest float form that survives a parse round trip exactly: 17
/// significant digits, scientific notation, `.` separator.
pub fn float_field(x: f64) -> String {
    format!("{x:.16e}")
}

/// Quote a field when it contains a separator, quote, or line break.
pub fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(headers: Vec<S>) -> Self {
        CsvTable { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(Error::Data(format!(
                "row has {} fields, header has {}",
                row.len(),
                self.headers.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// CRLF-terminated records per RFC 4180.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |fields: &[String], out: &mut String| {
            let escaped: Vec<String> = fields.iter().map(|f| escape(f)).collect();
            out.push_str(&escaped.join(","));
            out.push_str("\r\n");
        };
        line(&self.headers, &mut out);
        for row in &self.rows {
            line(row, &mut out);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// One row per net point: coordinates, then the quasiorbit ordinal (empty
/// when no partition is attached).
pub fn net_table(net: &Discretization) -> Result<CsvTable> {
    let dim = net.model.dim();
    let mut headers: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    headers.push("quasiorbit".into());
    let mut orbit_of = vec![None; net.points.len()];
    for (oi, orbit) in net.quasiorbits.iter().enumerate() {
        for &pi in orbit {
            orbit_of[pi] = Some(oi);
        }
    }
    let mut table = CsvTable::new(headers);
    for (i, p) in net.points.iter().enumerate() {
        let mut row: Vec<String> = p.coords().iter().map(|c| float_field(*c)).collect();
        row.push(orbit_of[i].map(|o| o.to_string()).unwrap_or_default());
        table.push_row(row)?;
    }
    Ok(table)
}

pub fn net_sidecar(net: &Discretization) -> serde_json::Value {
    json!({
        "manifold": net.model.to_config(),
        "epsilon": net.epsilon,
        "nu": net.nu,
        "domain_radius": net.domain_radius,
        "seed": net.seed,
        "points": net.points.len(),
        "quasiorbits": net.quasiorbits.len(),
    })
}

/// Ball-mass profile over a net: point index, estimate, standard error.
pub fn mass_profile_table(profile: &LocalMassProfile) -> Result<CsvTable> {
    let mut table = CsvTable::new(vec!["point", "mass", "stderr"]);
    for (i, (v, s)) in profile.values.iter().zip(&profile.stderrs).enumerate() {
        table.push_row(vec![i.to_string(), float_field(*v), float_field(*s)])?;
    }
    Ok(table)
}

/// Weight table rows: level coordinates, estimate, standard error, method.
pub fn weight_table_csv(table: &WeightTable) -> Result<CsvTable> {
    let width = table.grid.first().map(|z| z.len()).unwrap_or(0);
    let mut headers: Vec<String> = (0..width).map(|i| format!("z{i}")).collect();
    headers.extend(["psi".into(), "stderr".into(), "method".into()]);
    let method = match table.method {
        WeightMethod::ClosedForm => "closed_form",
        WeightMethod::Shell => "shell",
    };
    let mut out = CsvTable::new(headers);
    for ((z, v), s) in table.grid.iter().zip(&table.values).zip(&table.stderrs) {
        let mut row: Vec<String> = z.iter().map(|c| float_field(*c)).collect();
        row.extend([float_field(*v), float_field(*s), method.to_string()]);
        out.push_row(row)?;
    }
    Ok(out)
}

/// Solver output profile as `(r, u)` rows.
pub fn radial_profile_table(profile: &RadialProfile) -> Result<CsvTable> {
    let mut table = CsvTable::new(vec!["r", "u"]);
    for (k, v) in profile.values.iter().enumerate() {
        table.push_row(vec![float_field(profile.node(k)), float_field(*v)])?;
    }
    Ok(table)
}

/// Scalar summary of a ground-state solve.
pub fn solver_summary(result: &SolverResult) -> serde_json::Value {
    json!({
        "kappa": result.kappa,
        "mu": result.mu,
        "lambda_scale": result.lambda_scale,
        "el_residual": result.el_residual,
        "constraint_error": result.constraint_error,
        "iterations": result.iterations,
        "accepted_steps": result.energies.len() - 1,
        "r_max": result.minimizer.r_max(),
        "dr": result.minimizer.dr,
    })
}
