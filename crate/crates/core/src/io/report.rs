//! CSV output and the run manifest.
//!
//! Numbers are written in shortest round-trip form, so parsing a cell gives
//! back the exact `f64`. Missing values (the last rate of a sweep) are blank.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use crate::effective::TraceProfile;
use crate::error::{Error, Result};
use crate::fem::Field;
use crate::harness::{HomogenizationRow, ManufacturedReport, ResonanceReport, StudyReport};

pub const HOMOGENIZATION_HEADER: &str =
    "eps,omega,E_u_L2,E_v_L2,E_w_L1,R_fr_L1,R_mc,rate_u,d2_l1,d1_l1,residual,wall_ms";
pub const MANUFACTURED_HEADER: &str = "case,h,E_L2,E_H1,rate_L2,rate_H1,residual,wall_ms";
pub const RESONANCE_HEADER: &str = "omega,v_L2,w_L1,residual,status";
pub const PROFILE_HEADER: &str = "x1,value";
pub const FIELD_HEADER: &str = "x1,x2,value";

/// Shortest decimal that parses back to `x`, in plain or exponent form.
pub fn format_number(x: f64) -> String {
    let plain = format!("{x}");
    let sci = format!("{x:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

pub fn write_homogenization_csv<W: Write>(
    rows: &[HomogenizationRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{HOMOGENIZATION_HEADER}")?;
    for r in rows {
        let cells = [
            format_number(r.eps),
            format_number(r.omega),
            format_number(r.e_u_l2),
            format_number(r.e_v_l2),
            format_number(r.e_w_l1),
            format_number(r.r_fr_l1),
            format_number(r.r_mc),
            optional(r.rate_u),
            format_number(r.d2_l1),
            format_number(r.d1_l1),
            format_number(r.residual),
            format_number(r.wall_ms),
        ];
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

pub fn write_manufactured_csv<W: Write>(
    report: &ManufacturedReport,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{MANUFACTURED_HEADER}")?;
    for r in &report.rows {
        let cells = [
            r.case.to_string(),
            format_number(r.h),
            format_number(r.e_l2),
            optional(r.e_h1),
            optional(r.rate_l2),
            optional(r.rate_h1),
            format_number(r.residual),
            format_number(r.wall_ms),
        ];
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

pub fn write_resonance_csv<W: Write>(report: &ResonanceReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RESONANCE_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            format_number(r.omega),
            format_number(r.v_l2),
            format_number(r.w_l1),
            format_number(r.residual),
            r.status.as_str()
        )?;
    }
    out.flush()
}

/// Peak, prediction and fit of a resonance sweep as `quantity,value` rows.
pub fn write_resonance_summary<W: Write>(
    report: &ResonanceReport,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "quantity,value")?;
    writeln!(out, "peak_omega,{}", optional(report.peak))?;
    writeln!(out, "predicted_omega,{}", format_number(report.predicted))?;
    writeln!(out, "dominant_k,{}", format_number(report.dominant_k))?;
    writeln!(out, "growth_exponent,{}", optional(report.growth_exponent))?;
    writeln!(out, "omega_spacing,{}", format_number(report.spacing))?;
    out.flush()
}

pub fn write_profile<W: Write>(
    points: impl IntoIterator<Item = (f64, f64)>,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{PROFILE_HEADER}")?;
    for (x, v) in points {
        writeln!(out, "{},{}", format_number(x), format_number(v))?;
    }
    out.flush()
}

/// Nodal values as `x1,x2,value` rows in unknown order.
pub fn write_field<W: Write>(field: &Field, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{FIELD_HEADER}")?;
    let grid = field.grid();
    for (i, v) in field.values().iter().enumerate() {
        let [x1, x2] = grid.node_coords(i);
        writeln!(
            out,
            "{},{},{}",
            format_number(x1),
            format_number(x2),
            format_number(*v)
        )?;
    }
    out.flush()
}

/// Collects the files a command writes into one directory.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Creates `name` inside the directory and hands a buffered writer to `body`.
    pub fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn profile(&mut self, name: &str, profile: &TraceProfile) -> Result<PathBuf> {
        self.write(name, |w| write_profile(profile.points(), w))
    }

    pub fn field(&mut self, name: &str, field: &Field) -> Result<PathBuf> {
        self.write(name, |w| write_field(field, w))
    }
}

/// Writes the CSV files of a report. Profiles are written when the rows carry them.
pub fn emit_report(report: &StudyReport, out: &mut OutputDir) -> Result<()> {
    match report {
        StudyReport::Manufactured(m) => {
            out.write("manufactured.csv", |w| write_manufactured_csv(m, w))?;
        }
        StudyReport::Homogenization(h) => {
            out.write("manufactured_gate.csv", |w| {
                write_manufactured_csv(&h.gate, w)
            })?;
            out.write("homogenization.csv", |w| {
                write_homogenization_csv(&h.rows, w)
            })?;
            for (i, row) in h.rows.iter().enumerate() {
                if let Some(p) = &row.profiles {
                    out.profile(&format!("profiles/row{i}_v.csv"), &p.v)?;
                    out.profile(&format!("profiles/row{i}_v_eps.csv"), &p.v_eps)?;
                    out.write(&format!("profiles/row{i}_j_eps.csv"), |w| {
                        write_profile(p.j_eps.step_points(), w)
                    })?;
                }
            }
        }
        StudyReport::Resonance(r) => {
            out.write("resonance.csv", |w| write_resonance_csv(r, w))?;
            out.write("resonance_summary.csv", |w| write_resonance_summary(r, w))?;
        }
    }
    Ok(())
}

/// What a run did: the resolved configuration, tool version, time and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_echo: String,
    pub tool_version: String,
    pub timestamp: String,
    pub files: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config_echo: String, files: Vec<PathBuf>) -> Self {
        RunManifest {
            command: command.to_string(),
            config_echo,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
            files,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("command = {}\n", self.command));
        s.push_str(&format!("tool_version = {}\n", self.tool_version));
        s.push_str(&format!("timestamp = {}\n", self.timestamp));
        s.push_str("\n[files]\n");
        for f in &self.files {
            s.push_str(&format!("{}\n", f.display()));
        }
        s.push_str("\n[config]\n");
        s.push_str(&self.config_echo);
        s
    }

    /// Writes `manifest.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Interval1DGrid;
    use crate::harness::RowStatus;

    fn row(eps: f64, e: f64) -> HomogenizationRow {
        HomogenizationRow {
            eps,
            omega: 0.5,
            e_u_l2: e,
            e_v_l2: e,
            e_w_l1: e,
            r_fr_l1: e,
            r_mc: e,
            rate_u: Some(1.0),
            d2_l1: 0.25,
            d1_l1: e,
            residual: 1e-12,
            backward_error: 1e-16,
            flux_mismatch: 0.0,
            unknowns: 10,
            wall_ms: 1.5,
            status: RowStatus::Ok,
            profiles: None,
        }
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0, 5e-324] {
            assert_eq!(
                format_number(x).parse::<f64>().unwrap().to_bits(),
                x.to_bits()
            );
        }
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(
            format_number(1.389329416907543e-12),
            "1.389329416907543e-12"
        );
        assert_eq!(format_number(2e20), "2e20");
        assert_eq!(format_number(1234.5), "1234.5");
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_homogenization_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{HOMOGENIZATION_HEADER}\n")
        );
    }

    #[test]
    fn last_rate_is_blank() {
        let mut rows = vec![row(0.25, 0.2), row(0.125, 0.1), row(0.0625, 0.05)];
        rows[2].rate_u = None;
        let mut buf = Vec::new();
        write_homogenization_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "0.25,0.5,0.2,0.2,0.2,0.2,0.2,1,0.25,0.2,1e-12,1.5"
        );
        assert_eq!(lines[3].split(',').nth(7), Some(""));
        assert_eq!(lines[3].split(',').count(), 12);
    }

    #[test]
    fn constant_profile() {
        let v = TraceProfile::constant(Interval1DGrid::uniform(1.0, 4).unwrap(), 1.0);
        let mut buf = Vec::new();
        write_profile(v.points(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            ["x1,value", "0,1", "0.25,1", "0.5,1", "0.75,1", "1,1"]
        );
    }

    #[test]
    fn manifest_lists_existing_files() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path()).unwrap();
        out.write("a/b.csv", |w| writeln!(w, "x")).unwrap();
        let m = RunManifest::new("check", "geometry.a = 1\n".into(), out.files().to_vec());
        let path = m.write(out.dir()).unwrap();
        for f in &m.files {
            assert!(f.exists());
        }
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("tool_version = ") && text.contains("geometry.a = 1"));
    }
}
