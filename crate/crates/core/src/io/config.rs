//! Line-oriented `key = value` configuration files.
//!
//! ```text
//! # canonical sweep
//! geometry.alpha = 1.0
//! geometry.eps = 0.25
//! study.eps_list = 0.25, 0.125, 0.0625
//! source.kind = gaussian_bump
//! ```
//!
//! Keys are dotted, `#` starts a comment, and every key may appear once.
//! Anything not given falls back to [`StudyConfig::with_defaults`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{validate_params, ParamRecord, ResolutionPolicy};
use crate::harness::{linspace, SourceSpec, StudyConfig, SweepForcing, SweepMode};

/// Every accepted key. `geometry.eps_list` is an alias of `study.eps_list`.
pub const KEYS: &[&str] = &[
    "geometry.a",
    "geometry.b",
    "geometry.L",
    "geometry.V",
    "geometry.alpha",
    "geometry.eps",
    "geometry.omega",
    "study.eps_list",
    "study.omega_list",
    "study.omega_range",
    "source.kind",
    "source.m",
    "source.n",
    "source.center",
    "source.width",
    "source.amplitude",
    "source.value",
    "resolution.channel_cells",
    "resolution.channel_layers",
    "resolution.strip_layers",
    "resolution.bulk_h",
    "resolution.h_per_eps",
    "resolution.grading",
    "resolution.max_unknowns",
    "sweep.mode",
    "sweep.forcing",
    "sweep.trace_value",
    "sweep.trace_cells",
    "check.levels",
    "output.dir",
    "output.profiles",
];

fn canonical_key(key: &str) -> &str {
    match key {
        "geometry.eps_list" => "study.eps_list",
        k => k,
    }
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

struct Entries<'a> {
    path: &'a Path,
    map: BTreeMap<&'static str, Entry>,
}

impl<'a> Entries<'a> {
    fn parse(path: &'a Path, text: &str) -> Result<Self> {
        let mut map: BTreeMap<&'static str, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "empty key or value".into(),
                });
            }
            let canon = canonical_key(key);
            let known = *KEYS
                .iter()
                .find(|k| **k == canon)
                .ok_or_else(|| Error::UnknownKey {
                    path: path.to_path_buf(),
                    line,
                    key: key.to_string(),
                })?;
            if let Some(first) = map.get(known) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!(
                        "duplicate key `{key}`: first set on line {}, again on line {line}",
                        first.line
                    ),
                });
            }
            map.insert(
                known,
                Entry {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                },
            );
        }
        Ok(Entries { path, map })
    }

    fn error(&self, e: &Entry, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: e.line,
            message: format!("`{}`: {message}", e.key),
        }
    }

    fn string(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|e| e.value.as_str())
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        let Some(e) = self.map.get(key) else {
            return Ok(None);
        };
        parse_float(&e.value)
            .map(Some)
            .map_err(|m| self.error(e, m))
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        let Some(e) = self.map.get(key) else {
            return Ok(None);
        };
        e.value.parse::<usize>().map(Some).map_err(|_| {
            self.error(
                e,
                format!("expected a non-negative integer, found `{}`", e.value),
            )
        })
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.map.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| parse_float(s.trim()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|m| self.error(e, m))
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        let Some(e) = self.map.get(key) else {
            return Ok(None);
        };
        match e.value.as_str() {
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            v => Err(self.error(e, format!("expected `true` or `false`, found `{v}`"))),
        }
    }

    fn reject(&self, key: &str, why: &str) -> Result<()> {
        match self.map.get(key) {
            Some(e) => Err(self.error(e, why.to_string())),
            None => Ok(()),
        }
    }
}

fn parse_float(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, found `{s}`")),
    }
}

fn validation(e: Error) -> Error {
    match e {
        Error::Validation(_) => e,
        e => Error::Validation(Box::new(e)),
    }
}

/// Reads and resolves a configuration file.
pub fn parse_config(path: &Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// Resolves configuration text; `origin` only labels errors.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<StudyConfig> {
    let entries = Entries::parse(origin, text)?;
    let d = ParamRecord::default();
    let raw = ParamRecord {
        a: entries.float("geometry.a")?.unwrap_or(d.a),
        b: entries.float("geometry.b")?.unwrap_or(d.b),
        channel_length: entries.float("geometry.L")?.unwrap_or(d.channel_length),
        strip_height: entries.float("geometry.V")?.unwrap_or(d.strip_height),
        alpha: entries.float("geometry.alpha")?.unwrap_or(d.alpha),
        eps: match entries.float("geometry.eps")? {
            Some(e) => e,
            // a lone eps list sets the template eps to its first entry
            None => entries
                .floats("study.eps_list")?
                .and_then(|l| l.first().copied())
                .unwrap_or(d.eps),
        },
        omega: entries.float("geometry.omega")?.unwrap_or(d.omega),
    };
    let params = validate_params(&raw).map_err(validation)?;
    let mut cfg = StudyConfig::with_defaults(params);

    if let Some(list) = entries.floats("study.eps_list")? {
        cfg.eps_list = list;
    }
    match (
        entries.floats("study.omega_list")?,
        entries.floats("study.omega_range")?,
    ) {
        (Some(_), Some(_)) => {
            entries.reject("study.omega_range", "conflicts with study.omega_list")?;
        }
        (Some(list), None) => cfg.omega_list = list,
        (None, Some(range)) => {
            let e = &entries.map["study.omega_range"];
            if range.len() != 3 || range[2] < 1.0 || range[2].fract() != 0.0 {
                return Err(entries.error(e, "expected `lo, hi, count`".into()));
            }
            cfg.omega_list = linspace(range[0], range[1], range[2] as usize);
        }
        (None, None) => {}
    }

    cfg.source = resolve_source(&entries, &cfg)?;

    let r = &mut cfg.resolution;
    let dr = ResolutionPolicy::default();
    r.channel_cells = entries
        .count("resolution.channel_cells")?
        .unwrap_or(dr.channel_cells);
    r.channel_layers = entries
        .count("resolution.channel_layers")?
        .unwrap_or(dr.channel_layers);
    r.strip_layers = entries
        .count("resolution.strip_layers")?
        .unwrap_or(dr.strip_layers);
    r.bulk_h = match entries.string("resolution.bulk_h") {
        None | Some("none") => None,
        Some(_) => entries.float("resolution.bulk_h")?,
    };
    r.h_per_eps = entries
        .float("resolution.h_per_eps")?
        .unwrap_or(dr.h_per_eps);
    r.grading = entries.float("resolution.grading")?.unwrap_or(dr.grading);
    r.max_unknowns = entries
        .count("resolution.max_unknowns")?
        .unwrap_or(dr.max_unknowns);

    if let Some(mode) = entries.string("sweep.mode") {
        cfg.sweep.mode = match mode {
            "effective" => SweepMode::Effective,
            "single_eps" => SweepMode::SingleEps,
            other => {
                return Err(entries.error(
                    &entries.map["sweep.mode"],
                    format!("expected `effective` or `single_eps`, found `{other}`"),
                ))
            }
        };
    }
    let trace_value = entries.float("sweep.trace_value")?;
    cfg.sweep.forcing = match entries.string("sweep.forcing") {
        None | Some("constant_trace") => SweepForcing::ConstantTrace(trace_value.unwrap_or(1.0)),
        Some("source") => {
            entries.reject(
                "sweep.trace_value",
                "only applies to sweep.forcing = constant_trace",
            )?;
            SweepForcing::Source
        }
        Some(other) => {
            return Err(entries.error(
                &entries.map["sweep.forcing"],
                format!("expected `constant_trace` or `source`, found `{other}`"),
            ))
        }
    };
    if let Some(cells) = entries.count("sweep.trace_cells")? {
        cfg.sweep.trace_cells = cells;
    }
    if let Some(levels) = entries.floats("check.levels")? {
        cfg.check_levels = levels;
    }
    if let Some(dir) = entries.string("output.dir") {
        cfg.output.dir = PathBuf::from(dir);
    }
    if let Some(p) = entries.flag("output.profiles")? {
        cfg.output.profiles = p;
    }

    cfg.validate().map_err(|e| match e {
        Error::InvalidStudy(_) => e,
        e => validation(e),
    })?;
    Ok(cfg)
}

fn resolve_source(entries: &Entries<'_>, cfg: &StudyConfig) -> Result<SourceSpec> {
    let kind = entries.string("source.kind").unwrap_or("gaussian_bump");
    let cosine_keys = ["source.m", "source.n"];
    let bump_keys = ["source.center", "source.width", "source.amplitude"];
    let reject_all = |keys: &[&str], kind: &str| -> Result<()> {
        for k in keys {
            entries.reject(k, &format!("does not apply to source.kind = {kind}"))?;
        }
        Ok(())
    };
    match kind {
        "cosine_mode" => {
            reject_all(&bump_keys, kind)?;
            reject_all(&["source.value"], kind)?;
            Ok(SourceSpec::CosineMode {
                m: entries.count("source.m")?.unwrap_or(1),
                n: entries.count("source.n")?.unwrap_or(1),
            })
        }
        "gaussian_bump" => {
            reject_all(&cosine_keys, kind)?;
            reject_all(&["source.value"], kind)?;
            let SourceSpec::GaussianBump {
                center,
                width,
                amplitude,
            } = SourceSpec::canonical_bump(&cfg.params)
            else {
                unreachable!("canonical bump is a gaussian")
            };
            let center = match entries.floats("source.center")? {
                None => center,
                Some(c) if c.len() == 2 => [c[0], c[1]],
                Some(_) => {
                    return Err(
                        entries.error(&entries.map["source.center"], "expected `x1, x2`".into())
                    )
                }
            };
            Ok(SourceSpec::GaussianBump {
                center,
                width: entries.float("source.width")?.unwrap_or(width),
                amplitude: entries.float("source.amplitude")?.unwrap_or(amplitude),
            })
        }
        "constant" => {
            reject_all(&cosine_keys, kind)?;
            reject_all(&bump_keys, kind)?;
            Ok(SourceSpec::Constant(
                entries.float("source.value")?.unwrap_or(1.0),
            ))
        }
        other => Err(entries.error(
            &entries.map["source.kind"],
            format!("expected `cosine_mode`, `gaussian_bump` or `constant`, found `{other}`"),
        )),
    }
}

fn list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Writes every setting of `cfg` explicitly; parsing the result gives `cfg` back.
pub fn emit_config(cfg: &StudyConfig) -> String {
    let p = cfg.params.record();
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("geometry.a", format!("{}", p.a));
    put("geometry.b", format!("{}", p.b));
    put("geometry.L", format!("{}", p.channel_length));
    put("geometry.V", format!("{}", p.strip_height));
    put("geometry.alpha", format!("{}", p.alpha));
    put("geometry.eps", format!("{}", p.eps));
    put("geometry.omega", format!("{}", p.omega));
    put("study.eps_list", list(&cfg.eps_list));
    put("study.omega_list", list(&cfg.omega_list));
    match cfg.source {
        SourceSpec::CosineMode { m, n } => {
            put("source.kind", "cosine_mode".into());
            put("source.m", m.to_string());
            put("source.n", n.to_string());
        }
        SourceSpec::GaussianBump {
            center,
            width,
            amplitude,
        } => {
            put("source.kind", "gaussian_bump".into());
            put("source.center", list(&center));
            put("source.width", format!("{width}"));
            put("source.amplitude", format!("{amplitude}"));
        }
        SourceSpec::Constant(c) => {
            put("source.kind", "constant".into());
            put("source.value", format!("{c}"));
        }
    }
    let r = &cfg.resolution;
    put("resolution.channel_cells", r.channel_cells.to_string());
    put("resolution.channel_layers", r.channel_layers.to_string());
    put("resolution.strip_layers", r.strip_layers.to_string());
    put(
        "resolution.bulk_h",
        r.bulk_h
            .map_or_else(|| "none".to_string(), |h| format!("{h}")),
    );
    put("resolution.h_per_eps", format!("{}", r.h_per_eps));
    put("resolution.grading", format!("{}", r.grading));
    put("resolution.max_unknowns", r.max_unknowns.to_string());
    put(
        "sweep.mode",
        match cfg.sweep.mode {
            SweepMode::Effective => "effective",
            SweepMode::SingleEps => "single_eps",
        }
        .into(),
    );
    match cfg.sweep.forcing {
        SweepForcing::ConstantTrace(u0) => {
            put("sweep.forcing", "constant_trace".into());
            put("sweep.trace_value", format!("{u0}"));
        }
        SweepForcing::Source => put("sweep.forcing", "source".into()),
    }
    put("sweep.trace_cells", cfg.sweep.trace_cells.to_string());
    put("check.levels", list(&cfg.check_levels));
    put("output.dir", cfg.output.dir.display().to_string());
    put("output.profiles", cfg.output.profiles.to_string());
    out
}
