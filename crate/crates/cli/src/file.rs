//! Sectioned system-definition files.
//!
//! ```text
//! [system]
//! vars = x1 x2
//! rank = 2
//! J 1 2 = 1
//! H = (x1^2 + x2^2)/2
//!
//! [domain]
//! range x1 = -2 2
//! range x2 = -2 2
//! exclude = x1^2 + x2^2
//! epsilon_exclude = 1e-3
//!
//! [sample]
//! points = 200
//! seed = 42
//!
//! [ntt]
//! eta = x1^2 + x2^2
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use poisson_ntt::expr::{parse, Expression, ParseError, Rational, FUNCTION_NAMES};
use poisson_ntt::ntt::{is_reserved_name, reserved_names, NttSpec, StructureFactor};
use poisson_ntt::poisson::{Domain, PoissonSystem, SamplePlan, StructureMatrix, Tolerances};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Missing(String),
}

fn at(line: usize, message: impl fmt::Display) -> FileError {
    FileError::Line {
        line,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    System,
    Domain,
    Sample,
    Ntt,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "system" => Some(Section::System),
            "domain" => Some(Section::Domain),
            "sample" => Some(Section::Sample),
            "ntt" => Some(Section::Ntt),
            _ => None,
        }
    }
}

/// One `key = value` line; `value_column` is 1-based within the source line.
#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: Vec<String>,
    value: String,
    value_column: usize,
}

impl Entry {
    fn expression<S: AsRef<str>>(&self, vars: &[S]) -> Result<Expression, FileError> {
        parse(&self.value, vars).map_err(|err| self.parse_error(err))
    }

    fn parse_error(&self, err: ParseError) -> FileError {
        at(self.line, err.offset_columns(self.value_column - 1))
    }

    fn number<T: std::str::FromStr>(&self, what: &str) -> Result<T, FileError> {
        self.value.parse().map_err(|_| {
            at(
                self.line,
                format!("{what} expects a number, got '{}'", self.value),
            )
        })
    }
}

/// The `[ntt]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct NttSection {
    pub spec: NttSpec,
    /// `Hstar`, when given alongside an explicit `eta`.
    pub hstar: Option<Expression>,
    pub factor: Option<StructureFactor>,
    pub min_eta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SystemFile {
    pub system: PoissonSystem,
    pub plan: SamplePlan,
    pub ntt: Option<NttSection>,
}

impl SystemFile {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }
}

impl std::str::FromStr for SystemFile {
    type Err = FileError;

    fn from_str(text: &str) -> Result<Self, FileError> {
        let sections = split_sections(text)?;
        let empty = Vec::new();
        let get = |s: Section| sections.get(&s).unwrap_or(&empty);
        let system = build_system(get(Section::System))?;
        let domain = build_domain(get(Section::Domain), system.vars())?;
        let plan = build_plan(get(Section::Sample), domain)?;
        let ntt = build_ntt(get(Section::Ntt), &system)?;
        Ok(SystemFile { system, plan, ntt })
    }
}

fn split_sections(text: &str) -> Result<HashMap<Section, Vec<Entry>>, FileError> {
    let mut sections: HashMap<Section, Vec<Entry>> = HashMap::new();
    let mut current = None;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| at(line, "unterminated section header"))?
                .trim();
            let section = Section::from_name(name)
                .ok_or_else(|| at(line, format!("unknown section [{name}]")))?;
            if sections.contains_key(&section) {
                return Err(at(line, format!("section [{name}] appears twice")));
            }
            sections.insert(section, Vec::new());
            current = Some(section);
            continue;
        }
        let section = current.ok_or_else(|| at(line, "entry before any [section] header"))?;
        let eq = content
            .find('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{trimmed}'")))?;
        let key: Vec<String> = content[..eq]
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if key.is_empty() {
            return Err(at(line, "missing key before '='"));
        }
        let after = &content[eq + 1..];
        let lead = after.len() - after.trim_start().len();
        let value = after.trim().to_string();
        if value.is_empty() {
            return Err(at(line, format!("missing value for '{}'", key.join(" "))));
        }
        let value_column = content[..eq + 1 + lead].chars().count() + 1;
        sections
            .get_mut(&section)
            .expect("section registered")
            .push(Entry {
                line,
                key,
                value,
                value_column,
            });
    }
    Ok(sections)
}

/// Rejects a second occurrence of a single-valued key.
fn single<'a>(slot: &mut Option<&'a Entry>, entry: &'a Entry) -> Result<(), FileError> {
    if let Some(first) = slot {
        return Err(at(
            entry.line,
            format!(
                "'{}' already set on line {}",
                entry.key.join(" "),
                first.line
            ),
        ));
    }
    *slot = Some(entry);
    Ok(())
}

fn build_system(entries: &[Entry]) -> Result<PoissonSystem, FileError> {
    let mut vars_entry = None;
    let mut rank_entry = None;
    let mut h_entry = None;
    let mut j_entries = Vec::new();
    let mut casimir_entries = Vec::new();
    for entry in entries {
        match entry
            .key
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .as_slice()
        {
            ["vars"] => single(&mut vars_entry, entry)?,
            ["rank"] => single(&mut rank_entry, entry)?,
            ["H"] => single(&mut h_entry, entry)?,
            ["casimir"] => casimir_entries.push(entry),
            ["J", i, j] => j_entries.push((entry, *i, *j)),
            _ => {
                return Err(at(
                    entry.line,
                    format!("unknown key '{}' in [system]", entry.key.join(" ")),
                ))
            }
        }
    }
    let vars_entry =
        vars_entry.ok_or_else(|| FileError::Missing("[system] needs 'vars = ...'".into()))?;
    let vars: Vec<String> = vars_entry
        .value
        .split_whitespace()
        .map(str::to_string)
        .collect();
    for (i, v) in vars.iter().enumerate() {
        let valid = v
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid || FUNCTION_NAMES.contains(&v.as_str()) {
            return Err(at(
                vars_entry.line,
                format!("'{v}' is not a valid variable name"),
            ));
        }
        if vars[..i].contains(v) {
            return Err(at(
                vars_entry.line,
                format!("variable '{v}' declared twice"),
            ));
        }
    }
    let n = vars.len();

    let mut structure = StructureMatrix::zeros(n);
    let mut seen = HashMap::new();
    for (entry, i, j) in j_entries {
        let index = |s: &str| -> Result<usize, FileError> {
            match s.parse::<usize>() {
                Ok(k) if (1..=n).contains(&k) => Ok(k - 1),
                _ => Err(at(
                    entry.line,
                    format!("J index '{s}' must be between 1 and {n}"),
                )),
            }
        };
        let (i, j) = (index(i)?, index(j)?);
        if i >= j {
            return Err(at(
                entry.line,
                format!(
                    "only entries J i j with i < j may be given (got J {} {})",
                    i + 1,
                    j + 1
                ),
            ));
        }
        if let Some(first) = seen.insert((i, j), entry.line) {
            return Err(at(
                entry.line,
                format!("J {} {} already set on line {first}", i + 1, j + 1),
            ));
        }
        structure
            .set(i, j, entry.expression(&vars)?)
            .map_err(|err| at(entry.line, err))?;
    }

    let h_entry = h_entry.ok_or_else(|| FileError::Missing("[system] needs 'H = ...'".into()))?;
    let hamiltonian = h_entry.expression(&vars)?;
    let casimirs = casimir_entries
        .iter()
        .map(|c| c.expression(&vars))
        .collect::<Result<Vec<_>, _>>()?;
    let rank = match rank_entry {
        Some(entry) => entry.number::<usize>("rank")?,
        None => n.saturating_sub(casimirs.len()),
    };
    let line = rank_entry.map_or(vars_entry.line, |e| e.line);
    PoissonSystem::new(vars, structure, hamiltonian, casimirs, rank).map_err(|err| at(line, err))
}

fn build_domain(entries: &[Entry], vars: &[String]) -> Result<Domain, FileError> {
    let mut bounds: Vec<Option<(f64, f64)>> = vec![None; vars.len()];
    let mut exclusions = Vec::new();
    let mut epsilon = None;
    for entry in entries {
        match entry
            .key
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .as_slice()
        {
            ["range", name] => {
                let k = vars.iter().position(|v| v == name).ok_or_else(|| {
                    at(
                        entry.line,
                        format!("range for undeclared variable '{name}'"),
                    )
                })?;
                if bounds[k].is_some() {
                    return Err(at(entry.line, format!("range for '{name}' given twice")));
                }
                let parts: Vec<&str> = entry.value.split_whitespace().collect();
                let parsed: Vec<f64> = parts.iter().filter_map(|s| s.parse().ok()).collect();
                match parsed.as_slice() {
                    [lo, hi] if parts.len() == 2 && lo.is_finite() && hi.is_finite() && lo < hi => {
                        bounds[k] = Some((*lo, *hi));
                    }
                    _ => {
                        return Err(at(
                            entry.line,
                            format!(
                                "range expects two finite numbers lo < hi, got '{}'",
                                entry.value
                            ),
                        ))
                    }
                }
            }
            ["exclude"] => exclusions.push(entry.expression(vars)?),
            ["epsilon_exclude"] => {
                if epsilon.is_some() {
                    return Err(at(entry.line, "'epsilon_exclude' given twice"));
                }
                epsilon = Some((entry.line, entry.number::<f64>("epsilon_exclude")?));
            }
            _ => {
                return Err(at(
                    entry.line,
                    format!("unknown key '{}' in [domain]", entry.key.join(" ")),
                ))
            }
        }
    }
    let bounds = bounds
        .into_iter()
        .zip(vars)
        .map(|(b, v)| {
            b.ok_or_else(|| FileError::Missing(format!("[domain] needs 'range {v} = lo hi'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut domain = Domain::new(bounds).map_err(|err| FileError::Missing(err.to_string()))?;
    for e in exclusions {
        domain = domain
            .exclude(e)
            .map_err(|err| FileError::Missing(err.to_string()))?;
    }
    if let Some((line, eps)) = epsilon {
        domain = domain.with_epsilon(eps).map_err(|err| at(line, err))?;
    }
    Ok(domain)
}

fn build_plan(entries: &[Entry], domain: Domain) -> Result<SamplePlan, FileError> {
    let mut plan = SamplePlan::new(domain);
    let (mut points, mut seed) = (None, None);
    for entry in entries {
        match entry
            .key
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .as_slice()
        {
            ["points"] => {
                single(&mut points, entry)?;
                let n: usize = entry.number("points")?;
                if n == 0 {
                    return Err(at(entry.line, "points must be positive"));
                }
                plan = plan.with_points(n);
            }
            ["seed"] => {
                single(&mut seed, entry)?;
                plan = plan.with_seed(entry.number("seed")?);
            }
            _ => {
                return Err(at(
                    entry.line,
                    format!("unknown key '{}' in [sample]", entry.key.join(" ")),
                ))
            }
        }
    }
    Ok(plan.with_tolerances(Tolerances::default()))
}

fn build_ntt(entries: &[Entry], system: &PoissonSystem) -> Result<Option<NttSection>, FileError> {
    if entries.is_empty() {
        return Ok(None);
    }
    let vars = system.vars();
    let k = system.casimirs().len();
    let mut kinds: Vec<&Entry> = Vec::new();
    let (mut hstar, mut factor, mut min_eta) = (None, None::<&Entry>, None);
    for entry in entries {
        match entry
            .key
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .as_slice()
        {
            ["eta"] | ["Phi"] | ["F"] => kinds.push(entry),
            ["Hstar"] => single(&mut hstar, entry)?,
            ["eta0"] | ["c"] | ["casimir_factor"] => {
                if let Some(first) = factor {
                    return Err(at(
                        entry.line,
                        format!(
                            "structure factor already given as '{}' on line {}",
                            first.key[0], first.line
                        ),
                    ));
                }
                factor = Some(entry);
            }
            ["min_eta"] => single(&mut min_eta, entry)?,
            _ => {
                return Err(at(
                    entry.line,
                    format!("unknown key '{}' in [ntt]", entry.key.join(" ")),
                ))
            }
        }
    }
    let kind = match kinds.as_slice() {
        [one] => *one,
        [] => {
            return Err(FileError::Missing(
                "[ntt] needs exactly one of 'eta', 'Phi' or 'F'".into(),
            ))
        }
        [_, second, ..] => {
            return Err(at(
                second.line,
                "[ntt] takes exactly one of 'eta', 'Phi' or 'F'",
            ))
        }
    };
    if kind.key[0] != "eta" {
        if let Some(v) = vars.iter().find(|v| is_reserved_name(v)) {
            return Err(at(
                kind.line,
                format!(
                    "variable '{v}' collides with the reserved symbols z1, z2, ... used by {}",
                    kind.key[0]
                ),
            ));
        }
    }
    let hstar = hstar.map(|e| e.expression(vars)).transpose()?;
    let spec = match kind.key[0].as_str() {
        "eta" => NttSpec::Explicit {
            eta: kind.expression(vars)?,
        },
        "Phi" => NttSpec::Constructive {
            phi: kind.expression(&reserved_names(k + 1))?,
        },
        _ => NttSpec::Implicit {
            relation: kind.expression(&reserved_names(k + 2))?,
            hstar_hint: hstar.clone(),
        },
    };
    let factor = factor
        .map(|entry| -> Result<StructureFactor, FileError> {
            Ok(match entry.key[0].as_str() {
                "eta0" => StructureFactor::Eta0(entry.expression(vars)?),
                "casimir_factor" => StructureFactor::Casimir(entry.expression(vars)?),
                _ => {
                    let c: Rational = entry
                        .expression(vars)?
                        .as_const()
                        .ok_or_else(|| at(entry.line, "c must be a constant"))?;
                    StructureFactor::Constant(c)
                }
            })
        })
        .transpose()?;
    let min_eta = match min_eta {
        Some(entry) => {
            let v: f64 = entry.number("min_eta")?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(at(entry.line, "min_eta must be a non-negative number"));
            }
            Some(v)
        }
        None => None,
    };
    Ok(Some(NttSection {
        spec,
        hstar,
        factor,
        min_eta,
    }))
}
