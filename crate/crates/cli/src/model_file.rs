//! Strict line-oriented model files.
//!
//! ```text
//! spectral: SP            # SP | SN | TWO_SIDED
//! states: 2
//! generator:
//!   row: -1 1
//!   row: 1 -1
//! state 1:
//!   drift: 1
//! state 2:
//!   drift: -4
//!   brownian_var: 0.5
//!   jump_rate: 2
//!   jump_dist: exp 1.0    # exp MEAN | det SIZE | unif LO HI
//! jump 1 2: det 0.3       # transition jump U_12
//! buffer: inf             # or a positive K
//! ```
//!
//! Indentation is cosmetic; `#` starts a comment. Unknown keys, repeated
//! keys and entries outside their section are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use queuecorr::model::validate_model;
use queuecorr::{Error, GeneratorMatrix, JumpDist, LevyComponent, MapModel, SpectralFlag};

use crate::CliError;

/// A syntax or structure problem, with the 1-based line when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub file: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ParseError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            file: None,
            line: Some(line),
            message: message.into(),
        }
    }

    fn whole(message: impl Into<String>) -> Self {
        ParseError {
            file: None,
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}: ")?;
        }
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ParseError {}

/// A parsed model plus the optional finite buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: MapModel,
    pub buffer: Option<f64>,
}

#[derive(Debug, Default)]
struct StateDraft {
    line: usize,
    drift: Option<f64>,
    brownian_var: Option<f64>,
    jump_rate: Option<f64>,
    jump_dist: Option<JumpDist>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Top,
    Generator,
    State(usize),
}

fn number(line: usize, what: &str, s: &str) -> Result<f64, ParseError> {
    s.parse::<f64>()
        .map_err(|_| ParseError::at(line, format!("{what}: expected a number, got `{s}`")))
}

fn index(line: usize, what: &str, s: &str) -> Result<usize, ParseError> {
    match s.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i),
        _ => Err(ParseError::at(line, format!("{what}: expected a state number >= 1, got `{s}`"))),
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, line: usize, key: &str) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(ParseError::at(line, format!("`{key}` given twice")));
    }
    *slot = Some(value);
    Ok(())
}

/// Parses `exp MEAN`, `det SIZE` or `unif LO HI`.
pub fn parse_jump_dist(line: usize, s: &str) -> Result<JumpDist, ParseError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    match parts.as_slice() {
        ["exp", m] => Ok(JumpDist::Exponential {
            mean: number(line, "exp mean", m)?,
        }),
        ["det", v] => Ok(JumpDist::Deterministic {
            size: number(line, "det size", v)?,
        }),
        ["unif", lo, hi] => Ok(JumpDist::Uniform {
            lo: number(line, "unif lower bound", lo)?,
            hi: number(line, "unif upper bound", hi)?,
        }),
        _ => Err(ParseError::at(
            line,
            format!("jump distribution must be `exp MEAN`, `det SIZE` or `unif LO HI`, got `{s}`"),
        )),
    }
}

fn parse_spectral(line: usize, s: &str) -> Result<SpectralFlag, ParseError> {
    match s {
        "SP" => Ok(SpectralFlag::Positive),
        "SN" => Ok(SpectralFlag::Negative),
        "TWO_SIDED" => Ok(SpectralFlag::TwoSided),
        _ => Err(ParseError::at(line, format!("spectral must be SP, SN or TWO_SIDED, got `{s}`"))),
    }
}

fn parse_buffer(line: usize, s: &str) -> Result<Option<f64>, ParseError> {
    if s == "inf" {
        return Ok(None);
    }
    let k = number(line, "buffer", s)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(ParseError::at(line, format!("buffer must be `inf` or a positive number, got `{s}`")));
    }
    Ok(Some(k))
}

/// Parses a model from text and validates it.
pub fn parse_model_str(text: &str) -> Result<ModelFile, CliError> {
    let model = parse_structure(text)?;
    check_model(&model.model)?;
    Ok(model)
}

/// Reads and parses a model file.
pub fn parse_model_file(path: &Path) -> Result<ModelFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model_str(&text).map_err(|e| match e {
        CliError::Parse(mut p) => {
            p.file = Some(path.display().to_string());
            CliError::Parse(p)
        }
        other => other,
    })
}

fn parse_structure(text: &str) -> Result<ModelFile, ParseError> {
    let mut spectral = None;
    let mut states: Option<(usize, usize)> = None;
    let mut generator_line = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut drafts: BTreeMap<usize, StateDraft> = BTreeMap::new();
    let mut jumps: Vec<(usize, usize, usize, JumpDist)> = Vec::new();
    let mut buffer = None;
    let mut section = Section::Top;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once(':')
            .map(|(a, b)| (a.trim(), b.trim()))
            .ok_or_else(|| ParseError::at(line, format!("expected `key: value`, got `{content}`")))?;
        let words: Vec<&str> = key.split_whitespace().collect();
        match words.as_slice() {
            ["spectral"] => {
                section = Section::Top;
                set_once(&mut spectral, parse_spectral(line, value)?, line, "spectral")?;
            }
            ["states"] => {
                section = Section::Top;
                set_once(&mut states, (index(line, "states", value)?, line), line, "states")?;
            }
            ["buffer"] => {
                section = Section::Top;
                set_once(&mut buffer, parse_buffer(line, value)?, line, "buffer")?;
            }
            ["generator"] => {
                if !value.is_empty() {
                    return Err(ParseError::at(line, "`generator:` takes no value; give `row:` lines below it"));
                }
                set_once(&mut generator_line, line, line, "generator")?;
                section = Section::Generator;
            }
            ["row"] => {
                if section != Section::Generator {
                    return Err(ParseError::at(line, "`row` outside the `generator` section"));
                }
                let row = value
                    .split_whitespace()
                    .map(|v| number(line, "generator row", v))
                    .collect::<Result<Vec<f64>, _>>()?;
                rows.push((line, row));
            }
            ["state", n] => {
                if !value.is_empty() {
                    return Err(ParseError::at(line, format!("`state {n}:` takes no value")));
                }
                let i = index(line, "state header", n)?;
                if drafts.contains_key(&i) {
                    return Err(ParseError::at(line, format!("`state {i}` given twice")));
                }
                drafts.insert(
                    i,
                    StateDraft {
                        line,
                        ..StateDraft::default()
                    },
                );
                section = Section::State(i);
            }
            ["jump", i, j] => {
                section = Section::Top;
                let (i, j) = (index(line, "jump source", i)?, index(line, "jump target", j)?);
                if i == j {
                    return Err(ParseError::at(line, "transition jumps need two different states"));
                }
                if jumps.iter().any(|&(a, b, _, _)| a == i && b == j) {
                    return Err(ParseError::at(line, format!("`jump {i} {j}` given twice")));
                }
                jumps.push((i, j, line, parse_jump_dist(line, value)?));
            }
            [field @ ("drift" | "brownian_var" | "jump_rate" | "jump_dist")] => {
                let Section::State(i) = section else {
                    return Err(ParseError::at(line, format!("`{field}` outside a `state N` section")));
                };
                let d = drafts.get_mut(&i).expect("section refers to an inserted state");
                match *field {
                    "drift" => set_once(&mut d.drift, number(line, "drift", value)?, line, "drift")?,
                    "brownian_var" => set_once(
                        &mut d.brownian_var,
                        number(line, "brownian_var", value)?,
                        line,
                        "brownian_var",
                    )?,
                    "jump_rate" => set_once(&mut d.jump_rate, number(line, "jump_rate", value)?, line, "jump_rate")?,
                    _ => set_once(&mut d.jump_dist, parse_jump_dist(line, value)?, line, "jump_dist")?,
                }
            }
            _ => return Err(ParseError::at(line, format!("unknown key `{key}`"))),
        }
    }

    let spectral = spectral.ok_or_else(|| ParseError::whole("missing `spectral` entry"))?;
    let (d, states_line) = states.ok_or_else(|| ParseError::whole("missing `states` entry"))?;
    let generator_line = generator_line.ok_or_else(|| ParseError::whole("missing `generator` section"))?;
    if rows.len() != d {
        return Err(ParseError::at(
            generator_line,
            format!("generator has {} rows but `states` (line {states_line}) is {d}", rows.len()),
        ));
    }
    for (line, row) in &rows {
        if row.len() != d {
            return Err(ParseError::at(*line, format!("row has {} entries, expected {d}", row.len())));
        }
    }
    if let Some((&i, draft)) = drafts.iter().find(|(&i, _)| i > d) {
        return Err(ParseError::at(draft.line, format!("state {i} exceeds `states: {d}`")));
    }
    if let Some(&(i, j, line, _)) = jumps.iter().find(|&&(i, j, _, _)| i > d || j > d) {
        return Err(ParseError::at(line, format!("jump {i} {j} refers to a state beyond `states: {d}`")));
    }

    let mut comps = Vec::with_capacity(d);
    for i in 1..=d {
        let draft = drafts
            .get(&i)
            .ok_or_else(|| ParseError::whole(format!("missing `state {i}` section")))?;
        let drift = draft
            .drift
            .ok_or_else(|| ParseError::at(draft.line, format!("state {i}: missing `drift`")))?;
        let jump_rate = draft.jump_rate.unwrap_or(0.0);
        if jump_rate != 0.0 && draft.jump_dist.is_none() {
            return Err(ParseError::at(draft.line, format!("state {i}: `jump_rate` needs a `jump_dist`")));
        }
        comps.push(LevyComponent {
            drift,
            brownian_var: draft.brownian_var.unwrap_or(0.0),
            jump_rate,
            jump_dist: draft.jump_dist.unwrap_or_default(),
        });
    }

    let rows: Vec<Vec<f64>> = rows.into_iter().map(|(_, r)| r).collect();
    let generator = GeneratorMatrix::from_rows(&rows).map_err(|e| ParseError::at(generator_line, e.to_string()))?;
    let mut model = MapModel::new(generator, comps, spectral);
    for (i, j, _, dist) in jumps {
        model = model.with_transition_jump(i - 1, j - 1, dist);
    }
    Ok(ModelFile {
        model,
        buffer: buffer.flatten(),
    })
}

/// Model invariants, plus the nonzero-drift requirement of fluid models.
pub fn check_model(model: &MapModel) -> Result<(), Error> {
    validate_model(model).into_result()?;
    if model.is_piecewise_linear() && !model.has_transition_jumps() {
        if let Some(i) = model.components.iter().position(|c| c.drift == 0.0) {
            return Err(Error::InvalidModel(format!(
                "state {} has zero drift; fluid models assume every drift μ_i is nonzero",
                i + 1
            )));
        }
    }
    Ok(())
}

impl fmt::Display for ModelFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.model;
        let d = m.dim();
        writeln!(f, "spectral: {}", m.spectral)?;
        writeln!(f, "states: {d}")?;
        writeln!(f, "generator:")?;
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| m.generator.rate(i, j).to_string()).collect();
            writeln!(f, "  row: {}", row.join(" "))?;
        }
        for (i, c) in m.components.iter().enumerate() {
            writeln!(f, "state {}:", i + 1)?;
            writeln!(f, "  drift: {}", c.drift)?;
            if c.brownian_var != 0.0 {
                writeln!(f, "  brownian_var: {}", c.brownian_var)?;
            }
            if c.jump_rate != 0.0 || !c.jump_dist.is_zero() {
                writeln!(f, "  jump_rate: {}", c.jump_rate)?;
                writeln!(f, "  jump_dist: {}", c.jump_dist)?;
            }
        }
        for i in 0..d {
            for j in 0..d {
                let u = m.transition_jumps[i][j];
                if i != j && !u.is_zero() {
                    writeln!(f, "jump {} {}: {u}", i + 1, j + 1)?;
                }
            }
        }
        match self.buffer {
            Some(k) => writeln!(f, "buffer: {k}"),
            None => writeln!(f, "buffer: inf"),
        }
    }
}
