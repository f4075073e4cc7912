//! Datasets shipped with the crate. Setting `CONFCURVE_FIXTURES` to a
//! directory makes the loaders read same-named files from there instead.

use std::path::PathBuf;

use crate::conditional::{read_studies_csv, PairedCountStudy};
use crate::error::{Error, Result};
use crate::random_effects::GroupSeries;

pub const FIXTURE_DIR_VAR: &str = "CONFCURVE_FIXTURES";

const LIDOCAINE: &str = include_str!("../fixtures/lidocaine.csv");
const ANIMALS: &str = include_str!("../fixtures/animals.csv");
const DEMOGRAPHY: &str = include_str!("../fixtures/demography.csv");

/// Contents of a named fixture file, honouring the override directory.
pub fn fixture_text(name: &str) -> Result<String> {
    if let Some(dir) = std::env::var_os(FIXTURE_DIR_VAR) {
        let path = PathBuf::from(dir).join(name);
        if path.exists() {
            return std::fs::read_to_string(&path)
                .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())));
        }
    }
    match name {
        "lidocaine.csv" => Ok(LIDOCAINE.to_string()),
        "animals.csv" => Ok(ANIMALS.to_string()),
        "demography.csv" => Ok(DEMOGRAPHY.to_string()),
        _ => Err(Error::Data(format!("unknown fixture '{name}'"))),
    }
}

/// Six two-arm lidocaine trials (treatment m1, y1; control m0, y0).
pub fn lidocaine() -> Result<Vec<PairedCountStudy>> {
    read_studies_csv(&fixture_text("lidocaine.csv")?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Animal {
    pub species: String,
    pub body_kg: f64,
    pub brain_g: f64,
}

/// Body and brain weights for 28 species.
pub fn animals() -> Result<Vec<Animal>> {
    let text = fixture_text("animals.csv")?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty animals table".into()))?;
    if header.trim() != "species,body_kg,brain_g" {
        return Err(Error::Parse(format!("unexpected animals header '{header}'")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("animals row {}: expected 3 fields", i + 1)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0)
                    .ok_or_else(|| Error::Data(format!("animals row {}: bad weight '{s}'", i + 1)))
            };
            Ok(Animal {
                species: f[0].to_string(),
                body_kg: num(f[1])?,
                brain_g: num(f[2])?,
            })
        })
        .collect()
}

/// (log body, log brain) pairs.
pub fn animals_loglog() -> Result<Vec<[f64; 2]>> {
    Ok(animals()?
        .iter()
        .map(|a| [a.body_kg.ln(), a.brain_g.ln()])
        .collect())
}

/// Parses a `country,sex,year,life_expectancy` table (lines starting with
/// `#` are comments) into per-country series for one sex.
pub fn parse_demography(text: &str, sex: &str) -> Result<Vec<GroupSeries>> {
    let mut rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header) = rows.next().ok_or_else(|| Error::Parse("empty demography table".into()))?;
    if header.trim() != "country,sex,year,life_expectancy" {
        return Err(Error::Parse(format!("unexpected demography header '{header}'")));
    }
    let mut out: Vec<GroupSeries> = Vec::new();
    for (i, line) in rows {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("demography line {}: expected 4 fields", i + 1)));
        }
        if f[1] != sex {
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("demography line {}: bad number '{s}'", i + 1)))
        };
        let (x, y) = (num(f[2])?, num(f[3])?);
        match out.iter_mut().find(|s| s.group == f[0]) {
            Some(s) => {
                s.x.push(x);
                s.y.push(y);
            }
            None => out.push(GroupSeries {
                group: f[0].to_string(),
                x: vec![x],
                y: vec![y],
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!("no demography rows for sex '{sex}'")));
    }
    Ok(out)
}

/// Life expectancy series for `sex` ("female" or "male"), one per country.
pub fn demography(sex: &str) -> Result<Vec<GroupSeries>> {
    parse_demography(&fixture_text("demography.csv")?, sex)
}
